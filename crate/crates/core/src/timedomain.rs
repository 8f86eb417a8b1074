//! Fixed-step RK4 integration of the equations of motion in real time.
//!
//! This is an oracle for [`crate::linsys`]: it never forms the steady-state
//! system. Tones are applied as `α_in e^{-iδt}` from zero initial conditions
//! and the long-time response is demodulated back to co-rotating envelopes.
//! The parametric term `λ b*` is integrated as written, so the idler sideband
//! at `e^{+iδt}` appears on its own and is separated by a two-tone fit.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linsys::stability;
use crate::model::{Extension, SchemeConfig};

/// State norm above which a trajectory is declared divergent.
pub const DIVERGENCE_NORM: f64 = 1e12;
/// Relative envelope drift over the final window below which a run counts as converged.
pub const CONVERGENCE_TOL: f64 = 1e-8;
/// Fraction of the horizon used for the convergence check and demodulation.
pub const FINAL_WINDOW: f64 = 0.05;
const MAX_WINDOW_SAMPLES: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegrationSpec {
    pub step: f64,
    pub horizon: f64,
    /// Keep every `record_stride`-th state in the trajectory.
    pub record_stride: usize,
}

impl IntegrationSpec {
    pub fn new(step: f64, horizon: f64, record_stride: usize) -> Result<Self> {
        let spec = IntegrationSpec {
            step,
            horizon,
            record_stride,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.step > 0.0 && self.step.is_finite()) {
            return Err(Error::InvalidIntegration(format!(
                "step must be > 0, got {}",
                self.step
            )));
        }
        if !(self.horizon.is_finite() && self.horizon >= 10.0 * self.step) {
            return Err(Error::InvalidIntegration(format!(
                "horizon must be ≥ 10 steps, got horizon {} with step {}",
                self.horizon, self.step
            )));
        }
        if self.record_stride == 0 {
            return Err(Error::InvalidIntegration(
                "record_stride must be ≥ 1".to_string(),
            ));
        }
        Ok(())
    }

    /// Step `0.01 / max_rate` and horizon `20 / slowest_rate`.
    ///
    /// Off-resonant parametric runs get a longer horizon when needed so the
    /// final window spans a full signal/idler beat period `π/|δ|`.
    pub fn for_config(config: &SchemeConfig) -> Result<Self> {
        config.validate()?;
        let verdict = stability(config);
        if !verdict.stable {
            return Err(Error::InvalidIntegration(
                "config is unstable; a default horizon needs a positive decay rate".to_string(),
            ));
        }
        let step = 0.01 / config.max_rate();
        let mut horizon = 20.0 / verdict.slowest_rate;
        let delta = config.signal.delta;
        if matches!(config.extension, Extension::Parametric { .. }) && delta != 0.0 {
            horizon = horizon.max(std::f64::consts::PI / (FINAL_WINDOW * delta.abs()));
        }
        let steps = (horizon / step).ceil() as usize;
        IntegrationSpec::new(step, horizon.max(10.0 * step), (steps / 1000).max(1))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub labels: Vec<String>,
    pub times: Vec<f64>,
    pub states: Vec<Vec<Complex64>>,
    pub converged: bool,
    /// Signal-sideband envelope `x(t) e^{+iδt}` at the end of the run. On
    /// resonance in the parametric scheme this is the total field.
    pub final_envelope: Vec<Complex64>,
    /// Idler-sideband envelope (the `e^{+iδt}` component), parametric runs
    /// with δ ≠ 0 only.
    pub idler_envelope: Option<Vec<Complex64>>,
    pub delta: f64,
}

/// Right-hand side of the equations of motion for one config.
struct Dynamics {
    damping: Vec<f64>,
    /// `(cavity index, g)` pairs coupled to the mechanical mode at index 2.
    couplings: Vec<(usize, f64)>,
    /// `(cavity index, √kappa_ext α_in)`.
    drives: Vec<(usize, Complex64)>,
    lambda: Complex64,
    delta: f64,
}

const MECH: usize = 2;

impl Dynamics {
    fn new(config: &SchemeConfig) -> Self {
        let mut damping = vec![
            0.5 * config.mode1.kappa,
            0.5 * config.mode2.kappa,
            0.5 * config.mech.gamma_m,
        ];
        let mut couplings = vec![(0, config.g1.g), (1, config.g2.g)];
        let mut drives = vec![(0, config.mode1.kappa_ext.sqrt() * config.signal.amplitude)];
        if let Some(aux) = config.auxiliary() {
            damping.push(0.5 * aux.mode3.kappa);
            couplings.push((3, aux.g3.g));
            drives.push((3, aux.mode3.kappa_ext.sqrt() * aux.aux_drive.amplitude));
        }
        Dynamics {
            damping,
            couplings,
            drives,
            lambda: config.lambda(),
            delta: config.signal.delta,
        }
    }

    fn dim(&self) -> usize {
        self.damping.len()
    }

    fn rhs(&self, t: f64, x: &[Complex64], out: &mut [Complex64]) {
        let minus_i = Complex64::new(0.0, -1.0);
        for (k, (o, xi)) in out.iter_mut().zip(x).enumerate() {
            *o = -self.damping[k] * xi;
        }
        for &(k, g) in &self.couplings {
            out[k] += minus_i * g * x[MECH];
            out[MECH] += minus_i * g * x[k];
        }
        out[MECH] += self.lambda * x[MECH].conj();
        let phase = Complex64::from_polar(1.0, -self.delta * t);
        for &(k, d) in &self.drives {
            out[k] += d * phase;
        }
    }
}

fn norm(x: &[Complex64]) -> f64 {
    x.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Integrate from zero initial conditions.
pub fn integrate(config: &SchemeConfig, spec: &IntegrationSpec) -> Result<Trajectory> {
    let n = Dynamics::new(config).dim();
    integrate_from(config, spec, &vec![Complex64::new(0.0, 0.0); n])
}

/// Integrate from arbitrary initial amplitudes `(a1, a2, b[, a3])`.
pub fn integrate_from(
    config: &SchemeConfig,
    spec: &IntegrationSpec,
    initial: &[Complex64],
) -> Result<Trajectory> {
    config.validate()?;
    spec.validate()?;
    let dynamics = Dynamics::new(config);
    let n = dynamics.dim();
    if initial.len() != n {
        return Err(Error::InvalidIntegration(format!(
            "expected {n} initial amplitudes, got {}",
            initial.len()
        )));
    }
    let labels: Vec<String> = ["a1", "a2", "b", "a3"][..n]
        .iter()
        .map(|s| s.to_string())
        .collect();

    let steps = (spec.horizon / spec.step).ceil() as usize;
    let h = spec.horizon / steps as f64;
    let window_start = ((1.0 - FINAL_WINDOW) * steps as f64).floor() as usize;
    let window_stride = ((steps - window_start) / MAX_WINDOW_SAMPLES).max(1);

    let mut x = initial.to_vec();
    let (mut k1, mut k2, mut k3, mut k4) = (x.clone(), x.clone(), x.clone(), x.clone());
    let mut tmp = x.clone();
    let mut times = vec![0.0];
    let mut states = vec![x.clone()];
    let mut window: Vec<(f64, Vec<Complex64>)> = Vec::new();

    for i in 1..=steps {
        let t = (i - 1) as f64 * h;
        dynamics.rhs(t, &x, &mut k1);
        for j in 0..n {
            tmp[j] = x[j] + 0.5 * h * k1[j];
        }
        dynamics.rhs(t + 0.5 * h, &tmp, &mut k2);
        for j in 0..n {
            tmp[j] = x[j] + 0.5 * h * k2[j];
        }
        dynamics.rhs(t + 0.5 * h, &tmp, &mut k3);
        for j in 0..n {
            tmp[j] = x[j] + h * k3[j];
        }
        dynamics.rhs(t + h, &tmp, &mut k4);
        for j in 0..n {
            x[j] += h / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]);
        }

        let t_new = i as f64 * h;
        let size = norm(&x);
        if size.is_nan() || size > DIVERGENCE_NORM {
            return Err(Error::Diverged {
                time: t_new,
                norm: size,
            });
        }
        if i % spec.record_stride == 0 || i == steps {
            times.push(t_new);
            states.push(x.clone());
        }
        if i >= window_start && ((i - window_start).is_multiple_of(window_stride) || i == steps) {
            window.push((t_new, x.clone()));
        }
    }

    let demod = demodulate(&window, dynamics.delta, dynamics.lambda.norm() > 0.0);
    Ok(Trajectory {
        labels,
        times,
        states,
        converged: demod.converged,
        final_envelope: demod.signal,
        idler_envelope: demod.idler,
        delta: dynamics.delta,
    })
}

struct Demodulated {
    signal: Vec<Complex64>,
    idler: Option<Vec<Complex64>>,
    converged: bool,
}

/// Split the final window into `a e^{-iδt} + b e^{+iδt}` by least squares
/// (two-tone only when the idler can be present and is resolvable).
fn demodulate(window: &[(f64, Vec<Complex64>)], delta: f64, two_tone: bool) -> Demodulated {
    let (t_end, x_end) = window.last().expect("window holds the final step");
    let n = x_end.len();
    let count = window.len() as f64;
    let cross: Complex64 = window
        .iter()
        .map(|(t, _)| Complex64::from_polar(1.0, 2.0 * delta * t))
        .sum();
    let resolvable = two_tone && delta != 0.0 && cross.norm() < 0.9 * count;

    if !resolvable {
        let envelope = |t: f64, x: &[Complex64]| -> Vec<Complex64> {
            let rot = Complex64::from_polar(1.0, delta * t);
            x.iter().map(|z| z * rot).collect()
        };
        let signal = envelope(*t_end, x_end);
        let scale = norm(&signal);
        let drift = window
            .iter()
            .map(|(t, x)| {
                let e = envelope(*t, x);
                norm(
                    &e.iter()
                        .zip(&signal)
                        .map(|(a, b)| a - b)
                        .collect::<Vec<_>>(),
                )
            })
            .fold(0.0, f64::max);
        return Demodulated {
            signal,
            idler: None,
            converged: drift <= CONVERGENCE_TOL * scale,
        };
    }

    // Normal equations for the basis (e^{-iδt}, e^{+iδt}).
    let det = count * count - cross.norm_sqr();
    let mut signal = vec![Complex64::new(0.0, 0.0); n];
    let mut idler = vec![Complex64::new(0.0, 0.0); n];
    for j in 0..n {
        let mut p = Complex64::new(0.0, 0.0);
        let mut q = Complex64::new(0.0, 0.0);
        for (t, x) in window {
            p += x[j] * Complex64::from_polar(1.0, delta * t);
            q += x[j] * Complex64::from_polar(1.0, -delta * t);
        }
        signal[j] = (count * p - cross * q) / det;
        idler[j] = (count * q - cross.conj() * p) / det;
    }
    let scale = norm(&signal) + norm(&idler);
    let misfit = window
        .iter()
        .map(|(t, x)| {
            let lo = Complex64::from_polar(1.0, -delta * t);
            let hi = lo.conj();
            let r: Vec<Complex64> = (0..n)
                .map(|j| x[j] - signal[j] * lo - idler[j] * hi)
                .collect();
            norm(&r)
        })
        .fold(0.0, f64::max);
    Demodulated {
        signal,
        idler: Some(idler),
        converged: misfit <= CONVERGENCE_TOL * scale,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linsys::solve_config;
    use crate::model::{Coupling, DriveTone, MechanicalOscillator, OpticalMode};
    use approx::assert_relative_eq;

    fn re(x: f64) -> Complex64 {
        Complex64::new(x, 0.0)
    }

    fn baseline(g1: f64, g2: f64, delta: f64) -> SchemeConfig {
        SchemeConfig::baseline(
            OpticalMode::new("a1", 2.0, 1.5).unwrap(),
            OpticalMode::new("a2", 1.0, 1.0).unwrap(),
            MechanicalOscillator { gamma_m: 0.5 },
            Coupling::new(g1),
            Coupling::new(g2),
            DriveTone::new(Complex64::new(0.8, 0.3), delta),
        )
    }

    fn rel(a: &[Complex64], b: &[Complex64]) -> f64 {
        let d: Vec<Complex64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
        norm(&d) / norm(b)
    }

    #[test]
    fn spec_validation() {
        assert!(IntegrationSpec::new(0.0, 1.0, 1).is_err());
        assert!(IntegrationSpec::new(0.1, 0.5, 1).is_err());
        assert!(IntegrationSpec::new(0.1, 1.0, 0).is_err());
        assert!(IntegrationSpec::new(0.1, 1.0, 1).is_ok());
    }

    #[test]
    fn free_cavity_decay() {
        let mut cfg = baseline(0.0, 0.0, 0.0);
        cfg.signal.amplitude = re(0.0);
        let kappa = cfg.mode1.kappa;
        let spec = IntegrationSpec::new(0.01 / kappa, 1.0 / kappa, 1).unwrap();
        let a0 = Complex64::new(0.6, -0.8);
        let traj = integrate_from(&cfg, &spec, &[a0, re(0.0), re(0.0)]).unwrap();
        let last = traj.states.last().unwrap();
        assert_relative_eq!(
            *traj.times.last().unwrap(),
            1.0 / kappa,
            max_relative = 1e-14
        );
        assert!((last[0].norm() - (-0.5f64).exp()).abs() < 1e-8);
    }

    #[test]
    fn driven_baseline_converges_to_steady_state() {
        for delta in [0.0, 0.3] {
            let cfg = baseline(0.7, 0.4, delta);
            let spec = IntegrationSpec::for_config(&cfg).unwrap();
            let traj = integrate(&cfg, &spec).unwrap();
            assert!(traj.converged);
            let steady = solve_config(&cfg, delta).unwrap();
            let reference: Vec<Complex64> = steady.amplitudes.iter().copied().collect();
            assert!(rel(&traj.final_envelope, &reference) < 1e-6);
        }
    }

    #[test]
    fn parametric_sidebands_are_separated() {
        let delta = 0.4;
        let cfg = baseline(0.7, 0.4, delta).with_parametric(Complex64::from_polar(0.3, 0.5));
        let spec = IntegrationSpec::for_config(&cfg).unwrap();
        let traj = integrate(&cfg, &spec).unwrap();
        assert!(traj.converged);
        let steady = solve_config(&cfg, delta).unwrap();
        let lower: Vec<Complex64> = steady.amplitudes.iter().take(3).copied().collect();
        let upper: Vec<Complex64> = steady
            .idler_conj()
            .unwrap()
            .iter()
            .map(|z| z.conj())
            .collect();
        assert!(rel(&traj.final_envelope, &lower) < 1e-6);
        assert!(rel(traj.idler_envelope.as_ref().unwrap(), &upper) < 1e-6);
    }

    #[test]
    fn parametric_on_resonance_reports_total_field() {
        let cfg = baseline(0.7, 0.4, 0.0).with_parametric(re(0.3));
        let traj = integrate(&cfg, &IntegrationSpec::for_config(&cfg).unwrap()).unwrap();
        let steady = solve_config(&cfg, 0.0).unwrap();
        let idler = steady.idler_conj().unwrap();
        let total: Vec<Complex64> = (0..3)
            .map(|j| steady.amplitudes[j] + idler[j].conj())
            .collect();
        assert!(traj.idler_envelope.is_none());
        assert!(rel(&traj.final_envelope, &total) < 1e-6);
    }

    #[test]
    fn above_threshold_diverges() {
        // Static threshold gamma_m (1 + C1 + C2)/2 = 1.5 here.
        let cfg = SchemeConfig::baseline(
            OpticalMode::new("a1", 20.0, 20.0).unwrap(),
            OpticalMode::new("a2", 20.0, 20.0).unwrap(),
            MechanicalOscillator { gamma_m: 1.0 },
            Coupling::from_cooperativity(1.0, 1.0, 20.0),
            Coupling::from_cooperativity(1.0, 1.0, 20.0),
            // A real drive with real λ never excites the amplified quadrature.
            DriveTone::new(Complex64::new(1.0, 0.5), 0.0),
        )
        .with_parametric(re(1.8));
        assert!(!stability(&cfg).stable);
        assert!(IntegrationSpec::for_config(&cfg).is_err());
        let spec = IntegrationSpec::new(5e-4, 1e3, 1000).unwrap();
        match integrate(&cfg, &spec) {
            Err(Error::Diverged { time, norm }) => {
                assert!(time > 0.0 && time < 1e3 && norm > DIVERGENCE_NORM)
            }
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn passive_undriven_norm_decays_monotonically() {
        let mut cfg = baseline(0.7, 0.4, 0.0).with_weak_drive(
            OpticalMode::new("a3", 0.5, 0.5).unwrap(),
            Coupling::new(0.6),
            re(0.0),
        );
        cfg.signal.amplitude = re(0.0);
        let spec = IntegrationSpec::new(0.002, 20.0, 10).unwrap();
        let start = [re(1.0), Complex64::new(0.0, 0.5), re(-0.2), re(0.3)];
        let traj = integrate_from(&cfg, &spec, &start).unwrap();
        let half = traj.states.len() / 2;
        let norms: Vec<f64> = traj.states[half..].iter().map(|x| norm(x)).collect();
        assert!(norms.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn rk4_is_fourth_order() {
        let cfg = baseline(0.7, 0.4, 0.3);
        let steady = solve_config(&cfg, 0.3).unwrap();
        let reference: Vec<Complex64> = steady.amplitudes.iter().copied().collect();
        let horizon = 40.0 / stability(&cfg).slowest_rate;
        let err = |h: f64| {
            let spec = IntegrationSpec::new(h, horizon, 1_000_000).unwrap();
            rel(&integrate(&cfg, &spec).unwrap().final_envelope, &reference)
        };
        let coarse = 0.5 / cfg.max_rate();
        let order = (err(coarse) / err(coarse / 10.0)).log10();
        assert!(order > 3.8, "measured order {order}");
    }

    #[test]
    fn wrong_initial_length_rejected() {
        let cfg = baseline(0.7, 0.4, 0.0);
        let spec = IntegrationSpec::new(0.01, 1.0, 1).unwrap();
        assert!(integrate_from(&cfg, &spec, &[re(0.0); 2]).is_err());
    }
}
