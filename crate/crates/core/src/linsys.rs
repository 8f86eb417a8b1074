//! Frequency-domain steady states from the coupled-mode equations.
//!
//! Each scheme is written as a dense complex system `M x = d` at one detuning:
//!
//! - baseline: `(a1, a2, b)`
//! - weak drive: `(a1, a2, b, a3)`
//! - parametric: `(a1-, a2-, b-, a1+*, a2+*, b+*)`, where the `λ b*` term
//!   mixes the driven sideband at `e^{-iδt}` with the conjugate of the idler
//!   sideband at `e^{+iδt}`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::closedform::{cavity_denominator, BrightDarkAmplitudes};
use crate::error::{Error, Result};
use crate::model::{Extension, SchemeConfig, SchemeKind};

/// Largest 1-norm condition number accepted by [`solve`].
pub const MAX_CONDITION: f64 = 1e12;

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

#[derive(Debug, Clone, PartialEq)]
pub struct LinearSystem {
    pub dimension: usize,
    pub matrix: DMatrix<Complex64>,
    pub drive: DVector<Complex64>,
    pub variable_labels: Vec<String>,
    pub delta: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SteadyState {
    pub amplitudes: DVector<Complex64>,
    pub variable_labels: Vec<String>,
    pub delta: f64,
    /// `‖M x - d‖∞ / (‖M‖∞ ‖x‖∞ + ‖d‖∞)`.
    pub residual: f64,
    /// 1-norm condition number of `M`.
    pub condition: f64,
}

impl SteadyState {
    pub fn alpha1(&self) -> Complex64 {
        self.amplitudes[0]
    }

    pub fn alpha2(&self) -> Complex64 {
        self.amplitudes[1]
    }

    pub fn beta(&self) -> Complex64 {
        self.amplitudes[2]
    }

    pub fn alpha3(&self) -> Option<Complex64> {
        (self.variable_labels.len() == 4).then(|| self.amplitudes[3])
    }

    /// Conjugated idler-sideband amplitudes `(a1+*, a2+*, b+*)` of the
    /// parametric system.
    pub fn idler_conj(&self) -> Option<[Complex64; 3]> {
        (self.variable_labels.len() == 6)
            .then(|| [self.amplitudes[3], self.amplitudes[4], self.amplitudes[5]])
    }

    pub fn norm(&self) -> f64 {
        self.amplitudes
            .iter()
            .map(|z| z.norm_sqr())
            .sum::<f64>()
            .sqrt()
    }
}

pub fn variable_labels(kind: SchemeKind) -> Vec<String> {
    let names: &[&str] = match kind {
        SchemeKind::Baseline => &["a1", "a2", "b"],
        SchemeKind::WeakDrive => &["a1", "a2", "b", "a3"],
        SchemeKind::Parametric => &[
            "a1",
            "a2",
            "b",
            "a1_idler_conj",
            "a2_idler_conj",
            "b_idler_conj",
        ],
    };
    names.iter().map(|s| s.to_string()).collect()
}

pub fn build_system(config: &SchemeConfig, delta: f64) -> Result<LinearSystem> {
    config.validate()?;
    let kind = config.kind();
    let n = match kind {
        SchemeKind::Baseline => 3,
        SchemeKind::WeakDrive => 4,
        SchemeKind::Parametric => 6,
    };
    let mut m = DMatrix::<Complex64>::zeros(n, n);
    let mut d = DVector::<Complex64>::zeros(n);
    let (g1, g2) = (config.g1.g, config.g2.g);
    let mech = Complex64::new(0.5 * config.mech.gamma_m, -delta);

    m[(0, 0)] = cavity_denominator(&config.mode1, delta);
    m[(0, 2)] = I * g1;
    m[(1, 1)] = cavity_denominator(&config.mode2, delta);
    m[(1, 2)] = I * g2;
    m[(2, 0)] = I * g1;
    m[(2, 1)] = I * g2;
    m[(2, 2)] = mech;
    d[0] = config.mode1.kappa_ext.sqrt() * config.signal.amplitude;

    match &config.extension {
        Extension::Baseline => {}
        Extension::WeakDrive(aux) => {
            let g3 = aux.g3.g;
            m[(2, 3)] = I * g3;
            m[(3, 2)] = I * g3;
            m[(3, 3)] = cavity_denominator(&aux.mode3, delta);
            d[3] = aux.mode3.kappa_ext.sqrt() * aux.aux_drive.amplitude;
        }
        Extension::Parametric { lambda } => {
            m[(2, 5)] = -lambda;
            // Conjugated idler rows: (κ/2 - iδ) a+* - i g b+* = 0 and
            // (γ/2 - iδ) b+* - i Σ g a+* - λ* b- = 0.
            m[(3, 3)] = cavity_denominator(&config.mode1, delta);
            m[(3, 5)] = -I * g1;
            m[(4, 4)] = cavity_denominator(&config.mode2, delta);
            m[(4, 5)] = -I * g2;
            m[(5, 3)] = -I * g1;
            m[(5, 4)] = -I * g2;
            m[(5, 5)] = mech;
            m[(5, 2)] = -lambda.conj();
        }
    }
    Ok(LinearSystem {
        dimension: n,
        matrix: m,
        drive: d,
        variable_labels: variable_labels(kind),
        delta,
    })
}

fn norm_inf_matrix(m: &DMatrix<Complex64>) -> f64 {
    m.row_iter()
        .map(|row| row.iter().map(|z| z.norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

fn norm_one_matrix(m: &DMatrix<Complex64>) -> f64 {
    m.column_iter()
        .map(|col| col.iter().map(|z| z.norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

fn norm_inf_vector(v: &DVector<Complex64>) -> f64 {
    v.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Dense LU solve with partial pivoting, gated on the condition number.
pub fn solve(system: &LinearSystem) -> Result<SteadyState> {
    let lu = system.matrix.clone().lu();
    let singular = || {
        Error::Degenerate(format!(
            "singular {n}x{n} system over ({}) at δ = {}",
            system.variable_labels.join(", "),
            system.delta,
            n = system.dimension
        ))
    };
    let inverse = lu.try_inverse().ok_or_else(singular)?;
    let condition = norm_one_matrix(&system.matrix) * norm_one_matrix(&inverse);
    if !condition.is_finite() || condition > MAX_CONDITION {
        return Err(Error::Degenerate(format!(
            "ill-conditioned {n}x{n} system over ({}) at δ = {} (condition {condition:e} > {MAX_CONDITION:e})",
            system.variable_labels.join(", "),
            system.delta,
            n = system.dimension
        )));
    }
    let amplitudes = lu.solve(&system.drive).ok_or_else(singular)?;
    let r = &system.matrix * &amplitudes - &system.drive;
    let scale = norm_inf_matrix(&system.matrix) * norm_inf_vector(&amplitudes)
        + norm_inf_vector(&system.drive);
    let residual = if scale == 0.0 {
        0.0
    } else {
        norm_inf_vector(&r) / scale
    };
    Ok(SteadyState {
        amplitudes,
        variable_labels: system.variable_labels.clone(),
        delta: system.delta,
        residual,
        condition,
    })
}

/// Build and solve in one step, naming the scheme in any degeneracy error.
pub fn solve_config(config: &SchemeConfig, delta: f64) -> Result<SteadyState> {
    let system = build_system(config, delta)?;
    solve(&system).map_err(|e| match e {
        Error::Degenerate(msg) => Error::Degenerate(format!(
            "{} scheme (g1 = {}, g2 = {}, |λ| = {}): {msg}",
            config.kind(),
            config.g1.g,
            config.g2.g,
            config.lambda().norm()
        )),
        other => other,
    })
}

/// Project the (driven-sideband) target-cavity amplitudes onto the bright and
/// dark modes.
pub fn bright_dark_decompose(
    state: &SteadyState,
    config: &SchemeConfig,
) -> Result<BrightDarkAmplitudes> {
    let (g1, g2) = (config.g1.g, config.g2.g);
    let g = g1.hypot(g2);
    if g == 0.0 {
        return Err(Error::Undefined(
            "bright/dark decomposition needs g1² + g2² > 0".to_string(),
        ));
    }
    let (a1, a2) = (state.alpha1(), state.alpha2());
    Ok(BrightDarkAmplitudes {
        alpha_b: (g1 * a1 + g2 * a2) / g,
        alpha_d: (g2 * a1 - g1 * a2) / g,
        scheme: config.kind(),
    })
}

/// Baseline system rewritten over `(aB, aD, b)`.
///
/// The basis change is orthogonal and its own inverse, so the result is a
/// similarity transform of [`build_system`]. The optical block is formed with
/// the unnormalized rotation `[[g1, g2], [g2, -g1]]` and divided by `g²` once,
/// which keeps the dark/mechanical coupling exactly zero in floating point.
pub fn transform_to_bright_dark_basis(config: &SchemeConfig, delta: f64) -> Result<LinearSystem> {
    if config.kind() != SchemeKind::Baseline {
        return Err(Error::WrongScheme {
            expected: SchemeKind::Baseline.to_string(),
            found: config.kind().to_string(),
        });
    }
    let (g1, g2) = (config.g1.g, config.g2.g);
    let g = g1.hypot(g2);
    if g == 0.0 {
        return Err(Error::Undefined(
            "bright/dark decomposition needs g1² + g2² > 0".to_string(),
        ));
    }
    let original = build_system(config, delta)?;
    let rot = DMatrix::from_row_slice(3, 3, &[g1, g2, 0.0, g2, -g1, 0.0, 0.0, 0.0, 1.0])
        .map(|x| Complex64::new(x, 0.0));
    let product = &rot * &original.matrix * &rot;
    let weights = [g, g, 1.0];
    let matrix = DMatrix::from_fn(3, 3, |i, j| product[(i, j)] / (weights[i] * weights[j]));
    let drive = (&rot * &original.drive).map(|z| z / g);
    let drive = DVector::from_fn(3, |i, _| if i < 2 { drive[i] } else { original.drive[2] });
    Ok(LinearSystem {
        dimension: 3,
        matrix,
        drive,
        variable_labels: vec!["a_bright".into(), "a_dark".into(), "b".into()],
        delta,
    })
}

/// Port fields, efficiency, photon-flux ledger and stability of one steady state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferReport {
    pub scheme: SchemeKind,
    pub delta: f64,
    /// Reflected field at the signal port, `α_in - √κ1e α1`.
    pub alpha_out1: Complex64,
    /// Converted field, `√κ2e α2`.
    pub alpha_out2: Complex64,
    pub alpha_out3: Option<Complex64>,
    /// `|α_out2|² / |α_in,1|²` on the signal sideband (zero when the signal is off).
    pub chi: f64,
    pub flux_in: f64,
    pub flux_out: f64,
    pub flux_internal_loss: f64,
    pub flux_mechanical: f64,
    /// Net flux supplied by the parametric pump (signed; zero for passive schemes).
    pub flux_parametric: f64,
    pub stable: bool,
    pub slowest_rate: f64,
}

impl TransferReport {
    /// `|in + pump - out - losses| / max(in + |pump|, out + losses)`.
    pub fn ledger_imbalance(&self) -> f64 {
        let supplied = self.flux_in + self.flux_parametric;
        let spent = self.flux_out + self.flux_internal_loss + self.flux_mechanical;
        let scale = (self.flux_in + self.flux_parametric.abs()).max(spent);
        if scale == 0.0 {
            0.0
        } else {
            (supplied - spent).abs() / scale
        }
    }
}

pub fn input_output(state: &SteadyState, config: &SchemeConfig) -> TransferReport {
    let (m1, m2) = (&config.mode1, &config.mode2);
    let in1 = config.signal.amplitude;
    let gamma = config.mech.gamma_m;
    let out1 = in1 - m1.kappa_ext.sqrt() * state.alpha1();
    let out2 = m2.kappa_ext.sqrt() * state.alpha2();
    let chi = if in1.norm_sqr() == 0.0 {
        0.0
    } else {
        out2.norm_sqr() / in1.norm_sqr()
    };

    let mut flux_in = in1.norm_sqr();
    let mut flux_out = out1.norm_sqr() + out2.norm_sqr();
    let mut internal = m1.internal_loss() * state.alpha1().norm_sqr()
        + m2.internal_loss() * state.alpha2().norm_sqr();
    let mut mechanical = gamma * state.beta().norm_sqr();
    let mut parametric = 0.0;
    let mut alpha_out3 = None;

    match &config.extension {
        Extension::Baseline => {}
        Extension::WeakDrive(aux) => {
            let a3 = state.alpha3().unwrap_or_default();
            let in3 = aux.aux_drive.amplitude;
            let out3 = in3 - aux.mode3.kappa_ext.sqrt() * a3;
            flux_in += in3.norm_sqr();
            flux_out += out3.norm_sqr();
            internal += aux.mode3.internal_loss() * a3.norm_sqr();
            alpha_out3 = Some(out3);
        }
        Extension::Parametric { lambda } => {
            let [a1c, a2c, bc] = state.idler_conj().unwrap_or_default();
            let (a1u, a2u, bu) = (a1c.conj(), a2c.conj(), bc.conj());
            if state.delta == 0.0 {
                // Signal and idler share one frequency: the physical field is
                // their sum and the ledger is written for the total.
                let (a1, a2, b) = (
                    state.alpha1() + a1u,
                    state.alpha2() + a2u,
                    state.beta() + bu,
                );
                flux_out = (in1 - m1.kappa_ext.sqrt() * a1).norm_sqr()
                    + (m2.kappa_ext.sqrt() * a2).norm_sqr();
                internal = m1.internal_loss() * a1.norm_sqr() + m2.internal_loss() * a2.norm_sqr();
                mechanical = gamma * b.norm_sqr();
                parametric = 2.0 * (lambda * b.conj() * b.conj()).re;
            } else {
                // Idler ports carry only outgoing flux; the pump term averages
                // to 4 Re(λ b-* b+*) over a beat period.
                flux_out += m1.kappa_ext * a1u.norm_sqr() + m2.kappa_ext * a2u.norm_sqr();
                internal +=
                    m1.internal_loss() * a1u.norm_sqr() + m2.internal_loss() * a2u.norm_sqr();
                mechanical += gamma * bu.norm_sqr();
                parametric = 4.0 * (lambda * state.beta().conj() * bc).re;
            }
        }
    }

    let verdict = stability(config);
    TransferReport {
        scheme: config.kind(),
        delta: state.delta,
        alpha_out1: out1,
        alpha_out2: out2,
        alpha_out3,
        chi,
        flux_in,
        flux_out,
        flux_internal_loss: internal,
        flux_mechanical: mechanical,
        flux_parametric: parametric,
        stable: verdict.stable,
        slowest_rate: verdict.slowest_rate,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StabilityVerdict {
    pub stable: bool,
    /// `min(-Re μ)` over the drift eigenvalues `μ`; negative when unstable.
    pub slowest_rate: f64,
    /// `max(Re μ)`.
    pub max_real_part: f64,
}

/// Real `2n x 2n` drift matrix of the homogeneous equations of motion,
/// acting on `(Re x, Im x)` with `x = (a1, a2, b[, a3])`.
///
/// The equations are `dx/dt = -K x - i C x + Λ x*` with `K` the diagonal
/// damping, `C` the real symmetric coupling and `Λ` the parametric term on
/// the mechanical row. Their form does not depend on δ.
pub fn drift_matrix(config: &SchemeConfig) -> DMatrix<f64> {
    let mut damping = vec![
        0.5 * config.mode1.kappa,
        0.5 * config.mode2.kappa,
        0.5 * config.mech.gamma_m,
    ];
    let mut couplings = vec![(0usize, config.g1.g), (1usize, config.g2.g)];
    if let Some(aux) = config.auxiliary() {
        damping.push(0.5 * aux.mode3.kappa);
        couplings.push((3, aux.g3.g));
    }
    let n = damping.len();
    let mech = 2;
    let lambda = config.lambda();

    // -i C x = C (Im x) - i C (Re x): Re block picks up +C on the Im half,
    // Im block picks up -C on the Re half.
    let mut m = DMatrix::<f64>::zeros(2 * n, 2 * n);
    for (k, gamma) in damping.iter().enumerate() {
        m[(k, k)] = -gamma;
        m[(n + k, n + k)] = -gamma;
    }
    for &(k, g) in &couplings {
        for (row, col) in [(k, mech), (mech, k)] {
            m[(row, n + col)] += g;
            m[(n + row, col)] -= g;
        }
    }
    // λ x* = (λr u + λi v) + i (λi u - λr v) with x = u + i v.
    m[(mech, mech)] += lambda.re;
    m[(mech, n + mech)] += lambda.im;
    m[(n + mech, mech)] += lambda.im;
    m[(n + mech, n + mech)] -= lambda.re;
    m
}

pub fn drift_eigenvalues(config: &SchemeConfig) -> Vec<Complex64> {
    drift_matrix(config)
        .complex_eigenvalues()
        .iter()
        .copied()
        .collect()
}

pub fn stability(config: &SchemeConfig) -> StabilityVerdict {
    let max_real_part = drift_eigenvalues(config)
        .iter()
        .map(|z| z.re)
        .fold(f64::NEG_INFINITY, f64::max);
    StabilityVerdict {
        stable: max_real_part < 0.0,
        slowest_rate: -max_real_part,
        max_real_part,
    }
}

/// Locate the parametric instability threshold in |λ| by bisection on the sign
/// of the largest drift eigenvalue real part. The phase of λ is kept.
///
/// Requires the config to be stable at `lo` and unstable at `hi`.
pub fn instability_threshold(config: &SchemeConfig, lo: f64, hi: f64, rel_tol: f64) -> Result<f64> {
    if config.kind() != SchemeKind::Parametric {
        return Err(Error::WrongScheme {
            expected: SchemeKind::Parametric.to_string(),
            found: config.kind().to_string(),
        });
    }
    if !(lo >= 0.0 && hi > lo && lo.is_finite() && hi.is_finite()) {
        return Err(Error::invalid(
            "lambda-range",
            format!("need 0 ≤ lo < hi, got [{lo}, {hi}]"),
        ));
    }
    let phase = {
        let l = config.lambda();
        if l.norm() > 0.0 {
            l / l.norm()
        } else {
            Complex64::new(1.0, 0.0)
        }
    };
    let at = |magnitude: f64| {
        let mut c = config.clone();
        c.extension = Extension::Parametric {
            lambda: phase * magnitude,
        };
        stability(&c).stable
    };
    if !at(lo) {
        return Err(Error::NoSolution(format!("already unstable at |λ| = {lo}")));
    }
    if at(hi) {
        return Err(Error::NoSolution(format!("still stable at |λ| = {hi}")));
    }
    let (mut a, mut b) = (lo, hi);
    while b - a > rel_tol * b {
        let mid = 0.5 * (a + b);
        if at(mid) {
            a = mid;
        } else {
            b = mid;
        }
    }
    Ok(0.5 * (a + b))
}
