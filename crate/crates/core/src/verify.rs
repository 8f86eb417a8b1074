//! Seeded random configurations and the property suite run by `darkline verify`.

use std::fmt::Write as _;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::closedform::{
    apply_nulling, bright_dark_closed_form, efficiency_closed_form, special_case_delta0,
};
use crate::error::{Error, Result};
use crate::linsys::{
    bright_dark_decompose, build_system, input_output, solve_config, stability,
    transform_to_bright_dark_basis,
};
use crate::model::{
    derive, Coupling, DriveTone, MechanicalOscillator, OpticalMode, SchemeConfig, SchemeKind,
};
use crate::timedomain::{integrate, IntegrationSpec};

/// Largest 1-norm condition number the generator accepts at δ = 0.
pub const CONDITION_GATE: f64 = 1e9;
/// Cooperativity cap for generated configs.
pub const MAX_COOPERATIVITY: f64 = 1e3;
/// Largest `max_rate / slowest_rate` for time-domain configs.
pub const MAX_STIFFNESS: f64 = 200.0;

/// Seeded source of random valid configs with `gamma_m = 1`.
pub struct RandomConfigs {
    rng: ChaCha8Rng,
    lo: f64,
    hi: f64,
}

impl RandomConfigs {
    /// Rates log-uniform over `[1e-3, 1e3]`.
    pub fn new(seed: u64) -> Self {
        RandomConfigs {
            rng: ChaCha8Rng::seed_from_u64(seed),
            lo: 1e-3,
            hi: 1e3,
        }
    }

    /// Rates log-uniform over `[0.2, 5]`, and only configs whose stiffness
    /// ratio stays under [`MAX_STIFFNESS`]. Meant for time-domain runs.
    pub fn moderate(seed: u64) -> Self {
        RandomConfigs {
            rng: ChaCha8Rng::seed_from_u64(seed),
            lo: 0.2,
            hi: 5.0,
        }
    }

    fn moderate_mode(&self) -> bool {
        self.hi <= 5.0
    }

    pub fn rng(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }

    fn log_uniform(&mut self, lo: f64, hi: f64) -> f64 {
        (self.rng.random_range(lo.ln()..=hi.ln())).exp()
    }

    fn rate(&mut self) -> f64 {
        self.log_uniform(self.lo, self.hi)
    }

    fn mode(&mut self, label: &str) -> OpticalMode {
        let kappa = self.rate();
        let eta = self.rng.random_range(0.05..=1.0);
        OpticalMode {
            label: label.to_string(),
            kappa,
            kappa_ext: (eta * kappa).min(kappa),
        }
    }

    fn coupling(&mut self, kappa: f64) -> Coupling {
        loop {
            let g = self.rate();
            if 4.0 * g * g / kappa <= MAX_COOPERATIVITY {
                return Coupling::new(g);
            }
        }
    }

    fn amplitude(&mut self) -> Complex64 {
        let magnitude = self.log_uniform(0.1, 10.0);
        Complex64::from_polar(magnitude, self.rng.random_range(0.0..std::f64::consts::TAU))
    }

    fn candidate(&mut self, kind: SchemeKind) -> SchemeConfig {
        let mode1 = self.mode("a1");
        let mode2 = self.mode("a2");
        let g1 = self.coupling(mode1.kappa);
        let g2 = self.coupling(mode2.kappa);
        let signal = DriveTone::new(self.amplitude(), 0.0);
        let base = SchemeConfig::baseline(
            mode1,
            mode2,
            MechanicalOscillator { gamma_m: 1.0 },
            g1,
            g2,
            signal,
        );
        match kind {
            SchemeKind::Baseline => base,
            SchemeKind::WeakDrive => {
                let mode3 = self.mode("a3");
                let g3 = self.coupling(mode3.kappa);
                let aux = self.amplitude();
                base.with_weak_drive(mode3, g3, aux)
            }
            SchemeKind::Parametric => {
                let p = derive(&base).expect("generated config is valid");
                // Fraction of the resonant static threshold (gamma_m/2)(1 + C1 + C2).
                let u = self.rng.random_range(0.0..0.95);
                let phase = self.rng.random_range(0.0..std::f64::consts::TAU);
                base.with_parametric(Complex64::from_polar(u * 0.5 * (1.0 + p.c1 + p.c2), phase))
            }
        }
    }

    fn accept(&self, config: &SchemeConfig) -> bool {
        let verdict = stability(config);
        if !verdict.stable {
            return false;
        }
        if self.moderate_mode() && config.max_rate() / verdict.slowest_rate > MAX_STIFFNESS {
            return false;
        }
        build_system(config, 0.0)
            .ok()
            .and_then(|s| condition_1(&s.matrix))
            .is_some_and(|c| c <= CONDITION_GATE)
    }

    /// Next stable, well-conditioned config of the given scheme.
    pub fn generate(&mut self, kind: SchemeKind) -> SchemeConfig {
        loop {
            let config = self.candidate(kind);
            if self.accept(&config) {
                return config;
            }
        }
    }

    /// `n` configs of each scheme, interleaved by scheme.
    pub fn batch(&mut self, n: usize) -> Vec<SchemeConfig> {
        (0..n)
            .flat_map(|_| SchemeKind::ALL.map(|k| self.generate(k)))
            .collect()
    }
}

fn condition_1(m: &DMatrix<Complex64>) -> Option<f64> {
    let norm1 = |m: &DMatrix<Complex64>| {
        m.column_iter()
            .map(|c| c.iter().map(|z| z.norm()).sum::<f64>())
            .fold(0.0, f64::max)
    };
    m.clone().try_inverse().map(|inv| norm1(m) * norm1(&inv))
}

/// Largest |κ| in the config, the scale of the detuning window.
pub fn kappa_max(config: &SchemeConfig) -> f64 {
    let k3 = config.auxiliary().map_or(0.0, |a| a.mode3.kappa);
    config.mode1.kappa.max(config.mode2.kappa).max(k3)
}

/// `n` evenly spaced detunings over `[-5 κmax, 5 κmax]`, plus δ = 0.
pub fn detuning_grid(config: &SchemeConfig, n: usize) -> Vec<f64> {
    let span = 5.0 * kappa_max(config);
    let mut grid: Vec<f64> = (0..n)
        .map(|k| {
            if n == 1 {
                0.0
            } else {
                -span + 2.0 * span * k as f64 / (n - 1) as f64
            }
        })
        .collect();
    if !grid.contains(&0.0) {
        grid.push(0.0);
    }
    grid
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropertyOutcome {
    pub name: String,
    pub checks: usize,
    pub failures: usize,
    /// Largest observed error, in the property's own metric.
    pub worst: f64,
    pub tolerance: f64,
    /// A few failing cases, for the report.
    pub examples: Vec<String>,
}

impl PropertyOutcome {
    fn new(name: &str, tolerance: f64) -> Self {
        PropertyOutcome {
            name: name.to_string(),
            checks: 0,
            failures: 0,
            worst: 0.0,
            tolerance,
            examples: Vec::new(),
        }
    }

    pub fn passed(&self) -> bool {
        self.failures == 0
    }

    /// Record one measured error. NaN counts as a failure.
    fn record(&mut self, error: f64, context: impl FnOnce() -> String) {
        self.checks += 1;
        if error.is_nan() || error > self.worst {
            self.worst = if error.is_nan() { f64::INFINITY } else { error };
        }
        if error.is_nan() || error > self.tolerance {
            self.fail(format!("{} (error {error:e})", context()));
        }
    }

    fn fail(&mut self, message: String) {
        self.failures += 1;
        if self.examples.len() < 5 {
            self.examples.push(message);
        }
    }

    /// Record an error raised where a value was expected.
    fn error(&mut self, e: &Error, context: impl FnOnce() -> String) {
        self.checks += 1;
        self.worst = f64::INFINITY;
        self.fail(format!("{}: {e}", context()));
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SuiteOptions {
    /// Detunings per config for the closed-form and flux checks.
    pub detunings: usize,
    /// Run the time-domain comparison at all.
    pub time_domain: bool,
    /// Skip time-domain runs longer than this many RK4 steps.
    pub max_time_steps: usize,
}

impl Default for SuiteOptions {
    fn default() -> Self {
        SuiteOptions {
            detunings: 11,
            time_domain: true,
            max_time_steps: 2_000_000,
        }
    }
}

fn describe(config: &SchemeConfig, delta: f64) -> String {
    let mut s = format!(
        "{} k1={:e} k2={:e} g1={:e} g2={:e}",
        config.kind(),
        config.mode1.kappa,
        config.mode2.kappa,
        config.g1.g,
        config.g2.g
    );
    if let Some(aux) = config.auxiliary() {
        let _ = write!(s, " k3={:e} g3={:e}", aux.mode3.kappa, aux.g3.g);
    }
    if config.kind() == SchemeKind::Parametric {
        let _ = write!(s, " |lambda|={:e}", config.lambda().norm());
    }
    let _ = write!(s, " delta={delta:e}");
    s
}

fn relative(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}

/// Max distance between two eigenvalue sets after greedy nearest matching,
/// relative to the largest modulus.
fn spectrum_distance(a: &[Complex64], b: &[Complex64]) -> f64 {
    let mut unused: Vec<Complex64> = b.to_vec();
    let mut worst: f64 = 0.0;
    for z in a {
        let (k, d) = unused
            .iter()
            .enumerate()
            .map(|(k, w)| (k, (z - w).norm()))
            .fold(
                (0, f64::INFINITY),
                |best, cur| if cur.1 < best.1 { cur } else { best },
            );
        worst = worst.max(d);
        unused.swap_remove(k);
    }
    let scale = a.iter().chain(b).map(|z| z.norm()).fold(0.0, f64::max);
    if scale == 0.0 {
        worst
    } else {
        worst / scale
    }
}

fn eigenvalues(m: &DMatrix<Complex64>) -> Vec<Complex64> {
    m.clone()
        .schur()
        .eigenvalues()
        .map(|v| v.iter().copied().collect())
        .unwrap_or_default()
}

fn check_closed_form(p: &mut PropertyOutcome, config: &SchemeConfig, delta: f64) {
    let ctx = || describe(config, delta);
    let result = solve_config(config, delta)
        .and_then(|s| bright_dark_decompose(&s, config))
        .and_then(|numeric| {
            bright_dark_closed_form(config, delta).map(|cf| cf.relative_error(&numeric))
        });
    match result {
        Ok(err) => p.record(err, ctx),
        Err(e) => p.error(&e, ctx),
    }
}

fn check_flux(p: &mut PropertyOutcome, config: &SchemeConfig, delta: f64) {
    match solve_config(config, delta) {
        Ok(state) => p.record(input_output(&state, config).ledger_imbalance(), || {
            describe(config, delta)
        }),
        Err(e) => p.error(&e, || describe(config, delta)),
    }
}

fn check_dual_path(p: &mut PropertyOutcome, config: &SchemeConfig) {
    let result = special_case_delta0(config)
        .and_then(|a| bright_dark_closed_form(config, 0.0).map(|b| a.relative_error(&b)));
    match result {
        Ok(err) => p.record(err, || describe(config, 0.0)),
        Err(e) => p.error(&e, || describe(config, 0.0)),
    }
}

fn check_nulling(p: &mut PropertyOutcome, config: &SchemeConfig) {
    let result =
        apply_nulling(config).and_then(|(nulled, _)| bright_dark_closed_form(&nulled, 0.0));
    match result {
        Ok(bd) => p.record(bd.alpha_b.norm() / bd.alpha_d.norm(), || {
            describe(config, 0.0)
        }),
        Err(e) => p.error(&e, || describe(config, 0.0)),
    }
}

fn check_efficiency(p: &mut PropertyOutcome, config: &SchemeConfig) {
    let result = apply_nulling(config).and_then(|(nulled, _)| {
        let expected = efficiency_closed_form(&nulled)?;
        let state = solve_config(&nulled, 0.0)?;
        Ok(relative(input_output(&state, &nulled).chi, expected))
    });
    match result {
        Ok(err) => p.record(err, || describe(config, 0.0)),
        Err(e) => p.error(&e, || describe(config, 0.0)),
    }
}

/// χ at δ = 0 under the scheme's stated condition, with C1, C2 held fixed and
/// gamma_m or κ1/κ2 rescaled.
fn check_efficiency_invariants(p: &mut PropertyOutcome, config: &SchemeConfig) {
    let result = (|| -> Result<f64> {
        let d = derive(config)?;
        let rescaled = |gamma: f64, kappa1: f64| -> Result<f64> {
            let mut c = config.clone();
            c.mech.gamma_m = gamma;
            let eta1 = c.mode1.eta();
            c.mode1.kappa = kappa1;
            c.mode1.kappa_ext = (eta1 * kappa1).min(kappa1);
            c.g1 = Coupling::from_cooperativity(d.c1, gamma, c.mode1.kappa);
            c.g2 = Coupling::from_cooperativity(d.c2, gamma, c.mode2.kappa);
            if let Some(aux) = c.auxiliary_mut() {
                let c3 = d.c3.unwrap_or(0.0);
                aux.g3 = Coupling::from_cooperativity(c3, gamma, aux.mode3.kappa);
            }
            efficiency_closed_form(&apply_nulling(&c)?.0)
        };
        let chi = rescaled(config.mech.gamma_m, config.mode1.kappa)?;
        let mut worst: f64 = 0.0;
        worst = worst.max(relative(
            chi,
            rescaled(10.0 * config.mech.gamma_m, config.mode1.kappa)?,
        ));
        if config.kind() != SchemeKind::Baseline {
            for ratio in [0.1, 1.0, 10.0] {
                worst = worst.max(relative(
                    chi,
                    rescaled(config.mech.gamma_m, ratio * config.mode2.kappa)?,
                ));
            }
        } else if chi > config.mode1.eta() * config.mode2.eta() {
            worst = f64::INFINITY;
        }
        Ok(worst)
    })();
    match result {
        Ok(err) => p.record(err, || describe(config, 0.0)),
        Err(e) => p.error(&e, || describe(config, 0.0)),
    }
}

fn check_off_resonant_decay(p: &mut PropertyOutcome, config: &SchemeConfig) {
    let far = 1e3
        * kappa_max(config)
            .max(config.g1.g)
            .max(config.g2.g)
            .max(config.auxiliary().map_or(0.0, |a| a.g3.g));
    let result = (|| -> Result<f64> {
        let chi0 = input_output(&solve_config(config, 0.0)?, config).chi;
        let chi_far = input_output(&solve_config(config, far)?, config).chi;
        Ok(chi_far / chi0)
    })();
    match result {
        Ok(ratio) => p.record(ratio, || describe(config, far)),
        Err(e) => p.error(&e, || describe(config, far)),
    }
}

fn check_similarity(p: &mut PropertyOutcome, config: &SchemeConfig, delta: f64) {
    let result = build_system(config, delta).and_then(|original| {
        let rotated = transform_to_bright_dark_basis(config, delta)?;
        Ok(spectrum_distance(
            &eigenvalues(&original.matrix),
            &eigenvalues(&rotated.matrix),
        ))
    });
    match result {
        Ok(err) => p.record(err, || describe(config, delta)),
        Err(e) => p.error(&e, || describe(config, delta)),
    }
}

/// Relative distance between the demodulated envelope and the steady state.
pub fn time_frequency_error(config: &SchemeConfig, spec: &IntegrationSpec) -> Result<f64> {
    let delta = config.signal.delta;
    let traj = integrate(config, spec)?;
    let steady = solve_config(config, delta)?;
    let n = traj.final_envelope.len();
    let mut expected: Vec<Complex64> = steady.amplitudes.iter().take(n).copied().collect();
    let mut measured = traj.final_envelope.clone();
    if let Some(idler) = steady.idler_conj() {
        let upper: Vec<Complex64> = idler.iter().map(|z| z.conj()).collect();
        if delta == 0.0 {
            for (e, u) in expected.iter_mut().zip(&upper) {
                *e += u;
            }
        } else if let Some(env) = &traj.idler_envelope {
            expected.extend(upper);
            measured.extend(env.iter().copied());
        }
    }
    let scale = expected.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let diff = expected
        .iter()
        .zip(&measured)
        .map(|(a, b)| (a - b).norm())
        .fold(0.0, f64::max);
    Ok(if scale == 0.0 { diff } else { diff / scale })
}

fn check_time_domain(p: &mut PropertyOutcome, config: &SchemeConfig, max_steps: usize) -> bool {
    let deltas = [
        0.0,
        config.mech.gamma_m,
        -config.mech.gamma_m,
        0.5 * config.mode1.kappa,
        -0.5 * config.mode1.kappa,
    ];
    let mut ran = false;
    for delta in deltas {
        let cfg = config.at_detuning(delta);
        let spec = match IntegrationSpec::for_config(&cfg) {
            Ok(spec) => spec,
            Err(e) => {
                p.error(&e, || describe(&cfg, delta));
                continue;
            }
        };
        if spec.horizon / spec.step > max_steps as f64 {
            continue;
        }
        ran = true;
        match time_frequency_error(&cfg, &spec) {
            Ok(err) => p.record(err, || describe(&cfg, delta)),
            Err(e) => p.error(&e, || describe(&cfg, delta)),
        }
    }
    ran
}

/// Run every property over `configs`. `time_configs` feed the time-domain
/// comparison only.
pub fn run_suite(
    configs: &[SchemeConfig],
    time_configs: &[SchemeConfig],
    options: &SuiteOptions,
) -> Vec<PropertyOutcome> {
    let mut closed = PropertyOutcome::new("closed_form_vs_linsys", 1e-9);
    let mut dual = PropertyOutcome::new("dual_path_delta0", 1e-12);
    let mut flux = PropertyOutcome::new("flux_ledger", 1e-9);
    let mut nulling = PropertyOutcome::new("nulling", 1e-12);
    let mut efficiency = PropertyOutcome::new("efficiency_at_condition", 1e-9);
    let mut invariants = PropertyOutcome::new("efficiency_invariants", 1e-12);
    let mut decay = PropertyOutcome::new("off_resonant_decay", 1e-4);
    let mut similarity = PropertyOutcome::new("bright_dark_similarity", 1e-10);
    let mut time = PropertyOutcome::new("time_vs_frequency", 1e-6);

    for config in configs {
        let grid = detuning_grid(config, options.detunings);
        for &delta in &grid {
            check_closed_form(&mut closed, config, delta);
            check_flux(&mut flux, config, delta);
            if config.kind() == SchemeKind::Baseline {
                check_similarity(&mut similarity, config, delta);
            }
        }
        check_dual_path(&mut dual, config);
        if config.kind() != SchemeKind::Baseline {
            check_nulling(&mut nulling, config);
        }
        check_efficiency(&mut efficiency, config);
        check_efficiency_invariants(&mut invariants, config);
        check_off_resonant_decay(&mut decay, config);
    }
    let mut skipped = 0;
    if options.time_domain {
        for config in time_configs {
            if !check_time_domain(&mut time, config, options.max_time_steps) {
                skipped += 1;
            }
        }
    }
    if skipped > 0 {
        time.examples.push(format!(
            "{skipped} config(s) skipped: run longer than {} steps",
            options.max_time_steps
        ));
    }
    vec![
        closed, dual, flux, nulling, efficiency, invariants, decay, similarity, time,
    ]
}

/// Number of time-domain configs per scheme drawn by [`random_suite`].
pub const TIME_DOMAIN_PER_SCHEME: usize = 5;

/// The suite over `n` random configs per scheme, reproducible from `seed`.
pub fn random_suite(n: usize, seed: u64, options: &SuiteOptions) -> Vec<PropertyOutcome> {
    let configs = RandomConfigs::new(seed).batch(n);
    let time_configs = RandomConfigs::moderate(seed ^ 0x5eed).batch(n.min(TIME_DOMAIN_PER_SCHEME));
    run_suite(&configs, &time_configs, options)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generator_is_reproducible_and_valid() {
        let a = RandomConfigs::new(3).batch(20);
        let b = RandomConfigs::new(3).batch(20);
        assert_eq!(a, b);
        assert_ne!(a, RandomConfigs::new(4).batch(20));
        for cfg in &a {
            cfg.validate().unwrap();
            let d = derive(cfg).unwrap();
            assert!(d.c1 <= MAX_COOPERATIVITY && d.c2 <= MAX_COOPERATIVITY);
            assert!(d.c3.unwrap_or(0.0) <= MAX_COOPERATIVITY);
            assert!(stability(cfg).stable);
            assert_eq!(cfg.mech.gamma_m, 1.0);
        }
        let kinds: Vec<SchemeKind> = a.iter().take(3).map(SchemeConfig::kind).collect();
        assert_eq!(kinds, SchemeKind::ALL.to_vec());
    }

    #[test]
    fn moderate_configs_are_not_stiff() {
        for cfg in RandomConfigs::moderate(1).batch(10) {
            let v = stability(&cfg);
            assert!(cfg.max_rate() / v.slowest_rate <= MAX_STIFFNESS);
        }
    }

    #[test]
    fn detuning_grid_contains_resonance() {
        let cfg = RandomConfigs::new(0).generate(SchemeKind::Baseline);
        let grid = detuning_grid(&cfg, 4);
        assert_eq!(grid.len(), 5);
        assert!(grid.contains(&0.0));
        assert_eq!(grid[0], -5.0 * kappa_max(&cfg));
    }

    #[test]
    fn spectrum_distance_matches_permutations() {
        let a = [
            Complex64::new(1.0, 2.0),
            Complex64::new(-3.0, 0.0),
            Complex64::new(0.5, -1.0),
        ];
        let b = [a[2], a[0], a[1]];
        assert_eq!(spectrum_distance(&a, &b), 0.0);
        let c = [a[2], a[0], a[1] + 0.3];
        assert!((spectrum_distance(&a, &c) - 0.1).abs() < 1e-15);
    }

    #[test]
    fn small_random_suite_passes() {
        let outcomes = random_suite(8, 11, &SuiteOptions::default());
        for o in &outcomes {
            assert!(o.passed(), "{o:?}");
            assert!(o.checks > 0, "{} ran no checks", o.name);
        }
    }

    #[test]
    fn failures_are_recorded() {
        let mut p = PropertyOutcome::new("x", 1e-3);
        p.record(1e-4, || "ok".into());
        p.record(f64::NAN, || "nan".into());
        p.record(0.5, || "big".into());
        assert_eq!((p.checks, p.failures), (3, 2));
        assert!(p.worst.is_infinite());
        assert!(p.examples[0].starts_with("nan"));
    }
}
