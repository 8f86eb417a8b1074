//! Fixed scenarios shared by the benchmarks.

use darkline_core::{
    Complex64, Coupling, DriveTone, MechanicalOscillator, OpticalMode, SchemeConfig,
};

/// Resolved-sideband config with `C1 = C2 = c`.
pub fn baseline(c: f64) -> SchemeConfig {
    let gamma = 1.0;
    let kappa = 50.0;
    SchemeConfig::baseline(
        OpticalMode::new("a1", kappa, 0.9 * kappa).unwrap(),
        OpticalMode::new("a2", 2.0 * kappa, 0.8 * 2.0 * kappa).unwrap(),
        MechanicalOscillator { gamma_m: gamma },
        Coupling::from_cooperativity(c, gamma, kappa),
        Coupling::from_cooperativity(c, gamma, 2.0 * kappa),
        DriveTone::new(Complex64::new(1.0, 0.0), 0.0),
    )
}

pub fn weak_drive(c: f64) -> SchemeConfig {
    baseline(c).with_weak_drive(
        OpticalMode::new("a3", 30.0, 30.0).unwrap(),
        Coupling::from_cooperativity(1.0, 1.0, 30.0),
        Complex64::new(0.0, 0.0),
    )
}

pub fn parametric(c: f64) -> SchemeConfig {
    baseline(c).with_parametric(Complex64::new(0.5, 0.0))
}
