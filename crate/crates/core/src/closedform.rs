//! Closed-form bright/dark amplitudes, conversion efficiencies and the two
//! bright-mode nulling conditions.
//!
//! Everything here is evaluated directly from the analytic expressions; the
//! linear-system solver in [`crate::linsys`] is the independent reference these
//! are checked against.
//!
//! Two printed expressions are used in corrected form:
//! - the weak-drive mechanical response is `(gamma_m/2 - iδ) + g3²/(kappa3/2 - iδ)`,
//!   with the same `gamma_m/2` as the baseline response;
//! - the resonant weak-drive bright amplitude uses cooperativities,
//!   `(1 + C3)/(1 + C1 + C2 + C3)` and `(C1 + C2)/(1 + C1 + C2 + C3)`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{derive, Extension, OpticalMode, SchemeConfig, SchemeKind};

/// `A(δ)`, `B(δ)` and the scheme's effective mechanical response `D(δ)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SusceptibilityTriple {
    pub a: Complex64,
    pub b: Complex64,
    pub d: Complex64,
}

/// Bright- and dark-mode amplitudes of the two target cavities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BrightDarkAmplitudes {
    pub alpha_b: Complex64,
    pub alpha_d: Complex64,
    pub scheme: SchemeKind,
}

impl BrightDarkAmplitudes {
    /// Largest deviation between two amplitude pairs, relative to the larger
    /// magnitude of `reference`.
    pub fn relative_error(&self, reference: &BrightDarkAmplitudes) -> f64 {
        let scale = reference.alpha_b.norm().max(reference.alpha_d.norm());
        let diff = (self.alpha_b - reference.alpha_b)
            .norm()
            .max((self.alpha_d - reference.alpha_d).norm());
        if scale == 0.0 {
            diff
        } else {
            diff / scale
        }
    }
}

/// `kappa/2 - iδ`, the inverse response of an empty cavity.
pub(crate) fn cavity_denominator(mode: &OpticalMode, delta: f64) -> Complex64 {
    Complex64::new(0.5 * mode.kappa, -delta)
}

fn bare_mechanical(config: &SchemeConfig, delta: f64) -> Complex64 {
    Complex64::new(0.5 * config.mech.gamma_m, -delta)
}

/// Field a tone produces in an otherwise empty cavity, `√kappa_ext α_in / (kappa/2 - iδ)`.
fn empty_cavity_field(mode: &OpticalMode, amplitude: Complex64, delta: f64) -> Complex64 {
    amplitude * mode.kappa_ext.sqrt() / cavity_denominator(mode, delta)
}

pub fn susceptibilities(config: &SchemeConfig, delta: f64) -> SusceptibilityTriple {
    let k1 = cavity_denominator(&config.mode1, delta);
    let k2 = cavity_denominator(&config.mode2, delta);
    let (g1, g2) = (config.g1.g, config.g2.g);
    let a = g1 * g1 / k1 + g2 * g2 / k2;
    let b = g1 * g2 / k1 - g1 * g2 / k2;
    let d0 = bare_mechanical(config, delta);
    let d = match &config.extension {
        Extension::Baseline => d0,
        Extension::WeakDrive(aux) => {
            let g3 = aux.g3.g;
            d0 + g3 * g3 / cavity_denominator(&aux.mode3, delta)
        }
        Extension::Parametric { lambda } => d0 - lambda.norm_sqr() / (d0 + a),
    };
    SusceptibilityTriple { a, b, d }
}

fn total_coupling(config: &SchemeConfig) -> Result<f64> {
    let g = config.g1.g.hypot(config.g2.g);
    if g == 0.0 {
        return Err(Error::Undefined(
            "bright/dark modes need g1² + g2² > 0".to_string(),
        ));
    }
    Ok(g)
}

pub fn bright_dark_closed_form(config: &SchemeConfig, delta: f64) -> Result<BrightDarkAmplitudes> {
    config.validate()?;
    let g = total_coupling(config)?;
    let (g1, g2) = (config.g1.g, config.g2.g);
    let SusceptibilityTriple { a, b, d } = susceptibilities(config, delta);
    let denom = a + d;
    if denom.norm() <= 1e-14 * (a.norm() + d.norm()) {
        return Err(Error::Degenerate(format!(
            "A + D vanishes at δ = {delta} ({} scheme)",
            config.kind()
        )));
    }
    let s1 = empty_cavity_field(&config.mode1, config.signal.amplitude, delta);
    let mut alpha_b = g1 / g * d / denom * s1;
    let mut alpha_d = (g2 / g - g1 / g * b / denom) * s1;
    if let Some(aux) = config.auxiliary() {
        let s3 = empty_cavity_field(&aux.mode3, aux.aux_drive.amplitude, delta);
        let g3 = aux.g3.g;
        alpha_b -= g3 / g * a / denom * s3;
        alpha_d -= g3 / g * b / denom * s3;
    }
    Ok(BrightDarkAmplitudes {
        alpha_b,
        alpha_d,
        scheme: config.kind(),
    })
}

/// Resonant (δ = 0) conversion efficiency.
///
/// The baseline value holds for any cooperativities. For the weak-drive and
/// parametric schemes the value assumes the bright-mode nulling condition is
/// met.
pub fn efficiency_closed_form(config: &SchemeConfig) -> Result<f64> {
    let p = derive(config)?;
    let eta = config.mode1.eta() * config.mode2.eta();
    let num = 4.0 * p.c1 * p.c2;
    match config.kind() {
        SchemeKind::Baseline => {
            let den = 1.0 + p.c1 + p.c2;
            Ok(eta * num / (den * den))
        }
        SchemeKind::WeakDrive | SchemeKind::Parametric => {
            let sum = p.c1 + p.c2;
            if sum == 0.0 {
                return Err(Error::Undefined(
                    "pure dark-mode efficiency is 0/0 at C1 = C2 = 0".to_string(),
                ));
            }
            Ok(eta * num / (sum * sum))
        }
    }
}

/// Auxiliary-tone amplitude that empties the bright mode on resonance.
///
/// The returned amplitude is the signal amplitude times a real positive ratio.
pub fn solve_weak_drive_condition(config: &SchemeConfig) -> Result<Complex64> {
    let p = derive(config)?;
    let aux = config.auxiliary().ok_or_else(|| Error::WrongScheme {
        expected: SchemeKind::WeakDrive.to_string(),
        found: config.kind().to_string(),
    })?;
    let g3 = aux.g3.g;
    if g3 == 0.0 {
        return Err(Error::NoSolution(
            "the auxiliary mode is uncoupled (g3 = 0)".to_string(),
        ));
    }
    let csum = p.c1 + p.c2;
    if csum == 0.0 {
        return Err(Error::NoSolution(
            "the target modes are uncoupled (C1 + C2 = 0)".to_string(),
        ));
    }
    let c3 = p.c3.unwrap_or(0.0);
    let m1 = &config.mode1;
    let m3 = &aux.mode3;
    // 2√η3/√κ3 · α3 = (g1/g3)(1 + C3)/(C1 + C2) · 2√η1/√κ1 · α1
    let in1 = 2.0 * m1.eta().sqrt() / m1.kappa.sqrt();
    let in3 = 2.0 * m3.eta().sqrt() / m3.kappa.sqrt();
    let ratio = config.g1.g / g3 * (1.0 + c3) / csum * in1 / in3;
    Ok(config.signal.amplitude * ratio)
}

/// Parametric strength `(gamma_m/2) √(1 + C1 + C2)` that empties the bright mode
/// on resonance.
pub fn solve_parametric_condition(config: &SchemeConfig) -> Result<f64> {
    if config.kind() != SchemeKind::Parametric {
        return Err(Error::WrongScheme {
            expected: SchemeKind::Parametric.to_string(),
            found: config.kind().to_string(),
        });
    }
    let p = derive(config)?;
    Ok(0.5 * config.mech.gamma_m * (1.0 + p.c1 + p.c2).sqrt())
}

/// Apply the scheme's nulling condition, returning the updated config and the
/// value used (auxiliary amplitude or λ). Baseline configs come back unchanged.
///
/// For the parametric scheme only |λ| is fixed; a nonzero λ keeps its phase.
pub fn apply_nulling(config: &SchemeConfig) -> Result<(SchemeConfig, Option<Complex64>)> {
    let mut out = config.clone();
    match config.kind() {
        SchemeKind::Baseline => Ok((out, None)),
        SchemeKind::WeakDrive => {
            let amp = solve_weak_drive_condition(config)?;
            if let Some(aux) = out.auxiliary_mut() {
                aux.aux_drive.amplitude = amp;
            }
            Ok((out, Some(amp)))
        }
        SchemeKind::Parametric => {
            let magnitude = solve_parametric_condition(config)?;
            let current = config.lambda();
            let lambda = if current.norm() > 0.0 {
                current * (magnitude / current.norm())
            } else {
                Complex64::new(magnitude, 0.0)
            };
            out.extension = Extension::Parametric { lambda };
            Ok((out, Some(lambda)))
        }
    }
}

/// Resonant bright/dark amplitudes from the cooperativity forms.
///
/// This path never builds `A`, `B` or `D`; it is the second route to the δ = 0
/// values of [`bright_dark_closed_form`].
pub fn special_case_delta0(config: &SchemeConfig) -> Result<BrightDarkAmplitudes> {
    let p = derive(config)?;
    let g = total_coupling(config)?;
    let (g1, g2) = (config.g1.g, config.g2.g);
    let gamma = config.mech.gamma_m;
    let m1 = &config.mode1;
    let r = m1.kappa / config.mode2.kappa;
    let s1 = 2.0 * m1.eta().sqrt() / m1.kappa.sqrt() * config.signal.amplitude;
    let (c1, c2) = (p.c1, p.c2);

    let (alpha_b, alpha_d) = match &config.extension {
        Extension::Baseline => {
            let den = 1.0 + c1 + c2;
            (g1 / g / den * s1, g2 / g * (1.0 + r * c1 + c2) / den * s1)
        }
        Extension::WeakDrive(aux) => {
            let c3 = p.c3.unwrap_or(0.0);
            let g3 = aux.g3.g;
            let m3 = &aux.mode3;
            let s3 = 2.0 * m3.eta().sqrt() / m3.kappa.sqrt() * aux.aux_drive.amplitude;
            let den = 1.0 + c1 + c2 + c3;
            let alpha_b = g1 / g * (1.0 + c3) / den * s1 - g3 / g * (c1 + c2) / den * s3;
            // C1/g1 written as 4 g1/(gamma_m kappa1) so g1 = 0 stays finite.
            let c1_over_g1 = 4.0 * g1 / (gamma * m1.kappa);
            let alpha_d = g2 / g * (1.0 + r * c1 + c2 + c3) / den * s1
                - g2 * g3 / g * c1_over_g1 * (1.0 - r) / den * s3;
            (alpha_b, alpha_d)
        }
        Extension::Parametric { .. } => {
            let t = p.t.unwrap_or(0.0);
            let den = 1.0 - t + c1 + c2;
            if den == 0.0 {
                return Err(Error::Degenerate(
                    "1 - t + C1 + C2 = 0 (parametric instability boundary)".to_string(),
                ));
            }
            (
                g1 / g * (1.0 - t) / den * s1,
                g2 / g * (1.0 - t + r * c1 + c2) / den * s1,
            )
        }
    };
    Ok(BrightDarkAmplitudes {
        alpha_b,
        alpha_d,
        scheme: config.kind(),
    })
}
