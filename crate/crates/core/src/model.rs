//! Domain types shared by every solver.
//!
//! All rates share one user-chosen unit (normalizing `gamma_m = 1` is the
//! usual choice). Nothing in the crate converts units; every physical result
//! depends only on rate ratios.

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

fn finite(name: &str, value: f64) -> Result<()> {
    if value.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(name, format!("must be finite, got {value}")))
    }
}

fn finite_complex(name: &str, value: Complex64) -> Result<()> {
    if value.re.is_finite() && value.im.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(name, format!("must be finite, got {value}")))
    }
}

/// One optical (or microwave) cavity mode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OpticalMode {
    pub label: String,
    /// Total decay rate.
    pub kappa: f64,
    /// External (output-port) coupling rate, `0 < kappa_ext <= kappa`.
    pub kappa_ext: f64,
}

impl OpticalMode {
    pub fn new(label: impl Into<String>, kappa: f64, kappa_ext: f64) -> Result<Self> {
        let mode = OpticalMode {
            label: label.into(),
            kappa,
            kappa_ext,
        };
        mode.validate("mode")?;
        Ok(mode)
    }

    /// Output coupling ratio `kappa_ext / kappa`.
    pub fn eta(&self) -> f64 {
        self.kappa_ext / self.kappa
    }

    /// Rate at which photons are lost to channels other than the output port.
    pub fn internal_loss(&self) -> f64 {
        self.kappa - self.kappa_ext
    }

    pub fn validate(&self, name: &str) -> Result<()> {
        finite(&format!("{name}.kappa"), self.kappa)?;
        finite(&format!("{name}.kappa_ext"), self.kappa_ext)?;
        if self.kappa <= 0.0 {
            return Err(Error::invalid(
                format!("{name}.kappa"),
                format!("kappa > 0 violated (kappa = {})", self.kappa),
            ));
        }
        if self.kappa_ext <= 0.0 {
            return Err(Error::invalid(
                format!("{name}.kappa_ext"),
                format!("kappa_ext > 0 violated (kappa_ext = {})", self.kappa_ext),
            ));
        }
        if self.kappa_ext > self.kappa {
            return Err(Error::invalid(
                format!("{name}.kappa_ext"),
                format!(
                    "kappa_ext ≤ kappa violated (kappa_ext = {}, kappa = {})",
                    self.kappa_ext, self.kappa
                ),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MechanicalOscillator {
    /// Mechanical energy damping rate.
    pub gamma_m: f64,
}

impl MechanicalOscillator {
    pub fn validate(&self) -> Result<()> {
        finite("mech.gamma_m", self.gamma_m)?;
        if self.gamma_m <= 0.0 {
            return Err(Error::invalid(
                "mech.gamma_m",
                format!("gamma_m > 0 violated (gamma_m = {})", self.gamma_m),
            ));
        }
        Ok(())
    }
}

/// Linearized (pump-enhanced) optomechanical coupling rate.
///
/// The rate is real: coupling phases are absorbed into the mode definitions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Coupling {
    pub g: f64,
}

impl Coupling {
    pub fn new(g: f64) -> Self {
        Coupling { g }
    }

    /// Coupling that realizes cooperativity `c = 4 g² / (gamma_m kappa)`.
    pub fn from_cooperativity(c: f64, gamma_m: f64, kappa: f64) -> Self {
        Coupling {
            g: (c * gamma_m * kappa / 4.0).sqrt(),
        }
    }

    pub fn validate(&self, name: &str) -> Result<()> {
        finite(name, self.g)?;
        if self.g < 0.0 {
            return Err(Error::invalid(
                name,
                format!("g ≥ 0 violated (g = {})", self.g),
            ));
        }
        Ok(())
    }
}

/// A weak coherent tone entering a cavity port.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriveTone {
    /// Flux amplitude, in √(photons / time).
    pub amplitude: Complex64,
    /// Detuning from the two-photon (sideband) resonance.
    pub delta: f64,
}

impl DriveTone {
    pub fn new(amplitude: Complex64, delta: f64) -> Self {
        DriveTone { amplitude, delta }
    }

    pub fn validate(&self, name: &str) -> Result<()> {
        finite_complex(&format!("{name}.amplitude"), self.amplitude)?;
        finite(&format!("{name}.delta"), self.delta)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchemeKind {
    Baseline,
    WeakDrive,
    Parametric,
}

impl SchemeKind {
    pub const ALL: [SchemeKind; 3] = [
        SchemeKind::Baseline,
        SchemeKind::WeakDrive,
        SchemeKind::Parametric,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SchemeKind::Baseline => "baseline",
            SchemeKind::WeakDrive => "weak_drive",
            SchemeKind::Parametric => "parametric",
        }
    }

    /// Superscript index used for the bright/dark amplitudes of each scheme.
    pub fn tag(self) -> u8 {
        match self {
            SchemeKind::Baseline => 0,
            SchemeKind::WeakDrive => 1,
            SchemeKind::Parametric => 2,
        }
    }
}

impl fmt::Display for SchemeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SchemeKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "baseline" => Ok(SchemeKind::Baseline),
            "weak_drive" => Ok(SchemeKind::WeakDrive),
            "parametric" => Ok(SchemeKind::Parametric),
            other => Err(Error::invalid(
                "scheme.kind",
                format!("expected one of baseline, weak_drive, parametric; got `{other}`"),
            )),
        }
    }
}

/// The auxiliary cavity used by the weak-drive scheme.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuxiliaryMode {
    pub mode3: OpticalMode,
    pub g3: Coupling,
    /// Weak tone on mode 3 at the signal frequency.
    pub aux_drive: DriveTone,
}

/// What distinguishes the three schemes from one another.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Extension {
    Baseline,
    WeakDrive(AuxiliaryMode),
    /// Mechanical parametric modulation at twice the mechanical frequency.
    Parametric {
        lambda: Complex64,
    },
}

/// Full description of one conversion setup.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchemeConfig {
    pub mode1: OpticalMode,
    pub mode2: OpticalMode,
    pub mech: MechanicalOscillator,
    pub g1: Coupling,
    pub g2: Coupling,
    /// Signal tone entering mode 1.
    pub signal: DriveTone,
    pub extension: Extension,
}

impl SchemeConfig {
    pub fn baseline(
        mode1: OpticalMode,
        mode2: OpticalMode,
        mech: MechanicalOscillator,
        g1: Coupling,
        g2: Coupling,
        signal: DriveTone,
    ) -> Self {
        SchemeConfig {
            mode1,
            mode2,
            mech,
            g1,
            g2,
            signal,
            extension: Extension::Baseline,
        }
    }

    /// Turn this config into the weak-drive scheme. The auxiliary tone is put
    /// at the signal detuning.
    pub fn with_weak_drive(
        mut self,
        mode3: OpticalMode,
        g3: Coupling,
        aux_amplitude: Complex64,
    ) -> Self {
        self.extension = Extension::WeakDrive(AuxiliaryMode {
            mode3,
            g3,
            aux_drive: DriveTone::new(aux_amplitude, self.signal.delta),
        });
        self
    }

    pub fn with_parametric(mut self, lambda: Complex64) -> Self {
        self.extension = Extension::Parametric { lambda };
        self
    }

    /// Copy of the config with every tone moved to detuning `delta`.
    pub fn at_detuning(&self, delta: f64) -> Self {
        let mut out = self.clone();
        out.signal.delta = delta;
        if let Extension::WeakDrive(aux) = &mut out.extension {
            aux.aux_drive.delta = delta;
        }
        out
    }

    pub fn kind(&self) -> SchemeKind {
        match self.extension {
            Extension::Baseline => SchemeKind::Baseline,
            Extension::WeakDrive(_) => SchemeKind::WeakDrive,
            Extension::Parametric { .. } => SchemeKind::Parametric,
        }
    }

    pub fn auxiliary(&self) -> Option<&AuxiliaryMode> {
        match &self.extension {
            Extension::WeakDrive(aux) => Some(aux),
            _ => None,
        }
    }

    pub fn auxiliary_mut(&mut self) -> Option<&mut AuxiliaryMode> {
        match &mut self.extension {
            Extension::WeakDrive(aux) => Some(aux),
            _ => None,
        }
    }

    /// Parametric strength, zero for the other schemes.
    pub fn lambda(&self) -> Complex64 {
        match self.extension {
            Extension::Parametric { lambda } => lambda,
            _ => Complex64::new(0.0, 0.0),
        }
    }

    /// Largest rate in the problem (decays, couplings, |λ|, |δ|).
    pub fn max_rate(&self) -> f64 {
        let mut rates = vec![
            self.mode1.kappa,
            self.mode2.kappa,
            self.mech.gamma_m,
            self.g1.g,
            self.g2.g,
            self.signal.delta.abs(),
        ];
        match &self.extension {
            Extension::Baseline => {}
            Extension::WeakDrive(aux) => {
                rates.push(aux.mode3.kappa);
                rates.push(aux.g3.g);
            }
            Extension::Parametric { lambda } => rates.push(lambda.norm()),
        }
        rates.into_iter().fold(0.0, f64::max)
    }

    pub fn validate(&self) -> Result<()> {
        self.mode1.validate("mode1")?;
        self.mode2.validate("mode2")?;
        self.mech.validate()?;
        self.g1.validate("g1.g")?;
        self.g2.validate("g2.g")?;
        self.signal.validate("signal")?;
        match &self.extension {
            Extension::Baseline => {}
            Extension::WeakDrive(aux) => {
                aux.mode3.validate("mode3")?;
                aux.g3.validate("g3.g")?;
                aux.aux_drive.validate("aux_drive")?;
                if aux.aux_drive.delta != self.signal.delta {
                    return Err(Error::invalid(
                        "aux_drive.delta",
                        format!(
                            "aux_drive.delta = signal.delta violated ({} vs {})",
                            aux.aux_drive.delta, self.signal.delta
                        ),
                    ));
                }
            }
            Extension::Parametric { lambda } => finite_complex("lambda", *lambda)?,
        }
        Ok(())
    }
}

/// Dimensionless figures derived from a config.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DerivedParams {
    pub c1: f64,
    pub c2: f64,
    /// Cooperativity of the auxiliary mode (weak-drive scheme only).
    pub c3: Option<f64>,
    /// √(g1² + g2²), the bright-mode coupling rate.
    pub g_total: f64,
    /// Threshold parameter `4|λ|² / (gamma_m² (1 + c1 + c2))` (parametric scheme only).
    pub t: Option<f64>,
}

/// Cooperativity `4 g² / (gamma_m kappa)`.
pub fn cooperativity(g: f64, gamma_m: f64, kappa: f64) -> f64 {
    4.0 * g * g / (gamma_m * kappa)
}

pub fn derive(config: &SchemeConfig) -> Result<DerivedParams> {
    config.validate()?;
    let gamma = config.mech.gamma_m;
    let c1 = cooperativity(config.g1.g, gamma, config.mode1.kappa);
    let c2 = cooperativity(config.g2.g, gamma, config.mode2.kappa);
    let g_total = config.g1.g.hypot(config.g2.g);
    let (c3, t) = match &config.extension {
        Extension::Baseline => (None, None),
        Extension::WeakDrive(aux) => (Some(cooperativity(aux.g3.g, gamma, aux.mode3.kappa)), None),
        Extension::Parametric { lambda } => {
            let t = 4.0 * lambda.norm_sqr() / (gamma * gamma * (1.0 + c1 + c2));
            (None, Some(t))
        }
    };
    Ok(DerivedParams {
        c1,
        c2,
        c3,
        g_total,
        t,
    })
}
