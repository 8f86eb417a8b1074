//! Parameter sweeps and detuning spectra, written out as CSV plus a JSON
//! summary.
//!
//! Grid points are independent and evaluated in parallel; rows always come
//! back in row-major grid order (axis 1, then axis 2, then detuning).

use std::collections::BTreeSet;
use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::closedform::apply_nulling;
use crate::error::{Error, Result};
use crate::linsys::{
    bright_dark_decompose, input_output, solve_config, stability, variable_labels,
};
use crate::model::{derive, Coupling, SchemeConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputGroup {
    Amplitudes,
    BrightDark,
    Chi,
    Flux,
    Stability,
}

impl OutputGroup {
    pub const ALL: [OutputGroup; 5] = [
        OutputGroup::Amplitudes,
        OutputGroup::BrightDark,
        OutputGroup::Chi,
        OutputGroup::Flux,
        OutputGroup::Stability,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            OutputGroup::Amplitudes => "amplitudes",
            OutputGroup::BrightDark => "bright_dark",
            OutputGroup::Chi => "chi",
            OutputGroup::Flux => "flux",
            OutputGroup::Stability => "stability",
        }
    }
}

impl fmt::Display for OutputGroup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for OutputGroup {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        OutputGroup::ALL
            .into_iter()
            .find(|g| g.as_str() == s)
            .ok_or_else(|| Error::invalid("outputs", format!("unknown output group `{s}`")))
    }
}

/// One sweep axis. Every path in `paths` is set to the same value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub paths: Vec<String>,
    pub values: Vec<f64>,
}

impl Axis {
    pub fn new(paths: &[&str], values: Vec<f64>) -> Self {
        Axis {
            paths: paths.iter().map(|s| s.to_string()).collect(),
            values,
        }
    }

    /// Column name: the paths joined with `+`.
    pub fn name(&self) -> String {
        self.paths.join("+")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub base_config: SchemeConfig,
    pub axis1: Axis,
    pub axis2: Option<Axis>,
    pub delta_grid: Vec<f64>,
    /// Re-solve the scheme's nulling condition at every grid point.
    pub apply_nulling: bool,
    pub outputs: BTreeSet<OutputGroup>,
}

impl SweepSpec {
    pub fn new(base_config: SchemeConfig, axis1: Axis, delta_grid: Vec<f64>) -> Self {
        SweepSpec {
            base_config,
            axis1,
            axis2: None,
            delta_grid,
            apply_nulling: false,
            outputs: OutputGroup::ALL.into_iter().collect(),
        }
    }

    fn axes(&self) -> impl Iterator<Item = &Axis> {
        std::iter::once(&self.axis1).chain(self.axis2.as_ref())
    }

    pub fn row_count(&self) -> usize {
        self.axes().map(|a| a.values.len()).product::<usize>() * self.delta_grid.len()
    }

    /// Check every axis value is finite and every path resolves.
    pub fn validate(&self) -> Result<()> {
        self.base_config.validate()?;
        for axis in self.axes() {
            if axis.paths.is_empty() {
                return Err(Error::invalid(
                    "axis",
                    "an axis needs at least one parameter path",
                ));
            }
            for path in &axis.paths {
                check_path(&self.base_config, path)?;
            }
            if let Some(v) = axis.values.iter().find(|v| !v.is_finite()) {
                return Err(Error::invalid(
                    axis.name(),
                    format!("axis value {v} is not finite"),
                ));
            }
        }
        if let Some(v) = self.delta_grid.iter().find(|v| !v.is_finite()) {
            return Err(Error::invalid(
                "delta",
                format!("detuning {v} is not finite"),
            ));
        }
        Ok(())
    }

    /// Config at one grid point, before nulling and detuning are applied.
    pub fn config_at(&self, axis_values: &[f64]) -> Result<SchemeConfig> {
        let mut assignments: Vec<(&str, f64)> = Vec::new();
        for (axis, &value) in self.axes().zip(axis_values) {
            for path in &axis.paths {
                assignments.push((path, value));
            }
        }
        // Plain fields first, then fields derived from them.
        assignments.sort_by_key(|(path, _)| path_rank(path));
        let mut config = self.base_config.clone();
        for (path, value) in assignments {
            set_parameter(&mut config, path, value)?;
        }
        config.validate().map_err(|e| match e {
            Error::InvalidParameter { name, reason } => Error::InvalidParameter {
                name,
                reason: format!("{reason} at grid point {axis_values:?}"),
            },
            other => other,
        })?;
        Ok(config)
    }
}

/// Parameter paths accepted by sweeps.
pub const PARAMETER_PATHS: &[&str] = &[
    "mode1.kappa",
    "mode1.kappa_ext",
    "mode1.eta",
    "mode2.kappa",
    "mode2.kappa_ext",
    "mode2.eta",
    "mode3.kappa",
    "mode3.kappa_ext",
    "mode3.eta",
    "mech.gamma_m",
    "g1.g",
    "g2.g",
    "g3.g",
    "coop.c1",
    "coop.c2",
    "coop.c3",
    "signal.amplitude",
    "aux_drive.amplitude",
    "lambda",
    "parametric.t",
];

fn path_rank(path: &str) -> u8 {
    if path.ends_with(".eta") {
        1
    } else if path.starts_with("coop.") {
        2
    } else if path == "parametric.t" {
        3
    } else {
        0
    }
}

fn check_path(config: &SchemeConfig, path: &str) -> Result<()> {
    let mut probe = config.clone();
    set_parameter(&mut probe, path, 1.0)
}

/// Rescale a complex value to magnitude `value`, keeping its phase (real if zero).
fn with_magnitude(current: Complex64, value: f64) -> Complex64 {
    if current.norm() > 0.0 {
        current * (value / current.norm())
    } else {
        Complex64::new(value, 0.0)
    }
}

/// Set the field named by a dotted path.
///
/// `coop.cN` sets `gN` from the current `gamma_m` and `kappaN`; `*.eta` sets
/// `kappa_ext` from the current `kappa`; `parametric.t` sets |λ| from the
/// current cooperativities. Amplitude and `lambda` paths set magnitudes and
/// keep phases.
pub fn set_parameter(config: &mut SchemeConfig, path: &str, value: f64) -> Result<()> {
    let unknown = || Error::UnknownPath(path.to_string());
    let needs =
        |what: &str| Error::invalid(path, format!("path only applies to the {what} scheme"));
    let gamma = config.mech.gamma_m;
    match path {
        "mode1.kappa" => config.mode1.kappa = value,
        "mode1.kappa_ext" => config.mode1.kappa_ext = value,
        "mode1.eta" => config.mode1.kappa_ext = value * config.mode1.kappa,
        "mode2.kappa" => config.mode2.kappa = value,
        "mode2.kappa_ext" => config.mode2.kappa_ext = value,
        "mode2.eta" => config.mode2.kappa_ext = value * config.mode2.kappa,
        "mech.gamma_m" => config.mech.gamma_m = value,
        "g1.g" => config.g1.g = value,
        "g2.g" => config.g2.g = value,
        "coop.c1" => config.g1 = Coupling::from_cooperativity(value, gamma, config.mode1.kappa),
        "coop.c2" => config.g2 = Coupling::from_cooperativity(value, gamma, config.mode2.kappa),
        "signal.amplitude" => {
            config.signal.amplitude = with_magnitude(config.signal.amplitude, value)
        }
        "mode3.kappa"
        | "mode3.kappa_ext"
        | "mode3.eta"
        | "g3.g"
        | "coop.c3"
        | "aux_drive.amplitude" => {
            let aux = config.auxiliary_mut().ok_or_else(|| needs("weak_drive"))?;
            match path {
                "mode3.kappa" => aux.mode3.kappa = value,
                "mode3.kappa_ext" => aux.mode3.kappa_ext = value,
                "mode3.eta" => aux.mode3.kappa_ext = value * aux.mode3.kappa,
                "g3.g" => aux.g3.g = value,
                "coop.c3" => aux.g3 = Coupling::from_cooperativity(value, gamma, aux.mode3.kappa),
                _ => aux.aux_drive.amplitude = with_magnitude(aux.aux_drive.amplitude, value),
            }
        }
        "lambda" | "parametric.t" => {
            let current = match &config.extension {
                crate::model::Extension::Parametric { lambda } => *lambda,
                _ => return Err(needs("parametric")),
            };
            let magnitude = if path == "lambda" {
                value
            } else {
                let p = derive(config)?;
                0.5 * gamma * (value * (1.0 + p.c1 + p.c2)).max(0.0).sqrt()
            };
            config.extension = crate::model::Extension::Parametric {
                lambda: with_magnitude(current, magnitude),
            };
        }
        _ => return Err(unknown()),
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FluxLedger {
    pub flux_in: f64,
    pub flux_out: f64,
    pub flux_internal_loss: f64,
    pub flux_mechanical: f64,
    pub flux_parametric: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub axis_values: Vec<f64>,
    pub delta: f64,
    /// Solved amplitudes in [`crate::linsys::variable_labels`] order; `None`
    /// at unstable or degenerate points.
    pub amplitudes: Option<Vec<Complex64>>,
    pub abs2_bright: Option<f64>,
    pub abs2_dark: Option<f64>,
    pub chi: Option<f64>,
    pub flux: Option<FluxLedger>,
    pub stable: bool,
    /// Auxiliary amplitude or λ set by the nulling condition.
    pub nulling: Option<Complex64>,
}

fn grid(spec: &SweepSpec) -> Vec<(Vec<f64>, f64)> {
    let second: Vec<Option<f64>> = match &spec.axis2 {
        Some(axis) => axis.values.iter().copied().map(Some).collect(),
        None => vec![None],
    };
    let mut points = Vec::with_capacity(spec.row_count());
    for &v1 in &spec.axis1.values {
        for v2 in &second {
            for &delta in &spec.delta_grid {
                let mut values = vec![v1];
                values.extend(*v2);
                points.push((values, delta));
            }
        }
    }
    points
}

fn evaluate(spec: &SweepSpec, axis_values: Vec<f64>, delta: f64) -> Result<SweepRow> {
    let config = spec.config_at(&axis_values)?.at_detuning(delta);
    let (config, nulling) = if spec.apply_nulling {
        apply_nulling(&config)?
    } else {
        (config, None)
    };
    let mut row = SweepRow {
        axis_values,
        delta,
        amplitudes: None,
        abs2_bright: None,
        abs2_dark: None,
        chi: None,
        flux: None,
        stable: stability(&config).stable,
        nulling,
    };
    if !row.stable {
        return Ok(row);
    }
    let state = match solve_config(&config, delta) {
        Ok(state) => state,
        Err(Error::Degenerate(_)) => return Ok(row),
        Err(e) => return Err(e),
    };
    let report = input_output(&state, &config);
    if let Ok(bd) = bright_dark_decompose(&state, &config) {
        row.abs2_bright = Some(bd.alpha_b.norm_sqr());
        row.abs2_dark = Some(bd.alpha_d.norm_sqr());
    }
    row.amplitudes = Some(state.amplitudes.iter().copied().collect());
    row.chi = Some(report.chi);
    row.flux = Some(FluxLedger {
        flux_in: report.flux_in,
        flux_out: report.flux_out,
        flux_internal_loss: report.flux_internal_loss,
        flux_mechanical: report.flux_mechanical,
        flux_parametric: report.flux_parametric,
    });
    Ok(row)
}

/// Evaluate every grid point on the global rayon pool.
pub fn run_sweep(spec: &SweepSpec) -> Result<Vec<SweepRow>> {
    spec.validate()?;
    grid(spec)
        .into_par_iter()
        .map(|(values, delta)| evaluate(spec, values, delta))
        .collect()
}

/// Like [`run_sweep`], on a dedicated pool of `threads` workers.
pub fn run_sweep_with_threads(spec: &SweepSpec, threads: usize) -> Result<Vec<SweepRow>> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .map_err(|e| Error::invalid("threads", e.to_string()))?;
    pool.install(|| run_sweep(spec))
}

/// 17 significant digits in exponent form, enough to round-trip any f64.
pub fn format_number(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn csv_header(spec: &SweepSpec) -> Vec<String> {
    let mut header: Vec<String> = spec.axes().map(Axis::name).collect();
    header.push("delta".into());
    if spec.outputs.contains(&OutputGroup::Amplitudes) {
        for label in variable_labels(spec.base_config.kind()) {
            header.push(format!("re_{label}"));
            header.push(format!("im_{label}"));
        }
    }
    if spec.outputs.contains(&OutputGroup::BrightDark) {
        header.push("abs2_bright".into());
        header.push("abs2_dark".into());
    }
    if spec.outputs.contains(&OutputGroup::Chi) {
        header.push("chi".into());
    }
    if spec.outputs.contains(&OutputGroup::Flux) {
        for name in [
            "flux_in",
            "flux_out",
            "flux_internal_loss",
            "flux_mechanical",
            "flux_parametric",
        ] {
            header.push(name.into());
        }
    }
    if spec.outputs.contains(&OutputGroup::Stability) {
        header.push("stable".into());
    }
    if spec.apply_nulling {
        header.push("nulling_re".into());
        header.push("nulling_im".into());
    }
    header
}

fn optional(x: Option<f64>) -> String {
    x.map(format_number).unwrap_or_default()
}

fn csv_record(spec: &SweepSpec, row: &SweepRow) -> Vec<String> {
    let mut rec: Vec<String> = row.axis_values.iter().copied().map(format_number).collect();
    rec.push(format_number(row.delta));
    if spec.outputs.contains(&OutputGroup::Amplitudes) {
        let n = variable_labels(spec.base_config.kind()).len();
        for k in 0..n {
            let z = row.amplitudes.as_ref().map(|a| a[k]);
            rec.push(optional(z.map(|z| z.re)));
            rec.push(optional(z.map(|z| z.im)));
        }
    }
    if spec.outputs.contains(&OutputGroup::BrightDark) {
        rec.push(optional(row.abs2_bright));
        rec.push(optional(row.abs2_dark));
    }
    if spec.outputs.contains(&OutputGroup::Chi) {
        rec.push(optional(row.chi));
    }
    if spec.outputs.contains(&OutputGroup::Flux) {
        let f = row.flux;
        rec.push(optional(f.map(|f| f.flux_in)));
        rec.push(optional(f.map(|f| f.flux_out)));
        rec.push(optional(f.map(|f| f.flux_internal_loss)));
        rec.push(optional(f.map(|f| f.flux_mechanical)));
        rec.push(optional(f.map(|f| f.flux_parametric)));
    }
    if spec.outputs.contains(&OutputGroup::Stability) {
        rec.push(row.stable.to_string());
    }
    if spec.apply_nulling {
        rec.push(optional(row.nulling.map(|z| z.re)));
        rec.push(optional(row.nulling.map(|z| z.im)));
    }
    rec
}

pub fn write_csv_to<W: Write>(spec: &SweepSpec, rows: &[SweepRow], writer: W) -> Result<()> {
    let io = |e: csv::Error| Error::Io {
        path: "csv".into(),
        message: e.to_string(),
    };
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(csv_header(spec)).map_err(io)?;
    for row in rows {
        w.write_record(csv_record(spec, row)).map_err(io)?;
    }
    w.flush().map_err(|e| Error::Io {
        path: "csv".into(),
        message: e.to_string(),
    })
}

pub fn write_csv(spec: &SweepSpec, rows: &[SweepRow], destination: &Path) -> Result<()> {
    let file = create(destination)?;
    write_csv_to(spec, rows, BufWriter::new(file)).map_err(|e| relabel(e, destination))
}

fn create(destination: &Path) -> Result<File> {
    File::create(destination).map_err(|e| Error::Io {
        path: destination.display().to_string(),
        message: e.to_string(),
    })
}

fn relabel(e: Error, destination: &Path) -> Error {
    match e {
        Error::Io { message, .. } => Error::Io {
            path: destination.display().to_string(),
            message,
        },
        other => other,
    }
}

/// JSON summary: config echo, derived figures, nulling values and χ extrema.
pub fn summary(spec: &SweepSpec, rows: &[SweepRow]) -> Result<serde_json::Value> {
    let derived = derive(&spec.base_config)?;
    let nulling: Vec<serde_json::Value> = rows
        .iter()
        .filter_map(|r| {
            r.nulling
                .map(|z| json!({ "axis_values": r.axis_values, "delta": r.delta, "re": z.re, "im": z.im }))
        })
        .collect();
    let chi_rows: Vec<(&SweepRow, f64)> =
        rows.iter().filter_map(|r| r.chi.map(|c| (r, c))).collect();
    let chi = if chi_rows.is_empty() {
        serde_json::Value::Null
    } else {
        // First occurrence wins on ties.
        let (min_row, min) =
            chi_rows.iter().fold(
                chi_rows[0],
                |best, &(r, c)| if c < best.1 { (r, c) } else { best },
            );
        let (max_row, max) =
            chi_rows.iter().fold(
                chi_rows[0],
                |best, &(r, c)| if c > best.1 { (r, c) } else { best },
            );
        json!({
            "min": min,
            "max": max,
            "argmin": { "axis_values": min_row.axis_values, "delta": min_row.delta },
            "argmax": { "axis_values": max_row.axis_values, "delta": max_row.delta },
        })
    };
    Ok(json!({
        "scheme": spec.base_config.kind(),
        "config": spec.base_config,
        "derived": derived,
        "axes": spec.axes().collect::<Vec<_>>(),
        "delta_points": spec.delta_grid.len(),
        "apply_nulling": spec.apply_nulling,
        "rows": rows.len(),
        "unstable_rows": rows.iter().filter(|r| !r.stable).count(),
        "nulling": nulling,
        "chi": chi,
    }))
}

pub fn write_json_summary(spec: &SweepSpec, rows: &[SweepRow], destination: &Path) -> Result<()> {
    let value = summary(spec, rows)?;
    let mut w = BufWriter::new(create(destination)?);
    serde_json::to_writer_pretty(&mut w, &value)
        .map_err(|e| Error::Io {
            path: destination.display().to_string(),
            message: e.to_string(),
        })
        .and_then(|_| {
            w.write_all(b"\n")
                .and_then(|_| w.flush())
                .map_err(|e| Error::Io {
                    path: destination.display().to_string(),
                    message: e.to_string(),
                })
        })
}
