//! Scenario and sweep-spec files.
//!
//! Both are sectioned `key = value` text. `#` starts a comment. Parsing is
//! strict: unknown sections, unknown keys and duplicates are errors, and every
//! error carries the line it refers to.

use std::collections::{BTreeSet, HashMap};
use std::fmt::Write as _;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::model::{
    AuxiliaryMode, Coupling, DriveTone, Extension, MechanicalOscillator, OpticalMode, SchemeConfig,
    SchemeKind,
};
use crate::sweep::{Axis, OutputGroup, SweepSpec};

#[derive(Debug, Clone)]
struct Entry {
    key: String,
    value: String,
    line: usize,
}

#[derive(Debug, Clone)]
struct Section {
    name: String,
    line: usize,
    entries: Vec<Entry>,
}

#[derive(Debug)]
struct Document {
    sections: Vec<Section>,
    last_line: usize,
}

fn tokenize(text: &str) -> Result<Document> {
    let mut sections: Vec<Section> = Vec::new();
    let mut last_line = 0;
    for (index, raw) in text.lines().enumerate() {
        let line = index + 1;
        last_line = line;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        if let Some(rest) = content.strip_prefix('[') {
            let name = rest
                .strip_suffix(']')
                .ok_or_else(|| {
                    Error::parse(line, format!("unterminated section header `{content}`"))
                })?
                .trim();
            if name.is_empty() {
                return Err(Error::parse(line, "empty section name `[]`"));
            }
            if let Some(prev) = sections.iter().find(|s| s.name == name) {
                return Err(Error::parse(
                    line,
                    format!("duplicate section `[{name}]` (first at line {})", prev.line),
                ));
            }
            sections.push(Section {
                name: name.to_string(),
                line,
                entries: Vec::new(),
            });
            continue;
        }
        let (key, value) = content.split_once('=').ok_or_else(|| {
            Error::parse(line, format!("expected `key = value`, got `{content}`"))
        })?;
        let key = key.trim();
        if key.is_empty() {
            return Err(Error::parse(line, format!("missing key in `{content}`")));
        }
        let section = sections
            .last_mut()
            .ok_or_else(|| Error::parse(line, format!("key `{key}` appears before any section")))?;
        if let Some(prev) = section.entries.iter().find(|e| e.key == key) {
            return Err(Error::parse(
                line,
                format!(
                    "duplicate key `{key}` in [{}] (first at line {})",
                    section.name, prev.line
                ),
            ));
        }
        section.entries.push(Entry {
            key: key.to_string(),
            value: value.trim().to_string(),
            line,
        });
    }
    Ok(Document {
        sections,
        last_line,
    })
}

impl Document {
    fn section(&self, name: &str) -> Option<&Section> {
        self.sections.iter().find(|s| s.name == name)
    }

    fn require(&self, name: &str, why: &str) -> Result<&Section> {
        self.section(name).ok_or_else(|| {
            Error::parse(
                self.last_line,
                format!("missing required section [{name}]{why}"),
            )
        })
    }

    fn only_sections(&self, allowed: &[&str]) -> Result<()> {
        match self
            .sections
            .iter()
            .find(|s| !allowed.contains(&s.name.as_str()))
        {
            Some(s) => Err(Error::parse(
                s.line,
                format!(
                    "unknown section `[{}]` (expected one of {})",
                    s.name,
                    allowed.join(", ")
                ),
            )),
            None => Ok(()),
        }
    }
}

impl Section {
    fn only_keys(&self, allowed: &[&str]) -> Result<()> {
        match self
            .entries
            .iter()
            .find(|e| !allowed.contains(&e.key.as_str()))
        {
            Some(e) => Err(Error::parse(
                e.line,
                format!(
                    "unknown key `{}` in [{}] (expected one of {})",
                    e.key,
                    self.name,
                    allowed.join(", ")
                ),
            )),
            None => Ok(()),
        }
    }

    fn get(&self, key: &str) -> Option<&Entry> {
        self.entries.iter().find(|e| e.key == key)
    }

    fn require(&self, key: &str) -> Result<&Entry> {
        self.get(key).ok_or_else(|| {
            Error::parse(
                self.line,
                format!("missing required key `{key}` in [{}]", self.name),
            )
        })
    }

    fn real(&self, key: &str) -> Result<f64> {
        let e = self.require(key)?;
        parse_real(&e.value).map_err(|m| Error::parse(e.line, m))
    }

    fn real_or(&self, key: &str, default: f64) -> Result<f64> {
        match self.get(key) {
            Some(e) => parse_real(&e.value).map_err(|m| Error::parse(e.line, m)),
            None => Ok(default),
        }
    }

    fn complex(&self, key: &str) -> Result<Complex64> {
        let e = self.require(key)?;
        parse_complex(&e.value).map_err(|m| Error::parse(e.line, m))
    }
}

fn parse_real(token: &str) -> std::result::Result<f64, String> {
    let looks_numeric = !token.is_empty()
        && token
            .chars()
            .all(|c| c.is_ascii_digit() || matches!(c, '+' | '-' | '.' | 'e' | 'E'));
    match token.parse::<f64>() {
        Ok(v) if looks_numeric && v.is_finite() => Ok(v),
        _ => Err(format!("expected a finite decimal number, got `{token}`")),
    }
}

/// Parse `a`, `bi`, `a+bi` or `a-bi` (spaces allowed around the sign).
pub fn parse_complex(token: &str) -> std::result::Result<Complex64, String> {
    let bad =
        || format!("expected a complex number like `1.5`, `2i` or `1.5-0.25i`, got `{token}`");
    let pieces: Vec<&str> = token.split_whitespace().collect();
    let sign_joint = |a: &str, b: &str| a.ends_with(['+', '-']) || b.starts_with(['+', '-']);
    if pieces.windows(2).any(|w| !sign_joint(w[0], w[1])) {
        return Err(bad());
    }
    let compact = pieces.concat();
    let Some(body) = compact.strip_suffix('i') else {
        return parse_real(&compact)
            .map(|re| Complex64::new(re, 0.0))
            .map_err(|_| bad());
    };
    // Split at the last sign that is not the leading sign or part of an exponent.
    let bytes = body.as_bytes();
    let split = (1..bytes.len())
        .rev()
        .find(|&k| matches!(bytes[k], b'+' | b'-') && !matches!(bytes[k - 1], b'e' | b'E'));
    let (re_text, im_text) = match split {
        Some(k) => (&body[..k], &body[k..]),
        None => ("", body),
    };
    let re = if re_text.is_empty() {
        0.0
    } else {
        parse_real(re_text).map_err(|_| bad())?
    };
    let im = match im_text {
        "" | "+" => 1.0,
        "-" => -1.0,
        t => parse_real(t).map_err(|_| bad())?,
    };
    Ok(Complex64::new(re, im))
}

/// Shortest text that parses back to exactly `x`.
pub fn format_real(x: f64) -> String {
    let a = x.abs();
    if a == 0.0 || (1e-4..1e16).contains(&a) {
        format!("{x}")
    } else {
        format!("{x:e}")
    }
}

pub fn format_complex(z: Complex64) -> String {
    if z.im == 0.0 && z.im.is_sign_positive() {
        return format_real(z.re);
    }
    let sign = if z.im.is_sign_negative() { '-' } else { '+' };
    format!("{}{sign}{}i", format_real(z.re), format_real(z.im.abs()))
}

const SCENARIO_SECTIONS: &[&str] = &[
    "scheme",
    "mode.1",
    "mode.2",
    "mode.3",
    "mech",
    "coupling",
    "signal",
    "aux_drive",
    "parametric",
];

/// Map from validation-error parameter names to the line that set them.
type LineIndex = HashMap<String, usize>;

fn read_mode(
    doc: &Document,
    index: &mut LineIndex,
    n: u8,
    default_label: &str,
    why: &str,
) -> Result<OpticalMode> {
    let s = doc.require(&format!("mode.{n}"), why)?;
    s.only_keys(&["label", "kappa", "kappa_ext"])?;
    for e in &s.entries {
        index.insert(format!("mode{n}.{}", e.key), e.line);
    }
    let label = s
        .get("label")
        .map(|e| e.value.clone())
        .unwrap_or_else(|| default_label.to_string());
    if label.is_empty() || label.contains(['#', '=', '[', ']']) {
        let line = s.get("label").map_or(s.line, |e| e.line);
        return Err(Error::parse(line, format!("invalid label `{label}`")));
    }
    Ok(OpticalMode {
        label,
        kappa: s.real("kappa")?,
        kappa_ext: s.real("kappa_ext")?,
    })
}

/// Parse scenario text into a validated config.
pub fn parse_scenario(text: &str) -> Result<SchemeConfig> {
    let doc = tokenize(text)?;
    doc.only_sections(SCENARIO_SECTIONS)?;
    let mut index = LineIndex::new();

    let scheme = doc.require("scheme", "")?;
    scheme.only_keys(&["kind"])?;
    let kind_entry = scheme.require("kind")?;
    let kind: SchemeKind = kind_entry.value.parse().map_err(|_| {
        Error::parse(
            kind_entry.line,
            format!(
                "unknown scheme kind `{}` (expected baseline, weak_drive or parametric)",
                kind_entry.value
            ),
        )
    })?;

    for (name, owner) in [
        ("mode.3", SchemeKind::WeakDrive),
        ("aux_drive", SchemeKind::WeakDrive),
        ("parametric", SchemeKind::Parametric),
    ] {
        if let Some(s) = doc.section(name) {
            if kind != owner {
                return Err(Error::parse(
                    s.line,
                    format!("section [{name}] only applies to the {owner} scheme, not {kind}"),
                ));
            }
        }
    }

    let why3 = " (needed by the weak_drive scheme)";
    let mode1 = read_mode(&doc, &mut index, 1, "a1", "")?;
    let mode2 = read_mode(&doc, &mut index, 2, "a2", "")?;

    let mech = doc.require("mech", "")?;
    mech.only_keys(&["gamma_m"])?;
    index.extend(
        mech.entries
            .iter()
            .map(|e| (format!("mech.{}", e.key), e.line)),
    );
    let mech = MechanicalOscillator {
        gamma_m: mech.real("gamma_m")?,
    };

    let coupling = doc.require("coupling", "")?;
    if kind == SchemeKind::WeakDrive {
        coupling.only_keys(&["g1", "g2", "g3"])?;
    } else if let Some(e) = coupling.get("g3") {
        return Err(Error::parse(
            e.line,
            format!("key `g3` only applies to the weak_drive scheme, not {kind}"),
        ));
    } else {
        coupling.only_keys(&["g1", "g2"])?;
    }
    index.extend(
        coupling
            .entries
            .iter()
            .map(|e| (format!("{}.g", e.key), e.line)),
    );

    let signal = doc.require("signal", "")?;
    signal.only_keys(&["amplitude", "delta"])?;
    index.extend(
        signal
            .entries
            .iter()
            .map(|e| (format!("signal.{}", e.key), e.line)),
    );
    let signal_tone = DriveTone::new(signal.complex("amplitude")?, signal.real_or("delta", 0.0)?);

    let extension = match kind {
        SchemeKind::Baseline => Extension::Baseline,
        SchemeKind::WeakDrive => {
            let mode3 = read_mode(&doc, &mut index, 3, "a3", why3)?;
            let aux = doc.require("aux_drive", why3)?;
            aux.only_keys(&["amplitude", "delta"])?;
            index.extend(
                aux.entries
                    .iter()
                    .map(|e| (format!("aux_drive.{}", e.key), e.line)),
            );
            Extension::WeakDrive(AuxiliaryMode {
                mode3,
                g3: Coupling::new(coupling.real("g3")?),
                aux_drive: DriveTone::new(
                    aux.complex("amplitude")?,
                    aux.real_or("delta", signal_tone.delta)?,
                ),
            })
        }
        SchemeKind::Parametric => {
            let p = doc.require("parametric", " (needed by the parametric scheme)")?;
            p.only_keys(&["lambda"])?;
            index.extend(p.entries.iter().map(|e| (e.key.clone(), e.line)));
            Extension::Parametric {
                lambda: p.complex("lambda")?,
            }
        }
    };

    let config = SchemeConfig {
        mode1,
        mode2,
        mech,
        g1: Coupling::new(coupling.real("g1")?),
        g2: Coupling::new(coupling.real("g2")?),
        signal: signal_tone,
        extension,
    };
    config.validate().map_err(|e| match e {
        Error::InvalidParameter { name, reason } => {
            let line = index.get(&name).copied().unwrap_or(doc.last_line);
            Error::parse(line, format!("{name}: {reason}"))
        }
        other => other,
    })?;
    Ok(config)
}

/// Canonical scenario text. `parse_scenario(&render_scenario(c))` returns `c`.
pub fn render_scenario(config: &SchemeConfig) -> String {
    let mut out = String::new();
    let mode = |out: &mut String, n: u8, m: &OpticalMode| {
        let _ = writeln!(
            out,
            "\n[mode.{n}]\nlabel = {}\nkappa = {}\nkappa_ext = {}",
            m.label,
            format_real(m.kappa),
            format_real(m.kappa_ext)
        );
    };
    let _ = writeln!(out, "[scheme]\nkind = {}", config.kind());
    mode(&mut out, 1, &config.mode1);
    mode(&mut out, 2, &config.mode2);
    if let Some(aux) = config.auxiliary() {
        mode(&mut out, 3, &aux.mode3);
    }
    let _ = writeln!(
        out,
        "\n[mech]\ngamma_m = {}",
        format_real(config.mech.gamma_m)
    );
    let _ = writeln!(
        out,
        "\n[coupling]\ng1 = {}\ng2 = {}",
        format_real(config.g1.g),
        format_real(config.g2.g)
    );
    if let Some(aux) = config.auxiliary() {
        let _ = writeln!(out, "g3 = {}", format_real(aux.g3.g));
    }
    let _ = writeln!(
        out,
        "\n[signal]\namplitude = {}\ndelta = {}",
        format_complex(config.signal.amplitude),
        format_real(config.signal.delta)
    );
    match &config.extension {
        Extension::Baseline => {}
        Extension::WeakDrive(aux) => {
            let _ = writeln!(
                out,
                "\n[aux_drive]\namplitude = {}\ndelta = {}",
                format_complex(aux.aux_drive.amplitude),
                format_real(aux.aux_drive.delta)
            );
        }
        Extension::Parametric { lambda } => {
            let _ = writeln!(out, "\n[parametric]\nlambda = {}", format_complex(*lambda));
        }
    }
    out
}

fn parse_list(entry: &Entry) -> Result<Vec<f64>> {
    if entry.value.is_empty() {
        return Ok(Vec::new());
    }
    entry
        .value
        .split(',')
        .map(|t| parse_real(t.trim()).map_err(|m| Error::parse(entry.line, m)))
        .collect()
}

/// Values from either `values = a, b, ...` or `start`/`stop`/`count` with an
/// optional `spacing = linear | log`.
fn parse_grid(s: &Section) -> Result<Vec<f64>> {
    if let Some(values) = s.get("values") {
        if let Some(e) = ["start", "stop", "count", "spacing"]
            .iter()
            .find_map(|k| s.get(k))
        {
            return Err(Error::parse(
                e.line,
                format!(
                    "[{}] takes either `values` or `start`/`stop`/`count`, not both",
                    s.name
                ),
            ));
        }
        return parse_list(values);
    }
    let start = s.real("start")?;
    let stop = s.real("stop")?;
    let count_entry = s.require("count")?;
    let count: usize = count_entry.value.parse().map_err(|_| {
        Error::parse(
            count_entry.line,
            format!(
                "expected a non-negative integer, got `{}`",
                count_entry.value
            ),
        )
    })?;
    let log = match s.get("spacing") {
        None => false,
        Some(e) => match e.value.as_str() {
            "linear" => false,
            "log" => true,
            other => {
                return Err(Error::parse(
                    e.line,
                    format!("spacing must be `linear` or `log`, got `{other}`"),
                ))
            }
        },
    };
    if log && (start <= 0.0 || stop <= 0.0) {
        return Err(Error::parse(
            s.line,
            format!("log spacing needs start > 0 and stop > 0 in [{}]", s.name),
        ));
    }
    let point = |k: usize| -> f64 {
        if count == 1 {
            return start;
        }
        if k == count - 1 {
            return stop;
        }
        let f = k as f64 / (count - 1) as f64;
        if log {
            (start.ln() + f * (stop.ln() - start.ln())).exp()
        } else {
            start + f * (stop - start)
        }
    };
    Ok((0..count).map(point).collect())
}

fn parse_axis(s: &Section) -> Result<Axis> {
    s.only_keys(&["paths", "values", "start", "stop", "count", "spacing"])?;
    let paths_entry = s.require("paths")?;
    let paths: Vec<String> = paths_entry
        .value
        .split(',')
        .map(|p| p.trim().to_string())
        .collect();
    if paths.iter().any(String::is_empty) {
        return Err(Error::parse(
            paths_entry.line,
            format!("empty parameter path in `{}`", paths_entry.value),
        ));
    }
    Ok(Axis {
        paths,
        values: parse_grid(s)?,
    })
}

/// Parse a sweep-spec file against a base config.
pub fn parse_sweep_spec(text: &str, base_config: SchemeConfig) -> Result<SweepSpec> {
    let doc = tokenize(text)?;
    doc.only_sections(&["axis1", "axis2", "delta", "options"])?;
    let axis1_section = doc.require("axis1", "")?;
    let axis1 = parse_axis(axis1_section)?;
    let axis2 = doc.section("axis2").map(parse_axis).transpose()?;
    let delta_grid = match doc.section("delta") {
        Some(s) => {
            s.only_keys(&["values", "start", "stop", "count", "spacing"])?;
            if s.get("spacing").is_some_and(|e| e.value == "log") {
                return Err(Error::parse(
                    s.get("spacing").unwrap().line,
                    "detuning grids must use linear spacing",
                ));
            }
            parse_grid(s)?
        }
        None => vec![base_config.signal.delta],
    };
    let mut spec = SweepSpec::new(base_config, axis1, delta_grid);
    spec.axis2 = axis2;
    if let Some(opts) = doc.section("options") {
        opts.only_keys(&["apply_nulling", "outputs"])?;
        if let Some(e) = opts.get("apply_nulling") {
            spec.apply_nulling = match e.value.as_str() {
                "true" => true,
                "false" => false,
                other => {
                    return Err(Error::parse(
                        e.line,
                        format!("expected `true` or `false`, got `{other}`"),
                    ))
                }
            };
        }
        if let Some(e) = opts.get("outputs") {
            spec.outputs = e
                .value
                .split(',')
                .map(|t| {
                    t.trim()
                        .parse::<OutputGroup>()
                        .map_err(|err| Error::parse(e.line, err.to_string()))
                })
                .collect::<Result<BTreeSet<_>>>()?;
        }
    }
    let locate = |path: &str| -> usize {
        for (name, axis) in [("axis1", Some(&spec.axis1)), ("axis2", spec.axis2.as_ref())] {
            if axis.is_some_and(|a| a.paths.iter().any(|p| p == path)) {
                if let Some(e) = doc.section(name).and_then(|s| s.get("paths")) {
                    return e.line;
                }
            }
        }
        axis1_section.line
    };
    spec.validate().map_err(|e| match e {
        Error::UnknownPath(p) => Error::parse(locate(&p), format!("unknown parameter path `{p}`")),
        Error::InvalidParameter { name, reason } => {
            Error::parse(locate(&name), format!("{name}: {reason}"))
        }
        other => other,
    })?;
    Ok(spec)
}
