use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Parser, Subcommand};
use serde::Serialize;
use serde_json::json;

use darkline_core::linsys::variable_labels;
use darkline_core::{
    apply_nulling, bright_dark_closed_form, bright_dark_decompose, derive, efficiency_closed_form,
    input_output, instability_threshold, parse_scenario, parse_sweep_spec, random_suite, run_suite,
    run_sweep, run_sweep_with_threads, solve_config, stability, write_csv, write_json_summary,
    Complex64, Extension, IntegrationSpec, PropertyOutcome, SchemeConfig, SchemeKind, SuiteOptions,
    TransferReport,
};

/// Conversion between two cavities through an optomechanical dark mode.
#[derive(Parser)]
#[command(name = "darkline", version, about)]
struct Cli {
    /// Print machine-readable JSON on standard output.
    #[arg(long, global = true)]
    json: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the steady state at one detuning and print the transfer report.
    Steady {
        scenario: PathBuf,
        /// Detuning; defaults to the scenario's signal detuning.
        #[arg(long, allow_hyphen_values = true)]
        delta: Option<f64>,
        /// Apply the scheme's bright-mode nulling condition first.
        #[arg(long)]
        apply_nulling: bool,
    },
    /// Run a parameter sweep and write CSV rows plus a JSON summary.
    Sweep {
        scenario: PathBuf,
        sweep_spec: PathBuf,
        #[arg(long)]
        out_csv: PathBuf,
        #[arg(long)]
        out_json: Option<PathBuf>,
    },
    /// Solve the nulling condition (auxiliary amplitude or parametric strength).
    SolveCondition { scenario: PathBuf },
    /// Run the property suite on a scenario or on seeded random configs.
    Verify {
        #[arg(required_unless_present = "random", conflicts_with = "random")]
        scenario: Option<PathBuf>,
        /// Random configs per scheme.
        #[arg(long)]
        random: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Locate the parametric instability threshold in |λ| by bisection.
    Stability {
        scenario: PathBuf,
        /// Bracket `lo,hi` for |λ|; defaults to `0,2·gamma_m(1+C1+C2)/2`.
        #[arg(long, value_parser = parse_range, allow_hyphen_values = true)]
        lambda_range: Option<(f64, f64)>,
    },
}

fn parse_range(text: &str) -> std::result::Result<(f64, f64), String> {
    let (lo, hi) = text.split_once(',').ok_or("expected `lo,hi`")?;
    let num = |t: &str| {
        t.trim()
            .parse::<f64>()
            .map_err(|e| format!("`{}`: {e}", t.trim()))
    };
    Ok((num(lo)?, num(hi)?))
}

/// Outcome of a command that ran to completion.
enum Status {
    Ok,
    /// Checks ran and some failed.
    Failed,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(Status::Ok) => ExitCode::SUCCESS,
        Ok(Status::Failed) => ExitCode::from(1),
        Err(e) => {
            if cli.json {
                let chain: Vec<String> = e.chain().map(|c| c.to_string()).collect();
                println!("{}", json!({ "error": format!("{e:#}"), "causes": chain }));
            }
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: &Cli) -> Result<Status> {
    match &cli.command {
        Command::Steady {
            scenario,
            delta,
            apply_nulling,
        } => steady(cli.json, scenario, *delta, *apply_nulling),
        Command::Sweep {
            scenario,
            sweep_spec,
            out_csv,
            out_json,
        } => sweep(cli.json, scenario, sweep_spec, out_csv, out_json.as_deref()),
        Command::SolveCondition { scenario } => solve_condition(cli.json, scenario),
        Command::Verify {
            scenario,
            random,
            seed,
        } => verify(cli.json, scenario.as_deref(), *random, *seed),
        Command::Stability {
            scenario,
            lambda_range,
        } => stability_cmd(cli.json, scenario, *lambda_range),
    }
}

fn load(path: &Path) -> Result<SchemeConfig> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    parse_scenario(&text).with_context(|| format!("parsing scenario {}", path.display()))
}

fn print_json(value: &impl Serialize) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn complex_text(z: Complex64) -> String {
    format!(
        "{:.10e} {} {:.10e}i",
        z.re,
        if z.im < 0.0 { '-' } else { '+' },
        z.im.abs()
    )
}

#[derive(Serialize)]
struct SteadyOutput {
    #[serde(flatten)]
    report: TransferReport,
    amplitudes: Vec<(String, Complex64)>,
    alpha_bright: Option<Complex64>,
    alpha_dark: Option<Complex64>,
    nulling: Option<Complex64>,
}

fn steady(as_json: bool, scenario: &Path, delta: Option<f64>, nulling: bool) -> Result<Status> {
    let mut config = load(scenario)?;
    let delta = delta.unwrap_or(config.signal.delta);
    config = config.at_detuning(delta);
    let mut used = None;
    if nulling {
        (config, used) = apply_nulling(&config).context("applying the nulling condition")?;
    }
    let state = solve_config(&config, delta)
        .with_context(|| format!("solving the steady state at delta = {delta}"))?;
    let report = input_output(&state, &config);
    let bd = bright_dark_decompose(&state, &config).ok();
    let labels = variable_labels(config.kind());
    let out = SteadyOutput {
        report,
        amplitudes: labels
            .into_iter()
            .zip(state.amplitudes.iter().copied())
            .collect(),
        alpha_bright: bd.map(|b| b.alpha_b),
        alpha_dark: bd.map(|b| b.alpha_d),
        nulling: used,
    };
    if as_json {
        print_json(&out)?;
    } else {
        let r = &out.report;
        println!("scheme      {}", r.scheme);
        println!("delta       {:e}", r.delta);
        if let Some(z) = out.nulling {
            println!("nulling     {}", complex_text(z));
        }
        for (label, z) in &out.amplitudes {
            println!("{label:<11} {}", complex_text(*z));
        }
        if let (Some(b), Some(d)) = (out.alpha_bright, out.alpha_dark) {
            println!("bright      {}", complex_text(b));
            println!("dark        {}", complex_text(d));
        }
        println!("chi         {:.12e}", r.chi);
        println!("flux in     {:.12e}", r.flux_in);
        println!("flux out    {:.12e}", r.flux_out);
        println!("loss        {:.12e}", r.flux_internal_loss);
        println!("mechanical  {:.12e}", r.flux_mechanical);
        if r.scheme == SchemeKind::Parametric {
            println!("pump        {:.12e}", r.flux_parametric);
        }
        println!(
            "stable      {} (slowest rate {:e})",
            r.stable, r.slowest_rate
        );
    }
    Ok(Status::Ok)
}

fn threads_from_env() -> Result<Option<usize>> {
    match std::env::var("DARKLINE_THREADS") {
        Err(std::env::VarError::NotPresent) => Ok(None),
        Err(e) => Err(anyhow!("DARKLINE_THREADS: {e}")),
        Ok(text) => match text.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => bail!("DARKLINE_THREADS must be a positive integer, got `{text}`"),
        },
    }
}

fn sweep(
    as_json: bool,
    scenario: &Path,
    spec_path: &Path,
    out_csv: &Path,
    out_json: Option<&Path>,
) -> Result<Status> {
    let config = load(scenario)?;
    let text = fs::read_to_string(spec_path)
        .with_context(|| format!("reading {}", spec_path.display()))?;
    let spec = parse_sweep_spec(&text, config)
        .with_context(|| format!("parsing sweep spec {}", spec_path.display()))?;
    let rows = match threads_from_env()? {
        Some(n) => run_sweep_with_threads(&spec, n),
        None => run_sweep(&spec),
    }
    .context("running sweep")?;
    write_csv(&spec, &rows, out_csv).context("writing CSV")?;
    if let Some(path) = out_json {
        write_json_summary(&spec, &rows, path).context("writing JSON summary")?;
    }
    let unstable = rows.iter().filter(|r| !r.stable).count();
    if as_json {
        print_json(&json!({
            "rows": rows.len(),
            "unstable_rows": unstable,
            "csv": out_csv,
            "json": out_json,
        }))?;
    } else {
        println!(
            "{} rows ({unstable} unstable) written to {}",
            rows.len(),
            out_csv.display()
        );
        if let Some(path) = out_json {
            println!("summary written to {}", path.display());
        }
    }
    Ok(Status::Ok)
}

fn solve_condition(as_json: bool, scenario: &Path) -> Result<Status> {
    let config = load(scenario)?;
    if config.kind() == SchemeKind::Baseline {
        bail!(
            "the baseline scheme has no nulling condition; use a weak_drive or parametric scenario"
        );
    }
    let config = config.at_detuning(0.0);
    let (nulled, value) = apply_nulling(&config).context("solving the nulling condition")?;
    let value = value.ok_or_else(|| anyhow!("no nulling value returned"))?;
    let state = solve_config(&nulled, 0.0).context("solving the nulled steady state")?;
    let numeric = bright_dark_decompose(&state, &nulled)?;
    let closed = bright_dark_closed_form(&nulled, 0.0)?;
    let residual = numeric.alpha_b.norm() / numeric.alpha_d.norm();
    let residual_closed = closed.alpha_b.norm() / closed.alpha_d.norm();
    let verdict = stability(&nulled);
    let chi = input_output(&state, &nulled).chi;
    let chi_closed = efficiency_closed_form(&nulled)?;
    let (name, ratio) = match nulled.extension {
        Extension::WeakDrive(_) => ("aux_amplitude", Some(value / config.signal.amplitude)),
        _ => ("lambda", None),
    };
    if as_json {
        print_json(&json!({
            "scheme": nulled.kind(),
            name: value,
            "amplitude_ratio": ratio,
            "residual": residual,
            "residual_closed_form": residual_closed,
            "chi": chi,
            "chi_closed_form": chi_closed,
            "stable": verdict.stable,
            "slowest_rate": verdict.slowest_rate,
        }))?;
    } else {
        println!("scheme            {}", nulled.kind());
        println!("{name:<17} {}", complex_text(value));
        if let Some(r) = ratio {
            println!("amplitude ratio   {}", complex_text(r));
        }
        println!("|aB|/|aD|         {residual:e} (closed form {residual_closed:e})");
        println!("chi               {chi:.12e} (closed form {chi_closed:.12e})");
        println!(
            "stable            {} (slowest rate {:e})",
            verdict.stable, verdict.slowest_rate
        );
    }
    Ok(Status::Ok)
}

fn verify(
    as_json: bool,
    scenario: Option<&Path>,
    random: Option<usize>,
    seed: u64,
) -> Result<Status> {
    let options = SuiteOptions::default();
    let (outcomes, source) = match (scenario, random) {
        (_, Some(n)) => (
            random_suite(n, seed, &options),
            json!({ "random": n, "seed": seed }),
        ),
        (Some(path), None) => {
            let config = load(path)?;
            // The time-domain check needs a finite default horizon.
            let time = if IntegrationSpec::for_config(&config).is_ok() {
                vec![config.clone()]
            } else {
                Vec::new()
            };
            (
                run_suite(&[config], &time, &options),
                json!({ "scenario": path }),
            )
        }
        (None, None) => bail!("give a scenario or --random N"),
    };
    let failed: Vec<&str> = outcomes
        .iter()
        .filter(|o| !o.passed())
        .map(|o| o.name.as_str())
        .collect();
    if as_json {
        print_json(&json!({
            "source": source,
            "all_passed": failed.is_empty(),
            "failed": failed,
            "properties": outcomes,
        }))?;
    } else {
        print_table(&outcomes);
        if failed.is_empty() {
            println!("all properties pass");
        } else {
            println!("failed: {}", failed.join(", "));
        }
    }
    Ok(if failed.is_empty() {
        Status::Ok
    } else {
        Status::Failed
    })
}

fn print_table(outcomes: &[PropertyOutcome]) {
    println!(
        "{:<6} {:<26} {:>8} {:>12} {:>10}",
        "", "property", "checks", "worst", "tolerance"
    );
    for o in outcomes {
        let mark = match (o.passed(), o.checks) {
            (false, _) => "FAIL",
            (true, 0) => "SKIP",
            (true, _) => "PASS",
        };
        println!(
            "{mark:<6} {:<26} {:>8} {:>12.3e} {:>10.0e}",
            o.name, o.checks, o.worst, o.tolerance
        );
        for example in &o.examples {
            println!("       {example}");
        }
    }
}

fn stability_cmd(as_json: bool, scenario: &Path, range: Option<(f64, f64)>) -> Result<Status> {
    let config = load(scenario)?;
    if config.kind() != SchemeKind::Parametric {
        bail!(
            "stability bisection needs a parametric scenario, got {}",
            config.kind()
        );
    }
    let p = derive(&config)?;
    let adiabatic = 0.5 * config.mech.gamma_m * (1.0 + p.c1 + p.c2);
    let (lo, hi) = range.unwrap_or((0.0, 2.0 * adiabatic));
    let threshold = instability_threshold(&config, lo, hi, 1e-12)
        .context("locating the instability threshold")?;
    let (nulled, lambda_star) = apply_nulling(&config)?;
    let lambda_star = lambda_star.map(|z| z.norm()).unwrap_or_default();
    let star = stability(&nulled);
    let relative = (threshold - adiabatic).abs() / adiabatic;
    if as_json {
        print_json(&json!({
            "threshold": threshold,
            "adiabatic_estimate": adiabatic,
            "relative_difference": relative,
            "lambda_star": lambda_star,
            "lambda_star_stable": star.stable,
            "lambda_star_slowest_rate": star.slowest_rate,
        }))?;
    } else {
        println!("threshold |lambda|   {threshold:.10e}");
        println!("gamma_m(1+C1+C2)/2   {adiabatic:.10e} (relative difference {relative:.3e})");
        println!(
            "lambda*              {lambda_star:.10e} ({})",
            if star.stable { "stable" } else { "unstable" }
        );
    }
    Ok(Status::Ok)
}
