//! Simulation and analysis of mechanically mediated conversion between two
//! cavity fields through an optomechanical dark mode.
//!
//! Three schemes are modelled: the baseline two-cavity dark mode, the
//! weak-drive scheme (an auxiliary cavity with its own weak tone) and the
//! parametric scheme (mechanical spring-constant modulation at twice the
//! mechanical frequency). Closed forms live in [`closedform`]; [`linsys`] and
//! [`timedomain`] are the numerical references they are checked against.

pub mod closedform;
pub mod error;
pub mod linsys;
pub mod model;
pub mod scenario;
pub mod sweep;
pub mod timedomain;
pub mod verify;

pub use closedform::{
    apply_nulling, bright_dark_closed_form, efficiency_closed_form, solve_parametric_condition,
    solve_weak_drive_condition, special_case_delta0, susceptibilities, BrightDarkAmplitudes,
    SusceptibilityTriple,
};
pub use error::{Error, Result};
pub use linsys::{
    bright_dark_decompose, build_system, input_output, instability_threshold, solve, solve_config,
    stability, transform_to_bright_dark_basis, LinearSystem, StabilityVerdict, SteadyState,
    TransferReport,
};
pub use model::{
    cooperativity, derive, AuxiliaryMode, Coupling, DerivedParams, DriveTone, Extension,
    MechanicalOscillator, OpticalMode, SchemeConfig, SchemeKind,
};
pub use num_complex::Complex64;
pub use scenario::{parse_scenario, parse_sweep_spec, render_scenario};
pub use sweep::{
    run_sweep, run_sweep_with_threads, set_parameter, summary, write_csv, write_csv_to,
    write_json_summary, Axis, FluxLedger, OutputGroup, SweepRow, SweepSpec, PARAMETER_PATHS,
};
pub use timedomain::{integrate, integrate_from, IntegrationSpec, Trajectory};
pub use verify::{random_suite, run_suite, PropertyOutcome, RandomConfigs, SuiteOptions};
