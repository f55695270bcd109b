//! Scenario files, the scenario runner, amplitude bisection and plot data.

mod battery;
mod config;
mod dirichlet;
mod plots;
mod runner;
mod threshold;

pub use battery::random_battery;
pub use config::{
    DirichletSection, DomainConfig, FamilyName, InitialData, NonlinearityConfig, OutputConfig,
    ScanConfig, ScenarioConfig, Shape, TimeConfig, Tolerances,
};
pub use dirichlet::{dirichlet_build, dirichlet_config, dirichlet_pair, DirichletCertificate, DirichletOutcome};
pub use plots::emit_plots;
pub use runner::{
    base_checks, orbit_scan, run_scenario, run_scenario_with_scan, scan_cap_radius, scan_csv,
    write_json, write_snapshot, Audits, BaseSummary, CapSummary, DomainSummary, Manifest,
    ScenarioOutcome, ScenarioReport,
};
pub use threshold::{sharp_threshold, Probe, ProbeClass, ThresholdResult};
