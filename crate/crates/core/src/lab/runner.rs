use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::ScenarioConfig;
use super::plots::emit_plots;
use crate::diagnostics::{
    audit_supersolution_cap, detect_omega_limit, zero_trace_period_difference, BoundaryEvent,
    CapViolation, OmegaLimitReport, RunTrace, StrobeDrift, SymmetryCheck, Verdict, ZeroNumberTrace,
};
use crate::error::{LabError, Result};
use crate::kinetics::{find_periodic_orbits, OrbitScan, PeriodicOrbit, Stability};
use crate::pde::Field;

/// Periodic orbits of the configured kinetics over `scan.range`.
pub fn orbit_scan(cfg: &ScenarioConfig) -> Result<OrbitScan<f64>> {
    let spec = cfg.spec()?;
    find_periodic_orbits(&spec, (cfg.scan.lo, cfg.scan.hi), cfg.scan.n, &cfg.ode())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaseSummary {
    pub a0: f64,
    pub floquet: f64,
    pub stability_below: Stability,
    pub stability_above: Stability,
    pub distance: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CapSummary {
    /// Smallest radius on the scanned grid for which the majorization holds.
    pub l0: f64,
    pub holds: bool,
    pub violation: Option<CapViolation>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Audits {
    #[serde(rename = "Z_monotone")]
    pub z_monotone: bool,
    pub z_first_increase: Option<usize>,
    pub symmetry: Option<SymmetryCheck<f64>>,
    pub cap: Option<CapSummary>,
    /// The base orbit is unstable from below.
    pub base_unstable_from_below: bool,
    /// The base or flat level sits strictly inside a plateau of periodic orbits.
    pub base_inside_plateau: bool,
    /// Orbits that are neither in `Y_per` nor linearly stable.
    pub assumption_h_violations: Vec<f64>,
    pub clipped: u64,
    pub node_steps: u64,
    pub min_before_clip: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainSummary {
    pub half_width: f64,
    pub n_x: usize,
    pub dt: f64,
    pub leak: f64,
}

/// Contents of `report.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioReport {
    pub config_hash: String,
    pub verdict: Verdict,
    pub x0: f64,
    pub level: Option<f64>,
    pub base: Option<BaseSummary>,
    pub residual: f64,
    pub periods_used: usize,
    pub strobe_monotone: StrobeDrift,
    pub domain: DomainSummary,
    pub boundary_events: Vec<BoundaryEvent>,
    pub audits: Audits,
    pub note: Option<String>,
}

/// Everything produced by one scenario.
#[derive(Debug, Clone)]
pub struct ScenarioOutcome {
    pub report: ScenarioReport,
    pub omega: OmegaLimitReport<f64>,
    pub trace: RunTrace<f64>,
    pub zero_trace: ZeroNumberTrace<f64>,
    pub scan: OrbitScan<f64>,
    pub dir: Option<PathBuf>,
}

/// Smallest `L0` on a unit grid up to `0.6 L` for which the limit cycle, shifted out by
/// `L0`, caps every stored strobe.
pub fn scan_cap_radius(
    strobes: &[Field<f64>],
    ground: &[Field<f64>],
    x0: f64,
    period: f64,
    max_l0: f64,
) -> CapSummary {
    let mut l0 = 0.0;
    let mut last = None;
    while l0 <= max_l0 {
        match audit_supersolution_cap(strobes, ground, x0, period, x0, l0, 1e-8) {
            None => {
                return CapSummary {
                    l0,
                    holds: true,
                    violation: None,
                }
            }
            Some(v) => last = Some(v),
        }
        l0 += 1.0;
    }
    CapSummary {
        l0: max_l0,
        holds: false,
        violation: last,
    }
}

/// `(unstable from below, strictly inside a plateau)` for the detected base or flat level.
pub fn base_checks(omega: &OmegaLimitReport<f64>, scan: &OrbitScan<f64>) -> (bool, bool) {
    let unstable_below = omega
        .base_orbit
        .as_ref()
        .is_some_and(|o| o.stability_below == Stability::Unstable);
    let level = omega.base_orbit.as_ref().map(|o| o.a0).or(omega.level);
    let inside = level.is_some_and(|a| scan.plateaus.iter().any(|p| p.strictly_contains(a, 1e-3)));
    (unstable_below, inside)
}

fn summarize(
    cfg: &ScenarioConfig,
    omega: &OmegaLimitReport<f64>,
    trace: &RunTrace<f64>,
    zero: &ZeroNumberTrace<f64>,
    scan: &OrbitScan<f64>,
    dt: f64,
) -> ScenarioReport {
    let cap = (omega.verdict == Verdict::GroundState).then(|| {
        scan_cap_radius(
            &trace.strobes,
            &omega.limit_cycle,
            omega.x0,
            cfg.nonlinearity.period,
            0.6 * cfg.domain.half_width,
        )
    });
    let (base_unstable_from_below, base_inside_plateau) = base_checks(omega, scan);
    let base = omega.base_orbit.as_ref().map(|o: &PeriodicOrbit<f64>| BaseSummary {
        a0: o.a0,
        floquet: o.floquet,
        stability_below: o.stability_below,
        stability_above: o.stability_above,
        distance: omega.base_distance,
    });
    ScenarioReport {
        config_hash: cfg.hash(),
        verdict: omega.verdict,
        x0: omega.x0,
        level: omega.level,
        base,
        residual: omega.residual,
        periods_used: omega.periods_used,
        strobe_monotone: omega.strobe_monotone,
        domain: DomainSummary {
            half_width: cfg.domain.half_width,
            n_x: cfg.domain.n_x,
            dt,
            leak: cfg.tolerances.leak,
        },
        boundary_events: trace.events.clone(),
        audits: Audits {
            z_monotone: zero.is_monotone(),
            z_first_increase: zero.first_increase,
            symmetry: omega.symmetry,
            cap,
            base_unstable_from_below,
            base_inside_plateau,
            assumption_h_violations: scan.assumption_h_violations(),
            clipped: trace.audit.clipped,
            node_steps: trace.audit.node_steps,
            min_before_clip: trace.audit.min_before_clip,
        },
        note: omega.note.clone(),
    }
}

/// Runs one scenario with a precomputed orbit scan. Writes artifacts under
/// `out_root/<hash>/` when `out_root` is given.
pub fn run_scenario_with_scan(
    cfg: &ScenarioConfig,
    scan: OrbitScan<f64>,
    out_root: Option<&Path>,
) -> Result<ScenarioOutcome> {
    cfg.validate()?;
    let spec = cfg.spec()?;
    let u0 = cfg.initial_field()?;
    let omega_cfg = cfg.omega();
    let (omega, trace) = detect_omega_limit(&spec, &u0, &omega_cfg, &scan)?;
    let zero_trace = zero_trace_period_difference(&trace.strobes, None, 3);
    let steps = (cfg.nonlinearity.period / omega_cfg.solver.dt).ceil();
    let report = summarize(cfg, &omega, &trace, &zero_trace, &scan, cfg.nonlinearity.period / steps);
    let mut outcome = ScenarioOutcome {
        report,
        omega,
        trace,
        zero_trace,
        scan,
        dir: None,
    };
    if let Some(root) = out_root {
        let dir = root.join(cfg.short_hash());
        write_artifacts(cfg, &outcome, &dir)?;
        emit_plots(&dir)?;
        outcome.dir = Some(dir);
    }
    Ok(outcome)
}

pub fn run_scenario(cfg: &ScenarioConfig, out_root: Option<&Path>) -> Result<ScenarioOutcome> {
    let scan = orbit_scan(cfg)?;
    run_scenario_with_scan(cfg, scan, out_root)
}

/// `# t=<t>` header then `x,value` rows.
pub fn write_snapshot(path: &Path, field: &Field<f64>) -> Result<()> {
    let mut out = String::with_capacity(field.values.len() * 32);
    out.push_str(&format!("# t={}\n", field.time));
    for (i, v) in field.values.iter().enumerate() {
        out.push_str(&format!("{},{}\n", field.grid.x(i), v));
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut file = fs::File::create(path)?;
    serde_json::to_writer_pretty(&mut file, value)?;
    file.write_all(b"\n")?;
    Ok(())
}

/// Rows `a,P(a),class,floquet`.
pub fn scan_csv(scan: &OrbitScan<f64>) -> String {
    let mut s = String::from("a,P(a),class,floquet\n");
    for n in &scan.nodes {
        s.push_str(&format!("{},{},{},{}\n", n.a, n.p, n.class.label(), n.floquet));
    }
    s
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub config_hash: String,
    pub snapshots: Vec<String>,
    pub strobe_rows: usize,
    pub clipped: u64,
    pub node_steps: u64,
    pub boundary_events: usize,
}

fn write_artifacts(cfg: &ScenarioConfig, outcome: &ScenarioOutcome, dir: &Path) -> Result<()> {
    let snaps = dir.join("snapshots");
    fs::create_dir_all(&snaps)?;
    fs::write(dir.join("config.txt"), cfg.to_text())?;
    write_json(&dir.join("report.json"), &outcome.report)?;

    let mut names = Vec::new();
    let strobes = &outcome.trace.strobes;
    let every = cfg.output.snapshot_every;
    for (m, field) in strobes.iter().enumerate() {
        if m % every == 0 || m + 1 == strobes.len() {
            let name = format!("strobe_{m:05}.csv");
            write_snapshot(&snaps.join(&name), field)?;
            names.push(name);
        }
    }
    for (k, field) in outcome.omega.limit_cycle.iter().enumerate() {
        let name = format!("cycle_{k:02}.csv");
        write_snapshot(&snaps.join(&name), field)?;
        names.push(name);
    }

    let x0 = outcome.omega.x0;
    let mut strobe = String::from("m,t,u_x0\n");
    for (m, field) in strobes.iter().enumerate().skip(1) {
        strobe.push_str(&format!("{},{},{}\n", m, field.time, field.value_at(x0)));
    }
    fs::write(dir.join("strobe.csv"), strobe)?;

    let z = &outcome.zero_trace;
    let mut zt = String::from("m,t,count,eta\n");
    for (m, ((t, c), e)) in z.times.iter().zip(&z.counts).zip(&z.etas).enumerate() {
        zt.push_str(&format!("{m},{t},{c},{e}\n"));
    }
    fs::write(dir.join("ztrace.csv"), zt)?;
    fs::write(dir.join("orbits.csv"), scan_csv(&outcome.scan))?;

    let manifest = Manifest {
        config_hash: cfg.hash(),
        snapshots: names,
        strobe_rows: strobes.len().saturating_sub(1),
        clipped: outcome.trace.audit.clipped,
        node_steps: outcome.trace.audit.node_steps,
        boundary_events: outcome.trace.events.len(),
    };
    write_json(&dir.join("manifest.json"), &manifest)
}

pub(crate) fn missing(path: &Path) -> LabError {
    LabError::Io(std::io::Error::new(
        std::io::ErrorKind::NotFound,
        format!("missing artifact {}", path.display()),
    ))
}
