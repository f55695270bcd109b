use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::ScenarioConfig;
use super::runner::{orbit_scan, write_json, write_snapshot};
use crate::error::LabError;
use crate::kinetics::{OrbitScan, PeriodicOrbit};
use crate::periodic::{build_periodic_dirichlet, DirichletConfig, DirichletError, PeriodicDirichletSolution};

/// Contents of `certificate.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirichletCertificate {
    #[serde(rename = "R")]
    pub r: f64,
    pub p_minus: f64,
    pub p_plus: f64,
    pub period_residual: f64,
    pub monotone_certificate: bool,
    pub periods_used: usize,
    pub first_step_margin: f64,
    pub worst_drop: f64,
    pub c1: f64,
    pub c2: f64,
    pub converged: bool,
}

fn nearest_to(scan: &OrbitScan<f64>, a: f64) -> Option<PeriodicOrbit<f64>> {
    scan.candidates()
        .min_by(|x, y| (x.a0 - a).abs().total_cmp(&(y.a0 - a).abs()))
        .cloned()
}

/// `(p_-, p_+)` for the Dirichlet builder: the configured levels snapped to the nearest
/// scanned orbits, else the lowest positive orbit and the next one above it.
pub fn dirichlet_pair(cfg: &ScenarioConfig, scan: &OrbitScan<f64>) -> Result<(PeriodicOrbit<f64>, PeriodicOrbit<f64>), LabError> {
    let mut sorted: Vec<&PeriodicOrbit<f64>> = scan.candidates().collect();
    sorted.sort_by(|x, y| x.a0.total_cmp(&y.a0));
    sorted.dedup_by(|x, y| (x.a0 - y.a0).abs() < 1e-9);
    let lower = match cfg.dirichlet.lower {
        Some(a) => nearest_to(scan, a),
        None => sorted.iter().find(|o| o.a0 > 1e-6).map(|o| (*o).clone()),
    }
    .ok_or_else(|| LabError::Hypothesis("no positive periodic orbit for p_-".into()))?;
    let upper = match cfg.dirichlet.upper {
        Some(a) => nearest_to(scan, a),
        None => sorted.iter().find(|o| o.a0 > lower.a0 + 1e-6).map(|o| (*o).clone()),
    }
    .ok_or_else(|| LabError::Hypothesis(format!("no periodic orbit above p_-(0) = {}", lower.a0)))?;
    if upper.a0 <= lower.a0 {
        return Err(LabError::Hypothesis(format!(
            "p_+(0) = {} is not above p_-(0) = {}",
            upper.a0, lower.a0
        )));
    }
    Ok((lower, upper))
}

pub fn dirichlet_config(cfg: &ScenarioConfig) -> Result<DirichletConfig<f64>, LabError> {
    let spec = cfg.spec()?;
    let mut d = DirichletConfig::for_spec(&spec);
    d.r = cfg.dirichlet.r;
    d.dx = cfg.dirichlet.dx;
    d.ode = cfg.ode();
    if let Some(dt) = cfg.time.dt {
        d.dt = dt;
    }
    Ok(d)
}

fn certificate(sol: &PeriodicDirichletSolution<f64>, lo: f64, hi: f64, converged: bool) -> DirichletCertificate {
    DirichletCertificate {
        r: sol.r,
        p_minus: lo,
        p_plus: hi,
        period_residual: sol.period_residual,
        monotone_certificate: sol.monotone_certificate,
        periods_used: sol.periods_used,
        first_step_margin: sol.first_step_margin,
        worst_drop: sol.worst_drop,
        c1: sol.c1,
        c2: sol.c2,
        converged,
    }
}

fn write_dirichlet(cfg: &ScenarioConfig, dir: &Path, sol: &PeriodicDirichletSolution<f64>, cert: &DirichletCertificate) -> Result<(), LabError> {
    fs::create_dir_all(dir)?;
    if let Some(parent) = dir.parent() {
        fs::write(parent.join("config.txt"), cfg.to_text())?;
    }
    write_snapshot(&dir.join("phi.csv"), &sol.phase_plane.phi)?;
    for (k, field) in sol.profile_cycle.iter().enumerate() {
        write_snapshot(&dir.join(format!("cycle_{k:02}.csv")), field)?;
    }
    write_json(&dir.join("certificate.json"), cert)
}

pub struct DirichletOutcome {
    pub solution: PeriodicDirichletSolution<f64>,
    pub certificate: DirichletCertificate,
    pub dir: Option<PathBuf>,
}

/// Builds the periodic Dirichlet solution for `cfg`. Artifacts go to
/// `out_root/<hash>/dirichlet/`, also for a run that did not settle.
pub fn dirichlet_build(cfg: &ScenarioConfig, out_root: Option<&Path>) -> Result<DirichletOutcome, DirichletError<f64>> {
    cfg.validate()?;
    let spec = cfg.spec()?;
    let scan = orbit_scan(cfg)?;
    let (lo, hi) = dirichlet_pair(cfg, &scan)?;
    let dcfg = dirichlet_config(cfg)?;
    let dir = out_root.map(|root| root.join(cfg.short_hash()).join("dirichlet"));
    match build_periodic_dirichlet(&spec, &lo, &hi, &dcfg) {
        Ok(solution) => {
            let certificate = certificate(&solution, lo.a0, hi.a0, true);
            if let Some(d) = &dir {
                write_dirichlet(cfg, d, &solution, &certificate)?;
            }
            Ok(DirichletOutcome { solution, certificate, dir })
        }
        Err(DirichletError::NoConvergence(partial)) => {
            if let Some(d) = &dir {
                write_dirichlet(cfg, d, &partial, &certificate(&partial, lo.a0, hi.a0, false))?;
            }
            Err(DirichletError::NoConvergence(partial))
        }
        Err(e) => Err(e),
    }
}
