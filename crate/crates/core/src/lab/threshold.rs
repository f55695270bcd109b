use serde::{Deserialize, Serialize};

use super::config::ScenarioConfig;
use super::runner::orbit_scan;
use crate::diagnostics::{detect_omega_limit, OmegaConfig, OmegaLimitReport, RunTrace, Verdict};
use crate::error::{LabError, Result};
use crate::kinetics::OrbitScan;
use crate::nonlinearity::NonlinearitySpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ProbeClass {
    Extinction,
    Propagation,
    /// Converged to a ground state.
    Edge,
    Undecided,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Probe {
    pub sigma: f64,
    pub verdict: Option<Verdict>,
    pub class: ProbeClass,
    pub periods: usize,
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdResult {
    pub sigma_star: f64,
    pub bracket: (f64, f64),
    pub bracket_width: f64,
    pub target_width: f64,
    pub below_verdict: Verdict,
    pub above_verdict: Verdict,
    pub above_level: Option<f64>,
    /// Amplitude of the first probe that converged to a ground state.
    pub edge_sigma: Option<f64>,
    pub near_threshold_sigma: f64,
    pub near_threshold_report: OmegaLimitReport<f64>,
    pub probes: Vec<Probe>,
}

struct Prober<'a> {
    cfg: &'a ScenarioConfig,
    spec: NonlinearitySpec<f64>,
    scan: &'a OrbitScan<f64>,
    base: OmegaConfig<f64>,
}

impl Prober<'_> {
    fn run(&self, sigma: f64, omega: &OmegaConfig<f64>) -> Result<(OmegaLimitReport<f64>, RunTrace<f64>)> {
        let mut cfg = self.cfg.clone();
        cfg.initial_data.sigma = sigma;
        cfg.validate()?;
        detect_omega_limit(&self.spec, &cfg.initial_field()?, omega, self.scan)
    }

    fn classify(report: &OmegaLimitReport<f64>) -> ProbeClass {
        match report.verdict {
            Verdict::Extinction => ProbeClass::Extinction,
            Verdict::GroundState => ProbeClass::Edge,
            _ if report.is_propagation() => ProbeClass::Propagation,
            _ => ProbeClass::Undecided,
        }
    }

    /// One probe, retried once with doubled horizon when undecided. Truncation counts
    /// as undecided.
    fn probe(&self, sigma: f64) -> Result<(Probe, Option<OmegaLimitReport<f64>>)> {
        let mut omega = OmegaConfig {
            keep_strobes: false,
            certify_extinction: true,
            ..self.base.clone()
        };
        for attempt in 0..2 {
            match self.run(sigma, &omega) {
                Ok((report, _)) => {
                    let class = Self::classify(&report);
                    if class != ProbeClass::Undecided || attempt == 1 {
                        log::info!("probe sigma = {sigma}: {} after {} periods", report.verdict.label(), report.periods_used);
                        let probe = Probe {
                            sigma,
                            verdict: Some(report.verdict),
                            class,
                            periods: report.periods_used,
                            note: report.note.clone(),
                        };
                        return Ok((probe, Some(report)));
                    }
                    omega.max_periods *= 2;
                }
                Err(e @ LabError::Truncation { .. }) => {
                    log::info!("probe sigma = {sigma}: {e}");
                    let probe = Probe {
                        sigma,
                        verdict: None,
                        class: ProbeClass::Undecided,
                        periods: 0,
                        note: Some(e.to_string()),
                    };
                    return Ok((probe, None));
                }
                Err(e) => return Err(e),
            }
        }
        unreachable!("the second attempt always returns")
    }
}

/// Bisection on the amplitude `initial_data.sigma` between an extinction run at
/// `sigma_lo` and a propagation run at `sigma_hi`.
///
/// Undecided and ground-state probes move the upper end. Once the bracket is below
/// `target_width` bisection continues, down to the resolution of `f64`, until a probe
/// converges to a ground state; the near-threshold run then starts from that amplitude
/// (or from the lower end if none was found) with four times the horizon.
pub fn sharp_threshold(
    cfg: &ScenarioConfig,
    sigma_lo: f64,
    sigma_hi: f64,
    target_width: f64,
) -> Result<ThresholdResult> {
    if !(target_width > 0.0) {
        return Err(LabError::Config {
            path: "width".into(),
            msg: format!("target width must be positive, got {target_width}"),
        });
    }
    if !(sigma_lo < sigma_hi) {
        return Err(LabError::Bracket(format!("need sigma_lo < sigma_hi, got {sigma_lo}, {sigma_hi}")));
    }
    cfg.validate()?;
    let scan = orbit_scan(cfg)?;
    let prober = Prober {
        cfg,
        spec: cfg.spec()?,
        scan: &scan,
        base: cfg.omega(),
    };
    let mut probes = Vec::new();

    let (p_lo, r_lo) = prober.probe(sigma_lo)?;
    probes.push(p_lo.clone());
    if p_lo.class != ProbeClass::Extinction {
        return Err(LabError::Bracket(format!(
            "run at sigma_lo = {sigma_lo} is {:?}, not extinction",
            p_lo.class
        )));
    }
    let (p_hi, r_hi) = prober.probe(sigma_hi)?;
    probes.push(p_hi.clone());
    if p_hi.class != ProbeClass::Propagation {
        return Err(LabError::Bracket(format!(
            "run at sigma_hi = {sigma_hi} is {:?}, not propagation",
            p_hi.class
        )));
    }
    let mut below = r_lo.expect("extinction probe has a report");
    let mut above = r_hi.expect("propagation probe has a report");
    let (mut lo, mut hi) = (sigma_lo, sigma_hi);
    let mut edge: Option<f64> = None;

    loop {
        let narrow = hi - lo <= target_width;
        if narrow && edge.is_some() {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if !(mid > lo && mid < hi) {
            break;
        }
        let (probe, report) = prober.probe(mid)?;
        match probe.class {
            ProbeClass::Extinction => {
                lo = mid;
                below = report.expect("extinction probe has a report");
            }
            ProbeClass::Propagation => {
                hi = mid;
                above = report.expect("propagation probe has a report");
            }
            ProbeClass::Edge => {
                edge.get_or_insert(mid);
                hi = mid;
            }
            ProbeClass::Undecided => hi = mid,
        }
        probes.push(probe);
    }

    let near_sigma = edge.unwrap_or(lo);
    let final_cfg = OmegaConfig {
        max_periods: 4 * prober.base.max_periods,
        keep_strobes: false,
        ..prober.base.clone()
    };
    let (near, _) = prober.run(near_sigma, &final_cfg)?;
    log::info!(
        "near-threshold run at sigma = {near_sigma}: {} after {} periods",
        near.verdict.label(),
        near.periods_used
    );
    Ok(ThresholdResult {
        sigma_star: 0.5 * (lo + hi),
        bracket: (lo, hi),
        bracket_width: hi - lo,
        target_width,
        below_verdict: below.verdict,
        above_verdict: above.verdict,
        above_level: above.level,
        edge_sigma: edge,
        near_threshold_sigma: near_sigma,
        near_threshold_report: near,
        probes,
    })
}
