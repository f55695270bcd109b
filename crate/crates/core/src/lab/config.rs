//! Flat `section.key=value` scenario files.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::diagnostics::OmegaConfig;
use crate::error::{LabError, Result};
use crate::kinetics::OdeConfig;
use crate::nonlinearity::{CustomTerm, NonlinearitySpec};
use crate::pde::{Field, Grid, SolverConfig};

fn config_err(path: &str, msg: impl Into<String>) -> LabError {
    LabError::Config {
        path: path.to_string(),
        msg: msg.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FamilyName {
    Bistable,
    Combustion,
    Logistic,
    Custom,
    Zero,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NonlinearityConfig {
    pub family: FamilyName,
    pub period: f64,
    pub theta: f64,
    pub beta: f64,
    pub q1: f64,
    /// Custom table, written `power:harmonic:cos:sin` and separated by `;`.
    pub coeffs: Vec<CustomTerm<f64>>,
}

impl NonlinearityConfig {
    pub fn build(&self) -> Result<NonlinearitySpec<f64>> {
        let spec = match self.family {
            FamilyName::Bistable => NonlinearitySpec::bistable(self.theta, self.beta, self.period),
            FamilyName::Combustion => NonlinearitySpec::combustion(self.q1, self.beta, self.period),
            FamilyName::Logistic => NonlinearitySpec::logistic(self.beta, self.period),
            FamilyName::Custom => NonlinearitySpec::custom(self.coeffs.clone(), self.period),
            FamilyName::Zero => NonlinearitySpec::zero(self.period),
        };
        spec.map_err(|e| config_err("nonlinearity", e.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainConfig {
    /// Half-width `L` of the truncated line `[-L, L]`.
    pub half_width: f64,
    pub n_x: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeConfig {
    /// Defaults to `T / 400`.
    pub dt: Option<f64>,
    pub max_periods: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Shape {
    Box,
    Gaussian,
    TwoBoxes,
}

/// `sigma` times a box on `[center - l, center + l]` or a Gaussian of width `l`
/// (cut off at `6 l`), plus for two boxes `sigma2` on `[center2 - l2, center2 + l2]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InitialData {
    pub shape: Shape,
    pub sigma: f64,
    pub l: f64,
    pub center: f64,
    pub sigma2: f64,
    pub l2: f64,
    pub center2: f64,
}

impl InitialData {
    pub fn support(&self) -> (f64, f64) {
        match self.shape {
            Shape::Box => (self.center - self.l, self.center + self.l),
            Shape::Gaussian => (self.center - 6.0 * self.l, self.center + 6.0 * self.l),
            Shape::TwoBoxes => (
                (self.center - self.l).min(self.center2 - self.l2),
                (self.center + self.l).max(self.center2 + self.l2),
            ),
        }
    }

    pub fn value(&self, x: f64) -> f64 {
        let in_box = |c: f64, l: f64| (x - c).abs() <= l;
        match self.shape {
            Shape::Box => {
                if in_box(self.center, self.l) {
                    self.sigma
                } else {
                    0.0
                }
            }
            Shape::Gaussian => {
                let z = (x - self.center) / self.l;
                if z.abs() <= 6.0 {
                    self.sigma * (-z * z).exp()
                } else {
                    0.0
                }
            }
            Shape::TwoBoxes => {
                let mut v = 0.0;
                if in_box(self.center, self.l) {
                    v += self.sigma;
                }
                if in_box(self.center2, self.l2) {
                    v += self.sigma2;
                }
                v
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    pub omega: f64,
    pub flat: f64,
    pub sym: f64,
    pub leak: f64,
    pub u_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanConfig {
    pub lo: f64,
    pub hi: f64,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirichletSection {
    pub r: Option<f64>,
    pub dx: f64,
    /// Approximate `p_-(0)`; defaults to the lowest positive orbit.
    pub lower: Option<f64>,
    /// Approximate `p_+(0)`; defaults to the next orbit above `p_-`.
    pub upper: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputConfig {
    /// Write every n-th strobe as a snapshot file.
    pub snapshot_every: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub nonlinearity: NonlinearityConfig,
    pub domain: DomainConfig,
    pub time: TimeConfig,
    pub initial_data: InitialData,
    pub tolerances: Tolerances,
    pub scan: ScanConfig,
    pub dirichlet: DirichletSection,
    pub output: OutputConfig,
    pub seed: u64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            nonlinearity: NonlinearityConfig {
                family: FamilyName::Bistable,
                period: 1.0,
                theta: 0.3,
                beta: 0.0,
                q1: 0.3,
                coeffs: Vec::new(),
            },
            domain: DomainConfig {
                half_width: 40.0,
                n_x: 2049,
            },
            time: TimeConfig {
                dt: None,
                max_periods: 400,
            },
            initial_data: InitialData {
                shape: Shape::Box,
                sigma: 1.0,
                l: 2.0,
                center: 0.0,
                sigma2: 0.0,
                l2: 0.5,
                center2: 0.0,
            },
            tolerances: Tolerances {
                omega: 1e-6,
                flat: 1e-5,
                sym: 1e-4,
                leak: 1e-4,
                u_max: 10.0,
            },
            scan: ScanConfig {
                lo: 0.0,
                hi: 1.5,
                n: 76,
            },
            dirichlet: DirichletSection {
                r: None,
                dx: 0.02,
                lower: None,
                upper: None,
            },
            output: OutputConfig { snapshot_every: 10 },
            seed: 0,
        }
    }
}

fn parse_f64(path: &str, v: &str) -> Result<f64> {
    let x: f64 = v
        .parse()
        .map_err(|_| config_err(path, format!("expected a number, got `{v}`")))?;
    if !x.is_finite() {
        return Err(config_err(path, "value must be finite"));
    }
    Ok(x)
}

fn parse_usize(path: &str, v: &str) -> Result<usize> {
    v.parse()
        .map_err(|_| config_err(path, format!("expected a nonnegative integer, got `{v}`")))
}

fn parse_opt(path: &str, v: &str) -> Result<Option<f64>> {
    if v == "auto" || v.is_empty() {
        Ok(None)
    } else {
        parse_f64(path, v).map(Some)
    }
}

fn parse_terms(path: &str, v: &str) -> Result<Vec<CustomTerm<f64>>> {
    v.split(';')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|term| {
            let parts: Vec<&str> = term.split(':').map(str::trim).collect();
            if parts.len() != 4 {
                return Err(config_err(path, format!("term `{term}` is not power:harmonic:cos:sin")));
            }
            Ok(CustomTerm {
                power: parts[0]
                    .parse()
                    .map_err(|_| config_err(path, format!("bad power in `{term}`")))?,
                harmonic: parts[1]
                    .parse()
                    .map_err(|_| config_err(path, format!("bad harmonic in `{term}`")))?,
                cos_coeff: parse_f64(path, parts[2])?,
                sin_coeff: parse_f64(path, parts[3])?,
            })
        })
        .collect()
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "auto".to_string(), |x| x.to_string())
}

impl ScenarioConfig {
    /// Parses `key=value` lines on top of the defaults. `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| config_err(&format!("line {}", lineno + 1), format!("expected key=value, got `{line}`")))?;
            cfg.set(key.trim(), value.trim())?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| config_err(&path.display().to_string(), e.to_string()))?;
        Self::parse(&text)
    }

    /// Sets one dotted key.
    pub fn set(&mut self, key: &str, v: &str) -> Result<()> {
        let k = key;
        match key {
            "nonlinearity.family" => {
                self.nonlinearity.family = match v {
                    "bistable" => FamilyName::Bistable,
                    "combustion" => FamilyName::Combustion,
                    "logistic" => FamilyName::Logistic,
                    "custom" => FamilyName::Custom,
                    "zero" => FamilyName::Zero,
                    _ => return Err(config_err(k, format!("unknown family `{v}`"))),
                }
            }
            "nonlinearity.T" => self.nonlinearity.period = parse_f64(k, v)?,
            "nonlinearity.theta" => self.nonlinearity.theta = parse_f64(k, v)?,
            "nonlinearity.beta" => self.nonlinearity.beta = parse_f64(k, v)?,
            "nonlinearity.q1" => self.nonlinearity.q1 = parse_f64(k, v)?,
            "nonlinearity.coeffs" => self.nonlinearity.coeffs = parse_terms(k, v)?,
            "domain.L" => self.domain.half_width = parse_f64(k, v)?,
            "domain.n_x" => self.domain.n_x = parse_usize(k, v)?,
            "time.dt" => self.time.dt = parse_opt(k, v)?,
            "time.max_periods" => self.time.max_periods = parse_usize(k, v)?,
            "initial_data.shape" => {
                self.initial_data.shape = match v {
                    "box" => Shape::Box,
                    "gaussian" => Shape::Gaussian,
                    "two_boxes" => Shape::TwoBoxes,
                    _ => return Err(config_err(k, format!("unknown shape `{v}`"))),
                }
            }
            "initial_data.sigma" => self.initial_data.sigma = parse_f64(k, v)?,
            "initial_data.l" => self.initial_data.l = parse_f64(k, v)?,
            "initial_data.center" => self.initial_data.center = parse_f64(k, v)?,
            "initial_data.sigma2" => self.initial_data.sigma2 = parse_f64(k, v)?,
            "initial_data.l2" => self.initial_data.l2 = parse_f64(k, v)?,
            "initial_data.center2" => self.initial_data.center2 = parse_f64(k, v)?,
            "tolerances.omega" => self.tolerances.omega = parse_f64(k, v)?,
            "tolerances.flat" => self.tolerances.flat = parse_f64(k, v)?,
            "tolerances.sym" => self.tolerances.sym = parse_f64(k, v)?,
            "tolerances.leak" => self.tolerances.leak = parse_f64(k, v)?,
            "tolerances.u_max" => self.tolerances.u_max = parse_f64(k, v)?,
            "scan.range" => {
                let (a, b) = v
                    .split_once(',')
                    .ok_or_else(|| config_err(k, format!("expected `a,b`, got `{v}`")))?;
                self.scan.lo = parse_f64(k, a.trim())?;
                self.scan.hi = parse_f64(k, b.trim())?;
            }
            "scan.n" => self.scan.n = parse_usize(k, v)?,
            "dirichlet.R" => self.dirichlet.r = parse_opt(k, v)?,
            "dirichlet.dx" => self.dirichlet.dx = parse_f64(k, v)?,
            "dirichlet.lower" => self.dirichlet.lower = parse_opt(k, v)?,
            "dirichlet.upper" => self.dirichlet.upper = parse_opt(k, v)?,
            "output.snapshot_every" => self.output.snapshot_every = parse_usize(k, v)?,
            "seed" => self.seed = v.parse().map_err(|_| config_err(k, format!("bad seed `{v}`")))?,
            _ => return Err(config_err(k, "unknown key")),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |path: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(config_err(path, format!("must be positive, got {v}")))
            }
        };
        positive("nonlinearity.T", self.nonlinearity.period)?;
        positive("domain.L", self.domain.half_width)?;
        if self.domain.n_x < 5 {
            return Err(config_err("domain.n_x", "need at least 5 nodes"));
        }
        if let Some(dt) = self.time.dt {
            positive("time.dt", dt)?;
        }
        if self.time.max_periods == 0 {
            return Err(config_err("time.max_periods", "must be at least 1"));
        }
        let t = &self.tolerances;
        positive("tolerances.omega", t.omega)?;
        positive("tolerances.flat", t.flat)?;
        positive("tolerances.sym", t.sym)?;
        positive("tolerances.leak", t.leak)?;
        positive("tolerances.u_max", t.u_max)?;
        let d = &self.initial_data;
        if d.sigma < 0.0 || d.sigma2 < 0.0 {
            return Err(config_err("initial_data.sigma", "amplitudes must be nonnegative"));
        }
        positive("initial_data.l", d.l)?;
        if d.shape == Shape::TwoBoxes {
            positive("initial_data.l2", d.l2)?;
        }
        let (a, b) = d.support();
        let bound = 0.8 * self.domain.half_width;
        if !(a > -bound && b < bound) {
            return Err(config_err(
                "initial_data",
                format!("support [{a}, {b}] must lie inside (-{bound}, {bound})"),
            ));
        }
        if !(self.scan.lo >= 0.0 && self.scan.hi > self.scan.lo) {
            return Err(config_err("scan.range", "need 0 <= lo < hi"));
        }
        if self.scan.n < 3 {
            return Err(config_err("scan.n", "need at least 3 nodes"));
        }
        positive("dirichlet.dx", self.dirichlet.dx)?;
        if let Some(r) = self.dirichlet.r {
            positive("dirichlet.R", r)?;
        }
        if self.output.snapshot_every == 0 {
            return Err(config_err("output.snapshot_every", "must be at least 1"));
        }
        self.nonlinearity.build().map(|_| ())
    }

    /// Every key with its resolved value; parsing it gives back `self`.
    pub fn to_text(&self) -> String {
        let n = &self.nonlinearity;
        let family = match n.family {
            FamilyName::Bistable => "bistable",
            FamilyName::Combustion => "combustion",
            FamilyName::Logistic => "logistic",
            FamilyName::Custom => "custom",
            FamilyName::Zero => "zero",
        };
        let shape = match self.initial_data.shape {
            Shape::Box => "box",
            Shape::Gaussian => "gaussian",
            Shape::TwoBoxes => "two_boxes",
        };
        let coeffs: Vec<String> = n
            .coeffs
            .iter()
            .map(|c| format!("{}:{}:{}:{}", c.power, c.harmonic, c.cos_coeff, c.sin_coeff))
            .collect();
        let d = &self.initial_data;
        let t = &self.tolerances;
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k}={v}");
        };
        kv("nonlinearity.family", family.into());
        kv("nonlinearity.T", n.period.to_string());
        kv("nonlinearity.theta", n.theta.to_string());
        kv("nonlinearity.beta", n.beta.to_string());
        kv("nonlinearity.q1", n.q1.to_string());
        kv("nonlinearity.coeffs", coeffs.join(";"));
        kv("domain.L", self.domain.half_width.to_string());
        kv("domain.n_x", self.domain.n_x.to_string());
        kv("time.dt", fmt_opt(self.time.dt));
        kv("time.max_periods", self.time.max_periods.to_string());
        kv("initial_data.shape", shape.into());
        kv("initial_data.sigma", d.sigma.to_string());
        kv("initial_data.l", d.l.to_string());
        kv("initial_data.center", d.center.to_string());
        kv("initial_data.sigma2", d.sigma2.to_string());
        kv("initial_data.l2", d.l2.to_string());
        kv("initial_data.center2", d.center2.to_string());
        kv("tolerances.omega", t.omega.to_string());
        kv("tolerances.flat", t.flat.to_string());
        kv("tolerances.sym", t.sym.to_string());
        kv("tolerances.leak", t.leak.to_string());
        kv("tolerances.u_max", t.u_max.to_string());
        kv("scan.range", format!("{},{}", self.scan.lo, self.scan.hi));
        kv("scan.n", self.scan.n.to_string());
        kv("dirichlet.R", fmt_opt(self.dirichlet.r));
        kv("dirichlet.dx", self.dirichlet.dx.to_string());
        kv("dirichlet.lower", fmt_opt(self.dirichlet.lower));
        kv("dirichlet.upper", fmt_opt(self.dirichlet.upper));
        kv("output.snapshot_every", self.output.snapshot_every.to_string());
        kv("seed", self.seed.to_string());
        s
    }

    /// SHA-256 of the canonical text, hex encoded.
    pub fn hash(&self) -> String {
        format!("{:x}", Sha256::digest(self.to_text().as_bytes()))
    }

    /// Directory name used under the output root.
    pub fn short_hash(&self) -> String {
        self.hash()[..16].to_string()
    }

    pub fn spec(&self) -> Result<NonlinearitySpec<f64>> {
        self.nonlinearity.build()
    }

    pub fn grid(&self) -> Result<Grid<f64>> {
        Grid::symmetric(self.domain.half_width, self.domain.n_x)
            .map_err(|e| config_err("domain", e.to_string()))
    }

    pub fn initial_field(&self) -> Result<Field<f64>> {
        let (a, b) = self.initial_data.support();
        Ok(Field::from_fn(self.grid()?, |x| self.initial_data.value(x)).with_support(a, b))
    }

    pub fn ode(&self) -> OdeConfig<f64> {
        OdeConfig {
            u_max: self.tolerances.u_max,
            ..OdeConfig::for_spec(&self.nonlinearity.build().expect("validated config"))
        }
    }

    pub fn omega(&self) -> OmegaConfig<f64> {
        let period = self.nonlinearity.period;
        let mut solver = SolverConfig::for_period(period);
        if let Some(dt) = self.time.dt {
            solver.dt = dt;
        }
        solver.u_max = self.tolerances.u_max;
        solver.leak = Some(self.tolerances.leak);
        OmegaConfig {
            solver,
            max_periods: self.time.max_periods,
            tol_omega: self.tolerances.omega,
            tol_flat: self.tolerances.flat,
            tol_sym: self.tolerances.sym,
            ..OmegaConfig::for_period(period)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_text() {
        let cfg = ScenarioConfig::default();
        assert_eq!(ScenarioConfig::parse(&cfg.to_text()).unwrap(), cfg);
    }

    #[test]
    fn keys_and_comments() {
        let cfg = ScenarioConfig::parse(
            "# forced bistable\nnonlinearity.beta = 0.5\n\ninitial_data.sigma=1.2 # amplitude\nscan.range=0, 2\n",
        )
        .unwrap();
        assert_eq!(cfg.nonlinearity.beta, 0.5);
        assert_eq!(cfg.initial_data.sigma, 1.2);
        assert_eq!((cfg.scan.lo, cfg.scan.hi), (0.0, 2.0));
    }

    #[test]
    fn errors_carry_the_key() {
        let err = ScenarioConfig::parse("domain.L=abc").unwrap_err();
        assert!(matches!(&err, LabError::Config { path, .. } if path == "domain.L"));
        assert_eq!(err.exit_code(), 2);
        let err = ScenarioConfig::parse("nonsense.key=1").unwrap_err();
        assert!(matches!(&err, LabError::Config { path, .. } if path == "nonsense.key"));
        let err = ScenarioConfig::parse("tolerances.omega=0").unwrap_err();
        assert!(matches!(&err, LabError::Config { path, .. } if path == "tolerances.omega"));
        let err = ScenarioConfig::parse("initial_data.l=35").unwrap_err();
        assert!(matches!(&err, LabError::Config { path, .. } if path == "initial_data"));
        let err = ScenarioConfig::parse("nonlinearity.theta=1.5").unwrap_err();
        assert!(matches!(&err, LabError::Config { path, .. } if path == "nonlinearity"));
        assert!(ScenarioConfig::parse("just words").is_err());
    }

    #[test]
    fn custom_terms_parse() {
        let cfg = ScenarioConfig::parse("nonlinearity.family=custom\nnonlinearity.coeffs=1:0:1:0; 2:1:-1:0.5").unwrap();
        assert_eq!(cfg.nonlinearity.coeffs.len(), 2);
        assert_eq!(cfg.nonlinearity.coeffs[1].sin_coeff, 0.5);
        assert_eq!(ScenarioConfig::parse(&cfg.to_text()).unwrap(), cfg);
    }

    #[test]
    fn hash_depends_on_content_only() {
        let a = ScenarioConfig::parse("initial_data.sigma=1.2").unwrap();
        let b = ScenarioConfig::parse("# same\ninitial_data.sigma = 1.2\n").unwrap();
        let c = ScenarioConfig::parse("initial_data.sigma=1.3").unwrap();
        assert_eq!(a.hash(), b.hash());
        assert_ne!(a.hash(), c.hash());
        assert_eq!(a.short_hash().len(), 16);
    }

    #[test]
    fn initial_shapes() {
        let mut cfg = ScenarioConfig::default();
        cfg.initial_data.sigma = 1.2;
        cfg.initial_data.shape = Shape::TwoBoxes;
        cfg.initial_data.l = 1.5;
        cfg.initial_data.center = 1.5;
        cfg.initial_data.sigma2 = 0.6;
        cfg.initial_data.center2 = -3.5;
        let d = &cfg.initial_data;
        assert_eq!(d.support(), (-4.0, 3.0));
        assert_eq!(d.value(2.0), 1.2);
        assert_eq!(d.value(-3.2), 0.6);
        assert_eq!(d.value(-2.0), 0.0);
        let u0 = cfg.initial_field().unwrap();
        assert_eq!(u0.support, Some((-4.0, 3.0)));
    }
}
