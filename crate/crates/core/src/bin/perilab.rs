use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::json;

use perilab::kinetics::{build_perturbation_g, classify_trajectory, poincare_map};
use perilab::lab::{
    dirichlet_build, dirichlet_pair, emit_plots, orbit_scan, run_scenario, sharp_threshold,
    write_json, ScenarioConfig,
};
use perilab::LabError;

#[derive(Parser)]
#[command(name = "perilab", version, about = "Time-periodic reaction-diffusion laboratory")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and write its artifacts.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Bisect the initial amplitude between extinction and propagation.
    Threshold {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        lo: f64,
        #[arg(long)]
        hi: f64,
        #[arg(long)]
        width: f64,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Kinetics ODE tools.
    Ode {
        #[command(subcommand)]
        command: OdeCommand,
    },
    /// Build the periodic Dirichlet solution.
    DirichletBuild {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Regenerate plot data for a report directory.
    Plots { dir: PathBuf },
}

#[derive(Subcommand)]
enum OdeCommand {
    /// Periodic orbits over a range of initial values.
    Orbits {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, allow_hyphen_values = true)]
        range: Option<String>,
    },
    /// Shape of the trajectory starting at `a`.
    Classify {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, allow_hyphen_values = true)]
        a: f64,
    },
    /// The perturbation `g` between the Dirichlet orbit pair, as CSV.
    Gfun {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 41)]
        n: usize,
    },
}

struct Failure {
    code: u8,
    msg: String,
}

impl From<LabError> for Failure {
    fn from(e: LabError) -> Self {
        Failure {
            code: e.exit_code() as u8,
            msg: e.to_string(),
        }
    }
}

fn load(path: Option<&Path>) -> Result<ScenarioConfig, Failure> {
    let cfg = match path {
        Some(p) => ScenarioConfig::from_file(p)?,
        None => ScenarioConfig::default(),
    };
    cfg.validate()?;
    Ok(cfg)
}

fn print_json(value: &serde_json::Value) {
    println!("{}", serde_json::to_string_pretty(value).expect("json values serialize"));
}

fn configure_threads() -> Result<(), Failure> {
    let Ok(raw) = std::env::var("PERILAB_THREADS") else {
        return Ok(());
    };
    let n: usize = raw.trim().parse().ok().filter(|&n| n > 0).ok_or_else(|| Failure {
        code: 2,
        msg: format!("PERILAB_THREADS must be a positive integer, got {raw:?}"),
    })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Failure { code: 3, msg: e.to_string() })
}

fn run(cli: Cli) -> Result<(), Failure> {
    configure_threads()?;
    match cli.command {
        Command::Run { config, out } => {
            let cfg = load(Some(&config))?;
            let outcome = run_scenario(&cfg, Some(&out))?;
            let r = &outcome.report;
            println!(
                "{} x0={} periods={} residual={:e} dir={}",
                r.verdict.label(),
                r.x0,
                r.periods_used,
                r.residual,
                outcome.dir.as_deref().unwrap_or(&out).display()
            );
        }
        Command::Threshold { config, lo, hi, width, out } => {
            let cfg = load(Some(&config))?;
            let res = sharp_threshold(&cfg, lo, hi, width)?;
            let dir = out.join(cfg.short_hash());
            std::fs::create_dir_all(&dir).map_err(LabError::from)?;
            std::fs::write(dir.join("config.txt"), cfg.to_text()).map_err(LabError::from)?;
            let near = &res.near_threshold_report;
            let summary = json!({
                "sigma_star": res.sigma_star,
                "bracket": [res.bracket.0, res.bracket.1],
                "bracket_width": res.bracket_width,
                "below": res.below_verdict.label(),
                "above": res.above_verdict.label(),
                "above_level": res.above_level,
                "edge_sigma": res.edge_sigma,
                "near_threshold": {
                    "sigma": res.near_threshold_sigma,
                    "verdict": near.verdict.label(),
                    "x0": near.x0,
                    "base": near.base_orbit.as_ref().map(|o| o.a0),
                    "level": near.level,
                    "residual": near.residual,
                    "periods_used": near.periods_used,
                },
                "probes": res.probes,
            });
            write_json(&dir.join("threshold.json"), &summary)?;
            print_json(&summary);
        }
        Command::Ode { command } => match command {
            OdeCommand::Orbits { config, range } => {
                let mut cfg = load(config.as_deref())?;
                if let Some(r) = range {
                    cfg.set("scan.range", &r)?;
                    cfg.validate()?;
                }
                let scan = orbit_scan(&cfg)?;
                let orbits: Vec<_> = scan
                    .candidates()
                    .map(|o| {
                        json!({
                            "a0": o.a0,
                            "floquet": o.floquet,
                            "stability_below": o.stability_below,
                            "stability_above": o.stability_above,
                            "in_yper": o.in_yper,
                        })
                    })
                    .collect();
                let plateaus: Vec<_> = scan.plateaus.iter().map(|p| [p.lo, p.hi]).collect();
                print_json(&json!({ "orbits": orbits, "plateaus": plateaus }));
            }
            OdeCommand::Classify { config, a } => {
                let cfg = load(config.as_deref())?;
                let spec = cfg.spec()?;
                let ode = cfg.ode();
                let class = classify_trajectory(&spec, a, &ode)?;
                let p = poincare_map(&spec, a, &ode)?;
                println!("a={a} P(a)={p} class={}", class.label());
            }
            OdeCommand::Gfun { config, n } => {
                let cfg = load(config.as_deref())?;
                let spec = cfg.spec()?;
                let scan = orbit_scan(&cfg)?;
                let (lo, hi) = dirichlet_pair(&cfg, &scan)?;
                let g = build_perturbation_g(&spec, &lo, &hi, n, &cfg.ode())?;
                println!("# kappa={} slope_bound={} c1={}", g.kappa, g.slope_bound, g.c1);
                println!("a,g,dg,eps_star");
                for (a, e) in g.grid.iter().zip(&g.eps_star) {
                    println!("{a},{},{},{e}", g.value(*a), g.derivative(*a));
                }
            }
        },
        Command::DirichletBuild { config, out } => {
            let cfg = load(Some(&config))?;
            let outcome = dirichlet_build(&cfg, Some(&out)).map_err(|e| Failure {
                code: e.exit_code() as u8,
                msg: e.to_string(),
            })?;
            let c = &outcome.certificate;
            println!(
                "R={} period_residual={:e} monotone_certificate={} periods={} dir={}",
                c.r,
                c.period_residual,
                c.monotone_certificate,
                c.periods_used,
                outcome.dir.as_deref().unwrap_or(&out).display()
            );
        }
        Command::Plots { dir } => {
            for path in emit_plots(&dir)? {
                println!("{}", path.display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("perilab: {}", f.msg);
            ExitCode::from(f.code)
        }
    }
}
