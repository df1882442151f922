use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use vbocp::bench::{build_offline, problem_for, run_to_dir, ExperimentConfig, Offline};
use vbocp::mesh::{write_mesh, Geometry};
use vbocp::ocp::{solve_hf, ParameterPoint};
use vbocp::persist::write_values;
use vbocp::rom::{relative_errors, Strategy};
use vbocp::stability::{beta_h_direct, beta_lower_bound, constants};

#[derive(Parser)]
#[command(name = "vbocp", version, about = "Reduced-order optimal control with a moving control boundary")]
struct Cli {
    /// Experiment configuration (JSON, snake_case field names).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Start from the full-size defaults instead of the desk-scale ones.
    #[arg(long, global = true)]
    paper_scale: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the configured mesh.
    Mesh {
        #[arg(long, default_value = "mesh.txt")]
        out: PathBuf,
    },
    /// Solve the optimality system at one parameter.
    HfSolve {
        #[command(flatten)]
        mu: Mu,
        /// Directory for y.txt, p.txt and solution.json.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Build and store one reduced model.
    Offline {
        #[arg(long, value_parser = parse_strategy)]
        strategy: Strategy,
        #[arg(long, short)]
        n: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Solve a stored reduced model at one parameter.
    Online {
        #[arg(long, value_parser = parse_strategy)]
        strategy: Strategy,
        #[arg(long)]
        model: PathBuf,
        #[command(flatten)]
        mu: Mu,
        /// Also solve the full problem and report relative errors.
        #[arg(long)]
        compare: bool,
    },
    /// Run the full experiment and write its reports.
    Bench {
        #[arg(long, default_value = "bench-out")]
        out: PathBuf,
    },
    /// Stability constants and inf-sup check over random parameters.
    Stability {
        #[arg(long, default_value_t = 10)]
        samples: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        /// CSV destination; standard output if omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct Mu {
    #[arg(long)]
    mu1: f64,
    #[arg(long)]
    mu2: f64,
    #[arg(long)]
    muu: f64,
}

fn parse_strategy(s: &str) -> Result<Strategy, String> {
    serde_json::from_value(serde_json::Value::String(s.to_string()))
        .map_err(|_| format!("unknown strategy {s:?} (pod, deim_pod, lpod, geor)"))
}

/// Config file fields layered over the desk or paper-scale defaults of its geometry.
fn load_config(path: Option<&Path>, paper_scale: bool) -> Result<ExperimentConfig> {
    let overlay = match path {
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            serde_json::from_str::<serde_json::Value>(&text).with_context(|| format!("parsing {}", p.display()))?
        }
        None => serde_json::json!({}),
    };
    let Some(fields) = overlay.as_object() else {
        bail!("configuration must be a JSON object");
    };
    let geometry: Geometry = match fields.get("geometry") {
        Some(g) => serde_json::from_value(g.clone()).context("geometry")?,
        None => Geometry::Test1,
    };
    let base = if paper_scale {
        ExperimentConfig::paper_scale(geometry)
    } else {
        ExperimentConfig::desk(geometry)
    };
    let mut merged = serde_json::to_value(base)?;
    let target = merged.as_object_mut().expect("config serialises to an object");
    for (k, v) in fields {
        target.insert(k.clone(), v.clone());
    }
    let config: ExperimentConfig = serde_json::from_value(merged).context("invalid configuration")?;
    config.validate()?;
    Ok(config)
}

fn point(config: &ExperimentConfig, mu: &Mu) -> ParameterPoint {
    ParameterPoint::new(mu.mu1, mu.mu2, mu.muu).with_alpha(config.alpha)
}

#[derive(Serialize)]
struct SolutionSummary {
    mu: ParameterPoint,
    cost: f64,
    residual: f64,
    n_free: usize,
    control_dofs: usize,
}

#[derive(Serialize)]
struct StabilityRow {
    mu1: f64,
    mu2: f64,
    muu: f64,
    gamma_a: f64,
    #[serde(rename = "gamma_T")]
    gamma_t: f64,
    #[serde(rename = "C_omega")]
    c_omega: f64,
    beta_lb: f64,
    beta_h: f64,
    ok: bool,
}

fn stability_rows(config: &ExperimentConfig, samples: usize, seed: u64) -> Result<Vec<StabilityRow>> {
    let problem = problem_for(config, Strategy::Pod)?;
    let (ua, ub) = config.muu_interval();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut open = |a: f64, b: f64| loop {
        let v = rng.random_range(a..b);
        if v > a {
            break v;
        }
    };
    let params: Vec<ParameterPoint> = (0..samples)
        .map(|_| {
            let mu1 = open(config.mu1_range[0], config.mu1_range[1]);
            let mu2 = open(config.mu2_range[0], config.mu2_range[1]);
            ParameterPoint::new(mu1, mu2, open(ua, ub)).with_alpha(config.alpha)
        })
        .collect();
    vbocp::parallel::install(|| {
        params
            .par_iter()
            .map(|mu| -> Result<StabilityRow> {
                let ops = problem.assemble(mu)?;
                let k = constants(&ops, mu.alpha)?;
                let beta_lb = beta_lower_bound(&k)?.beta;
                let beta_h = beta_h_direct(&ops, mu.alpha)?;
                Ok(StabilityRow {
                    mu1: mu.mu1,
                    mu2: mu.mu2,
                    muu: mu.muu,
                    gamma_a: k.gamma_a,
                    gamma_t: k.gamma_t,
                    c_omega: k.c_omega,
                    beta_lb,
                    beta_h,
                    ok: beta_h >= beta_lb - 1e-12,
                })
            })
            .collect()
    })
}

fn run(cli: Cli) -> Result<()> {
    let config = load_config(cli.config.as_deref(), cli.paper_scale)?;
    match cli.command {
        Command::Mesh { out } => {
            let mesh = config.geometry.generate(config.h)?;
            write_mesh(&mesh, &out)?;
            println!(
                "{} vertices, {} triangles, hash {} -> {}",
                mesh.n_vertices(),
                mesh.triangles().len(),
                mesh.content_hash(),
                out.display()
            );
        }
        Command::HfSolve { mu, out } => {
            let problem = problem_for(&config, Strategy::Pod)?;
            let mu = point(&config, &mu);
            let s = solve_hf(&problem, &mu)?;
            let summary = SolutionSummary {
                mu,
                cost: s.cost,
                residual: s.residual,
                n_free: problem.n_free(),
                control_dofs: s.control_dofs.len(),
            };
            println!("{}", serde_json::to_string_pretty(&summary)?);
            if let Some(dir) = out {
                std::fs::create_dir_all(&dir)?;
                write_values(&dir.join("y.txt"), s.y.as_slice())?;
                write_values(&dir.join("p.txt"), s.p.as_slice())?;
                std::fs::write(dir.join("solution.json"), serde_json::to_string_pretty(&summary)?)?;
            }
        }
        Command::Offline { strategy, n, out } => {
            let problem = problem_for(&config, strategy)?;
            let built = build_offline(&config, &problem, strategy, n)?;
            built.save(&out, &problem, config.seed)?;
            match &built {
                Offline::Global { model, .. } => println!("{} model of dimension {} -> {}", strategy.name(), model.dim(), out.display()),
                Offline::Local(p) => println!("lpod partition {:?} -> {}", p.bounds(), out.display()),
            }
        }
        Command::Online { strategy, model, mu, compare } => {
            let problem = problem_for(&config, strategy)?;
            let offline = Offline::load(&model, &problem)?;
            let mu = point(&config, &mu);
            let rom = offline.solve(&problem, &mu)?;
            println!("reduced state coefficients: {}", rom.y_n.len());
            if compare {
                let hf = solve_hf(&problem, &mu)?;
                let (ey, ep) = relative_errors(&problem, &hf, &rom)?;
                println!("E_y = {ey:.6e}, E_p = {ep:.6e}");
            }
        }
        Command::Bench { out } => {
            let report = run_to_dir(&config, &out)?;
            for s in &report.strategies {
                for e in &s.errors {
                    println!("{:>9} N = {:>3}  E_y = {:.4e}  E_p = {:.4e}", s.strategy.name(), e.n, e.e_y, e.e_p);
                }
            }
            for t in &report.timings.strategies {
                if let Some(s) = t.speedup {
                    println!("{:>9} speed-up at N = {}: {s:.1}", t.strategy.name(), t.n);
                }
            }
            println!("reports written to {}", out.display());
        }
        Command::Stability { samples, seed, out } => {
            let rows = stability_rows(&config, samples, seed)?;
            let mut w: csv::Writer<Box<dyn std::io::Write>> = match &out {
                Some(p) => csv::Writer::from_writer(Box::new(std::fs::File::create(p)?)),
                None => csv::Writer::from_writer(Box::new(std::io::stdout())),
            };
            for r in &rows {
                w.serialize(r)?;
            }
            w.flush()?;
            if rows.iter().any(|r| !r.ok) {
                bail!("inf-sup lower bound violated for at least one sample");
            }
        }
    }
    Ok(())
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
