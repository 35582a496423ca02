//! Command-line front end: binds a JSON experiment config to one of the
//! computation commands and writes all artifacts under a run directory
//! keyed by the config hash, so a rerun from the same config reproduces
//! byte-identical outputs.
//!
//! Exit codes: 0 success, 1 violated check (or other runtime failure),
//! 2 invalid config schema, 3 budget exceeded.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::json;
use sha2::{Digest, Sha256};

use gla::coarse::SolveMode;
use gla::estimate::{
    critical_scaling_diag, estimate_g_l, estimate_gtilde_curve, estimate_n, locate_criticality,
};
use gla::field::{DistributionSpec, WeightField};
use gla::lattice::{Adjacency, LatticeBox};
use gla::solver::{enumerate_connected, solve_exact, Budget, HeuristicParams, Instance};
use gla::verify::{any_violated, render_table, run_all, Verdict};
use gla::{Error, Result};

#[derive(Parser)]
#[command(name = "gla", version, about = "Greedy lattice animal experiments")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Dump a window of a sampled score field
    Sample(RunArgs),
    /// Solve one optimization instance
    Solve(RunArgs),
    /// Estimate N, (G, L) or the constrained-density curve
    Estimate(RunArgs),
    /// Sweep a distribution parameter and report estimates per point
    Scan(RunArgs),
    /// Locate criticality by bisection and run scaling diagnostics
    Critical(RunArgs),
    /// Run one named check or the whole suite
    Verify(RunArgs),
    /// Brute-force enumeration dumps for fixtures
    Oracle(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// JSON experiment config
    #[arg(long)]
    config: PathBuf,
    /// Override the master seed
    #[arg(long)]
    seed: Option<u64>,
    /// Base output directory (default: runs)
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override the solve mode
    #[arg(long, value_enum)]
    mode: Option<ModeOverride>,
    /// Worker threads
    #[arg(long)]
    jobs: Option<usize>,
    /// Also emit (x, y, ci) triples for plotting
    #[arg(long)]
    plot_data: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeOverride {
    Exact,
    Heuristic,
}

#[derive(Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Config {
    #[serde(default)]
    master_seed: u64,
    #[serde(default = "default_dim")]
    dim: usize,
    #[serde(default)]
    dist: Option<DistributionSpec>,
    #[serde(default)]
    mode: Option<SolveMode>,
    #[serde(default)]
    sample: Option<SampleCfg>,
    #[serde(default)]
    solve: Option<SolveCfg>,
    #[serde(default)]
    estimate: Option<EstimateCfg>,
    #[serde(default)]
    scan: Option<ScanCfg>,
    #[serde(default)]
    critical: Option<CriticalCfg>,
    #[serde(default)]
    verify: Option<VerifyCfg>,
    #[serde(default)]
    oracle: Option<OracleCfg>,
}

fn default_dim() -> usize {
    2
}

#[derive(Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SampleCfg {
    window: LatticeBox,
}

#[derive(Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SolveCfg {
    instance: Instance,
}

#[derive(Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EstimateCfg {
    statistic: String,
    #[serde(default)]
    n_list: Vec<u64>,
    reps: u64,
    #[serde(default)]
    alpha_grid: Vec<f64>,
    #[serde(default)]
    n: Option<u64>,
}

#[derive(Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScanCfg {
    p_list: Vec<f64>,
    lambda: f64,
    n: u64,
    reps: u64,
}

#[derive(Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CriticalCfg {
    bracket: (f64, f64),
    n_probe: u64,
    reps: u64,
    #[serde(default)]
    c_exponent: Option<f64>,
    #[serde(default)]
    n_list: Vec<u64>,
}

#[derive(Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct VerifyCfg {
    check: String,
}

#[derive(Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct OracleCfg {
    window: LatticeBox,
    #[serde(default)]
    fixed_size: Option<u64>,
    #[serde(default = "default_adjacency")]
    adjacency: String,
    #[serde(default = "default_cap")]
    cap: u64,
}

fn default_adjacency() -> String {
    "nn".into()
}

fn default_cap() -> u64 {
    1 << 22
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (name, args) = match &cli.command {
        Cmd::Sample(a) => ("sample", a),
        Cmd::Solve(a) => ("solve", a),
        Cmd::Estimate(a) => ("estimate", a),
        Cmd::Scan(a) => ("scan", a),
        Cmd::Critical(a) => ("critical", a),
        Cmd::Verify(a) => ("verify", a),
        Cmd::Oracle(a) => ("oracle", a),
    };
    match run(name, args) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::InvalidInput(_) | Error::Serde(_) => 2,
        Error::BudgetExceeded { .. } | Error::CapExceeded { .. } => 3,
        _ => 1,
    }
}

fn load_config(args: &RunArgs) -> Result<Config> {
    let text = fs::read_to_string(&args.config)?;
    let mut cfg: Config =
        serde_json::from_str(&text).map_err(|e| Error::InvalidInput(format!("config: {e}")))?;
    if let Some(seed) = args.seed {
        cfg.master_seed = seed;
    }
    if let Some(mode) = args.mode {
        cfg.mode = Some(match mode {
            ModeOverride::Exact => SolveMode::Exact(Budget::default()),
            ModeOverride::Heuristic => SolveMode::Heuristic(HeuristicParams::default()),
        });
    }
    Ok(cfg)
}

fn mode_of(cfg: &Config) -> SolveMode {
    cfg.mode
        .clone()
        .unwrap_or(SolveMode::Exact(Budget::default()))
}

fn dist_of(cfg: &Config) -> Result<DistributionSpec> {
    cfg.dist
        .clone()
        .ok_or_else(|| Error::InvalidInput("config requires a dist".into()))
}

/// The run directory: out/run-<first 12 hex of sha256(config)>. No
/// timestamps anywhere, so reruns land in the same directory with the same
/// bytes.
fn run_dir(base: &Path, cfg: &Config) -> Result<(PathBuf, String)> {
    let canonical = serde_json::to_vec(cfg)?;
    let hash = format!("{:x}", Sha256::digest(&canonical));
    let dir = base.join(format!("run-{}", &hash[..12]));
    fs::create_dir_all(&dir)?;
    Ok((dir, hash))
}

fn write_manifest(dir: &Path, cfg: &Config, hash: &str, command: &str) -> Result<()> {
    let manifest = json!({
        "command": command,
        "config": cfg,
        "config_hash": hash,
        "version": env!("CARGO_PKG_VERSION"),
    });
    fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(&manifest)?)?;
    Ok(())
}

fn write_plot(dir: &Path, rows: &[(f64, f64, f64)]) -> Result<()> {
    let mut out = String::from("x,y,ci\n");
    for (x, y, ci) in rows {
        out.push_str(&format!("{x},{y},{ci}\n"));
    }
    fs::write(dir.join("plot.csv"), out)?;
    Ok(())
}

fn run(command: &str, args: &RunArgs) -> Result<ExitCode> {
    if let Some(jobs) = args.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .map_err(|e| Error::InvalidInput(format!("--jobs: {e}")))?;
    }
    let cfg = load_config(args)?;
    let base = args.out.clone().unwrap_or_else(|| PathBuf::from("runs"));
    let (dir, hash) = run_dir(&base, &cfg)?;
    write_manifest(&dir, &cfg, &hash, command)?;
    let mut code = ExitCode::SUCCESS;
    match command {
        "sample" => cmd_sample(&cfg, &dir)?,
        "solve" => cmd_solve(&cfg, &dir)?,
        "estimate" => cmd_estimate(&cfg, &dir, args.plot_data)?,
        "scan" => cmd_scan(&cfg, &dir, args.plot_data)?,
        "critical" => cmd_critical(&cfg, &dir)?,
        "verify" => {
            let verdicts = cmd_verify(&cfg, &dir)?;
            if any_violated(&verdicts) {
                code = ExitCode::from(1);
            }
        }
        "oracle" => cmd_oracle(&cfg, &dir)?,
        _ => unreachable!(),
    }
    println!("{}", dir.display());
    Ok(code)
}

fn cmd_sample(cfg: &Config, dir: &Path) -> Result<()> {
    let section = cfg
        .sample
        .as_ref()
        .ok_or_else(|| Error::InvalidInput("config requires a sample section".into()))?;
    let f = WeightField::new(cfg.master_seed, dist_of(cfg)?, cfg.dim)?;
    let mut out = String::from("site,score\n");
    for s in section.window.sites() {
        let coords: Vec<String> = s.coords().iter().map(|c| c.to_string()).collect();
        out.push_str(&format!("{},{}\n", coords.join(";"), f.score(&s)));
    }
    fs::write(dir.join("field.csv"), out)?;
    Ok(())
}

fn cmd_solve(cfg: &Config, dir: &Path) -> Result<()> {
    let section = cfg
        .solve
        .as_ref()
        .ok_or_else(|| Error::InvalidInput("config requires a solve section".into()))?;
    let f = WeightField::new(cfg.master_seed, dist_of(cfg)?, cfg.dim)?;
    let sol = match mode_of(cfg) {
        SolveMode::Exact(budget) => solve_exact(&f, &section.instance, &budget)?,
        SolveMode::Heuristic(params) => {
            gla::solver::heuristic_solve(&f, &section.instance, &params, cfg.master_seed)?
        }
    };
    fs::write(dir.join("solve.json"), serde_json::to_string_pretty(&sol)?)?;
    Ok(())
}

fn cmd_estimate(cfg: &Config, dir: &Path, plot: bool) -> Result<()> {
    let section = cfg
        .estimate
        .as_ref()
        .ok_or_else(|| Error::InvalidInput("config requires an estimate section".into()))?;
    let dist = dist_of(cfg)?;
    let mode = mode_of(cfg);
    match section.statistic.as_str() {
        "n" => {
            let s = estimate_n(&dist, cfg.dim, &section.n_list, section.reps, &mode, cfg.master_seed)?;
            let mut buf = Vec::new();
            s.write_csv(&mut buf)?;
            fs::write(dir.join("series.csv"), buf)?;
            fs::write(
                dir.join("summary.json"),
                serde_json::to_string_pretty(&json!({
                    "statistic": s.statistic,
                    "lower_bound_only": s.lower_bound_only,
                    "overall": s.overall(),
                    "by_n": s.by_n(),
                }))?,
            )?;
            if plot {
                let rows: Vec<(f64, f64, f64)> = s
                    .by_n()
                    .iter()
                    .map(|(&n, sum)| (n as f64, sum.mean, sum.ci_half))
                    .collect();
                write_plot(dir, &rows)?;
            }
        }
        "g_l" => {
            let (g, l) =
                estimate_g_l(&dist, cfg.dim, &section.n_list, section.reps, &mode, cfg.master_seed)?;
            for (name, s) in [("g_series.csv", &g), ("l_series.csv", &l)] {
                let mut buf = Vec::new();
                s.write_csv(&mut buf)?;
                fs::write(dir.join(name), buf)?;
            }
            fs::write(
                dir.join("summary.json"),
                serde_json::to_string_pretty(&json!({
                    "g": g.overall(), "l": l.overall(),
                    "band": gla::estimate::fit_band(&g),
                    "lower_bound_only": g.lower_bound_only,
                }))?,
            )?;
            if plot {
                let rows: Vec<(f64, f64, f64)> = g
                    .by_n()
                    .iter()
                    .map(|(&n, sum)| (n as f64, sum.mean, sum.ci_half))
                    .collect();
                write_plot(dir, &rows)?;
            }
        }
        "gtilde" => {
            let n = section
                .n
                .ok_or_else(|| Error::InvalidInput("gtilde needs a scale n".into()))?;
            let curve = estimate_gtilde_curve(
                &dist,
                cfg.dim,
                n,
                &section.alpha_grid,
                section.reps,
                &mode,
                cfg.master_seed,
            )?;
            let mut buf = Vec::new();
            for s in &curve.series {
                s.write_csv(&mut buf)?;
            }
            fs::write(dir.join("curve.csv"), buf)?;
            fs::write(
                dir.join("summary.json"),
                serde_json::to_string_pretty(&json!({
                    "alpha_grid": curve.alpha_grid,
                    "means": curve.summaries(),
                    "violations": curve.violations,
                    "small_alpha_slope": curve.small_alpha_slope,
                }))?,
            )?;
            if plot {
                let rows: Vec<(f64, f64, f64)> = curve
                    .alpha_grid
                    .iter()
                    .zip(curve.summaries())
                    .map(|(&a, sum)| (a, sum.mean, sum.ci_half))
                    .collect();
                write_plot(dir, &rows)?;
            }
        }
        other => {
            return Err(Error::InvalidInput(format!("unknown statistic {other}")));
        }
    }
    Ok(())
}

fn cmd_scan(cfg: &Config, dir: &Path, plot: bool) -> Result<()> {
    let section = cfg
        .scan
        .as_ref()
        .ok_or_else(|| Error::InvalidInput("config requires a scan section".into()))?;
    let mode = mode_of(cfg);
    let mut out = String::from("p,n_mean,n_ci,g_mean,g_ci\n");
    let mut rows = Vec::new();
    for &p in &section.p_list {
        let dist = DistributionSpec::TwoPointPenalty {
            p,
            lambda: section.lambda,
        };
        // replica seeds depend only on the master seed, so the sweep is a
        // shared-seed monotone coupling across p
        let n_hat = estimate_n(&dist, cfg.dim, &[section.n], section.reps, &mode, cfg.master_seed)?
            .overall();
        let (g, _) =
            estimate_g_l(&dist, cfg.dim, &[section.n], section.reps, &mode, cfg.master_seed)?;
        let g_hat = g.overall();
        out.push_str(&format!(
            "{p},{},{},{},{}\n",
            n_hat.mean, n_hat.ci_half, g_hat.mean, g_hat.ci_half
        ));
        rows.push((p, n_hat.mean, n_hat.ci_half));
    }
    fs::write(dir.join("scan.csv"), out)?;
    if plot {
        write_plot(dir, &rows)?;
    }
    Ok(())
}

fn cmd_critical(cfg: &Config, dir: &Path) -> Result<()> {
    let section = cfg
        .critical
        .as_ref()
        .ok_or_else(|| Error::InvalidInput("config requires a critical section".into()))?;
    let dist = dist_of(cfg)?;
    let mode = mode_of(cfg);
    let result = locate_criticality(
        &dist,
        cfg.dim,
        section.bracket,
        section.n_probe,
        section.reps,
        &mode,
        cfg.master_seed,
    )?;
    fs::write(dir.join("critical.json"), serde_json::to_string_pretty(&result)?)?;
    if let (Some(c), false) = (section.c_exponent, section.n_list.is_empty()) {
        let tuned = DistributionSpec::ShiftedBy {
            base: Box::new(dist),
            epsilon: result.epsilon,
        };
        let series = critical_scaling_diag(
            &tuned,
            cfg.dim,
            c,
            &section.n_list,
            section.reps,
            &mode,
            cfg.master_seed,
        )?;
        let mut buf = Vec::new();
        series.write_csv(&mut buf)?;
        fs::write(dir.join("scaling.csv"), buf)?;
        fs::write(
            dir.join("scaling.json"),
            serde_json::to_string_pretty(&json!({
                "by_n": series.by_n(),
                "nonincreasing": gla::estimate::means_nonincreasing(&series, 0.0),
            }))?,
        )?;
    }
    Ok(())
}

fn cmd_verify(cfg: &Config, dir: &Path) -> Result<Vec<Verdict>> {
    let section = cfg
        .verify
        .as_ref()
        .ok_or_else(|| Error::InvalidInput("config requires a verify section".into()))?;
    let all = run_all(cfg.master_seed)?;
    let verdicts: Vec<Verdict> = if section.check == "all" {
        all
    } else {
        let picked: Vec<Verdict> = all
            .into_iter()
            .filter(|v| v.claim == section.check)
            .collect();
        if picked.is_empty() {
            return Err(Error::InvalidInput(format!(
                "unknown check {}",
                section.check
            )));
        }
        picked
    };
    fs::write(dir.join("verdicts.json"), serde_json::to_string_pretty(&verdicts)?)?;
    fs::write(dir.join("table.txt"), render_table(&verdicts))?;
    print!("{}", render_table(&verdicts));
    Ok(verdicts)
}

fn cmd_oracle(cfg: &Config, dir: &Path) -> Result<()> {
    let section = cfg
        .oracle
        .as_ref()
        .ok_or_else(|| Error::InvalidInput("config requires an oracle section".into()))?;
    let f = WeightField::new(cfg.master_seed, dist_of(cfg)?, cfg.dim)?;
    let adj = match section.adjacency.as_str() {
        "nn" => Adjacency::NearestNeighbor,
        "l" => Adjacency::LGraph,
        other => {
            return Err(Error::InvalidInput(format!("unknown adjacency {other}")));
        }
    };
    let mut file = fs::File::create(dir.join("animals.csv"))?;
    writeln!(file, "weight,size,sites")?;
    enumerate_connected(
        &f,
        &section.window,
        adj,
        section.fixed_size,
        None,
        None,
        section.cap,
        |r, w| {
            let sites: Vec<String> = r
                .iter()
                .map(|s| {
                    s.coords()
                        .iter()
                        .map(|c| c.to_string())
                        .collect::<Vec<_>>()
                        .join(":")
                })
                .collect();
            writeln!(file, "{w},{},{}", r.len(), sites.join(";"))?;
            Ok(())
        },
    )?;
    Ok(())
}
