mod checks;
mod config;
mod data;
mod output;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use config::{BanditFile, LabyrinthFile, SweepFile};
use serde::Serialize;
use sgprop_core::envs::{parse_idx, MAGIC_IMAGES};
use sgprop_core::expert::{log_ratio_slope, mse_ratio_sweep};
use sgprop_core::training::{config_hash, run_bandit_experiment, run_labyrinth_experiment, Method, RunResult};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "sgprop", version, about = "Synthetic-gradient propagation experiments")]
struct Cli {
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    /// TOML config (JSON when the file ends in `.json`).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Seed list, e.g. `0,1,2`; replaces the config's `seeds`.
    #[arg(long, value_delimiter = ',')]
    seed: Vec<u64>,
    #[arg(long)]
    method: Option<Method>,
    /// Print the resolved config as JSON and exit.
    #[arg(long)]
    print_config: bool,
}

#[derive(Subcommand)]
enum Command {
    /// MSE ratio of pooled vs per-state estimators on expert networks; writes ratio.csv.
    ExpertSweep {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long)]
        print_config: bool,
    },
    /// Contextual bandit over digit images.
    Bandit(RunArgs),
    /// Recurrent policy in a gridworld maze.
    Labyrinth(RunArgs),
    /// Exact-enumeration invariant suite; exits non-zero on any failure.
    TabularChecks {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Instances per check.
        #[arg(long, default_value_t = 8)]
        instances: usize,
    },
    /// Describe an IDX image or label file.
    IdxInspect { file: PathBuf },
}

#[derive(Serialize)]
struct RunEntry {
    seed: u64,
    config_hash: String,
    csv: String,
    rows: usize,
    auc: f64,
    final_metric: Option<f64>,
    variance_win_rate: f64,
}

#[derive(Serialize)]
struct Manifest<'a, C: Serialize> {
    command: &'a str,
    version: String,
    method: Option<Method>,
    seeds: Vec<u64>,
    config_hash: String,
    config: &'a C,
    #[serde(skip_serializing_if = "Option::is_none")]
    data: Option<String>,
    runs: Vec<RunEntry>,
    created_unix: u64,
}

fn version() -> String {
    format!("v{}", env!("CARGO_PKG_VERSION"))
}

fn print_json<T: Serialize>(v: &T) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(v)?);
    Ok(())
}

fn entry(file: String, seed: u64, res: &RunResult) -> RunEntry {
    RunEntry {
        seed,
        config_hash: res.rows.first().map(|r| r.config_hash.clone()).unwrap_or_default(),
        csv: file,
        rows: res.rows.len(),
        auc: res.auc(),
        final_metric: res.rows.iter().rev().find_map(|r| r.metric),
        variance_win_rate: res.variance_win_rate(),
    }
}

fn expert_sweep(out: &Path, cfg: Option<&Path>, seed: Option<u64>, trials: Option<usize>, print: bool) -> Result<()> {
    let mut file: SweepFile = config::load(cfg)?;
    if let Some(s) = seed {
        file.seed = s;
    }
    if let Some(t) = trials {
        file.trials = t;
    }
    file.validate()?;
    if print {
        return print_json(&file);
    }
    let rows = mse_ratio_sweep(&file.to_sweep())?;
    let path = out.join("ratio.csv");
    output::write_csv(&path, &rows)?;
    let manifest = Manifest {
        command: "expert-sweep",
        version: version(),
        method: None,
        seeds: vec![file.seed],
        config_hash: config_hash(&file),
        config: &file,
        data: None,
        runs: Vec::new(),
        created_unix: output::unix_time(),
    };
    output::write_json(&out.join("expert-sweep.manifest.json"), &manifest)?;
    println!(
        "expert-sweep: {} rows, {} trials each, log2-ratio slope {:.3} -> {}",
        rows.len(),
        file.trials,
        log_ratio_slope(&rows),
        path.display()
    );
    Ok(())
}

fn bandit(out: &Path, args: &RunArgs) -> Result<()> {
    let mut file: BanditFile = config::load(args.config.as_deref())?;
    if !args.seed.is_empty() {
        file.seeds = args.seed.clone();
    }
    if let Some(m) = args.method {
        file.bandit.method = m;
    }
    file.validate()?;
    if args.print_config {
        return print_json(&file);
    }
    let (dataset, source) = data::resolve(&file.data)?;
    let method = file.bandit.method;
    let tag = serde_json::to_value(method)?.as_str().unwrap_or_default().to_string();
    let mut runs = Vec::new();
    for &seed in &file.seeds {
        let cfg = sgprop_core::training::BanditConfig { seed, ..file.bandit.clone() };
        let res = run_bandit_experiment(&cfg, &dataset).with_context(|| format!("bandit run, seed {seed}"))?;
        let name = format!("bandit-{tag}-seed{seed}.csv");
        output::write_csv(&out.join(&name), &res.rows)?;
        runs.push(entry(name, seed, &res));
    }
    let (auc, win) = means(&runs);
    write_manifest(out, "bandit", &tag, method, &file.seeds, &file, Some(source), runs)?;
    println!("bandit {tag}: {} seed(s), mean AUC {auc:.4}, variance win rate {win:.3} -> {}", file.seeds.len(), out.display());
    Ok(())
}

fn labyrinth(out: &Path, args: &RunArgs) -> Result<()> {
    let mut file: LabyrinthFile = config::load(args.config.as_deref())?;
    if !args.seed.is_empty() {
        file.seeds = args.seed.clone();
    }
    if let Some(m) = args.method {
        file.labyrinth.method = m;
    }
    file.validate()?;
    if args.print_config {
        return print_json(&file);
    }
    let method = file.labyrinth.method;
    let tag = serde_json::to_value(method)?.as_str().unwrap_or_default().to_string();
    let mut runs = Vec::new();
    for &seed in &file.seeds {
        let cfg = sgprop_core::training::LabyrinthConfig { seed, ..file.labyrinth.clone() };
        let res = run_labyrinth_experiment(&cfg).with_context(|| format!("labyrinth run, seed {seed}"))?;
        let name = format!("labyrinth-{tag}-seed{seed}.csv");
        output::write_csv(&out.join(&name), &res.rows)?;
        runs.push(entry(name, seed, &res));
    }
    let finals: Vec<f64> = runs.iter().filter_map(|r| r.final_metric).collect();
    let success = finals.iter().sum::<f64>() / finals.len().max(1) as f64;
    write_manifest(out, "labyrinth", &tag, method, &file.seeds, &file, None, runs)?;
    println!("labyrinth {tag}: {} seed(s), mean final success {success:.3} -> {}", file.seeds.len(), out.display());
    Ok(())
}

fn means(runs: &[RunEntry]) -> (f64, f64) {
    let n = runs.len().max(1) as f64;
    (runs.iter().map(|r| r.auc).sum::<f64>() / n, runs.iter().map(|r| r.variance_win_rate).sum::<f64>() / n)
}

#[allow(clippy::too_many_arguments)]
fn write_manifest<C: Serialize>(
    out: &Path,
    command: &str,
    tag: &str,
    method: Method,
    seeds: &[u64],
    config: &C,
    data: Option<String>,
    runs: Vec<RunEntry>,
) -> Result<()> {
    let manifest = Manifest {
        command,
        version: version(),
        method: Some(method),
        seeds: seeds.to_vec(),
        config_hash: config_hash(config),
        config,
        data,
        runs,
        created_unix: output::unix_time(),
    };
    output::write_json(&out.join(format!("{command}-{tag}.manifest.json")), &manifest)
}

fn tabular_checks(seed: u64, instances: usize) -> Result<bool> {
    if instances == 0 {
        bail!("--instances must be >= 1");
    }
    let rows = checks::run_all(seed, instances)?;
    print!("{}", checks::render(&rows));
    let passed = rows.iter().filter(|r| r.pass).count();
    println!("tabular-checks: {passed}/{} passed", rows.len());
    Ok(passed == rows.len())
}

fn idx_inspect(path: &Path) -> Result<()> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    let arr = parse_idx(&bytes).with_context(|| format!("parsing {}", path.display()))?;
    let magic = u32::from_be_bytes([bytes[0], bytes[1], bytes[2], bytes[3]]);
    let kind = if magic == MAGIC_IMAGES { "images" } else { "labels" };
    let (lo, hi) = arr.data.iter().fold((u8::MAX, u8::MIN), |(lo, hi), &b| (lo.min(b), hi.max(b)));
    let mean = arr.data.iter().map(|&b| f64::from(b)).sum::<f64>() / arr.data.len().max(1) as f64;
    println!("{}: {kind} dims {:?}, values {lo}..={hi}, mean {mean:.3}", path.display(), arr.dims);
    if kind == "labels" {
        let mut counts = [0usize; 256];
        for &b in &arr.data {
            counts[b as usize] += 1;
        }
        let hist: Vec<String> =
            counts.iter().enumerate().filter(|(_, &c)| c > 0).map(|(l, c)| format!("{l}:{c}")).collect();
        println!("label counts {}", hist.join(" "));
    }
    Ok(())
}

fn run(cli: Cli) -> Result<ExitCode> {
    if let Some(n) = cli.threads {
        if n == 0 {
            bail!("--threads must be >= 1");
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    let out = cli.out.as_path();
    match &cli.command {
        Command::ExpertSweep { config, seed, trials, print_config } => {
            expert_sweep(out, config.as_deref(), *seed, *trials, *print_config)?
        }
        Command::Bandit(args) => bandit(out, args)?,
        Command::Labyrinth(args) => labyrinth(out, args)?,
        Command::TabularChecks { seed, instances } => {
            if !tabular_checks(*seed, *instances)? {
                return Ok(ExitCode::from(2));
            }
        }
        Command::IdxInspect { file } => idx_inspect(file)?,
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
