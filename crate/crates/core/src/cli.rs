//! Command-line entry point.
//!
//! Every subcommand writes its outputs to `--out` together with a
//! `manifest.json` that echoes the resolved config and carries a git-style
//! content digest of each output file. Runs may execute in parallel, but every
//! file is written by this single thread after aggregation, so identical
//! arguments produce identical bytes.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::analysis::{
    self, reference_gradient, theorem1_check, theorem2_check, theorem3_grid, warm_agent,
    CheckSizes, TheoremReport,
};
use crate::config::{ExperimentConfig, KEYS_HELP};
use crate::critic::{AdvantageFn, AdvantageOracle, Baseline};
use crate::envs::{bandit_oracle_gradient, EnvKind};
use crate::error::{Error, Result};
use crate::estimators::{variance_decomposition, Decomposition, EstimatorKind, McSpec};
use crate::rng;
use crate::trainer::{aggregate_runs, run_seeds, steps_to_solve, train_seeds, RunRecord};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_NUMERIC: i32 = 2;
pub const EXIT_CHECK: i32 = 3;

/// Environment variable that overrides the config seed.
pub const SEED_ENV: &str = "ALLACT_SEED";

pub const CURVE_HEADER: &str = "episode,score,discounted_return,env_steps";
pub const MSE_HEADER: &str = "n_s,mse,n_estimates,se";
pub const DECOMP_HEADER: &str = "n_s,var_state,expected_cond_var,total_var";
pub const BAND_HEADER: &str = "episode,mean,lower,upper";
pub const SUMMARY_HEADER: &str = "estimator,runs,solved,mean_steps_to_solve,final_mean,final_lower,final_upper";
pub const THEOREM3_HEADER: &str = "bias,noise,theta_index,j,empirical,se,exact,bound,bound_holds,matches_exact";

#[derive(Parser, Debug)]
#[command(name = "allact", version, about = "All-action policy gradient estimation lab", after_help = KEYS_HELP)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train one estimator over one or many seeds and write learning curves.
    Train(TrainArgs),
    /// Train REINFORCE, Monte Carlo and quadrature on shared seeds.
    Compare(CompareArgs),
    /// Gradient MSE of Monte Carlo estimates against a REINFORCE reference.
    MseSweep(SweepArgs),
    /// Split the Monte Carlo estimator variance into state and action parts.
    VarianceDecomp(DecompArgs),
    /// Empirically check one of the three estimator theorems.
    TheoremCheck(TheoremArgs),
    /// Aggregate learning curves in a directory into bands and a summary.
    Report(ReportArgs),
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// TOML config file layered over the preset for its env.kind.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Preset to use when no config file is given.
    #[arg(long, default_value = "bandit")]
    preset: String,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Exit with status 3 when a check fails.
    #[arg(long)]
    strict: bool,
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[command(flatten)]
    common: Common,
    /// Train this seed only instead of `train.seeds` seeds.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the configured estimator (reinforce, mc-N, quad-N).
    #[arg(long)]
    estimator: Option<EstimatorKind>,
    #[arg(long)]
    episodes: Option<usize>,
}

#[derive(Args, Debug)]
struct CompareArgs {
    #[command(flatten)]
    common: Common,
    /// Monte Carlo sample count.
    #[arg(long, default_value_t = 64)]
    samples: usize,
    /// Quadrature points; 0 skips quadrature.
    #[arg(long, default_value_t = 33)]
    points: usize,
    #[arg(long)]
    episodes: Option<usize>,
    /// Number of paired seeds.
    #[arg(long)]
    seeds: Option<usize>,
}

#[derive(Args, Debug)]
struct SweepArgs {
    #[command(flatten)]
    common: Common,
    /// Comma-separated N_S values.
    #[arg(long, value_delimiter = ',')]
    ns: Option<Vec<usize>>,
    /// Estimates per N_S.
    #[arg(long)]
    estimates: Option<usize>,
    #[arg(long)]
    reference_rollouts: Option<usize>,
}

#[derive(Args, Debug)]
struct DecompArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, value_delimiter = ',')]
    ns: Option<Vec<usize>>,
    /// Draws per state.
    #[arg(long)]
    reps: Option<usize>,
    /// Number of visited states.
    #[arg(long)]
    states: Option<usize>,
}

#[derive(Args, Debug)]
struct TheoremArgs {
    #[command(flatten)]
    common: Common,
    /// Which theorem: 1 (Monte Carlo MSE), 2 (REINFORCE MSE), 3 (biased ascent).
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=3))]
    which: u8,
    /// N_S for theorem 1.
    #[arg(long, default_value_t = 8)]
    ns: usize,
    /// Critic used by theorem 1 and baseline used by theorem 2.
    #[arg(long, value_enum, default_value_t = CriticChoice::Learned)]
    critic: CriticChoice,
    /// Draws per grid point for theorem 3.
    #[arg(long, default_value_t = 10_000)]
    trials: usize,
}

#[derive(clap::ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
enum CriticChoice {
    Learned,
    Oracle,
}

#[derive(Args, Debug)]
struct ReportArgs {
    /// Directory written by `train` or `compare`; the summary is written here.
    #[arg(long)]
    dir: PathBuf,
}

/// Recorded alongside every output set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: Vec<String>,
    pub master_seed: u64,
    /// Resolved config as TOML.
    pub config: String,
    pub versions: BTreeMap<String, String>,
    /// Output path (relative to the directory) to git-style blob digest.
    pub outputs: BTreeMap<String, String>,
    pub started_unix: u64,
    pub finished_unix: u64,
}

/// `sha256("blob {len}\0" ‖ content)` in hex.
pub fn blob_digest(content: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(format!("blob {}\0", content.len()).as_bytes());
    h.update(content);
    hex::encode(h.finalize())
}

/// Lossless float text: 17 significant digits.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn now_unix() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs())
}

/// Collects output files and writes them with the manifest.
struct OutputSet {
    dir: PathBuf,
    files: BTreeMap<String, Vec<u8>>,
}

impl OutputSet {
    fn new(dir: &Path) -> Self {
        Self {
            dir: dir.to_path_buf(),
            files: BTreeMap::new(),
        }
    }

    fn add(&mut self, name: impl Into<String>, content: impl Into<Vec<u8>>) {
        self.files.insert(name.into(), content.into());
    }

    fn add_json<T: Serialize>(&mut self, name: &str, value: &T) {
        let mut text = serde_json::to_string_pretty(value).expect("serializable");
        text.push('\n');
        self.add(name, text);
    }

    fn write(self, argv: &[String], config: &ExperimentConfig, started: u64) -> Result<()> {
        let io = |path: &Path, source| Error::Io {
            path: path.display().to_string(),
            source,
        };
        std::fs::create_dir_all(&self.dir).map_err(|e| io(&self.dir, e))?;
        let mut outputs = BTreeMap::new();
        for (name, content) in &self.files {
            let path = self.dir.join(name);
            if let Some(parent) = path.parent() {
                std::fs::create_dir_all(parent).map_err(|e| io(parent, e))?;
            }
            std::fs::write(&path, content).map_err(|e| io(&path, e))?;
            outputs.insert(name.clone(), blob_digest(content));
        }
        let manifest = RunManifest {
            command: argv.to_vec(),
            master_seed: config.seed,
            config: config.to_toml(),
            versions: module_versions(),
            outputs,
            started_unix: started,
            finished_unix: now_unix(),
        };
        let path = self.dir.join("manifest.json");
        let text = serde_json::to_string_pretty(&manifest).expect("serializable") + "\n";
        std::fs::write(&path, text).map_err(|e| io(&path, e))
    }
}

fn module_versions() -> BTreeMap<String, String> {
    let v = env!("CARGO_PKG_VERSION").to_string();
    ["nn", "policy", "envs", "critic", "estimators", "analysis", "trainer", "cli"]
        .iter()
        .map(|m| (m.to_string(), v.clone()))
        .collect()
}

pub fn curve_csv(record: &RunRecord) -> String {
    let mut s = String::from(CURVE_HEADER);
    s.push('\n');
    for i in 0..record.episodes() {
        let _ = writeln!(
            s,
            "{},{},{},{}",
            i,
            fmt_f64(record.scores[i]),
            fmt_f64(record.discounted_returns[i]),
            record.env_steps[i]
        );
    }
    s
}

/// Parses a curve CSV back into a record (timings and digest are not stored).
pub fn parse_curve_csv(text: &str, seed: u64, estimator: &str) -> Result<RunRecord> {
    let mut lines = text.lines();
    if lines.next() != Some(CURVE_HEADER) {
        return Err(Error::Config(format!("curve CSV must start with `{CURVE_HEADER}`")));
    }
    let mut rec = RunRecord {
        seed,
        estimator: estimator.to_string(),
        scores: Vec::new(),
        discounted_returns: Vec::new(),
        env_steps: Vec::new(),
        episode_seconds: Vec::new(),
        final_digest: String::new(),
        failure: None,
    };
    for (n, line) in lines.enumerate() {
        let bad = || Error::Config(format!("malformed curve row {}: `{line}`", n + 2));
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 4 {
            return Err(bad());
        }
        rec.scores.push(f[1].parse().map_err(|_| bad())?);
        rec.discounted_returns.push(f[2].parse().map_err(|_| bad())?);
        rec.env_steps.push(f[3].parse().map_err(|_| bad())?);
        rec.episode_seconds.push(0.0);
    }
    Ok(rec)
}

pub fn mse_csv(rows: &[analysis::MseRow]) -> String {
    let mut s = String::from(MSE_HEADER);
    s.push('\n');
    for r in rows {
        let _ = writeln!(s, "{},{},{},{}", r.n_s, fmt_f64(r.mse), r.n_estimates, fmt_f64(r.se));
    }
    s
}

pub fn decomp_csv(rows: &[Decomposition]) -> String {
    let mut s = String::from(DECOMP_HEADER);
    s.push('\n');
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{}",
            r.n_s,
            fmt_f64(r.var_state),
            fmt_f64(r.expected_cond_var),
            fmt_f64(r.total_var)
        );
    }
    s
}

fn band_csv(records: &[RunRecord]) -> Result<String> {
    let mut s = String::from(BAND_HEADER);
    s.push('\n');
    for p in aggregate_runs(records)? {
        let _ = writeln!(s, "{},{},{},{}", p.episode, fmt_f64(p.mean), fmt_f64(p.lower), fmt_f64(p.upper));
    }
    Ok(s)
}

/// Theorem report JSON with keys `lhs, rhs, terms, satisfied, se`.
pub fn theorem_json(report: &TheoremReport) -> String {
    serde_json::to_string_pretty(report).expect("serializable") + "\n"
}

/// Runs the CLI on `argv` (program name first) and returns the exit status.
pub fn run_command<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let argv: Vec<OsString> = argv.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    let text: Vec<String> = argv.iter().map(|a| a.to_string_lossy().into_owned()).collect();
    match dispatch(cli.command, &text) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn exit_code(e: &Error) -> i32 {
    if e.is_numeric() {
        EXIT_NUMERIC
    } else {
        EXIT_CONFIG
    }
}

fn load_config(common: &Common) -> Result<ExperimentConfig> {
    let mut cfg = match &common.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::preset(&common.preset)?,
    };
    if let Ok(v) = std::env::var(SEED_ENV) {
        cfg.seed = v
            .trim()
            .parse()
            .map_err(|_| Error::Config(format!("{SEED_ENV} must be an unsigned integer, got `{v}`")))?;
    }
    Ok(cfg)
}

fn dispatch(command: Command, argv: &[String]) -> Result<i32> {
    let started = now_unix();
    match command {
        Command::Train(a) => cmd_train(a, argv, started),
        Command::Compare(a) => cmd_compare(a, argv, started),
        Command::MseSweep(a) => cmd_sweep(a, argv, started),
        Command::VarianceDecomp(a) => cmd_decomp(a, argv, started),
        Command::TheoremCheck(a) => cmd_theorem(a, argv, started),
        Command::Report(a) => cmd_report(a),
    }
}

fn verdict(strict: bool, ok: bool) -> i32 {
    if strict && !ok {
        EXIT_CHECK
    } else {
        EXIT_OK
    }
}

fn log_runs(records: &[RunRecord]) {
    for r in records {
        let last = r.scores.last().copied().unwrap_or(f64::NAN);
        eprintln!("seed {} [{}]: {} episodes, final score {last:.3}", r.seed, r.estimator, r.episodes());
        if let Some(f) = &r.failure {
            eprintln!("seed {} [{}]: stopped early: {f}", r.seed, r.estimator);
        }
    }
}

fn cmd_train(a: TrainArgs, argv: &[String], started: u64) -> Result<i32> {
    let mut cfg = load_config(&a.common)?;
    if let Some(k) = a.estimator {
        cfg.estimator = k;
    }
    if let Some(n) = a.episodes {
        cfg.train.episodes = n;
        cfg.train.window = cfg.train.window.min(n);
    }
    cfg.validate()?;
    let seeds = match a.seed {
        Some(s) => vec![s],
        None => run_seeds(&cfg),
    };
    let records = train_seeds(&cfg, &seeds)?;
    log_runs(&records);
    let mut out = OutputSet::new(&a.common.out);
    for r in &records {
        out.add(format!("curve_seed{}.csv", r.seed), curve_csv(r));
    }
    out.write(argv, &cfg, started)?;
    Ok(if records.iter().any(|r| r.failure.is_some()) {
        EXIT_NUMERIC
    } else {
        EXIT_OK
    })
}

fn cmd_compare(a: CompareArgs, argv: &[String], started: u64) -> Result<i32> {
    let mut cfg = load_config(&a.common)?;
    if let Some(n) = a.episodes {
        cfg.train.episodes = n;
        cfg.train.window = cfg.train.window.min(n);
    }
    if let Some(n) = a.seeds {
        cfg.train.seeds = n;
    }
    cfg.validate()?;
    let mut kinds = vec![EstimatorKind::Reinforce, EstimatorKind::Mc { samples: a.samples }];
    if a.points > 0 {
        kinds.push(EstimatorKind::Quadrature { points: a.points });
    }
    let seeds = run_seeds(&cfg);
    let mut out = OutputSet::new(&a.common.out);
    let mut failed = false;
    for kind in kinds {
        let mut c = cfg.clone();
        c.estimator = kind;
        c.validate()?;
        let records = train_seeds(&c, &seeds)?;
        log_runs(&records);
        failed |= records.iter().any(|r| r.failure.is_some());
        for r in &records {
            out.add(format!("{kind}/curve_seed{}.csv", r.seed), curve_csv(r));
        }
    }
    out.write(argv, &cfg, started)?;
    Ok(if failed { EXIT_NUMERIC } else { EXIT_OK })
}

fn cmd_sweep(a: SweepArgs, argv: &[String], started: u64) -> Result<i32> {
    let mut cfg = load_config(&a.common)?;
    if let Some(ns) = a.ns {
        cfg.sweep.ns = ns;
    }
    if let Some(n) = a.estimates {
        cfg.sweep.estimates = n;
    }
    if let Some(n) = a.reference_rollouts {
        cfg.sweep.reference_rollouts = n;
    }
    cfg.validate()?;
    let outcome = analysis::run_mse_protocol(&cfg)?;
    for r in &outcome.rows {
        eprintln!("N_S = {}: mse {:.4e} ± {:.1e}", r.n_s, r.mse, r.se);
    }
    let mut out = OutputSet::new(&a.common.out);
    out.add("mse.csv", mse_csv(&outcome.rows));
    out.add_json("fit.json", &outcome.fit);
    out.add_json("reference.json", &outcome.reference);
    out.write(argv, &cfg, started)?;
    let ok = outcome.fit.is_some_and(|f| f.r_squared >= 0.95 && f.c0 > 0.0 && f.c1 > 0.0);
    Ok(verdict(a.common.strict, ok))
}

fn cmd_decomp(a: DecompArgs, argv: &[String], started: u64) -> Result<i32> {
    let mut cfg = load_config(&a.common)?;
    if let Some(ns) = a.ns {
        cfg.sweep.ns = ns;
    }
    if let Some(n) = a.reps {
        cfg.sweep.reps = n;
    }
    if let Some(n) = a.states {
        cfg.sweep.states = n;
    }
    cfg.validate()?;
    let spec = cfg.env_spec()?;
    let agent = warm_agent(&cfg, cfg.seed)?;
    let mut r = rng::stream(cfg.seed, analysis::streams::DECOMPOSITION);
    let visited = analysis::visited_states(&spec, &agent.policy, cfg.sweep.states, &mut r)?;
    let states: Vec<Vec<f64>> = (0..cfg.sweep.states)
        .map(|i| visited[i * visited.len() / cfg.sweep.states].clone())
        .collect();
    let rows: Vec<Decomposition> = cfg
        .sweep
        .ns
        .iter()
        .map(|&n| variance_decomposition(&agent.policy, &agent.critics, &states, McSpec::new(n)?, cfg.sweep.reps, &mut r))
        .collect::<Result<_>>()?;
    let ok = rows.iter().all(decomposition_consistent);
    let mut out = OutputSet::new(&a.common.out);
    out.add("decomp.csv", decomp_csv(&rows));
    out.write(argv, &cfg, started)?;
    Ok(verdict(a.common.strict, ok))
}

/// `total ≈ var_state + E[cond var]` within 5% and `total ≥ var_state − 3 SE`.
pub fn decomposition_consistent(d: &Decomposition) -> bool {
    let sum = d.var_state + d.expected_cond_var;
    let rel = if d.total_var > 0.0 { (sum - d.total_var).abs() / d.total_var } else { sum.abs() };
    rel <= 0.05 && d.total_var >= d.var_state - analysis::SLACK_SE * d.var_state_se
}

fn cmd_theorem(a: TheoremArgs, argv: &[String], started: u64) -> Result<i32> {
    let cfg = load_config(&a.common)?;
    let mut out = OutputSet::new(&a.common.out);
    let report = if a.which == 3 {
        let cells = theorem3_grid(rng::derive_seed(cfg.seed, analysis::streams::THEOREM), a.trials)?;
        let mut csv = String::from(THEOREM3_HEADER);
        csv.push('\n');
        for c in &cells {
            for (i, p) in c.report.points.iter().enumerate() {
                let _ = writeln!(
                    csv,
                    "{},{},{},{},{},{},{},{},{},{}",
                    fmt_f64(c.bias),
                    fmt_f64(c.noise),
                    i,
                    fmt_f64(p.j),
                    fmt_f64(p.empirical),
                    fmt_f64(p.se),
                    fmt_f64(p.exact),
                    fmt_f64(p.bound),
                    p.bound_holds,
                    p.matches_exact
                );
            }
        }
        out.add("theorem3_grid.csv", csv);
        let worst = cells
            .iter()
            .map(|c| c.report.summary())
            .min_by(|x, y| (x.rhs - x.lhs).total_cmp(&(y.rhs - y.lhs)))
            .expect("nonempty grid");
        let mut rep = worst;
        rep.satisfied = cells.iter().all(|c| c.report.satisfied && c.report.matches_exact);
        rep
    } else {
        let spec = cfg.env_spec()?;
        let agent = warm_agent(&cfg, cfg.seed)?;
        let oracle = AdvantageOracle::for_policy(&spec, &agent.policy)?;
        let mut r = rng::stream(cfg.seed, analysis::streams::THEOREM);
        let sizes = CheckSizes::from_config(&cfg);
        let (critic, baseline): (&dyn AdvantageFn, &dyn Baseline) = match a.critic {
            CriticChoice::Learned => (&agent.critics, &agent.critics),
            CriticChoice::Oracle => (&oracle, &oracle),
        };
        if a.which == 1 {
            let reference = reference_gradient(&spec, &agent.policy, baseline, cfg.sweep.reference_rollouts, &mut r)?;
            theorem1_check(&spec, &agent.policy, critic, &oracle, McSpec::new(a.ns)?, &reference.grad, sizes, &mut r)?
        } else {
            let truth = match &spec.kind {
                EnvKind::Bandit(_) => bandit_oracle_gradient(&spec, &agent.policy)?.into_inner(),
                _ => {
                    reference_gradient(&spec, &agent.policy, &oracle, cfg.sweep.reference_rollouts, &mut r)?
                        .grad
                        .into_inner()
                }
            };
            theorem2_check(&spec, &agent.policy, baseline, &oracle, &truth, cfg.sweep.estimates, sizes, &mut r)?
        }
    };
    eprintln!(
        "theorem {}: lhs {:.4e} rhs {:.4e} se {:.2e} satisfied {}",
        a.which, report.lhs, report.rhs, report.se, report.satisfied
    );
    out.add(format!("theorem{}.json", a.which), theorem_json(&report));
    out.write(argv, &cfg, started)?;
    Ok(verdict(a.common.strict, report.satisfied))
}

/// Curve files under `dir` grouped by estimator: `dir/curve_seed*.csv` uses the
/// manifest's estimator, `dir/<estimator>/curve_seed*.csv` the folder name.
fn collect_curves(dir: &Path, default_estimator: &str) -> Result<BTreeMap<String, Vec<RunRecord>>> {
    let io = |path: &Path, source| Error::Io {
        path: path.display().to_string(),
        source,
    };
    let mut groups: BTreeMap<String, Vec<RunRecord>> = BTreeMap::new();
    let mut scan = |d: &Path, name: &str| -> Result<()> {
        let mut entries: Vec<PathBuf> = std::fs::read_dir(d)
            .map_err(|e| io(d, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .collect();
        entries.sort();
        for p in entries {
            let file = p.file_name().and_then(|f| f.to_str()).unwrap_or_default();
            let Some(seed) = file.strip_prefix("curve_seed").and_then(|f| f.strip_suffix(".csv")) else {
                continue;
            };
            let Ok(seed) = seed.parse::<u64>() else { continue };
            let text = std::fs::read_to_string(&p).map_err(|e| io(&p, e))?;
            groups.entry(name.to_string()).or_default().push(parse_curve_csv(&text, seed, name)?);
        }
        Ok(())
    };
    scan(dir, default_estimator)?;
    let mut subdirs: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir())
        .collect();
    subdirs.sort();
    for sub in subdirs {
        let name = sub.file_name().and_then(|f| f.to_str()).unwrap_or_default().to_string();
        scan(&sub, &name)?;
    }
    for runs in groups.values_mut() {
        runs.sort_by_key(|r| r.seed);
    }
    Ok(groups)
}

fn cmd_report(a: ReportArgs) -> Result<i32> {
    let manifest_path = a.dir.join("manifest.json");
    let text = std::fs::read_to_string(&manifest_path).map_err(|source| Error::Io {
        path: manifest_path.display().to_string(),
        source,
    })?;
    let manifest: RunManifest =
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", manifest_path.display())))?;
    let cfg = ExperimentConfig::from_toml_str(&manifest.config)?;
    let groups = collect_curves(&a.dir, &cfg.estimator.to_string())?;
    if groups.is_empty() {
        return Err(Error::Config(format!("no curve_seed*.csv files under {}", a.dir.display())));
    }
    let mut summary = String::from(SUMMARY_HEADER);
    summary.push('\n');
    let mut out = OutputSet::new(&a.dir.join("report"));
    for (name, runs) in &groups {
        let steps: Vec<f64> = runs
            .iter()
            .filter_map(|r| steps_to_solve(r, cfg.train.solve_threshold, cfg.train.window))
            .map(|s| s as f64)
            .collect();
        let mean_steps = if steps.is_empty() { f64::NAN } else { crate::stats::mean(&steps) };
        let (fmean, flo, fhi) = if runs.len() >= 2 {
            out.add(format!("band_{name}.csv"), band_csv(runs)?);
            let last = aggregate_runs(runs)?.pop().expect("nonempty curves");
            (last.mean, last.lower, last.upper)
        } else {
            let s = runs[0].scores.last().copied().unwrap_or(f64::NAN);
            (s, s, s)
        };
        let _ = writeln!(
            summary,
            "{name},{},{},{},{},{},{}",
            runs.len(),
            steps.len(),
            fmt_f64(mean_steps),
            fmt_f64(fmean),
            fmt_f64(flo),
            fmt_f64(fhi)
        );
    }
    out.add("summary.csv", summary);
    let argv = vec!["report".to_string(), a.dir.display().to_string()];
    out.write(&argv, &cfg, now_unix())?;
    eprintln!("wrote {}", a.dir.join("report").display());
    Ok(EXIT_OK)
}
