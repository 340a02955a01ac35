use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, CommandFactory, Parser, Subcommand, ValueEnum};
use coadapt_core::analysis::{emit_plots, summarize_last_seconds, uniform_edges, CostStat, SummaryOptions};
use coadapt_core::config::{game_to_string, resolve_game};
use coadapt_core::dynamics::{
    random_game, run_sweep, simulate_simultaneous_gd, simulate_zeroth_order, summarize_sweep, write_sweep_summary,
    RandomGameOptions, RateMode, SimConfig,
};
use coadapt_core::protocol::SessionPlan;
use coadapt_core::records::read_trials_csv;
use coadapt_core::{GameParams, Vector};
use coadapt_server::{ExportFilter, ServerConfig, Store};
use serde::Serialize;

#[derive(Debug, Parser)]
#[command(name = "coadapt", version, about = "Quadratic human-AI co-adaptation games")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(tag = "command", rename_all = "kebab-case")]
enum Command {
    /// Solve the Nash and human-led Stackelberg equilibria and check them.
    Equilibria(EquilibriaArgs),
    /// Simulate one run of the learning dynamics and write its trajectory.
    Simulate(SimulateArgs),
    /// Simulate every (rate, seed) pair and summarize final distances.
    Sweep(SweepArgs),
    /// Generate a random game satisfying the existence conditions.
    GenGame(GenGameArgs),
    /// Run the data-collection server.
    Serve(ServeArgs),
    /// Export stored trials as the sample CSV table.
    Export(ExportArgs),
    /// Summarize exported trials and write plot files.
    Analyze(AnalyzeArgs),
}

#[derive(Debug, Args, Serialize)]
struct EquilibriaArgs {
    /// Game file, or a bundled game: 2x2, 1x2, 2x1.
    #[arg(long)]
    game: String,
    /// Print JSON instead of text.
    #[arg(long)]
    json: bool,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum Dynamics {
    /// Two-point zeroth-order human against a gradient AI.
    ZerothOrder,
    /// Both players take plain gradient steps.
    Simultaneous,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum RateArg {
    /// Rates in [0, 1] with the piecewise rule at the endpoints.
    Replication,
    /// Any non-negative rate.
    General,
}

impl From<RateArg> for RateMode {
    fn from(r: RateArg) -> Self {
        match r {
            RateArg::Replication => RateMode::Replication,
            RateArg::General => RateMode::General,
        }
    }
}

#[derive(Debug, Args, Serialize)]
struct DynamicsArgs {
    /// Human model rate.
    #[arg(long, default_value_t = 0.01)]
    eta: f64,
    /// Perturbation scale of the zeroth-order estimate.
    #[arg(long, default_value_t = 0.1)]
    sigma: f64,
    /// Outer iterations.
    #[arg(long = "T", default_value_t = 1000)]
    steps: usize,
    /// Inner AI look-ahead steps per probe.
    #[arg(long = "K", default_value_t = 10)]
    inner_steps: usize,
    /// Initial human action, comma separated (default: zeros).
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    h0: Option<Vec<f64>>,
    /// Initial AI action, comma separated (default: 0.1 each).
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    m0: Option<Vec<f64>>,
    #[arg(long, value_enum, default_value_t = RateArg::General)]
    rate_mode: RateArg,
}

impl DynamicsArgs {
    fn config(&self, p: &GameParams, alpha: f64, seed: u64) -> SimConfig {
        let mut cfg = SimConfig::for_game(p);
        cfg.alpha = alpha;
        cfg.seed = seed;
        cfg.eta = self.eta;
        cfg.sigma = self.sigma;
        cfg.steps = self.steps;
        cfg.inner_steps = self.inner_steps;
        cfg.rate_mode = self.rate_mode.into();
        if let Some(h0) = &self.h0 {
            cfg.h0.clone_from(h0);
        }
        if let Some(m0) = &self.m0 {
            cfg.m0.clone_from(m0);
        }
        cfg
    }
}

#[derive(Debug, Args, Serialize)]
struct SimulateArgs {
    #[arg(long)]
    game: String,
    /// AI adaptation rate.
    #[arg(long, default_value_t = 0.01)]
    alpha: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    #[serde(flatten)]
    dynamics: DynamicsArgs,
    #[arg(long, value_enum, default_value_t = Dynamics::ZerothOrder)]
    model: Dynamics,
    /// Trajectory CSV (default: stdout).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
struct SweepArgs {
    #[arg(long)]
    game: String,
    /// Adaptation rates, comma separated.
    #[arg(long, value_delimiter = ',', required = true, num_args = 1..)]
    alphas: Vec<f64>,
    /// Number of seeds per rate.
    #[arg(long, default_value_t = 10)]
    seeds: u64,
    /// First seed; runs use `seed_base..seed_base + seeds`.
    #[arg(long, default_value_t = 0)]
    seed_base: u64,
    #[command(flatten)]
    #[serde(flatten)]
    dynamics: DynamicsArgs,
    /// Output directory for trajectories, manifest.csv and summary.csv.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
struct GenGameArgs {
    #[arg(long)]
    dh: usize,
    #[arg(long)]
    dm: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Place the Nash human action here (comma separated).
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    nash_target: Option<Vec<f64>>,
    /// Also search a scale on B_H to move the Stackelberg human action here.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, requires = "nash_target")]
    se_target: Option<Vec<f64>>,
    /// Minimum distance between the two equilibrium human actions.
    #[arg(long, default_value_t = 0.1)]
    min_separation: f64,
    /// Game file to write (default: stdout).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
struct ServeArgs {
    #[arg(long, env = "PORT", default_value_t = coadapt_server::DEFAULT_PORT)]
    port: u16,
    #[arg(long, default_value = "0.0.0.0")]
    host: String,
    /// SQLite file for trials and sessions.
    #[arg(long, env = "DATA_PATH", default_value = coadapt_server::DEFAULT_DATA_PATH)]
    data: PathBuf,
    /// Directory of static files served at /.
    #[arg(long = "static")]
    static_dir: Option<PathBuf>,
    /// Serve this session plan (JSON) to every participant.
    #[arg(long)]
    replay: Option<PathBuf>,
    /// Allow the heat-map display for every game version.
    #[arg(long)]
    research: bool,
}

#[derive(Debug, Args, Serialize)]
struct ExportArgs {
    #[arg(long, env = "DATA_PATH", default_value = coadapt_server::DEFAULT_DATA_PATH)]
    data: PathBuf,
    /// Only this participant.
    #[arg(long)]
    key: Option<String>,
    /// Only this adaptation rate.
    #[arg(long)]
    alpha: Option<f64>,
    /// CSV file (default: stdout).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum CostStatArg {
    TrialMedian,
    PerSample,
}

#[derive(Debug, Args, Serialize)]
struct AnalyzeArgs {
    /// Sample table exported by `coadapt export`.
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    game: String,
    #[arg(long)]
    out: PathBuf,
    /// Keep only the final seconds of each trial.
    #[arg(long, default_value_t = 5.0)]
    trim: f64,
    #[arg(long, value_enum, default_value_t = CostStatArg::TrialMedian)]
    cost_stat: CostStatArg,
    /// Histogram bins on [-1, 1].
    #[arg(long, default_value_t = 40)]
    bins: usize,
}

fn usage_error(msg: impl std::fmt::Display) -> ! {
    Cli::command().error(clap::error::ErrorKind::ValueValidation, msg).exit()
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p).with_context(|| format!("creating {}", p.display()))?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn fmt_vec(v: &Vector) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{:.4}", x + 0.0)).collect();
    format!("({})", parts.join(", "))
}

fn game_name(game: &str) -> String {
    match game {
        "2x2" | "1x2" | "2x1" => game.to_string(),
        path => Path::new(path).file_stem().map_or_else(|| "game".into(), |s| s.to_string_lossy().into_owned()),
    }
}

fn equilibria(args: &EquilibriaArgs) -> Result<()> {
    let p = resolve_game(&args.game)?;
    let eq = p.equilibria()?;
    let inv = p.invariants();
    let mut out = io::stdout().lock();
    if args.json {
        let v = |x: &Vector| x.iter().copied().collect::<Vec<_>>();
        let doc = serde_json::json!({
            "d_H": p.d_h(),
            "d_M": p.d_m(),
            "nash": { "h": v(&eq.nash.h), "m": v(&eq.nash.m) },
            "stackelberg": { "h": v(&eq.stackelberg.h), "m": v(&eq.stackelberg.m) },
            "nash_conditions_hold": eq.nash_conditions_hold,
            "stackelberg_conditions_hold": eq.stackelberg_conditions_hold,
            "nash_report": eq.nash_report,
            "stackelberg_report": eq.stackelberg_report,
            "invariants": inv,
        });
        writeln!(out, "{}", serde_json::to_string_pretty(&doc)?)?;
        return Ok(());
    }
    let holds = |b: bool| if b { "holds" } else { "FAILS" };
    let (n, s) = (&eq.nash_report, &eq.stackelberg_report);
    writeln!(out, "game {} (d_H = {}, d_M = {})", game_name(&args.game), p.d_h(), p.d_m())?;
    writeln!(out, "Nash         h = {}  m = {}", fmt_vec(&eq.nash.h), fmt_vec(&eq.nash.m))?;
    writeln!(out, "Stackelberg  h = {}  m = {}", fmt_vec(&eq.stackelberg.h), fmt_vec(&eq.stackelberg.m))?;
    writeln!(
        out,
        "differential Nash conditions {}: |grad_H| = {:.2e}, |grad_M| = {:.2e}, min eig A_H = {:.4}, min eig A_M = {:.4}",
        holds(eq.nash_conditions_hold),
        n.grad_h_norm,
        n.grad_m_norm,
        n.human_hessian_min_eig,
        n.ai_hessian_min_eig
    )?;
    writeln!(
        out,
        "differential Stackelberg conditions {}: |m - BR(h)| = {:.2e}, |total grad| = {:.2e}, min eig total Hessian = {:.4}, min eig A_M = {:.4}",
        holds(eq.stackelberg_conditions_hold),
        s.response_residual,
        s.total_grad_norm,
        s.total_hessian_min_eig,
        s.ai_hessian_min_eig
    )?;
    writeln!(
        out,
        "existence: min eig A_H = {:.4}, A_M = {:.4}, A_H - B_H A_M^-1 B_M = {:.4}, total Hessian = {:.4}",
        inv.human_quad, inv.ai_quad, inv.schur, inv.total_hessian
    )?;
    Ok(())
}

fn simulate(args: &SimulateArgs) -> Result<()> {
    let p = resolve_game(&args.game)?;
    let cfg = args.dynamics.config(&p, args.alpha, args.seed);
    let traj = match args.model {
        Dynamics::ZerothOrder => simulate_zeroth_order(&p, &cfg)?,
        Dynamics::Simultaneous => simulate_simultaneous_gd(&p, &cfg)?,
    };
    if let Some(t) = traj.diverged_at {
        eprintln!("warning: diverged at step {t}; trajectory truncated");
    }
    let mut out = output(args.out.as_deref())?;
    traj.write_csv(p.d_h(), p.d_m(), &mut out)?;
    out.flush()?;
    Ok(())
}

fn sweep(args: &SweepArgs) -> Result<()> {
    if args.seeds == 0 {
        usage_error("--seeds must be at least 1");
    }
    let p = resolve_game(&args.game)?;
    let base = args.dynamics.config(&p, args.alphas[0], args.seed_base);
    for &a in &args.alphas {
        SimConfig { alpha: a, ..base.clone() }.validate(&p)?;
    }
    let seeds: Vec<u64> = (args.seed_base..args.seed_base + args.seeds).collect();
    let runs = run_sweep(&p, &base, &args.alphas, &seeds)?;
    fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    let name = game_name(&args.game);
    let mut manifest = String::from("file,alpha,seed,rows,diverged_at\n");
    for r in &runs {
        let file = format!("{name}_{}_{}.csv", r.alpha, r.seed);
        let w = BufWriter::new(File::create(args.out.join(&file))?);
        r.trajectory.write_csv(p.d_h(), p.d_m(), w)?;
        let diverged = r.trajectory.diverged_at.map_or_else(String::new, |t| t.to_string());
        manifest.push_str(&format!("{file},{},{},{},{diverged}\n", r.alpha, r.seed, r.trajectory.len()));
    }
    fs::write(args.out.join("manifest.csv"), manifest)?;
    let summary = summarize_sweep(&runs);
    write_sweep_summary(&summary, File::create(args.out.join("summary.csv"))?)?;
    write_sweep_summary(&summary, io::stdout().lock())?;
    Ok(())
}

fn gen_game(args: &GenGameArgs) -> Result<()> {
    if args.dh == 0 || args.dm == 0 {
        usage_error("--dh and --dm must be at least 1");
    }
    let options = RandomGameOptions {
        min_separation: args.min_separation,
        nash_target: args.nash_target.as_deref().map(Vector::from_column_slice),
        stackelberg_target: args.se_target.as_deref().map(Vector::from_column_slice),
        ..RandomGameOptions::default()
    };
    let p = random_game(args.dh, args.dm, args.seed, &options)?;
    let text = game_to_string(&p, Some(format!("random {}x{} seed {}", args.dh, args.dm, args.seed)));
    let mut out = output(args.out.as_deref())?;
    out.write_all(text.as_bytes())?;
    out.flush()?;
    Ok(())
}

fn serve(args: &ServeArgs) -> Result<()> {
    let replay = match &args.replay {
        Some(path) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            Some(SessionPlan::from_json(&text).with_context(|| format!("parsing {}", path.display()))?)
        }
        None => None,
    };
    let addr = format!("{}:{}", args.host, args.port).parse().with_context(|| format!("bad address {}", args.host))?;
    let config = ServerConfig {
        addr,
        data_path: args.data.clone(),
        static_dir: args.static_dir.clone(),
        replay,
        research: args.research,
    };
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(coadapt_server::run(config))?;
    Ok(())
}

fn export(args: &ExportArgs) -> Result<()> {
    if !args.data.exists() {
        bail!("no data store at {}", args.data.display());
    }
    let store = Store::open(&args.data)?;
    let filter = ExportFilter { participant_key: args.key.clone(), alpha: args.alpha };
    let mut out = output(args.out.as_deref())?;
    let rows = store.export_csv(&filter, &mut out)?;
    out.flush()?;
    eprintln!("exported {rows} rows");
    Ok(())
}

fn analyze(args: &AnalyzeArgs) -> Result<()> {
    if args.bins == 0 {
        usage_error("--bins must be at least 1");
    }
    let p = resolve_game(&args.game)?;
    let eq = p.equilibria()?;
    let file = File::open(&args.input).with_context(|| format!("opening {}", args.input.display()))?;
    let trials = read_trials_csv(file)?;
    let options = SummaryOptions {
        cost_stat: match args.cost_stat {
            CostStatArg::TrialMedian => CostStat::TrialMedian,
            CostStatArg::PerSample => CostStat::PerSample,
        },
        histogram_edges: uniform_edges(-1.0, 1.0, args.bins),
    };
    let stats = summarize_last_seconds(&trials, args.trim, &eq, &options)?;
    let written = emit_plots(&stats, &args.out)?;
    let mut out = io::stdout().lock();
    writeln!(out, "alpha,trials,median_h,median_m,dist_h_NE,dist_h_SE,cost_H_q50,cost_M_q50")?;
    for a in &stats.per_alpha {
        let join = |v: &[f64]| v.iter().map(|x| format!("{x:.4}")).collect::<Vec<_>>().join(" ");
        writeln!(
            out,
            "{},{},{},{},{:.4},{:.4},{:.4},{:.4}",
            a.alpha,
            a.trials.len(),
            join(&a.median_h),
            join(&a.median_m),
            a.dist_h_ne,
            a.dist_h_se,
            a.cost_quartiles_h.q50,
            a.cost_quartiles_m.q50
        )?;
    }
    eprintln!("wrote {} files to {}", written.len(), args.out.display());
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match serde_json::to_string(&cli.command) {
        Ok(cfg) => eprintln!("effective config: {cfg}"),
        Err(e) => eprintln!("effective config unavailable: {e}"),
    }
    let result = match &cli.command {
        Command::Equilibria(a) => equilibria(a),
        Command::Simulate(a) => simulate(a),
        Command::Sweep(a) => sweep(a),
        Command::GenGame(a) => gen_game(a),
        Command::Serve(a) => serve(a),
        Command::Export(a) => export(a),
        Command::Analyze(a) => analyze(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
