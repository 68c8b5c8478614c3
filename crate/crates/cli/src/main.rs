mod gtp;
mod manifest;

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use dsmcts::data::{
    build_state_un_dataset, generate_selfplay, prune, prune_and_balance, read_records, relabel, write_records,
    BalanceConfig, GameRecord, LabeledDataset, RelabelConfig, SelfplayConfig,
};
use dsmcts::ds::{
    default_threshold_grid, select_thresholds, validate_thresholds, CheckpointScores, DsConfig, RandomStop, StartMode,
};
use dsmcts::harness::{msc_report, play_match, Agent, DsAgent, MatchConfig, PvAgent, RandomAgent, RandomStopAgent};
use dsmcts::mcts::{DirichletNoise, Evaluation, RolloutEvaluator};
use dsmcts::nn::{load_network, save_network, LossWeights, Network};
use dsmcts::training::{train_mcts_un, train_pv, train_state_un, TrainConfig, TrainReport};
use dsmcts::uncertainty::{choose_checkpoint, doubling_checkpoints};
use dsmcts::{Evaluator, GameState};

use manifest::Recorder;

/// Dynamic-simulation MCTS for NoGo: data pipeline, matches and a GTP engine.
#[derive(Parser)]
#[command(name = "dsmcts", version)]
struct Cli {
    /// Master seed for every random choice the command makes.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Worker threads for self-play, relabelling and matches.
    #[arg(long, global = true, default_value_t = 1)]
    workers: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate self-play game records.
    Selfplay(SelfplayArgs),
    /// Train a policy-value network on game records.
    TrainPv(TrainPvArgs),
    /// Re-search every recorded position at N_max and label it.
    Relabel(RelabelArgs),
    /// Train the board-only uncertainty predictor.
    TrainStateUn(TrainStateUnArgs),
    /// Print n* and the expected-cost curve f(1, n) as CSV.
    ChooseCheckpoint(ChooseCheckpointArgs),
    /// Train the board-plus-tree uncertainty predictor at n*.
    TrainMctsUn(TrainMctsUnArgs),
    /// Select (or check) per-checkpoint thresholds on held-out games and write a DS config.
    ValidateThresholds(ValidateThresholdsArgs),
    /// Play DS search against a baseline.
    Match(MatchArgs),
    /// Sorted minimum-simulation curve of a labelled dataset.
    MscReport(MscReportArgs),
    /// Speak GTP on stdin/stdout.
    Gtp(GtpArgs),
}

#[derive(Args, Serialize, Clone, Copy)]
struct TrainArgs {
    /// Trunk filters.
    #[arg(long)]
    filters: Option<usize>,
    /// Residual blocks.
    #[arg(long)]
    blocks: Option<usize>,
    /// SGD steps.
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    /// Initial learning rate.
    #[arg(long)]
    lr: Option<f64>,
}

impl TrainArgs {
    fn config(&self, base: TrainConfig, seed: u64) -> TrainConfig {
        TrainConfig {
            filters: self.filters.unwrap_or(base.filters),
            blocks: self.blocks.unwrap_or(base.blocks),
            steps: self.steps.unwrap_or(base.steps),
            batch_size: self.batch_size.unwrap_or(base.batch_size),
            lr: self.lr.unwrap_or(base.lr),
            seed,
            ..base
        }
    }
}

#[derive(Args, Serialize)]
struct SelfplayArgs {
    /// Policy-value network; random rollouts are used without one.
    #[arg(long)]
    net: Option<PathBuf>,
    #[arg(long, default_value_t = 5)]
    board_size: usize,
    #[arg(long, default_value_t = 2000)]
    games: usize,
    /// Simulations per move.
    #[arg(long, default_value_t = 50)]
    sims: usize,
    /// Disable Dirichlet noise at the root.
    #[arg(long)]
    no_noise: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Serialize)]
struct TrainPvArgs {
    #[arg(long)]
    games: PathBuf,
    #[command(flatten)]
    train: TrainArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Serialize)]
struct RelabelArgs {
    #[arg(long)]
    net: PathBuf,
    #[arg(long)]
    games: PathBuf,
    #[arg(long, default_value_t = 400)]
    n_max: usize,
    #[arg(long, default_value_t = 0.05)]
    epsilon: f64,
    #[arg(long, default_value_t = 1.5)]
    c_puct: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Serialize, Clone, Copy)]
struct SplitArgs {
    /// Games whose index is a multiple of this are held out for threshold selection; 0 uses every game everywhere.
    #[arg(long, default_value_t = 10)]
    holdout_every: usize,
}

impl SplitArgs {
    fn train(&self, ds: &LabeledDataset) -> LabeledDataset {
        match self.holdout_every {
            0 | 1 => ds.clone(),
            k => ds.filter_games(|g| g % k != 0),
        }
    }

    fn held_out(&self, ds: &LabeledDataset) -> LabeledDataset {
        match self.holdout_every {
            0 | 1 => ds.clone(),
            k => ds.filter_games(|g| g % k == 0),
        }
    }
}

#[derive(Args, Serialize)]
struct TrainStateUnArgs {
    #[arg(long)]
    data: PathBuf,
    #[command(flatten)]
    split: SplitArgs,
    #[command(flatten)]
    train: TrainArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Serialize)]
struct ChooseCheckpointArgs {
    #[arg(long)]
    data: PathBuf,
    /// Drop states the board predictor already scores as certain before scanning.
    #[arg(long)]
    state_un: Option<PathBuf>,
    #[arg(long, default_value_t = 0.05)]
    prune_threshold: f64,
    #[command(flatten)]
    split: SplitArgs,
    /// Also write the CSV here.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Serialize)]
struct TrainMctsUnArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    state_un: PathBuf,
    #[arg(long)]
    n_star: usize,
    #[arg(long, default_value_t = 0.05)]
    prune_threshold: f64,
    #[command(flatten)]
    split: SplitArgs,
    #[command(flatten)]
    train: TrainArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum, Serialize)]
enum Mode {
    StateUn,
    Calibrated,
}

#[derive(Args, Serialize)]
struct ValidateThresholdsArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    state_un: Option<PathBuf>,
    #[arg(long)]
    mcts_un: PathBuf,
    #[arg(long)]
    n_star: usize,
    /// Minimum positive-class recall per checkpoint.
    #[arg(long, default_value_t = 0.96)]
    target_recall: f64,
    /// Comma-separated thresholds to check instead of selecting them.
    #[arg(long, value_delimiter = ',')]
    thresholds: Option<Vec<f64>>,
    #[arg(long, value_enum, default_value_t = Mode::StateUn)]
    mode: Mode,
    /// Temperature for calibrated start mode.
    #[arg(long, default_value_t = 1.0)]
    tau: f64,
    #[command(flatten)]
    split: SplitArgs,
    /// DS config file to write.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum, Serialize)]
enum Opponent {
    Pv,
    Stop,
    RandomStop,
    Random,
}

#[derive(Args, Serialize)]
struct MatchArgs {
    #[arg(long)]
    net: PathBuf,
    #[arg(long)]
    ds_config: PathBuf,
    #[arg(long)]
    state_un: Option<PathBuf>,
    #[arg(long)]
    mcts_un: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Opponent::Pv)]
    opponent: Opponent,
    /// Opponent budget; defaults to the DS config's n_max.
    #[arg(long)]
    opponent_sims: Option<usize>,
    /// Random-stop baseline: share of moves searched with the reduced budget.
    #[arg(long, default_value_t = 0.5)]
    stop_fraction: f64,
    /// Random-stop baseline: reduced budget.
    #[arg(long, default_value_t = 100)]
    reduced_sims: usize,
    #[arg(long, default_value_t = 400)]
    games: usize,
    #[arg(long, default_value_t = 2)]
    opening_plies: usize,
    /// Directory for games.csv, moves.jsonl and result.json.
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args, Serialize)]
struct MscReportArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Serialize)]
struct GtpArgs {
    /// Policy-value network; random rollouts are used without one.
    #[arg(long)]
    net: Option<PathBuf>,
    /// DS config; plain search at --sims without one.
    #[arg(long)]
    ds_config: Option<PathBuf>,
    #[arg(long)]
    state_un: Option<PathBuf>,
    #[arg(long)]
    mcts_un: Option<PathBuf>,
    #[arg(long, default_value_t = 400)]
    sims: usize,
    #[arg(long, default_value_t = 5)]
    board_size: usize,
}

enum Eval {
    Net(Network),
    Rollout(RolloutEvaluator),
}

impl Evaluator for Eval {
    fn evaluate(&self, state: &GameState) -> Evaluation {
        match self {
            Eval::Net(n) => n.evaluate(state),
            Eval::Rollout(r) => r.evaluate(state),
        }
    }
}

fn config_error(msg: impl Into<String>) -> anyhow::Error {
    dsmcts::Error::Config(msg.into()).into()
}

fn open(path: &Path) -> Result<BufReader<File>> {
    Ok(BufReader::new(File::open(path).with_context(|| format!("cannot open {}", path.display()))?))
}

fn net(path: &Path) -> Result<Network> {
    load_network(path).with_context(|| format!("cannot load network {}", path.display()))
}

fn evaluator(path: Option<&Path>, seed: u64) -> Result<Eval> {
    Ok(match path {
        Some(p) => Eval::Net(net(p)?),
        None => Eval::Rollout(RolloutEvaluator { playouts: 1, seed }),
    })
}

fn records(path: &Path) -> Result<Vec<GameRecord>> {
    read_records(open(path)?).with_context(|| format!("cannot read game records {}", path.display()))
}

fn dataset(path: &Path) -> Result<LabeledDataset> {
    LabeledDataset::read(open(path)?).with_context(|| format!("cannot read dataset {}", path.display()))
}

fn ds_config(path: &Path) -> Result<DsConfig> {
    let text = std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    text.parse::<DsConfig>().with_context(|| format!("in {}", path.display()))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).with_context(|| format!("cannot create {}", path.display()))?))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(value)?).with_context(|| format!("cannot write {}", path.display()))
}

fn print_train(report: &TrainReport) {
    let first = report.loss_curve.first().copied().unwrap_or(f64::NAN);
    let last = report.loss_curve.last().copied().unwrap_or(f64::NAN);
    println!("samples={} loss {first:.4} -> {last:.4}", report.samples);
}

/// `n*` below two cannot start a checkpoint schedule.
fn usable_n_star(n: usize) -> usize {
    if n < 2 {
        eprintln!("note: n*={n} raised to 2");
    }
    n.max(2)
}

fn selfplay(cli: &Cli, a: &SelfplayArgs) -> Result<()> {
    let mut rec = Recorder::new("selfplay", cli.seed, a)?;
    if let Some(p) = &a.net {
        rec.input("net", p)?;
    }
    let eval = evaluator(a.net.as_deref(), cli.seed)?;
    let cfg = SelfplayConfig {
        board_size: a.board_size,
        games: a.games,
        sims_per_move: a.sims,
        noise: (!a.no_noise).then(DirichletNoise::default),
        seed: cli.seed,
        workers: cli.workers,
        ..SelfplayConfig::default()
    };
    let games = generate_selfplay(&eval, &cfg)?;
    let mut w = create(&a.out)?;
    write_records(&games, &mut w)?;
    w.flush()?;
    drop(w);
    rec.finish(&[("games", &a.out)])?;
    println!("wrote {} games to {}", games.len(), a.out.display());
    Ok(())
}

fn train_pv_cmd(cli: &Cli, a: &TrainPvArgs) -> Result<()> {
    let mut rec = Recorder::new("train-pv", cli.seed, a)?;
    rec.input("games", &a.games)?;
    let games = records(&a.games)?;
    let base = TrainConfig { filters: 16, blocks: 1, steps: 3000, weights: LossWeights::policy_value(), ..Default::default() };
    let (net, report) = train_pv(&games, &a.train.config(base, cli.seed))?;
    save_network(&net, &a.out)?;
    rec.finish(&[("net", &a.out)])?;
    print_train(&report);
    Ok(())
}

fn relabel_cmd(cli: &Cli, a: &RelabelArgs) -> Result<()> {
    let mut rec = Recorder::new("relabel", cli.seed, a)?;
    rec.input("net", &a.net)?;
    rec.input("games", &a.games)?;
    let network = net(&a.net)?;
    let games = records(&a.games)?;
    let cfg = RelabelConfig { n_max: a.n_max, epsilon: a.epsilon, c_puct: a.c_puct, workers: cli.workers };
    let ds = relabel(&games, &network, &cfg)?;
    let mut w = create(&a.out)?;
    ds.write(&mut w)?;
    w.flush()?;
    drop(w);
    let mut summary_path = a.out.as_os_str().to_os_string();
    summary_path.push(".summary.json");
    let summary_path = PathBuf::from(summary_path);
    let summary = ds.manifest();
    write_json(&summary_path, &summary)?;
    rec.finish(&[("dataset", &a.out), ("summary", &summary_path)])?;
    println!(
        "states={} distinct={} fraction_m_equals_one={:.4} mean_min_sims={:.2}",
        summary.states, summary.distinct_positions, summary.fraction_m_equals_one, summary.mean_min_sims
    );
    Ok(())
}

fn train_state_un_cmd(cli: &Cli, a: &TrainStateUnArgs) -> Result<()> {
    let mut rec = Recorder::new("train-state-un", cli.seed, a)?;
    rec.input("dataset", &a.data)?;
    let ds = a.split.train(&dataset(&a.data)?);
    let (net, report) = train_state_un(&ds, &build_state_un_dataset(&ds), &a.train.config(TrainConfig::default(), cli.seed))?;
    save_network(&net, &a.out)?;
    rec.finish(&[("net", &a.out)])?;
    print_train(&report);
    Ok(())
}

fn choose_checkpoint_cmd(cli: &Cli, a: &ChooseCheckpointArgs) -> Result<()> {
    let mut rec = Recorder::new("choose-checkpoint", cli.seed, a)?;
    rec.input("dataset", &a.data)?;
    let ds = a.split.train(&dataset(&a.data)?);
    let kept: Vec<usize> = match &a.state_un {
        Some(p) => {
            rec.input("state_un", p)?;
            prune(&ds, &net(p)?, a.prune_threshold)
        }
        None => (0..ds.len()).collect(),
    };
    let m: Vec<usize> = kept.iter().map(|&i| ds.entry(&ds.states[i]).label.min_sims).collect();
    let choice = choose_checkpoint(&m, ds.header.n_max)?;
    let mut csv = String::from("n,f\n");
    for (i, f) in choice.f_values.iter().enumerate() {
        csv.push_str(&format!("{},{f:.6}\n", i + 1));
    }
    println!("n_star={}", choice.n_star);
    print!("{csv}");
    if let Some(out) = &a.out {
        std::fs::write(out, &csv).with_context(|| format!("cannot write {}", out.display()))?;
        rec.finish(&[("curve", out)])?;
    }
    Ok(())
}

fn train_mcts_un_cmd(cli: &Cli, a: &TrainMctsUnArgs) -> Result<()> {
    let mut rec = Recorder::new("train-mcts-un", cli.seed, a)?;
    rec.input("dataset", &a.data)?;
    rec.input("state_un", &a.state_un)?;
    let ds = a.split.train(&dataset(&a.data)?);
    let state_un = net(&a.state_un)?;
    let n_star = usable_n_star(a.n_star);
    let balance = BalanceConfig { prune_threshold: a.prune_threshold, ..Default::default() };
    let (rows, bal) = prune_and_balance(&ds, &state_un, n_star, &balance)?;
    let (net, report) = train_mcts_un(&ds, &rows, n_star, &a.train.config(TrainConfig::default(), cli.seed))?;
    save_network(&net, &a.out)?;
    rec.finish(&[("net", &a.out)])?;
    println!(
        "kept={} pruned={} natural_positive_rate={:.4} positive_weight={:.3}",
        bal.kept, bal.pruned, bal.natural_positive_rate, bal.positive_weight
    );
    print_train(&report);
    Ok(())
}

fn validate_thresholds_cmd(cli: &Cli, a: &ValidateThresholdsArgs) -> Result<()> {
    let mut rec = Recorder::new("validate-thresholds", cli.seed, a)?;
    rec.input("dataset", &a.data)?;
    rec.input("mcts_un", &a.mcts_un)?;
    if let Some(p) = &a.state_un {
        rec.input("state_un", p)?;
    }
    let ds = a.split.held_out(&dataset(&a.data)?);
    let n_max = ds.header.n_max;
    let checkpoints = doubling_checkpoints(usable_n_star(a.n_star), n_max);
    let start = match a.mode {
        Mode::StateUn => StartMode::StateUn,
        Mode::Calibrated => StartMode::Calibrated { tau: a.tau },
    };
    let probe = DsConfig { start, ..DsConfig::new(n_max, checkpoints.clone(), vec![0.0; checkpoints.len()])? };
    let state_un = a.state_un.as_deref().map(net).transpose()?;
    if matches!(start, StartMode::StateUn) && state_un.is_none() {
        return Err(config_error("state-un mode needs --state-un"));
    }
    let mcts_un = net(&a.mcts_un)?;
    let entries: Vec<_> = ds
        .states
        .iter()
        .map(|s| {
            let e = ds.entry(s);
            (&e.trace, e.label.min_sims)
        })
        .collect();
    let scores = CheckpointScores::compute(&entries, &probe, state_un.as_ref(), Some(&mcts_un))?;
    let thresholds = match &a.thresholds {
        Some(t) => t.clone(),
        None => select_thresholds(&scores, &default_threshold_grid(), a.target_recall),
    };
    let report = validate_thresholds(&scores, &thresholds)?;
    let cfg = DsConfig { thresholds, ..probe };
    cfg.validate()?;
    std::fs::write(&a.out, cfg.to_string()).with_context(|| format!("cannot write {}", a.out.display()))?;
    let mut report_path = a.out.as_os_str().to_os_string();
    report_path.push(".report.json");
    let report_path = PathBuf::from(report_path);
    write_json(&report_path, &serde_json::json!({ "config": cfg.to_string(), "report": &report }))?;
    rec.finish(&[("ds_config", &a.out), ("report", &report_path)])?;
    print!("{cfg}");
    for c in &report.checkpoints {
        println!(
            "checkpoint {} threshold {:.2} positives {} recall {:.4} stopped {}",
            c.checkpoint, c.threshold, c.positives, c.recall, c.stopped
        );
    }
    println!("projected_avg_sims={:.2} projected_ratio={:.4}", report.projected_avg_sims, report.projected_ratio);
    let missed = report.checkpoints.iter().filter(|c| c.recall <= a.target_recall).count();
    if missed > 0 && a.thresholds.is_none() {
        eprintln!("warning: {missed} checkpoint(s) fall back to threshold 0");
    }
    Ok(())
}

fn match_cmd(cli: &Cli, a: &MatchArgs) -> Result<()> {
    let mut rec = Recorder::new("match", cli.seed, a)?;
    rec.input("net", &a.net)?;
    rec.input("ds_config", &a.ds_config)?;
    for p in a.state_un.iter().chain(&a.mcts_un) {
        rec.input("predictor", p)?;
    }
    let network = net(&a.net)?;
    let cfg = ds_config(&a.ds_config)?;
    let ds = DsAgent {
        evaluator: &network,
        config: cfg.clone(),
        state_un: a.state_un.as_deref().map(net).transpose()?,
        mcts_un: a.mcts_un.as_deref().map(net).transpose()?,
    };
    let budget = a.opponent_sims.unwrap_or(cfg.n_max);
    let opponent: Box<dyn Agent> = match a.opponent {
        Opponent::Pv => Box::new(PvAgent { evaluator: &network, simulations: budget, stop_rule: false, c_puct: cfg.c_puct }),
        Opponent::Stop => Box::new(PvAgent { evaluator: &network, simulations: budget, stop_rule: true, c_puct: cfg.c_puct }),
        Opponent::RandomStop => Box::new(RandomStopAgent {
            evaluator: &network,
            policy: RandomStop { fraction: a.stop_fraction, reduced_sims: a.reduced_sims, n_max: budget },
            c_puct: cfg.c_puct,
        }),
        Opponent::Random => Box::new(RandomAgent),
    };
    let mcfg = MatchConfig {
        board_size: network.architecture().board_size,
        games: a.games,
        seed: cli.seed,
        opening_plies: a.opening_plies,
        swap_colors: true,
        workers: cli.workers,
    };
    let result = play_match(&ds, opponent.as_ref(), &mcfg)?;
    std::fs::create_dir_all(&a.out_dir).with_context(|| format!("cannot create {}", a.out_dir.display()))?;
    let csv_path = a.out_dir.join("games.csv");
    let jsonl_path = a.out_dir.join("moves.jsonl");
    let json_path = a.out_dir.join("result.json");
    let header: String = cfg.to_string().lines().map(|l| format!("# {l}\n")).collect();
    std::fs::write(&csv_path, header + &result.games_csv())?;
    let mut w = create(&jsonl_path)?;
    result.write_jsonl(&mut w)?;
    w.flush()?;
    drop(w);
    let mut summary = result.clone();
    summary.logs.clear();
    write_json(&json_path, &serde_json::json!({ "ds_config": cfg.to_string(), "result": summary }))?;
    rec.finish(&[("games", &csv_path), ("moves", &jsonl_path), ("result", &json_path)])?;
    print!("{}", result.summary_csv());
    println!("avg_sim_ratio={:.4}", result.a_avg_sims() / budget.max(1) as f64);
    Ok(())
}

fn msc_cmd(cli: &Cli, a: &MscReportArgs) -> Result<()> {
    let mut rec = Recorder::new("msc-report", cli.seed, a)?;
    rec.input("dataset", &a.data)?;
    let ds = dataset(&a.data)?;
    let report = msc_report(&ds.min_sims(), ds.header.n_max)?;
    std::fs::write(&a.out, report.to_csv()).with_context(|| format!("cannot write {}", a.out.display()))?;
    rec.finish(&[("msc", &a.out)])?;
    println!("states={} mean={:.4} fraction_m1={:.4}", report.points.len(), report.mean, report.fraction_m1);
    Ok(())
}

fn gtp_cmd(cli: &Cli, a: &GtpArgs) -> Result<()> {
    let eval = evaluator(a.net.as_deref(), cli.seed)?;
    let config = match &a.ds_config {
        Some(p) => ds_config(p)?,
        None => DsConfig::new(a.sims, vec![0], vec![0.0])?,
    };
    let agent = DsAgent {
        evaluator: eval,
        config,
        state_un: a.state_un.as_deref().map(net).transpose()?,
        mcts_un: a.mcts_un.as_deref().map(net).transpose()?,
    };
    let mut engine = gtp::Engine::new(&agent, a.board_size, cli.seed)?;
    let stdin = std::io::stdin();
    engine.run(stdin.lock(), std::io::stdout().lock())?;
    Ok(())
}

fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Selfplay(a) => selfplay(cli, a),
        Command::TrainPv(a) => train_pv_cmd(cli, a),
        Command::Relabel(a) => relabel_cmd(cli, a),
        Command::TrainStateUn(a) => train_state_un_cmd(cli, a),
        Command::ChooseCheckpoint(a) => choose_checkpoint_cmd(cli, a),
        Command::TrainMctsUn(a) => train_mcts_un_cmd(cli, a),
        Command::ValidateThresholds(a) => validate_thresholds_cmd(cli, a),
        Command::Match(a) => match_cmd(cli, a),
        Command::MscReport(a) => msc_cmd(cli, a),
        Command::Gtp(a) => gtp_cmd(cli, a),
    }
}

fn stage(cmd: &Command) -> &'static str {
    match cmd {
        Command::Selfplay(_) => "selfplay",
        Command::TrainPv(_) => "train-pv",
        Command::Relabel(_) => "relabel",
        Command::TrainStateUn(_) => "train-state-un",
        Command::ChooseCheckpoint(_) => "choose-checkpoint",
        Command::TrainMctsUn(_) => "train-mcts-un",
        Command::ValidateThresholds(_) => "validate-thresholds",
        Command::Match(_) => "match",
        Command::MscReport(_) => "msc-report",
        Command::Gtp(_) => "gtp",
    }
}

/// 2 for bad configuration, 3 for anything wrong with the data.
fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<dsmcts::Error>() {
            return match e {
                dsmcts::Error::Config(_) | dsmcts::Error::Parse(_) => 2,
                _ => 3,
            };
        }
    }
    3
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("dsmcts {}: {e:#}", stage(&cli.command));
            ExitCode::from(exit_code(&e))
        }
    }
}
