//! End-to-end experiment: bootstrap policy-value net, self-play,
//! relabelling, predictor training, checkpoint and threshold selection,
//! and a final match. Every stage can be cached on disk under a key
//! derived from its configuration and its inputs.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::data::{
    build_state_un_dataset, generate_selfplay, prune, prune_and_balance, read_records, relabel, write_records,
    BalanceConfig, BalanceReport, GameRecord, LabeledDataset, RelabelConfig, SelfplayConfig,
};
use crate::ds::{
    default_threshold_grid, select_thresholds, validate_thresholds, CheckpointScores, DsConfig, StartMode,
    ThresholdReport,
};
use crate::error::{Error, Result};
use crate::harness::{play_match, DsAgent, MatchConfig, MatchResult, PvAgent};
use crate::mcts::{DirichletNoise, RolloutEvaluator};
use crate::nn::{load_network, save_network, LossWeights, Network};
use crate::seed::derive;
use crate::training::{train_mcts_un, train_pv, train_state_un, TrainConfig};
use crate::uncertainty::{choose_checkpoint, doubling_checkpoints, CheckpointChoice};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub board_size: usize,
    pub seed: u64,
    pub workers: usize,
    pub bootstrap_games: usize,
    pub bootstrap_sims: usize,
    pub pv_train: TrainConfig,
    /// Total PV nets trained; each extra generation is fit to noisy self-play
    /// of the previous one.
    pub pv_generations: usize,
    pub generation_games: usize,
    pub selfplay_games: usize,
    pub selfplay_sims: usize,
    pub n_max: usize,
    pub epsilon: f64,
    pub state_un_train: TrainConfig,
    pub mcts_un_train: TrainConfig,
    pub balance: BalanceConfig,
    pub target_recall: f64,
    /// Games with `index % holdout_every == 0` are kept for threshold selection.
    pub holdout_every: usize,
    pub match_games: usize,
    pub opening_plies: usize,
}

/// Uncertainty nets underfit at the generic 4000 steps; 12000 with a
/// matching decay schedule lifts held-out AUC noticeably.
pub const UN_TRAIN_DEFAULT: TrainConfig = TrainConfig {
    filters: 32,
    blocks: 2,
    steps: 12_000,
    batch_size: 32,
    lr: 0.02,
    momentum: 0.9,
    decay: 0.3,
    decay_every: 4000,
    weights: LossWeights::DEFAULT,
    seed: 0,
    augment: false,
};

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            board_size: 5,
            seed: 2024,
            workers: 1,
            bootstrap_games: 400,
            bootstrap_sims: 50,
            pv_train: TrainConfig {
                filters: 16,
                blocks: 1,
                steps: 3000,
                weights: LossWeights::policy_value(),
                ..TrainConfig::default()
            },
            pv_generations: 1,
            generation_games: 1000,
            selfplay_games: 2000,
            selfplay_sims: 50,
            n_max: 400,
            epsilon: 0.05,
            state_un_train: UN_TRAIN_DEFAULT.with_seed(1),
            mcts_un_train: UN_TRAIN_DEFAULT.with_seed(2),
            balance: BalanceConfig::default(),
            target_recall: 0.96,
            holdout_every: 10,
            match_games: 400,
            opening_plies: 2,
        }
    }
}

/// FNV-1a over a string; stable across builds, used for cache file names.
pub fn stable_hash(text: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in text.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

fn key<T: Serialize>(upstream: u64, stage: &str, cfg: &T) -> u64 {
    let body = serde_json::to_string(cfg).expect("config serialises");
    stable_hash(&format!("{upstream:016x}/{stage}/{body}"))
}

struct Cache {
    dir: Option<PathBuf>,
}

impl Cache {
    fn path(&self, stage: &str, key: u64, ext: &str) -> Option<PathBuf> {
        self.dir.as_ref().map(|d| d.join(format!("{stage}-{key:016x}.{ext}")))
    }

    fn get_or<T>(
        &self,
        stage: &str,
        key: u64,
        ext: &str,
        load: impl Fn(&Path) -> Result<T>,
        save: impl Fn(&T, &Path) -> Result<()>,
        make: impl FnOnce() -> Result<T>,
    ) -> Result<T> {
        let started = Instant::now();
        let path = self.path(stage, key, ext);
        if let Some(p) = path.as_ref().filter(|p| p.exists()) {
            if let Ok(v) = load(p) {
                eprintln!("[pipeline] {stage}: cached ({})", p.display());
                return Ok(v);
            }
        }
        let v = make()?;
        if let Some(p) = path {
            let tmp = p.with_extension("tmp");
            save(&v, &tmp)?;
            std::fs::rename(&tmp, &p)?;
        }
        eprintln!("[pipeline] {stage}: {:.1}s", started.elapsed().as_secs_f64());
        Ok(v)
    }
}

fn load_json<T: for<'de> Deserialize<'de>>(p: &Path) -> Result<T> {
    serde_json::from_reader(BufReader::new(File::open(p)?)).map_err(|e| Error::Format(e.to_string()))
}

fn save_json<T: Serialize>(v: &T, p: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(p)?);
    serde_json::to_writer(&mut w, v).map_err(|e| Error::Format(e.to_string()))?;
    w.flush()?;
    Ok(())
}

fn load_records(p: &Path) -> Result<Vec<GameRecord>> {
    read_records(BufReader::new(File::open(p)?))
}

fn save_records(v: &Vec<GameRecord>, p: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(p)?);
    write_records(v, &mut w)?;
    w.flush()?;
    Ok(())
}

fn save_net(n: &Network, p: &Path) -> Result<()> {
    save_network(n, p)
}

fn load_dataset(p: &Path) -> Result<LabeledDataset> {
    LabeledDataset::read(BufReader::new(File::open(p)?))
}

fn save_dataset(d: &LabeledDataset, p: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(p)?);
    d.write(&mut w)?;
    w.flush()?;
    Ok(())
}

pub struct PipelineOutcome {
    pub pv: Network,
    pub dataset: LabeledDataset,
    pub state_un: Network,
    pub mcts_un: Network,
    pub checkpoint: CheckpointChoice,
    pub balance: BalanceReport,
    pub ds_config: DsConfig,
    pub thresholds: ThresholdReport,
}

/// Runs every stage up to threshold selection.
pub fn prepare(cfg: &PipelineConfig, cache_dir: Option<&Path>) -> Result<PipelineOutcome> {
    if let Some(d) = cache_dir {
        std::fs::create_dir_all(d)?;
    }
    let cache = Cache { dir: cache_dir.map(Path::to_path_buf) };
    let rollout = RolloutEvaluator { playouts: 1, seed: cfg.seed };

    let boot_cfg = SelfplayConfig {
        board_size: cfg.board_size,
        games: cfg.bootstrap_games,
        sims_per_move: cfg.bootstrap_sims,
        noise: Some(DirichletNoise::default()),
        seed: cfg.seed ^ 0xb007,
        workers: cfg.workers,
        ..SelfplayConfig::default()
    };
    let k_boot = key(0, "bootstrap", &boot_cfg);
    let boot = cache.get_or("bootstrap", k_boot, "rec", load_records, save_records, || {
        generate_selfplay(&rollout, &boot_cfg)
    })?;

    let mut k_pv = key(k_boot, "pv", &cfg.pv_train);
    let mut pv = cache.get_or("pv", k_pv, "net", load_network, save_net, || Ok(train_pv(&boot, &cfg.pv_train)?.0))?;
    drop(boot);
    for generation in 1..cfg.pv_generations.max(1) {
        let gen_cfg = SelfplayConfig {
            games: cfg.generation_games,
            seed: derive(cfg.seed ^ 0x9e4, generation as u64),
            ..boot_cfg.clone()
        };
        let k_gen = key(k_pv, "generation", &gen_cfg);
        let games = cache.get_or("generation", k_gen, "rec", load_records, save_records, || {
            generate_selfplay(&pv, &gen_cfg)
        })?;
        k_pv = key(k_gen, "pv", &cfg.pv_train);
        pv = cache.get_or("pv", k_pv, "net", load_network, save_net, || Ok(train_pv(&games, &cfg.pv_train)?.0))?;
    }

    let sp_cfg = SelfplayConfig {
        board_size: cfg.board_size,
        games: cfg.selfplay_games,
        sims_per_move: cfg.selfplay_sims,
        seed: cfg.seed,
        workers: cfg.workers,
        ..SelfplayConfig::default()
    };
    if sp_cfg.sims_per_move >= cfg.n_max {
        return Err(Error::Config("self-play budget must stay below n_max".into()));
    }
    let k_sp = key(k_pv, "selfplay", &sp_cfg);
    let records =
        cache.get_or("selfplay", k_sp, "rec", load_records, save_records, || generate_selfplay(&pv, &sp_cfg))?;

    let rl_cfg = RelabelConfig { n_max: cfg.n_max, epsilon: cfg.epsilon, c_puct: 1.5, workers: cfg.workers };
    let k_rl = key(k_sp, "relabel", &rl_cfg);
    let dataset =
        cache.get_or("relabel", k_rl, "ds", load_dataset, save_dataset, || relabel(&records, &pv, &rl_cfg))?;
    drop(records);

    let every = cfg.holdout_every.max(2);
    let train = dataset.filter_games(|g| g % every != 0);
    let held = dataset.filter_games(|g| g % every == 0);

    let k_su = key(k_rl, "state_un", &(&cfg.state_un_train, every));
    let state_un = cache.get_or("state_un", k_su, "net", load_network, save_net, || {
        Ok(train_state_un(&train, &build_state_un_dataset(&train), &cfg.state_un_train)?.0)
    })?;

    let kept = prune(&train, &state_un, cfg.balance.prune_threshold);
    let kept_m: Vec<usize> = kept.iter().map(|&i| train.entry(&train.states[i]).label.min_sims).collect();
    let checkpoint = choose_checkpoint(&kept_m, cfg.n_max)?;
    let n_star = checkpoint.n_star.max(2);
    eprintln!("[pipeline] n* = {n_star} over {} kept states", kept_m.len());

    let (rows, balance) = prune_and_balance(&train, &state_un, n_star, &cfg.balance)?;
    let k_mu = key(k_su, "mcts_un", &(&cfg.mcts_un_train, &cfg.balance, n_star));
    let mcts_un = cache.get_or("mcts_un", k_mu, "net", load_network, save_net, || {
        Ok(train_mcts_un(&train, &rows, n_star, &cfg.mcts_un_train)?.0)
    })?;

    let checkpoints = doubling_checkpoints(n_star, cfg.n_max);
    let probe = DsConfig::new(cfg.n_max, checkpoints.clone(), vec![0.0; checkpoints.len()])?;
    let entries: Vec<_> = held
        .states
        .iter()
        .map(|s| {
            let e = held.entry(s);
            (&e.trace, e.label.min_sims)
        })
        .collect();
    let scores = CheckpointScores::compute(&entries, &probe, Some(&state_un), Some(&mcts_un))?;
    let thr = select_thresholds(&scores, &default_threshold_grid(), cfg.target_recall);
    let thresholds = validate_thresholds(&scores, &thr)?;
    let ds_config = DsConfig { start: StartMode::StateUn, ..DsConfig::new(cfg.n_max, checkpoints, thr)? };

    Ok(PipelineOutcome { pv, dataset, state_un, mcts_un, checkpoint, balance, ds_config, thresholds })
}

/// DS search against fixed-budget search at `n_max`.
pub fn final_match(cfg: &PipelineConfig, out: &PipelineOutcome, cache_dir: Option<&Path>) -> Result<MatchResult> {
    let cache = Cache { dir: cache_dir.map(Path::to_path_buf) };
    let mcfg = MatchConfig {
        board_size: cfg.board_size,
        games: cfg.match_games,
        seed: cfg.seed ^ 0x6d61_7463_68,
        opening_plies: cfg.opening_plies,
        swap_colors: true,
        workers: cfg.workers,
    };
    let digest = stable_hash(&format!(
        "{:?}{:?}{:?}{}",
        out.ds_config,
        out.pv.params().iter().take(64).map(|p| p.to_bits()).collect::<Vec<_>>(),
        out.mcts_un.params().iter().take(64).map(|p| p.to_bits()).collect::<Vec<_>>(),
        serde_json::to_string(&mcfg).unwrap()
    ));
    cache.get_or("match", digest, "json", load_json, save_json, || {
        let ds = DsAgent {
            evaluator: &out.pv,
            config: out.ds_config.clone(),
            state_un: Some(&out.state_un),
            mcts_un: Some(&out.mcts_un),
        };
        let pv = PvAgent { evaluator: &out.pv, simulations: cfg.n_max, stop_rule: false, c_puct: 1.5 };
        play_match(&ds, &pv, &mcfg)
    })
}
