//! Self-play game records.

use std::io::{Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::codec::{read_frame, write_frame, Reader};
use crate::error::{Error, Result};
use crate::game::{GameState, Move, Player};
use crate::mcts::{policy_from_counts, search, CachedEvaluator, DirichletNoise, Evaluator, SearchConfig};
use crate::seed::derive;

pub const RECORDS_MAGIC: &[u8; 8] = b"DSMCTSGR";
pub const RECORDS_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GameRecord {
    pub size: usize,
    pub moves: Vec<Move>,
    pub winner: Player,
    /// Root visit counts behind each move, when recorded.
    pub visit_counts: Vec<Vec<u32>>,
}

impl GameRecord {
    /// Positions before each move plus the final position.
    pub fn positions(&self) -> Result<Vec<GameState>> {
        let mut s = GameState::new(self.size)?;
        let mut out = vec![s];
        for &m in &self.moves {
            s = s.play(m)?;
            out.push(s);
        }
        Ok(out)
    }

    /// Replays the game and checks legality and the recorded result.
    pub fn validate(&self) -> Result<()> {
        let positions = self.positions()?;
        let last = positions.last().unwrap();
        if last.winner()? != self.winner {
            return Err(Error::Format("recorded winner disagrees with replay".into()));
        }
        if !self.visit_counts.is_empty() && self.visit_counts.len() != self.moves.len() {
            return Err(Error::Format("visit counts do not cover every move".into()));
        }
        Ok(())
    }

    /// Outcome for the side to move at `ply`: +1 if that side won.
    pub fn outcome_at(&self, ply: usize) -> f64 {
        let mover = if ply % 2 == 0 { Player::Black } else { Player::White };
        if mover == self.winner {
            1.0
        } else {
            -1.0
        }
    }

    /// SGF-like text for inspection.
    pub fn to_sgf(&self) -> String {
        let mut out = format!("(;GM[NoGo]SZ[{}]RE[{}+]", self.size, if self.winner == Player::Black { "B" } else { "W" });
        for (i, m) in self.moves.iter().enumerate() {
            let color = if i % 2 == 0 { 'B' } else { 'W' };
            let col = (b'a' + m.col) as char;
            let row = (b'a' + (self.size as u8 - 1 - m.row)) as char;
            out.push_str(&format!(";{color}[{col}{row}]"));
        }
        out.push(')');
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelfplayConfig {
    pub board_size: usize,
    pub games: usize,
    pub sims_per_move: usize,
    pub c_puct: f64,
    /// Root Dirichlet noise; `None` disables it.
    #[serde(skip)]
    pub noise: Option<DirichletNoise>,
    /// Fraction of `size²` plies played by sampling the visit distribution.
    pub sample_fraction: f64,
    pub seed: u64,
    pub workers: usize,
    pub record_counts: bool,
}

impl Default for SelfplayConfig {
    fn default() -> Self {
        SelfplayConfig {
            board_size: 5,
            games: 2000,
            sims_per_move: 50,
            c_puct: 1.5,
            noise: Some(DirichletNoise::default()),
            sample_fraction: 0.3,
            seed: 0,
            workers: 1,
            record_counts: true,
        }
    }
}

impl SelfplayConfig {
    pub fn sampled_plies(&self) -> usize {
        (self.sample_fraction * (self.board_size * self.board_size) as f64).floor() as usize
    }
}

fn play_one<E: Evaluator>(evaluator: &E, cfg: &SelfplayConfig, game: usize) -> Result<GameRecord> {
    let game_seed = derive(cfg.seed, game as u64);
    let mut rng = ChaCha8Rng::seed_from_u64(game_seed);
    let cached = CachedEvaluator::new(evaluator, 1 << 16);
    let search_cfg = SearchConfig { c_puct: cfg.c_puct, noise: cfg.noise, record_snapshots: false };
    let mut state = GameState::new(cfg.board_size)?;
    let mut moves = Vec::new();
    let mut counts_log = Vec::new();
    let sampled = cfg.sampled_plies();
    while !state.is_terminal() {
        let trace = search(state, cfg.sims_per_move, &cached, search_cfg, rng.random())?;
        let n = trace.simulations();
        let action = if state.ply() < sampled {
            let pi = trace.root_policy(n, 1.0)?;
            let r: f64 = rng.random();
            let mut acc = 0.0;
            let mut pick = trace.best_action(n)?;
            for (a, p) in pi.iter().enumerate() {
                acc += p;
                if *p > 0.0 && r < acc {
                    pick = a;
                    break;
                }
            }
            pick
        } else {
            trace.best_action(n)?
        };
        if cfg.record_counts {
            counts_log.push(trace.stats_at(n)?.counts);
        }
        let m = Move::from_index(action, cfg.board_size);
        state = state.play(m)?;
        moves.push(m);
    }
    Ok(GameRecord { size: cfg.board_size, moves, winner: state.winner()?, visit_counts: counts_log })
}

/// Plays `cfg.games` self-play games; game `k` uses seed `derive(seed, k)`.
pub fn generate_selfplay<E: Evaluator + Sync>(evaluator: &E, cfg: &SelfplayConfig) -> Result<Vec<GameRecord>> {
    if cfg.sims_per_move == 0 {
        return Err(Error::Config("sims_per_move must be positive".into()));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers.max(1))
        .build()
        .map_err(|e| Error::Config(e.to_string()))?;
    pool.install(|| (0..cfg.games).into_par_iter().map(|k| play_one(evaluator, cfg, k)).collect())
}

/// Visit-count policy target for move `i` of a record.
pub fn record_policy(record: &GameRecord, i: usize) -> Option<Vec<f64>> {
    let counts = record.visit_counts.get(i)?;
    let fallback = record.moves[i].index(record.size);
    Some(policy_from_counts(counts, 1.0, fallback))
}

fn encode_record(r: &GameRecord) -> Vec<u8> {
    let mut b = Vec::new();
    b.push(r.size as u8);
    b.push(r.winner.index() as u8);
    b.extend_from_slice(&(r.moves.len() as u16).to_le_bytes());
    for m in &r.moves {
        b.push(m.index(r.size) as u8);
    }
    b.push(!r.visit_counts.is_empty() as u8);
    for counts in &r.visit_counts {
        for c in counts {
            b.extend_from_slice(&c.to_le_bytes());
        }
    }
    b
}

fn decode_record(bytes: &[u8]) -> Result<GameRecord> {
    let mut r = Reader::new(bytes);
    let size = r.u8()? as usize;
    let winner = match r.u8()? {
        0 => Player::Black,
        1 => Player::White,
        x => return Err(Error::Format(format!("bad winner byte {x}"))),
    };
    let n = r.u16()? as usize;
    let mut moves = Vec::with_capacity(n);
    for _ in 0..n {
        let idx = r.u8()? as usize;
        if idx >= size * size {
            return Err(Error::Format(format!("move index {idx} off board")));
        }
        moves.push(Move::from_index(idx, size));
    }
    let mut visit_counts = Vec::new();
    if r.u8()? == 1 {
        for _ in 0..n {
            visit_counts.push((0..size * size).map(|_| r.u32()).collect::<Result<Vec<_>>>()?);
        }
    }
    r.finish()?;
    Ok(GameRecord { size, moves, winner, visit_counts })
}

pub fn write_records<W: Write>(records: &[GameRecord], mut w: W) -> Result<()> {
    w.write_all(RECORDS_MAGIC)?;
    w.write_all(&RECORDS_VERSION.to_le_bytes())?;
    w.write_all(&(records.len() as u64).to_le_bytes())?;
    for r in records {
        write_frame(&mut w, &encode_record(r))?;
    }
    Ok(())
}

pub fn read_records<R: Read>(mut r: R) -> Result<Vec<GameRecord>> {
    let mut head = [0u8; 20];
    r.read_exact(&mut head)?;
    if &head[..8] != RECORDS_MAGIC {
        return Err(Error::Format("not a game-record file".into()));
    }
    let version = u32::from_le_bytes(head[8..12].try_into().unwrap());
    if version != RECORDS_VERSION {
        return Err(Error::Format(format!("record file version {version}")));
    }
    let count = u64::from_le_bytes(head[12..20].try_into().unwrap()) as usize;
    (0..count).map(|_| decode_record(&read_frame(&mut r)?)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mcts::RolloutEvaluator;

    fn small_cfg() -> SelfplayConfig {
        SelfplayConfig { board_size: 4, games: 6, sims_per_move: 12, seed: 3, ..Default::default() }
    }

    #[test]
    fn records_replay_and_serialise_identically() {
        let eval = RolloutEvaluator { playouts: 1, seed: 0 };
        let a = generate_selfplay(&eval, &small_cfg()).unwrap();
        let b = generate_selfplay(&eval, &small_cfg()).unwrap();
        let (mut ba, mut bb) = (Vec::new(), Vec::new());
        write_records(&a, &mut ba).unwrap();
        write_records(&b, &mut bb).unwrap();
        assert_eq!(ba, bb);
        for r in &a {
            r.validate().unwrap();
            assert_eq!(r.visit_counts.len(), r.moves.len());
            for c in &r.visit_counts {
                assert_eq!(c.iter().sum::<u32>(), 11);
            }
        }
        assert_eq!(read_records(&ba[..]).unwrap(), a);
    }

    #[test]
    fn greedy_noise_free_games_coincide() {
        let eval = RolloutEvaluator { playouts: 1, seed: 0 };
        let cfg = SelfplayConfig { noise: None, sample_fraction: 0.0, ..small_cfg() };
        let games = generate_selfplay(&eval, &cfg).unwrap();
        assert!(games.windows(2).all(|w| w[0].moves == w[1].moves));
    }

    #[test]
    fn outcome_perspective_and_sgf() {
        let r = GameRecord { size: 1, moves: vec![], winner: Player::White, visit_counts: vec![] };
        r.validate().unwrap();
        assert_eq!(r.outcome_at(0), -1.0);
        assert_eq!(r.to_sgf(), "(;GM[NoGo]SZ[1]RE[W+])");
    }
}
