//! Relabelled positions: a deep search per distinct position, with labels
//! recomputed from the stored trace.

use std::collections::HashMap;
use std::io::{Read, Write};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::codec::{read_frame, write_frame, Reader};
use super::records::GameRecord;
use crate::error::{Error, Result};
use crate::game::{GameState, Move, Player};
use crate::mcts::{search, CachedEvaluator, Evaluator, SearchConfig, SearchTrace};
use crate::uncertainty::{labels_from_trace, UncertaintyLabel};

pub const DATASET_MAGIC: &[u8; 8] = b"DSMCTSDS";
pub const DATASET_VERSION: u32 = 1;
pub const FEATURE_SCHEMA: &str =
    "state:own,opp,legal,ones;mcts:prior,visits,q,std,recent_policy,recent_q,recent_std";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetHeader {
    pub version: u32,
    pub board_size: usize,
    pub n_max: usize,
    pub epsilon: f64,
    pub schema: String,
}

/// A deep-search trace of one distinct position with its labels.
#[derive(Clone, Debug)]
pub struct TraceEntry {
    pub trace: SearchTrace,
    pub label: UncertaintyLabel,
}

/// One occurrence of a position in a game.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LabeledState {
    pub game: usize,
    pub ply: usize,
    pub trace_id: usize,
    /// Final outcome from the side to move.
    pub z: f64,
}

#[derive(Clone, Debug)]
pub struct LabeledDataset {
    pub header: DatasetHeader,
    /// Shared between splits of the same relabelling run.
    pub traces: Arc<Vec<TraceEntry>>,
    pub states: Vec<LabeledState>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub header: DatasetHeader,
    pub states: usize,
    pub distinct_positions: usize,
    pub games: usize,
    /// Fraction of states with `U(s, 1) = 1`.
    pub uncertain_at_one: f64,
    pub fraction_m_equals_one: f64,
    pub mean_min_sims: f64,
    /// Min-sim histogram over occurrences in 10 equal-width buckets of `1..=n_max`.
    pub min_sims_buckets: Vec<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RelabelConfig {
    pub n_max: usize,
    pub epsilon: f64,
    pub c_puct: f64,
    pub workers: usize,
}

impl Default for RelabelConfig {
    fn default() -> Self {
        RelabelConfig { n_max: 400, epsilon: 0.05, c_puct: 1.5, workers: 1 }
    }
}

/// Runs a noise-free `n_max`-simulation search on every distinct
/// non-terminal position of `records`. The search is deterministic, so
/// repeated positions share a trace.
pub fn relabel<E: Evaluator + Sync>(records: &[GameRecord], evaluator: &E, cfg: &RelabelConfig) -> Result<LabeledDataset> {
    if cfg.n_max == 0 {
        return Err(Error::Config("n_max must be positive".into()));
    }
    if cfg.epsilon <= 0.0 {
        return Err(Error::Config(format!("epsilon {} must be positive", cfg.epsilon)));
    }
    let size = records.first().map_or(5, |r| r.size);
    let mut index: HashMap<u64, Vec<usize>> = HashMap::new();
    let mut unique: Vec<GameState> = Vec::new();
    let mut states = Vec::new();
    for (g, record) in records.iter().enumerate() {
        if record.size != size {
            return Err(Error::Format("records mix board sizes".into()));
        }
        for (ply, pos) in record.positions()?.into_iter().enumerate() {
            if pos.is_terminal() {
                continue;
            }
            let bucket = index.entry(pos.position_hash()).or_default();
            let id = match bucket.iter().find(|&&id| unique[id] == pos) {
                Some(&id) => id,
                None => {
                    unique.push(pos);
                    bucket.push(unique.len() - 1);
                    unique.len() - 1
                }
            };
            states.push(LabeledState { game: g, ply, trace_id: id, z: record.outcome_at(ply) });
        }
    }
    let search_cfg = SearchConfig { c_puct: cfg.c_puct, noise: None, record_snapshots: false };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers.max(1))
        .build()
        .map_err(|e| Error::Config(e.to_string()))?;
    let traces = pool.install(|| {
        unique
            .par_iter()
            .map(|&root| {
                let cached = CachedEvaluator::new(evaluator, 1 << 16);
                let trace = search(root, cfg.n_max, &cached, search_cfg, 0)?;
                let label = labels_from_trace(&trace, cfg.n_max, cfg.epsilon)?;
                Ok(TraceEntry { trace, label })
            })
            .collect::<Result<Vec<_>>>()
    })?;
    let header = DatasetHeader {
        version: DATASET_VERSION,
        board_size: size,
        n_max: cfg.n_max,
        epsilon: cfg.epsilon,
        schema: FEATURE_SCHEMA.to_string(),
    };
    Ok(LabeledDataset { header, traces: Arc::new(traces), states })
}

impl LabeledDataset {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn entry(&self, state: &LabeledState) -> &TraceEntry {
        &self.traces[state.trace_id]
    }

    pub fn min_sims(&self) -> Vec<usize> {
        self.states.iter().map(|s| self.entry(s).label.min_sims).collect()
    }

    /// Keeps the states whose game index satisfies `keep`; traces are shared.
    pub fn filter_games(&self, keep: impl Fn(usize) -> bool) -> LabeledDataset {
        LabeledDataset {
            header: self.header.clone(),
            traces: Arc::clone(&self.traces),
            states: self.states.iter().copied().filter(|s| keep(s.game)).collect(),
        }
    }

    pub fn manifest(&self) -> DatasetManifest {
        let m = self.min_sims();
        let n = m.len().max(1) as f64;
        let n_max = self.header.n_max;
        let mut buckets = vec![0usize; 10];
        for &x in &m {
            buckets[((x - 1) * 10 / n_max).min(9)] += 1;
        }
        let games = self.states.iter().map(|s| s.game).max().map_or(0, |g| g + 1);
        DatasetManifest {
            header: self.header.clone(),
            states: m.len(),
            distinct_positions: self.traces.len(),
            games,
            uncertain_at_one: m.iter().filter(|&&x| x > 1).count() as f64 / n,
            fraction_m_equals_one: m.iter().filter(|&&x| x == 1).count() as f64 / n,
            mean_min_sims: m.iter().sum::<usize>() as f64 / n,
            min_sims_buckets: buckets,
        }
    }

    pub fn write<W: Write>(&self, mut w: W) -> Result<()> {
        let h = &self.header;
        w.write_all(DATASET_MAGIC)?;
        w.write_all(&h.version.to_le_bytes())?;
        w.write_all(&(h.board_size as u32).to_le_bytes())?;
        w.write_all(&(h.n_max as u32).to_le_bytes())?;
        w.write_all(&h.epsilon.to_le_bytes())?;
        write_frame(&mut w, h.schema.as_bytes())?;
        w.write_all(&(self.traces.len() as u64).to_le_bytes())?;
        for t in self.traces.iter() {
            write_frame(&mut w, &encode_trace(&t.trace))?;
        }
        w.write_all(&(self.states.len() as u64).to_le_bytes())?;
        for s in &self.states {
            let mut b = Vec::with_capacity(20);
            b.extend_from_slice(&(s.game as u32).to_le_bytes());
            b.extend_from_slice(&(s.ply as u16).to_le_bytes());
            b.extend_from_slice(&(s.trace_id as u32).to_le_bytes());
            b.push((s.z > 0.0) as u8);
            write_frame(&mut w, &b)?;
        }
        Ok(())
    }

    pub fn read<R: Read>(mut r: R) -> Result<Self> {
        let mut head = [0u8; 28];
        r.read_exact(&mut head)?;
        let mut hr = Reader::new(&head);
        if hr.take(8)? != DATASET_MAGIC {
            return Err(Error::Format("not a labelled dataset".into()));
        }
        let version = hr.u32()?;
        if version != DATASET_VERSION {
            return Err(Error::Format(format!("dataset version {version}")));
        }
        let board_size = hr.u32()? as usize;
        let n_max = hr.u32()? as usize;
        let epsilon = hr.f64()?;
        let schema = String::from_utf8(read_frame(&mut r)?).map_err(|e| Error::Format(e.to_string()))?;
        if schema != FEATURE_SCHEMA {
            return Err(Error::Format(format!("unknown feature schema {schema:?}")));
        }
        let header = DatasetHeader { version, board_size, n_max, epsilon, schema };
        let n_traces = read_u64(&mut r)? as usize;
        let mut traces = Vec::with_capacity(n_traces);
        for _ in 0..n_traces {
            let trace = decode_trace(&read_frame(&mut r)?, board_size)?;
            let label = labels_from_trace(&trace, n_max, epsilon)?;
            traces.push(TraceEntry { trace, label });
        }
        let n_states = read_u64(&mut r)? as usize;
        let mut states = Vec::with_capacity(n_states);
        for _ in 0..n_states {
            let frame = read_frame(&mut r)?;
            let mut sr = Reader::new(&frame);
            let game = sr.u32()? as usize;
            let ply = sr.u16()? as usize;
            let trace_id = sr.u32()? as usize;
            let z = if sr.u8()? == 1 { 1.0 } else { -1.0 };
            sr.finish()?;
            if trace_id >= traces.len() {
                return Err(Error::Format(format!("trace id {trace_id} out of range")));
            }
            states.push(LabeledState { game, ply, trace_id, z });
        }
        Ok(LabeledDataset { header, traces: Arc::new(traces), states })
    }
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn encode_trace(t: &SearchTrace) -> Vec<u8> {
    let mut b = Vec::with_capacity(40 + 8 * t.priors.len() + 10 * t.pairs.len());
    b.extend_from_slice(&t.root.stones(Player::Black).to_le_bytes());
    b.extend_from_slice(&t.root.stones(Player::White).to_le_bytes());
    b.push(t.root.to_move().index() as u8);
    for p in &t.priors {
        b.extend_from_slice(&p.to_le_bytes());
    }
    b.extend_from_slice(&t.root_value.to_le_bytes());
    b.extend_from_slice(&(t.pairs.len() as u32).to_le_bytes());
    for &(a, v) in &t.pairs {
        b.extend_from_slice(&a.to_le_bytes());
        b.extend_from_slice(&v.to_le_bytes());
    }
    b
}

fn bits_to_moves(bits: u128, size: usize) -> Vec<Move> {
    (0..size * size).filter(|i| bits >> i & 1 == 1).map(|i| Move::from_index(i, size)).collect()
}

fn decode_trace(bytes: &[u8], size: usize) -> Result<SearchTrace> {
    let mut r = Reader::new(bytes);
    let black = r.u128()?;
    let white = r.u128()?;
    let to_move = if r.u8()? == 0 { Player::Black } else { Player::White };
    let root = GameState::from_stones(size, &bits_to_moves(black, size), &bits_to_moves(white, size), to_move)?;
    let priors = (0..size * size).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
    let root_value = r.f64()?;
    let n = r.u32()? as usize;
    let mut pairs = Vec::with_capacity(n);
    for _ in 0..n {
        let a = r.u16()?;
        if a as usize >= size * size {
            return Err(Error::Format(format!("action {a} off board")));
        }
        pairs.push((a, r.f64()?));
    }
    r.finish()?;
    Ok(SearchTrace { root, priors, root_value, pairs, snapshots: None })
}
