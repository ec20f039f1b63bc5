//! The federated training loop.
//!
//! Each round every worker adds its accumulated error to a fresh gradient,
//! keeps the top-K entries and carries the rest forward. In PolarAir mode the
//! sparse vectors are measured, power controlled and superposed on the noisy
//! MAC; the server preprocesses, recovers and applies the estimate. In Dense
//! mode a genie hands the server `(1/W) Σ_w g_w^K` at a cost of a fixed number
//! of channel uses. At each epoch end the test accuracy is measured and, in
//! PolarAir mode, the measurement length may grow.

use rand::seq::{index::sample, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::channel::{mac_transmit, power_encode, ps_preprocess};
use crate::codec::{Codec, SparseVector};
use crate::config::{ExperimentConfig, GradientSourceKind, Mode, OptimizerKind};
use crate::error::{Error, Result};
use crate::metrics::{compute_round_stats, SetTaxonomy};
use crate::model::{self, Adam, MlpParams, MlpShape, Sample, SynthDataset};

/// Keeps the `k` largest-magnitude entries; ties go to the lower index and
/// exact zeros are never kept.
pub fn top_k(v: &[f64], k: usize) -> SparseVector {
    let mut order: Vec<usize> = (0..v.len()).filter(|&i| v[i] != 0.0).collect();
    order.sort_by(|&a, &b| v[b].abs().total_cmp(&v[a].abs()).then(a.cmp(&b)));
    order.truncate(k);
    SparseVector::from_pairs(order.into_iter().map(|i| (i, v[i])))
}

pub fn top_k_sparse(v: &SparseVector, k: usize) -> SparseVector {
    let mut pairs: Vec<(usize, f64)> = v.iter().collect();
    pairs.sort_by(|a, b| b.1.abs().total_cmp(&a.1.abs()).then(a.0.cmp(&b.0)));
    pairs.truncate(k);
    SparseVector::from_pairs(pairs)
}

/// A worker's error accumulator. The worker's data shard is `shards[id]` of
/// the experiment's dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct WorkerState {
    pub id: usize,
    pub delta: Vec<f64>,
    pub batch_size: usize,
}

impl WorkerState {
    pub fn new(id: usize, n: usize, batch_size: usize) -> Self {
        Self {
            id,
            delta: vec![0.0; n],
            batch_size,
        }
    }
}

/// Error-feedback sparsification: `g + Δ` → top-K, and `Δ ← (g + Δ) − top-K`.
pub fn worker_round(state: &mut WorkerState, g: &[f64], k: usize) -> Result<SparseVector> {
    if g.len() != state.delta.len() {
        return Err(Error::InvalidArgument(format!(
            "gradient of length {} for a worker of dimension {}",
            g.len(),
            state.delta.len()
        )));
    }
    for (d, gi) in state.delta.iter_mut().zip(g) {
        *d += gi;
    }
    let out = top_k(&state.delta, k);
    for &i in out.indices() {
        state.delta[i] = 0.0;
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub enum Optimizer {
    Sgd,
    Adam(Adam),
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, dim: usize) -> Self {
        match kind {
            OptimizerKind::Sgd => Optimizer::Sgd,
            OptimizerKind::Adam => Optimizer::Adam(Adam::new(dim)),
        }
    }
}

/// Applies the densified estimate as the gradient. Indices at or beyond
/// `theta.len()` (padding coordinates) are ignored; their count is returned.
pub fn ps_update(theta: &mut [f64], estimate: &SparseVector, opt: &mut Optimizer, lr: f64) -> usize {
    let mut rejected = 0;
    match opt {
        Optimizer::Sgd => {
            for (k, v) in estimate.iter() {
                match theta.get_mut(k) {
                    Some(t) => *t -= lr * v,
                    None => rejected += 1,
                }
            }
        }
        Optimizer::Adam(adam) => {
            let mut g = vec![0.0; theta.len()];
            for (k, v) in estimate.iter() {
                match g.get_mut(k) {
                    Some(slot) => *slot = v,
                    None => rejected += 1,
                }
            }
            adam.step(theta, &g, lr);
        }
    }
    rejected
}

/// Adaptive measurement growth across epochs.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyState {
    pub l: usize,
    pub n_c: usize,
    pub n_c_bump_used: bool,
    pub rounds_per_epoch: usize,
    recovered_counts: Vec<usize>,
}

/// What happened at an epoch boundary.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolicyOutcome {
    pub q: f64,
    pub changed: bool,
}

impl PolicyState {
    pub fn new(l: usize, n_c: usize, rounds_per_epoch: usize) -> Self {
        Self {
            l,
            n_c,
            n_c_bump_used: false,
            rounds_per_epoch,
            recovered_counts: Vec::new(),
        }
    }

    pub fn record_round(&mut self, recovered: usize) {
        self.recovered_counts.push(recovered);
    }

    /// `Q = (1/C) Σ_c |Â_c|` over the rounds recorded this epoch.
    pub fn q(&self) -> f64 {
        let c = self.rounds_per_epoch.max(1);
        self.recovered_counts.iter().sum::<usize>() as f64 / c as f64
    }

    pub fn m(&self) -> usize {
        self.l * self.n_c
    }

    pub fn clear_epoch(&mut self) {
        self.recovered_counts.clear();
    }

    /// Epoch-end update: if `Q ≤ K/2`, grow `n_c` by 32 the first time and
    /// `L` by 100 afterwards. Clears the epoch's counts.
    pub fn step(&mut self, k: usize) -> Result<PolicyOutcome> {
        let q = self.q();
        self.clear_epoch();
        if q > k as f64 / 2.0 {
            return Ok(PolicyOutcome { q, changed: false });
        }
        if self.n_c_bump_used {
            self.l += 100;
        } else {
            let next = self.n_c + 32;
            if !next.is_power_of_two() {
                return Err(Error::InvalidConfig(format!(
                    "policy would grow n_c to {next}, which is not a power of two"
                )));
            }
            self.n_c = next;
            self.n_c_bump_used = true;
        }
        Ok(PolicyOutcome { q, changed: true })
    }
}

pub fn adaptive_policy_step(policy: &PolicyState, k: usize) -> Result<PolicyState> {
    let mut next = policy.clone();
    next.step(k)?;
    Ok(next)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoundRecord {
    pub epoch: usize,
    pub round: usize,
    pub mode: Mode,
    pub channel_uses: u64,
    pub channel_uses_cum: u64,
    /// `|Â|`, all CRC-validated indices including false alarms.
    pub recovered: usize,
    pub pd: f64,
    pub pfa: f64,
    pub b_hat: usize,
    pub active_count: usize,
    pub l: usize,
    pub n_c: usize,
    pub aborted: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    /// NaN when the gradient source has no test set.
    pub test_accuracy: f64,
    pub q: f64,
    /// Spreading and block length used during the epoch.
    pub l: usize,
    pub n_c: usize,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ExperimentResult {
    pub rounds: Vec<RoundRecord>,
    pub epochs: Vec<EpochRecord>,
    pub final_theta: Vec<f64>,
}

impl ExperimentResult {
    /// Cumulative channel uses at the end of the first epoch whose test
    /// accuracy reaches `target`.
    pub fn channel_uses_to_target(&self, target: f64) -> Option<u64> {
        let epoch = self.epochs.iter().find(|e| e.test_accuracy >= target)?.epoch;
        self.rounds
            .iter()
            .filter(|r| r.epoch == epoch)
            .map(|r| r.channel_uses_cum)
            .max()
    }
}

/// Supplies per-worker gradients and evaluates the model.
pub trait GradientSource {
    /// Length of the parameter vector; at most the codec's N.
    fn dim(&self) -> usize;
    fn rounds_per_epoch(&self) -> usize;
    fn initial_params(&self) -> Vec<f64>;
    fn start_epoch(&mut self, _epoch: usize) {}
    fn gradient(&mut self, worker: usize, round: usize, theta: &[f64]) -> Vec<f64>;
    fn evaluate(&self, _theta: &[f64]) -> Option<f64> {
        None
    }
}

/// MLP on the synthetic mixture; each worker walks a reshuffled order of its
/// shard every epoch.
pub struct ToyModelSource {
    shape: MlpShape,
    data: SynthDataset,
    batch_size: usize,
    rounds: usize,
    init: Vec<f64>,
    orders: Vec<Vec<usize>>,
    rng: ChaCha8Rng,
}

impl ToyModelSource {
    pub fn new(cfg: &ExperimentConfig) -> Result<Self> {
        let shape = cfg.shape();
        let data = model::synth_dataset(&cfg.dataset_params())?;
        let shard_len = data.shards.iter().map(Vec::len).min().unwrap_or(0);
        if shard_len < cfg.batch_size {
            return Err(Error::InvalidConfig(format!(
                "shards of {shard_len} samples cannot fill a batch of {}",
                cfg.batch_size
            )));
        }
        let rounds = if cfg.rounds_per_epoch == 0 {
            shard_len / cfg.batch_size
        } else {
            cfg.rounds_per_epoch
        };
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(1);
        let init = MlpParams::init(shape, &mut rng).theta;
        Ok(Self {
            shape,
            data,
            batch_size: cfg.batch_size,
            rounds,
            init,
            orders: Vec::new(),
            rng,
        })
    }

    pub fn dataset(&self) -> &SynthDataset {
        &self.data
    }

    fn batch(&self, worker: usize, round: usize) -> Vec<Sample> {
        let order = &self.orders[worker];
        (0..self.batch_size)
            .map(|b| {
                let pos = ((round - 1) * self.batch_size + b) % order.len();
                self.data.shards[worker][order[pos]].clone()
            })
            .collect()
    }
}

impl GradientSource for ToyModelSource {
    fn dim(&self) -> usize {
        self.shape.num_params()
    }

    fn rounds_per_epoch(&self) -> usize {
        self.rounds
    }

    fn initial_params(&self) -> Vec<f64> {
        self.init.clone()
    }

    fn start_epoch(&mut self, _epoch: usize) {
        self.orders = self
            .data
            .shards
            .iter()
            .map(|s| {
                let mut o: Vec<usize> = (0..s.len()).collect();
                o.shuffle(&mut self.rng);
                o
            })
            .collect();
    }

    fn gradient(&mut self, worker: usize, round: usize, theta: &[f64]) -> Vec<f64> {
        let batch = self.batch(worker, round);
        model::forward_backward(&self.shape, theta, &batch).1
    }

    fn evaluate(&self, theta: &[f64]) -> Option<f64> {
        Some(model::accuracy(&self.shape, theta, &self.data.test))
    }
}

/// Codec-only workload: every worker produces K random indices with standard
/// normal values, independent of the model.
pub struct SyntheticSparseSource {
    n: usize,
    k: usize,
    rounds: usize,
    rng: ChaCha8Rng,
}

impl SyntheticSparseSource {
    pub fn new(n: usize, k: usize, rounds: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(3);
        Self { n, k, rounds, rng }
    }
}

impl GradientSource for SyntheticSparseSource {
    fn dim(&self) -> usize {
        self.n
    }

    fn rounds_per_epoch(&self) -> usize {
        self.rounds
    }

    fn initial_params(&self) -> Vec<f64> {
        vec![0.0; self.n]
    }

    fn gradient(&mut self, _worker: usize, _round: usize, _theta: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; self.n];
        for i in sample(&mut self.rng, self.n, self.k.min(self.n)) {
            g[i] = self.rng.sample(StandardNormal);
        }
        g
    }
}

pub fn build_source(cfg: &ExperimentConfig) -> Result<Box<dyn GradientSource>> {
    Ok(match cfg.gradient_source {
        GradientSourceKind::ToyModel => Box::new(ToyModelSource::new(cfg)?),
        GradientSourceKind::Synthetic => {
            let rounds = if cfg.rounds_per_epoch == 0 { 10 } else { cfg.rounds_per_epoch };
            Box::new(SyntheticSparseSource::new(cfg.n, cfg.k, rounds, cfg.seed))
        }
    })
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    cfg.validate()?;
    let mut source = build_source(cfg)?;
    run_with_source(cfg, source.as_mut())
}

/// Runs the configured experiment with a caller-supplied gradient source.
pub fn run_with_source(cfg: &ExperimentConfig, source: &mut dyn GradientSource) -> Result<ExperimentResult> {
    let dim = source.dim();
    if dim > cfg.n {
        return Err(Error::InvalidConfig(format!(
            "gradient dimension {dim} exceeds N = {}",
            cfg.n
        )));
    }
    let rounds_per_epoch = source.rounds_per_epoch();
    let dense_uses = if cfg.dense_channel_uses == 0 { cfg.n } else { cfg.dense_channel_uses } as u64;

    let mut theta = source.initial_params();
    let mut opt = Optimizer::new(cfg.optimizer, dim);
    let mut policy = PolicyState::new(cfg.l, cfg.n_c, rounds_per_epoch);
    let mut codec = match cfg.mode {
        Mode::PolarAir => Some(Codec::new(cfg.codec_config(policy.l, policy.n_c)?)?),
        Mode::Dense => None,
    };
    let mut workers: Vec<WorkerState> = (0..cfg.workers)
        .map(|id| WorkerState::new(id, cfg.n, cfg.batch_size))
        .collect();
    let mut noise_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    noise_rng.set_stream(2);

    let mut result = ExperimentResult::default();
    let mut cum: u64 = 0;
    for epoch in 1..=cfg.epochs {
        source.start_epoch(epoch);
        let (epoch_l, epoch_n_c) = (policy.l, policy.n_c);
        for round in 1..=rounds_per_epoch {
            let mut sparse = Vec::with_capacity(workers.len());
            for w in &mut workers {
                let mut g = source.gradient(w.id, round, &theta);
                g.resize(cfg.n, 0.0);
                sparse.push(worker_round(w, &g, cfg.k)?);
            }
            let summed = sparse.iter().fold(SparseVector::default(), |acc, s| acc.add(s));

            let (estimate, uses, aborted) = match &codec {
                None => {
                    let inv = 1.0 / cfg.workers as f64;
                    let avg = SparseVector::from_pairs(summed.iter().map(|(k, v)| (k, v * inv)));
                    (Some(avg), dense_uses, false)
                }
                Some(codec) => {
                    let mut frames = Vec::with_capacity(sparse.len());
                    for s in &sparse {
                        frames.push(power_encode(&codec.measure(s)?, cfg.power)?);
                    }
                    let out = mac_transmit(&frames, cfg.noise_std, &mut noise_rng)?;
                    let uses = (codec.m() + 2) as u64;
                    match ps_preprocess(&out, cfg.normalizer_eps) {
                        Ok(y_tilde) => {
                            let rec = codec.recover(&y_tilde)?;
                            let scale = if cfg.rescale_by_workers { 1.0 / cfg.workers as f64 } else { 1.0 };
                            let est = SparseVector::from_pairs(rec.entries.iter().map(|&(k, v)| (k, v * scale)));
                            (Some(est), uses, false)
                        }
                        Err(Error::DegenerateNormalizer(_)) => (None, uses, true),
                        Err(e) => return Err(e),
                    }
                }
            };

            let recovered_idx: Vec<usize> = estimate.as_ref().map_or(Vec::new(), |e| e.indices().to_vec());
            let stats = compute_round_stats(&SetTaxonomy::new(&summed, cfg.k, recovered_idx));
            if let Some(est) = &estimate {
                ps_update(&mut theta, est, &mut opt, cfg.lr);
            }
            cum += uses;
            policy.record_round(stats.recovered);
            result.rounds.push(RoundRecord {
                epoch,
                round,
                mode: cfg.mode,
                channel_uses: uses,
                channel_uses_cum: cum,
                recovered: stats.recovered,
                pd: stats.pd,
                pfa: stats.pfa,
                b_hat: stats.b_hat,
                active_count: stats.active_count,
                l: epoch_l,
                n_c: epoch_n_c,
                aborted,
            });
        }

        let test_accuracy = source.evaluate(&theta).unwrap_or(f64::NAN);
        let q = policy.q();
        result.epochs.push(EpochRecord {
            epoch,
            test_accuracy,
            q,
            l: epoch_l,
            n_c: epoch_n_c,
        });
        if cfg.mode == Mode::PolarAir && cfg.adaptive_policy {
            if policy.step(cfg.k)?.changed {
                codec = Some(Codec::new(cfg.codec_config(policy.l, policy.n_c)?)?);
            }
        } else {
            policy.clear_epoch();
        }
    }
    result.final_theta = theta;
    Ok(result)
}
