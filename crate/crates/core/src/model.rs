//! A one-hidden-layer tanh MLP with softmax cross-entropy, a Gaussian-mixture
//! classification dataset and the ADAM optimizer.
//!
//! Parameters live in one flat vector laid out as `W1` (d_h × d_in, row-major),
//! `b1`, `W2` (d_out × d_h, row-major), `b2`.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MlpShape {
    pub d_in: usize,
    pub d_h: usize,
    pub d_out: usize,
}

impl MlpShape {
    pub fn num_params(&self) -> usize {
        self.d_in * self.d_h + self.d_h + self.d_h * self.d_out + self.d_out
    }

    fn offsets(&self) -> (usize, usize, usize) {
        let b1 = self.d_in * self.d_h;
        let w2 = b1 + self.d_h;
        let b2 = w2 + self.d_h * self.d_out;
        (b1, w2, b2)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    pub shape: MlpShape,
    pub theta: Vec<f64>,
}

impl MlpParams {
    pub fn zeros(shape: MlpShape) -> Self {
        Self {
            shape,
            theta: vec![0.0; shape.num_params()],
        }
    }

    /// Weights `N(0, 1/fan_in)`, zero biases.
    pub fn init<R: Rng + ?Sized>(shape: MlpShape, rng: &mut R) -> Self {
        let mut p = Self::zeros(shape);
        let (b1, w2, b2) = shape.offsets();
        let s1 = (1.0 / shape.d_in as f64).sqrt();
        let s2 = (1.0 / shape.d_h as f64).sqrt();
        for w in &mut p.theta[..b1] {
            *w = s1 * rng.sample::<f64, _>(StandardNormal);
        }
        for w in &mut p.theta[w2..b2] {
            *w = s2 * rng.sample::<f64, _>(StandardNormal);
        }
        p
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub features: Vec<f64>,
    pub label: usize,
}

struct Activations {
    hidden: Vec<f64>,
    probs: Vec<f64>,
}

fn forward(shape: &MlpShape, theta: &[f64], x: &[f64]) -> Activations {
    let (b1, w2, b2) = shape.offsets();
    let hidden: Vec<f64> = (0..shape.d_h)
        .map(|h| {
            let row = &theta[h * shape.d_in..(h + 1) * shape.d_in];
            let z: f64 = row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + theta[b1 + h];
            z.tanh()
        })
        .collect();
    let logits: Vec<f64> = (0..shape.d_out)
        .map(|o| {
            let row = &theta[w2 + o * shape.d_h..w2 + (o + 1) * shape.d_h];
            row.iter().zip(&hidden).map(|(w, h)| w * h).sum::<f64>() + theta[b2 + o]
        })
        .collect();
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    Activations {
        hidden,
        probs: exps.iter().map(|e| e / sum).collect(),
    }
}

/// Mean cross-entropy over `batch` and its gradient with respect to `theta`.
pub fn forward_backward(shape: &MlpShape, theta: &[f64], batch: &[Sample]) -> (f64, Vec<f64>) {
    assert!(!batch.is_empty(), "empty batch");
    assert_eq!(theta.len(), shape.num_params());
    let (b1, w2, b2) = shape.offsets();
    let inv = 1.0 / batch.len() as f64;
    let mut grad = vec![0.0; theta.len()];
    let mut loss = 0.0;

    for s in batch {
        let act = forward(shape, theta, &s.features);
        loss -= act.probs[s.label].max(f64::MIN_POSITIVE).ln();
        let d_out: Vec<f64> = act
            .probs
            .iter()
            .enumerate()
            .map(|(o, p)| (p - f64::from(u8::from(o == s.label))) * inv)
            .collect();
        let mut d_hidden = vec![0.0; shape.d_h];
        for (o, &d) in d_out.iter().enumerate() {
            let base = w2 + o * shape.d_h;
            for h in 0..shape.d_h {
                grad[base + h] += d * act.hidden[h];
                d_hidden[h] += d * theta[base + h];
            }
            grad[b2 + o] += d;
        }
        for h in 0..shape.d_h {
            let dz = d_hidden[h] * (1.0 - act.hidden[h] * act.hidden[h]);
            let base = h * shape.d_in;
            for (i, x) in s.features.iter().enumerate() {
                grad[base + i] += dz * x;
            }
            grad[b1 + h] += dz;
        }
    }
    (loss * inv, grad)
}

pub fn predict(shape: &MlpShape, theta: &[f64], x: &[f64]) -> usize {
    let act = forward(shape, theta, x);
    act.probs
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (i, &p)| if p > best.1 { (i, p) } else { best })
        .0
}

pub fn accuracy(shape: &MlpShape, theta: &[f64], samples: &[Sample]) -> f64 {
    if samples.is_empty() {
        return 0.0;
    }
    let correct = samples
        .iter()
        .filter(|s| predict(shape, theta, &s.features) == s.label)
        .count();
    correct as f64 / samples.len() as f64
}

/// Generator settings for [`synth_dataset`].
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetParams {
    pub classes: usize,
    pub dim: usize,
    pub workers: usize,
    /// Samples drawn for training before the equal split across workers.
    pub train_size: usize,
    pub test_size: usize,
    /// Norm of each class mean.
    pub mean_radius: f64,
    /// Per-coordinate standard deviation around the class mean.
    pub cluster_std: f64,
    pub seed: u64,
}

/// Gaussian mixture with a stratified train/test split and equal, disjoint
/// worker shards.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthDataset {
    pub means: Vec<Vec<f64>>,
    pub shards: Vec<Vec<Sample>>,
    pub test: Vec<Sample>,
}

impl SynthDataset {
    pub fn train(&self) -> impl Iterator<Item = &Sample> {
        self.shards.iter().flatten()
    }
}

pub fn synth_dataset(params: &DatasetParams) -> Result<SynthDataset> {
    if params.classes < 2 {
        return Err(Error::InvalidConfig(format!(
            "need at least 2 classes, got {}",
            params.classes
        )));
    }
    if !(params.cluster_std > 0.0) {
        return Err(Error::InvalidConfig(format!(
            "cluster standard deviation must be positive, got {}",
            params.cluster_std
        )));
    }
    if params.dim == 0 || params.workers == 0 || params.train_size < params.workers {
        return Err(Error::InvalidConfig(
            "dataset needs dim ≥ 1 and at least one training sample per worker".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let means: Vec<Vec<f64>> = (0..params.classes)
        .map(|_| {
            let v: Vec<f64> = (0..params.dim)
                .map(|_| rng.sample::<f64, _>(StandardNormal))
                .collect();
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
            v.iter().map(|x| x * params.mean_radius / norm).collect()
        })
        .collect();

    let total = params.train_size + params.test_size;
    let mut by_class: Vec<Vec<Sample>> = vec![Vec::new(); params.classes];
    for _ in 0..total {
        let label = rng.random_range(0..params.classes);
        let features = means[label]
            .iter()
            .map(|m| m + params.cluster_std * rng.sample::<f64, _>(StandardNormal))
            .collect();
        by_class[label].push(Sample { features, label });
    }

    // Stratified: each class contributes its proportional share of the test set.
    let test_frac = params.test_size as f64 / total as f64;
    let mut train = Vec::with_capacity(params.train_size);
    let mut test = Vec::with_capacity(params.test_size);
    for mut samples in by_class {
        let n_test = (samples.len() as f64 * test_frac).round() as usize;
        let rest = samples.split_off(n_test.min(samples.len()));
        test.extend(samples);
        train.extend(rest);
    }
    train.shuffle(&mut rng);
    test.shuffle(&mut rng);

    let shard_len = train.len() / params.workers;
    if shard_len == 0 {
        return Err(Error::InvalidConfig(format!(
            "{} training samples after the split cannot feed {} workers",
            train.len(),
            params.workers
        )));
    }
    let shards = train
        .chunks(shard_len)
        .take(params.workers)
        .map(<[Sample]>::to_vec)
        .collect();
    Ok(SynthDataset {
        means,
        shards,
        test,
    })
}

/// Bias-corrected ADAM.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u32,
}

impl Adam {
    pub fn new(dim: usize) -> Self {
        Self::with_hyper(dim, 0.9, 0.999, 1e-8)
    }

    pub fn with_hyper(dim: usize, beta1: f64, beta2: f64, eps: f64) -> Self {
        Self {
            beta1,
            beta2,
            eps,
            m: vec![0.0; dim],
            v: vec![0.0; dim],
            t: 0,
        }
    }

    pub fn steps(&self) -> u32 {
        self.t
    }

    pub fn step(&mut self, theta: &mut [f64], grad: &[f64], lr: f64) {
        assert_eq!(theta.len(), self.m.len());
        assert_eq!(grad.len(), self.m.len());
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t as i32);
        let c2 = 1.0 - self.beta2.powi(self.t as i32);
        for i in 0..theta.len() {
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * grad[i];
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * grad[i] * grad[i];
            let m_hat = self.m[i] / c1;
            let v_hat = self.v[i] / c2;
            theta[i] -= lr * m_hat / (v_hat.sqrt() + self.eps);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::{prop_assert, prop_assert_eq, proptest};

    const SMALL: MlpShape = MlpShape {
        d_in: 4,
        d_h: 5,
        d_out: 3,
    };

    fn random_batch(rng: &mut ChaCha8Rng, shape: &MlpShape, len: usize) -> Vec<Sample> {
        (0..len)
            .map(|_| Sample {
                features: (0..shape.d_in).map(|_| rng.random_range(-2.0..2.0)).collect(),
                label: rng.random_range(0..shape.d_out),
            })
            .collect()
    }

    fn finite_difference(shape: &MlpShape, theta: &[f64], batch: &[Sample]) -> Vec<f64> {
        let h = 1e-5;
        (0..theta.len())
            .map(|i| {
                let mut plus = theta.to_vec();
                let mut minus = theta.to_vec();
                plus[i] += h;
                minus[i] -= h;
                (forward_backward(shape, &plus, batch).0 - forward_backward(shape, &minus, batch).0)
                    / (2.0 * h)
            })
            .collect()
    }

    #[test]
    fn param_count() {
        let shape = MlpShape {
            d_in: 16,
            d_h: 32,
            d_out: 4,
        };
        assert_eq!(shape.num_params(), 16 * 32 + 32 + 32 * 4 + 4);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..100 {
            let p = MlpParams::init(SMALL, &mut rng);
            let batch = random_batch(&mut rng, &SMALL, 6);
            let (_, g) = forward_backward(&SMALL, &p.theta, &batch);
            let fd = finite_difference(&SMALL, &p.theta, &batch);
            let err = g.iter().zip(&fd).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            assert!(err <= 1e-6, "max error {err}");
        }
    }

    #[test]
    fn duplicated_batch_is_mean_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let p = MlpParams::init(SMALL, &mut rng);
        let batch = random_batch(&mut rng, &SMALL, 7);
        let doubled: Vec<Sample> = batch.iter().chain(&batch).cloned().collect();
        let (l1, g1) = forward_backward(&SMALL, &p.theta, &batch);
        let (l2, g2) = forward_backward(&SMALL, &p.theta, &doubled);
        assert!((l1 - l2).abs() < 1e-12);
        assert!(g1.iter().zip(&g2).all(|(a, b)| (a - b).abs() < 1e-12));
    }

    #[test]
    fn zero_params_give_ln2_on_two_classes() {
        let shape = MlpShape {
            d_in: 3,
            d_h: 4,
            d_out: 2,
        };
        let batch = vec![
            Sample {
                features: vec![1.0, 2.0, 3.0],
                label: 0,
            },
            Sample {
                features: vec![-1.0, 0.5, 0.0],
                label: 1,
            },
        ];
        let (loss, _) = forward_backward(&shape, &MlpParams::zeros(shape).theta, &batch);
        assert!((loss - 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn adam_first_step() {
        let mut adam = Adam::new(3);
        let mut theta = vec![1.0, -2.0, 0.5];
        adam.step(&mut theta, &[1.0, 0.0, -3.0], 0.01);
        // m̂ = g, v̂ = g², so each step is lr·g/(|g| + ε).
        assert!((theta[0] - (1.0 - 0.01 / (1.0 + 1e-8))).abs() < 1e-15);
        assert_eq!(theta[1], -2.0);
        assert!((theta[2] - (0.5 + 0.01 * 3.0 / (3.0 + 1e-8))).abs() < 1e-15);
    }

    #[test]
    fn adam_second_step_matches_recurrence() {
        let (b1, b2, eps, lr) = (0.9f64, 0.999f64, 1e-8, 0.05);
        let mut adam = Adam::new(1);
        let mut theta = vec![0.3];
        adam.step(&mut theta, &[2.0], lr);
        adam.step(&mut theta, &[-1.0], lr);
        let m1 = 0.1 * 2.0;
        let v1 = 0.001 * 4.0;
        let step1 = lr * (m1 / (1.0 - b1)) / ((v1 / (1.0 - b2)).sqrt() + eps);
        let m2 = b1 * m1 + 0.1 * -1.0;
        let v2 = b2 * v1 + 0.001 * 1.0;
        let step2 = lr * (m2 / (1.0 - b1 * b1)) / ((v2 / (1.0 - b2 * b2)).sqrt() + eps);
        assert!((theta[0] - (0.3 - step1 - step2)).abs() < 1e-14);
    }

    fn mixture(std: f64, seed: u64) -> DatasetParams {
        DatasetParams {
            classes: 4,
            dim: 16,
            workers: 4,
            train_size: 2000,
            test_size: 1000,
            mean_radius: 3.0,
            cluster_std: std,
            seed,
        }
    }

    #[test]
    fn dataset_is_deterministic_and_sharded() {
        let a = synth_dataset(&mixture(1.0, 9)).unwrap();
        let b = synth_dataset(&mixture(1.0, 9)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.shards.len(), 4);
        let len = a.shards[0].len();
        assert!(a.shards.iter().all(|s| s.len() == len));
        assert!(len >= 2000 / 4 - 2);
        assert_ne!(a, synth_dataset(&mixture(1.0, 10)).unwrap());
    }

    #[test]
    fn dataset_rejects_bad_params() {
        assert!(synth_dataset(&DatasetParams { classes: 1, ..mixture(1.0, 0) }).is_err());
        assert!(synth_dataset(&mixture(0.0, 0)).is_err());
        assert!(synth_dataset(&mixture(-1.0, 0)).is_err());
    }

    #[test]
    fn class_counts_are_near_uniform() {
        let params = DatasetParams {
            train_size: 8000,
            test_size: 2000,
            ..mixture(1.0, 3)
        };
        let data = synth_dataset(&params).unwrap();
        let mut counts = [0usize; 4];
        for s in data.train().chain(&data.test) {
            counts[s.label] += 1;
        }
        let n: usize = counts.iter().sum();
        assert!(n >= 9996);
        let p = 0.25;
        let sigma = (n as f64 * p * (1.0 - p)).sqrt();
        for c in counts {
            assert!((c as f64 - n as f64 * p).abs() <= 5.0 * sigma, "{counts:?}");
        }
    }

    #[test]
    fn tight_clusters_are_linearly_separable() {
        let data = synth_dataset(&mixture(1e-3, 2)).unwrap();
        // Nearest class mean is a linear classifier: argmax_c <μ_c, x> − ‖μ_c‖²/2.
        let train: Vec<&Sample> = data.train().collect();
        let mut centroids = vec![vec![0.0; 16]; 4];
        let mut counts = [0usize; 4];
        for s in &train {
            counts[s.label] += 1;
            for (c, x) in centroids[s.label].iter_mut().zip(&s.features) {
                *c += x;
            }
        }
        for (c, n) in centroids.iter_mut().zip(counts) {
            c.iter_mut().for_each(|v| *v /= n as f64);
        }
        let correct = data
            .test
            .iter()
            .filter(|s| {
                let score = |c: &Vec<f64>| {
                    c.iter().zip(&s.features).map(|(a, b)| a * b).sum::<f64>()
                        - 0.5 * c.iter().map(|a| a * a).sum::<f64>()
                };
                let best = (0..4).max_by(|&a, &b| score(&centroids[a]).total_cmp(&score(&centroids[b])));
                best == Some(s.label)
            })
            .count();
        assert_eq!(correct, data.test.len());
    }

    #[test]
    fn centralized_adam_reduces_loss() {
        let shape = MlpShape {
            d_in: 16,
            d_h: 32,
            d_out: 4,
        };
        let data = synth_dataset(&mixture(1.0, 6)).unwrap();
        let train: Vec<Sample> = data.train().cloned().collect();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut p = MlpParams::init(shape, &mut rng);
        let mut adam = Adam::new(shape.num_params());
        let (first, _) = forward_backward(&shape, &p.theta, &train);
        for step in 0..50 {
            let batch = &train[(step * 32) % 1900..(step * 32) % 1900 + 32];
            let (_, g) = forward_backward(&shape, &p.theta, batch);
            adam.step(&mut p.theta, &g, 0.01);
        }
        let (last, _) = forward_backward(&shape, &p.theta, &train);
        assert!(last < first, "{last} !< {first}");
    }

    proptest! {
        #[test]
        fn adam_first_step_moves_against_gradient(
            g in proptest::collection::vec(-10.0f64..10.0, 1..20),
        ) {
            let mut adam = Adam::new(g.len());
            let mut theta = vec![0.0; g.len()];
            adam.step(&mut theta, &g, 0.01);
            for (t, gi) in theta.iter().zip(&g) {
                if *gi == 0.0 {
                    prop_assert_eq!(*t, 0.0);
                } else {
                    prop_assert!(t * gi < 0.0);
                }
            }
        }
    }
}
