//! Exact t-SNE.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::signal::{normalize_tokens, EmgWindow, CHANNELS};

#[derive(Clone, Debug, PartialEq)]
pub struct TsneConfig {
    pub perplexity: f64,
    pub iterations: usize,
    pub exaggeration: f64,
    pub exaggeration_iters: usize,
    pub learning_rate: f64,
    pub initial_momentum: f64,
    pub final_momentum: f64,
    /// Iterations between recorded objective values.
    pub kl_interval: usize,
    pub seed: u64,
}

impl Default for TsneConfig {
    fn default() -> Self {
        TsneConfig {
            perplexity: 30.0,
            iterations: 1000,
            exaggeration: 12.0,
            exaggeration_iters: 250,
            learning_rate: 200.0,
            initial_momentum: 0.5,
            final_momentum: 0.8,
            kl_interval: 50,
            seed: 0,
        }
    }
}

impl TsneConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.perplexity > 0.0) || !(self.learning_rate > 0.0) || !(self.exaggeration > 0.0) {
            return Err(Error::invalid("perplexity, learning rate and exaggeration must be positive"));
        }
        if self.kl_interval == 0 {
            return Err(Error::invalid("kl_interval must be positive"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TsneResult {
    pub points: Vec<[f64; 2]>,
    /// `(iterations completed, KL(P‖Q))`, always including the end of
    /// exaggeration and the final iteration.
    pub kl: Vec<(usize, f64)>,
}

impl TsneResult {
    pub fn kl_at(&self, iteration: usize) -> Option<f64> {
        self.kl.iter().find(|(i, _)| *i == iteration).map(|&(_, v)| v)
    }

    pub fn final_kl(&self) -> f64 {
        self.kl.last().map_or(f64::NAN, |&(_, v)| v)
    }
}

const PERPLEXITY_TOL: f64 = 1e-5;
const BISECTION_STEPS: usize = 100;
const MIN_PROB: f64 = 1e-12;
const MIN_GAIN: f64 = 0.01;

fn sq_distances<S: Scalar>(x: &[Vec<S>]) -> Vec<S> {
    let n = x.len();
    let mut d = vec![S::zero(); n * n];
    for i in 0..n {
        for j in i + 1..n {
            let v: S = x[i].iter().zip(&x[j]).map(|(&a, &b)| (a - b) * (a - b)).sum();
            d[i * n + j] = v;
            d[j * n + i] = v;
        }
    }
    d
}

/// Row `i` of the conditional affinities, with the Gaussian precision bisected
/// until the row's entropy matches `ln(perplexity)`.
fn conditional_row<S: Scalar>(dist: &[S], i: usize, target_entropy: S) -> Vec<S> {
    let n = dist.len();
    let mut beta = S::one();
    let (mut lo, mut hi) = (S::zero(), S::infinity());
    let two = S::of(2.0);
    let mut row = vec![S::zero(); n];
    for _ in 0..BISECTION_STEPS {
        // shift by the nearest neighbour distance for numerical range
        let dmin = dist
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != i)
            .map(|(_, &d)| d)
            .fold(S::infinity(), S::min);
        let mut sum = S::zero();
        let mut weighted = S::zero();
        for j in 0..n {
            row[j] = if j == i { S::zero() } else { (-(dist[j] - dmin) * beta).exp() };
            sum += row[j];
            weighted += (dist[j] - dmin) * row[j];
        }
        let entropy = sum.ln() + beta * weighted / sum;
        row.iter_mut().for_each(|p| *p /= sum);
        let diff = entropy - target_entropy;
        if diff.abs() < S::of(PERPLEXITY_TOL) {
            break;
        }
        if diff > S::zero() {
            lo = beta;
            beta = if hi.is_infinite() { beta * two } else { (beta + hi) / two };
        } else {
            hi = beta;
            beta = (beta + lo) / two;
        }
    }
    row
}

/// Symmetrized joint affinities `(P_{j|i} + P_{i|j}) / 2n`.
fn joint_affinities<S: Scalar>(x: &[Vec<S>], perplexity: f64) -> Vec<S> {
    let n = x.len();
    let d = sq_distances(x);
    let target = S::of(perplexity.ln());
    let cond: Vec<Vec<S>> = (0..n).map(|i| conditional_row(&d[i * n..(i + 1) * n], i, target)).collect();
    let denom = S::of(2.0 * n as f64);
    let mut p = vec![S::zero(); n * n];
    for i in 0..n {
        for j in 0..n {
            if i != j {
                p[i * n + j] = ((cond[i][j] + cond[j][i]) / denom).max(S::of(MIN_PROB));
            }
        }
    }
    p
}

/// Student-t kernel `1 / (1 + |y_i - y_j|²)` with zero diagonal, and its total.
fn kernel<S: Scalar>(y: &[[S; 2]]) -> (Vec<S>, S) {
    let n = y.len();
    let mut num = vec![S::zero(); n * n];
    let mut total = S::zero();
    for i in 0..n {
        for j in i + 1..n {
            let dx = y[i][0] - y[j][0];
            let dy = y[i][1] - y[j][1];
            let v = S::one() / (S::one() + dx * dx + dy * dy);
            num[i * n + j] = v;
            num[j * n + i] = v;
            total += v + v;
        }
    }
    (num, total)
}

fn kl_divergence<S: Scalar>(p: &[S], num: &[S], total: S) -> f64 {
    let n2 = p.len();
    let n = (n2 as f64).sqrt() as usize;
    let mut kl = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                let pij = p[i * n + j].as_f64();
                let qij = (num[i * n + j] / total).as_f64().max(MIN_PROB);
                kl += pij * (pij / qij).ln();
            }
        }
    }
    kl
}

/// Embeds equal-length vectors into 2-D. Deterministic given `config.seed`.
pub fn tsne_embed<S: Scalar>(samples: &[Vec<S>], config: &TsneConfig) -> Result<TsneResult> {
    config.validate()?;
    let n = samples.len();
    if n < 3 {
        return Err(Error::invalid(format!("t-SNE needs at least 3 samples, got {n}")));
    }
    let dim = samples[0].len();
    if dim == 0 || samples.iter().any(|s| s.len() != dim) {
        return Err(Error::invalid("t-SNE samples must share one non-zero length"));
    }
    if samples.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::invalid("t-SNE samples must be finite"));
    }

    let p = joint_affinities(samples, config.perplexity);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let init = Normal::new(0.0, 1e-4).expect("valid normal");
    let mut y: Vec<[S; 2]> = (0..n)
        .map(|_| [S::of(init.sample(&mut rng)), S::of(init.sample(&mut rng))])
        .collect();
    let mut update = vec![[S::zero(); 2]; n];
    let mut gains = vec![[S::one(); 2]; n];
    let lr = S::of(config.learning_rate);
    let four = S::of(4.0);
    let mut kl = Vec::new();

    for it in 0..config.iterations {
        let exaggerate = it < config.exaggeration_iters;
        let ex = S::of(if exaggerate { config.exaggeration } else { 1.0 });
        let momentum = S::of(if exaggerate {
            config.initial_momentum
        } else {
            config.final_momentum
        });
        let (num, total) = kernel(&y);
        for i in 0..n {
            let mut g = [S::zero(); 2];
            for j in 0..n {
                if i == j {
                    continue;
                }
                let q = num[i * n + j] / total;
                let coef = (ex * p[i * n + j] - q) * num[i * n + j];
                g[0] += coef * (y[i][0] - y[j][0]);
                g[1] += coef * (y[i][1] - y[j][1]);
            }
            for d in 0..2 {
                let grad = four * g[d];
                gains[i][d] = if (grad > S::zero()) != (update[i][d] > S::zero()) {
                    gains[i][d] + S::of(0.2)
                } else {
                    (gains[i][d] * S::of(0.8)).max(S::of(MIN_GAIN))
                };
                update[i][d] = momentum * update[i][d] - lr * gains[i][d] * grad;
            }
        }
        for i in 0..n {
            y[i][0] += update[i][0];
            y[i][1] += update[i][1];
        }
        let nf = S::of(n as f64);
        let mean = [
            y.iter().map(|v| v[0]).sum::<S>() / nf,
            y.iter().map(|v| v[1]).sum::<S>() / nf,
        ];
        y.iter_mut().for_each(|v| {
            v[0] -= mean[0];
            v[1] -= mean[1];
        });

        let done = it + 1;
        if done % config.kl_interval == 0 || done == config.exaggeration_iters || done == config.iterations {
            let (num, total) = kernel(&y);
            kl.push((done, kl_divergence(&p, &num, total)));
        }
    }
    if y.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::invalid("t-SNE diverged to non-finite coordinates"));
    }
    Ok(TsneResult {
        points: y.into_iter().map(|v| [v[0].as_f64(), v[1].as_f64()]).collect(),
        kl,
    })
}

/// Embedding of one electrode's sequences across all windows.
#[derive(Clone, Debug, PartialEq)]
pub struct ChannelEmbedding {
    /// 1-based electrode number.
    pub channel: usize,
    /// Channels 1 and 2 are the pair usually shown side by side.
    pub featured: bool,
    pub result: TsneResult,
}

/// Embeds each channel's normalized sequence separately, for all 8 channels.
pub fn tsne_channels<S: Scalar>(windows: &[EmgWindow], config: &TsneConfig) -> Result<Vec<ChannelEmbedding>> {
    let flat: Vec<Vec<S>> = windows.iter().map(|w| normalize_tokens(&w.data)).collect();
    (0..CHANNELS)
        .map(|c| {
            let seqs: Vec<Vec<S>> = flat
                .iter()
                .map(|m| m.iter().skip(c).step_by(CHANNELS).copied().collect())
                .collect();
            Ok(ChannelEmbedding {
                channel: c + 1,
                featured: c < 2,
                result: tsne_embed(&seqs, config)?,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn quick() -> TsneConfig {
        TsneConfig {
            perplexity: 15.0,
            iterations: 500,
            ..Default::default()
        }
    }

    fn blobs(n_per: usize, sep: f64, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let z = Normal::new(0.0, 1.0).unwrap();
        (0..2 * n_per)
            .map(|i| {
                let c = if i < n_per { 0.0 } else { sep };
                (0..5).map(|d| if d == 0 { c } else { 0.0 } + z.sample(&mut rng)).collect()
            })
            .collect()
    }

    #[test]
    fn perplexity_is_matched() {
        let x = blobs(20, 3.0, 1);
        let d = sq_distances(&x);
        let n = x.len();
        for i in [0, 7, 33] {
            let row = conditional_row(&d[i * n..(i + 1) * n], i, 10f64.ln());
            let h: f64 = -row.iter().filter(|&&p| p > 0.0).map(|&p| p * p.ln()).sum::<f64>();
            assert!((h.exp() - 10.0).abs() < 1e-3, "row {i}: perplexity {}", h.exp());
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn affinities_symmetric_and_normalized() {
        let x = blobs(10, 3.0, 2);
        let p = joint_affinities(&x, 5.0);
        let n = x.len();
        for i in 0..n {
            for j in 0..n {
                assert_eq!(p[i * n + j], p[j * n + i]);
            }
        }
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn separates_two_blobs_deterministically() {
        let x = blobs(30, 20.0, 3);
        let a = tsne_embed(&x, &quick()).unwrap();
        assert_eq!(a, tsne_embed(&x, &quick()).unwrap());
        assert_ne!(a, tsne_embed(&x, &TsneConfig { seed: 1, ..quick() }).unwrap());
        assert_eq!(a.points.len(), 60);
        assert!(a.points.iter().flatten().all(|v| v.is_finite()));
        let centroid = |r: std::ops::Range<usize>| {
            let k = r.len() as f64;
            let s = a.points[r].iter().fold([0.0, 0.0], |s, p| [s[0] + p[0], s[1] + p[1]]);
            [s[0] / k, s[1] / k]
        };
        let (c0, c1) = (centroid(0..30), centroid(30..60));
        let d = |p: &[f64; 2], c: [f64; 2]| (p[0] - c[0]).hypot(p[1] - c[1]);
        let right = a
            .points
            .iter()
            .enumerate()
            .filter(|(i, p)| (d(p, c0) < d(p, c1)) == (*i < 30))
            .count();
        assert_eq!(right, 60);
        assert!(a.final_kl() < a.kl_at(250).unwrap());
    }

    #[test]
    fn duplicates_stay_together() {
        let mut x = blobs(30, 4.0, 4);
        x.push(x[3].clone());
        let r = tsne_embed(&x, &quick()).unwrap();
        let n = x.len();
        let mut all: Vec<f64> = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                all.push((r.points[i][0] - r.points[j][0]).hypot(r.points[i][1] - r.points[j][1]));
            }
        }
        all.sort_by(f64::total_cmp);
        let p10 = all[all.len() / 10];
        let dup = (r.points[3][0] - r.points[n - 1][0]).hypot(r.points[3][1] - r.points[n - 1][1]);
        assert!(dup < p10, "{dup} vs {p10}");
    }

    #[test]
    fn rejects_bad_input() {
        let two = vec![vec![0.0f64; 3]; 2];
        assert!(matches!(tsne_embed(&two, &quick()), Err(Error::InvalidArgument(_))));
        let ragged = vec![vec![0.0f64; 3], vec![0.0; 3], vec![0.0; 2]];
        assert!(tsne_embed(&ragged, &quick()).is_err());
    }

    #[test]
    fn single_precision_runs() {
        let x: Vec<Vec<f32>> = blobs(10, 10.0, 6)
            .into_iter()
            .map(|r| r.into_iter().map(|v| v as f32).collect())
            .collect();
        let r = tsne_embed(&x, &quick()).unwrap();
        assert_eq!(r.points.len(), 20);
    }

    #[test]
    fn channel_embeddings_cover_every_electrode() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let windows: Vec<EmgWindow> = (0..12)
            .map(|i| EmgWindow {
                data: crate::signal::TokenMatrix::from_flat((0..16 * CHANNELS).map(|_| rng.gen_range(0..1001)).collect())
                    .unwrap(),
                intent: crate::signal::Intent::ALL[i % 3],
                source: crate::signal::WindowSource {
                    recording_id: "r".into(),
                    start: i,
                },
            })
            .collect();
        let cfg = TsneConfig {
            perplexity: 3.0,
            iterations: 60,
            exaggeration_iters: 20,
            ..Default::default()
        };
        let e = tsne_channels::<f64>(&windows, &cfg).unwrap();
        assert_eq!(e.len(), CHANNELS);
        assert_eq!(e.iter().filter(|c| c.featured).map(|c| c.channel).collect::<Vec<_>>(), vec![1, 2]);
        assert!(e.iter().all(|c| c.result.points.len() == 12));
    }
}
