//! Linear discriminant analysis with a shrunk pooled covariance
//! `(1−λ)·Σ + λ·(tr Σ / p)·I`.
//!
//! With fewer windows than features the inverse is applied through the
//! Woodbury identity on the `n×n` Gram matrix instead of the `p×p` covariance.

use crate::container::Container;
use crate::error::{Error, Result};
use crate::scalar::{gemm, Scalar, Trans};
use crate::signal::Intent;

use super::{argmax, check_xy, N_CLASSES};

#[derive(Clone, Debug, PartialEq)]
pub struct LdaConfig {
    /// λ in `[0, 1]`.
    pub shrinkage: f64,
}

impl Default for LdaConfig {
    fn default() -> Self {
        LdaConfig { shrinkage: 0.1 }
    }
}

impl LdaConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.shrinkage) {
            return Err(Error::invalid(format!("LDA shrinkage {} outside [0, 1]", self.shrinkage)));
        }
        Ok(())
    }
}

/// How the shrunk covariance is inverted.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Solver {
    /// Pick Woodbury when `n < p` and shrinkage is positive.
    Auto,
    Full,
    Woodbury,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Lda<S> {
    /// Present classes, ascending by intent index.
    classes: Vec<Intent>,
    /// `classes.len() × p`.
    weights: Vec<S>,
    bias: Vec<S>,
    dim: usize,
}

/// In-place lower Cholesky factor of a symmetric positive-definite matrix.
pub(crate) fn cholesky<S: Scalar>(a: &mut [S], n: usize) -> Result<()> {
    for j in 0..n {
        let d = a[j * n + j] - a[j * n..j * n + j].iter().map(|&v| v * v).sum::<S>();
        if !(d > S::zero()) {
            return Err(Error::DegenerateTrainingSet(
                "covariance is singular; use a positive shrinkage".into(),
            ));
        }
        let ljj = d.sqrt();
        a[j * n + j] = ljj;
        a[j * n + j + 1..(j + 1) * n].iter_mut().for_each(|v| *v = S::zero());
        for i in j + 1..n {
            let dot: S = a[i * n..i * n + j].iter().zip(&a[j * n..j * n + j]).map(|(&x, &y)| x * y).sum();
            a[i * n + j] = (a[i * n + j] - dot) / ljj;
        }
    }
    Ok(())
}

/// Solves `L Lᵀ x = b` given the factor from [`cholesky`].
pub(crate) fn cholesky_solve<S: Scalar>(l: &[S], n: usize, b: &mut [S]) {
    for i in 0..n {
        let dot: S = l[i * n..i * n + i].iter().zip(&b[..i]).map(|(&x, &y)| x * y).sum();
        b[i] = (b[i] - dot) / l[i * n + i];
    }
    for i in (0..n).rev() {
        let mut s = b[i];
        for k in i + 1..n {
            s -= l[k * n + i] * b[k];
        }
        b[i] = s / l[i * n + i];
    }
}

impl<S: Scalar> Lda<S> {
    pub fn fit(config: &LdaConfig, x: &[Vec<S>], y: &[Intent], equal_priors: bool) -> Result<Self> {
        Self::fit_with(config, x, y, equal_priors, Solver::Auto)
    }

    pub fn fit_with(config: &LdaConfig, x: &[Vec<S>], y: &[Intent], equal_priors: bool, solver: Solver) -> Result<Self> {
        config.validate()?;
        let p = check_xy(x, y)?;
        let n = x.len();
        let mut counts = [0usize; N_CLASSES];
        y.iter().for_each(|i| counts[i.index()] += 1);
        let classes: Vec<Intent> = Intent::ALL.into_iter().filter(|i| counts[i.index()] > 0).collect();
        if classes.len() < 2 {
            return Err(Error::DegenerateTrainingSet(format!(
                "LDA needs at least two classes, got only {}",
                classes[0]
            )));
        }
        let k = classes.len();

        let mut means = vec![S::zero(); k * p];
        for (row, label) in x.iter().zip(y) {
            let c = classes.iter().position(|c| c == label).expect("present class");
            means[c * p..(c + 1) * p].iter_mut().zip(row).for_each(|(m, &v)| *m += v);
        }
        for (c, cls) in classes.iter().enumerate() {
            let inv = S::one() / S::of(counts[cls.index()] as f64);
            means[c * p..(c + 1) * p].iter_mut().for_each(|m| *m *= inv);
        }
        let mut xc = vec![S::zero(); n * p];
        for (i, (row, label)) in x.iter().zip(y).enumerate() {
            let c = classes.iter().position(|c| c == label).expect("present class");
            for j in 0..p {
                xc[i * p + j] = row[j] - means[c * p + j];
            }
        }
        let dof = if n > k { n - k } else { n };
        let trace = xc.iter().map(|&v| v * v).sum::<S>() / S::of(dof as f64);
        let lambda = S::of(config.shrinkage);
        let alpha = lambda * trace / S::of(p as f64);
        let beta = (S::one() - lambda) / S::of(dof as f64);

        let mut weights = vec![S::zero(); k * p];
        if trace == S::zero() {
            // no within-class spread at all: identity covariance (nearest mean)
            weights.copy_from_slice(&means);
        } else {
            let use_woodbury = match solver {
                Solver::Auto => n < p && alpha > S::zero(),
                Solver::Full => false,
                Solver::Woodbury => {
                    if !(alpha > S::zero()) {
                        return Err(Error::invalid("the Woodbury route needs positive shrinkage"));
                    }
                    true
                }
            };
            if use_woodbury {
                // Σλ⁻¹ = (I − β Xcᵀ (αI + β Xc Xcᵀ)⁻¹ Xc) / α
                let mut a = vec![S::zero(); n * n];
                gemm(n, p, n, beta, &xc, Trans::No, &xc, Trans::Yes, S::zero(), &mut a);
                (0..n).for_each(|i| a[i * n + i] += alpha);
                cholesky(&mut a, n)?;
                let mut r = vec![S::zero(); k * n];
                // r = means · Xcᵀ (k×n)
                gemm(k, p, n, S::one(), &means, Trans::No, &xc, Trans::Yes, S::zero(), &mut r);
                for c in 0..k {
                    cholesky_solve(&a, n, &mut r[c * n..(c + 1) * n]);
                }
                // W = (means − β · r · Xc) / α
                weights.copy_from_slice(&means);
                gemm(k, n, p, -beta, &r, Trans::No, &xc, Trans::No, S::one(), &mut weights);
                let inv = S::one() / alpha;
                weights.iter_mut().for_each(|w| *w *= inv);
            } else {
                let mut cov = vec![S::zero(); p * p];
                gemm(p, n, p, beta, &xc, Trans::Yes, &xc, Trans::No, S::zero(), &mut cov);
                (0..p).for_each(|i| cov[i * p + i] += alpha);
                cholesky(&mut cov, p)?;
                weights.copy_from_slice(&means);
                for c in 0..k {
                    cholesky_solve(&cov, p, &mut weights[c * p..(c + 1) * p]);
                }
            }
        }
        let bias = classes
            .iter()
            .enumerate()
            .map(|(c, cls)| {
                let quad: S = weights[c * p..(c + 1) * p]
                    .iter()
                    .zip(&means[c * p..(c + 1) * p])
                    .map(|(&w, &m)| w * m)
                    .sum();
                let prior = if equal_priors {
                    1.0 / k as f64
                } else {
                    counts[cls.index()] as f64 / n as f64
                };
                S::of(-0.5) * quad + S::of(prior.ln())
            })
            .collect();
        Ok(Lda {
            classes,
            weights,
            bias,
            dim: p,
        })
    }

    /// Discriminant scores, `n × classes`.
    pub fn decision(&self, x: &[Vec<S>]) -> Result<Vec<Vec<f64>>> {
        if x.iter().any(|r| r.len() != self.dim) {
            return Err(Error::invalid(format!("LDA expects {} features", self.dim)));
        }
        Ok(x.iter()
            .map(|row| {
                (0..self.classes.len())
                    .map(|c| {
                        let s: S = self.weights[c * self.dim..(c + 1) * self.dim]
                            .iter()
                            .zip(row)
                            .map(|(&w, &v)| w * v)
                            .sum();
                        (s + self.bias[c]).as_f64()
                    })
                    .collect()
            })
            .collect())
    }

    pub fn predict(&self, x: &[Vec<S>]) -> Result<Vec<Intent>> {
        Ok(self.decision(x)?.iter().map(|s| self.classes[argmax(s)]).collect())
    }

    pub fn classes(&self) -> &[Intent] {
        &self.classes
    }

    pub(crate) fn write(&self, c: &mut Container) {
        c.set(
            "lda.classes",
            self.classes.iter().map(|i| i.as_str()).collect::<Vec<_>>().join(","),
        );
        let k = self.classes.len();
        c.push("lda.weights", &[k, self.dim], self.weights.iter().map(|v| v.as_f64() as f32).collect());
        c.push("lda.bias", &[k], self.bias.iter().map(|v| v.as_f64() as f32).collect());
    }

    pub(crate) fn read(c: &Container) -> Result<Self> {
        let classes = c
            .get("lda.classes")?
            .split(',')
            .map(str::parse)
            .collect::<Result<Vec<Intent>>>()?;
        let w = c.tensor("lda.weights")?;
        let b = c.tensor("lda.bias")?;
        if w.shape.len() != 2 || w.shape[0] != classes.len() || b.shape != [classes.len()] {
            return Err(Error::Format("LDA tensors do not match the class list".into()));
        }
        let conv = |v: &[f32]| v.iter().map(|&x| S::of(f64::from(x))).collect::<Vec<S>>();
        Ok(Lda {
            dim: w.shape[1],
            classes,
            weights: conv(&w.data),
            bias: conv(&b.data),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn cholesky_solves() {
        let a = vec![4.0, 2.0, 0.6, 2.0, 5.0, 1.0, 0.6, 1.0, 3.0];
        let mut l = a.clone();
        cholesky(&mut l, 3).unwrap();
        let mut b = vec![1.0, 2.0, 3.0];
        cholesky_solve(&l, 3, &mut b);
        for i in 0..3 {
            let r: f64 = (0..3).map(|j| a[i * 3 + j] * b[j]).sum();
            assert!((r - [1.0, 2.0, 3.0][i]).abs() < 1e-12);
        }
        let mut singular = vec![1.0, 1.0, 1.0, 1.0];
        assert!(cholesky(&mut singular, 2).is_err());
    }

    fn data(n: usize, p: usize, seed: u64) -> (Vec<Vec<f64>>, Vec<Intent>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let y: Vec<Intent> = (0..n).map(|i| Intent::ALL[i % 3]).collect();
        let x = y
            .iter()
            .map(|i| (0..p).map(|j| rng.gen_range(-1.0..1.0) + if j % 3 == i.index() { 1.0 } else { 0.0 }).collect())
            .collect();
        (x, y)
    }

    #[test]
    fn woodbury_matches_full_solve() {
        for (n, p) in [(9, 30), (12, 12), (20, 7)] {
            let (x, y) = data(n, p, n as u64);
            let cfg = LdaConfig { shrinkage: 0.3 };
            let a = Lda::fit_with(&cfg, &x, &y, false, Solver::Full).unwrap();
            let b = Lda::fit_with(&cfg, &x, &y, false, Solver::Woodbury).unwrap();
            for (u, v) in a.weights.iter().zip(&b.weights) {
                assert!((u - v).abs() < 1e-8 * (1.0 + u.abs()), "{u} vs {v}");
            }
            for (u, v) in a.bias.iter().zip(&b.bias) {
                assert!((u - v).abs() < 1e-8 * (1.0 + u.abs()));
            }
        }
    }

    #[test]
    fn full_shrinkage_is_scaled_nearest_mean() {
        // λ = 1 leaves an isotropic covariance, so weights are proportional to the class means
        let (x, y) = data(15, 10, 4);
        let m = Lda::fit(&LdaConfig { shrinkage: 1.0 }, &x, &y, true).unwrap();
        let w0 = &m.weights[..10];
        let mean0: Vec<f64> = (0..10)
            .map(|j| x.iter().zip(&y).filter(|(_, l)| **l == Intent::Open).map(|(r, _)| r[j]).sum::<f64>() / 5.0)
            .collect();
        let ratio = w0[0] / mean0[0];
        for j in 0..10 {
            assert!((w0[j] - ratio * mean0[j]).abs() < 1e-10);
        }
    }

    #[test]
    fn unshrunk_needs_enough_samples() {
        let (x, y) = data(6, 20, 1);
        assert!(matches!(
            Lda::fit(&LdaConfig { shrinkage: 0.0 }, &x, &y, false),
            Err(Error::DegenerateTrainingSet(_))
        ));
        let (x, y) = data(60, 5, 1);
        assert!(Lda::fit(&LdaConfig { shrinkage: 0.0 }, &x, &y, false).is_ok());
    }

    #[test]
    fn two_class_subset_predicts_only_present_classes() {
        let (x, y) = data(30, 6, 2);
        let (x2, y2): (Vec<_>, Vec<_>) = x.into_iter().zip(y).filter(|(_, l)| *l != Intent::Relax).unzip();
        let m = Lda::fit(&LdaConfig::default(), &x2, &y2, false).unwrap();
        assert_eq!(m.classes(), &[Intent::Open, Intent::Close]);
        assert!(m.predict(&x2).unwrap().iter().all(|&l| l != Intent::Relax));
    }
}
