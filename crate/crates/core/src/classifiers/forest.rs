//! Random forest of CART trees: Gini splits, bootstrap resampling and
//! `⌊√p⌋` candidate features per node.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::container::Container;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::signal::Intent;

use super::{argmax, check_xy, N_CLASSES};

#[derive(Clone, Debug, PartialEq)]
pub struct RfConfig {
    pub n_trees: usize,
    /// `None` grows every tree until its leaves are pure.
    pub max_depth: Option<usize>,
    pub min_samples_split: usize,
    /// Candidate features per split; `None` means `⌊√p⌋`.
    pub max_features: Option<usize>,
    pub seed: u64,
}

impl Default for RfConfig {
    fn default() -> Self {
        RfConfig {
            n_trees: 100,
            max_depth: None,
            min_samples_split: 2,
            max_features: None,
            seed: 0,
        }
    }
}

impl RfConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_trees == 0 || self.min_samples_split < 2 || self.max_features == Some(0) || self.max_depth == Some(0) {
            return Err(Error::invalid(
                "forest needs n_trees >= 1, min_samples_split >= 2 and positive max_features/max_depth",
            ));
        }
        Ok(())
    }
}

const LEAF: u32 = u32::MAX;

#[derive(Clone, Debug, PartialEq)]
struct Node<S> {
    feature: u32,
    threshold: S,
    left: u32,
    right: u32,
    /// Class distribution of the training mass reaching this node.
    value: [f64; N_CLASSES],
}

#[derive(Clone, Debug, PartialEq)]
pub struct Tree<S> {
    nodes: Vec<Node<S>>,
}

impl<S: Scalar> Tree<S> {
    fn leaf_for(&self, x: &[S]) -> &[f64; N_CLASSES] {
        let mut i = 0;
        loop {
            let n = &self.nodes[i];
            if n.feature == LEAF {
                return &n.value;
            }
            i = if x[n.feature as usize] <= n.threshold { n.left } else { n.right } as usize;
        }
    }

    pub fn depth(&self) -> usize {
        fn go<S>(nodes: &[Node<S>], i: usize) -> usize {
            let n = &nodes[i];
            if n.feature == LEAF {
                0
            } else {
                1 + go(nodes, n.left as usize).max(go(nodes, n.right as usize))
            }
        }
        go(&self.nodes, 0)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Forest<S> {
    trees: Vec<Tree<S>>,
    dim: usize,
}

fn gini(counts: &[f64; N_CLASSES], total: f64) -> f64 {
    if total <= 0.0 {
        return 0.0;
    }
    1.0 - counts.iter().map(|&c| (c / total) * (c / total)).sum::<f64>()
}

struct Builder<'a, S> {
    x: &'a [Vec<S>],
    y: &'a [usize],
    config: &'a RfConfig,
    mtry: usize,
    nodes: Vec<Node<S>>,
}

impl<S: Scalar> Builder<'_, S> {
    /// `items` are `(example index, weight)` pairs.
    fn grow<R: Rng>(&mut self, items: &mut [(usize, f64)], depth: usize, rng: &mut R) -> u32 {
        let mut counts = [0.0; N_CLASSES];
        for &(i, w) in items.iter() {
            counts[self.y[i]] += w;
        }
        let total: f64 = counts.iter().sum();
        let id = self.nodes.len() as u32;
        self.nodes.push(Node {
            feature: LEAF,
            threshold: S::zero(),
            left: LEAF,
            right: LEAF,
            value: counts.map(|c| f64::from((c / total) as f32)),
        });
        let pure = counts.iter().filter(|&&c| c > 0.0).count() <= 1;
        if pure || items.len() < self.config.min_samples_split || self.config.max_depth.is_some_and(|d| depth >= d) {
            return id;
        }
        let Some((feature, threshold)) = self.best_split(items, &counts, total, rng) else {
            return id;
        };
        // partition in place: left side first
        let mut split = 0;
        for k in 0..items.len() {
            if self.x[items[k].0][feature] <= threshold {
                items.swap(k, split);
                split += 1;
            }
        }
        let (l, r) = items.split_at_mut(split);
        let left = self.grow(l, depth + 1, rng);
        let right = self.grow(r, depth + 1, rng);
        let node = &mut self.nodes[id as usize];
        node.feature = feature as u32;
        node.threshold = threshold;
        node.left = left;
        node.right = right;
        id
    }

    /// Best Gini split among candidate features, drawn in random order until
    /// `mtry` non-constant ones have been examined.
    fn best_split<R: Rng>(
        &self,
        items: &[(usize, f64)],
        counts: &[f64; N_CLASSES],
        total: f64,
        rng: &mut R,
    ) -> Option<(usize, S)> {
        let p = self.x[0].len();
        let parent = gini(counts, total);
        let mut best: Option<(f64, usize, S)> = None;
        let mut examined = 0;
        let mut vals: Vec<(S, usize, f64)> = Vec::with_capacity(items.len());
        for f in sample(rng, p, p).into_iter() {
            if examined >= self.mtry {
                break;
            }
            vals.clear();
            vals.extend(items.iter().map(|&(i, w)| (self.x[i][f], self.y[i], w)));
            vals.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite features"));
            if vals[0].0 == vals[vals.len() - 1].0 {
                continue;
            }
            examined += 1;
            let mut left = [0.0; N_CLASSES];
            let mut lw = 0.0;
            for k in 0..vals.len() - 1 {
                left[vals[k].1] += vals[k].2;
                lw += vals[k].2;
                if vals[k].0 == vals[k + 1].0 {
                    continue;
                }
                let right: [f64; N_CLASSES] = std::array::from_fn(|c| counts[c] - left[c]);
                let rw = total - lw;
                let impurity = (lw * gini(&left, lw) + rw * gini(&right, rw)) / total;
                let gain = parent - impurity;
                if best.as_ref().map_or(true, |b| gain > b.0) {
                    let mid = (vals[k].0 + vals[k + 1].0) / S::of(2.0);
                    // guard against the midpoint rounding up to the right value
                    let thr = if mid < vals[k + 1].0 { mid } else { vals[k].0 };
                    best = Some((gain, f, thr));
                }
            }
        }
        best.map(|b| (b.1, b.2))
    }
}

impl<S: Scalar> Forest<S> {
    /// `weights` are per-example class weights (all ones unless balancing).
    pub fn fit(config: &RfConfig, x: &[Vec<S>], y: &[Intent], weights: &[f64]) -> Result<Self> {
        config.validate()?;
        let p = check_xy(x, y)?;
        let labels: Vec<usize> = y.iter().map(|i| i.index()).collect();
        let mtry = config.max_features.unwrap_or(((p as f64).sqrt().floor() as usize).max(1)).min(p);
        let n = x.len();
        let trees = (0..config.n_trees)
            .into_par_iter()
            .map(|t| {
                let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
                rng.set_stream(t as u64);
                let mut mult = vec![0usize; n];
                for _ in 0..n {
                    mult[rng.gen_range(0..n)] += 1;
                }
                let mut items: Vec<(usize, f64)> = mult
                    .iter()
                    .enumerate()
                    .filter(|(_, &m)| m > 0)
                    .map(|(i, &m)| (i, m as f64 * weights[i]))
                    .collect();
                let mut b = Builder {
                    x,
                    y: &labels,
                    config,
                    mtry,
                    nodes: Vec::new(),
                };
                b.grow(&mut items, 0, &mut rng);
                Tree { nodes: b.nodes }
            })
            .collect();
        Ok(Forest { trees, dim: p })
    }

    /// Mean of the trees' leaf class distributions.
    pub fn predict_proba(&self, x: &[Vec<S>]) -> Result<Vec<[f64; N_CLASSES]>> {
        if x.iter().any(|r| r.len() != self.dim) {
            return Err(Error::invalid(format!("forest expects {} features", self.dim)));
        }
        Ok(x.par_iter()
            .map(|row| {
                let mut acc = [0.0; N_CLASSES];
                for t in &self.trees {
                    let v = t.leaf_for(row);
                    (0..N_CLASSES).for_each(|c| acc[c] += v[c]);
                }
                acc.map(|a| a / self.trees.len() as f64)
            })
            .collect())
    }

    pub fn predict(&self, x: &[Vec<S>]) -> Result<Vec<Intent>> {
        Ok(self.predict_proba(x)?.iter().map(|p| Intent::ALL[argmax(p)]).collect())
    }

    pub fn trees(&self) -> &[Tree<S>] {
        &self.trees
    }

    pub(crate) fn write(&self, c: &mut Container) {
        c.set("rf.dim", self.dim);
        c.push("rf.tree_sizes", &[self.trees.len()], self.trees.iter().map(|t| t.nodes.len() as f32).collect());
        let nodes: Vec<&Node<S>> = self.trees.iter().flat_map(|t| &t.nodes).collect();
        let total = nodes.len();
        // node indices are stored as f32, exact below 2^24 nodes per tree
        let idx = |v: u32| if v == LEAF { -1.0 } else { v as f32 };
        c.push("rf.feature", &[total], nodes.iter().map(|n| idx(n.feature)).collect());
        c.push("rf.threshold", &[total], nodes.iter().map(|n| n.threshold.as_f64() as f32).collect());
        c.push("rf.left", &[total], nodes.iter().map(|n| idx(n.left)).collect());
        c.push("rf.right", &[total], nodes.iter().map(|n| idx(n.right)).collect());
        c.push(
            "rf.value",
            &[total, N_CLASSES],
            nodes.iter().flat_map(|n| n.value.map(|v| v as f32)).collect(),
        );
    }

    pub(crate) fn read(c: &Container) -> Result<Self> {
        let dim: usize = c.get_parsed("rf.dim")?;
        let sizes = &c.tensor("rf.tree_sizes")?.data;
        let feature = &c.tensor("rf.feature")?.data;
        let threshold = &c.tensor("rf.threshold")?.data;
        let left = &c.tensor("rf.left")?.data;
        let right = &c.tensor("rf.right")?.data;
        let value = &c.tensor("rf.value")?.data;
        let total: usize = sizes.iter().map(|&s| s as usize).sum();
        if [feature.len(), threshold.len(), left.len(), right.len()].iter().any(|&l| l != total)
            || value.len() != total * N_CLASSES
        {
            return Err(Error::Format("forest tensors have inconsistent lengths".into()));
        }
        let back = |v: f32| if v < 0.0 { LEAF } else { v as u32 };
        let mut trees = Vec::with_capacity(sizes.len());
        let mut at = 0;
        for &s in sizes {
            let s = s as usize;
            let nodes: Vec<Node<S>> = (at..at + s)
                .map(|k| Node {
                    feature: back(feature[k]),
                    threshold: S::of(f64::from(threshold[k])),
                    left: back(left[k]),
                    right: back(right[k]),
                    value: std::array::from_fn(|c| f64::from(value[k * N_CLASSES + c])),
                })
                .collect();
            let bad = nodes.iter().any(|n| {
                n.feature != LEAF && (n.feature as usize >= dim || n.left as usize >= s || n.right as usize >= s)
            });
            if s == 0 || bad {
                return Err(Error::Format("forest node references out of range".into()));
            }
            trees.push(Tree { nodes });
            at += s;
        }
        Ok(Forest { trees, dim })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn blobs(n: usize, p: usize, seed: u64, noise: f64) -> (Vec<Vec<f64>>, Vec<Intent>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let y: Vec<Intent> = (0..n).map(|i| Intent::ALL[i % 3]).collect();
        let x = y
            .iter()
            .map(|c| (0..p).map(|j| rng.gen_range(-noise..noise) + if j == c.index() { 1.0 } else { 0.0 }).collect())
            .collect();
        (x, y)
    }

    #[test]
    fn gini_values() {
        assert_eq!(gini(&[5.0, 0.0, 0.0], 5.0), 0.0);
        assert!((gini(&[1.0, 1.0, 0.0], 2.0) - 0.5).abs() < 1e-15);
        assert!((gini(&[1.0, 1.0, 1.0], 3.0) - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn single_stump_finds_the_informative_feature() {
        // one informative feature among constants, every feature a candidate
        let x: Vec<Vec<f64>> = (0..20).map(|i| vec![0.0, if i < 10 { -1.0 } else { 1.0 }, 3.0]).collect();
        let y: Vec<Intent> = (0..20).map(|i| if i < 10 { Intent::Open } else { Intent::Close }).collect();
        let cfg = RfConfig {
            n_trees: 1,
            max_features: Some(3),
            ..Default::default()
        };
        let f = Forest::fit(&cfg, &x, &y, &vec![1.0; 20]).unwrap();
        let root = &f.trees[0].nodes[0];
        assert_eq!(root.feature, 1);
        assert_eq!(root.threshold, 0.0);
        assert_eq!(f.trees[0].depth(), 1);
    }

    #[test]
    fn recovers_training_labels() {
        let (x, y) = blobs(60, 12, 3, 0.9);
        let f = Forest::fit(&RfConfig::default(), &x, &y, &vec![1.0; 60]).unwrap();
        assert_eq!(f.predict(&x).unwrap(), y);
    }

    #[test]
    fn depth_limit_and_determinism() {
        let (x, y) = blobs(45, 9, 1, 2.0);
        let cfg = RfConfig {
            n_trees: 7,
            max_depth: Some(2),
            seed: 5,
            ..Default::default()
        };
        let a = Forest::fit(&cfg, &x, &y, &vec![1.0; 45]).unwrap();
        assert!(a.trees.iter().all(|t| t.depth() <= 2));
        assert_eq!(a, Forest::fit(&cfg, &x, &y, &vec![1.0; 45]).unwrap());
        let other = Forest::fit(&RfConfig { seed: 6, ..cfg }, &x, &y, &vec![1.0; 45]).unwrap();
        assert_ne!(a, other);
    }

    #[test]
    fn probabilities_sum_to_one() {
        let (x, y) = blobs(30, 5, 2, 1.5);
        let f = Forest::fit(&RfConfig { n_trees: 10, ..Default::default() }, &x, &y, &vec![1.0; 30]).unwrap();
        for p in f.predict_proba(&x).unwrap() {
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }
}
