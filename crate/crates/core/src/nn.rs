//! Dense layers with hand-written backward passes over a flat parameter
//! vector. Shapes are row-major; `n` is always the number of sequence rows.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::scalar::{gemm, Scalar, Trans};

/// Range of a named tensor inside the flat parameter vector.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Slot {
    pub offset: usize,
    pub len: usize,
}

impl Slot {
    #[inline]
    pub fn of<'a, S>(&self, p: &'a [S]) -> &'a [S] {
        &p[self.offset..self.offset + self.len]
    }

    #[inline]
    pub fn of_mut<'a, S>(&self, p: &'a mut [S]) -> &'a mut [S] {
        &mut p[self.offset..self.offset + self.len]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Init {
    Normal,
    Zeros,
    Ones,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TensorInfo {
    pub name: String,
    pub shape: Vec<usize>,
    pub slot: Slot,
    pub init: Init,
}

/// Ordered list of named tensors packed into one flat vector.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Layout {
    tensors: Vec<TensorInfo>,
    len: usize,
}

impl Layout {
    pub fn add(&mut self, name: impl Into<String>, shape: &[usize], init: Init) -> Slot {
        let len = shape.iter().product();
        let slot = Slot { offset: self.len, len };
        self.tensors.push(TensorInfo {
            name: name.into(),
            shape: shape.to_vec(),
            slot,
            init,
        });
        self.len += len;
        slot
    }

    pub fn tensors(&self) -> &[TensorInfo] {
        &self.tensors
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Weights ~ N(0, std²), biases 0, layer-norm gains 1.
    pub fn initialize<S: Scalar, R: Rng>(&self, std: f64, rng: &mut R) -> Vec<S> {
        let mut out = vec![S::zero(); self.len];
        for t in &self.tensors {
            let dst = t.slot.of_mut(&mut out);
            match t.init {
                Init::Zeros => {}
                Init::Ones => dst.fill(S::one()),
                Init::Normal => {
                    for v in dst {
                        let z: f64 = StandardNormal.sample(rng);
                        *v = S::of(z * std);
                    }
                }
            }
        }
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Linear {
    pub w: Slot,
    pub b: Slot,
    pub inp: usize,
    pub out: usize,
}

impl Linear {
    pub fn new(layout: &mut Layout, name: &str, inp: usize, out: usize) -> Self {
        Linear {
            w: layout.add(format!("{name}.weight"), &[inp, out], Init::Normal),
            b: layout.add(format!("{name}.bias"), &[out], Init::Zeros),
            inp,
            out,
        }
    }

    pub fn forward<S: Scalar>(&self, p: &[S], x: &[S], n: usize, y: &mut [S]) {
        let b = self.b.of(p);
        for row in y[..n * self.out].chunks_exact_mut(self.out) {
            row.copy_from_slice(b);
        }
        gemm(n, self.inp, self.out, S::one(), x, Trans::No, self.w.of(p), Trans::No, S::one(), y);
    }

    /// Accumulates weight/bias gradients; writes `dx` when given.
    pub fn backward<S: Scalar>(&self, p: &[S], g: &mut [S], x: &[S], n: usize, dy: &[S], dx: Option<&mut [S]>) {
        gemm(self.inp, n, self.out, S::one(), x, Trans::Yes, dy, Trans::No, S::one(), self.w.of_mut(g));
        let gb = self.b.of_mut(g);
        for row in dy[..n * self.out].chunks_exact(self.out) {
            for (acc, &v) in gb.iter_mut().zip(row) {
                *acc += v;
            }
        }
        if let Some(dx) = dx {
            gemm(n, self.out, self.inp, S::one(), dy, Trans::No, self.w.of(p), Trans::Yes, S::zero(), dx);
        }
    }
}

pub const LN_EPS: f64 = 1e-5;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LayerNorm {
    pub gain: Slot,
    pub bias: Slot,
    pub dim: usize,
}

impl LayerNorm {
    pub fn new(layout: &mut Layout, name: &str, dim: usize) -> Self {
        LayerNorm {
            gain: layout.add(format!("{name}.gain"), &[dim], Init::Ones),
            bias: layout.add(format!("{name}.bias"), &[dim], Init::Zeros),
            dim,
        }
    }

    /// `xhat` and `rstd` are saved for the backward pass.
    pub fn forward<S: Scalar>(&self, p: &[S], x: &[S], n: usize, y: &mut [S], xhat: &mut [S], rstd: &mut [S]) {
        let d = self.dim;
        let g = self.gain.of(p);
        let b = self.bias.of(p);
        let inv_d = S::one() / S::of(d as f64);
        for i in 0..n {
            let xr = &x[i * d..(i + 1) * d];
            let mean = xr.iter().copied().sum::<S>() * inv_d;
            let var = xr.iter().map(|&v| (v - mean) * (v - mean)).sum::<S>() * inv_d;
            let r = S::one() / (var + S::of(LN_EPS)).sqrt();
            rstd[i] = r;
            for j in 0..d {
                let h = (xr[j] - mean) * r;
                xhat[i * d + j] = h;
                y[i * d + j] = h * g[j] + b[j];
            }
        }
    }

    pub fn forward_infer<S: Scalar>(&self, p: &[S], x: &[S], n: usize, y: &mut [S]) {
        let mut xhat = vec![S::zero(); n * self.dim];
        let mut rstd = vec![S::zero(); n];
        self.forward(p, x, n, y, &mut xhat, &mut rstd);
    }

    /// Overwrites `dx`.
    pub fn backward<S: Scalar>(&self, p: &[S], g: &mut [S], n: usize, xhat: &[S], rstd: &[S], dy: &[S], dx: &mut [S]) {
        let d = self.dim;
        let gain = self.gain.of(p);
        let dd = S::of(d as f64);
        {
            let gg = self.gain.of_mut(g);
            for i in 0..n {
                for j in 0..d {
                    gg[j] += dy[i * d + j] * xhat[i * d + j];
                }
            }
        }
        {
            let gbias = self.bias.of_mut(g);
            for i in 0..n {
                for j in 0..d {
                    gbias[j] += dy[i * d + j];
                }
            }
        }
        for i in 0..n {
            let mut sum = S::zero();
            let mut sum_x = S::zero();
            for j in 0..d {
                let dh = dy[i * d + j] * gain[j];
                sum += dh;
                sum_x += dh * xhat[i * d + j];
            }
            for j in 0..d {
                let dh = dy[i * d + j] * gain[j];
                dx[i * d + j] = rstd[i] / dd * (dd * dh - sum - xhat[i * d + j] * sum_x);
            }
        }
    }
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_A: f64 = 0.044_715;

#[inline]
pub fn gelu<S: Scalar>(x: S) -> S {
    let c = S::of(GELU_C);
    let a = S::of(GELU_A);
    let half = S::of(0.5);
    half * x * (S::one() + (c * (x + a * x * x * x)).tanh())
}

#[inline]
pub fn gelu_grad<S: Scalar>(x: S) -> S {
    let c = S::of(GELU_C);
    let a = S::of(GELU_A);
    let half = S::of(0.5);
    let t = (c * (x + a * x * x * x)).tanh();
    half * (S::one() + t) + half * x * (S::one() - t * t) * c * (S::one() + S::of(3.0) * a * x * x)
}

/// Inverted dropout mask: entries are `0` or `1/(1−p)`.
pub fn dropout_mask<S: Scalar, R: Rng>(len: usize, p: f64, rng: &mut R) -> Vec<S> {
    let keep = S::of(1.0 / (1.0 - p));
    (0..len)
        .map(|_| if rng.gen::<f64>() < p { S::zero() } else { keep })
        .collect()
}

/// Multi-head scaled dot-product attention over a packed `[q | k | v]` row layout.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Attention {
    pub dim: usize,
    pub heads: usize,
    pub causal: bool,
}

impl Attention {
    fn head_dim(&self) -> usize {
        self.dim / self.heads
    }

    fn gather<S: Scalar>(&self, qkv: &[S], n: usize, part: usize, h: usize, out: &mut [S]) {
        let d = self.dim;
        let hd = self.head_dim();
        for i in 0..n {
            let src = &qkv[i * 3 * d + part * d + h * hd..][..hd];
            out[i * hd..(i + 1) * hd].copy_from_slice(src);
        }
    }

    /// Writes `out` (`n×dim`) and returns per-head probabilities (`heads×n×n`).
    pub fn forward<S: Scalar>(&self, qkv: &[S], n: usize, out: &mut [S]) -> Vec<S> {
        let hd = self.head_dim();
        let d = self.dim;
        let scale = S::one() / S::of(hd as f64).sqrt();
        let mut probs = vec![S::zero(); self.heads * n * n];
        let mut q = vec![S::zero(); n * hd];
        let mut k = vec![S::zero(); n * hd];
        let mut v = vec![S::zero(); n * hd];
        let mut o = vec![S::zero(); n * hd];
        for h in 0..self.heads {
            self.gather(qkv, n, 0, h, &mut q);
            self.gather(qkv, n, 1, h, &mut k);
            self.gather(qkv, n, 2, h, &mut v);
            let p = &mut probs[h * n * n..(h + 1) * n * n];
            gemm(n, hd, n, scale, &q, Trans::No, &k, Trans::Yes, S::zero(), p);
            for i in 0..n {
                let row = &mut p[i * n..(i + 1) * n];
                let visible = if self.causal { i + 1 } else { n };
                softmax_in_place(&mut row[..visible]);
                row[visible..].fill(S::zero());
            }
            gemm(n, n, hd, S::one(), p, Trans::No, &v, Trans::No, S::zero(), &mut o);
            for i in 0..n {
                out[i * d + h * hd..i * d + (h + 1) * hd].copy_from_slice(&o[i * hd..(i + 1) * hd]);
            }
        }
        probs
    }

    /// Writes `dqkv` (`n×3·dim`).
    pub fn backward<S: Scalar>(&self, qkv: &[S], probs: &[S], n: usize, dout: &[S], dqkv: &mut [S]) {
        let hd = self.head_dim();
        let d = self.dim;
        let scale = S::one() / S::of(hd as f64).sqrt();
        let mut q = vec![S::zero(); n * hd];
        let mut k = vec![S::zero(); n * hd];
        let mut v = vec![S::zero(); n * hd];
        let mut dout_h = vec![S::zero(); n * hd];
        let mut dp = vec![S::zero(); n * n];
        let mut dq = vec![S::zero(); n * hd];
        let mut dk = vec![S::zero(); n * hd];
        let mut dv = vec![S::zero(); n * hd];
        for h in 0..self.heads {
            self.gather(qkv, n, 0, h, &mut q);
            self.gather(qkv, n, 1, h, &mut k);
            self.gather(qkv, n, 2, h, &mut v);
            for i in 0..n {
                dout_h[i * hd..(i + 1) * hd].copy_from_slice(&dout[i * d + h * hd..i * d + (h + 1) * hd]);
            }
            let p = &probs[h * n * n..(h + 1) * n * n];
            // dV = Pᵀ dO ; dP = dO Vᵀ
            gemm(n, n, hd, S::one(), p, Trans::Yes, &dout_h, Trans::No, S::zero(), &mut dv);
            gemm(n, hd, n, S::one(), &dout_h, Trans::No, &v, Trans::Yes, S::zero(), &mut dp);
            // softmax backward, in place: dS = P ⊙ (dP − rowsum(P ⊙ dP))
            for i in 0..n {
                let pr = &p[i * n..(i + 1) * n];
                let dr = &mut dp[i * n..(i + 1) * n];
                let dot: S = pr.iter().zip(dr.iter()).map(|(&a, &b)| a * b).sum();
                for (x, &pv) in dr.iter_mut().zip(pr) {
                    *x = pv * (*x - dot);
                }
            }
            gemm(n, n, hd, scale, &dp, Trans::No, &k, Trans::No, S::zero(), &mut dq);
            gemm(n, n, hd, scale, &dp, Trans::Yes, &q, Trans::No, S::zero(), &mut dk);
            for i in 0..n {
                let base = i * 3 * d + h * hd;
                dqkv[base..base + hd].copy_from_slice(&dq[i * hd..(i + 1) * hd]);
                dqkv[base + d..base + d + hd].copy_from_slice(&dk[i * hd..(i + 1) * hd]);
                dqkv[base + 2 * d..base + 2 * d + hd].copy_from_slice(&dv[i * hd..(i + 1) * hd]);
            }
        }
    }
}

pub fn softmax_in_place<S: Scalar>(row: &mut [S]) {
    let max = row.iter().copied().fold(S::neg_infinity(), S::max);
    let mut sum = S::zero();
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in row.iter_mut() {
        *v /= sum;
    }
}

/// Pre-layer-norm transformer block: `x + attn(ln1 x)`, then `+ mlp(ln2 ·)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Block {
    pub ln1: LayerNorm,
    pub qkv: Linear,
    pub proj: Linear,
    pub ln2: LayerNorm,
    pub fc1: Linear,
    pub fc2: Linear,
    pub attn: Attention,
}

/// Activations saved by [`Block::forward`].
#[derive(Clone, Debug, Default)]
pub struct BlockCache<S> {
    xhat1: Vec<S>,
    rstd1: Vec<S>,
    a1: Vec<S>,
    qkv: Vec<S>,
    probs: Vec<S>,
    att: Vec<S>,
    mask1: Option<Vec<S>>,
    x_mid: Vec<S>,
    xhat2: Vec<S>,
    rstd2: Vec<S>,
    a2: Vec<S>,
    f1: Vec<S>,
    f1_act: Vec<S>,
    mask2: Option<Vec<S>>,
}

/// Keys and values of every position seen so far, for incremental decoding.
#[derive(Clone, Debug, Default)]
pub struct KvCache<S> {
    keys: Vec<S>,
    values: Vec<S>,
}

impl<S> KvCache<S> {
    pub fn positions(&self, dim: usize) -> usize {
        self.keys.len() / dim
    }
}

pub const FF_MULT: usize = 4;

impl Block {
    pub fn new(layout: &mut Layout, name: &str, dim: usize, heads: usize, causal: bool) -> Self {
        Block {
            ln1: LayerNorm::new(layout, &format!("{name}.ln1"), dim),
            qkv: Linear::new(layout, &format!("{name}.attn.qkv"), dim, 3 * dim),
            proj: Linear::new(layout, &format!("{name}.attn.proj"), dim, dim),
            ln2: LayerNorm::new(layout, &format!("{name}.ln2"), dim),
            fc1: Linear::new(layout, &format!("{name}.mlp.fc1"), dim, FF_MULT * dim),
            fc2: Linear::new(layout, &format!("{name}.mlp.fc2"), FF_MULT * dim, dim),
            attn: Attention { dim, heads, causal },
        }
    }

    /// Training-mode forward. `dropout` is `(p, rng)`; `None` disables it.
    pub fn forward<S: Scalar, R: Rng>(
        &self,
        p: &[S],
        x: &[S],
        n: usize,
        mut dropout: Option<(f64, &mut R)>,
    ) -> (Vec<S>, BlockCache<S>) {
        let d = self.attn.dim;
        let mut c = BlockCache {
            xhat1: vec![S::zero(); n * d],
            rstd1: vec![S::zero(); n],
            a1: vec![S::zero(); n * d],
            qkv: vec![S::zero(); n * 3 * d],
            att: vec![S::zero(); n * d],
            xhat2: vec![S::zero(); n * d],
            rstd2: vec![S::zero(); n],
            a2: vec![S::zero(); n * d],
            f1: vec![S::zero(); n * FF_MULT * d],
            ..Default::default()
        };
        self.ln1.forward(p, x, n, &mut c.a1, &mut c.xhat1, &mut c.rstd1);
        self.qkv.forward(p, &c.a1, n, &mut c.qkv);
        c.probs = self.attn.forward(&c.qkv, n, &mut c.att);
        let mut proj = vec![S::zero(); n * d];
        self.proj.forward(p, &c.att, n, &mut proj);
        if let Some((rate, rng)) = dropout.as_mut() {
            let m = dropout_mask(n * d, *rate, *rng);
            proj.iter_mut().zip(&m).for_each(|(v, &k)| *v *= k);
            c.mask1 = Some(m);
        }
        c.x_mid = x[..n * d].iter().zip(&proj).map(|(&a, &b)| a + b).collect();
        self.ln2.forward(p, &c.x_mid, n, &mut c.a2, &mut c.xhat2, &mut c.rstd2);
        self.fc1.forward(p, &c.a2, n, &mut c.f1);
        c.f1_act = c.f1.iter().map(|&v| gelu(v)).collect();
        let mut f2 = vec![S::zero(); n * d];
        self.fc2.forward(p, &c.f1_act, n, &mut f2);
        if let Some((rate, rng)) = dropout.as_mut() {
            let m = dropout_mask(n * d, *rate, *rng);
            f2.iter_mut().zip(&m).for_each(|(v, &k)| *v *= k);
            c.mask2 = Some(m);
        }
        let y = c.x_mid.iter().zip(&f2).map(|(&a, &b)| a + b).collect();
        (y, c)
    }

    /// Returns the gradient with respect to the block input.
    pub fn backward<S: Scalar>(&self, p: &[S], g: &mut [S], c: &BlockCache<S>, n: usize, dy: &[S]) -> Vec<S> {
        let d = self.attn.dim;
        let mut df2: Vec<S> = dy.to_vec();
        if let Some(m) = &c.mask2 {
            df2.iter_mut().zip(m).for_each(|(v, &k)| *v *= k);
        }
        let mut dact = vec![S::zero(); n * FF_MULT * d];
        self.fc2.backward(p, g, &c.f1_act, n, &df2, Some(&mut dact));
        for (v, &pre) in dact.iter_mut().zip(&c.f1) {
            *v *= gelu_grad(pre);
        }
        let mut da2 = vec![S::zero(); n * d];
        self.fc1.backward(p, g, &c.a2, n, &dact, Some(&mut da2));
        let mut dmid = vec![S::zero(); n * d];
        self.ln2.backward(p, g, n, &c.xhat2, &c.rstd2, &da2, &mut dmid);
        for (a, &b) in dmid.iter_mut().zip(dy) {
            *a += b;
        }
        let mut dproj = dmid.clone();
        if let Some(m) = &c.mask1 {
            dproj.iter_mut().zip(m).for_each(|(v, &k)| *v *= k);
        }
        let mut datt = vec![S::zero(); n * d];
        self.proj.backward(p, g, &c.att, n, &dproj, Some(&mut datt));
        let mut dqkv = vec![S::zero(); n * 3 * d];
        self.attn.backward(&c.qkv, &c.probs, n, &datt, &mut dqkv);
        let mut da1 = vec![S::zero(); n * d];
        self.qkv.backward(p, g, &c.a1, n, &dqkv, Some(&mut da1));
        let mut dx = vec![S::zero(); n * d];
        self.ln1.backward(p, g, n, &c.xhat1, &c.rstd1, &da1, &mut dx);
        for (a, &b) in dx.iter_mut().zip(&dmid) {
            *a += b;
        }
        dx
    }

    /// Inference forward for `n` new rows appended after the positions already in `kv`.
    /// Only meaningful for causal blocks.
    pub fn forward_cached<S: Scalar>(&self, p: &[S], x: &[S], n: usize, kv: &mut KvCache<S>) -> Vec<S> {
        let d = self.attn.dim;
        let heads = self.attn.heads;
        let hd = d / heads;
        let scale = S::one() / S::of(hd as f64).sqrt();
        let past = kv.positions(d);
        let mut a1 = vec![S::zero(); n * d];
        self.ln1.forward_infer(p, x, n, &mut a1);
        let mut qkv = vec![S::zero(); n * 3 * d];
        self.qkv.forward(p, &a1, n, &mut qkv);
        for i in 0..n {
            kv.keys.extend_from_slice(&qkv[i * 3 * d + d..i * 3 * d + 2 * d]);
            kv.values.extend_from_slice(&qkv[i * 3 * d + 2 * d..i * 3 * d + 3 * d]);
        }
        let mut att = vec![S::zero(); n * d];
        let mut scores = vec![S::zero(); past + n];
        for i in 0..n {
            let visible = past + i + 1;
            for h in 0..heads {
                let q = &qkv[i * 3 * d + h * hd..][..hd];
                for t in 0..visible {
                    let k = &kv.keys[t * d + h * hd..][..hd];
                    scores[t] = q.iter().zip(k).map(|(&a, &b)| a * b).sum::<S>() * scale;
                }
                softmax_in_place(&mut scores[..visible]);
                let o = &mut att[i * d + h * hd..][..hd];
                o.fill(S::zero());
                for t in 0..visible {
                    let v = &kv.values[t * d + h * hd..][..hd];
                    let w = scores[t];
                    for (acc, &vv) in o.iter_mut().zip(v) {
                        *acc += w * vv;
                    }
                }
            }
        }
        let mut y = vec![S::zero(); n * d];
        self.proj.forward(p, &att, n, &mut y);
        for (a, &b) in y.iter_mut().zip(x) {
            *a += b;
        }
        let mut a2 = vec![S::zero(); n * d];
        self.ln2.forward_infer(p, &y, n, &mut a2);
        let mut f1 = vec![S::zero(); n * FF_MULT * d];
        self.fc1.forward(p, &a2, n, &mut f1);
        f1.iter_mut().for_each(|v| *v = gelu(*v));
        let mut f2 = vec![S::zero(); n * d];
        self.fc2.forward(p, &f1, n, &mut f2);
        for (a, &b) in y.iter_mut().zip(&f2) {
            *a += b;
        }
        y
    }
}

/// Mean cross-entropy of `logits` (`n×v`) against `targets`; also returns
/// `∂loss/∂logits`.
pub fn cross_entropy<S: Scalar>(logits: &[S], v: usize, targets: &[usize]) -> (S, Vec<S>) {
    let n = targets.len();
    let mut grad = logits.to_vec();
    let mut total = S::zero();
    let inv_n = S::one() / S::of(n as f64);
    for (i, &t) in targets.iter().enumerate() {
        let row = &mut grad[i * v..(i + 1) * v];
        let max = row.iter().copied().fold(S::neg_infinity(), S::max);
        let target = row[t];
        let mut sum = S::zero();
        for x in row.iter_mut() {
            *x = (*x - max).exp();
            sum += *x;
        }
        total += sum.ln() + max - target;
        let scale = inv_n / sum;
        for x in row.iter_mut() {
            *x *= scale;
        }
        row[t] -= inv_n;
    }
    (total * inv_n, grad)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn gelu_grad_matches_finite_difference() {
        for &x in &[-3.0f64, -0.7, 0.0, 0.3, 2.5] {
            let h = 1e-6;
            let fd = (gelu(x + h) - gelu(x - h)) / (2.0 * h);
            assert!((fd - gelu_grad(x)).abs() < 1e-8);
        }
    }

    #[test]
    fn cached_block_matches_full_forward() {
        let mut layout = Layout::default();
        let block = Block::new(&mut layout, "b", 8, 2, true);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p: Vec<f64> = layout.initialize(0.3, &mut rng);
        let n = 7;
        let x: Vec<f64> = (0..n * 8).map(|i| ((i * 37 % 11) as f64 - 5.0) / 5.0).collect();
        let (full, _) = block.forward::<f64, ChaCha8Rng>(&p, &x, n, None);
        let mut kv = KvCache::default();
        let mut inc = block.forward_cached(&p, &x[..3 * 8], 3, &mut kv);
        for i in 3..n {
            inc.extend(block.forward_cached(&p, &x[i * 8..(i + 1) * 8], 1, &mut kv));
        }
        for (a, b) in full.iter().zip(&inc) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
    }

    #[test]
    fn dropout_mask_values() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let m: Vec<f64> = dropout_mask(1000, 0.25, &mut rng);
        assert!(m.iter().all(|&v| v == 0.0 || (v - 4.0 / 3.0).abs() < 1e-12));
        let zeros = m.iter().filter(|&&v| v == 0.0).count();
        assert!((150..350).contains(&zeros));
    }
}
