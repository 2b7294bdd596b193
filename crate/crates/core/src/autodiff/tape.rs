//! Eager reverse-mode tape over dense `f64` vectors.
//!
//! Every operation computes its value immediately, so callers can inspect
//! intermediate values while still building the graph (the constraint masks
//! rely on this). Random noise is always passed in explicitly.

use super::param::{Gradients, Parameter};
use super::sigmoid;
use crate::error::{Error, Result};

/// Floor applied to probabilities before any logarithm.
pub const PROB_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// One output column of [`Tape::gated_blend`].
///
/// Ungated columns are the constant `base`. Gated columns evaluate
/// `(1 - s[gate]) * base + s[gate] * Σ w * z[j]`.
#[derive(Debug, Clone, PartialEq)]
pub struct BlendColumn {
    pub gate: Option<usize>,
    pub base: f64,
    pub terms: Vec<(usize, f64)>,
}

#[derive(Debug, Clone)]
enum Op<'p> {
    Leaf,
    Dense {
        x: Var,
        w: &'p Parameter,
        b: &'p Parameter,
        trainable: bool,
    },
    Relu(Var),
    Sigmoid(Var),
    Log(Var),
    Add(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    MulConst(Var, Vec<f64>),
    Sum(Var),
    L1(Var),
    SoftmaxBlock {
        x: Var,
        blocks: &'p [usize],
    },
    NormalizeBlock {
        x: Var,
        blocks: &'p [usize],
    },
    GumbelSoftmax {
        x: Var,
        tau: f64,
        blocks: &'p [usize],
    },
    BinaryConcrete {
        pi: Var,
        tau: f64,
    },
    TwoClass(Var),
    CrossEntropy {
        p: Var,
        target: usize,
    },
    GatedBlend {
        s: Var,
        z: Var,
        columns: Vec<BlendColumn>,
    },
}

#[derive(Debug, Clone)]
struct Node<'p> {
    op: Op<'p>,
    value: Vec<f64>,
}

#[derive(Debug, Clone, Default)]
pub struct Tape<'p> {
    nodes: Vec<Node<'p>>,
}

/// Adjoints from one backward pass, indexed by [`Var`].
#[derive(Debug, Clone, PartialEq)]
pub struct Adjoints {
    grads: Vec<Option<Vec<f64>>>,
}

impl Adjoints {
    /// Adjoint of `v`; zero when `v` does not reach the loss.
    pub fn get(&self, v: Var, len: usize) -> Vec<f64> {
        self.grads[v.0].clone().unwrap_or_else(|| vec![0.0; len])
    }

    pub fn is_reached(&self, v: Var) -> bool {
        self.grads[v.0].is_some()
    }
}

fn softmax_into(xs: &[f64], out: &mut [f64]) {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for (o, &x) in out.iter_mut().zip(xs) {
        *o = (x - m).exp();
        sum += *o;
    }
    for o in out.iter_mut() {
        *o /= sum;
    }
}

/// Block-wise softmax of `xs`.
pub fn softmax_blocks(xs: &[f64], blocks: &[usize]) -> Vec<f64> {
    let mut out = vec![0.0; xs.len()];
    let mut o = 0;
    for &c in blocks {
        softmax_into(&xs[o..o + c], &mut out[o..o + c]);
        o += c;
    }
    out
}

fn check_blocks(len: usize, blocks: &[usize]) -> Result<()> {
    let total: usize = blocks.iter().sum();
    if total != len || blocks.contains(&0) {
        return Err(Error::Shape(format!(
            "blocks {blocks:?} do not tile a vector of length {len}"
        )));
    }
    Ok(())
}

fn check_tau(tau: f64) -> Result<()> {
    if tau > 0.0 && tau.is_finite() {
        Ok(())
    } else {
        Err(Error::Temperature(tau))
    }
}

/// Clamped selection probability used by the binary concrete relaxation.
fn clamp_pi(p: f64) -> f64 {
    p.clamp(PROB_FLOOR, 1.0 - PROB_FLOOR)
}

impl<'p> Tape<'p> {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &[f64] {
        &self.nodes[v.0].value
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value[0]
    }

    fn push(&mut self, op: Op<'p>, value: Vec<f64>) -> Var {
        self.nodes.push(Node { op, value });
        Var(self.nodes.len() - 1)
    }

    fn same_len(&self, a: Var, b: Var) -> Result<usize> {
        let (la, lb) = (self.value(a).len(), self.value(b).len());
        if la != lb {
            return Err(Error::Shape(format!(
                "operand lengths {la} and {lb} differ"
            )));
        }
        Ok(la)
    }

    /// Input or constant vector.
    pub fn leaf(&mut self, value: Vec<f64>) -> Var {
        self.push(Op::Leaf, value)
    }

    /// `W x + b` with `W` stored row-major as `out × in`. Gradients for `W`
    /// and `b` are only accumulated when `trainable`.
    pub fn dense(
        &mut self,
        x: Var,
        w: &'p Parameter,
        b: &'p Parameter,
        trainable: bool,
    ) -> Result<Var> {
        let xin = self.value(x);
        let (rows, cols) = match w.shape.as_slice() {
            [r, c] => (*r, *c),
            other => return Err(Error::Shape(format!("weight shape {other:?} is not 2-d"))),
        };
        if cols != xin.len() || b.value.len() != rows {
            return Err(Error::Shape(format!(
                "dense {}: weights {rows}x{cols}, bias {}, input {}",
                w.name,
                b.value.len(),
                xin.len()
            )));
        }
        let mut y = b.value.clone();
        for (r, yr) in y.iter_mut().enumerate() {
            let row = &w.value[r * cols..(r + 1) * cols];
            *yr += row.iter().zip(xin).map(|(a, b)| a * b).sum::<f64>();
        }
        Ok(self.push(Op::Dense { x, w, b, trainable }, y))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let y = self.value(x).iter().map(|&v| v.max(0.0)).collect();
        self.push(Op::Relu(x), y)
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let y = self.value(x).iter().map(|&v| sigmoid(v)).collect();
        self.push(Op::Sigmoid(x), y)
    }

    /// Natural log of probabilities clamped to `[PROB_FLOOR, 1]`.
    pub fn log(&mut self, x: Var) -> Var {
        let y = self
            .value(x)
            .iter()
            .map(|&v| v.clamp(PROB_FLOOR, 1.0).ln())
            .collect();
        self.push(Op::Log(x), y)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_len(a, b)?;
        let y = self
            .value(a)
            .iter()
            .zip(self.value(b))
            .map(|(x, y)| x + y)
            .collect();
        Ok(self.push(Op::Add(a, b), y))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_len(a, b)?;
        let y = self
            .value(a)
            .iter()
            .zip(self.value(b))
            .map(|(x, y)| x * y)
            .collect();
        Ok(self.push(Op::Mul(a, b), y))
    }

    pub fn scale(&mut self, x: Var, c: f64) -> Var {
        let y = self.value(x).iter().map(|v| v * c).collect();
        self.push(Op::Scale(x, c), y)
    }

    /// Elementwise product with a constant vector.
    pub fn mul_const(&mut self, x: Var, c: Vec<f64>) -> Result<Var> {
        if c.len() != self.value(x).len() {
            return Err(Error::Shape(format!(
                "constant of length {} for operand of length {}",
                c.len(),
                self.value(x).len()
            )));
        }
        let y = self.value(x).iter().zip(&c).map(|(a, b)| a * b).collect();
        Ok(self.push(Op::MulConst(x, c), y))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let y = vec![self.value(x).iter().sum()];
        self.push(Op::Sum(x), y)
    }

    pub fn l1_norm(&mut self, x: Var) -> Var {
        let y = vec![self.value(x).iter().map(|v| v.abs()).sum()];
        self.push(Op::L1(x), y)
    }

    /// Independent softmax over each block of sizes `blocks`.
    pub fn softmax_block(&mut self, x: Var, blocks: &'p [usize]) -> Result<Var> {
        check_blocks(self.value(x).len(), blocks)?;
        let y = softmax_blocks(self.value(x), blocks);
        Ok(self.push(Op::SoftmaxBlock { x, blocks }, y))
    }

    /// Rescale each block of a non-negative vector to sum to one.
    pub fn normalize_block(&mut self, x: Var, blocks: &'p [usize]) -> Result<Var> {
        let xin = self.value(x);
        check_blocks(xin.len(), blocks)?;
        let mut y = xin.to_vec();
        let mut o = 0;
        for &c in blocks {
            let s: f64 = y[o..o + c].iter().sum();
            y[o..o + c].iter_mut().for_each(|v| *v /= s);
            o += c;
        }
        Ok(self.push(Op::NormalizeBlock { x, blocks }, y))
    }

    /// Relaxed categorical sample per block: `softmax((log_probs + noise) / tau)`.
    pub fn gumbel_softmax(
        &mut self,
        log_probs: Var,
        noise: &[f64],
        tau: f64,
        blocks: &'p [usize],
    ) -> Result<Var> {
        check_tau(tau)?;
        let lp = self.value(log_probs);
        check_blocks(lp.len(), blocks)?;
        if noise.len() != lp.len() {
            return Err(Error::Shape(format!(
                "{} gumbel draws for {} logits",
                noise.len(),
                lp.len()
            )));
        }
        let scaled: Vec<f64> = lp.iter().zip(noise).map(|(l, g)| (l + g) / tau).collect();
        let y = softmax_blocks(&scaled, blocks);
        Ok(self.push(
            Op::GumbelSoftmax {
                x: log_probs,
                tau,
                blocks,
            },
            y,
        ))
    }

    /// Relaxed Bernoulli sample per entry of `pi` with noise pairs
    /// `(g0, g1)`:
    /// `exp((log π + g1)/τ) / (exp((log(1-π) + g0)/τ) + exp((log π + g1)/τ))`.
    pub fn binary_concrete(&mut self, pi: Var, g0: &[f64], g1: &[f64], tau: f64) -> Result<Var> {
        check_tau(tau)?;
        let p = self.value(pi);
        if g0.len() != p.len() || g1.len() != p.len() {
            return Err(Error::Shape(format!(
                "{}/{} gumbel draws for {} probabilities",
                g0.len(),
                g1.len(),
                p.len()
            )));
        }
        let y = p
            .iter()
            .zip(g0.iter().zip(g1))
            .map(|(&p, (&a, &b))| {
                let p = clamp_pi(p);
                sigmoid((p.ln() - (1.0 - p).ln() + b - a) / tau)
            })
            .collect();
        Ok(self.push(Op::BinaryConcrete { pi, tau }, y))
    }

    /// Map a scalar probability `p` of class 1 to `[1 - p, p]`.
    pub fn two_class(&mut self, p: Var) -> Result<Var> {
        let v = self.value(p);
        if v.len() != 1 {
            return Err(Error::Shape(format!(
                "two_class expects a scalar, got {}",
                v.len()
            )));
        }
        let y = vec![1.0 - v[0], v[0]];
        Ok(self.push(Op::TwoClass(p), y))
    }

    /// `-ln p[target]`, with `p[target]` floored at [`PROB_FLOOR`].
    pub fn cross_entropy(&mut self, probs: Var, target: usize) -> Result<Var> {
        let p = self.value(probs);
        if target >= p.len() {
            return Err(Error::Shape(format!(
                "target {target} for {} class probabilities",
                p.len()
            )));
        }
        let y = vec![-(p[target].max(PROB_FLOOR)).ln()];
        Ok(self.push(Op::CrossEntropy { p: probs, target }, y))
    }

    pub fn gated_blend(&mut self, s: Var, z: Var, columns: Vec<BlendColumn>) -> Result<Var> {
        let (sv, zv) = (self.value(s), self.value(z));
        let mut y = Vec::with_capacity(columns.len());
        for col in &columns {
            let v = match col.gate {
                None => col.base,
                Some(k) => {
                    let gate = *sv
                        .get(k)
                        .ok_or_else(|| Error::Shape(format!("gate {k} out of range")))?;
                    let mut mix = 0.0;
                    for &(j, w) in &col.terms {
                        mix += w * zv
                            .get(j)
                            .ok_or_else(|| Error::Shape(format!("term {j} out of range")))?;
                    }
                    (1.0 - gate) * col.base + gate * mix
                }
            };
            y.push(v);
        }
        Ok(self.push(Op::GatedBlend { s, z, columns }, y))
    }

    /// Reverse sweep from scalar `loss`. Gradients of trainable dense
    /// parameters are added into `grads` (slots it does not hold are skipped).
    pub fn backward(&self, loss: Var, grads: &mut Gradients) -> Adjoints {
        let mut adj: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        adj[loss.0] = Some(vec![1.0; self.nodes[loss.0].value.len()]);

        fn acc(adj: &mut [Option<Vec<f64>>], v: Var, len: usize) -> &mut Vec<f64> {
            adj[v.0].get_or_insert_with(|| vec![0.0; len])
        }

        for i in (0..=loss.0).rev() {
            let Some(g) = adj[i].take() else { continue };
            let node = &self.nodes[i];
            let y = &node.value;
            match &node.op {
                Op::Leaf => {}
                Op::Dense { x, w, b, trainable } => {
                    let xin = &self.nodes[x.0].value;
                    let cols = xin.len();
                    let dx = acc(&mut adj, *x, cols);
                    for (r, &gr) in g.iter().enumerate() {
                        if gr == 0.0 {
                            continue;
                        }
                        let row = &w.value[r * cols..(r + 1) * cols];
                        for (d, wv) in dx.iter_mut().zip(row) {
                            *d += gr * wv;
                        }
                    }
                    if *trainable {
                        if let Some(gw) = grads.slot_mut(w.id) {
                            for (r, &gr) in g.iter().enumerate() {
                                if gr == 0.0 {
                                    continue;
                                }
                                for (d, xv) in gw[r * cols..(r + 1) * cols].iter_mut().zip(xin) {
                                    *d += gr * xv;
                                }
                            }
                        }
                        if let Some(gb) = grads.slot_mut(b.id) {
                            for (d, gr) in gb.iter_mut().zip(&g) {
                                *d += gr;
                            }
                        }
                    }
                }
                Op::Relu(x) => {
                    let d = acc(&mut adj, *x, g.len());
                    for ((d, gv), yv) in d.iter_mut().zip(&g).zip(y) {
                        if *yv > 0.0 {
                            *d += gv;
                        }
                    }
                }
                Op::Sigmoid(x) => {
                    let d = acc(&mut adj, *x, g.len());
                    for ((d, gv), yv) in d.iter_mut().zip(&g).zip(y) {
                        *d += gv * yv * (1.0 - yv);
                    }
                }
                Op::Log(x) => {
                    let xin = &self.nodes[x.0].value;
                    let d = acc(&mut adj, *x, g.len());
                    for ((d, gv), &xv) in d.iter_mut().zip(&g).zip(xin) {
                        if xv > PROB_FLOOR && xv <= 1.0 {
                            *d += gv / xv;
                        }
                    }
                }
                Op::Add(a, b) => {
                    for v in [*a, *b] {
                        let d = acc(&mut adj, v, g.len());
                        d.iter_mut().zip(&g).for_each(|(d, gv)| *d += gv);
                    }
                }
                Op::Mul(a, b) => {
                    let (av, bv) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
                    {
                        let d = acc(&mut adj, *a, g.len());
                        for ((d, gv), bv) in d.iter_mut().zip(&g).zip(bv) {
                            *d += gv * bv;
                        }
                    }
                    let d = acc(&mut adj, *b, g.len());
                    for ((d, gv), av) in d.iter_mut().zip(&g).zip(av) {
                        *d += gv * av;
                    }
                }
                Op::Scale(x, c) => {
                    let d = acc(&mut adj, *x, g.len());
                    d.iter_mut().zip(&g).for_each(|(d, gv)| *d += gv * c);
                }
                Op::MulConst(x, c) => {
                    let d = acc(&mut adj, *x, g.len());
                    for ((d, gv), cv) in d.iter_mut().zip(&g).zip(c) {
                        *d += gv * cv;
                    }
                }
                Op::Sum(x) => {
                    let n = self.nodes[x.0].value.len();
                    let d = acc(&mut adj, *x, n);
                    d.iter_mut().for_each(|d| *d += g[0]);
                }
                Op::L1(x) => {
                    let xin = &self.nodes[x.0].value;
                    let d = acc(&mut adj, *x, xin.len());
                    for (d, &xv) in d.iter_mut().zip(xin) {
                        if xv != 0.0 {
                            *d += g[0] * xv.signum();
                        }
                    }
                }
                Op::SoftmaxBlock { x, blocks } => {
                    let d = acc(&mut adj, *x, g.len());
                    softmax_backward(d, &g, y, blocks, 1.0);
                }
                Op::GumbelSoftmax { x, tau, blocks, .. } => {
                    let d = acc(&mut adj, *x, g.len());
                    softmax_backward(d, &g, y, blocks, 1.0 / tau);
                }
                Op::NormalizeBlock { x, blocks } => {
                    let xin = &self.nodes[x.0].value;
                    let d = acc(&mut adj, *x, g.len());
                    let mut o = 0;
                    for &c in blocks.iter() {
                        let s: f64 = xin[o..o + c].iter().sum();
                        let dot: f64 = (o..o + c).map(|j| g[j] * y[j]).sum();
                        for j in o..o + c {
                            d[j] += (g[j] - dot) / s;
                        }
                        o += c;
                    }
                }
                Op::BinaryConcrete { pi, tau } => {
                    let pin = &self.nodes[pi.0].value;
                    let d = acc(&mut adj, *pi, g.len());
                    for ((d, gv), (&p, &s)) in d.iter_mut().zip(&g).zip(pin.iter().zip(y)) {
                        if p > PROB_FLOOR && p < 1.0 - PROB_FLOOR {
                            *d += gv * s * (1.0 - s) / tau * (1.0 / p + 1.0 / (1.0 - p));
                        }
                    }
                }
                Op::TwoClass(p) => {
                    let d = acc(&mut adj, *p, 1);
                    d[0] += g[1] - g[0];
                }
                Op::CrossEntropy { p, target } => {
                    let pin = &self.nodes[p.0].value;
                    let n = pin.len();
                    let d = acc(&mut adj, *p, n);
                    let pt = pin[*target];
                    if pt > PROB_FLOOR {
                        d[*target] -= g[0] / pt;
                    }
                }
                Op::GatedBlend { s, z, columns } => {
                    let (sv, zv) = (&self.nodes[s.0].value, &self.nodes[z.0].value);
                    let mut ds = vec![0.0; sv.len()];
                    let mut dz = vec![0.0; zv.len()];
                    for (col, &gc) in columns.iter().zip(&g) {
                        let Some(k) = col.gate else { continue };
                        let mix: f64 = col.terms.iter().map(|&(j, w)| w * zv[j]).sum();
                        ds[k] += gc * (mix - col.base);
                        for &(j, w) in &col.terms {
                            dz[j] += gc * sv[k] * w;
                        }
                    }
                    let d = acc(&mut adj, *s, ds.len());
                    d.iter_mut().zip(&ds).for_each(|(a, b)| *a += b);
                    let d = acc(&mut adj, *z, dz.len());
                    d.iter_mut().zip(&dz).for_each(|(a, b)| *a += b);
                }
            }
            adj[i] = Some(g);
        }
        Adjoints { grads: adj }
    }
}

/// Softmax Jacobian-vector product per block, scaled by `scale` (1/τ for
/// tempered softmax).
fn softmax_backward(d: &mut [f64], g: &[f64], y: &[f64], blocks: &[usize], scale: f64) {
    let mut o = 0;
    for &c in blocks {
        let dot: f64 = (o..o + c).map(|j| g[j] * y[j]).sum();
        for j in o..o + c {
            d[j] += scale * y[j] * (g[j] - dot);
        }
        o += c;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::ParamSet;

    #[test]
    fn dense_identity_and_hand_gradient() {
        let mut set = ParamSet::new();
        let w = set.add("w", &[2, 2], vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let b = set.add("b", &[2], vec![0.0, 0.0]).unwrap();
        let mut t = Tape::new();
        let x = t.leaf(vec![1.0, 2.0]);
        let y = t.dense(x, set.get(w), set.get(b), true).unwrap();
        assert_eq!(t.value(y), &[1.0, 2.0]);

        let mut set = ParamSet::new();
        let w = set.add("w", &[1, 1], vec![2.0]).unwrap();
        let b = set.add("b", &[1], vec![1.0]).unwrap();
        let mut t = Tape::new();
        let x = t.leaf(vec![3.0]);
        let y = t.dense(x, set.get(w), set.get(b), true).unwrap();
        assert_eq!(t.value(y), &[7.0]);
        let mut grads = Gradients::zeros_like(&set);
        let adj = t.backward(y, &mut grads);
        assert_eq!(grads.slots[w], vec![3.0]);
        assert_eq!(grads.slots[b], vec![1.0]);
        assert_eq!(adj.get(x, 1), vec![2.0]);
        assert_eq!(adj.get(y, 1), vec![1.0]);
    }

    #[test]
    fn frozen_dense_leaves_param_grads_alone() {
        let mut set = ParamSet::new();
        let w = set.add("w", &[1, 1], vec![2.0]).unwrap();
        let b = set.add("b", &[1], vec![1.0]).unwrap();
        let mut t = Tape::new();
        let x = t.leaf(vec![3.0]);
        let y = t.dense(x, set.get(w), set.get(b), false).unwrap();
        let mut grads = Gradients::zeros_like(&set);
        let adj = t.backward(y, &mut grads);
        assert_eq!(grads.slots[w], vec![0.0]);
        assert_eq!(adj.get(x, 1), vec![2.0]);
    }

    #[test]
    fn dense_rejects_shape_mismatch() {
        let mut set = ParamSet::new();
        let w = set.add("w", &[2, 3], vec![0.0; 6]).unwrap();
        let b = set.add("b", &[2], vec![0.0; 2]).unwrap();
        let mut t = Tape::new();
        let x = t.leaf(vec![1.0, 2.0]);
        assert!(matches!(
            t.dense(x, set.get(w), set.get(b), true),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn elementary_values() {
        let blocks = [3usize];
        let mut t = Tape::new();
        let x = t.leaf(vec![0.0, 0.0, 0.0]);
        let s = t.softmax_block(x, &blocks).unwrap();
        for &v in t.value(s) {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
        let z = t.leaf(vec![0.0]);
        let sg = t.sigmoid(z);
        assert_eq!(t.value(sg), &[0.5]);

        let pi = t.leaf(vec![0.5; 4]);
        let l1 = t.l1_norm(pi);
        assert_eq!(t.scalar(l1), 2.0);
        let adj = t.backward(l1, &mut Gradients::default());
        assert_eq!(adj.get(pi, 4), vec![1.0; 4]);
    }

    #[test]
    fn cross_entropy_values() {
        let mut t = Tape::new();
        let p = t.leaf(vec![0.5, 0.5]);
        let l = t.cross_entropy(p, 1).unwrap();
        assert!((t.scalar(l) - std::f64::consts::LN_2).abs() < 1e-12);
        let q = t.leaf(vec![0.9, 0.1]);
        let l = t.cross_entropy(q, 0).unwrap();
        assert!((t.scalar(l) - 0.105_360_515_657_826_3).abs() < 1e-12);
        let adj = t.backward(l, &mut Gradients::default());
        assert!((adj.get(q, 2)[0] + 1.0 / 0.9).abs() < 1e-12);
        // clamped below: finite loss, zero gradient
        let z = t.leaf(vec![1.0, 0.0]);
        let l = t.cross_entropy(z, 1).unwrap();
        assert!((t.scalar(l) - 1e12f64.ln()).abs() < 1e-9);
    }

    #[test]
    fn gumbel_softmax_edge_cases() {
        let blocks = [3usize];
        let mut t = Tape::new();
        let lp = t.leaf(vec![(1.0f64 / 3.0).ln(); 3]);
        let y = t.gumbel_softmax(lp, &[0.7; 3], 0.2, &blocks).unwrap();
        for &v in t.value(y) {
            assert!((v - 1.0 / 3.0).abs() < 1e-12);
        }
        let y = t
            .gumbel_softmax(lp, &[0.1, 0.5, -0.3], 0.01, &blocks)
            .unwrap();
        assert!(t.value(y).iter().copied().fold(0.0, f64::max) > 0.99);
        assert!(matches!(
            t.gumbel_softmax(lp, &[0.0; 3], 0.0, &blocks),
            Err(Error::Temperature(_))
        ));
        assert!(t.gumbel_softmax(lp, &[0.0; 2], 1.0, &blocks).is_err());
    }

    #[test]
    fn binary_concrete_edge_cases() {
        let mut t = Tape::new();
        let pi = t.leaf(vec![0.5]);
        let s = t.binary_concrete(pi, &[0.3], &[0.3], 0.2).unwrap();
        assert!((t.scalar(s) - 0.5).abs() < 1e-15);
        let s = t.binary_concrete(pi, &[0.1], &[0.4], 0.01).unwrap();
        let v = t.scalar(s);
        assert!(!(0.01..=0.99).contains(&v));
        assert!(matches!(
            t.binary_concrete(pi, &[0.0], &[0.0], -1.0),
            Err(Error::Temperature(_))
        ));
    }

    #[test]
    fn gated_blend_matches_update_rule() {
        let mut t = Tape::new();
        let s = t.leaf(vec![0.5]);
        let z = t.leaf(vec![0.0, 1.0, 0.0, 0.0]);
        let mids = [12.5, 37.5, 62.5, 87.5];
        let cols = vec![
            BlendColumn {
                gate: Some(0),
                base: 10.0,
                terms: mids.iter().copied().enumerate().collect(),
            },
            BlendColumn {
                gate: None,
                base: 4.0,
                terms: vec![],
            },
        ];
        let y = t.gated_blend(s, z, cols).unwrap();
        assert!((t.value(y)[0] - 23.75).abs() < 1e-12);
        assert_eq!(t.value(y)[1], 4.0);
    }

    #[test]
    fn backward_is_deterministic() {
        let blocks = [2usize, 3];
        let build = || {
            let mut t = Tape::new();
            let x = t.leaf(vec![0.3, -0.2, 1.0, 0.4, -0.7]);
            let s = t.softmax_block(x, &blocks).unwrap();
            let l = t.log(s);
            let g = t
                .gumbel_softmax(l, &[0.1, -0.4, 0.2, 0.9, -1.1], 0.2, &blocks)
                .unwrap();
            let m = t.mul(g, s).unwrap();
            let out = t.sum(m);
            let adj = t.backward(out, &mut Gradients::default());
            adj.get(x, 5)
        };
        let a = build();
        let b = build();
        assert_eq!(
            a.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            b.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
    }
}
