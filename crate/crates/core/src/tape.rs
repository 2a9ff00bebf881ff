//! Minimal reverse-mode autodiff over dense row-major matrices.
//!
//! The network stack here is small and fixed (shared MLPs, max-pooling
//! group reductions, fixed-weight interpolation, a handful of losses), so
//! the tape records an explicit op enum per node instead of closures.
//! Every op's backward pass is exercised against central finite
//! differences in the test suites.
//!
//! The scalar type is generic: `f32` for production training and
//! inference, `f64` for gradient verification.

use std::ops::{Add, AddAssign, Div, Mul, Neg, Sub};

/// Scalar abstraction for network compute.
pub trait Scalar:
    Copy
    + PartialOrd
    + std::fmt::Debug
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + AddAssign
    + Send
    + Sync
    + 'static
{
    const ZERO: Self;
    const ONE: Self;
    fn from_f64(x: f64) -> Self;
    fn to_f64(self) -> f64;
    fn exp(self) -> Self;
    fn ln(self) -> Self;
    fn sqrt(self) -> Self;
    fn is_finite_s(self) -> bool;
}

macro_rules! impl_scalar {
    ($t:ty) => {
        impl Scalar for $t {
            const ZERO: Self = 0.0;
            const ONE: Self = 1.0;
            fn from_f64(x: f64) -> Self {
                x as $t
            }
            fn to_f64(self) -> f64 {
                self as f64
            }
            fn exp(self) -> Self {
                self.exp()
            }
            fn ln(self) -> Self {
                self.ln()
            }
            fn sqrt(self) -> Self {
                self.sqrt()
            }
            fn is_finite_s(self) -> bool {
                self.is_finite()
            }
        }
    };
}

impl_scalar!(f32);
impl_scalar!(f64);

/// Handle to a tape node.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(pub(crate) usize);

enum Op<S: Scalar> {
    Leaf,
    /// y = x W + b; x is [r x i], w is [i x o], b is [1 x o].
    Linear { x: Var, w: Var, b: Option<Var> },
    Relu { x: Var },
    Sigmoid { x: Var },
    Exp { x: Var },
    /// y = c * x for a scalar constant c.
    Scale { x: Var, c: S },
    Add { a: Var, b: Var },
    /// y = x .* c elementwise with a constant buffer.
    MulConst { x: Var, c: Vec<S> },
    ConcatCols { parts: Vec<Var> },
    SliceCols { x: Var, start: usize },
    GatherRows { x: Var, idx: Vec<usize> },
    /// Rows of x are g contiguous groups of k; output is the per-group,
    /// per-channel max. `argmax` stores the winning row per output cell.
    GroupMaxPool { x: Var, argmax: Vec<usize> },
    /// out[d] = sum_j w[d][j] * x[idx[d][j]] with fixed weights.
    InterpRows { x: Var, idx: Vec<[usize; 3]>, w: Vec<[S; 3]> },
    /// Mean gated binary cross entropy over rows of p ([n x 1]), with
    /// probabilities clamped to [eps, 1-eps] before the logs.
    BceMean { p: Var, targets: Vec<S>, gates: Vec<S>, count: usize, eps: S },
    /// Mean over rows of the squared error summed across columns.
    MseMean { a: Var, target: Vec<S> },
    /// Mean over rows of KL(N(mu, e^logvar) || N(0, I)) summed across dims.
    KlNormalMean { mu: Var, logvar: Var },
}

struct Node<S: Scalar> {
    val: Vec<S>,
    rows: usize,
    cols: usize,
    op: Op<S>,
}

/// Gradients produced by [`Tape::backward`], indexed by `Var`.
pub struct Gradients<S: Scalar> {
    grads: Vec<Option<Vec<S>>>,
}

impl<S: Scalar> Gradients<S> {
    pub fn get(&self, v: Var) -> Option<&[S]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }
}

pub struct Tape<S: Scalar> {
    nodes: Vec<Node<S>>,
}

impl<S: Scalar> Default for Tape<S> {
    fn default() -> Self {
        Self::new()
    }
}

impl<S: Scalar> Tape<S> {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    fn push(&mut self, val: Vec<S>, rows: usize, cols: usize, op: Op<S>) -> Var {
        debug_assert_eq!(val.len(), rows * cols);
        self.nodes.push(Node { val, rows, cols, op });
        Var(self.nodes.len() - 1)
    }

    pub fn leaf(&mut self, val: Vec<S>, rows: usize, cols: usize) -> Var {
        self.push(val, rows, cols, Op::Leaf)
    }

    pub fn value(&self, v: Var) -> &[S] {
        &self.nodes[v.0].val
    }

    pub fn rows(&self, v: Var) -> usize {
        self.nodes[v.0].rows
    }

    pub fn cols(&self, v: Var) -> usize {
        self.nodes[v.0].cols
    }

    pub fn scalar_value(&self, v: Var) -> f64 {
        debug_assert_eq!(self.nodes[v.0].val.len(), 1);
        self.nodes[v.0].val[0].to_f64()
    }

    pub fn linear(&mut self, x: Var, w: Var, b: Option<Var>) -> Var {
        let (r, i) = (self.rows(x), self.cols(x));
        let (wi, o) = (self.rows(w), self.cols(w));
        assert_eq!(i, wi, "linear: x cols {i} != w rows {wi}");
        if let Some(b) = b {
            assert_eq!(self.cols(b), o);
        }
        let mut y = vec![S::ZERO; r * o];
        {
            let xv = &self.nodes[x.0].val;
            let wv = &self.nodes[w.0].val;
            for rr in 0..r {
                let yrow = &mut y[rr * o..(rr + 1) * o];
                if let Some(b) = b {
                    yrow.copy_from_slice(&self.nodes[b.0].val);
                }
                let xrow = &xv[rr * i..(rr + 1) * i];
                for (ii, &xij) in xrow.iter().enumerate() {
                    let wrow = &wv[ii * o..(ii + 1) * o];
                    for (yo, &wv_) in yrow.iter_mut().zip(wrow.iter()) {
                        *yo += xij * wv_;
                    }
                }
            }
        }
        self.push(y, r, o, Op::Linear { x, w, b })
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let (r, c) = (self.rows(x), self.cols(x));
        let y: Vec<S> = self.nodes[x.0]
            .val
            .iter()
            .map(|&v| if v > S::ZERO { v } else { S::ZERO })
            .collect();
        self.push(y, r, c, Op::Relu { x })
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let (r, c) = (self.rows(x), self.cols(x));
        let y: Vec<S> = self.nodes[x.0]
            .val
            .iter()
            .map(|&v| S::ONE / (S::ONE + (-v).exp()))
            .collect();
        self.push(y, r, c, Op::Sigmoid { x })
    }

    pub fn exp(&mut self, x: Var) -> Var {
        let (r, c) = (self.rows(x), self.cols(x));
        let y: Vec<S> = self.nodes[x.0].val.iter().map(|&v| v.exp()).collect();
        self.push(y, r, c, Op::Exp { x })
    }

    pub fn scale(&mut self, x: Var, c: f64) -> Var {
        let (r, cc) = (self.rows(x), self.cols(x));
        let cs = S::from_f64(c);
        let y: Vec<S> = self.nodes[x.0].val.iter().map(|&v| v * cs).collect();
        self.push(y, r, cc, Op::Scale { x, c: cs })
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        assert_eq!(self.rows(a), self.rows(b));
        assert_eq!(self.cols(a), self.cols(b));
        let (r, c) = (self.rows(a), self.cols(a));
        let y: Vec<S> = self.nodes[a.0]
            .val
            .iter()
            .zip(&self.nodes[b.0].val)
            .map(|(&x, &z)| x + z)
            .collect();
        self.push(y, r, c, Op::Add { a, b })
    }

    pub fn mul_const(&mut self, x: Var, c: Vec<S>) -> Var {
        let (r, cc) = (self.rows(x), self.cols(x));
        assert_eq!(c.len(), r * cc);
        let y: Vec<S> = self.nodes[x.0].val.iter().zip(&c).map(|(&a, &b)| a * b).collect();
        self.push(y, r, cc, Op::MulConst { x, c })
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty());
        let r = self.rows(parts[0]);
        for p in parts {
            assert_eq!(self.rows(*p), r, "concat_cols: row mismatch");
        }
        let c: usize = parts.iter().map(|p| self.cols(*p)).sum();
        let mut y = vec![S::ZERO; r * c];
        let mut off = 0;
        for p in parts {
            let pc = self.cols(*p);
            let pv = &self.nodes[p.0].val;
            for rr in 0..r {
                y[rr * c + off..rr * c + off + pc].copy_from_slice(&pv[rr * pc..(rr + 1) * pc]);
            }
            off += pc;
        }
        self.push(y, r, c, Op::ConcatCols { parts: parts.to_vec() })
    }

    pub fn slice_cols(&mut self, x: Var, start: usize, len: usize) -> Var {
        let (r, c) = (self.rows(x), self.cols(x));
        assert!(start + len <= c, "slice_cols: {start}+{len} > {c}");
        let mut y = vec![S::ZERO; r * len];
        for rr in 0..r {
            y[rr * len..(rr + 1) * len]
                .copy_from_slice(&self.nodes[x.0].val[rr * c + start..rr * c + start + len]);
        }
        self.push(y, r, len, Op::SliceCols { x, start })
    }

    pub fn gather_rows(&mut self, x: Var, idx: &[usize]) -> Var {
        let c = self.cols(x);
        let xr = self.rows(x);
        let mut y = vec![S::ZERO; idx.len() * c];
        for (o, &i) in idx.iter().enumerate() {
            assert!(i < xr, "gather_rows: index {i} out of {xr}");
            y[o * c..(o + 1) * c].copy_from_slice(&self.nodes[x.0].val[i * c..(i + 1) * c]);
        }
        self.push(y, idx.len(), c, Op::GatherRows { x, idx: idx.to_vec() })
    }

    pub fn group_max_pool(&mut self, x: Var, k: usize) -> Var {
        let (r, c) = (self.rows(x), self.cols(x));
        assert!(k > 0 && r % k == 0, "group_max_pool: rows {r} not divisible by k {k}");
        let g = r / k;
        let mut y = vec![S::ZERO; g * c];
        let mut argmax = vec![0usize; g * c];
        let xv = &self.nodes[x.0].val;
        for gg in 0..g {
            for cc in 0..c {
                let mut best = xv[(gg * k) * c + cc];
                let mut best_row = gg * k;
                for kk in 1..k {
                    let row = gg * k + kk;
                    let v = xv[row * c + cc];
                    if v > best {
                        best = v;
                        best_row = row;
                    }
                }
                y[gg * c + cc] = best;
                argmax[gg * c + cc] = best_row;
            }
        }
        self.push(y, g, c, Op::GroupMaxPool { x, argmax })
    }

    pub fn interp_rows(&mut self, x: Var, idx: Vec<[usize; 3]>, w: Vec<[f64; 3]>) -> Var {
        assert_eq!(idx.len(), w.len());
        let c = self.cols(x);
        let xv = &self.nodes[x.0].val;
        let ws: Vec<[S; 3]> = w
            .iter()
            .map(|t| [S::from_f64(t[0]), S::from_f64(t[1]), S::from_f64(t[2])])
            .collect();
        let mut y = vec![S::ZERO; idx.len() * c];
        for (d, (ix, wt)) in idx.iter().zip(&ws).enumerate() {
            for j in 0..3 {
                let src = &xv[ix[j] * c..(ix[j] + 1) * c];
                let wv = wt[j];
                for cc in 0..c {
                    y[d * c + cc] += wv * src[cc];
                }
            }
        }
        self.push(y, idx.len(), c, Op::InterpRows { x, idx, w: ws })
    }

    /// Gated mean BCE over the rows of `p` (shape [n x 1]). `gates` are 0/1
    /// row weights; `count` divides the sum (callers pass the gated count).
    pub fn bce_mean(&mut self, p: Var, targets: &[f64], gates: &[f64], eps: f64) -> Var {
        let n = self.rows(p);
        assert_eq!(self.cols(p), 1);
        assert_eq!(targets.len(), n);
        assert_eq!(gates.len(), n);
        let count = gates.iter().filter(|&&g| g != 0.0).count();
        assert!(count > 0, "bce_mean: empty gate (callers must handle zero-gated batches)");
        let eps_s = S::from_f64(eps);
        let one_m = S::ONE - eps_s;
        let ts: Vec<S> = targets.iter().map(|&t| S::from_f64(t)).collect();
        let gs: Vec<S> = gates.iter().map(|&g| S::from_f64(g)).collect();
        let mut acc = S::ZERO;
        for i in 0..n {
            if gates[i] == 0.0 {
                continue;
            }
            let mut pv = self.nodes[p.0].val[i];
            if pv < eps_s {
                pv = eps_s;
            }
            if pv > one_m {
                pv = one_m;
            }
            let t = ts[i];
            acc += -(t * pv.ln() + (S::ONE - t) * (S::ONE - pv).ln());
        }
        let val = acc / S::from_f64(count as f64);
        self.push(
            vec![val],
            1,
            1,
            Op::BceMean { p, targets: ts, gates: gs, count, eps: eps_s },
        )
    }

    /// Mean over rows of the squared error against a constant target,
    /// summed across columns.
    pub fn mse_mean(&mut self, a: Var, target: &[f64]) -> Var {
        let (r, c) = (self.rows(a), self.cols(a));
        assert_eq!(target.len(), r * c);
        let ts: Vec<S> = target.iter().map(|&t| S::from_f64(t)).collect();
        let mut acc = S::ZERO;
        for (av, tv) in self.nodes[a.0].val.iter().zip(&ts) {
            let d = *av - *tv;
            acc += d * d;
        }
        let val = acc / S::from_f64(r as f64);
        self.push(vec![val], 1, 1, Op::MseMean { a, target: ts })
    }

    /// Mean over rows of the closed-form KL(N(mu, e^logvar) || N(0, I)):
    /// 0.5 * sum_dims(mu^2 + e^lv - 1 - lv).
    pub fn kl_normal_mean(&mut self, mu: Var, logvar: Var) -> Var {
        let (r, c) = (self.rows(mu), self.cols(mu));
        assert_eq!((self.rows(logvar), self.cols(logvar)), (r, c));
        let half = S::from_f64(0.5);
        let mut acc = S::ZERO;
        for (m, lv) in self.nodes[mu.0].val.iter().zip(&self.nodes[logvar.0].val) {
            acc += half * (*m * *m + lv.exp() - S::ONE - *lv);
        }
        let val = acc / S::from_f64(r as f64);
        self.push(vec![val], 1, 1, Op::KlNormalMean { mu, logvar })
    }

    /// Reverse pass from a scalar root.
    pub fn backward(&self, root: Var) -> Gradients<S> {
        let mut grads: Vec<Option<Vec<S>>> = vec![None; self.nodes.len()];
        grads[root.0] = Some(vec![S::ONE; self.nodes[root.0].val.len()]);
        for id in (0..=root.0).rev() {
            let g = match grads[id].take() {
                Some(g) => g,
                None => continue,
            };
            self.backward_node(id, &g, &mut grads);
            grads[id] = Some(g);
        }
        Gradients { grads }
    }

    fn accumulate(grads: &mut [Option<Vec<S>>], v: Var, len: usize) -> &mut Vec<S> {
        grads[v.0].get_or_insert_with(|| vec![S::ZERO; len])
    }

    fn backward_node(&self, id: usize, gy: &[S], grads: &mut [Option<Vec<S>>]) {
        let node = &self.nodes[id];
        match &node.op {
            Op::Leaf => {}
            Op::Linear { x, w, b } => {
                let (r, i) = (self.rows(*x), self.cols(*x));
                let o = node.cols;
                let xv = &self.nodes[x.0].val;
                let wv = &self.nodes[w.0].val;
                {
                    let gx = Self::accumulate(grads, *x, r * i);
                    for rr in 0..r {
                        let gyr = &gy[rr * o..(rr + 1) * o];
                        let gxr = &mut gx[rr * i..(rr + 1) * i];
                        for ii in 0..i {
                            let wrow = &wv[ii * o..(ii + 1) * o];
                            let mut acc = S::ZERO;
                            for (gv, wv_) in gyr.iter().zip(wrow.iter()) {
                                acc += *gv * *wv_;
                            }
                            gxr[ii] += acc;
                        }
                    }
                }
                {
                    let gw = Self::accumulate(grads, *w, i * o);
                    for rr in 0..r {
                        let gyr = &gy[rr * o..(rr + 1) * o];
                        let xr = &xv[rr * i..(rr + 1) * i];
                        for (ii, &xij) in xr.iter().enumerate() {
                            let gwrow = &mut gw[ii * o..(ii + 1) * o];
                            for (gw_, gv) in gwrow.iter_mut().zip(gyr.iter()) {
                                *gw_ += xij * *gv;
                            }
                        }
                    }
                }
                if let Some(b) = b {
                    let gb = Self::accumulate(grads, *b, o);
                    for rr in 0..r {
                        for (gb_, gv) in gb.iter_mut().zip(&gy[rr * o..(rr + 1) * o]) {
                            *gb_ += *gv;
                        }
                    }
                }
            }
            Op::Relu { x } => {
                let gx = Self::accumulate(grads, *x, node.val.len());
                for (i, g) in gy.iter().enumerate() {
                    if self.nodes[x.0].val[i] > S::ZERO {
                        gx[i] += *g;
                    }
                }
            }
            Op::Sigmoid { x } => {
                let gx = Self::accumulate(grads, *x, node.val.len());
                for (i, g) in gy.iter().enumerate() {
                    let s = node.val[i];
                    gx[i] += *g * s * (S::ONE - s);
                }
            }
            Op::Exp { x } => {
                let gx = Self::accumulate(grads, *x, node.val.len());
                for (i, g) in gy.iter().enumerate() {
                    gx[i] += *g * node.val[i];
                }
            }
            Op::Scale { x, c } => {
                let gx = Self::accumulate(grads, *x, node.val.len());
                for (i, g) in gy.iter().enumerate() {
                    gx[i] += *g * *c;
                }
            }
            Op::Add { a, b } => {
                {
                    let ga = Self::accumulate(grads, *a, node.val.len());
                    for (i, g) in gy.iter().enumerate() {
                        ga[i] += *g;
                    }
                }
                let gb = Self::accumulate(grads, *b, node.val.len());
                for (i, g) in gy.iter().enumerate() {
                    gb[i] += *g;
                }
            }
            Op::MulConst { x, c } => {
                let gx = Self::accumulate(grads, *x, node.val.len());
                for (i, g) in gy.iter().enumerate() {
                    gx[i] += *g * c[i];
                }
            }
            Op::ConcatCols { parts } => {
                let r = node.rows;
                let c = node.cols;
                let mut off = 0;
                for p in parts {
                    let pc = self.cols(*p);
                    let gp = Self::accumulate(grads, *p, r * pc);
                    for rr in 0..r {
                        for cc in 0..pc {
                            gp[rr * pc + cc] += gy[rr * c + off + cc];
                        }
                    }
                    off += pc;
                }
            }
            Op::SliceCols { x, start } => {
                let len = node.cols;
                let xc = self.cols(*x);
                let gx = Self::accumulate(grads, *x, self.nodes[x.0].val.len());
                for rr in 0..node.rows {
                    for cc in 0..len {
                        gx[rr * xc + start + cc] += gy[rr * len + cc];
                    }
                }
            }
            Op::GatherRows { x, idx } => {
                let c = node.cols;
                let gx = Self::accumulate(grads, *x, self.nodes[x.0].val.len());
                for (o, &i) in idx.iter().enumerate() {
                    for cc in 0..c {
                        gx[i * c + cc] += gy[o * c + cc];
                    }
                }
            }
            Op::GroupMaxPool { x, argmax } => {
                let c = node.cols;
                let gx = Self::accumulate(grads, *x, self.nodes[x.0].val.len());
                for gg in 0..node.rows {
                    for cc in 0..c {
                        let row = argmax[gg * c + cc];
                        gx[row * c + cc] += gy[gg * c + cc];
                    }
                }
            }
            Op::InterpRows { x, idx, w } => {
                let c = node.cols;
                let gx = Self::accumulate(grads, *x, self.nodes[x.0].val.len());
                for (d, (ix, wt)) in idx.iter().zip(w).enumerate() {
                    for j in 0..3 {
                        for cc in 0..c {
                            gx[ix[j] * c + cc] += wt[j] * gy[d * c + cc];
                        }
                    }
                }
            }
            Op::BceMean { p, targets, gates, count, eps } => {
                let g0 = gy[0];
                let inv = S::ONE / S::from_f64(*count as f64);
                let one_m = S::ONE - *eps;
                let gp = Self::accumulate(grads, *p, self.nodes[p.0].val.len());
                for i in 0..targets.len() {
                    if gates[i].to_f64() == 0.0 {
                        continue;
                    }
                    let pv = self.nodes[p.0].val[i];
                    // clamp derivative: zero outside the clamp interval
                    if pv < *eps || pv > one_m {
                        continue;
                    }
                    let t = targets[i];
                    gp[i] += g0 * inv * (pv - t) / (pv * (S::ONE - pv));
                }
            }
            Op::MseMean { a, target } => {
                let g0 = gy[0];
                let r = self.rows(*a);
                let inv = S::ONE / S::from_f64(r as f64);
                let two = S::from_f64(2.0);
                let ga = Self::accumulate(grads, *a, self.nodes[a.0].val.len());
                for (i, t) in target.iter().enumerate() {
                    ga[i] += g0 * two * (self.nodes[a.0].val[i] - *t) * inv;
                }
            }
            Op::KlNormalMean { mu, logvar } => {
                let g0 = gy[0];
                let r = self.rows(*mu);
                let inv = S::ONE / S::from_f64(r as f64);
                let half = S::from_f64(0.5);
                {
                    let gm = Self::accumulate(grads, *mu, self.nodes[mu.0].val.len());
                    for (i, m) in self.nodes[mu.0].val.iter().enumerate() {
                        gm[i] += g0 * *m * inv;
                    }
                }
                let gl = Self::accumulate(grads, *logvar, self.nodes[logvar.0].val.len());
                for (i, lv) in self.nodes[logvar.0].val.iter().enumerate() {
                    gl[i] += g0 * half * (lv.exp() - S::ONE) * inv;
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Central-difference check of d(root)/d(leaf) for every leaf entry.
    fn fd_check(build: impl Fn(&mut Tape<f64>, &[Vec<f64>]) -> Var, leaves: Vec<Vec<f64>>, shapes: Vec<(usize, usize)>) {
        let mut tape = Tape::<f64>::new();
        let vars: Vec<Var> = leaves
            .iter()
            .zip(&shapes)
            .map(|(l, (r, c))| tape.leaf(l.clone(), *r, *c))
            .collect();
        let root = build(&mut tape, &leaves);
        let grads = tape.backward(root);
        let h = 1e-5;
        for (li, leaf) in leaves.iter().enumerate() {
            let analytic = grads.get(vars[li]).expect("leaf should have grad");
            for ei in 0..leaf.len() {
                let eval = |delta: f64| {
                    let mut tape = Tape::<f64>::new();
                    let mut pert = leaves.clone();
                    pert[li][ei] += delta;
                    for (l, (r, c)) in pert.iter().zip(&shapes) {
                        tape.leaf(l.clone(), *r, *c);
                    }
                    let root = build(&mut tape, &pert);
                    tape.scalar_value(root)
                };
                let num = (eval(h) - eval(-h)) / (2.0 * h);
                let a = analytic[ei];
                let denom = num.abs().max(a.abs()).max(1e-8);
                assert!(
                    (num - a).abs() / denom < 1e-4,
                    "leaf {li} entry {ei}: analytic {a} vs fd {num}"
                );
            }
        }
    }

    #[test]
    fn fd_linear_relu_sigmoid_bce() {
        let x = vec![0.3, -0.8, 1.2, 0.5, 0.9, -0.4];
        let w = vec![0.2, -0.5, 0.7, 0.1, -0.3, 0.4];
        let b = vec![0.05, -0.1];
        fd_check(
            |t, _| {
                let x = Var(0);
                let w = Var(1);
                let b = Var(2);
                let h = t.linear(x, w, Some(b));
                let h = t.relu(h);
                let w2 = t.leaf(vec![0.3, -0.6], 2, 1);
                let l = t.linear(h, w2, None);
                let p = t.sigmoid(l);
                t.bce_mean(p, &[1.0, 0.0], &[1.0, 1.0], 1e-7)
            },
            vec![x, w, b],
            vec![(2, 3), (3, 2), (1, 2)],
        );
    }

    #[test]
    fn fd_groupmax_gather_interp_concat() {
        let feats = vec![0.5, 1.0, -0.2, 0.7, 0.1, -0.9, 1.3, 0.2];
        fd_check(
            |t, _| {
                let x = Var(0); // 4 rows x 2 cols
                let g = t.gather_rows(x, &[0, 2, 1, 3]);
                let m = t.group_max_pool(g, 2); // 2 rows
                let i = t.interp_rows(
                    m,
                    vec![[0, 1, 1], [1, 0, 0]],
                    vec![[0.2, 0.5, 0.3], [0.9, 0.05, 0.05]],
                );
                let cat = t.concat_cols(&[i, m]);
                let w = t.leaf(vec![0.3, -0.2, 0.8, 0.4], 4, 1);
                let y = t.linear(cat, w, None);
                let p = t.sigmoid(y);
                t.bce_mean(p, &[1.0, 0.0], &[1.0, 1.0], 1e-7)
            },
            vec![feats],
            vec![(4, 2)],
        );
    }

    #[test]
    fn fd_vae_style_losses() {
        let mu = vec![0.4, -0.7, 0.2, 0.9];
        let lv = vec![-0.3, 0.5, 0.0, -1.0];
        let eps = vec![0.3, -1.2, 0.8, 0.05];
        fd_check(
            move |t, _| {
                let mu = Var(0);
                let lv = Var(1);
                let half_lv = t.scale(lv, 0.5);
                let std = t.exp(half_lv);
                let noise = t.mul_const(std, eps.iter().map(|&e| e).collect());
                let z = t.add(mu, noise);
                let recon = t.mse_mean(z, &[0.1, 0.2, -0.3, 0.4]);
                let kl = t.kl_normal_mean(mu, lv);
                let klw = t.scale(kl, 0.01);
                t.add(recon, klw)
            },
            vec![mu, lv],
            vec![(2, 2), (2, 2)],
        );
    }

    #[test]
    fn bce_half_is_ln2_and_clamped_losses_finite() {
        let mut t = Tape::<f64>::new();
        let p = t.leaf(vec![0.5, 0.5], 2, 1);
        let l = t.bce_mean(p, &[1.0, 0.0], &[1.0, 1.0], 1e-7);
        assert!((t.scalar_value(l) - std::f64::consts::LN_2).abs() < 1e-12);

        let mut t = Tape::<f64>::new();
        let p = t.leaf(vec![1.0], 1, 1);
        let l = t.bce_mean(p, &[1.0], &[1.0], 1e-7);
        let v = t.scalar_value(l);
        assert!(v.is_finite() && v <= 1.2e-7);
    }

    #[test]
    fn kl_of_standard_normal_is_zero() {
        let mut t = Tape::<f64>::new();
        let mu = t.leaf(vec![0.0; 4], 1, 4);
        let lv = t.leaf(vec![0.0; 4], 1, 4);
        let kl = t.kl_normal_mean(mu, lv);
        assert!(t.scalar_value(kl).abs() < 1e-15);
    }

    #[test]
    fn group_max_pool_permutation_invariant_values() {
        let mut t = Tape::<f32>::new();
        let x = t.leaf(vec![1.0, -2.0, 0.5, 3.0, -1.0, 0.0], 3, 2);
        let g1 = t.gather_rows(x, &[0, 1, 2]);
        let m1 = t.group_max_pool(g1, 3);
        let g2 = t.gather_rows(x, &[2, 0, 1]);
        let m2 = t.group_max_pool(g2, 3);
        assert_eq!(t.value(m1), t.value(m2));
    }
}
