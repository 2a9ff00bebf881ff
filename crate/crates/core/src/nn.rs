//! Parameter storage, initialization, MLP assembly and the Adam optimizer.

use crate::error::{Error, Result};
use crate::math::derive_seed;
use crate::tape::{Scalar, Tape, Var};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeMap;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParamId(pub(crate) usize);

/// Flat store of named parameter matrices. Names are stable and ordered,
/// which keeps checkpoints and gradient accumulation deterministic.
pub struct ParamStore<S: Scalar> {
    names: Vec<String>,
    shapes: Vec<(usize, usize)>,
    values: Vec<Vec<S>>,
    by_name: BTreeMap<String, usize>,
}

impl<S: Scalar> Default for ParamStore<S> {
    fn default() -> Self {
        Self::new()
    }
}

impl<S: Scalar> ParamStore<S> {
    pub fn new() -> Self {
        ParamStore {
            names: Vec::new(),
            shapes: Vec::new(),
            values: Vec::new(),
            by_name: BTreeMap::new(),
        }
    }

    pub fn add(&mut self, name: &str, rows: usize, cols: usize, values: Vec<S>) -> ParamId {
        assert_eq!(values.len(), rows * cols, "param {name} shape mismatch");
        assert!(
            !self.by_name.contains_key(name),
            "duplicate parameter name {name}"
        );
        let id = self.values.len();
        self.names.push(name.to_string());
        self.shapes.push((rows, cols));
        self.values.push(values);
        self.by_name.insert(name.to_string(), id);
        ParamId(id)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn shape(&self, id: ParamId) -> (usize, usize) {
        self.shapes[id.0]
    }

    pub fn values(&self, id: ParamId) -> &[S] {
        &self.values[id.0]
    }

    pub fn values_mut(&mut self, id: ParamId) -> &mut [S] {
        &mut self.values[id.0]
    }

    pub fn id_of(&self, name: &str) -> Option<ParamId> {
        self.by_name.get(name).copied().map(ParamId)
    }

    pub fn iter_ids(&self) -> impl Iterator<Item = ParamId> + '_ {
        (0..self.values.len()).map(ParamId)
    }

    /// Export as (name, rows, cols, f32 data) tuples in insertion order.
    pub fn export(&self) -> Vec<(String, usize, usize, Vec<f32>)> {
        (0..self.values.len())
            .map(|i| {
                (
                    self.names[i].clone(),
                    self.shapes[i].0,
                    self.shapes[i].1,
                    self.values[i].iter().map(|v| v.to_f64() as f32).collect(),
                )
            })
            .collect()
    }

    /// Overwrite values from exported arrays; shapes and names must match.
    pub fn import(&mut self, arrays: &[(String, usize, usize, Vec<f32>)]) -> Result<()> {
        for (name, rows, cols, data) in arrays {
            let id = self
                .id_of(name)
                .ok_or_else(|| Error::Checkpoint(format!("unknown parameter '{name}'")))?;
            if self.shape(id) != (*rows, *cols) {
                return Err(Error::Checkpoint(format!(
                    "parameter '{name}' shape mismatch: store {:?}, file ({rows}, {cols})",
                    self.shape(id)
                )));
            }
            let dst = self.values_mut(id);
            for (d, s) in dst.iter_mut().zip(data) {
                *d = S::from_f64(*s as f64);
            }
        }
        Ok(())
    }
}

/// Register a parameter as a tape leaf; returns the leaf var.
pub fn param_var<S: Scalar>(tape: &mut Tape<S>, store: &ParamStore<S>, id: ParamId) -> Var {
    let (r, c) = store.shape(id);
    tape.leaf(store.values(id).to_vec(), r, c)
}

/// Uniform Glorot initialization for a rows x cols matrix.
pub fn glorot_init<S: Scalar>(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Vec<S> {
    let lim = (6.0 / (rows + cols) as f64).sqrt();
    (0..rows * cols)
        .map(|_| S::from_f64(rng.random_range(-lim..lim)))
        .collect()
}

/// Output activation of an MLP.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutAct {
    None,
    Relu,
    Sigmoid,
}

/// A plain MLP: Linear + ReLU on every hidden layer, configurable output
/// activation.
#[derive(Debug, Clone)]
pub struct Mlp {
    pub layers: Vec<(ParamId, ParamId)>,
    pub out_act: OutAct,
}

impl Mlp {
    /// Create parameters for an MLP mapping `in_dim` through `widths`.
    /// Hidden biases start small and random (a bias of exactly zero parks
    /// the all-zero relative-coordinate rows of set abstraction precisely
    /// on the ReLU kink, where subgradients and finite differences
    /// disagree).
    pub fn new<S: Scalar>(
        store: &mut ParamStore<S>,
        name: &str,
        in_dim: usize,
        widths: &[usize],
        out_act: OutAct,
        seed: u64,
    ) -> Mlp {
        Self::build(store, name, in_dim, widths, out_act, seed, false)
    }

    /// Like [`Mlp::new`] but with the final layer zero-initialized, so
    /// sigmoid heads start at exactly 0.5.
    pub fn new_zero_final<S: Scalar>(
        store: &mut ParamStore<S>,
        name: &str,
        in_dim: usize,
        widths: &[usize],
        out_act: OutAct,
        seed: u64,
    ) -> Mlp {
        Self::build(store, name, in_dim, widths, out_act, seed, true)
    }

    fn build<S: Scalar>(
        store: &mut ParamStore<S>,
        name: &str,
        in_dim: usize,
        widths: &[usize],
        out_act: OutAct,
        seed: u64,
        zero_final: bool,
    ) -> Mlp {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, crate::math::fnv1a64(name.as_bytes())));
        let mut layers = Vec::new();
        let mut prev = in_dim;
        for (i, &w) in widths.iter().enumerate() {
            let last = i + 1 == widths.len();
            let (wv, bv) = if last && zero_final {
                (vec![S::ZERO; prev * w], vec![S::ZERO; w])
            } else {
                let wv = glorot_init(prev, w, &mut rng);
                let bv = (0..w)
                    .map(|_| S::from_f64(rng.random_range(-0.05..0.05)))
                    .collect();
                (wv, bv)
            };
            let wid = store.add(&format!("{name}.l{i}.w"), prev, w, wv);
            let bid = store.add(&format!("{name}.l{i}.b"), 1, w, bv);
            layers.push((wid, bid));
            prev = w;
        }
        Mlp { layers, out_act }
    }

    pub fn out_dim<S: Scalar>(&self, store: &ParamStore<S>) -> usize {
        store.shape(self.layers.last().expect("mlp has layers").0).1
    }

    pub fn forward<S: Scalar>(&self, tape: &mut Tape<S>, store: &ParamStore<S>, mut x: Var) -> Var {
        let n = self.layers.len();
        for (i, (w, b)) in self.layers.iter().enumerate() {
            let wv = param_var(tape, store, *w);
            let bv = param_var(tape, store, *b);
            x = tape.linear(x, wv, Some(bv));
            let last = i + 1 == n;
            x = match (last, self.out_act) {
                (false, _) => tape.relu(x),
                (true, OutAct::None) => x,
                (true, OutAct::Relu) => tape.relu(x),
                (true, OutAct::Sigmoid) => tape.sigmoid(x),
            };
        }
        x
    }

    /// Tape leaf vars registered by the last `forward` are not tracked here;
    /// trainers rebuild the param-leaf mapping per record via
    /// [`ForwardCtx`].
    pub fn param_ids(&self) -> impl Iterator<Item = ParamId> + '_ {
        self.layers.iter().flat_map(|(w, b)| [*w, *b])
    }
}

/// Tracks which tape leaf corresponds to which parameter for one forward
/// build, so gradients can be pulled back into a [`GradAccum`].
pub struct ForwardCtx {
    pub leaves: Vec<(ParamId, Var)>,
}

impl ForwardCtx {
    pub fn new() -> Self {
        ForwardCtx { leaves: Vec::new() }
    }
}

impl Default for ForwardCtx {
    fn default() -> Self {
        Self::new()
    }
}

/// Like [`Mlp::forward`] but records parameter leaves into `ctx`.
pub fn mlp_forward_tracked<S: Scalar>(
    mlp: &Mlp,
    tape: &mut Tape<S>,
    store: &ParamStore<S>,
    ctx: &mut ForwardCtx,
    mut x: Var,
) -> Var {
    let n = mlp.layers.len();
    for (i, (w, b)) in mlp.layers.iter().enumerate() {
        let wv = param_var(tape, store, *w);
        let bv = param_var(tape, store, *b);
        ctx.leaves.push((*w, wv));
        ctx.leaves.push((*b, bv));
        x = tape.linear(x, wv, Some(bv));
        let last = i + 1 == n;
        x = match (last, mlp.out_act) {
            (false, _) => tape.relu(x),
            (true, OutAct::None) => x,
            (true, OutAct::Relu) => tape.relu(x),
            (true, OutAct::Sigmoid) => tape.sigmoid(x),
        };
    }
    x
}

/// Gradient accumulator in f64, indexed like the store. Accumulation order
/// is fixed by the caller, keeping training bit-deterministic.
pub struct GradAccum {
    grads: Vec<Option<Vec<f64>>>,
}

impl GradAccum {
    pub fn new<S: Scalar>(store: &ParamStore<S>) -> Self {
        GradAccum { grads: vec![None; store.len()] }
    }

    pub fn zero(&mut self) {
        for g in &mut self.grads {
            if let Some(g) = g {
                for v in g.iter_mut() {
                    *v = 0.0;
                }
            }
        }
    }

    pub fn add_scaled<S: Scalar>(
        &mut self,
        tape: &Tape<S>,
        grads: &crate::tape::Gradients<S>,
        ctx: &ForwardCtx,
        scale: f64,
    ) {
        for (pid, var) in &ctx.leaves {
            if let Some(g) = grads.get(*var) {
                let slot = self.grads[pid.0].get_or_insert_with(|| vec![0.0; g.len()]);
                for (s, v) in slot.iter_mut().zip(g) {
                    *s += v.to_f64() * scale;
                }
            }
        }
        let _ = tape;
    }

    pub fn get(&self, id: ParamId) -> Option<&[f64]> {
        self.grads[id.0].as_deref()
    }

    pub fn max_abs(&self) -> f64 {
        self.grads
            .iter()
            .flatten()
            .flat_map(|g| g.iter())
            .fold(0.0f64, |m, v| m.max(v.abs()))
    }
}

/// Adam with f64 moment buffers regardless of the compute scalar.
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    t: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new<S: Scalar>(store: &ParamStore<S>, lr: f64) -> Self {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: (0..store.len()).map(|_| Vec::new()).collect(),
            v: (0..store.len()).map(|_| Vec::new()).collect(),
        }
    }

    /// Apply one update to the listed parameters. Parameters without an
    /// accumulated gradient are left untouched (that is how encoder
    /// freezing works in stage 2).
    pub fn step<S: Scalar>(
        &mut self,
        store: &mut ParamStore<S>,
        grads: &GradAccum,
        trainable: &[ParamId],
    ) {
        self.t += 1;
        let b1t = 1.0 - self.beta1.powi(self.t as i32);
        let b2t = 1.0 - self.beta2.powi(self.t as i32);
        for pid in trainable {
            let g = match grads.get(*pid) {
                Some(g) => g,
                None => continue,
            };
            let m = &mut self.m[pid.0];
            let v = &mut self.v[pid.0];
            if m.is_empty() {
                m.resize(g.len(), 0.0);
                v.resize(g.len(), 0.0);
            }
            let vals = store.values_mut(*pid);
            for i in 0..g.len() {
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g[i];
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g[i] * g[i];
                let mhat = m[i] / b1t;
                let vhat = v[i] / b2t;
                let delta = self.lr * mhat / (vhat.sqrt() + self.eps);
                vals[i] = S::from_f64(vals[i].to_f64() - delta);
            }
        }
    }
}
