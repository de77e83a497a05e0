//! Linear decoder, per-action affine+tanh latent dynamics, the sequence loss
//! and its analytic subgradients.
//!
//! For a sequence of observations `o_t`, actions `a_t` and latents `z_t` the
//! loss is
//!
//! ```text
//! L = sum_t D(W z_t + b - o_t) + sum_{t<T} D(tanh(A[a_t] z_t + c[a_t]) - z_{t+1}) + lambda |W|_F^2
//! ```
//!
//! where `D` is the L1 norm by default (squared L2 optionally).

use std::fmt;

use rand::Rng;

use crate::env::{Action, Trajectory};
use crate::error::{Error, Result};

/// Dense row-major matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::Shape("ragged matrix rows".into()));
        }
        Ok(Matrix {
            rows: rows.len(),
            cols,
            data: rows.concat(),
        })
    }

    pub fn random<R: Rng + ?Sized>(rows: usize, cols: usize, scale: f64, rng: &mut R) -> Self {
        Matrix {
            rows,
            cols,
            data: (0..rows * cols).map(|_| rng.gen_range(-scale..=scale)).collect(),
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// `out = self * x + bias`
    #[inline]
    pub fn affine_into(&self, x: &[f64], bias: &[f64], out: &mut [f64]) {
        for ((row, o), b) in self.data.chunks_exact(self.cols).zip(out.iter_mut()).zip(bias) {
            *o = dot(row, x) + b;
        }
    }

    /// `out += self^T * g`
    #[inline]
    pub fn add_transpose_mul(&self, g: &[f64], out: &mut [f64]) {
        for (row, &gi) in self.data.chunks_exact(self.cols).zip(g) {
            if gi != 0.0 {
                for (o, r) in out.iter_mut().zip(row) {
                    *o += r * gi;
                }
            }
        }
    }

    /// `self += g * x^T`
    #[inline]
    pub fn add_outer(&mut self, g: &[f64], x: &[f64]) {
        for (row, &gi) in self.data.chunks_exact_mut(self.cols).zip(g) {
            if gi != 0.0 {
                for (r, xj) in row.iter_mut().zip(x) {
                    *r += gi * xj;
                }
            }
        }
    }

    pub fn frobenius_sq(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Discrepancy measure used for both loss terms.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Delta {
    #[default]
    L1,
    /// Squared Euclidean distance.
    L2,
}

impl Delta {
    #[inline]
    fn value(self, r: f64) -> f64 {
        match self {
            Delta::L1 => r.abs(),
            Delta::L2 => r * r,
        }
    }

    /// Subgradient with respect to the residual; `sign(0) = 0` for L1.
    #[inline]
    fn slope(self, r: f64) -> f64 {
        match self {
            Delta::L1 => {
                if r > 0.0 {
                    1.0
                } else if r < 0.0 {
                    -1.0
                } else {
                    0.0
                }
            }
            Delta::L2 => 2.0 * r,
        }
    }
}

impl fmt::Display for Delta {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Delta::L1 => "l1",
            Delta::L2 => "l2",
        })
    }
}

impl std::str::FromStr for Delta {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "l1" => Ok(Delta::L1),
            "l2" => Ok(Delta::L2),
            _ => Err(Error::Config(format!("unknown delta `{s}` (expected l1 or l2)"))),
        }
    }
}

/// Affine decoder `z -> W z + b` with an L2 penalty on `W`.
#[derive(Clone, Debug, PartialEq)]
pub struct DecoderParams {
    pub w: Matrix,
    pub b: Vec<f64>,
    pub lambda: f64,
}

impl DecoderParams {
    pub fn obs_dim(&self) -> usize {
        self.w.rows()
    }

    pub fn latent_dim(&self) -> usize {
        self.w.cols()
    }

    pub fn decode(&self, z: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.obs_dim()];
        self.w.affine_into(z, &self.b, &mut out);
        out
    }
}

/// `z' = tanh(A z + c)` for one action.
#[derive(Clone, Debug, PartialEq)]
pub struct AffineTanh {
    pub a: Matrix,
    pub c: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DynamicsParams {
    pub maps: [AffineTanh; Action::COUNT],
}

impl DynamicsParams {
    pub fn latent_dim(&self) -> usize {
        self.maps[0].c.len()
    }

    #[inline]
    pub fn apply_into(&self, z: &[f64], a: Action, out: &mut [f64]) {
        let map = &self.maps[a.index()];
        map.a.affine_into(z, &map.c, out);
        for v in out.iter_mut() {
            *v = v.tanh();
        }
    }

    pub fn apply(&self, z: &[f64], a: Action) -> Vec<f64> {
        let mut out = vec![0.0; self.latent_dim()];
        self.apply_into(z, a, &mut out);
        out
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    pub decoder: DecoderParams,
    pub dynamics: DynamicsParams,
    pub delta: Delta,
}

impl Model {
    pub fn new(decoder: DecoderParams, dynamics: DynamicsParams) -> Result<Self> {
        let n = decoder.latent_dim();
        if decoder.b.len() != decoder.obs_dim() {
            return Err(Error::Shape("decoder bias length".into()));
        }
        if decoder.lambda < 0.0 || !decoder.lambda.is_finite() {
            return Err(Error::Config("lambda must be a non-negative number".into()));
        }
        for m in &dynamics.maps {
            if m.a.rows() != n || m.a.cols() != n || m.c.len() != n {
                return Err(Error::Shape(format!("dynamics map is not {n}x{n}")));
            }
        }
        Ok(Model {
            decoder,
            dynamics,
            delta: Delta::L1,
        })
    }

    /// All parameters zero.
    pub fn zeros(n: usize, m: usize, lambda: f64) -> Self {
        let map = AffineTanh {
            a: Matrix::zeros(n, n),
            c: vec![0.0; n],
        };
        Model {
            decoder: DecoderParams {
                w: Matrix::zeros(m, n),
                b: vec![0.0; m],
                lambda,
            },
            dynamics: DynamicsParams {
                maps: [map.clone(), map.clone(), map],
            },
            delta: Delta::L1,
        }
    }

    /// Every parameter drawn uniformly from `[-scale, scale]`.
    pub fn random<R: Rng + ?Sized>(n: usize, m: usize, lambda: f64, scale: f64, rng: &mut R) -> Self {
        let mut model = Model::zeros(n, m, lambda);
        model.decoder.w = Matrix::random(m, n, scale, rng);
        model.decoder.b = (0..m).map(|_| rng.gen_range(-scale..=scale)).collect();
        for map in &mut model.dynamics.maps {
            map.a = Matrix::random(n, n, scale, rng);
            map.c = (0..n).map(|_| rng.gen_range(-scale..=scale)).collect();
        }
        model
    }

    pub fn latent_dim(&self) -> usize {
        self.decoder.latent_dim()
    }

    pub fn obs_dim(&self) -> usize {
        self.decoder.obs_dim()
    }

    pub fn decode(&self, z: &[f64]) -> Vec<f64> {
        self.decoder.decode(z)
    }

    pub fn dynamics(&self, z: &[f64], a: Action) -> Vec<f64> {
        self.dynamics.apply(z, a)
    }

    pub fn regularizer(&self) -> f64 {
        self.decoder.lambda * self.decoder.w.frobenius_sq()
    }

    /// Flat view of every parameter in a fixed order: W, b, then (A, c) per action.
    pub fn params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        out.extend_from_slice(self.decoder.w.as_slice());
        out.extend_from_slice(&self.decoder.b);
        for map in &self.dynamics.maps {
            out.extend_from_slice(map.a.as_slice());
            out.extend_from_slice(&map.c);
        }
        out
    }

    pub fn set_params(&mut self, flat: &[f64]) {
        assert_eq!(flat.len(), self.param_count());
        let mut rest = flat;
        let mut take = |dst: &mut [f64]| {
            let (head, tail) = rest.split_at(dst.len());
            dst.copy_from_slice(head);
            rest = tail;
        };
        take(self.decoder.w.as_mut_slice());
        take(&mut self.decoder.b);
        for map in &mut self.dynamics.maps {
            take(map.a.as_mut_slice());
            take(&mut map.c);
        }
    }

    pub fn param_count(&self) -> usize {
        let n = self.latent_dim();
        let m = self.obs_dim();
        m * n + m + Action::COUNT * (n * n + n)
    }
}

/// Borrowed observation/action sequence.
#[derive(Clone, Copy, Debug)]
pub struct Seq<'a> {
    pub obs: &'a [f64],
    pub actions: &'a [Action],
}

impl<'a> Seq<'a> {
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }
}

impl<'a> From<&'a Trajectory> for Seq<'a> {
    fn from(t: &'a Trajectory) -> Self {
        Seq {
            obs: t.observations(),
            actions: t.actions(),
        }
    }
}

/// Latent sequence aligned with a trajectory, stored row-major (`n` per step).
#[derive(Clone, Debug, PartialEq)]
pub struct LatentTrajectory {
    pub n: usize,
    pub z: Vec<f64>,
}

impl LatentTrajectory {
    pub fn zeros(n: usize, len: usize) -> Self {
        LatentTrajectory {
            n,
            z: vec![0.0; n * len],
        }
    }

    pub fn random<R: Rng + ?Sized>(n: usize, len: usize, scale: f64, rng: &mut R) -> Self {
        LatentTrajectory {
            n,
            z: (0..n * len).map(|_| rng.gen_range(-scale..=scale)).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.z.len() / self.n
    }

    pub fn is_empty(&self) -> bool {
        self.z.is_empty()
    }

    pub fn get(&self, t: usize) -> &[f64] {
        &self.z[t * self.n..(t + 1) * self.n]
    }

    pub fn last(&self) -> &[f64] {
        self.get(self.len() - 1)
    }

    pub fn is_finite(&self) -> bool {
        self.z.iter().all(|v| v.is_finite())
    }
}

/// Parameter gradient laid out like [`Model::params`].
pub type ParamGrad = Vec<f64>;

/// Full gradient of the loss.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradient {
    pub latents: Vec<f64>,
    pub params: ParamGrad,
}

fn check_alignment(model: &Model, seq: Seq<'_>, zs: &[f64]) {
    let n = model.latent_dim();
    let m = model.obs_dim();
    assert_eq!(seq.obs.len(), m * seq.len(), "observation dimension does not match the decoder");
    assert_eq!(zs.len(), n * seq.len(), "latents are not aligned with the trajectory");
}

/// Loss and optional gradients for one sequence, without the regularizer.
///
/// Gradients are accumulated into the provided buffers. `latent_grad` must
/// have the same layout as `zs`; `param_grad` the layout of [`Model::params`].
pub fn accumulate(
    model: &Model,
    seq: Seq<'_>,
    zs: &[f64],
    mut latent_grad: Option<&mut [f64]>,
    mut param_grad: Option<&mut [f64]>,
) -> f64 {
    check_alignment(model, seq, zs);
    let n = model.latent_dim();
    let m = model.obs_dim();
    let delta = model.delta;
    let w = &model.decoder.w;
    let len = seq.len();
    let dyn_offset = m * n + m;

    let mut recon = vec![0.0; m];
    let mut g_obs = vec![0.0; m];
    let mut pred = vec![0.0; n];
    let mut g_pre = vec![0.0; n];
    let mut total = 0.0;

    for t in 0..len {
        let z = &zs[t * n..(t + 1) * n];
        let o = &seq.obs[t * m..(t + 1) * m];

        w.affine_into(z, &model.decoder.b, &mut recon);
        for i in 0..m {
            let r = recon[i] - o[i];
            total += delta.value(r);
            g_obs[i] = delta.slope(r);
        }
        if let Some(gz) = latent_grad.as_deref_mut() {
            w.add_transpose_mul(&g_obs, &mut gz[t * n..(t + 1) * n]);
        }
        if let Some(gp) = param_grad.as_deref_mut() {
            let (gw, rest) = gp.split_at_mut(m * n);
            for i in 0..m {
                if g_obs[i] != 0.0 {
                    for j in 0..n {
                        gw[i * n + j] += g_obs[i] * z[j];
                    }
                    rest[i] += g_obs[i];
                }
            }
        }

        if t + 1 == len {
            break;
        }
        let action = seq.actions[t];
        let map = &model.dynamics.maps[action.index()];
        let target = &zs[(t + 1) * n..(t + 2) * n];
        map.a.affine_into(z, &map.c, &mut pred);
        let mut any = false;
        for i in 0..n {
            let y = pred[i].tanh();
            let e = y - target[i];
            total += delta.value(e);
            let s = delta.slope(e);
            // store the slope for the target term, then the pre-activation gradient
            pred[i] = s;
            g_pre[i] = s * (1.0 - y * y);
            any |= s != 0.0;
        }
        if !any {
            continue;
        }
        if let Some(gz) = latent_grad.as_deref_mut() {
            let (head, tail) = gz.split_at_mut((t + 1) * n);
            map.a.add_transpose_mul(&g_pre, &mut head[t * n..]);
            for i in 0..n {
                tail[i] -= pred[i];
            }
        }
        if let Some(gp) = param_grad.as_deref_mut() {
            let base = dyn_offset + action.index() * (n * n + n);
            let (ga, gc) = gp[base..base + n * n + n].split_at_mut(n * n);
            for i in 0..n {
                let gi = g_pre[i];
                if gi != 0.0 {
                    for j in 0..n {
                        ga[i * n + j] += gi * z[j];
                    }
                    gc[i] += gi;
                }
            }
        }
    }
    total
}

/// Sequence loss including the decoder penalty.
pub fn loss(model: &Model, seq: Seq<'_>, zs: &LatentTrajectory) -> f64 {
    accumulate(model, seq, &zs.z, None, None) + model.regularizer()
}

/// Analytic subgradient of [`loss`] with respect to every latent and parameter.
pub fn grad(model: &Model, seq: Seq<'_>, zs: &LatentTrajectory) -> Gradient {
    let mut latents = vec![0.0; zs.z.len()];
    let mut params = vec![0.0; model.param_count()];
    accumulate(model, seq, &zs.z, Some(&mut latents), Some(&mut params));
    add_regularizer_grad(model, &mut params, 1.0);
    Gradient { latents, params }
}

/// Adds `weight * d(lambda |W|^2)/dW` to a parameter gradient.
pub fn add_regularizer_grad(model: &Model, params: &mut [f64], weight: f64) {
    let lambda = model.decoder.lambda;
    if lambda == 0.0 {
        return;
    }
    for (g, w) in params.iter_mut().zip(model.decoder.w.as_slice()) {
        *g += weight * 2.0 * lambda * w;
    }
}

/// Individual loss terms, for inspection.
#[derive(Clone, Debug, PartialEq)]
pub struct LossTerms {
    pub decoder: Vec<f64>,
    pub dynamics: Vec<f64>,
    pub regularizer: f64,
}

impl LossTerms {
    pub fn total(&self) -> f64 {
        self.decoder.iter().sum::<f64>() + self.dynamics.iter().sum::<f64>() + self.regularizer
    }
}

pub fn loss_terms(model: &Model, seq: Seq<'_>, zs: &LatentTrajectory) -> LossTerms {
    check_alignment(model, seq, &zs.z);
    let m = model.obs_dim();
    let delta = model.delta;
    let decoder = (0..seq.len())
        .map(|t| {
            model
                .decode(zs.get(t))
                .iter()
                .zip(&seq.obs[t * m..(t + 1) * m])
                .map(|(r, o)| delta.value(r - o))
                .sum()
        })
        .collect();
    let dynamics = (0..seq.len().saturating_sub(1))
        .map(|t| {
            model
                .dynamics(zs.get(t), seq.actions[t])
                .iter()
                .zip(zs.get(t + 1))
                .map(|(p, z)| delta.value(p - z))
                .sum()
        })
        .collect();
    LossTerms {
        decoder,
        dynamics,
        regularizer: model.regularizer(),
    }
}
