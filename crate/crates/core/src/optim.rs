//! Step rules shared by training and inference.

/// Halvings tried by [`backtrack`] before giving up.
pub const MAX_HALVINGS: usize = 20;

/// Moves `x` to `x - eta * dir` for the largest `eta = step / 2^k`
/// (`k <= MAX_HALVINGS`) whose loss does not exceed `current`, and returns
/// that loss. Leaves `x` untouched and returns `None` when no step qualifies
/// or the direction is zero.
pub(crate) fn backtrack(
    x: &mut [f64],
    dir: &[f64],
    step: f64,
    current: f64,
    scratch: &mut Vec<f64>,
    mut loss: impl FnMut(&[f64]) -> f64,
) -> Option<f64> {
    if dir.iter().all(|&v| v == 0.0) {
        return None;
    }
    scratch.resize(x.len(), 0.0);
    let mut eta = step;
    for _ in 0..=MAX_HALVINGS {
        for ((s, xi), di) in scratch.iter_mut().zip(x.iter()).zip(dir) {
            *s = xi - eta * di;
        }
        let trial = loss(scratch);
        if trial <= current {
            x.copy_from_slice(scratch);
            return Some(trial);
        }
        eta *= 0.5;
    }
    None
}

#[derive(Clone, Debug)]
pub(crate) struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    pub(crate) fn new(len: usize) -> Self {
        Adam {
            m: vec![0.0; len],
            v: vec![0.0; len],
            t: 0,
        }
    }

    /// Folds `g` into the moment estimates and returns the bias-corrected,
    /// per-coordinate normalized step direction.
    pub(crate) fn direction(&mut self, g: &[f64]) -> Vec<f64> {
        self.t += 1;
        let c1 = 1.0 - Self::BETA1.powi(self.t);
        let c2 = 1.0 - Self::BETA2.powi(self.t);
        g.iter()
            .zip(&mut self.m)
            .zip(&mut self.v)
            .map(|((&gi, mi), vi)| {
                *mi = Self::BETA1 * *mi + (1.0 - Self::BETA1) * gi;
                *vi = Self::BETA2 * *vi + (1.0 - Self::BETA2) * gi * gi;
                (*mi / c1) / ((*vi / c2).sqrt() + Self::EPS)
            })
            .collect()
    }
}
