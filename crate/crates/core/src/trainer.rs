//! Joint fit of the decoder, the dynamics and every training latent.
//!
//! Each epoch alternates a latent sweep (parameters frozen, one backtracking
//! step per trajectory, the same step exact inference uses) with a parameter
//! sweep (latents frozen, one backtracking step on the summed loss).

use rayon::prelude::*;

use crate::env::Trajectory;
use crate::error::{Error, Result};
use crate::optim::{backtrack, Adam};
use crate::latent_model::{accumulate, add_regularizer_grad, Delta, LatentTrajectory, Model, Seq};
use crate::seed;

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub n: usize,
    pub epochs: usize,
    pub step_size_params: f64,
    pub step_size_latents: f64,
    pub lambda: f64,
    pub init_scale: f64,
    pub seed: u64,
    pub delta: Delta,
    pub optimizer: Optimizer,
    /// Leading epochs that fit the squared loss before switching to `delta`.
    pub smooth_epochs: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            n: 5,
            epochs: 2000,
            step_size_params: 0.03,
            step_size_latents: 0.03,
            lambda: 1e-3,
            init_scale: 0.1,
            seed: 0,
            delta: Delta::L1,
            optimizer: Optimizer::Adam,
            smooth_epochs: 1800,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::Config("latent dimension n must be at least 1".into()));
        }
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be at least 1".into()));
        }
        if !(self.step_size_params > 0.0 && self.step_size_latents > 0.0) {
            return Err(Error::Config("step sizes must be positive".into()));
        }
        if !(self.lambda >= 0.0) {
            return Err(Error::Config("lambda must be non-negative".into()));
        }
        if !(self.init_scale > 0.0) {
            return Err(Error::Config("init_scale must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct Fit {
    pub model: Model,
    pub latents: Vec<LatentTrajectory>,
    /// Total dataset loss after each epoch.
    pub loss_curve: Vec<f64>,
}

/// Sum of per-trajectory losses, each including the decoder penalty.
pub fn dataset_loss(model: &Model, dataset: &[Trajectory], latents: &[LatentTrajectory]) -> f64 {
    dataset
        .iter()
        .zip(latents)
        .map(|(t, z)| crate::latent_model::loss(model, t.into(), z))
        .sum()
}

pub fn fit(dataset: &[Trajectory], cfg: &TrainConfig) -> Result<Fit> {
    cfg.validate()?;
    let first = dataset
        .first()
        .ok_or_else(|| Error::Config("training set is empty".into()))?;
    let m = first.obs_dim();
    if let Some(bad) = dataset.iter().find(|t| t.obs_dim() != m || t.is_empty()) {
        return Err(Error::Shape(format!(
            "trajectory with {} steps of dimension {} in a dataset of dimension {m}",
            bad.len(),
            bad.obs_dim()
        )));
    }

    let mut rng = seed::rng(cfg.seed);
    let mut model = Model::random(cfg.n, m, cfg.lambda, cfg.init_scale, &mut rng);
    model.delta = cfg.delta;
    let mut latents: Vec<LatentTrajectory> = dataset
        .iter()
        .map(|t| LatentTrajectory::random(cfg.n, t.len(), cfg.init_scale, &mut rng))
        .collect();

    let total_steps: usize = dataset.iter().map(Trajectory::len).sum();
    let q = dataset.len() as f64;
    let mut loss_curve = Vec::with_capacity(cfg.epochs);
    let mut latent_adam: Vec<Adam> = Vec::new();
    let mut param_adam = Adam::new(0);

    for epoch in 0..cfg.epochs {
        if epoch == 0 || epoch == cfg.smooth_epochs {
            // a new objective starts: fresh moment estimates
            model.delta = if epoch < cfg.smooth_epochs { Delta::L2 } else { cfg.delta };
            latent_adam = latents.iter().map(|z| Adam::new(z.z.len())).collect();
            param_adam = Adam::new(model.param_count());
        }
        // linear decay to zero over the run
        let decay = 1.0 - epoch as f64 / cfg.epochs as f64;

        // (a) latents, parameters frozen
        latents
            .par_iter_mut()
            .zip(latent_adam.par_iter_mut())
            .zip(dataset.par_iter())
            .for_each(|((z, adam), t)| {
                let seq = Seq::from(t);
                let mut g = vec![0.0; z.z.len()];
                let current = accumulate(&model, seq, &z.z, Some(&mut g), None);
                let (dir, step) = match cfg.optimizer {
                    Optimizer::Descent => (g, cfg.step_size_latents),
                    Optimizer::Adam => (adam.direction(&g), cfg.step_size_latents * decay),
                };
                backtrack(&mut z.z, &dir, step, current, &mut Vec::new(), |zs| {
                    accumulate(&model, seq, zs, None, None)
                });
            });

        // (b) parameters, latents frozen
        let (data_loss, mut g) = param_gradient(&model, dataset, &latents);
        add_regularizer_grad(&model, &mut g, q);
        let current = data_loss + q * model.regularizer();
        let (dir, step) = match cfg.optimizer {
            Optimizer::Descent => (g, cfg.step_size_params / total_steps as f64),
            Optimizer::Adam => (param_adam.direction(&g), cfg.step_size_params * decay),
        };
        let mut params = model.params();
        let mut trial = model.clone();
        let accepted = backtrack(&mut params, &dir, step, current, &mut Vec::new(), |p| {
            trial.set_params(p);
            data_only_loss(&trial, dataset, &latents) + q * trial.regularizer()
        })
        .unwrap_or(current);
        model.set_params(&params);

        if !accepted.is_finite() {
            return Err(Error::Diverged { epoch, loss: accepted });
        }
        loss_curve.push(accepted);
    }

    model.delta = cfg.delta;
    Ok(Fit {
        model,
        latents,
        loss_curve,
    })
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Optimizer {
    /// Gradient steps with backtracking, never increasing the loss.
    Descent,
    /// Per-coordinate moment-normalized steps.
    #[default]
    Adam,
}

impl std::str::FromStr for Optimizer {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "descent" => Ok(Optimizer::Descent),
            "adam" => Ok(Optimizer::Adam),
            _ => Err(Error::Config(format!("unknown optimizer `{s}` (expected descent or adam)"))),
        }
    }
}

impl std::fmt::Display for Optimizer {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Optimizer::Descent => "descent",
            Optimizer::Adam => "adam",
        })
    }
}

/// Data loss and parameter gradient summed over trajectories in index order.
fn param_gradient(model: &Model, dataset: &[Trajectory], latents: &[LatentTrajectory]) -> (f64, Vec<f64>) {
    let parts: Vec<(f64, Vec<f64>)> = dataset
        .par_iter()
        .zip(latents.par_iter())
        .map(|(t, z)| {
            let mut g = vec![0.0; model.param_count()];
            let l = accumulate(model, Seq::from(t), &z.z, None, Some(&mut g));
            (l, g)
        })
        .collect();
    let mut total = 0.0;
    let mut grad = vec![0.0; model.param_count()];
    for (l, g) in parts {
        total += l;
        for (a, b) in grad.iter_mut().zip(&g) {
            *a += b;
        }
    }
    (total, grad)
}

fn data_only_loss(model: &Model, dataset: &[Trajectory], latents: &[LatentTrajectory]) -> f64 {
    let parts: Vec<f64> = dataset
        .par_iter()
        .zip(latents.par_iter())
        .map(|(t, z)| accumulate(model, t.into(), &z.z, None, None))
        .collect();
    parts.iter().sum()
}

/// Human-readable summary of a loss curve.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainReport {
    pub initial: f64,
    pub final_loss: f64,
    pub epochs: usize,
    /// `(initial - final) / initial`, as a fraction.
    pub improvement: f64,
    pub diverged: bool,
}

impl std::fmt::Display for TrainReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "epochs: {}\ninitial loss: {:.6}\nfinal loss: {:.6}\nimprovement: {:.2}%",
            self.epochs,
            self.initial,
            self.final_loss,
            100.0 * self.improvement
        )?;
        if self.diverged {
            write!(f, "\nwarning: final loss exceeds initial loss (diverged)")?;
        }
        Ok(())
    }
}

pub fn train_report(loss_curve: &[f64]) -> Result<TrainReport> {
    let (&initial, &final_loss) = loss_curve
        .first()
        .zip(loss_curve.last())
        .ok_or_else(|| Error::Config("empty loss curve".into()))?;
    let improvement = if initial != 0.0 {
        (initial - final_loss) / initial
    } else {
        0.0
    };
    Ok(TrainReport {
        initial,
        final_loss,
        epochs: loss_curve.len(),
        improvement,
        diverged: final_loss > initial,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::Action;

    #[test]
    fn report_arithmetic() {
        let r = train_report(&[10.0, 5.0, 2.0]).unwrap();
        assert!((r.improvement - 0.8).abs() < 1e-12);
        assert!(!r.diverged);
        assert!(r.to_string().contains("80.00%"));

        let r = train_report(&[7.0]).unwrap();
        assert_eq!(r.improvement, 0.0);
        assert_eq!(r.epochs, 1);

        let r = train_report(&[1.0, 3.0]).unwrap();
        assert!(r.diverged);
        assert!(r.to_string().contains("diverged"));

        assert!(train_report(&[]).is_err());
    }

    #[test]
    fn single_observation_is_reconstructed() {
        let traj = Trajectory::from_parts(1, vec![0.37], vec![Action::Forward], false).unwrap();
        let cfg = TrainConfig {
            n: 1,
            lambda: 0.0,
            epochs: 2000,
            seed: 1,
            ..Default::default()
        };
        let fit = fit(&[traj], &cfg).unwrap();
        let recon = fit.model.decode(fit.latents[0].get(0))[0];
        assert!((recon - 0.37).abs() < 1e-3, "reconstruction {recon}");
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(fit(&[], &TrainConfig::default()).is_err());
        let a = Trajectory::from_parts(1, vec![0.1], vec![Action::Forward], false).unwrap();
        let b = Trajectory::from_parts(2, vec![0.1, 0.2], vec![Action::Forward], false).unwrap();
        assert!(fit(&[a.clone(), b], &TrainConfig::default()).is_err());
        let cfg = TrainConfig {
            epochs: 0,
            ..Default::default()
        };
        assert!(fit(&[a], &cfg).is_err());
    }
}
