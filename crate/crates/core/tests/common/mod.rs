//! Independent loss oracle and random smooth instances shared by test targets.
#![allow(dead_code)]

use latent_pomdp::env::{Action, Trajectory};
use latent_pomdp::latent_model::{Delta, LatentTrajectory, Model};
use latent_pomdp::seed;
use rand::Rng;

/// Straight transcription of the objective, sharing nothing with the library
/// beyond the parameter containers.
pub fn reference_loss(model: &Model, traj: &Trajectory, z: &[f64]) -> f64 {
    let n = model.latent_dim();
    let m = model.obs_dim();
    let d = |r: f64| match model.delta {
        Delta::L1 => r.abs(),
        Delta::L2 => r * r,
    };
    let mut total = 0.0;
    for t in 0..traj.len() {
        let zt = &z[t * n..(t + 1) * n];
        for i in 0..m {
            let mut r = model.decoder.b[i] - traj.observation(t)[i];
            for j in 0..n {
                r += model.decoder.w.get(i, j) * zt[j];
            }
            total += d(r);
        }
        if t + 1 < traj.len() {
            let map = &model.dynamics.maps[traj.actions()[t].index()];
            for i in 0..n {
                let mut pre = map.c[i];
                for j in 0..n {
                    pre += map.a.get(i, j) * zt[j];
                }
                total += d(pre.tanh() - z[(t + 1) * n + i]);
            }
        }
    }
    let mut wsq = 0.0;
    for i in 0..m {
        for j in 0..n {
            wsq += model.decoder.w.get(i, j).powi(2);
        }
    }
    total + model.decoder.lambda * wsq
}

/// Smallest |residual| over every decoder and dynamics term.
fn closest_kink(model: &Model, traj: &Trajectory, z: &LatentTrajectory) -> f64 {
    let n = model.latent_dim();
    let mut closest = f64::INFINITY;
    for t in 0..traj.len() {
        for (r, o) in model.decode(z.get(t)).iter().zip(traj.observation(t)) {
            closest = closest.min((r - o).abs());
        }
        if t + 1 < traj.len() {
            let pred = model.dynamics(z.get(t), traj.actions()[t]);
            for i in 0..n {
                closest = closest.min((pred[i] - z.get(t + 1)[i]).abs());
            }
        }
    }
    closest
}

pub fn random_instance(s: u64) -> (Model, Trajectory, LatentTrajectory) {
    let mut rng = seed::rng(s);
    loop {
        let n = rng.gen_range(1..=5);
        let m = rng.gen_range(1..=2);
        let len = rng.gen_range(1..=10);
        let lambda = if rng.gen_bool(0.5) { rng.gen_range(0.0..1.0) } else { 0.0 };
        let mut model = Model::random(n, m, lambda, 1.0, &mut rng);
        model.delta = if rng.gen_bool(0.8) { Delta::L1 } else { Delta::L2 };
        let mut traj = Trajectory::new(m);
        for _ in 0..len {
            let o: Vec<f64> = (0..m).map(|_| rng.gen_range(-1.0..1.0)).collect();
            traj.push(&o, Action::random(&mut rng));
        }
        let z = LatentTrajectory::random(n, len, 1.0, &mut rng);
        if closest_kink(&model, &traj, &z) > 1e-4 {
            return (model, traj, z);
        }
    }
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-3)
}

