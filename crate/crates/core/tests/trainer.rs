//! Trainer properties on small fixed datasets.

use latent_pomdp::env::{collect_random, Action, ObsMode, Trajectory};
use latent_pomdp::format;
use latent_pomdp::latent_model::{loss, Model};
use latent_pomdp::seed;
use latent_pomdp::trainer::{dataset_loss, fit, TrainConfig};
use rand::Rng;

fn regression_set() -> Vec<Trajectory> {
    let episodes = collect_random(5, ObsMode::Partial, 20, &mut seed::rng(2024)).unwrap();
    episodes.iter().map(|e| e.trajectory().clone()).collect()
}

fn small_config() -> TrainConfig {
    TrainConfig {
        epochs: 300,
        smooth_epochs: 200,
        ..Default::default()
    }
}

#[test]
fn reported_loss_is_the_summed_sequence_loss() {
    let data = regression_set();
    let out = fit(&data, &small_config()).unwrap();
    let recomputed: f64 = data
        .iter()
        .zip(&out.latents)
        .map(|(t, z)| loss(&out.model, t.into(), z))
        .sum();
    let reported = *out.loss_curve.last().unwrap();
    assert!((reported - recomputed).abs() <= 1e-12 * recomputed, "{reported} vs {recomputed}");
    assert_eq!(recomputed, dataset_loss(&out.model, &data, &out.latents));
    assert!(out.latents.iter().all(|z| z.is_finite()));
}

#[test]
fn loss_curve_is_nonincreasing_within_each_phase() {
    let data = regression_set();
    let cfg = small_config();
    let curve = fit(&data, &cfg).unwrap().loss_curve;
    assert_eq!(curve.len(), cfg.epochs);
    let violations = curve
        .windows(2)
        .enumerate()
        .filter(|(i, w)| i + 1 != cfg.smooth_epochs && w[1] > w[0] + 1e-9)
        .count();
    assert!(violations * 20 <= curve.len(), "{violations} upticks in {} epochs", curve.len());
}

#[test]
fn same_seed_same_model_file() {
    let data = regression_set();
    let cfg = TrainConfig {
        seed: 42,
        ..small_config()
    };
    let a = format::model_to_string(&fit(&data, &cfg).unwrap().model);
    let b = format::model_to_string(&fit(&data, &cfg).unwrap().model);
    assert_eq!(a, b);
}

#[test]
fn halving_the_steps_does_not_hurt_much() {
    // default schedule; the short test schedule has not converged at half steps
    let data = regression_set();
    let cfg = TrainConfig::default();
    let full = *fit(&data, &cfg).unwrap().loss_curve.last().unwrap();
    let halved = TrainConfig {
        step_size_params: cfg.step_size_params / 2.0,
        step_size_latents: cfg.step_size_latents / 2.0,
        ..cfg
    };
    let half = *fit(&data, &halved).unwrap().loss_curve.last().unwrap();
    eprintln!("final loss {full} at full steps, {half} at halved steps");
    assert!(half <= full * 1.01, "halved steps ended at {half}, full steps at {full}");
}

#[test]
fn recovers_data_from_a_matching_generator() {
    // observations produced by a known linear decoder over tanh dynamics
    let mut rng = seed::rng(77);
    let truth = Model::random(2, 1, 0.0, 0.9, &mut rng);
    let data: Vec<Trajectory> = (0..10)
        .map(|_| {
            let mut z: Vec<f64> = (0..2).map(|_| rng.gen_range(-0.8..0.8)).collect();
            let mut t = Trajectory::new(1);
            for _ in 0..15 {
                let a = Action::random(&mut rng);
                t.push(&truth.decode(&z), a);
                z = truth.dynamics(&z, a);
            }
            t
        })
        .collect();
    let cfg = TrainConfig {
        n: 2,
        lambda: 0.0,
        ..Default::default()
    };
    let curve = fit(&data, &cfg).unwrap().loss_curve;
    let (first, last) = (curve[0], *curve.last().unwrap());
    assert!(last < 0.05 * first, "loss {first} -> {last}");
}

#[test]
fn full_observation_trajectories_train_too() {
    let episodes = collect_random(4, ObsMode::Full, 15, &mut seed::rng(5)).unwrap();
    let data: Vec<Trajectory> = episodes.iter().map(|e| e.trajectory().clone()).collect();
    let out = fit(&data, &TrainConfig { n: 3, ..small_config() }).unwrap();
    assert_eq!(out.model.obs_dim(), 2);
    assert_eq!(out.model.latent_dim(), 3);
    assert_eq!(out.latents.len(), 4);
}
