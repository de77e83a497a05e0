//! Round trips of every on-disk format for arbitrary finite values.

use std::path::Path;

use latent_pomdp::env::{Action, CarState, ObsMode, Trajectory};
use latent_pomdp::format::{self, Dataset, StoredEpisode};
use latent_pomdp::latent_model::{LatentTrajectory, Model};
use latent_pomdp::rcpi::LinearPolicy;
use latent_pomdp::seed;
use proptest::prelude::*;

fn finite() -> impl Strategy<Value = f64> {
    prop::num::f64::NORMAL | prop::num::f64::SUBNORMAL | prop::num::f64::ZERO
}

fn trajectory(m: usize, max_len: usize) -> impl Strategy<Value = Trajectory> {
    (1..=max_len, any::<bool>()).prop_flat_map(move |(len, success)| {
        (prop::collection::vec(finite(), len * m), prop::collection::vec(0usize..3, len)).prop_map(move |(obs, acts)| {
            let actions = acts.into_iter().map(|a| Action::from_index(a).unwrap()).collect();
            Trajectory::from_parts(m, obs, actions, success).unwrap()
        })
    })
}

fn dataset() -> impl Strategy<Value = Dataset> {
    prop_oneof![Just(ObsMode::Full), Just(ObsMode::Partial)].prop_flat_map(|mode| {
        let m = mode.dim();
        (
            1usize..200,
            prop::collection::vec(
                (trajectory(m, 12), trajectory(m, 5).prop_filter("warm-up length", |w| w.len() == 5)),
                1..4,
            ),
        )
            .prop_map(move |(t_max, eps)| Dataset {
                mode,
                t_max,
                episodes: eps
                    .into_iter()
                    .map(|(trajectory, mut warmup)| {
                        warmup.success = false;
                        StoredEpisode { trajectory, warmup }
                    })
                    .collect(),
            })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn datasets_round_trip(d in dataset()) {
        let text = format::dataset_to_string(&d);
        prop_assert_eq!(format::parse_dataset(&text, Path::new("d")).unwrap(), d);
    }

    #[test]
    fn models_round_trip(s in any::<u64>(), n in 1usize..6, m in 1usize..3, lambda in 0.0f64..10.0, scale in finite()) {
        let model = Model::random(n, m, lambda, scale.abs().min(1e300).max(1e-300), &mut seed::rng(s));
        let text = format::model_to_string(&model);
        prop_assert_eq!(format::parse_model(&text, Path::new("m")).unwrap(), model);
    }

    #[test]
    fn policies_round_trip(w in prop::collection::vec(prop::collection::vec(finite(), 4), 3)) {
        let p = LinearPolicy::from_weights(w).unwrap();
        prop_assert_eq!(format::parse_policy(&format::policy_to_string(&p), Path::new("p")).unwrap(), p);
    }

    #[test]
    fn latents_and_states_round_trip(
        z in prop::collection::vec(prop::collection::vec(finite(), 6), 1..4),
        xs in prop::collection::vec(prop::collection::vec((finite(), finite()), 0..5), 0..4),
    ) {
        let latents: Vec<LatentTrajectory> = z.into_iter().map(|z| LatentTrajectory { n: 2, z }).collect();
        let text = format::latents_to_string(&latents);
        prop_assert_eq!(format::parse_latents(&text, Path::new("z")).unwrap(), latents);

        let states: Vec<Vec<CarState>> = xs
            .into_iter()
            .map(|e| e.into_iter().map(|(x, v)| CarState::new(x, v)).collect())
            .collect();
        let text = format::states_to_string(&states);
        prop_assert_eq!(format::parse_states(&text, Path::new("s")).unwrap(), states);
    }
}

#[test]
fn reals_use_seventeen_significant_digits() {
    let p = LinearPolicy::from_weights(vec![vec![0.1, 1.0 / 3.0]; 3]).unwrap();
    let text = format::policy_to_string(&p);
    let line = text.lines().nth(1).unwrap();
    assert_eq!(line, "1.0000000000000001e-1 3.3333333333333331e-1");
}
