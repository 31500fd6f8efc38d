/*
Copyright 2026 The tdcr Authors

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
*/
//! Closed-loop runner behavior end to end.

use nalgebra::Vector3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tdcr_core::backbone::{reconstruct_backbone, ActuationBounds, ActuationVector, SegmentParams};
use tdcr_core::model::ShapeModel;
use tdcr_core::mppi::{isotropic, ObjectiveWeights};
use tdcr_core::plant::{Plant, PlantPerturbation};
use tdcr_core::scenario::log::{read_series, write_run};
use tdcr_core::scenario::presets::{self, ShapeParams, TrackShape};
use tdcr_core::scenario::trials::draw_target;
use tdcr_core::scenario::{
    compute_metrics, run_scenario, run_scenario_with_model, InitialCommand, ReferenceTrajectory, ScenarioConfig,
    ShapeMode, Summary, TimedTask,
};
use tdcr_core::task::TaskDescriptor;

fn short_circle(seed: u64) -> ScenarioConfig {
    ScenarioConfig {
        duration: 1.0,
        seed,
        mppi: tdcr_core::mppi::MppiConfig {
            num_samples: 200,
            ..Default::default()
        },
        ..presets::tracking(TrackShape::Circle, ShapeParams::default())
    }
}

fn fixed_tip(tip: Vector3<f64>, duration: f64, seed: u64) -> ScenarioConfig {
    ScenarioConfig {
        name: "fixed".into(),
        reference: ReferenceTrajectory::FixedPoint {
            tip: Some(tip.into()),
            target_q: None,
        },
        duration,
        seed,
        shape_mode: ShapeMode::None,
        initial: InitialCommand::Zero,
        ..Default::default()
    }
}

#[test]
fn same_seed_is_bit_identical() {
    let a = run_scenario(&short_circle(7)).unwrap();
    let b = run_scenario(&short_circle(7)).unwrap();
    assert_eq!(a, b);
    let c = run_scenario(&short_circle(8)).unwrap();
    assert_ne!(a.series, c.series);
}

#[test]
fn summary_recomputes_from_logged_series() {
    let mut config = presets::obstacle_avoidance();
    config.duration = 1.0;
    config.mppi.num_samples = 200;
    let result = run_scenario(&config).unwrap();
    assert_eq!(compute_metrics(&result.series).unwrap(), result.summary);

    let dir = tempfile::tempdir().unwrap();
    let run_dir = write_run(dir.path(), &config, &result).unwrap();
    let logged = read_series(run_dir.join("series.csv")).unwrap();
    assert_eq!(logged, result.series);
    assert_eq!(compute_metrics(&logged).unwrap(), result.summary);

    let summary: Summary =
        serde_json::from_str(&std::fs::read_to_string(run_dir.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary, result.summary);
    let echo =
        ScenarioConfig::from_json_str(&std::fs::read_to_string(run_dir.join("config.echo.json")).unwrap()).unwrap();
    assert_eq!(echo, config);
}

#[test]
fn on_target_without_noise_stays_put() {
    let params = SegmentParams::default();
    let tip = reconstruct_backbone(&ActuationVector::zeros(), &params).unwrap().tip();
    let mut config = fixed_tip(tip, 0.1, 0);
    config.mppi.noise_cov = isotropic(0.0);
    let result = run_scenario(&config).unwrap();
    let first = &result.series[0];
    assert!(first.cost.total() < 1e-12, "{:?}", first.cost);
    assert!(first.q.iter().all(|v| v.abs() < 1e-9), "{:?}", first.q);
    assert!(result.series.iter().all(|r| r.tip_error < 1e-9));
}

#[test]
fn series_is_time_aligned() {
    let config = short_circle(1);
    let result = run_scenario(&config).unwrap();
    assert_eq!(result.series.len(), config.steps());
    for (i, row) in result.series.iter().enumerate() {
        assert!((row.t - (i + 1) as f64 * config.dt()).abs() < 1e-12);
        assert_eq!(row.x.len(), 3 * config.points);
    }
}

#[test]
fn commands_respect_bounds() {
    // A target far outside the workspace pins several channels at their limits.
    let mut config = fixed_tip(Vector3::new(0.2, 0.2, 0.05), 2.0, 3);
    let bounds = ActuationBounds::default();
    config.mppi.bounds = bounds;
    let result = run_scenario(&config).unwrap();
    let mut saturated = false;
    for row in &result.series {
        for j in 0..row.q.len() {
            assert!(row.q[j] >= bounds.min[j] && row.q[j] <= bounds.max[j]);
            saturated |= row.q[j] == bounds.max[j] || row.q[j] == bounds.min[j];
        }
    }
    assert!(saturated);
}

#[test]
fn timed_task_changes_the_trajectory() {
    let base = short_circle(2);
    let mut tasked = base.clone();
    tasked.tasks = vec![TimedTask {
        at: 0.3,
        task: TaskDescriptor::direction_bias([0.0, 0.0, 1.0], 1.0),
    }];
    let a = run_scenario(&base).unwrap();
    let b = run_scenario(&tasked).unwrap();
    let switch = (0.3 / base.dt()).round() as usize;
    assert_eq!(a.series[..switch - 1], b.series[..switch - 1]);
    assert_ne!(a.series, b.series);
}

#[test]
fn perturbed_plant_is_harder_for_the_nominal_model() {
    let nominal = short_circle(4);
    let perturbed = ScenarioConfig {
        plant: Plant::Perturbed(PlantPerturbation::seeded(1)),
        ..nominal.clone()
    };
    let model = ShapeModel::nominal(SegmentParams::default());
    let a = run_scenario_with_model(&nominal, &model).unwrap();
    let b = run_scenario_with_model(&perturbed, &model).unwrap();
    // Feedback still closes the loop, the first-order model just lags.
    assert!(b.summary.rmse < 0.02, "{}", b.summary.rmse);
    assert_ne!(a.summary, b.summary);
}

#[test]
fn without_avoidance_the_preset_obstacles_are_hit() {
    let mut config = presets::obstacle_avoidance();
    config.weights = ObjectiveWeights {
        w_obs: 0.0,
        ..config.weights
    };
    let result = run_scenario(&config).unwrap();
    assert!(result.summary.min_clearance.unwrap() < 0.02);
}

/// Mean tip error over consecutive 20-step windows never grows by more than
/// the controller's jitter floor, in at least 95% of trials.
#[test]
fn fixed_target_error_does_not_grow() {
    const WINDOW: usize = 20;
    const JITTER: f64 = 0.001;
    let params = SegmentParams::default();
    let bounds = ActuationBounds::default();
    let trials = 20;
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let configs: Vec<ScenarioConfig> = (0..trials)
        .map(|i| {
            let q = draw_target(&mut rng, &bounds);
            let tip = reconstruct_backbone(&q, &params).unwrap().tip();
            fixed_tip(tip, 3.0, i)
        })
        .collect();
    let model = ShapeModel::nominal(params);
    let results = tdcr_core::scenario::trials::run_parallel(&configs, &model).unwrap();
    let good = results
        .iter()
        .filter(|r| {
            let e: Vec<f64> = r.series.iter().map(|row| row.tip_error).collect();
            let means: Vec<f64> = e
                .chunks_exact(WINDOW)
                .map(|w| w.iter().sum::<f64>() / WINDOW as f64)
                .collect();
            means.windows(2).all(|m| m[1] <= m[0] + JITTER)
        })
        .count();
    assert!(good as f64 >= 0.95 * trials as f64, "{good}/{trials}");
}
