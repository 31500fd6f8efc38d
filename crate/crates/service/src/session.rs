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
//! The tele-operation loop without any networking.
//!
//! Operator commands only ever move the virtual robot. The controller sees
//! the virtual robot's backbone and nothing else of what the operator did.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use tdcr_core::backbone::{downsample_state, ActuationVector, BackboneCurve, SegmentParams};
use tdcr_core::model::ShapeModel;
use tdcr_core::mppi::{HorizonTarget, MppiConfig, MppiController, ObjectiveWeights};
use tdcr_core::obstacle::{min_distance, ObstacleSet};
use tdcr_core::plant::Plant;
use tdcr_core::residual::Checkpoint;
use tdcr_core::scenario::{shape_error, VirtualDelta, VirtualRobot};
use tdcr_core::task::{ControlSettings, TaskDescriptor, TaskManager};

use crate::error::{Result, ServiceError};
use crate::protocol::{ObstacleSnapshot, RunAction, TelemetryFrame};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServiceConfig {
    /// Control steps per simulated second. Overrides `mppi.control_dt`.
    pub control_rate: f64,
    /// Telemetry frames per wall second.
    pub telemetry_rate: f64,
    /// Simulated seconds per wall second.
    pub time_scale: f64,
    /// Controller stations.
    pub points: usize,
    /// Backbone samples per robot in each frame.
    pub display_points: usize,
    /// Pending virtual-robot deltas and run controls before clients get
    /// "queue full".
    pub queue_capacity: usize,
    pub seed: u64,
    pub segment: SegmentParams,
    pub mppi: MppiConfig,
    pub weights: ObjectiveWeights,
    pub plant: Plant,
    pub checkpoint: Option<PathBuf>,
    pub obstacles: ObstacleSet,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            control_rate: 50.0,
            telemetry_rate: 25.0,
            time_scale: 1.0,
            points: 10,
            display_points: 30,
            queue_capacity: 64,
            seed: 0,
            segment: SegmentParams::default(),
            mppi: MppiConfig::default(),
            weights: ObjectiveWeights::default(),
            plant: Plant::Nominal,
            checkpoint: None,
            obstacles: ObstacleSet::default(),
        }
    }
}

impl ServiceConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [self.control_rate, self.telemetry_rate, self.time_scale];
        if positive.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(ServiceError::Config(format!(
                "rates and time scale must be positive: {positive:?}"
            )));
        }
        if self.points < 2 || self.display_points < 2 {
            return Err(ServiceError::Config("need at least two stations".into()));
        }
        if self.queue_capacity == 0 {
            return Err(ServiceError::Config("queue capacity must be positive".into()));
        }
        self.segment.validate()?;
        self.controller_config().validate()?;
        self.weights.validate()?;
        Ok(())
    }

    pub fn dt(&self) -> f64 {
        1.0 / self.control_rate
    }

    fn controller_config(&self) -> MppiConfig {
        MppiConfig {
            control_dt: self.dt(),
            ..self.mppi.clone()
        }
    }

    pub fn from_toml_str(s: &str) -> Result<Self> {
        let c: Self = toml::from_str(s)?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn load_model(&self) -> Result<ShapeModel> {
        Ok(match &self.checkpoint {
            Some(p) => ShapeModel::from_checkpoint(&Checkpoint::load(p)?)?,
            None => ShapeModel::nominal(self.segment),
        })
    }
}

/// Horizon targets for a virtual-robot state. Depends on nothing else.
pub fn reference_targets(robot: &VirtualRobot, horizon: usize, points: usize) -> Result<Vec<HorizonTarget>> {
    let curve = robot.backbone()?;
    let target = HorizonTarget {
        tip: curve.tip(),
        shape: Some(downsample_state(&curve, points)?),
    };
    Ok(vec![target; horizon])
}

/// Commands the control loop acts on. Authority is settled before these
/// reach the session.
#[derive(Clone, Debug, PartialEq)]
pub enum SessionCommand {
    Delta(VirtualDelta),
    Task(TaskDescriptor),
    Weights(ObjectiveWeights),
    Run(RunAction),
}

pub struct TeleopSession {
    config: ServiceConfig,
    model: ShapeModel,
    virtual_robot: VirtualRobot,
    q: ActuationVector,
    curve: BackboneCurve,
    controller: MppiController,
    tasks: TaskManager,
    sim_time: f64,
    running: bool,
}

impl TeleopSession {
    pub fn new(config: ServiceConfig) -> Result<Self> {
        config.validate()?;
        let model = config.load_model()?;
        Self::with_model(config, model)
    }

    pub fn with_model(config: ServiceConfig, model: ShapeModel) -> Result<Self> {
        config.validate()?;
        let mppi = config.controller_config();
        let tasks = TaskManager::new(
            ControlSettings {
                weights: config.weights.clone(),
                bounds: mppi.bounds,
            },
            config.points,
        )?;
        let controller = MppiController::new(mppi.clone(), config.weights.clone(), config.points, config.seed)?;
        let q = ActuationVector::zeros();
        Ok(Self {
            virtual_robot: VirtualRobot::new(config.segment, mppi.bounds),
            curve: config.plant.backbone(&q, &config.segment)?,
            q,
            model,
            controller,
            tasks,
            sim_time: 0.0,
            running: true,
            config,
        })
    }

    pub fn config(&self) -> &ServiceConfig {
        &self.config
    }

    pub fn virtual_robot(&self) -> &VirtualRobot {
        &self.virtual_robot
    }

    pub fn actuation(&self) -> &ActuationVector {
        &self.q
    }

    pub fn sim_time(&self) -> f64 {
        self.sim_time
    }

    pub fn is_running(&self) -> bool {
        self.running
    }

    pub fn apply(&mut self, command: &SessionCommand) -> Result<()> {
        match command {
            SessionCommand::Delta(d) => self.virtual_robot.apply(d)?,
            SessionCommand::Task(desc) => {
                let eff = self.tasks.set_task(desc.clone())?.clone();
                self.install(eff)?;
            }
            SessionCommand::Weights(w) => {
                w.validate()?;
                let base = ControlSettings {
                    weights: w.clone(),
                    bounds: self.tasks.base().bounds,
                };
                let eff = self.tasks.set_base(base)?.clone();
                self.install(eff)?;
            }
            SessionCommand::Run(RunAction::Start) => self.running = true,
            SessionCommand::Run(RunAction::Pause) => self.running = false,
            SessionCommand::Run(RunAction::Reset) => {
                let bounds = self.tasks.effective().bounds;
                self.virtual_robot = VirtualRobot::new(self.config.segment, bounds);
                self.q = ActuationVector::zeros();
                self.curve = self.config.plant.backbone(&self.q, &self.config.segment)?;
                self.controller.reset();
                self.sim_time = 0.0;
            }
        }
        Ok(())
    }

    fn install(&mut self, settings: ControlSettings) -> Result<()> {
        self.controller.set_weights(settings.weights)?;
        self.controller.set_bounds(settings.bounds)?;
        Ok(())
    }

    /// One control period. Paused sessions don't move.
    pub fn step(&mut self) -> Result<()> {
        if !self.running {
            return Ok(());
        }
        let dt = self.config.dt();
        let horizon = self.config.mppi.horizon;
        let targets = reference_targets(&self.virtual_robot, horizon, self.config.points)?;
        let x0 = downsample_state(&self.curve, self.config.points)?;
        let obstacles: Vec<_> = if self.config.obstacles.is_empty() {
            Vec::new()
        } else {
            (1..=horizon)
                .map(|h| self.config.obstacles.at(self.sim_time + h as f64 * dt))
                .collect()
        };
        let step = self
            .controller
            .step(&self.model, &self.q, Some(&x0), &targets, &obstacles)?;
        self.q = step.q_next;
        self.curve = self.config.plant.backbone(&self.q, &self.config.segment)?;
        self.sim_time += dt;
        Ok(())
    }

    /// Frame contents; `seq`, `timestamp` and `authority` are left for the
    /// broadcaster to stamp.
    pub fn snapshot(&self) -> Result<TelemetryFrame> {
        let m = self.config.display_points;
        let target = self.virtual_robot.backbone()?;
        let x = downsample_state(&self.curve, m)?;
        let xr = downsample_state(&target, m)?;
        let spheres = self.config.obstacles.at(self.sim_time);
        let points = |v: &[f64]| v.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect();
        Ok(TelemetryFrame {
            seq: 0,
            timestamp: 0.0,
            sim_time: self.sim_time,
            running: self.running,
            backbone: points(x.as_slice()),
            virtual_backbone: points(xr.as_slice()),
            q: self.q.0,
            tip_error: (self.curve.tip() - target.tip()).norm(),
            shape_error: shape_error(&x, &xr),
            weights: self.tasks.effective().weights.clone(),
            task: self.tasks.active().clone(),
            min_clearance: (!spheres.is_empty())
                .then(|| min_distance(&self.curve.positions().collect::<Vec<_>>(), &spheres)),
            obstacles: spheres
                .iter()
                .map(|s| ObstacleSnapshot {
                    center: s.center.into(),
                    radius: s.radius,
                })
                .collect(),
            authority: None,
        })
    }
}
