//! Runs a scenario to completion and records what happened.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::coordinator::{Event, EventKind, TaskMode, TaskRequest, TickReport, World};
use crate::error::Result;
use crate::geometry::Vec2;
use crate::metrics::{compute_metrics, Metrics};
use crate::object::MotionMode;
use crate::scenario::{Scenario, TaskConfig};

/// State of one object after one dynamics step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub t: f64,
    pub object: usize,
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub module: usize,
    pub mode: MotionMode,
    pub phase: String,
}

/// Actuator state at one control tick.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TickLog {
    pub t: f64,
    pub commands: Vec<f64>,
    pub heights: Vec<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct RunLog {
    pub scenario: String,
    pub seed: u64,
    pub records: Vec<Record>,
    pub ticks: Vec<TickLog>,
    pub events: Vec<Event>,
}

impl RunLog {
    pub fn object_ids(&self) -> Vec<usize> {
        let mut ids: Vec<usize> = self.records.iter().map(|r| r.object).collect();
        ids.sort_unstable();
        ids.dedup();
        ids
    }

    /// `(t, [x, y, z])` samples of one object in time order.
    pub fn track(&self, object: usize) -> Vec<(f64, [f64; 3])> {
        self.records
            .iter()
            .filter(|r| r.object == object)
            .map(|r| (r.t, [r.x, r.y, r.z]))
            .collect()
    }

    /// Time of the last record, or zero for an empty log.
    pub fn end_time(&self) -> f64 {
        self.records.last().map_or(0.0, |r| r.t)
    }
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub log: RunLog,
    pub metrics: Metrics,
}

/// Steps a scenario one dynamics step at a time. Each object works through
/// its tasks in file order; the next one is submitted once the previous
/// finishes.
pub struct Runner {
    scenario: Scenario,
    world: World,
    queues: Vec<VecDeque<TaskConfig>>,
    legs: Vec<VecDeque<TaskRequest>>,
    total_steps: u64,
    log: RunLog,
}

impl Runner {
    pub fn new(scenario: &Scenario, seed: u64) -> Result<Self> {
        scenario.validate()?;
        let world = scenario.build_world(seed)?;
        let mut queues = vec![VecDeque::new(); scenario.objects.len()];
        for t in &scenario.tasks {
            queues[t.object].push_back(t.clone());
        }
        let total_steps = (scenario.duration * world.config().sim_rate).round() as u64;
        let mut runner = Self {
            scenario: scenario.clone(),
            world,
            legs: vec![VecDeque::new(); queues.len()],
            queues,
            total_steps,
            log: RunLog {
                scenario: scenario.name.clone(),
                seed,
                ..Default::default()
            },
        };
        runner.submit_pending()?;
        Ok(runner)
    }

    pub fn world(&self) -> &World {
        &self.world
    }

    pub fn total_steps(&self) -> u64 {
        self.total_steps
    }

    pub fn is_finished(&self) -> bool {
        self.world.step_index() >= self.total_steps
    }

    fn submit_pending(&mut self) -> Result<()> {
        for object in 0..self.queues.len() {
            let idle = self
                .world
                .latest_task_for(object)
                .is_none_or(|t| t.mode.is_terminal());
            if !idle {
                continue;
            }
            let seen = self.world.tracker_sample(object)?;
            let here = self.world.grid().detect_module(seen)?;
            if self.legs[object].is_empty() {
                if let Some(next) = self.queues[object].pop_front() {
                    self.legs[object] = next.requests(self.world.grid(), seen)?.into();
                }
            }
            if let Some(mut request) = self.legs[object].pop_front() {
                // A leg planned from where the object was expected to be is
                // replanned freely if it landed somewhere else.
                if request
                    .route
                    .as_ref()
                    .is_some_and(|r| r.first() != Some(&here))
                {
                    request.route = None;
                }
                self.world.submit(object, request)?;
                continue;
            }
            // Nothing left to do: send the object back if something pushed it
            // out of its target module.
            if let Some(task) = self
                .world
                .latest_task_for(object)
                .filter(|t| t.mode == TaskMode::Done)
            {
                if here != task.target_module {
                    let target = task.target;
                    self.world.submit(object, TaskRequest::reach(target))?;
                }
            }
        }
        Ok(())
    }

    /// Advances one dynamics step and logs it. Returns the control tick
    /// report when a tick ran during this step.
    pub fn step(&mut self) -> Result<Option<TickReport>> {
        self.submit_pending()?;
        let report = self.world.advance()?;
        if let Some(r) = &report {
            self.log.ticks.push(TickLog {
                t: r.time,
                commands: r.commands.clone(),
                heights: self.world.surface().heights().to_vec(),
            });
        }
        let t = self.world.sim_time();
        let grid = self.world.grid();
        for (id, obj) in self.world.objects().iter().enumerate() {
            let phase = self
                .world
                .active_task_for(id)
                .or_else(|| self.world.latest_task_for(id))
                .map_or("idle", |task| task.phase_label());
            self.log.records.push(Record {
                t,
                object: id,
                x: obj.position.x,
                y: obj.position.y,
                z: self.world.surface().surface_height(obj.position)?,
                module: grid.detect_module(obj.position)?.0,
                mode: obj.mode,
                phase: phase.to_string(),
            });
        }
        Ok(report)
    }

    /// Whether every object has finished its last task.
    pub fn all_done(&self) -> bool {
        self.queues.iter().all(VecDeque::is_empty)
            && self.legs.iter().all(VecDeque::is_empty)
            && self.world.tasks().iter().all(|t| t.mode.is_terminal())
    }

    pub fn finish(mut self) -> RunOutput {
        self.log.events = self.world.events().to_vec();
        let grid = self.world.grid();
        let pending: Vec<Option<Vec2>> = self
            .queues
            .iter()
            .zip(&self.legs)
            .map(|(q, legs)| match q.back() {
                Some(job) => job.final_target(grid),
                None => legs.back().map(|r| r.target),
            })
            .collect();
        let metrics = compute_metrics(&self.scenario, &self.world, &pending);
        RunOutput {
            log: self.log,
            metrics,
        }
    }
}

/// Simulates `scenario.duration` seconds with the scenario's own seed.
pub fn run_scenario(scenario: &Scenario) -> Result<RunOutput> {
    run_with_seed(scenario, scenario.seed)
}

pub fn run_with_seed(scenario: &Scenario, seed: u64) -> Result<RunOutput> {
    run_observed(scenario, seed, |_, _| {})
}

/// Like [`run_with_seed`], calling `observe` after every control tick.
pub fn run_observed(
    scenario: &Scenario,
    seed: u64,
    mut observe: impl FnMut(&World, &TickReport),
) -> Result<RunOutput> {
    let mut runner = Runner::new(scenario, seed)?;
    while !runner.is_finished() {
        if let Some(report) = runner.step()? {
            observe(runner.world(), &report);
        }
    }
    Ok(runner.finish())
}

/// True when no task failed and no object missed its target.
pub fn all_succeeded(out: &RunOutput) -> bool {
    out.metrics.objects.iter().all(|o| o.success)
        && !out
            .log
            .events
            .iter()
            .any(|e| matches!(e.kind, EventKind::TaskFailed { .. }))
}
