//! Multi-object world: dynamics at the simulation rate, control at the
//! control rate, tracker sampling in between, and actuator leases that keep
//! concurrent tasks from driving the same actuators.
//!
//! Each task leases the actuators it needs (six for a hop, four for in-module
//! positioning). Leases persist while the need is unchanged and are granted
//! in task-id order; a task that cannot get its lease is deferred for the
//! tick and its clocks do not advance. With `corner_sharing`, two
//! positioning tasks on diagonal neighbours may share their single common
//! actuator, which then receives the mean of both commands.
//!
//! With `hold_finished`, an object whose last task is done keeps its
//! controller running while it stays in the target module and no active
//! task drives any of that module's actuators. Holds never lease; they
//! yield to tasks and average with each other on shared actuators.

use std::sync::Arc;

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Vec2;
use crate::grid::{ActuatorGrid, ActuatorId, ModuleId};
use crate::object::{step_object, DynamicsParams, ObjectSpec, ObjectState};
use crate::passing::{
    plan_route, plan_transfer, EdgeBias, PassingEvent, PassingParams, Phase, TransferTask,
};
use crate::position::{position_control_tick, ControllerParams, TiltController};
use crate::rng::{stream, SimRng, StreamKind};
use crate::surface::{SurfaceField, DEFAULT_ACTUATOR_RATE};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WorldConfig {
    /// Dynamics steps per second.
    pub sim_rate: f64,
    /// Tracker samples per second.
    pub tracker_rate: f64,
    /// Standard deviation of isotropic tracker noise, m.
    pub tracker_noise: f64,
    pub corner_sharing: bool,
    /// Keep position control running on finished objects whose module no
    /// active task is using.
    pub hold_finished: bool,
    /// Success radius around a target, m.
    pub done_radius: f64,
    /// Time an object must stay inside `done_radius`, s.
    pub done_hold: f64,
    /// Actuator slew rate, m/s. Configured with the grid in scenario files.
    #[serde(skip)]
    pub actuator_rate: f64,
}

impl Default for WorldConfig {
    fn default() -> Self {
        Self {
            sim_rate: 1000.0,
            tracker_rate: 200.0,
            tracker_noise: 0.0,
            corner_sharing: true,
            hold_finished: true,
            done_radius: 0.03,
            done_hold: 1.0,
            actuator_rate: DEFAULT_ACTUATOR_RATE,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskMode {
    Passing,
    Positioning,
    Done,
    Failed,
}

impl TaskMode {
    pub fn is_terminal(self) -> bool {
        matches!(self, TaskMode::Done | TaskMode::Failed)
    }
}

/// What a caller asks of one object.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskRequest {
    pub target: Vec2,
    /// Explicit module route; defaults to the Manhattan route.
    pub route: Option<Vec<ModuleId>>,
    pub bias: EdgeBias,
}

impl TaskRequest {
    pub fn reach(target: Vec2) -> Self {
        Self {
            target,
            route: None,
            bias: EdgeBias::None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TaskRecord {
    pub id: usize,
    pub object_id: usize,
    pub target: Vec2,
    pub target_module: ModuleId,
    pub mode: TaskMode,
    pub transfer: Option<TransferTask>,
    pub controller: TiltController,
    pub submitted_at: f64,
    pub completed_at: Option<f64>,
    /// Distance from the true object position to the target when the task
    /// finished.
    pub final_error: Option<f64>,
    pub hops: usize,
    pub retries: u32,
    pub deferred: bool,
    within_since: Option<f64>,
    dither_rng: SimRng,
}

impl TaskRecord {
    fn absorb_transfer_stats(&mut self) {
        if let Some(t) = &self.transfer {
            self.hops += t.hops_completed;
            self.retries += t.total_retries;
        }
    }

    /// Phase label used in logs.
    pub fn phase_label(&self) -> &'static str {
        match self.mode {
            TaskMode::Passing => self.transfer.as_ref().map_or("plan", |t| t.phase.as_str()),
            TaskMode::Positioning => "positioning",
            TaskMode::Done => "done",
            TaskMode::Failed => "failed",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ActuatorLease {
    pub task_id: usize,
    pub actuator_ids: Vec<ActuatorId>,
    pub acquired_at: f64,
    positioning: bool,
}

/// One task's share of an actuator's command during a tick.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Contribution {
    pub task: usize,
    pub command: f64,
    pub positioning: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TickReport {
    pub time: f64,
    pub commands: Vec<f64>,
    pub contributions: Vec<Vec<Contribution>>,
    pub deferred: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EventKind {
    TaskSubmitted {
        target: [f64; 2],
    },
    ModeSwitch {
        from: TaskMode,
        to: TaskMode,
    },
    HopStarted {
        hop: usize,
        from: ModuleId,
        to: ModuleId,
    },
    HopSucceeded {
        hop: usize,
        from: ModuleId,
        to: ModuleId,
    },
    HopRetry {
        hop: usize,
        retries: u32,
        h_raise: f64,
        t_raise: f64,
    },
    Replanned {
        landed: ModuleId,
        path: Vec<ModuleId>,
    },
    HopFailed {
        hop: usize,
    },
    LeaseAcquired {
        actuators: Vec<ActuatorId>,
    },
    LeaseReleased {
        actuators: Vec<ActuatorId>,
    },
    LeaseDeferred {
        blocked_by: Vec<usize>,
    },
    TaskDone {
        error: f64,
    },
    TaskFailed {
        error: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Event {
    pub time: f64,
    pub task: Option<usize>,
    pub object: Option<usize>,
    #[serde(flatten)]
    pub kind: EventKind,
}

pub struct World {
    grid: Arc<ActuatorGrid>,
    surface: SurfaceField,
    objects: Vec<ObjectState>,
    tasks: Vec<TaskRecord>,
    leases: Vec<ActuatorLease>,
    commands: Vec<f64>,
    dither: Vec<f64>,
    config: WorldConfig,
    dynamics: DynamicsParams,
    controller: ControllerParams,
    passing: PassingParams,
    seed: u64,
    wander_rngs: Vec<SimRng>,
    tracker_rngs: Vec<SimRng>,
    tracker: Vec<Vec2>,
    step: u64,
    steps_per_tick: u64,
    steps_per_sample: u64,
    events: Vec<Event>,
}

fn integer_ratio(num: f64, den: f64, what: &str) -> Result<u64> {
    let r = num / den;
    if !(r.is_finite() && r >= 1.0 && (r - r.round()).abs() < 1e-9) {
        return Err(Error::validation(
            what,
            format!("simulation rate {num} must be a whole multiple of {den}"),
        ));
    }
    Ok(r.round() as u64)
}

impl World {
    pub fn new(
        surface: SurfaceField,
        config: WorldConfig,
        dynamics: DynamicsParams,
        controller: ControllerParams,
        passing: PassingParams,
        seed: u64,
    ) -> Result<Self> {
        let steps_per_tick = integer_ratio(
            config.sim_rate,
            controller.control_rate,
            "controller.control_rate",
        )?;
        let steps_per_sample =
            integer_ratio(config.sim_rate, config.tracker_rate, "world.tracker_rate")?;
        let grid = surface.grid_arc().clone();
        passing.check(grid.height_limit())?;
        let n = grid.actuator_count();
        Ok(Self {
            grid,
            surface,
            objects: Vec::new(),
            tasks: Vec::new(),
            leases: Vec::new(),
            commands: vec![0.0; n],
            dither: vec![0.0; n],
            config,
            dynamics,
            controller,
            passing,
            seed,
            wander_rngs: Vec::new(),
            tracker_rngs: Vec::new(),
            tracker: Vec::new(),
            step: 0,
            steps_per_tick,
            steps_per_sample,
            events: Vec::new(),
        })
    }

    pub fn grid(&self) -> &ActuatorGrid {
        &self.grid
    }

    pub fn surface(&self) -> &SurfaceField {
        &self.surface
    }

    pub fn objects(&self) -> &[ObjectState] {
        &self.objects
    }

    pub fn tasks(&self) -> &[TaskRecord] {
        &self.tasks
    }

    pub fn leases(&self) -> &[ActuatorLease] {
        &self.leases
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn commands(&self) -> &[f64] {
        &self.commands
    }

    pub fn config(&self) -> &WorldConfig {
        &self.config
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn step_index(&self) -> u64 {
        self.step
    }

    pub fn dt(&self) -> f64 {
        1.0 / self.config.sim_rate
    }

    pub fn steps_per_tick(&self) -> u64 {
        self.steps_per_tick
    }

    pub fn steps_per_sample(&self) -> u64 {
        self.steps_per_sample
    }

    /// Simulated time, an exact multiple of the dynamics step.
    pub fn sim_time(&self) -> f64 {
        self.step as f64 / self.config.sim_rate
    }

    pub fn add_object(&mut self, spec: ObjectSpec, position: Vec2) -> Result<usize> {
        if !self.grid.contains(position) {
            return Err(Error::OutOfWorkspace {
                x: position.x,
                y: position.y,
            });
        }
        spec.check()
            .map_err(|(field, msg)| Error::validation(format!("object.{field}"), msg))?;
        let id = self.objects.len();
        self.objects.push(ObjectState::at_rest(spec, position));
        self.wander_rngs
            .push(stream(self.seed, StreamKind::Wander, id as u64));
        self.tracker_rngs
            .push(stream(self.seed, StreamKind::Tracker, id as u64));
        self.tracker.push(position);
        Ok(id)
    }

    fn push_event(&mut self, task: Option<usize>, object: Option<usize>, kind: EventKind) {
        self.events.push(Event {
            time: self.sim_time(),
            task,
            object,
            kind,
        });
    }

    pub fn active_task_for(&self, object_id: usize) -> Option<&TaskRecord> {
        self.tasks
            .iter()
            .find(|t| t.object_id == object_id && !t.mode.is_terminal())
    }

    /// Most recent task for an object, finished or not.
    pub fn latest_task_for(&self, object_id: usize) -> Option<&TaskRecord> {
        self.tasks.iter().rev().find(|t| t.object_id == object_id)
    }

    pub fn submit_task(&mut self, object_id: usize, target: Vec2) -> Result<usize> {
        self.submit(object_id, TaskRequest::reach(target))
    }

    pub fn submit(&mut self, object_id: usize, request: TaskRequest) -> Result<usize> {
        let object = *self
            .objects
            .get(object_id)
            .ok_or(Error::UnknownObject(object_id))?;
        if self.active_task_for(object_id).is_some() {
            return Err(Error::DuplicateTask(object_id));
        }
        let target = request.target;
        let target_module = self.grid.detect_module(target)?;
        let seen = self.tracker[object_id];
        let here = self.grid.detect_module(seen)?;
        let transfer = match &request.route {
            Some(route) => {
                if route.first() != Some(&here) {
                    return Err(Error::validation(
                        "route",
                        format!("must start at the object's module {here}"),
                    ));
                }
                if route.last() != Some(&target_module) {
                    return Err(Error::validation(
                        "route",
                        format!("must end at the target's module {target_module}"),
                    ));
                }
                plan_route(&self.grid, object_id, route.clone(), target, self.passing)?
            }
            None => plan_transfer(&self.grid, object_id, seen, target, self.passing)?,
        }
        .with_bias(request.bias);

        let id = self.tasks.len();
        let mode = if transfer.phase == Phase::Done {
            TaskMode::Positioning
        } else {
            TaskMode::Passing
        };
        let mut record = TaskRecord {
            id,
            object_id,
            target,
            target_module,
            mode,
            transfer: (mode == TaskMode::Passing).then_some(transfer),
            controller: TiltController::new(&self.controller, &self.grid),
            submitted_at: self.sim_time(),
            completed_at: None,
            final_error: None,
            hops: 0,
            retries: 0,
            deferred: false,
            within_since: None,
            dither_rng: stream(self.seed, StreamKind::Dither, id as u64),
        };
        let error = object.position.distance(target);
        let immediate =
            mode == TaskMode::Positioning && seen.distance(target) <= self.config.done_radius;
        if immediate {
            record.mode = TaskMode::Done;
            record.transfer = None;
            record.completed_at = Some(self.sim_time());
            record.final_error = Some(error);
        }
        self.tasks.push(record);
        self.push_event(
            Some(id),
            Some(object_id),
            EventKind::TaskSubmitted {
                target: target.into(),
            },
        );
        if immediate {
            self.push_event(Some(id), Some(object_id), EventKind::TaskDone { error });
        }
        Ok(id)
    }

    /// Latest held tracker measurement of an object.
    pub fn tracker_sample(&self, object_id: usize) -> Result<Vec2> {
        self.tracker
            .get(object_id)
            .copied()
            .ok_or(Error::UnknownObject(object_id))
    }

    fn sample_tracker(&mut self) {
        let sigma = self.config.tracker_noise;
        for (i, obj) in self.objects.iter().enumerate() {
            let mut p = obj.position;
            if sigma > 0.0 {
                let normal = Normal::new(0.0, sigma).expect("finite sigma");
                let rng = &mut self.tracker_rngs[i];
                p += Vec2::new(normal.sample(rng), normal.sample(rng));
                p = self.grid.clamp(p);
            }
            self.tracker[i] = p;
        }
    }

    fn release_lease(&mut self, task_id: usize) {
        if let Some(idx) = self.leases.iter().position(|l| l.task_id == task_id) {
            let lease = self.leases.remove(idx);
            let object = self.tasks[task_id].object_id;
            self.push_event(
                Some(task_id),
                Some(object),
                EventKind::LeaseReleased {
                    actuators: lease.actuator_ids,
                },
            );
        }
    }

    /// Tasks whose leases block `need` for a task of the given kind.
    fn blockers(&self, task_id: usize, need: &[ActuatorId], positioning: bool) -> Vec<usize> {
        self.leases
            .iter()
            .filter(|l| l.task_id != task_id)
            .filter(|l| {
                let overlap = l.actuator_ids.iter().filter(|a| need.contains(a)).count();
                let shareable =
                    self.config.corner_sharing && positioning && l.positioning && overlap == 1;
                overlap > 0 && !shareable
            })
            .map(|l| l.task_id)
            .collect()
    }

    fn finish_task(&mut self, task_id: usize, mode: TaskMode) {
        let object = self.tasks[task_id].object_id;
        let error = self.objects[object]
            .position
            .distance(self.tasks[task_id].target);
        let now = self.sim_time();
        let task = &mut self.tasks[task_id];
        task.absorb_transfer_stats();
        task.transfer = None;
        task.mode = mode;
        task.completed_at = Some(now);
        task.final_error = Some(error);
        let kind = match mode {
            TaskMode::Failed => EventKind::TaskFailed { error },
            _ => EventKind::TaskDone { error },
        };
        self.push_event(Some(task_id), Some(object), kind);
        self.release_lease(task_id);
    }

    fn switch_mode(&mut self, task_id: usize, to: TaskMode) {
        let from = self.tasks[task_id].mode;
        let object = self.tasks[task_id].object_id;
        self.tasks[task_id].mode = to;
        self.push_event(
            Some(task_id),
            Some(object),
            EventKind::ModeSwitch { from, to },
        );
    }

    fn record_passing_events(&mut self, task_id: usize, events: Vec<PassingEvent>) {
        let object = self.tasks[task_id].object_id;
        for e in events {
            let kind = match e {
                PassingEvent::HopStarted { hop, from, to } => {
                    EventKind::HopStarted { hop, from, to }
                }
                PassingEvent::HopSucceeded { hop, from, to } => {
                    EventKind::HopSucceeded { hop, from, to }
                }
                PassingEvent::Retry {
                    hop,
                    retries,
                    h_raise,
                    t_raise,
                } => EventKind::HopRetry {
                    hop,
                    retries,
                    h_raise,
                    t_raise,
                },
                PassingEvent::Replanned { landed, path } => EventKind::Replanned { landed, path },
                PassingEvent::Failed { hop } => EventKind::HopFailed { hop },
                PassingEvent::Done => continue,
            };
            self.push_event(Some(task_id), Some(object), kind);
        }
    }

    /// Reconciles a task's mode with where its object is before leasing.
    fn update_mode(&mut self, task_id: usize, measured: Vec2) -> Result<()> {
        let target_module = self.tasks[task_id].target_module;
        let here = self.grid.detect_module(measured)?;
        match self.tasks[task_id].mode {
            TaskMode::Passing => {
                let finished = self.tasks[task_id]
                    .transfer
                    .as_ref()
                    .is_none_or(|t| t.phase == Phase::Done);
                if finished && here == target_module {
                    let task = &mut self.tasks[task_id];
                    task.absorb_transfer_stats();
                    task.transfer = None;
                    task.controller.reset();
                    self.switch_mode(task_id, TaskMode::Positioning);
                } else if finished {
                    self.replan(task_id, measured)?;
                }
            }
            TaskMode::Positioning if here != target_module => {
                self.replan(task_id, measured)?;
                self.switch_mode(task_id, TaskMode::Passing);
            }
            _ => {}
        }
        Ok(())
    }

    fn replan(&mut self, task_id: usize, measured: Vec2) -> Result<()> {
        let task = &mut self.tasks[task_id];
        task.absorb_transfer_stats();
        let plan = plan_transfer(
            &self.grid,
            task.object_id,
            measured,
            task.target,
            self.passing,
        )?;
        task.transfer = Some(plan);
        task.within_since = None;
        Ok(())
    }

    fn lease_need(&self, task_id: usize, measured: Vec2) -> Result<(Vec<ActuatorId>, bool)> {
        let task = &self.tasks[task_id];
        Ok(match task.mode {
            TaskMode::Passing => (
                task.transfer
                    .as_ref()
                    .map(|t| t.hop_actuators(&self.grid))
                    .unwrap_or_default(),
                false,
            ),
            TaskMode::Positioning => {
                let m = self.grid.detect_module(measured)?;
                let mut a = self.grid.module_actuators(m)?.to_vec();
                a.sort();
                (a, true)
            }
            TaskMode::Done | TaskMode::Failed => (Vec::new(), false),
        })
    }

    /// Runs one control update: leases, controllers and the resulting
    /// actuator commands. Call once per `steps_per_tick` dynamics steps.
    pub fn coordinator_tick(&mut self) -> Result<TickReport> {
        let now = self.sim_time();
        let control_dt = 1.0 / self.controller.control_rate;
        let n = self.grid.actuator_count();
        let mut contributions: Vec<Vec<Contribution>> = vec![Vec::new(); n];
        let mut dither = vec![0.0; n];
        let mut deferred = Vec::new();

        for task_id in 0..self.tasks.len() {
            if self.tasks[task_id].mode.is_terminal() {
                continue;
            }
            let object = self.tasks[task_id].object_id;
            let measured = self.tracker[object];
            self.update_mode(task_id, measured)?;

            if self.tasks[task_id].mode == TaskMode::Positioning {
                let task = &mut self.tasks[task_id];
                if measured.distance(task.target) <= self.config.done_radius {
                    let since = *task.within_since.get_or_insert(now);
                    if now - since + 1e-9 >= self.config.done_hold {
                        self.finish_task(task_id, TaskMode::Done);
                        continue;
                    }
                } else {
                    task.within_since = None;
                }
            }

            let (need, positioning) = self.lease_need(task_id, measured)?;
            let held = self.leases.iter().find(|l| l.task_id == task_id);
            let keep = held.is_some_and(|l| l.actuator_ids == need && l.positioning == positioning);
            if !keep {
                self.release_lease(task_id);
                let blocked_by = self.blockers(task_id, &need, positioning);
                if !blocked_by.is_empty() {
                    if !self.tasks[task_id].deferred {
                        self.push_event(
                            Some(task_id),
                            Some(object),
                            EventKind::LeaseDeferred { blocked_by },
                        );
                    }
                    self.tasks[task_id].deferred = true;
                    deferred.push(task_id);
                    continue;
                }
                self.leases.push(ActuatorLease {
                    task_id,
                    actuator_ids: need.clone(),
                    acquired_at: now,
                    positioning,
                });
                self.push_event(
                    Some(task_id),
                    Some(object),
                    EventKind::LeaseAcquired { actuators: need },
                );
            }
            self.tasks[task_id].deferred = false;

            let cmds = match self.tasks[task_id].mode {
                TaskMode::Passing => {
                    let task = &mut self.tasks[task_id];
                    let transfer = task.transfer.as_mut().expect("passing task has a transfer");
                    let (cmds, events) = transfer.tick(&self.grid, measured, control_dt);
                    let failed = transfer.phase == Phase::Failed;
                    self.record_passing_events(task_id, events);
                    if failed {
                        self.finish_task(task_id, TaskMode::Failed);
                        continue;
                    }
                    cmds
                }
                TaskMode::Positioning => {
                    let task = &mut self.tasks[task_id];
                    let cmds = position_control_tick(
                        &mut task.controller,
                        &self.grid,
                        measured,
                        task.target,
                        &mut task.dither_rng,
                    )?;
                    for (a, _) in &cmds {
                        dither[a.0] = f64::max(dither[a.0], task.controller.dither_amp);
                    }
                    cmds
                }
                TaskMode::Done | TaskMode::Failed => Vec::new(),
            };
            for (a, command) in cmds {
                contributions[a.0].push(Contribution {
                    task: task_id,
                    command,
                    positioning,
                });
            }
        }

        if self.config.hold_finished {
            self.hold_finished(&mut contributions, &mut dither)?;
        }

        for (cmd, contrib) in self.commands.iter_mut().zip(&contributions) {
            *cmd = if contrib.is_empty() {
                0.0
            } else {
                contrib.iter().map(|c| c.command).sum::<f64>() / contrib.len() as f64
            };
        }
        self.dither = dither;
        Ok(TickReport {
            time: now,
            commands: self.commands.clone(),
            contributions,
            deferred,
        })
    }

    fn hold_finished(
        &mut self,
        contributions: &mut [Vec<Contribution>],
        dither: &mut [f64],
    ) -> Result<()> {
        let busy: Vec<bool> = contributions.iter().map(|c| !c.is_empty()).collect();
        for object in 0..self.objects.len() {
            let Some(task_id) = self.latest_task_for(object).map(|t| t.id) else {
                continue;
            };
            if self.tasks[task_id].mode != TaskMode::Done {
                continue;
            }
            let measured = self.tracker[object];
            let m = self.grid.detect_module(measured)?;
            if m != self.tasks[task_id].target_module {
                continue;
            }
            if self.grid.module_actuators(m)?.iter().any(|a| busy[a.0]) {
                continue;
            }
            let task = &mut self.tasks[task_id];
            let cmds = position_control_tick(
                &mut task.controller,
                &self.grid,
                measured,
                task.target,
                &mut task.dither_rng,
            )?;
            for (a, command) in cmds {
                dither[a.0] = f64::max(dither[a.0], task.controller.dither_amp);
                contributions[a.0].push(Contribution {
                    task: task_id,
                    command,
                    positioning: true,
                });
            }
        }
        Ok(())
    }

    /// Dither amplitude felt by an object: the strongest vibration among
    /// its module's actuators.
    fn dither_at(&self, p: Vec2) -> f64 {
        let m = self
            .grid
            .detect_module(p)
            .expect("objects stay on the platform");
        self.grid
            .module_actuators(m)
            .expect("valid module")
            .iter()
            .map(|a| self.dither[a.0])
            .fold(0.0, f64::max)
    }

    fn integrate(&mut self) {
        let dt = self.dt();
        self.surface
            .apply_commands(&self.commands, dt, self.config.actuator_rate);
        for i in 0..self.objects.len() {
            let dither = self.dither_at(self.objects[i].position);
            self.objects[i] = step_object(
                &self.objects[i],
                &self.surface,
                dither,
                dt,
                &self.dynamics,
                &mut self.wander_rngs[i],
            );
        }
        self.step += 1;
    }

    /// One dynamics step, preceded by a tracker sample and a control tick
    /// whenever they fall due.
    pub fn advance(&mut self) -> Result<Option<TickReport>> {
        if self.step.is_multiple_of(self.steps_per_sample) {
            self.sample_tracker();
        }
        let report = if self.step.is_multiple_of(self.steps_per_tick) {
            Some(self.coordinator_tick()?)
        } else {
            None
        };
        self.integrate();
        Ok(report)
    }

    pub fn all_tasks_terminal(&self) -> bool {
        self.tasks.iter().all(|t| t.mode.is_terminal())
    }
}
