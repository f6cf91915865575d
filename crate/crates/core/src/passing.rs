//! Inter-module object passing as a timed state machine.
//!
//! Each hop raises the two source-module actuators away from the shared
//! edge and lowers the shared edge plus the far side of the destination,
//! holds for `t_raise`, levels the six actuators for `t_settle`, then checks
//! the tracker. A failed hop is retried with a higher, longer raise.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Vec2;
use crate::grid::{ActuatorGrid, ActuatorId, ModuleId};

const CLOCK_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PassingParams {
    /// Offset commanded to the raised actuators, m.
    pub h_raise: f64,
    /// Depth commanded (as a negative offset) to the lowered actuators, m.
    pub h_lower: f64,
    /// s
    pub t_raise: f64,
    /// s
    pub t_settle: f64,
    /// Multiplier applied to `h_raise` on each retry.
    pub raise_gain: f64,
    /// Seconds added to `t_raise` on each retry.
    pub t_raise_step: f64,
    pub max_retries: u32,
}

impl Default for PassingParams {
    fn default() -> Self {
        Self {
            h_raise: 0.15,
            h_lower: 0.07,
            t_raise: 2.0,
            t_settle: 1.0,
            raise_gain: 1.25,
            t_raise_step: 0.5,
            max_retries: 5,
        }
    }
}

impl PassingParams {
    /// Retry adaptation: `h_raise` grows by `raise_gain` up to the stroke
    /// limit, `t_raise` grows by `t_raise_step`.
    pub fn escalate(&self, height_limit: f64) -> PassingParams {
        PassingParams {
            h_raise: (self.h_raise * self.raise_gain).min(height_limit),
            t_raise: self.t_raise + self.t_raise_step,
            ..*self
        }
    }

    pub fn check(&self, height_limit: f64) -> Result<()> {
        let bad =
            |field: &str, msg: String| Err(Error::validation(format!("passing.{field}"), msg));
        if !(self.h_raise > 0.0 && self.h_raise <= height_limit) {
            return bad(
                "h_raise",
                format!("must be in (0, {height_limit}], got {}", self.h_raise),
            );
        }
        if !(self.h_lower >= 0.0 && self.h_lower <= height_limit) {
            return bad(
                "h_lower",
                format!("must be in [0, {height_limit}], got {}", self.h_lower),
            );
        }
        if !(self.t_raise > 0.0) {
            return bad("t_raise", "must be positive".into());
        }
        if !(self.t_settle > 0.0) {
            return bad("t_settle", "must be positive".into());
        }
        if !(self.raise_gain >= 1.0) {
            return bad("raise_gain", "must be at least 1".into());
        }
        if !(self.t_raise_step > 0.0) {
            return bad("t_raise_step", "must be positive".into());
        }
        Ok(())
    }
}

pub fn escalate(params: &PassingParams, height_limit: f64) -> PassingParams {
    params.escalate(height_limit)
}

/// Which shared-edge actuator to lift during a hop, steering where the
/// object crosses. Used to reproduce the small and large square paths.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "actuator", content = "height")]
pub enum EdgeBias {
    #[default]
    None,
    /// Raise the shared actuator nearer the platform center by this much
    /// above its lowered command.
    Center(f64),
    /// Raise the shared actuator nearer the platform rim by this much above
    /// its lowered command.
    Outer(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Plan,
    Raise,
    Settle,
    Verify,
    Retry,
    Done,
    Failed,
}

impl Phase {
    pub fn as_str(self) -> &'static str {
        match self {
            Phase::Plan => "plan",
            Phase::Raise => "raise",
            Phase::Settle => "settle",
            Phase::Verify => "verify",
            Phase::Retry => "retry",
            Phase::Done => "done",
            Phase::Failed => "failed",
        }
    }

    pub fn is_terminal(self) -> bool {
        matches!(self, Phase::Done | Phase::Failed)
    }
}

/// Notable outcomes of a passing tick.
#[derive(Debug, Clone, PartialEq)]
pub enum PassingEvent {
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
    Retry {
        hop: usize,
        retries: u32,
        h_raise: f64,
        t_raise: f64,
    },
    Replanned {
        landed: ModuleId,
        path: Vec<ModuleId>,
    },
    Failed {
        hop: usize,
    },
    Done,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransferTask {
    pub object_id: usize,
    pub target: Vec2,
    pub path: Vec<ModuleId>,
    pub hop_index: usize,
    pub phase: Phase,
    pub phase_clock: f64,
    /// Parameters for the hop in progress (escalated on retries).
    pub params: PassingParams,
    /// Preferred parameters restored after every successful hop.
    pub base_params: PassingParams,
    pub retries_this_hop: u32,
    pub total_retries: u32,
    pub hops_completed: usize,
    pub bias: EdgeBias,
    height_limit: f64,
}

/// Plans a transfer along the Manhattan route from the object's module to
/// the target's module. A same-module request is immediately `Done`.
pub fn plan_transfer(
    grid: &ActuatorGrid,
    object_id: usize,
    object_p: Vec2,
    target_p: Vec2,
    params: PassingParams,
) -> Result<TransferTask> {
    let from = grid.detect_module(object_p)?;
    let to = grid.detect_module(target_p)?;
    let path = grid.find_path(from, to)?;
    plan_route(grid, object_id, path, target_p, params)
}

/// Plans a transfer along an explicit chain of edge-adjacent modules.
pub fn plan_route(
    grid: &ActuatorGrid,
    object_id: usize,
    path: Vec<ModuleId>,
    target_p: Vec2,
    params: PassingParams,
) -> Result<TransferTask> {
    if path.is_empty() {
        return Err(Error::validation(
            "route",
            "must contain at least one module",
        ));
    }
    for w in path.windows(2) {
        if !grid.are_adjacent(w[0], w[1]) {
            return Err(Error::NotAdjacent {
                from: w[0],
                to: w[1],
            });
        }
    }
    if !grid.contains(target_p) {
        return Err(Error::OutOfWorkspace {
            x: target_p.x,
            y: target_p.y,
        });
    }
    let phase = if path.len() == 1 {
        Phase::Done
    } else {
        Phase::Plan
    };
    Ok(TransferTask {
        object_id,
        target: target_p,
        path,
        hop_index: 0,
        phase,
        phase_clock: 0.0,
        params,
        base_params: params,
        retries_this_hop: 0,
        total_retries: 0,
        hops_completed: 0,
        bias: EdgeBias::None,
        height_limit: grid.height_limit(),
    })
}

impl TransferTask {
    pub fn with_bias(mut self, bias: EdgeBias) -> Self {
        self.bias = bias;
        self
    }

    pub fn hop_count(&self) -> usize {
        self.path.len().saturating_sub(1)
    }

    /// Source and destination of the hop in progress.
    pub fn current_hop(&self) -> Option<(ModuleId, ModuleId)> {
        if self.phase.is_terminal() || self.hop_index + 1 >= self.path.len() {
            return None;
        }
        Some((self.path[self.hop_index], self.path[self.hop_index + 1]))
    }

    /// The six actuators the current hop drives.
    pub fn hop_actuators(&self, grid: &ActuatorGrid) -> Vec<ActuatorId> {
        let Some((from, to)) = self.current_hop() else {
            return Vec::new();
        };
        let sets = grid
            .actuators_to_raise(from, to)
            .expect("planned hops are edge-adjacent");
        let mut all: Vec<ActuatorId> = sets.all().collect();
        all.sort();
        all
    }

    fn raise_commands(&self, grid: &ActuatorGrid) -> Vec<(ActuatorId, f64)> {
        let (from, to) = self.current_hop().expect("raise requires an active hop");
        let sets = grid
            .actuators_to_raise(from, to)
            .expect("planned hops are edge-adjacent");
        let mut cmds: Vec<(ActuatorId, f64)> = sets
            .raise
            .iter()
            .map(|&a| (a, self.params.h_raise))
            .chain(sets.lower.iter().map(|&a| (a, -self.params.h_lower)))
            .collect();
        let shared = sets.shared();
        let (inner, outer) = grid.inner_outer(shared[0], shared[1]);
        let lifted = match self.bias {
            EdgeBias::None => None,
            EdgeBias::Center(h) => Some((inner, h)),
            EdgeBias::Outer(h) => Some((outer, h)),
        };
        if let Some((a, h)) = lifted {
            for c in cmds.iter_mut().filter(|c| c.0 == a) {
                c.1 = (c.1 + h).clamp(-self.height_limit, self.height_limit);
            }
        }
        cmds.sort_by_key(|c| c.0);
        cmds
    }

    fn level_commands(&self, grid: &ActuatorGrid) -> Vec<(ActuatorId, f64)> {
        self.hop_actuators(grid)
            .into_iter()
            .map(|a| (a, 0.0))
            .collect()
    }

    /// Advances the state machine by one control period. `measured` is the
    /// latest tracker sample of the object.
    pub fn tick(
        &mut self,
        grid: &ActuatorGrid,
        measured: Vec2,
        dt: f64,
    ) -> (Vec<(ActuatorId, f64)>, Vec<PassingEvent>) {
        let mut events = Vec::new();
        match self.phase {
            Phase::Done | Phase::Failed => (Vec::new(), events),
            Phase::Plan | Phase::Retry => {
                let (from, to) = self.current_hop().expect("non-terminal task has a hop");
                if self.phase == Phase::Plan {
                    events.push(PassingEvent::HopStarted {
                        hop: self.hop_index,
                        from,
                        to,
                    });
                }
                self.phase = Phase::Raise;
                self.phase_clock = 0.0;
                (self.raise_step(grid, dt), events)
            }
            Phase::Raise => (self.raise_step(grid, dt), events),
            Phase::Settle => {
                let cmds = self.level_commands(grid);
                self.phase_clock += dt;
                if self.phase_clock + CLOCK_EPS >= self.params.t_settle {
                    self.phase = Phase::Verify;
                    self.phase_clock = 0.0;
                }
                (cmds, events)
            }
            Phase::Verify => {
                let cmds = self.level_commands(grid);
                self.verify(grid, measured, &mut events);
                (cmds, events)
            }
        }
    }

    fn raise_step(&mut self, grid: &ActuatorGrid, dt: f64) -> Vec<(ActuatorId, f64)> {
        let cmds = self.raise_commands(grid);
        self.phase_clock += dt;
        if self.phase_clock + CLOCK_EPS >= self.params.t_raise {
            self.phase = Phase::Settle;
            self.phase_clock = 0.0;
        }
        cmds
    }

    fn verify(&mut self, grid: &ActuatorGrid, measured: Vec2, events: &mut Vec<PassingEvent>) {
        let (from, _) = self.current_hop().expect("verify requires an active hop");
        let landed = grid
            .detect_module(grid.clamp(measured))
            .expect("clamped point is in bounds");
        let last = *self.path.last().expect("path is non-empty");
        // Rolling past the destination further along the route counts as
        // completing every hop up to where the object landed.
        let ahead = self.path[self.hop_index + 1..]
            .iter()
            .position(|&m| m == landed)
            .map(|k| self.hop_index + 1 + k);
        if let Some(reached) = ahead {
            for hop in self.hop_index..reached {
                events.push(PassingEvent::HopSucceeded {
                    hop,
                    from: self.path[hop],
                    to: self.path[hop + 1],
                });
            }
            self.hops_completed += reached - self.hop_index;
            self.hop_index = reached;
            self.retries_this_hop = 0;
            self.params = self.base_params;
            self.phase_clock = 0.0;
            if self.hop_index + 1 >= self.path.len() {
                self.phase = Phase::Done;
                events.push(PassingEvent::Done);
            } else {
                let (from, to) = self.current_hop().expect("more hops remain");
                events.push(PassingEvent::HopStarted {
                    hop: self.hop_index,
                    from,
                    to,
                });
                self.phase = Phase::Raise;
            }
            return;
        }

        self.retries_this_hop += 1;
        self.total_retries += 1;
        if self.retries_this_hop > self.params.max_retries {
            self.phase = Phase::Failed;
            events.push(PassingEvent::Failed {
                hop: self.hop_index,
            });
            return;
        }
        self.params = self.params.escalate(self.height_limit);
        self.phase_clock = 0.0;
        events.push(PassingEvent::Retry {
            hop: self.hop_index,
            retries: self.retries_this_hop,
            h_raise: self.params.h_raise,
            t_raise: self.params.t_raise,
        });
        if landed == from {
            self.phase = Phase::Raise;
        } else {
            // Rolled somewhere off the planned route.
            self.path = grid.find_path(landed, last).expect("modules are valid");
            self.hop_index = 0;
            events.push(PassingEvent::Replanned {
                landed,
                path: self.path.clone(),
            });
            self.phase = if self.path.len() == 1 {
                events.push(PassingEvent::Done);
                Phase::Done
            } else {
                Phase::Retry
            };
        }
    }
}

/// Free-function form of [`TransferTask::tick`].
pub fn passing_tick(
    task: &mut TransferTask,
    grid: &ActuatorGrid,
    measured: Vec2,
    dt: f64,
) -> Vec<(ActuatorId, f64)> {
    task.tick(grid, measured, dt).0
}

#[cfg(test)]
mod tests {
    use approx::assert_abs_diff_eq;

    use super::*;

    fn grid22() -> ActuatorGrid {
        ActuatorGrid::new(2, 2, 0.5, 1.5).unwrap()
    }

    fn center(g: &ActuatorGrid, m: usize) -> Vec2 {
        g.module_center(ModuleId(m))
    }

    #[test]
    fn escalate_examples() {
        let p = PassingParams {
            h_raise: 0.15,
            t_raise: 2.0,
            ..Default::default()
        };
        let e = p.escalate(0.2);
        assert_abs_diff_eq!(e.h_raise, 0.1875, epsilon = 1e-15);
        assert_eq!(e.t_raise, 2.5);
        let capped = PassingParams {
            h_raise: 0.2,
            t_raise: 3.0,
            ..Default::default()
        }
        .escalate(0.2);
        assert_eq!((capped.h_raise, capped.t_raise), (0.2, 3.5));
        let mut q = p;
        for _ in 0..10 {
            let next = q.escalate(0.2);
            assert!(next.h_raise >= q.h_raise && next.t_raise > q.t_raise);
            q = next;
        }
        assert_eq!(q.h_raise, 0.2);
    }

    #[test]
    fn plan_examples() {
        let g = grid22();
        let p = PassingParams::default();
        let t = plan_transfer(&g, 0, Vec2::new(0.1, 0.1), Vec2::new(0.3, 0.4), p).unwrap();
        assert_eq!(t.phase, Phase::Done);
        assert_eq!(t.hop_count(), 0);
        let t = plan_transfer(&g, 0, center(&g, 0), center(&g, 2), p).unwrap();
        assert_eq!(t.path, vec![ModuleId(0), ModuleId(2)]);
        assert_eq!(t.hop_count(), 1);
        let t = plan_transfer(&g, 0, center(&g, 0), center(&g, 3), p).unwrap();
        assert_eq!(t.path, vec![ModuleId(0), ModuleId(2), ModuleId(3)]);
        assert!(plan_transfer(&g, 0, Vec2::new(2.0, 0.0), center(&g, 3), p).is_err());
        assert!(plan_route(&g, 0, vec![ModuleId(0), ModuleId(3)], center(&g, 3), p).is_err());
    }

    #[test]
    fn raise_commands_for_m0_to_m2() {
        let g = grid22();
        let p = PassingParams {
            h_lower: 0.15,
            ..Default::default()
        };
        let mut t = plan_transfer(&g, 0, center(&g, 0), center(&g, 2), p).unwrap();
        let (cmds, events) = t.tick(&g, center(&g, 0), 0.05);
        assert_eq!(t.phase, Phase::Raise);
        assert_eq!(
            events,
            vec![PassingEvent::HopStarted {
                hop: 0,
                from: ModuleId(0),
                to: ModuleId(2)
            }]
        );
        let expect: Vec<(ActuatorId, f64)> = [
            (0, 0.15),
            (1, 0.15),
            (3, -0.15),
            (4, -0.15),
            (6, -0.15),
            (7, -0.15),
        ]
        .into_iter()
        .map(|(a, h)| (ActuatorId(a), h))
        .collect();
        assert_eq!(cmds, expect);
    }

    fn run_until(t: &mut TransferTask, g: &ActuatorGrid, p: Vec2, phase: Phase) -> usize {
        let mut n = 0;
        while t.phase != phase {
            t.tick(g, p, 0.05);
            n += 1;
            assert!(n < 10_000);
        }
        n
    }

    #[test]
    fn phase_timing_follows_parameters() {
        let g = grid22();
        let mut t = plan_transfer(
            &g,
            0,
            center(&g, 0),
            center(&g, 2),
            PassingParams::default(),
        )
        .unwrap();
        // 40 raise ticks, 20 settle ticks
        assert_eq!(run_until(&mut t, &g, center(&g, 0), Phase::Settle), 40);
        assert_eq!(run_until(&mut t, &g, center(&g, 0), Phase::Verify), 20);
        let (cmds, _) = t.tick(&g, center(&g, 0), 0.05);
        assert!(cmds.iter().all(|c| c.1 == 0.0) && cmds.len() == 6);
    }

    #[test]
    fn verify_success_advances_or_finishes() {
        let g = grid22();
        let mut t = plan_transfer(
            &g,
            0,
            center(&g, 0),
            center(&g, 3),
            PassingParams::default(),
        )
        .unwrap();
        run_until(&mut t, &g, center(&g, 0), Phase::Verify);
        let (_, ev) = t.tick(&g, center(&g, 2), 0.05);
        assert_eq!(t.hop_index, 1);
        assert_eq!(t.phase, Phase::Raise);
        assert!(matches!(ev[0], PassingEvent::HopSucceeded { hop: 0, .. }));
        run_until(&mut t, &g, center(&g, 2), Phase::Verify);
        let (_, ev) = t.tick(&g, center(&g, 3), 0.05);
        assert_eq!(t.phase, Phase::Done);
        assert_eq!(ev.last(), Some(&PassingEvent::Done));
        assert_eq!(t.hops_completed, 2);
        assert_eq!(t.total_retries, 0);
    }

    #[test]
    fn verify_failure_escalates() {
        let g = grid22();
        let mut t = plan_transfer(
            &g,
            0,
            center(&g, 0),
            center(&g, 2),
            PassingParams::default(),
        )
        .unwrap();
        run_until(&mut t, &g, center(&g, 0), Phase::Verify);
        let (_, ev) = t.tick(&g, center(&g, 0), 0.05);
        assert_abs_diff_eq!(t.params.h_raise, 0.1875f64.min(0.2), epsilon = 1e-15);
        assert_eq!(t.params.t_raise, 2.5);
        assert_eq!(t.phase, Phase::Raise);
        assert_eq!(t.retries_this_hop, 1);
        assert!(matches!(ev[0], PassingEvent::Retry { retries: 1, .. }));
        let (cmds, _) = t.tick(&g, center(&g, 0), 0.05);
        assert_abs_diff_eq!(cmds[0].1, 0.1875, epsilon = 1e-15);
    }

    #[test]
    fn exhausting_retries_fails_within_bound() {
        let g = grid22();
        let p = PassingParams::default();
        let mut t = plan_transfer(&g, 0, center(&g, 0), center(&g, 2), p).unwrap();
        let dt = 0.05;
        let mut elapsed = 0.0;
        let mut last_h = 0.0;
        let mut last_t = 0.0;
        while !t.phase.is_terminal() {
            assert!(t.params.h_raise >= last_h && t.params.h_raise <= 0.2);
            assert!(t.params.t_raise >= last_t);
            last_h = t.params.h_raise;
            last_t = t.params.t_raise;
            t.tick(&g, center(&g, 0), dt);
            elapsed += dt;
        }
        assert_eq!(t.phase, Phase::Failed);
        assert_eq!(t.retries_this_hop, p.max_retries + 1);
        let t_max = p.t_raise + p.max_retries as f64 * p.t_raise_step;
        let bound = (p.max_retries + 1) as f64 * (t_max + p.t_settle + 3.0 * dt);
        assert!(elapsed <= bound, "{elapsed} > {bound}");
    }

    #[test]
    fn overshooting_along_the_route_skips_ahead() {
        let g = ActuatorGrid::new(3, 3, 0.5, 1.5).unwrap();
        let mut t = plan_transfer(
            &g,
            0,
            center(&g, 0),
            center(&g, 8),
            PassingParams::default(),
        )
        .unwrap();
        assert_eq!(
            t.path,
            vec![
                ModuleId(0),
                ModuleId(3),
                ModuleId(6),
                ModuleId(7),
                ModuleId(8)
            ]
        );
        run_until(&mut t, &g, center(&g, 0), Phase::Verify);
        let (_, ev) = t.tick(&g, center(&g, 6), 0.05);
        assert_eq!((t.hop_index, t.hops_completed, t.total_retries), (2, 2, 0));
        let ok = ev
            .iter()
            .filter(|e| matches!(e, PassingEvent::HopSucceeded { .. }))
            .count();
        assert_eq!(ok, 2);
        assert_eq!(t.current_hop(), Some((ModuleId(6), ModuleId(7))));
    }

    #[test]
    fn landing_off_route_replans() {
        let g = ActuatorGrid::new(3, 3, 0.5, 1.5).unwrap();
        let mut t = plan_transfer(
            &g,
            0,
            center(&g, 0),
            center(&g, 6),
            PassingParams::default(),
        )
        .unwrap();
        run_until(&mut t, &g, center(&g, 0), Phase::Verify);
        let (_, ev) = t.tick(&g, center(&g, 1), 0.05);
        assert_eq!(t.phase, Phase::Retry);
        assert_eq!(
            t.path,
            vec![ModuleId(1), ModuleId(4), ModuleId(7), ModuleId(6)]
        );
        assert!(ev
            .iter()
            .any(|e| matches!(e, PassingEvent::Replanned { .. })));
        t.tick(&g, center(&g, 1), 0.05);
        assert_eq!(t.phase, Phase::Raise);
    }

    #[test]
    fn commands_touch_only_hop_actuators() {
        let g = ActuatorGrid::new(3, 3, 0.5, 1.5).unwrap();
        let mut t = plan_transfer(
            &g,
            0,
            center(&g, 4),
            center(&g, 5),
            PassingParams::default(),
        )
        .unwrap()
        .with_bias(EdgeBias::Outer(0.1));
        let allowed = t.hop_actuators(&g);
        for _ in 0..100 {
            let (cmds, _) = t.tick(&g, center(&g, 4), 0.05);
            assert!(cmds.iter().all(|(a, _)| allowed.contains(a)));
            if t.phase.is_terminal() {
                break;
            }
        }
    }

    #[test]
    fn bias_lifts_the_chosen_shared_actuator() {
        let g = grid22();
        let base = plan_transfer(
            &g,
            0,
            center(&g, 0),
            center(&g, 1),
            PassingParams::default(),
        )
        .unwrap();
        // Hop M0 -> M1 shares A1 (rim) and A4 (center).
        let lookup = |cmds: &[(ActuatorId, f64)], a: usize| {
            cmds.iter().find(|c| c.0 == ActuatorId(a)).unwrap().1
        };
        let low = -PassingParams::default().h_lower;
        let mut t = base.clone().with_bias(EdgeBias::Center(0.1));
        let (c, _) = t.tick(&g, center(&g, 0), 0.05);
        assert_eq!((lookup(&c, 4), lookup(&c, 1)), (low + 0.1, low));
        let mut t = base.clone().with_bias(EdgeBias::Outer(0.1));
        let (c, _) = t.tick(&g, center(&g, 0), 0.05);
        assert_eq!((lookup(&c, 4), lookup(&c, 1)), (low, low + 0.1));
        let mut t = base;
        let (c, _) = t.tick(&g, center(&g, 0), 0.05);
        assert_eq!((lookup(&c, 4), lookup(&c, 1)), (low, low));
    }
}
