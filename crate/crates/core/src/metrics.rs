//! Run metrics and trajectory statistics.

use serde::{Deserialize, Serialize};

use crate::coordinator::{TaskMode, World};
use crate::error::{Error, Result};
use crate::geometry::Vec2;
use crate::grid::{ActuatorGrid, ModuleId};
use crate::object::Shape;
use crate::runner::RunLog;
use crate::scenario::Scenario;

pub const METRICS_SCHEMA: &str = "fabricsim.metrics/v1";

/// Samples per trajectory after time normalization.
pub const RESAMPLE_POINTS: usize = 200;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSummary {
    pub rows: usize,
    pub cols: usize,
    pub spacing: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectMetrics {
    pub object: usize,
    pub shape: Shape,
    pub start: Vec2,
    /// Target of the object's last task, if it has any.
    pub target: Option<Vec2>,
    pub final_position: Vec2,
    /// Distance to the target when the last task finished, or at the end
    /// of the run if it did not.
    pub final_error: f64,
    /// Distance to the target at the end of the run.
    pub end_error: f64,
    pub success: bool,
    /// Completion time of the last task, s.
    pub time_to_target: Option<f64>,
    pub hops: usize,
    pub retries: u32,
    pub tasks_done: usize,
    pub tasks_failed: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub schema: String,
    pub scenario: String,
    pub seed: u64,
    pub duration: f64,
    pub grid: GridSummary,
    pub objects: Vec<ObjectMetrics>,
    pub mean_error: f64,
    pub max_error: f64,
    pub all_succeeded: bool,
}

/// `pending[i]` is the final target of work object `i` has not started
/// yet, if any.
pub(crate) fn compute_metrics(
    scenario: &Scenario,
    world: &World,
    pending: &[Option<Vec2>],
) -> Metrics {
    let radius = world.config().done_radius;
    let grid = world.grid();
    let objects: Vec<ObjectMetrics> = world
        .objects()
        .iter()
        .enumerate()
        .map(|(id, obj)| {
            let tasks: Vec<_> = world.tasks().iter().filter(|t| t.object_id == id).collect();
            let mut hops = 0;
            let mut retries = 0;
            for t in &tasks {
                hops += t.hops;
                retries += t.retries;
                if let Some(tr) = &t.transfer {
                    hops += tr.hops_completed;
                    retries += tr.total_retries;
                }
            }
            let last = tasks.last();
            let pending = pending.get(id).copied().flatten();
            let (target, final_error, time_to_target) = match (pending, last) {
                (Some(target), _) => (Some(target), obj.position.distance(target), None),
                (None, Some(t)) => match (t.mode, t.final_error) {
                    (TaskMode::Done, Some(e)) => (Some(t.target), e, t.completed_at),
                    (_, Some(e)) => (Some(t.target), e, None),
                    _ => (Some(t.target), obj.position.distance(t.target), None),
                },
                (None, None) => (None, 0.0, None),
            };
            let start = scenario
                .objects
                .get(id)
                .map_or(obj.position, |o| o.position);
            ObjectMetrics {
                object: id,
                shape: obj.spec.shape,
                start,
                target,
                final_position: obj.position,
                final_error,
                end_error: target.map_or(0.0, |t| obj.position.distance(t)),
                success: final_error <= radius,
                time_to_target,
                hops,
                retries,
                tasks_done: tasks.iter().filter(|t| t.mode == TaskMode::Done).count(),
                tasks_failed: tasks.iter().filter(|t| t.mode == TaskMode::Failed).count(),
            }
        })
        .collect();
    let errors: Vec<f64> = objects.iter().map(|o| o.final_error).collect();
    let mean_error = if errors.is_empty() {
        0.0
    } else {
        errors.iter().sum::<f64>() / errors.len() as f64
    };
    Metrics {
        schema: METRICS_SCHEMA.to_string(),
        scenario: scenario.name.clone(),
        seed: world.seed(),
        duration: scenario.duration,
        grid: GridSummary {
            rows: grid.rows_modules(),
            cols: grid.cols_modules(),
            spacing: grid.spacing(),
        },
        all_succeeded: objects.iter().all(|o| o.success && o.tasks_failed == 0),
        max_error: errors.iter().copied().fold(0.0, f64::max),
        mean_error,
        objects,
    }
}

/// Linear interpolation of a time-ordered track at normalized time `s`.
fn sample_at(track: &[(f64, [f64; 3])], s: f64) -> [f64; 3] {
    let t0 = track[0].0;
    let t1 = track[track.len() - 1].0;
    if track.len() == 1 || t1 <= t0 {
        return track[0].1;
    }
    let t = t0 + s * (t1 - t0);
    let i = track.partition_point(|(ti, _)| *ti <= t);
    if i == 0 {
        return track[0].1;
    }
    if i >= track.len() {
        return track[track.len() - 1].1;
    }
    let (ta, a) = track[i - 1];
    let (tb, b) = track[i];
    let w = (t - ta) / (tb - ta);
    [0, 1, 2].map(|k| a[k] + w * (b[k] - a[k]))
}

/// Resamples a track to `n` points evenly spaced in normalized time.
pub fn resample(track: &[(f64, [f64; 3])], n: usize) -> Vec<[f64; 3]> {
    if track.is_empty() || n == 0 {
        return Vec::new();
    }
    let denom = (n.max(2) - 1) as f64;
    (0..n).map(|i| sample_at(track, i as f64 / denom)).collect()
}

/// Population standard deviation. Values are sorted first so the result
/// does not depend on their order.
fn population_std(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    var.sqrt()
}

/// Per-axis `(x, y, z)` mean standard deviation of one object's trajectory
/// across repeated runs, after resampling each run to
/// [`RESAMPLE_POINTS`] samples over its own duration.
pub fn compute_trajectory_std(logs: &[RunLog], object: usize) -> Result<[f64; 3]> {
    if logs.len() < 2 {
        return Err(Error::MismatchedLogs(format!(
            "need at least two runs, got {}",
            logs.len()
        )));
    }
    let first = &logs[0];
    for log in &logs[1..] {
        if log.scenario != first.scenario {
            return Err(Error::MismatchedLogs(format!(
                "scenario `{}` vs `{}`",
                first.scenario, log.scenario
            )));
        }
        if (log.end_time() - first.end_time()).abs() > 1e-9 {
            return Err(Error::MismatchedLogs(format!(
                "durations {} s vs {} s",
                first.end_time(),
                log.end_time()
            )));
        }
    }
    let runs = logs
        .iter()
        .map(|log| {
            let track = log.track(object);
            if track.is_empty() {
                Err(Error::MismatchedLogs(format!(
                    "object {object} missing from a run"
                )))
            } else {
                Ok(resample(&track, RESAMPLE_POINTS))
            }
        })
        .collect::<Result<Vec<_>>>()?;
    let mut out = [0.0; 3];
    let mut column = vec![0.0; runs.len()];
    for (axis, slot) in out.iter_mut().enumerate() {
        let mut total = 0.0;
        for i in 0..RESAMPLE_POINTS {
            for (c, run) in column.iter_mut().zip(&runs) {
                *c = run[i][axis];
            }
            total += population_std(&mut column);
        }
        *slot = total / RESAMPLE_POINTS as f64;
    }
    Ok(out)
}

/// Area enclosed by a path, closing it back to the first point.
pub fn enclosed_area(points: &[Vec2]) -> f64 {
    if points.len() < 3 {
        return 0.0;
    }
    let mut twice = 0.0;
    for (i, a) in points.iter().enumerate() {
        let b = points[(i + 1) % points.len()];
        twice += a.x * b.y - b.x * a.y;
    }
    twice.abs() / 2.0
}

/// Where a path moved from one module into an edge-adjacent one.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Crossing {
    pub from: ModuleId,
    pub to: ModuleId,
    pub point: Vec2,
    /// Distance from `point` to the midpoint of the shared edge.
    pub offset: f64,
}

pub fn boundary_crossings(grid: &ActuatorGrid, path: &[Vec2]) -> Vec<Crossing> {
    let mut out = Vec::new();
    let modules: Vec<Option<ModuleId>> = path.iter().map(|p| grid.detect_module(*p).ok()).collect();
    for i in 1..path.len() {
        let (Some(from), Some(to)) = (modules[i - 1], modules[i]) else {
            continue;
        };
        if from == to || !grid.are_adjacent(from, to) {
            continue;
        }
        let shared = grid
            .shared_actuators(from, to)
            .expect("adjacent modules share an edge");
        let (a, b) = (
            grid.actuator_position(shared[0]),
            grid.actuator_position(shared[1]),
        );
        let mid = (a + b) * 0.5;
        let (p, q) = (path[i - 1], path[i]);
        // The shared edge is axis-aligned: x = const if vertical.
        let w = if a.x == b.x {
            if q.x != p.x {
                (a.x - p.x) / (q.x - p.x)
            } else {
                0.0
            }
        } else if q.y != p.y {
            (a.y - p.y) / (q.y - p.y)
        } else {
            0.0
        };
        let point = p + (q - p) * w.clamp(0.0, 1.0);
        out.push(Crossing {
            from,
            to,
            point,
            offset: point.distance(mid),
        });
    }
    out
}
