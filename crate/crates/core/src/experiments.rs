//! Built-in experiment scenarios and their evaluations.
//!
//! - passing: an object goes from the center of M0 to the center of M2 and
//!   back, repeated over seeds to measure run-to-run spread per shape;
//! - square: a sphere loops M0 -> M1 -> M3 -> M2 -> M0 twice with the
//!   normal, small and large edge biases;
//! - target: random start/target pairs on a single module;
//! - multi: a sphere and a disk on a 2x2 grid with crossing routes;
//! - scale: two spheres swapping corners of a 3x3 grid.

use rand::Rng;

use crate::error::Result;
use crate::geometry::Vec2;
use crate::grid::ModuleId;
use crate::metrics::{boundary_crossings, compute_trajectory_std, enclosed_area, ObjectMetrics};
use crate::object::Shape;
use crate::rng::{stream, StreamKind};
use crate::runner::{run_with_seed, RunOutput};
use crate::scenario::{ObjectConfig, Scenario, SquareVariant, TaskConfig};

pub const SEEDS: [u64; 3] = [1, 2, 3];

/// Shapes used in the passing experiment.
pub const PASSING_SHAPES: [Shape; 7] = Shape::ALL;

fn center(s: &Scenario, m: usize) -> Vec2 {
    s.grid
        .build()
        .expect("built-in grid is valid")
        .module_center(ModuleId(m))
}

pub fn passing_scenario(shape: Shape) -> Scenario {
    let mut s = Scenario::new(format!("passing_{}", shape.name()), 2, 2);
    s.duration = 40.0;
    let (m0, m2) = (center(&s, 0), center(&s, 2));
    s.objects.push(ObjectConfig::new(shape, m0));
    s.tasks.push(TaskConfig::reach(0, m2));
    s.tasks.push(TaskConfig::reach(0, m0));
    s
}

/// Single hop from the center of M0 to the center of M2, optionally with
/// the object's static friction overridden.
pub fn transfer_scenario(shape: Shape, mu_static: Option<f64>) -> Scenario {
    let mut s = Scenario::new(format!("transfer_{}", shape.name()), 2, 2);
    s.duration = 40.0;
    let (m0, m2) = (center(&s, 0), center(&s, 2));
    let mut object = ObjectConfig::new(shape, m0);
    object.mu_static = mu_static;
    s.objects.push(object);
    s.tasks.push(TaskConfig::reach(0, m2));
    s
}

#[derive(Debug, Clone)]
pub struct PassingResult {
    pub shape: Shape,
    /// Mean per-axis trajectory standard deviation across seeds, m.
    pub std: [f64; 3],
    pub runs: Vec<ObjectMetrics>,
}

impl PassingResult {
    pub fn successes(&self) -> usize {
        self.runs.iter().filter(|r| r.success).count()
    }
}

pub fn passing_experiment(shape: Shape, seeds: &[u64]) -> Result<PassingResult> {
    let s = passing_scenario(shape);
    let outs = seeds
        .iter()
        .map(|&seed| run_with_seed(&s, seed))
        .collect::<Result<Vec<_>>>()?;
    let logs: Vec<_> = outs.iter().map(|o| o.log.clone()).collect();
    Ok(PassingResult {
        shape,
        std: compute_trajectory_std(&logs, 0)?,
        runs: outs
            .into_iter()
            .map(|o| o.metrics.objects[0].clone())
            .collect(),
    })
}

/// A sphere at the center of M0 looping the four modules of a 2x2 grid
/// twice with the given edge bias.
pub fn square_path_scenario(variant: SquareVariant) -> Scenario {
    let mut s = Scenario::new(format!("square_{}", variant.name()), 2, 2);
    s.duration = 60.0;
    let m0 = center(&s, 0);
    s.objects.push(ObjectConfig::new(Shape::Sphere, m0));
    s.tasks.push(TaskConfig::square(0, variant, 2));
    s
}

#[derive(Debug, Clone)]
pub struct SquareRun {
    pub seed: u64,
    pub area: f64,
    /// Distance of each module-boundary crossing from the shared-edge
    /// midpoint, m.
    pub crossing_offsets: Vec<f64>,
    pub metrics: ObjectMetrics,
}

#[derive(Debug, Clone)]
pub struct SquareResult {
    pub variant: SquareVariant,
    pub runs: Vec<SquareRun>,
}

impl SquareResult {
    pub fn mean_area(&self) -> f64 {
        self.runs.iter().map(|r| r.area).sum::<f64>() / self.runs.len() as f64
    }

    pub fn max_crossing_offset(&self) -> f64 {
        self.runs
            .iter()
            .flat_map(|r| r.crossing_offsets.iter().copied())
            .fold(0.0, f64::max)
    }
}

/// Path of object 0 up to the end of its loop (the moment it finished or
/// the end of the run).
fn loop_path(out: &RunOutput) -> Vec<Vec2> {
    let end = out.metrics.objects[0]
        .time_to_target
        .unwrap_or(f64::INFINITY);
    out.log
        .records
        .iter()
        .filter(|r| r.object == 0 && r.t <= end)
        .map(|r| Vec2::new(r.x, r.y))
        .collect()
}

pub fn square_experiment(variant: SquareVariant, seeds: &[u64]) -> Result<SquareResult> {
    let s = square_path_scenario(variant);
    let grid = s.grid.build()?;
    let runs = seeds
        .iter()
        .map(|&seed| {
            let out = run_with_seed(&s, seed)?;
            let path = loop_path(&out);
            Ok(SquareRun {
                seed,
                area: enclosed_area(&path),
                crossing_offsets: boundary_crossings(&grid, &path)
                    .iter()
                    .map(|c| c.offset)
                    .collect(),
                metrics: out.metrics.objects[0].clone(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SquareResult { variant, runs })
}

/// Margin kept between sampled points and the module edges, m.
const TARGET_MARGIN: f64 = 0.1;
const TARGET_MIN_SEPARATION: f64 = 0.2;

/// `n` single-module scenarios with a sphere and a target drawn uniformly
/// from the module interior, at least 0.2 m apart.
pub fn target_reaching_trials(n: usize, seed: u64) -> Vec<Scenario> {
    let mut rng = stream(seed, StreamKind::Sampling, 0);
    let base = target_reaching_base();
    let (lo, hi) = (TARGET_MARGIN, base.grid.spacing - TARGET_MARGIN);
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let start = Vec2::new(rng.random_range(lo..hi), rng.random_range(lo..hi));
        let target = Vec2::new(rng.random_range(lo..hi), rng.random_range(lo..hi));
        if start.distance(target) < TARGET_MIN_SEPARATION {
            continue;
        }
        let mut s = base.clone();
        s.name = format!("target_{:02}", out.len());
        s.seed = seed.wrapping_add(out.len() as u64);
        s.objects.push(ObjectConfig::new(Shape::Sphere, start));
        s.tasks.push(TaskConfig::reach(0, target));
        out.push(s);
    }
    out
}

fn target_reaching_base() -> Scenario {
    let mut s = Scenario::new("target", 1, 1);
    s.duration = 60.0;
    s
}

#[derive(Debug, Clone)]
pub struct TargetResult {
    pub trials: Vec<ObjectMetrics>,
}

impl TargetResult {
    pub fn reached(&self) -> usize {
        self.trials.iter().filter(|t| t.success).count()
    }

    pub fn mean_error(&self) -> f64 {
        self.trials.iter().map(|t| t.final_error).sum::<f64>() / self.trials.len() as f64
    }

    pub fn max_time(&self) -> Option<f64> {
        self.trials
            .iter()
            .map(|t| t.time_to_target)
            .try_fold(0.0, |acc: f64, t| t.map(|t| acc.max(t)))
    }
}

pub fn target_experiment(n: usize, seed: u64) -> Result<TargetResult> {
    let trials = target_reaching_trials(n, seed)
        .iter()
        .map(|s| run_with_seed(s, s.seed).map(|o| o.metrics.objects[0].clone()))
        .collect::<Result<Vec<_>>>()?;
    Ok(TargetResult { trials })
}

/// Sphere on M3 heading to M1 and disk on M0 heading to M3, submitted
/// together on a 2x2 grid.
pub fn multi_object_scenario() -> Scenario {
    let mut s = Scenario::new("multi_object", 2, 2);
    s.duration = 60.0;
    s.seed = 1;
    let (m0, m1, m3) = (center(&s, 0), center(&s, 1), center(&s, 3));
    s.objects.push(ObjectConfig::new(Shape::Sphere, m3));
    s.objects.push(ObjectConfig::new(Shape::Disk, m0));
    s.tasks.push(TaskConfig::reach(0, m1));
    s.tasks.push(TaskConfig::reach(1, m3));
    s
}

/// Two spheres crossing a 3x3 grid between opposite corner modules.
pub fn scalability_scenario() -> Scenario {
    let mut s = Scenario::new("scale_3x3", 3, 3);
    s.duration = 120.0;
    s.seed = 1;
    s.objects
        .push(ObjectConfig::new(Shape::Sphere, Vec2::new(0.2, 0.3)));
    s.objects
        .push(ObjectConfig::new(Shape::Sphere, Vec2::new(1.3, 1.2)));
    s.tasks.push(TaskConfig::reach(0, Vec2::new(1.2, 1.35)));
    s.tasks.push(TaskConfig::reach(1, Vec2::new(0.35, 0.2)));
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trials_respect_spacing_and_margin() {
        let trials = target_reaching_trials(20, 5);
        assert_eq!(trials.len(), 20);
        for s in &trials {
            let p = s.objects[0].position;
            let t = s.tasks[0].target.unwrap();
            assert!(p.distance(t) >= 0.2);
            for v in [p.x, p.y, t.x, t.y] {
                assert!((0.1..=0.4).contains(&v));
            }
            s.validate().unwrap();
        }
        assert_eq!(target_reaching_trials(20, 5)[7], trials[7]);
    }

    #[test]
    fn builtins_validate() {
        for s in [
            passing_scenario(Shape::Dice),
            square_path_scenario(SquareVariant::Small),
            multi_object_scenario(),
            scalability_scenario(),
        ] {
            s.validate().unwrap();
        }
    }
}
