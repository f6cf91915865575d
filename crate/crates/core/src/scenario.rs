//! Scenario files.
//!
//! A scenario is a TOML document describing the platform, the objects on
//! it, what each object should do, and the controller settings. Every
//! section except `[grid]`, `[[objects]]` and `[[tasks]]` is optional and
//! unknown keys are rejected.
//!
//! ```toml
//! name = "two_by_two"
//! seed = 1
//! duration = 30.0
//!
//! [grid]
//! rows = 2
//! cols = 2
//!
//! [[objects]]
//! shape = "sphere"
//! position = [0.25, 0.25]
//!
//! [[tasks]]
//! object = 0
//! target = [0.25, 0.75]
//! ```

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::coordinator::{TaskRequest, World, WorldConfig};
use crate::error::{Error, Result};
use crate::geometry::Vec2;
use crate::grid::{ActuatorGrid, ModuleId, DEFAULT_HEIGHT_LIMIT};
use crate::object::{DynamicsParams, ObjectSpec, Shape};
use crate::passing::{EdgeBias, PassingParams};
use crate::position::ControllerParams;
use crate::surface::{SurfaceField, DEFAULT_ACTUATOR_RATE, DEFAULT_SAG_DEPTH};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default = "default_name")]
    pub name: String,
    #[serde(default)]
    pub seed: u64,
    /// Simulated seconds.
    #[serde(default = "default_duration")]
    pub duration: f64,
    #[serde(default = "default_repeats")]
    pub repeats: u32,
    pub grid: GridConfig,
    #[serde(default)]
    pub controller: ControllerParams,
    #[serde(default)]
    pub passing: PassingParams,
    #[serde(default)]
    pub dynamics: DynamicsParams,
    #[serde(default)]
    pub world: WorldConfig,
    #[serde(default)]
    pub objects: Vec<ObjectConfig>,
    #[serde(default)]
    pub tasks: Vec<TaskConfig>,
    #[serde(default)]
    pub output: OutputConfig,
}

fn default_name() -> String {
    "scenario".to_string()
}

fn default_duration() -> f64 {
    60.0
}

fn default_repeats() -> u32 {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub rows: usize,
    pub cols: usize,
    #[serde(default = "default_spacing")]
    pub spacing: f64,
    #[serde(default = "default_z0")]
    pub z0: f64,
    #[serde(default = "default_height_limit")]
    pub height_limit: f64,
    #[serde(default = "default_sag_depth")]
    pub sag_depth: f64,
    #[serde(default = "default_actuator_rate")]
    pub actuator_rate: f64,
}

fn default_spacing() -> f64 {
    0.5
}

fn default_z0() -> f64 {
    1.5
}

fn default_height_limit() -> f64 {
    DEFAULT_HEIGHT_LIMIT
}

fn default_sag_depth() -> f64 {
    DEFAULT_SAG_DEPTH
}

fn default_actuator_rate() -> f64 {
    DEFAULT_ACTUATOR_RATE
}

impl GridConfig {
    pub fn new(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            spacing: default_spacing(),
            z0: default_z0(),
            height_limit: default_height_limit(),
            sag_depth: default_sag_depth(),
            actuator_rate: default_actuator_rate(),
        }
    }

    pub fn build(&self) -> Result<ActuatorGrid> {
        ActuatorGrid::with_limits(
            self.rows,
            self.cols,
            self.spacing,
            self.z0,
            self.height_limit,
        )
    }
}

/// An object, given by shape with optional overrides of its catalog entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectConfig {
    pub shape: Shape,
    pub position: Vec2,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mass: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub size: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k_shape: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu_static: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu_kinetic: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wander_sigma: Option<f64>,
}

impl ObjectConfig {
    pub fn new(shape: Shape, position: Vec2) -> Self {
        Self {
            shape,
            position,
            mass: None,
            size: None,
            k_shape: None,
            mu_static: None,
            mu_kinetic: None,
            wander_sigma: None,
        }
    }

    pub fn spec(&self) -> ObjectSpec {
        let d = ObjectSpec::default_for(self.shape);
        ObjectSpec {
            shape: self.shape,
            mass: self.mass.unwrap_or(d.mass),
            size: self.size.unwrap_or(d.size),
            k_shape: self.k_shape.unwrap_or(d.k_shape),
            mu_static: self.mu_static.unwrap_or(d.mu_static),
            mu_kinetic: self.mu_kinetic.unwrap_or(d.mu_kinetic),
            wander_sigma: self.wander_sigma.unwrap_or(d.wander_sigma),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SquareVariant {
    /// Hops cross at the shared-edge midpoints.
    Normal,
    /// The outer shared actuator is raised so crossings hug the center.
    Small,
    /// The center actuator is raised so crossings swing wide.
    Large,
}

impl SquareVariant {
    pub const ALL: [SquareVariant; 3] = [
        SquareVariant::Normal,
        SquareVariant::Small,
        SquareVariant::Large,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SquareVariant::Normal => "normal",
            SquareVariant::Small => "small",
            SquareVariant::Large => "large",
        }
    }

    pub fn bias(self, h_bias: f64) -> EdgeBias {
        match self {
            SquareVariant::Normal => EdgeBias::None,
            SquareVariant::Small => EdgeBias::Outer(h_bias),
            SquareVariant::Large => EdgeBias::Center(h_bias),
        }
    }
}

/// One job for one object. Either `target` (optionally along an explicit
/// `route` of module indices) or a `square` loop around the four modules
/// of the top-left 2x2 block, ending back at the center of module 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskConfig {
    pub object: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<Vec2>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub route: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub square: Option<SquareVariant>,
    #[serde(default = "default_loops")]
    pub loops: u32,
    #[serde(default = "default_h_bias")]
    pub h_bias: f64,
}

fn default_loops() -> u32 {
    1
}

fn default_h_bias() -> f64 {
    0.05
}

impl TaskConfig {
    pub fn reach(object: usize, target: Vec2) -> Self {
        Self {
            object,
            target: Some(target),
            route: None,
            square: None,
            loops: default_loops(),
            h_bias: default_h_bias(),
        }
    }

    pub fn square(object: usize, variant: SquareVariant, loops: u32) -> Self {
        Self {
            object,
            target: None,
            route: None,
            square: Some(variant),
            loops,
            h_bias: default_h_bias(),
        }
    }

    /// Turns the job into coordinator requests for an object at `from`. A
    /// square becomes one request per module on the loop, each ending at
    /// that module's center.
    pub fn requests(&self, grid: &ActuatorGrid, from: Vec2) -> Result<Vec<TaskRequest>> {
        if let Some(variant) = self.square {
            let ring = square_ring(grid)?;
            let here = grid.detect_module(from)?;
            let mut route = grid.find_path(here, ring[0])?;
            for _ in 0..self.loops {
                route.extend_from_slice(&ring[1..]);
            }
            let bias = variant.bias(self.h_bias);
            return Ok(route
                .windows(2)
                .map(|w| TaskRequest {
                    target: grid.module_center(w[1]),
                    route: Some(w.to_vec()),
                    bias,
                })
                .collect());
        }
        let target = self
            .target
            .ok_or_else(|| Error::validation("target", "missing"))?;
        Ok(vec![TaskRequest {
            target,
            route: self
                .route
                .as_ref()
                .map(|r| r.iter().copied().map(ModuleId).collect()),
            bias: EdgeBias::None,
        }])
    }

    /// Where the object should end up once this job is finished.
    pub fn final_target(&self, grid: &ActuatorGrid) -> Option<Vec2> {
        match self.square {
            Some(_) => square_ring(grid).ok().map(|r| grid.module_center(r[0])),
            None => self.target,
        }
    }
}

/// The closed module loop `M(0,0) -> M(0,1) -> M(1,1) -> M(1,0) -> M(0,0)`.
pub fn square_ring(grid: &ActuatorGrid) -> Result<[ModuleId; 5]> {
    let m = |r, c| {
        grid.module_at(r, c)
            .ok_or_else(|| Error::validation("square", "needs a grid of at least 2x2 modules"))
    };
    Ok([m(0, 0)?, m(0, 1)?, m(1, 1)?, m(1, 0)?, m(0, 0)?])
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub csv: bool,
    pub json: bool,
    pub svg: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            csv: true,
            json: true,
            svg: false,
        }
    }
}

fn line_column(text: &str, offset: usize) -> (usize, usize) {
    let offset = offset.min(text.len());
    let before = &text[..offset];
    let line = before.matches('\n').count() + 1;
    let column = before.rfind('\n').map_or(offset, |nl| offset - nl - 1) + 1;
    (line, column)
}

/// Parses and validates a scenario document.
pub fn parse_scenario(text: &str) -> Result<Scenario> {
    let mut scenario: Scenario = toml::from_str(text).map_err(|e| {
        let (line, column) = e.span().map_or((1, 1), |s| line_column(text, s.start));
        Error::Parse {
            line,
            column,
            message: e.message().to_string(),
        }
    })?;
    scenario.world.actuator_rate = scenario.grid.actuator_rate;
    scenario.validate()?;
    Ok(scenario)
}

fn positive(field: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::validation(
            field,
            format!("must be positive, got {v}"),
        ))
    }
}

fn non_negative(field: &str, v: f64) -> Result<()> {
    if v >= 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::validation(
            field,
            format!("must be non-negative, got {v}"),
        ))
    }
}

fn in_bounds(grid: &ActuatorGrid, field: &str, p: Vec2) -> Result<()> {
    if p.is_finite() && grid.contains(p) {
        Ok(())
    } else {
        let (lo, hi) = grid.bounds();
        Err(Error::validation(
            field,
            format!(
                "({}, {}) is out of bounds [{}, {}] x [{}, {}]",
                p.x, p.y, lo.x, hi.x, lo.y, hi.y
            ),
        ))
    }
}

impl Scenario {
    /// A scenario on a `rows x cols` grid with no objects and every
    /// setting at its default.
    pub fn new(name: impl Into<String>, rows: usize, cols: usize) -> Self {
        Self {
            name: name.into(),
            seed: 0,
            duration: default_duration(),
            repeats: default_repeats(),
            grid: GridConfig::new(rows, cols),
            controller: ControllerParams::default(),
            passing: PassingParams::default(),
            dynamics: DynamicsParams::default(),
            world: WorldConfig::default(),
            objects: Vec::new(),
            tasks: Vec::new(),
            output: OutputConfig::default(),
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario fields are TOML-representable")
    }

    pub fn validate(&self) -> Result<()> {
        let g = &self.grid;
        if g.rows == 0 {
            return Err(Error::validation("grid.rows", "must be at least 1"));
        }
        if g.cols == 0 {
            return Err(Error::validation("grid.cols", "must be at least 1"));
        }
        positive("grid.spacing", g.spacing)?;
        if !g.z0.is_finite() {
            return Err(Error::validation("grid.z0", "must be finite"));
        }
        positive("grid.height_limit", g.height_limit)?;
        non_negative("grid.sag_depth", g.sag_depth)?;
        positive("grid.actuator_rate", g.actuator_rate)?;
        non_negative("duration", self.duration)?;
        if self.repeats == 0 {
            return Err(Error::validation("repeats", "must be at least 1"));
        }

        let c = &self.controller;
        for (field, v) in [
            ("controller.kp", c.kp),
            ("controller.ki", c.ki),
            ("controller.kd", c.kd),
        ] {
            non_negative(field, v)?;
        }
        positive("controller.integral_limit", c.integral_limit)?;
        non_negative("controller.dither", c.dither)?;
        positive("controller.control_rate", c.control_rate)?;
        positive("dynamics.gravity", self.dynamics.gravity)?;
        non_negative("dynamics.damping", self.dynamics.damping)?;
        non_negative("dynamics.v_stop", self.dynamics.v_stop)?;
        positive("dynamics.alpha_ref", self.dynamics.alpha_ref)?;
        positive("world.sim_rate", self.world.sim_rate)?;
        positive("world.tracker_rate", self.world.tracker_rate)?;
        non_negative("world.tracker_noise", self.world.tracker_noise)?;
        positive("world.done_radius", self.world.done_radius)?;
        non_negative("world.done_hold", self.world.done_hold)?;
        self.passing.check(g.height_limit)?;

        let grid = g.build()?;
        for (i, o) in self.objects.iter().enumerate() {
            in_bounds(&grid, &format!("objects[{i}].position"), o.position)?;
            o.spec()
                .check()
                .map_err(|(field, msg)| Error::validation(format!("objects[{i}].{field}"), msg))?;
        }
        for (i, t) in self.tasks.iter().enumerate() {
            let field = |name: &str| format!("tasks[{i}].{name}");
            if t.object >= self.objects.len() {
                return Err(Error::validation(
                    field("object"),
                    format!("no object with index {}", t.object),
                ));
            }
            match (t.target, t.square) {
                (Some(_), Some(_)) => {
                    return Err(Error::validation(
                        field("square"),
                        "give either `target` or `square`, not both",
                    ))
                }
                (None, None) => return Err(Error::validation(field("target"), "missing")),
                (Some(target), None) => in_bounds(&grid, &field("target"), target)?,
                (None, Some(_)) => {
                    square_ring(&grid).map_err(|_| {
                        Error::validation(field("square"), "needs a grid of at least 2x2 modules")
                    })?;
                    if t.route.is_some() {
                        return Err(Error::validation(
                            field("route"),
                            "cannot be combined with `square`",
                        ));
                    }
                }
            }
            if t.loops == 0 {
                return Err(Error::validation(field("loops"), "must be at least 1"));
            }
            if !(t.h_bias >= 0.0 && t.h_bias <= g.height_limit) {
                return Err(Error::validation(
                    field("h_bias"),
                    format!("must be in [0, {}], got {}", g.height_limit, t.h_bias),
                ));
            }
            if let (Some(route), Some(target)) = (&t.route, t.target) {
                self.check_route(&grid, &field("route"), route, target)?;
            }
        }
        // Rate ratios and the remaining cross-field rules.
        self.build_world(self.seed)?;
        Ok(())
    }

    fn check_route(
        &self,
        grid: &ActuatorGrid,
        field: &str,
        route: &[usize],
        target: Vec2,
    ) -> Result<()> {
        let Some(&last) = route.last() else {
            return Err(Error::validation(field, "must not be empty"));
        };
        if let Some(&bad) = route.iter().find(|&&m| m >= grid.module_count()) {
            return Err(Error::validation(
                field,
                format!("module {bad} does not exist"),
            ));
        }
        if let Some(w) = route
            .windows(2)
            .find(|w| !grid.are_adjacent(ModuleId(w[0]), ModuleId(w[1])))
        {
            return Err(Error::validation(
                field,
                format!("modules {} and {} are not adjacent", w[0], w[1]),
            ));
        }
        if grid.detect_module(target)? != ModuleId(last) {
            return Err(Error::validation(field, "must end on the target's module"));
        }
        Ok(())
    }

    /// A world with this scenario's objects placed and no tasks submitted.
    pub fn build_world(&self, seed: u64) -> Result<World> {
        let grid = Arc::new(self.grid.build()?);
        let mut config = self.world.clone();
        config.actuator_rate = self.grid.actuator_rate;
        let mut world = World::new(
            SurfaceField::new(grid, self.grid.sag_depth),
            config,
            self.dynamics,
            self.controller.clone(),
            self.passing,
            seed,
        )?;
        for o in &self.objects {
            world.add_object(o.spec(), o.position)?;
        }
        Ok(world)
    }
}
