//! Point-contact object dynamics on the height field.
//!
//! An object is a point that stays on the surface. While moving, the
//! horizontal acceleration is that of a mass constrained to `z = h(x, y)`:
//!
//! ```text
//! a = -(k g + v^T H v) * grad_h / (1 + |grad_h|^2) - c v  [- mu_k g v_hat when sliding]
//! ```
//!
//! `k` is the shape factor (5/7 for a solid rolling sphere, 1 for a sliding
//! block). On a plane `H = 0` and this reduces to the textbook incline
//! acceleration `k g sin(b) cos(b)`. Static friction holds an object at rest
//! until the slope exceeds `mu_s`, reduced by actuator dither.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::geometry::Vec2;
use crate::rng::SimRng;
use crate::surface::SurfaceField;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Shape {
    Sphere,
    Cube,
    Disk,
    Apple,
    Cylinder,
    Egg,
    Dice,
}

impl Shape {
    pub const ALL: [Shape; 7] = [
        Shape::Sphere,
        Shape::Cube,
        Shape::Disk,
        Shape::Apple,
        Shape::Cylinder,
        Shape::Egg,
        Shape::Dice,
    ];

    /// Flat-bottomed shapes translate with surface slip; the rest roll.
    pub fn slides(self) -> bool {
        matches!(self, Shape::Cube | Shape::Disk)
    }

    pub fn name(self) -> &'static str {
        match self {
            Shape::Sphere => "sphere",
            Shape::Cube => "cube",
            Shape::Disk => "disk",
            Shape::Apple => "apple",
            Shape::Cylinder => "cylinder",
            Shape::Egg => "egg",
            Shape::Dice => "dice",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MotionMode {
    Static,
    Rolling,
    Sliding,
}

impl MotionMode {
    pub fn as_str(self) -> &'static str {
        match self {
            MotionMode::Static => "static",
            MotionMode::Rolling => "rolling",
            MotionMode::Sliding => "sliding",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectSpec {
    pub shape: Shape,
    /// kg
    pub mass: f64,
    /// Characteristic size in meters (diameter or edge length).
    pub size: f64,
    pub k_shape: f64,
    pub mu_static: f64,
    pub mu_kinetic: f64,
    pub wander_sigma: f64,
}

impl ObjectSpec {
    /// Catalog entry for `shape`. Masses and sizes are the measured objects;
    /// friction and wander are desk-scale estimates.
    pub fn default_for(shape: Shape) -> Self {
        let (mass, size) = match shape {
            Shape::Sphere => (0.032, 0.045),
            Shape::Cube => (0.031, 0.042),
            Shape::Disk => (0.026, 0.07),
            Shape::Apple => (0.1204, 0.06),
            Shape::Cylinder => (0.0713, 0.03),
            Shape::Egg => (0.0612, 0.05),
            Shape::Dice => (0.005, 0.015),
        };
        let k_shape = match shape {
            Shape::Sphere | Shape::Apple | Shape::Dice | Shape::Egg => 5.0 / 7.0,
            Shape::Cylinder => 2.0 / 3.0,
            Shape::Cube | Shape::Disk => 1.0,
        };
        let (mu_static, mu_kinetic) = if shape.slides() {
            (0.35, 0.20)
        } else {
            (0.25, 0.15)
        };
        let wander_sigma = match shape {
            Shape::Sphere | Shape::Disk => 0.0,
            Shape::Apple => 0.15,
            Shape::Cylinder => 0.25,
            Shape::Egg => 0.5,
            Shape::Cube => 0.5,
            Shape::Dice => 0.6,
        };
        Self {
            shape,
            mass,
            size,
            k_shape,
            mu_static,
            mu_kinetic,
            wander_sigma,
        }
    }

    /// Checks the physical invariants, returning the offending field name.
    pub fn check(&self) -> Result<(), (&'static str, String)> {
        if !(self.mass > 0.0) {
            return Err(("mass", format!("must be positive, got {}", self.mass)));
        }
        if !(self.size > 0.0) {
            return Err(("size", format!("must be positive, got {}", self.size)));
        }
        if !(self.k_shape > 0.0 && self.k_shape <= 1.0) {
            return Err((
                "k_shape",
                format!("must be in (0, 1], got {}", self.k_shape),
            ));
        }
        if !(self.mu_kinetic >= 0.0 && self.mu_kinetic <= self.mu_static) {
            return Err((
                "mu_kinetic",
                format!(
                    "need 0 <= mu_kinetic <= mu_static, got {} / {}",
                    self.mu_kinetic, self.mu_static
                ),
            ));
        }
        if !(self.wander_sigma >= 0.0) {
            return Err(("wander_sigma", "must be non-negative".into()));
        }
        Ok(())
    }

    fn moving_mode(&self) -> MotionMode {
        if self.shape.slides() {
            MotionMode::Sliding
        } else {
            MotionMode::Rolling
        }
    }
}

pub fn default_spec(shape: Shape) -> ObjectSpec {
    ObjectSpec::default_for(shape)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DynamicsParams {
    /// m/s^2
    pub gravity: f64,
    /// Linear velocity damping, 1/s.
    pub damping: f64,
    /// Speed below which an object may come to rest, m/s.
    pub v_stop: f64,
    /// Dither amplitude at which static friction is fully cancelled, m.
    pub alpha_ref: f64,
}

impl Default for DynamicsParams {
    fn default() -> Self {
        Self {
            gravity: 9.81,
            damping: 0.5,
            v_stop: 1e-3,
            alpha_ref: 0.01,
        }
    }
}

impl DynamicsParams {
    pub fn effective_static_friction(&self, mu_static: f64, dither_amp: f64) -> f64 {
        mu_static * (1.0 - dither_amp / self.alpha_ref).max(0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObjectState {
    pub position: Vec2,
    pub velocity: Vec2,
    pub mode: MotionMode,
    pub spec: ObjectSpec,
}

impl ObjectState {
    pub fn at_rest(spec: ObjectSpec, position: Vec2) -> Self {
        Self {
            position,
            velocity: Vec2::ZERO,
            mode: MotionMode::Static,
            spec,
        }
    }
}

/// Whether the surface slope overcomes (dither-reduced) static friction.
pub fn is_released(
    spec: &ObjectSpec,
    gradient: Vec2,
    dither_amp: f64,
    params: &DynamicsParams,
) -> bool {
    gradient.norm() > params.effective_static_friction(spec.mu_static, dither_amp)
}

/// Mechanical energy per unit mass, scaled by the shape factor:
/// `(|v|^2 + (grad_h . v)^2) / (2k) + g h`. Conserved by the undamped
/// dynamics, so it can only fall when damping and friction act.
pub fn mechanical_energy(
    state: &ObjectState,
    field: &SurfaceField,
    params: &DynamicsParams,
) -> f64 {
    let s = field
        .sample(state.position)
        .expect("object position lies on the platform");
    let v = state.velocity;
    let vz = s.gradient.dot(v);
    0.5 * (v.norm_squared() + vz * vz) / state.spec.k_shape + params.gravity * s.height
}

/// Advances one object by `dt` with a semi-implicit Euler step.
pub fn step_object(
    state: &ObjectState,
    field: &SurfaceField,
    dither_amp: f64,
    dt: f64,
    params: &DynamicsParams,
    rng: &mut SimRng,
) -> ObjectState {
    let grid = field.grid();
    let position = grid.clamp(state.position);
    let sample = field
        .sample(position)
        .expect("clamped position lies on the platform");
    let spec = state.spec;
    let g = sample.gradient;
    let mu_s_eff = params.effective_static_friction(spec.mu_static, dither_amp);

    if state.mode == MotionMode::Static && g.norm() <= mu_s_eff {
        return ObjectState {
            position,
            velocity: Vec2::ZERO,
            ..*state
        };
    }

    let v = state.velocity;
    let normal_load = spec.k_shape * params.gravity + sample.curvature_along(v);
    let drive = g * (-normal_load / (1.0 + g.norm_squared()));
    let mut v_next = v + (drive - v * params.damping) * dt;

    if spec.wander_sigma > 0.0 {
        let speed = v.norm();
        if speed > 0.0 {
            let kick = Vec2::new(rng.sample(StandardNormal), rng.sample(StandardNormal));
            v_next += kick * (spec.wander_sigma * speed * dt.sqrt());
        }
    }

    if spec.shape.slides() {
        // Kinetic friction removes speed but never reverses the motion.
        let speed = v_next.norm();
        let loss = spec.mu_kinetic * params.gravity * dt;
        v_next = if speed > loss {
            v_next * ((speed - loss) / speed)
        } else {
            Vec2::ZERO
        };
    }

    let mut p_next = position + v_next * dt;
    let (lo, hi) = grid.bounds();
    if p_next.x <= lo.x || p_next.x >= hi.x {
        p_next.x = p_next.x.clamp(lo.x, hi.x);
        v_next.x = 0.0;
    }
    if p_next.y <= lo.y || p_next.y >= hi.y {
        p_next.y = p_next.y.clamp(lo.y, hi.y);
        v_next.y = 0.0;
    }

    let mode = if v_next.norm() < params.v_stop && g.norm() <= mu_s_eff {
        v_next = Vec2::ZERO;
        MotionMode::Static
    } else {
        spec.moving_mode()
    };

    ObjectState {
        position: p_next,
        velocity: v_next,
        mode,
        spec,
    }
}
