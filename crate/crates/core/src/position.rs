//! In-module position control: PID on the planar error produces two tilt
//! angles, the angles define a plane normal, the plane is sampled at the
//! module's four actuators and the resulting heights become dithered
//! actuator commands.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Vec2;
use crate::grid::{ActuatorGrid, ActuatorId};
use crate::rng::SimRng;

/// Smallest acceptable plane-normal z-component.
const MIN_NORMAL_Z: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PidGains {
    /// rad per meter of error
    pub kp: f64,
    /// rad per meter-second of accumulated error
    pub ki: f64,
    /// rad per meter/second of error rate
    pub kd: f64,
}

/// Configuration shared by every module controller in a world.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ControllerParams {
    pub kp: f64,
    pub ki: f64,
    pub kd: f64,
    /// Anti-windup bound on the per-axis error integral, m*s.
    pub integral_limit: f64,
    /// Dither amplitude added to every command, m.
    pub dither: f64,
    /// Flip the sign of the commands so positive tilt lowers the downhill
    /// (target-side) actuators.
    pub invert_command: bool,
    /// Hz
    pub control_rate: f64,
}

impl Default for ControllerParams {
    fn default() -> Self {
        Self {
            kp: 0.5,
            ki: 1.0,
            kd: 0.6,
            integral_limit: 0.5,
            dither: 0.008,
            invert_command: true,
            control_rate: 20.0,
        }
    }
}

impl ControllerParams {
    pub fn gains(&self) -> PidGains {
        PidGains {
            kp: self.kp,
            ki: self.ki,
            kd: self.kd,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TiltController {
    pub gains: [PidGains; 2],
    pub integral: Vec2,
    pub prev_error: Option<Vec2>,
    pub integral_limit: f64,
    pub theta_max: f64,
    pub dither_amp: f64,
    pub z0: f64,
    pub control_period: f64,
    pub height_limit: f64,
    pub invert_command: bool,
}

impl TiltController {
    pub fn new(params: &ControllerParams, grid: &ActuatorGrid) -> Self {
        let g = params.gains();
        Self {
            gains: [g, g],
            integral: Vec2::ZERO,
            prev_error: None,
            integral_limit: params.integral_limit,
            theta_max: max_tilt(grid.height_limit(), grid.spacing()),
            dither_amp: params.dither,
            z0: grid.z0(),
            control_period: 1.0 / params.control_rate,
            height_limit: grid.height_limit(),
            invert_command: params.invert_command,
        }
    }

    /// Clears integrator and derivative memory.
    pub fn reset(&mut self) {
        self.integral = Vec2::ZERO;
        self.prev_error = None;
    }

    /// One PID update. Returns `(theta_zx, theta_zy)`; `theta_zx` is driven by
    /// the x error, `theta_zy` by the y error.
    pub fn pid_step(&mut self, error: Vec2, dt: f64) -> (f64, f64) {
        debug_assert!(dt > 0.0);
        let rate = self
            .prev_error
            .map_or(Vec2::ZERO, |prev| (error - prev) * (1.0 / dt));
        let mut out = [0.0; 2];
        let e = [error.x, error.y];
        let de = [rate.x, rate.y];
        let mut integral = [self.integral.x, self.integral.y];
        for axis in 0..2 {
            let g = self.gains[axis];
            let candidate =
                (integral[axis] + e[axis] * dt).clamp(-self.integral_limit, self.integral_limit);
            let u = g.kp * e[axis] + g.ki * candidate + g.kd * de[axis];
            if u.abs() > self.theta_max {
                // Saturated: hold the integral.
                out[axis] = u.clamp(-self.theta_max, self.theta_max);
            } else {
                integral[axis] = candidate;
                out[axis] = u;
            }
        }
        self.integral = Vec2::new(integral[0], integral[1]);
        self.prev_error = Some(error);
        (out[0], out[1])
    }
}

/// Largest tilt a module can realize: opposite corners at the stroke ends.
pub fn max_tilt(height_limit: f64, spacing: f64) -> f64 {
    (2.0 * height_limit / spacing).atan()
}

/// Plane normal `(sin theta_zx, sin theta_zy, cos theta_zx)`.
///
/// The z-component depends on `theta_zx` alone, so the vector is not unit
/// length when `theta_zy != 0`.
pub fn tilt_to_normal(theta_zx: f64, theta_zy: f64) -> [f64; 3] {
    [theta_zx.sin(), theta_zy.sin(), theta_zx.cos()]
}

/// Heights where the plane through `(0, 0, z0)` with normal `n` passes over
/// each point: `z_i = (z0 n_z - n_x x_i - n_y y_i) / n_z`.
pub fn normal_to_heights(n: [f64; 3], z0: f64, points: &[Vec2]) -> Result<Vec<f64>> {
    let [nx, ny, nz] = n;
    if !(nz > MIN_NORMAL_Z) {
        return Err(Error::DegenerateTilt { nz });
    }
    Ok(points
        .iter()
        .map(|p| (z0 * nz - nx * p.x - ny * p.y) / nz)
        .collect())
}

/// Shrinks all deviations from `z0` by one common factor so the largest fits
/// within `limit`. A plane stays a plane.
pub fn scale_to_limits(z: &[f64], z0: f64, limit: f64) -> Vec<f64> {
    let worst = z.iter().map(|zi| (zi - z0).abs()).fold(0.0, f64::max);
    if worst <= limit {
        return z.to_vec();
    }
    let s = limit / worst;
    z.iter().map(|zi| z0 + (zi - z0) * s).collect()
}

/// Actuator commands `a_i = (z0 - z_i) + alpha * delta_i`, `delta_i ~ U(-1, 1)`,
/// negated when `invert` is set, clamped to the stroke.
pub fn command_with_dither(
    z: &[f64],
    z0: f64,
    alpha: f64,
    limit: f64,
    invert: bool,
    rng: &mut SimRng,
) -> Vec<f64> {
    z.iter()
        .map(|zi| {
            let delta: f64 = rng.random_range(-1.0..1.0);
            let a = (z0 - zi) + alpha * delta;
            let a = if invert { -a } else { a };
            a.clamp(-limit, limit)
        })
        .collect()
}

/// One 20 Hz control update for an object and target on the same module.
/// Returns commands for that module's four actuators only.
pub fn position_control_tick(
    ctrl: &mut TiltController,
    grid: &ActuatorGrid,
    measured: Vec2,
    target: Vec2,
    rng: &mut SimRng,
) -> Result<Vec<(ActuatorId, f64)>> {
    let m = grid.detect_module(measured)?;
    let mt = grid.detect_module(target)?;
    if m != mt {
        return Err(Error::ModuleMismatch {
            measured: m,
            target: mt,
        });
    }
    let (tzx, tzy) = ctrl.pid_step(target - measured, ctrl.control_period);
    let n = tilt_to_normal(tzx, tzy);
    let actuators = grid.module_actuators(m)?;
    // The plane pivots about the module center.
    let center = grid.module_center(m);
    let local: Vec<Vec2> = actuators
        .iter()
        .map(|&a| grid.actuator_position(a) - center)
        .collect();
    let z = normal_to_heights(n, ctrl.z0, &local)?;
    let z = scale_to_limits(&z, ctrl.z0, ctrl.height_limit);
    let cmd = command_with_dither(
        &z,
        ctrl.z0,
        ctrl.dither_amp,
        ctrl.height_limit,
        ctrl.invert_command,
        rng,
    );
    Ok(actuators.into_iter().zip(cmd).collect())
}
