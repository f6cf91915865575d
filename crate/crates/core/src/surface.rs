//! Height field of the fabric surface.
//!
//! Inside each module the surface is the bilinear interpolant of its four
//! corner actuators minus a separable sag bump `sag_depth * phi(u) * phi(v)`
//! with `phi(t) = 4t(1 - t)`. The bump vanishes on every cell edge, so the
//! field is continuous across shared actuators and dips deepest at each
//! module center.

use std::sync::Arc;

use crate::error::Result;
use crate::geometry::Vec2;
use crate::grid::ActuatorGrid;

pub const DEFAULT_SAG_DEPTH: f64 = 0.05;
/// Actuator slew rate in m/s; covers the full 0.4 m stroke in 2 s.
pub const DEFAULT_ACTUATOR_RATE: f64 = 0.2;

/// Height, slope and curvature of the surface at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurfaceSample {
    pub height: f64,
    pub gradient: Vec2,
    /// Second derivatives `(h_xx, h_xy, h_yy)`.
    pub hessian: [f64; 3],
}

impl SurfaceSample {
    /// `v^T H v`, the curvature seen by a point moving with velocity `v`.
    pub fn curvature_along(&self, v: Vec2) -> f64 {
        let [hxx, hxy, hyy] = self.hessian;
        hxx * v.x * v.x + 2.0 * hxy * v.x * v.y + hyy * v.y * v.y
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SurfaceField {
    grid: Arc<ActuatorGrid>,
    heights: Vec<f64>,
    sag_depth: f64,
}

fn phi(t: f64) -> f64 {
    4.0 * t * (1.0 - t)
}

fn dphi(t: f64) -> f64 {
    4.0 - 8.0 * t
}

impl SurfaceField {
    /// Level surface (all actuators at rest) with the given sag depth.
    pub fn new(grid: Arc<ActuatorGrid>, sag_depth: f64) -> Self {
        let n = grid.actuator_count();
        Self {
            grid,
            heights: vec![0.0; n],
            sag_depth: sag_depth.max(0.0),
        }
    }

    pub fn grid(&self) -> &ActuatorGrid {
        &self.grid
    }

    pub fn grid_arc(&self) -> &Arc<ActuatorGrid> {
        &self.grid
    }

    pub fn heights(&self) -> &[f64] {
        &self.heights
    }

    pub fn sag_depth(&self) -> f64 {
        self.sag_depth
    }

    /// Sets actuator offsets directly, clamped to the stroke limits.
    pub fn set_heights(&mut self, heights: &[f64]) {
        assert_eq!(heights.len(), self.heights.len(), "one height per actuator");
        let lim = self.grid.height_limit();
        for (h, &t) in self.heights.iter_mut().zip(heights) {
            *h = t.clamp(-lim, lim);
        }
    }

    pub fn with_heights(mut self, heights: &[f64]) -> Self {
        self.set_heights(heights);
        self
    }

    pub fn sample(&self, p: Vec2) -> Result<SurfaceSample> {
        let grid = &*self.grid;
        let m = grid.detect_module(p)?;
        let [a00, a10, a01, a11] = grid.module_actuators(m)?;
        let (u, v) = grid.local_coords(m, p);
        let (h00, h10, h01, h11) = (
            self.heights[a00.0],
            self.heights[a10.0],
            self.heights[a01.0],
            self.heights[a11.0],
        );
        let s = grid.spacing();
        let sag = self.sag_depth;

        let bilinear =
            h00 * (1.0 - u) * (1.0 - v) + h10 * u * (1.0 - v) + h01 * (1.0 - u) * v + h11 * u * v;
        let height = grid.z0() + bilinear - sag * phi(u) * phi(v);

        let du = (h10 - h00) * (1.0 - v) + (h11 - h01) * v - sag * dphi(u) * phi(v);
        let dv = (h01 - h00) * (1.0 - u) + (h11 - h10) * u - sag * phi(u) * dphi(v);
        let gradient = Vec2::new(du / s, dv / s);

        // phi'' = -8
        let duu = 8.0 * sag * phi(v);
        let dvv = 8.0 * sag * phi(u);
        let duv = (h00 - h10 - h01 + h11) - sag * dphi(u) * dphi(v);
        let hessian = [duu / (s * s), duv / (s * s), dvv / (s * s)];

        Ok(SurfaceSample {
            height,
            gradient,
            hessian,
        })
    }

    pub fn surface_height(&self, p: Vec2) -> Result<f64> {
        Ok(self.sample(p)?.height)
    }

    /// `(dh/dx, dh/dy)` at `p`.
    pub fn surface_gradient(&self, p: Vec2) -> Result<Vec2> {
        Ok(self.sample(p)?.gradient)
    }

    /// Moves every actuator toward its commanded offset by at most
    /// `rate_limit * dt`, then clamps to the stroke.
    pub fn apply_commands(&mut self, commands: &[f64], dt: f64, rate_limit: f64) {
        assert_eq!(
            commands.len(),
            self.heights.len(),
            "one command per actuator"
        );
        debug_assert!(dt > 0.0);
        let lim = self.grid.height_limit();
        let max_step = rate_limit * dt;
        for (h, &target) in self.heights.iter_mut().zip(commands) {
            let delta = (target - *h).clamp(-max_step, max_step);
            *h = (*h + delta).clamp(-lim, lim);
        }
    }
}

#[cfg(test)]
mod tests {
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::grid::ModuleId;

    fn field(r: usize, c: usize, sag: f64) -> SurfaceField {
        SurfaceField::new(Arc::new(ActuatorGrid::new(r, c, 0.5, 1.5).unwrap()), sag)
    }

    fn random_heights(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
        (0..n).map(|_| rng.random_range(-0.2..=0.2)).collect()
    }

    #[test]
    fn sag_dips_at_center_only() {
        let f = field(2, 2, 0.05);
        assert_abs_diff_eq!(
            f.surface_height(Vec2::new(0.25, 0.25)).unwrap(),
            1.45,
            epsilon = 1e-15
        );
        for p in f.grid().actuator_xy() {
            assert_eq!(f.surface_height(*p).unwrap(), 1.5);
        }
    }

    #[test]
    fn tilted_corners_cancel_sag_at_center() {
        // Corners (0, 0, 0.1, 0.1): bilinear center is 0.05, sag removes 0.05.
        let f = field(1, 1, 0.05).with_heights(&[0.0, 0.0, 0.1, 0.1]);
        assert_abs_diff_eq!(
            f.surface_height(Vec2::new(0.25, 0.25)).unwrap(),
            1.5,
            epsilon = 1e-12
        );
    }

    #[test]
    fn flat_surface_has_zero_gradient() {
        let f = field(2, 2, 0.0);
        for p in [
            Vec2::new(0.1, 0.3),
            Vec2::new(0.9, 0.9),
            Vec2::new(0.5, 0.5),
        ] {
            assert_eq!(f.surface_gradient(p).unwrap(), Vec2::ZERO);
        }
    }

    #[test]
    fn planar_corners_reproduce_plane() {
        // Plane through z0 about the module center with slopes (sx, sy).
        let (sx, sy) = (-0.3, 0.2);
        let f0 = field(1, 1, 0.0);
        let center = Vec2::new(0.25, 0.25);
        let hs: Vec<f64> = f0
            .grid()
            .actuator_xy()
            .iter()
            .map(|p| sx * (p.x - center.x) + sy * (p.y - center.y))
            .collect();
        let f = f0.with_heights(&hs);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let p = Vec2::new(rng.random_range(0.0..0.5), rng.random_range(0.0..0.5));
            let expect = 1.5 + sx * (p.x - center.x) + sy * (p.y - center.y);
            assert!((f.surface_height(p).unwrap() - expect).abs() < 1e-9);
            let g = f.surface_gradient(p).unwrap();
            assert_abs_diff_eq!(g.x, sx, epsilon = 1e-12);
            assert_abs_diff_eq!(g.y, sy, epsilon = 1e-12);
        }
    }

    #[test]
    fn corners_interpolate_exactly() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let g = Arc::new(ActuatorGrid::new(3, 3, 0.5, 1.5).unwrap());
        let f = SurfaceField::new(g.clone(), 0.05).with_heights(&random_heights(&mut rng, 16));
        for m in g.modules() {
            for a in g.module_actuators(m).unwrap() {
                let h = f.surface_height(g.actuator_position(a)).unwrap();
                assert!((h - (1.5 + f.heights()[a.0])).abs() < 1e-12);
            }
        }
    }

    // Evaluates the closed form of one specific module, bypassing detect_module.
    fn eval_in_module(f: &SurfaceField, m: ModuleId, p: Vec2) -> f64 {
        let g = f.grid();
        let [a, b, c, d] = g.module_actuators(m).unwrap();
        let (u, v) = g.local_coords(m, p);
        let h = f.heights();
        g.z0()
            + h[a.0] * (1.0 - u) * (1.0 - v)
            + h[b.0] * u * (1.0 - v)
            + h[c.0] * (1.0 - u) * v
            + h[d.0] * u * v
            - f.sag_depth() * 4.0 * u * (1.0 - u) * 4.0 * v * (1.0 - v)
    }

    #[test]
    fn shared_edges_are_continuous() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let g = Arc::new(ActuatorGrid::new(3, 3, 0.5, 1.5).unwrap());
        let f = SurfaceField::new(g.clone(), 0.05).with_heights(&random_heights(&mut rng, 16));
        for a in g.modules() {
            for b in g.modules() {
                if !g.are_adjacent(a, b) || a > b {
                    continue;
                }
                let shared = g.shared_actuators(a, b).unwrap();
                let (p0, p1) = (
                    g.actuator_position(shared[0]),
                    g.actuator_position(shared[1]),
                );
                for k in 0..100 {
                    let p = p0 + (p1 - p0) * (k as f64 / 99.0);
                    let ha = eval_in_module(&f, a, p);
                    let hb = eval_in_module(&f, b, p);
                    assert!(
                        (ha - hb).abs() < 1e-9,
                        "edge {a}-{b} at {p:?}: {ha} vs {hb}"
                    );
                }
            }
        }
    }

    #[test]
    fn gradient_and_hessian_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let g = Arc::new(ActuatorGrid::new(2, 2, 0.5, 1.5).unwrap());
        let f = SurfaceField::new(g.clone(), 0.05).with_heights(&random_heights(&mut rng, 9));
        let h = 1e-5;
        for _ in 0..1000 {
            // Stay clear of cell edges where the field is only C0.
            let m = ModuleId(rng.random_range(0..4));
            let lo = g.module_min_corner(m);
            let p = lo + Vec2::new(rng.random_range(0.01..0.49), rng.random_range(0.01..0.49));
            let s = f.sample(p).unwrap();
            let hx = |d: f64| f.surface_height(p + Vec2::new(d, 0.0)).unwrap();
            let hy = |d: f64| f.surface_height(p + Vec2::new(0.0, d)).unwrap();
            let fd = Vec2::new((hx(h) - hx(-h)) / (2.0 * h), (hy(h) - hy(-h)) / (2.0 * h));
            assert!(
                (s.gradient - fd).norm() < 1e-6,
                "{:?} vs {:?}",
                s.gradient,
                fd
            );
            let gx = |d: Vec2| f.surface_gradient(p + d).unwrap();
            let hxx = (gx(Vec2::new(h, 0.0)).x - gx(Vec2::new(-h, 0.0)).x) / (2.0 * h);
            let hxy = (gx(Vec2::new(0.0, h)).x - gx(Vec2::new(0.0, -h)).x) / (2.0 * h);
            let hyy = (gx(Vec2::new(0.0, h)).y - gx(Vec2::new(0.0, -h)).y) / (2.0 * h);
            assert!((s.hessian[0] - hxx).abs() < 1e-5);
            assert!((s.hessian[1] - hxy).abs() < 1e-5);
            assert!((s.hessian[2] - hyy).abs() < 1e-5);
        }
    }

    #[test]
    fn out_of_bounds_is_rejected() {
        let f = field(2, 2, 0.05);
        assert!(f.surface_height(Vec2::new(-0.01, 0.5)).is_err());
        assert!(f.surface_gradient(Vec2::new(0.5, 1.01)).is_err());
    }

    #[test]
    fn apply_commands_examples() {
        let mut f = field(1, 1, 0.0);
        f.apply_commands(&[0.2, 0.0, 0.0, 0.0], 0.001, 0.2);
        assert_abs_diff_eq!(f.heights()[0], 0.0002, epsilon = 1e-15);

        let mut f = field(1, 1, 0.0).with_heights(&[0.19, 0.0, 0.0, 0.0]);
        f.apply_commands(&[0.5, 0.0, 0.0, 0.0], 1.0, 0.2);
        assert_eq!(f.heights()[0], 0.2);

        let mut f = field(1, 1, 0.0).with_heights(&[0.1, -0.05, 0.0, 0.2]);
        let before = f.heights().to_vec();
        f.apply_commands(&before, 0.001, 0.2);
        assert_eq!(f.heights(), &before[..]);
    }

    proptest! {
        #[test]
        fn apply_commands_respects_limits(
            start in proptest::collection::vec(-0.2f64..=0.2, 4),
            cmd in proptest::collection::vec(-1.0f64..=1.0, 4),
            dt in 1e-4f64..2.0,
            rate in 0.0f64..5.0,
        ) {
            let mut f = field(1, 1, 0.05).with_heights(&start);
            f.apply_commands(&cmd, dt, rate);
            for (i, h) in f.heights().iter().enumerate() {
                prop_assert!(h.abs() <= 0.2);
                prop_assert!((h - start[i]).abs() <= rate * dt + 1e-12);
            }
        }
    }
}
