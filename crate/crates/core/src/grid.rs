//! Actuator lattice, module partition and module-level path planning.
//!
//! Actuators sit on a `(rows + 1) x (cols + 1)` lattice. Both actuators and
//! modules are numbered row-major from the origin corner, so on a 2x2 module
//! grid module M0 owns A0, A1, A3, A4 and M0/M2 share A3 and A4.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Vec2;

/// Default symmetric actuator stroke about the rest height, in meters.
pub const DEFAULT_HEIGHT_LIMIT: f64 = 0.20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ModuleId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ActuatorId(pub usize);

impl fmt::Display for ModuleId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "M{}", self.0)
    }
}

impl fmt::Display for ActuatorId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "A{}", self.0)
    }
}

/// Actuators driven during one inter-module hop.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RaiseLowerSets {
    /// The two actuators of the source module not shared with the destination.
    pub raise: Vec<ActuatorId>,
    /// The two shared actuators followed by the two exclusive to the destination.
    pub lower: Vec<ActuatorId>,
}

impl RaiseLowerSets {
    pub fn all(&self) -> impl Iterator<Item = ActuatorId> + '_ {
        self.raise.iter().chain(self.lower.iter()).copied()
    }

    /// The two actuators on the shared edge.
    pub fn shared(&self) -> &[ActuatorId] {
        &self.lower[..2]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ActuatorGrid {
    rows_modules: usize,
    cols_modules: usize,
    spacing: f64,
    origin: Vec2,
    actuator_xy: Vec<Vec2>,
    z0: f64,
    height_limit: f64,
}

impl ActuatorGrid {
    pub fn new(rows_modules: usize, cols_modules: usize, spacing: f64, z0: f64) -> Result<Self> {
        Self::with_limits(
            rows_modules,
            cols_modules,
            spacing,
            z0,
            DEFAULT_HEIGHT_LIMIT,
        )
    }

    pub fn with_limits(
        rows_modules: usize,
        cols_modules: usize,
        spacing: f64,
        z0: f64,
        height_limit: f64,
    ) -> Result<Self> {
        if rows_modules == 0 || cols_modules == 0 {
            return Err(Error::InvalidGrid(format!(
                "module grid must be at least 1x1, got {rows_modules}x{cols_modules}"
            )));
        }
        if !(spacing.is_finite() && spacing > 0.0) {
            return Err(Error::InvalidGrid(format!(
                "spacing must be positive, got {spacing}"
            )));
        }
        if !(height_limit.is_finite() && height_limit > 0.0) {
            return Err(Error::InvalidGrid(format!(
                "height limit must be positive, got {height_limit}"
            )));
        }
        if !z0.is_finite() {
            return Err(Error::InvalidGrid("z0 must be finite".into()));
        }
        let origin = Vec2::ZERO;
        let actuator_xy = (0..=rows_modules)
            .flat_map(|r| {
                (0..=cols_modules)
                    .map(move |c| origin + Vec2::new(c as f64 * spacing, r as f64 * spacing))
            })
            .collect();
        Ok(Self {
            rows_modules,
            cols_modules,
            spacing,
            origin,
            actuator_xy,
            z0,
            height_limit,
        })
    }

    pub fn rows_modules(&self) -> usize {
        self.rows_modules
    }

    pub fn cols_modules(&self) -> usize {
        self.cols_modules
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn origin(&self) -> Vec2 {
        self.origin
    }

    pub fn z0(&self) -> f64 {
        self.z0
    }

    /// Symmetric actuator limit: heights live in `[-limit, limit]`.
    pub fn height_limit(&self) -> f64 {
        self.height_limit
    }

    pub fn module_count(&self) -> usize {
        self.rows_modules * self.cols_modules
    }

    pub fn actuator_count(&self) -> usize {
        self.actuator_xy.len()
    }

    pub fn actuator_xy(&self) -> &[Vec2] {
        &self.actuator_xy
    }

    pub fn actuator_position(&self, a: ActuatorId) -> Vec2 {
        self.actuator_xy[a.0]
    }

    pub fn modules(&self) -> impl Iterator<Item = ModuleId> {
        (0..self.module_count()).map(ModuleId)
    }

    /// Lower-left and upper-right corners of the platform.
    pub fn bounds(&self) -> (Vec2, Vec2) {
        let extent = Vec2::new(
            self.cols_modules as f64 * self.spacing,
            self.rows_modules as f64 * self.spacing,
        );
        (self.origin, self.origin + extent)
    }

    pub fn contains(&self, p: Vec2) -> bool {
        let (lo, hi) = self.bounds();
        p.x >= lo.x && p.x <= hi.x && p.y >= lo.y && p.y <= hi.y
    }

    /// Projects `p` onto the closed platform rectangle.
    pub fn clamp(&self, p: Vec2) -> Vec2 {
        let (lo, hi) = self.bounds();
        Vec2::new(p.x.clamp(lo.x, hi.x), p.y.clamp(lo.y, hi.y))
    }

    fn check_module(&self, m: ModuleId) -> Result<()> {
        if m.0 < self.module_count() {
            Ok(())
        } else {
            Err(Error::InvalidModule(m.0))
        }
    }

    pub fn module_row_col(&self, m: ModuleId) -> (usize, usize) {
        (m.0 / self.cols_modules, m.0 % self.cols_modules)
    }

    pub fn module_at(&self, row: usize, col: usize) -> Option<ModuleId> {
        (row < self.rows_modules && col < self.cols_modules)
            .then(|| ModuleId(row * self.cols_modules + col))
    }

    fn actuator_at(&self, row: usize, col: usize) -> ActuatorId {
        ActuatorId(row * (self.cols_modules + 1) + col)
    }

    /// Corners of module `m` ordered (r,c), (r,c+1), (r+1,c), (r+1,c+1).
    pub fn module_actuators(&self, m: ModuleId) -> Result<[ActuatorId; 4]> {
        self.check_module(m)?;
        let (r, c) = self.module_row_col(m);
        Ok([
            self.actuator_at(r, c),
            self.actuator_at(r, c + 1),
            self.actuator_at(r + 1, c),
            self.actuator_at(r + 1, c + 1),
        ])
    }

    pub fn module_min_corner(&self, m: ModuleId) -> Vec2 {
        let (r, c) = self.module_row_col(m);
        self.origin + Vec2::new(c as f64 * self.spacing, r as f64 * self.spacing)
    }

    pub fn module_center(&self, m: ModuleId) -> Vec2 {
        self.module_min_corner(m) + Vec2::new(0.5 * self.spacing, 0.5 * self.spacing)
    }

    /// Actuators common to both modules, ascending.
    pub fn shared_actuators(&self, a: ModuleId, b: ModuleId) -> Result<Vec<ActuatorId>> {
        let sa = self.module_actuators(a)?;
        let sb = self.module_actuators(b)?;
        Ok(sa.into_iter().filter(|x| sb.contains(x)).collect())
    }

    pub fn are_adjacent(&self, a: ModuleId, b: ModuleId) -> bool {
        if a.0 >= self.module_count() || b.0 >= self.module_count() {
            return false;
        }
        let (ra, ca) = self.module_row_col(a);
        let (rb, cb) = self.module_row_col(b);
        ra.abs_diff(rb) + ca.abs_diff(cb) == 1
    }

    /// Module whose closed cell contains `p`; shared boundaries go to the
    /// lowest module index.
    pub fn detect_module(&self, p: Vec2) -> Result<ModuleId> {
        if !(p.is_finite() && self.contains(p)) {
            return Err(Error::OutOfWorkspace { x: p.x, y: p.y });
        }
        let local = (p - self.origin) * (1.0 / self.spacing);
        let col = cell_index(local.x, self.cols_modules);
        let row = cell_index(local.y, self.rows_modules);
        Ok(ModuleId(row * self.cols_modules + col))
    }

    /// Coordinates of `p` inside module `m`, scaled to the unit square.
    pub fn local_coords(&self, m: ModuleId, p: Vec2) -> (f64, f64) {
        let d = (p - self.module_min_corner(m)) * (1.0 / self.spacing);
        (d.x, d.y)
    }

    /// Manhattan route between modules, endpoints included. Rows are
    /// traversed before columns.
    pub fn find_path(&self, from: ModuleId, to: ModuleId) -> Result<Vec<ModuleId>> {
        self.check_module(from)?;
        self.check_module(to)?;
        let (mut r, mut c) = self.module_row_col(from);
        let (rt, ct) = self.module_row_col(to);
        let mut path = vec![from];
        while r != rt {
            r = if rt > r { r + 1 } else { r - 1 };
            path.push(ModuleId(r * self.cols_modules + c));
        }
        while c != ct {
            c = if ct > c { c + 1 } else { c - 1 };
            path.push(ModuleId(r * self.cols_modules + c));
        }
        Ok(path)
    }

    pub fn actuators_to_raise(&self, from: ModuleId, to: ModuleId) -> Result<RaiseLowerSets> {
        self.check_module(from)?;
        self.check_module(to)?;
        if !self.are_adjacent(from, to) {
            return Err(Error::NotAdjacent { from, to });
        }
        let src = self.module_actuators(from)?;
        let dst = self.module_actuators(to)?;
        let shared: Vec<ActuatorId> = src.iter().filter(|a| dst.contains(a)).copied().collect();
        let raise = src
            .iter()
            .filter(|a| !shared.contains(a))
            .copied()
            .collect();
        let mut lower = shared.clone();
        lower.extend(dst.iter().filter(|a| !shared.contains(a)).copied());
        Ok(RaiseLowerSets { raise, lower })
    }

    /// Of two actuators, the one nearer the platform center (ties: lower id).
    pub fn inner_outer(&self, a: ActuatorId, b: ActuatorId) -> (ActuatorId, ActuatorId) {
        let (lo, hi) = self.bounds();
        let center = (lo + hi) * 0.5;
        let da = self.actuator_position(a).distance(center);
        let db = self.actuator_position(b).distance(center);
        if db < da || (db == da && b < a) {
            (b, a)
        } else {
            (a, b)
        }
    }
}

fn cell_index(local: f64, cells: usize) -> usize {
    // ceil(t) - 1 assigns boundary points to the lower cell.
    let idx = local.ceil() as i64 - 1;
    idx.clamp(0, cells as i64 - 1) as usize
}

#[cfg(test)]
mod tests {
    use std::collections::{BTreeSet, VecDeque};

    use proptest::prelude::*;

    use super::*;

    fn grid(r: usize, c: usize) -> ActuatorGrid {
        ActuatorGrid::new(r, c, 0.5, 1.5).unwrap()
    }

    fn ids(v: &[usize]) -> Vec<ActuatorId> {
        v.iter().map(|&i| ActuatorId(i)).collect()
    }

    // Oracle: enumerate lattice corners by coordinates rather than index math.
    fn corners_by_geometry(g: &ActuatorGrid, m: ModuleId) -> BTreeSet<ActuatorId> {
        let lo = g.module_min_corner(m);
        let hi = lo + Vec2::new(g.spacing(), g.spacing());
        g.actuator_xy()
            .iter()
            .enumerate()
            .filter(|(_, p)| {
                (p.x - lo.x).abs() < 1e-12 && (p.y - lo.y).abs() < 1e-12
                    || (p.x - hi.x).abs() < 1e-12 && (p.y - lo.y).abs() < 1e-12
                    || (p.x - lo.x).abs() < 1e-12 && (p.y - hi.y).abs() < 1e-12
                    || (p.x - hi.x).abs() < 1e-12 && (p.y - hi.y).abs() < 1e-12
            })
            .map(|(i, _)| ActuatorId(i))
            .collect()
    }

    // Oracle: breadth-first search over edge adjacency.
    fn bfs_len(g: &ActuatorGrid, a: ModuleId, b: ModuleId) -> usize {
        let mut dist = vec![usize::MAX; g.module_count()];
        let mut q = VecDeque::from([a]);
        dist[a.0] = 1;
        while let Some(m) = q.pop_front() {
            for n in g.modules() {
                if g.are_adjacent(m, n) && dist[n.0] == usize::MAX {
                    dist[n.0] = dist[m.0] + 1;
                    q.push_back(n);
                }
            }
        }
        dist[b.0]
    }

    #[test]
    fn build_grid_sizes() {
        let g = grid(2, 2);
        assert_eq!(g.actuator_count(), 9);
        assert_eq!(g.bounds(), (Vec2::ZERO, Vec2::new(1.0, 1.0)));
        assert_eq!(g.actuator_position(ActuatorId(4)), Vec2::new(0.5, 0.5));
        assert_eq!(grid(1, 1).actuator_count(), 4);
        assert_eq!(grid(1, 1).module_count(), 1);
        let g3 = grid(3, 3);
        assert_eq!(g3.actuator_count(), 16);
        assert_eq!(g3.module_count(), 9);
        assert_eq!(g.height_limit(), 0.2);
    }

    #[test]
    fn build_grid_rejects_bad_dimensions() {
        assert!(ActuatorGrid::new(0, 2, 0.5, 1.5).is_err());
        assert!(ActuatorGrid::new(2, 0, 0.5, 1.5).is_err());
        assert!(ActuatorGrid::new(2, 2, 0.0, 1.5).is_err());
        assert!(ActuatorGrid::new(2, 2, -0.5, 1.5).is_err());
        assert!(ActuatorGrid::with_limits(2, 2, 0.5, 1.5, 0.0).is_err());
    }

    #[test]
    fn module_actuators_match_lattice() {
        let g = grid(2, 2);
        let set = |m| {
            g.module_actuators(ModuleId(m))
                .unwrap()
                .into_iter()
                .collect::<BTreeSet<_>>()
        };
        assert_eq!(set(0), ids(&[0, 1, 3, 4]).into_iter().collect());
        assert_eq!(set(2), ids(&[3, 4, 6, 7]).into_iter().collect());
        for m in g.modules() {
            assert_eq!(set(m.0), corners_by_geometry(&g, m));
        }
        let g1 = grid(1, 1);
        assert_eq!(
            g1.module_actuators(ModuleId(0)).unwrap(),
            [ActuatorId(0), ActuatorId(1), ActuatorId(2), ActuatorId(3)]
        );
        assert!(matches!(
            g.module_actuators(ModuleId(4)),
            Err(Error::InvalidModule(4))
        ));
    }

    #[test]
    fn shared_actuator_sets() {
        let g = grid(2, 2);
        assert_eq!(
            g.shared_actuators(ModuleId(0), ModuleId(2)).unwrap(),
            ids(&[3, 4])
        );
        assert_eq!(
            g.shared_actuators(ModuleId(0), ModuleId(3)).unwrap(),
            ids(&[4])
        );
        let g3 = grid(3, 3);
        assert!(g3
            .shared_actuators(ModuleId(0), ModuleId(8))
            .unwrap()
            .is_empty());
        for a in g3.modules() {
            for b in g3.modules() {
                if a == b {
                    continue;
                }
                let ab = g3.shared_actuators(a, b).unwrap();
                assert_eq!(ab, g3.shared_actuators(b, a).unwrap());
                let oracle: BTreeSet<_> = corners_by_geometry(&g3, a)
                    .intersection(&corners_by_geometry(&g3, b))
                    .copied()
                    .collect();
                assert_eq!(ab.iter().copied().collect::<BTreeSet<_>>(), oracle);
                if g3.are_adjacent(a, b) {
                    assert_eq!(ab.len(), 2);
                }
            }
        }
    }

    #[test]
    fn detect_module_examples() {
        let g = grid(2, 2);
        assert_eq!(g.detect_module(Vec2::new(0.25, 0.25)).unwrap(), ModuleId(0));
        assert_eq!(g.detect_module(Vec2::new(0.5, 0.25)).unwrap(), ModuleId(0));
        assert_eq!(g.detect_module(Vec2::new(0.75, 0.75)).unwrap(), ModuleId(3));
        assert_eq!(g.detect_module(Vec2::new(0.5, 0.5)).unwrap(), ModuleId(0));
        assert_eq!(g.detect_module(Vec2::new(1.0, 1.0)).unwrap(), ModuleId(3));
        assert_eq!(g.detect_module(Vec2::new(0.0, 0.0)).unwrap(), ModuleId(0));
        assert!(matches!(
            g.detect_module(Vec2::new(1.7, 0.2)),
            Err(Error::OutOfWorkspace { .. })
        ));
        assert!(g.detect_module(Vec2::new(f64::NAN, 0.2)).is_err());
    }

    #[test]
    fn find_path_examples() {
        let g = grid(2, 2);
        assert_eq!(
            g.find_path(ModuleId(0), ModuleId(0)).unwrap(),
            vec![ModuleId(0)]
        );
        assert_eq!(
            g.find_path(ModuleId(0), ModuleId(3)).unwrap(),
            vec![ModuleId(0), ModuleId(2), ModuleId(3)]
        );
        let g3 = grid(3, 3);
        let p = g3.find_path(ModuleId(0), ModuleId(8)).unwrap();
        assert_eq!(p, [0, 3, 6, 7, 8].map(ModuleId).to_vec());
        assert_eq!(p.len(), bfs_len(&g3, ModuleId(0), ModuleId(8)));
    }

    #[test]
    fn path_law_holds_for_all_pairs() {
        for (r, c) in [(1, 1), (2, 2), (3, 3), (2, 4)] {
            let g = grid(r, c);
            for a in g.modules() {
                for b in g.modules() {
                    let p = g.find_path(a, b).unwrap();
                    let (ra, ca) = g.module_row_col(a);
                    let (rb, cb) = g.module_row_col(b);
                    assert_eq!(p.len(), ra.abs_diff(rb) + ca.abs_diff(cb) + 1);
                    assert_eq!(p.len(), bfs_len(&g, a, b));
                    assert_eq!(p.first(), Some(&a));
                    assert_eq!(p.last(), Some(&b));
                    for w in p.windows(2) {
                        assert_eq!(g.shared_actuators(w[0], w[1]).unwrap().len(), 2);
                    }
                }
            }
        }
    }

    #[test]
    fn raise_lower_examples() {
        let g = grid(2, 2);
        let s = g.actuators_to_raise(ModuleId(0), ModuleId(2)).unwrap();
        assert_eq!(s.raise, ids(&[0, 1]));
        assert_eq!(s.lower, ids(&[3, 4, 6, 7]));
        let s = g.actuators_to_raise(ModuleId(2), ModuleId(0)).unwrap();
        assert_eq!(s.raise, ids(&[6, 7]));
        assert_eq!(s.lower, ids(&[3, 4, 0, 1]));
        assert!(matches!(
            g.actuators_to_raise(ModuleId(0), ModuleId(3)),
            Err(Error::NotAdjacent { .. })
        ));
    }

    #[test]
    fn raise_lower_partitions_both_modules() {
        let g = grid(3, 3);
        for a in g.modules() {
            for b in g.modules() {
                if !g.are_adjacent(a, b) {
                    continue;
                }
                let s = g.actuators_to_raise(a, b).unwrap();
                let raise: BTreeSet<_> = s.raise.iter().copied().collect();
                let lower: BTreeSet<_> = s.lower.iter().copied().collect();
                assert_eq!(raise.len(), 2);
                assert_eq!(lower.len(), 4);
                assert!(raise.is_disjoint(&lower));
                let union: BTreeSet<_> = raise.union(&lower).copied().collect();
                let both: BTreeSet<_> = corners_by_geometry(&g, a)
                    .union(&corners_by_geometry(&g, b))
                    .copied()
                    .collect();
                assert_eq!(union, both);
                assert!(raise.is_subset(&corners_by_geometry(&g, a)));
            }
        }
    }

    #[test]
    fn inner_outer_on_two_by_two() {
        let g = grid(2, 2);
        assert_eq!(
            g.inner_outer(ActuatorId(1), ActuatorId(4)),
            (ActuatorId(4), ActuatorId(1))
        );
        assert_eq!(
            g.inner_outer(ActuatorId(4), ActuatorId(5)),
            (ActuatorId(4), ActuatorId(5))
        );
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(10_000))]

        #[test]
        fn every_point_maps_to_containing_module(x in 0.0f64..=1.5, y in 0.0f64..=1.0) {
            let g = ActuatorGrid::new(2, 3, 0.5, 1.5).unwrap();
            let p = Vec2::new(x, y);
            let m = g.detect_module(p).unwrap();
            let lo = g.module_min_corner(m);
            prop_assert!(p.x >= lo.x && p.x <= lo.x + 0.5 && p.y >= lo.y && p.y <= lo.y + 0.5);
            // Lowest-index rule: no lower module's closed cell contains p.
            for other in (0..m.0).map(ModuleId) {
                let lo = g.module_min_corner(other);
                let inside = p.x >= lo.x && p.x <= lo.x + 0.5 && p.y >= lo.y && p.y <= lo.y + 0.5;
                prop_assert!(!inside);
            }
            prop_assert_eq!(g.detect_module(p).unwrap(), m);
        }
    }
}
