//! Uniform tensor grids with multilinear interpolation and exact quadrature
//! of the interpolant over axis-aligned boxes.
//!
//! The interpolant is a sum of tensor-product hat functions, so integrals
//! over boxes factorize into per-axis hat-function integrals. All quadrature
//! in this crate goes through that decomposition: on the full domain it
//! reduces to the trapezoidal rule, and on clipped boxes it stays exact for
//! the interpolant (the trapezoidal rule is exact for per-axis affine
//! functions on any subinterval).

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// One uniform axis with `nodes` grid nodes spanning `[lo, hi]`.
///
/// A single-node axis represents a field that is constant along that axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub lo: f64,
    pub hi: f64,
    pub nodes: usize,
}

impl Axis {
    pub fn new(lo: f64, hi: f64, nodes: usize) -> Self {
        assert!(nodes >= 1 && hi > lo, "degenerate axis");
        Axis { lo, hi, nodes }
    }

    pub fn step(&self) -> f64 {
        if self.nodes == 1 {
            self.hi - self.lo
        } else {
            (self.hi - self.lo) / (self.nodes - 1) as f64
        }
    }

    pub fn node(&self, i: usize) -> f64 {
        if self.nodes == 1 {
            self.lo
        } else {
            self.lo + i as f64 * self.step()
        }
    }

    /// Interpolation weights at `x`, clamped to the axis range.
    /// Returns one or two `(node, weight)` pairs.
    fn interp(&self, x: f64) -> ([(usize, f64); 2], usize) {
        if self.nodes == 1 {
            return ([(0, 1.0), (0, 0.0)], 1);
        }
        let h = self.step();
        let pos = ((x - self.lo) / h).clamp(0.0, (self.nodes - 1) as f64);
        let cell = (pos.floor() as usize).min(self.nodes - 2);
        let xi = pos - cell as f64;
        ([(cell, 1.0 - xi), (cell + 1, xi)], 2)
    }

    /// Integrals of every hat function over `[a, b]` (clamped to the axis).
    /// Only nodes with nonzero contribution are returned.
    fn hat_integrals(&self, a: f64, b: f64) -> Vec<(usize, f64)> {
        let a = a.max(self.lo);
        let b = b.min(self.hi);
        if b <= a {
            return Vec::new();
        }
        if self.nodes == 1 {
            return vec![(0, b - a)];
        }
        let h = self.step();
        let mut acc = vec![0.0; self.nodes];
        let first = (((a - self.lo) / h).floor() as usize).min(self.nodes - 2);
        let last = (((b - self.lo) / h).ceil() as usize).max(1).min(self.nodes - 1);
        for cell in first..last {
            let x0 = self.node(cell);
            let x1 = self.node(cell + 1);
            let lo = a.max(x0);
            let hi = b.min(x1);
            if hi <= lo {
                continue;
            }
            let len = hi - lo;
            let xi_mid = ((lo + hi) / 2.0 - x0) / h;
            acc[cell] += len * (1.0 - xi_mid);
            acc[cell + 1] += len * xi_mid;
        }
        acc.into_iter()
            .enumerate()
            .filter(|&(_, w)| w != 0.0)
            .collect()
    }
}

/// Tensor-product grid; values are stored row-major with the last axis fastest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    axes: Vec<Axis>,
}

impl Grid {
    pub fn new(axes: Vec<Axis>) -> Self {
        assert!(!axes.is_empty());
        Grid { axes }
    }

    /// Grid over `[0,1]^{d+1}` (time first, then space), `resolution` cells per axis.
    pub fn background(d: usize, resolution: usize) -> Self {
        let axis = Axis::new(0.0, 1.0, resolution + 1);
        Grid::new(vec![axis; d + 1])
    }

    /// Grid over `[0,a] x [-b,b]^d`, `resolution` cells per axis.
    pub fn trigger(a: f64, b: f64, d: usize, resolution: usize) -> Self {
        let mut axes = vec![Axis::new(0.0, a, resolution + 1)];
        axes.extend(std::iter::repeat(Axis::new(-b, b, resolution + 1)).take(d));
        Grid::new(axes)
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    pub fn axes(&self) -> &[Axis] {
        &self.axes
    }

    pub fn node_count(&self) -> usize {
        self.axes.iter().map(|a| a.nodes).product()
    }

    pub fn volume(&self) -> f64 {
        self.axes.iter().map(|a| a.hi - a.lo).product()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x.iter()
                .zip(&self.axes)
                .all(|(&xi, ax)| xi >= ax.lo && xi <= ax.hi)
    }

    /// Coordinates of every node, row-major (last axis fastest).
    pub fn node_coords(&self) -> Vec<Vec<f64>> {
        let mut out = Vec::with_capacity(self.node_count());
        let mut idx = vec![0usize; self.dim()];
        loop {
            out.push(
                idx.iter()
                    .zip(&self.axes)
                    .map(|(&i, ax)| ax.node(i))
                    .collect(),
            );
            let mut k = self.dim();
            loop {
                if k == 0 {
                    return out;
                }
                k -= 1;
                idx[k] += 1;
                if idx[k] < self.axes[k].nodes {
                    break;
                }
                idx[k] = 0;
            }
        }
    }

    /// Sparse multilinear interpolation weights at `x` (up to `2^dim` entries).
    pub fn interp_weights(&self, x: &[f64]) -> Vec<(usize, f64)> {
        debug_assert_eq!(x.len(), self.dim());
        let per_axis: Vec<_> = x
            .iter()
            .zip(&self.axes)
            .map(|(&xi, ax)| ax.interp(xi))
            .collect();
        let mut out = vec![(0usize, 1.0f64)];
        for (k, (pairs, n)) in per_axis.iter().enumerate() {
            let mut next = Vec::with_capacity(out.len() * n);
            for &(flat, w) in &out {
                for &(i, wi) in &pairs[..*n] {
                    if wi != 0.0 {
                        next.push((flat * self.axes[k].nodes + i, w * wi));
                    }
                }
            }
            out = next;
        }
        out
    }

    /// Exact integral of the interpolant of `values` over the box `[lo, hi]`
    /// (clamped to the grid extents per axis). Returns 0 for empty boxes.
    pub fn box_integral(&self, values: &[f64], lo: &[f64], hi: &[f64]) -> f64 {
        let mut acc = 0.0;
        self.for_each_box_weight(lo, hi, |flat, w| acc += w * values[flat]);
        acc
    }

    /// Accumulate the exact box-integration weights into a dense vector:
    /// after the call, `out[i] += (integral weight of node i over the box)`.
    pub fn accumulate_box_weights(&self, lo: &[f64], hi: &[f64], out: &mut [f64]) {
        self.for_each_box_weight(lo, hi, |flat, w| out[flat] += w);
    }

    fn for_each_box_weight(&self, lo: &[f64], hi: &[f64], mut f: impl FnMut(usize, f64)) {
        debug_assert_eq!(lo.len(), self.dim());
        debug_assert_eq!(hi.len(), self.dim());
        let per_axis: Vec<Vec<(usize, f64)>> = self
            .axes
            .iter()
            .enumerate()
            .map(|(k, ax)| ax.hat_integrals(lo[k], hi[k]))
            .collect();
        if per_axis.iter().any(|v| v.is_empty()) {
            return;
        }
        let mut idx = vec![0usize; self.dim()];
        loop {
            let mut flat = 0;
            let mut w = 1.0;
            for (k, &j) in idx.iter().enumerate() {
                let (node, wk) = per_axis[k][j];
                flat = flat * self.axes[k].nodes + node;
                w *= wk;
            }
            f(flat, w);
            let mut k = self.dim();
            loop {
                if k == 0 {
                    return;
                }
                k -= 1;
                idx[k] += 1;
                if idx[k] < per_axis[k].len() {
                    break;
                }
                idx[k] = 0;
            }
        }
    }

    /// Full-domain quadrature weights (trapezoidal rule), one per node.
    pub fn quadrature_weights(&self) -> Vec<f64> {
        let lo: Vec<f64> = self.axes.iter().map(|a| a.lo).collect();
        let hi: Vec<f64> = self.axes.iter().map(|a| a.hi).collect();
        let mut w = vec![0.0; self.node_count()];
        self.accumulate_box_weights(&lo, &hi, &mut w);
        w
    }

    /// Same extents, `factor` times as many cells per axis (single-node axes
    /// stay single). Used to build evaluation grids for distance quadrature.
    pub fn refined(&self, factor: usize) -> Grid {
        Grid::new(
            self.axes
                .iter()
                .map(|a| {
                    let nodes = if a.nodes == 1 { 1 } else { (a.nodes - 1) * factor + 1 };
                    Axis::new(a.lo, a.hi, nodes)
                })
                .collect(),
        )
    }
}

/// Which domain a grid field lives on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FieldDomain {
    /// `S = [0,1]^{d+1}` — the background rate.
    Background,
    /// `[0,a] x [-b,b]^d` — the triggering kernel; zero outside.
    Trigger,
}

/// Nonnegative field sampled on a grid, evaluated by multilinear interpolation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridField {
    grid: Grid,
    values: Vec<f64>,
    domain: FieldDomain,
}

impl GridField {
    pub fn new(grid: Grid, values: Vec<f64>, domain: FieldDomain) -> Result<Self> {
        if values.len() != grid.node_count() {
            return Err(Error::InvalidParameter(format!(
                "value count {} does not match grid node count {}",
                values.len(),
                grid.node_count()
            )));
        }
        if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::InvalidParameter(
                "field values must be finite and nonnegative".into(),
            ));
        }
        Ok(GridField { grid, values, domain })
    }

    /// Constant field on the given grid.
    pub fn constant(grid: Grid, value: f64, domain: FieldDomain) -> Result<Self> {
        let n = grid.node_count();
        GridField::new(grid, vec![value; n], domain)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn domain(&self) -> FieldDomain {
        self.domain
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Evaluate the interpolant. Trigger fields are exactly zero outside
    /// their domain; background fields clamp to the boundary.
    pub fn eval(&self, x: &[f64]) -> f64 {
        if self.domain == FieldDomain::Trigger && !self.grid.contains(x) {
            return 0.0;
        }
        self.grid
            .interp_weights(x)
            .into_iter()
            .map(|(i, w)| w * self.values[i])
            .sum()
    }

    /// `L1` norm over the field's own domain (exact for the interpolant).
    pub fn l1_norm(&self) -> f64 {
        self.grid
            .quadrature_weights()
            .iter()
            .zip(&self.values)
            .map(|(w, v)| w * v)
            .sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn interpolation_reproduces_node_values() {
        let grid = Grid::background(1, 4);
        let values: Vec<f64> = (0..grid.node_count()).map(|i| (i as f64).sin().abs()).collect();
        let field = GridField::new(grid.clone(), values.clone(), FieldDomain::Background).unwrap();
        for (node, coords) in grid.node_coords().into_iter().enumerate() {
            assert!((field.eval(&coords) - values[node]).abs() < 1e-14);
        }
    }

    #[test]
    fn constant_box_integral_is_volume() {
        let grid = Grid::trigger(0.2, 0.1, 1, 4);
        let field = GridField::constant(grid, 2.0, FieldDomain::Trigger).unwrap();
        let full = field.grid().box_integral(field.values(), &[0.0, -0.1], &[0.2, 0.1]);
        assert!((full - 2.0 * 0.2 * 0.2).abs() < 1e-15);
        let part = field.grid().box_integral(field.values(), &[0.05, 0.0], &[0.13, 0.07]);
        assert!((part - 2.0 * 0.08 * 0.07).abs() < 1e-15);
    }

    #[test]
    fn box_integral_matches_dense_riemann_sum() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let grid = Grid::background(1, 5);
        let values: Vec<f64> = (0..grid.node_count()).map(|_| rng.gen::<f64>()).collect();
        let field = GridField::new(grid, values, FieldDomain::Background).unwrap();
        let (lo, hi) = ([0.13, 0.27], [0.81, 0.95]);
        let exact = field.grid().box_integral(field.values(), &lo, &hi);
        // Midpoint Riemann refinement oracle.
        let m = 800;
        let mut acc = 0.0;
        for i in 0..m {
            for j in 0..m {
                let x = [
                    lo[0] + (i as f64 + 0.5) / m as f64 * (hi[0] - lo[0]),
                    lo[1] + (j as f64 + 0.5) / m as f64 * (hi[1] - lo[1]),
                ];
                acc += field.eval(&x);
            }
        }
        acc *= (hi[0] - lo[0]) * (hi[1] - lo[1]) / (m * m) as f64;
        assert!((exact - acc).abs() < 5e-5 * exact.abs());
    }

    #[test]
    fn quadrature_weights_sum_to_volume() {
        let grid = Grid::trigger(0.3, 0.2, 2, 3);
        let total: f64 = grid.quadrature_weights().iter().sum();
        assert!((total - 0.3 * 0.4 * 0.4).abs() < 1e-14);
    }

    #[test]
    fn trigger_field_vanishes_outside_domain() {
        let grid = Grid::trigger(0.2, 0.1, 1, 2);
        let field = GridField::constant(grid, 1.0, FieldDomain::Trigger).unwrap();
        assert_eq!(field.eval(&[0.25, 0.0]), 0.0);
        assert_eq!(field.eval(&[-0.01, 0.0]), 0.0);
        assert_eq!(field.eval(&[0.1, 0.12]), 0.0);
        assert_eq!(field.eval(&[0.1, 0.0]), 1.0);
    }

    #[test]
    fn single_node_axis_is_constant() {
        let grid = Grid::new(vec![Axis::new(0.0, 1.0, 1), Axis::new(0.0, 1.0, 1)]);
        let field = GridField::constant(grid, 3.5, FieldDomain::Background).unwrap();
        assert_eq!(field.eval(&[0.7, 0.2]), 3.5);
        assert!((field.l1_norm() - 3.5).abs() < 1e-15);
    }

    #[test]
    fn negative_values_rejected() {
        let grid = Grid::background(1, 2);
        let n = grid.node_count();
        let mut values = vec![1.0; n];
        values[0] = -0.1;
        assert!(GridField::new(grid, values, FieldDomain::Background).is_err());
    }
}
