//! The two distances used to measure estimation quality: an averaged `L1`
//! distance between conditional intensity paths (the stochastic distance) and
//! the `L1` distance on the parameter itself.
//!
//! Both are computed by trapezoidal quadrature of the absolute difference on
//! a refined evaluation grid. The eval nodes and weights are fixed by the
//! grids alone, so symmetry and the triangle inequality hold exactly (they
//! are weighted l1 distances of the evaluation vectors).

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::model::{Dataset, ParameterF};

const DEFAULT_REFINE: usize = 2;

fn check_compatible(f: &ParameterF, f2: &ParameterF) -> Result<()> {
    if f.d() != f2.d() {
        return Err(Error::DimensionMismatch {
            expected: f.d(),
            got: f2.d(),
        });
    }
    if f.support() != f2.support() {
        return Err(Error::InvalidParameter(
            "parameters must share the triggering support".into(),
        ));
    }
    Ok(())
}

fn eval_grid(a: &Grid, b: &Grid, refine: usize) -> Grid {
    let finer = if a.node_count() >= b.node_count() { a } else { b };
    finer.refined(refine)
}

/// `(1/n) sum_i int_S |lambda^i(f) - lambda^i(f2)|` by quadrature.
pub fn stochastic_distance(f: &ParameterF, f2: &ParameterF, data: &Dataset) -> Result<f64> {
    stochastic_distance_with_refinement(f, f2, data, DEFAULT_REFINE)
}

pub fn stochastic_distance_with_refinement(
    f: &ParameterF,
    f2: &ParameterF,
    data: &Dataset,
    refine: usize,
) -> Result<f64> {
    check_compatible(f, f2)?;
    if data.n() == 0 {
        return Err(Error::EmptyDataset);
    }
    if data.d() != f.d() {
        return Err(Error::DimensionMismatch {
            expected: f.d(),
            got: data.d(),
        });
    }
    let grid = eval_grid(f.mu().grid(), f2.mu().grid(), refine);
    let nodes = grid.node_coords();
    let weights = grid.quadrature_weights();
    // Background difference is shared across sequences.
    let mu_diff: Vec<f64> = nodes
        .iter()
        .map(|x| f.mu().eval(x) - f2.mu().eval(x))
        .collect();
    let a = f.support().a();
    let mut total = 0.0;
    let mut shifted = vec![0.0; f.d() + 1];
    for seq in data.sequences() {
        let mut seq_total = 0.0;
        for ((x, w), dmu) in nodes.iter().zip(&weights).zip(&mu_diff) {
            let t = x[0];
            let mut diff = *dmu;
            for p in seq.points() {
                if p.t >= t {
                    break;
                }
                if t - p.t > a {
                    continue;
                }
                shifted[0] = t - p.t;
                for k in 0..f.d() {
                    shifted[k + 1] = x[k + 1] - p.s[k];
                }
                diff += f.g().eval(&shifted) - f2.g().eval(&shifted);
            }
            seq_total += w * diff.abs();
        }
        total += seq_total;
    }
    Ok(total / data.n() as f64)
}

/// `||mu - mu'||_1 + ||g - g'||_1`, each over its own domain.
pub fn l1_distance(f: &ParameterF, f2: &ParameterF) -> Result<f64> {
    l1_distance_with_refinement(f, f2, DEFAULT_REFINE)
}

pub fn l1_distance_with_refinement(f: &ParameterF, f2: &ParameterF, refine: usize) -> Result<f64> {
    check_compatible(f, f2)?;
    Ok(l1_distance_fields(f.mu(), f.g(), f2.mu(), f2.g(), refine)?)
}

/// Same quadrature on raw fields, without the `ParameterF` invariants
/// (posterior draws may transiently be supercritical).
pub fn l1_distance_fields(
    mu: &crate::grid::GridField,
    g: &crate::grid::GridField,
    mu2: &crate::grid::GridField,
    g2: &crate::grid::GridField,
    refine: usize,
) -> Result<f64> {
    let mut total = 0.0;
    for (a, b) in [(mu, mu2), (g, g2)] {
        if a.domain() != b.domain() {
            return Err(Error::InvalidParameter("field domains differ".into()));
        }
        let grid = eval_grid(a.grid(), b.grid(), refine);
        let weights = grid.quadrature_weights();
        total += grid
            .node_coords()
            .iter()
            .zip(&weights)
            .map(|(x, w)| w * (a.eval(x) - b.eval(x)).abs())
            .sum::<f64>();
    }
    Ok(total)
}
