//! Gaussian-process machinery: Gram matrices on field grids, Cholesky
//! factors with escalating jitter, whitened latent fields, and prior draws
//! of the Hawkes parameter.
//!
//! Inference works in whitened coordinates throughout: a field is
//! `link(L z)` with `L L^T = K + jitter I` and `z` standard normal, so the
//! prior on `z` is always `N(0, I)`.

use crate::error::{Error, Result};
use crate::grid::{FieldDomain, Grid, GridField};
use crate::kernel::{kernel_eval, KernelSpec};
use crate::link::{link_apply, link_invert, LinkSpec};
use crate::model::{branching_ratio, ParameterF, TriggeringSupport};
use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use std::sync::Arc;

/// Lower-triangular factor of `K + jitter I`.
#[derive(Debug, Clone)]
pub struct GramCholesky {
    l: DMatrix<f64>,
    jitter: f64,
}

impl GramCholesky {
    pub fn factor(&self) -> &DMatrix<f64> {
        &self.l
    }

    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn dim(&self) -> usize {
        self.l.nrows()
    }

    /// `L z`.
    pub fn multiply(&self, z: &DVector<f64>) -> DVector<f64> {
        &self.l * z
    }

    /// `L^T v` (adjoint, used by the chain rule).
    pub fn transpose_multiply(&self, v: &DVector<f64>) -> DVector<f64> {
        self.l.tr_mul(v)
    }

    /// Solve `L z = u` by forward substitution.
    pub fn solve_lower(&self, u: &DVector<f64>) -> DVector<f64> {
        let mut z = u.clone();
        self.l.solve_lower_triangular_mut(&mut z);
        z
    }

    /// Marginal standard deviation of `(L z)_i` when `z ~ N(m, diag(sd^2))`:
    /// the row norm of `L` weighted by `sd`.
    pub fn row_weighted_norm(&self, i: usize, sd: &DVector<f64>) -> f64 {
        let mut acc = 0.0;
        for j in 0..=i {
            let lij = self.l[(i, j)];
            acc += lij * lij * sd[j] * sd[j];
        }
        acc.sqrt()
    }
}

/// Factor `K + jitter I` where `K` is the kernel Gram matrix on `nodes`.
/// Jitter starts at `1e-10` of the diagonal scale and escalates tenfold up
/// to `1e-4` of it until the factorization succeeds.
pub fn gram_cholesky(spec: &KernelSpec, nodes: &[Vec<f64>]) -> Result<GramCholesky> {
    spec.validate()?;
    if nodes.is_empty() {
        return Err(Error::InvalidKernel("empty grid".into()));
    }
    let n = nodes.len();
    let mut k = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let v = kernel_eval(spec, &nodes[i], &nodes[j])?;
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    let max_diag = (0..n).map(|i| k[(i, i)]).fold(f64::NEG_INFINITY, f64::max);
    let min_diag = (0..n).map(|i| k[(i, i)]).fold(f64::INFINITY, f64::min);
    let mut jitter = 1e-10 * max_diag;
    let max_jitter = 1e-4 * max_diag;
    loop {
        let mut kj = k.clone();
        for i in 0..n {
            kj[(i, i)] += jitter;
        }
        if let Some(chol) = kj.cholesky() {
            return Ok(GramCholesky { l: chol.unpack(), jitter });
        }
        jitter *= 10.0;
        if jitter > max_jitter * 1.0000001 {
            return Err(Error::CholeskyFailed {
                max_jitter,
                min_diag,
                max_diag,
                n,
            });
        }
    }
}

/// Immutable prior context for one field: grid, factored Gram matrix, link.
#[derive(Debug, Clone)]
pub struct FieldPrior {
    grid: Grid,
    domain: FieldDomain,
    link: LinkSpec,
    chol: GramCholesky,
}

impl FieldPrior {
    pub fn new(spec: &KernelSpec, grid: Grid, domain: FieldDomain, link: LinkSpec) -> Result<Self> {
        link.validate()?;
        let chol = gram_cholesky(spec, &grid.node_coords())?;
        Ok(FieldPrior { grid, domain, link, chol })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn domain(&self) -> FieldDomain {
        self.domain
    }

    pub fn link(&self) -> LinkSpec {
        self.link
    }

    pub fn chol(&self) -> &GramCholesky {
        &self.chol
    }

    pub fn dim(&self) -> usize {
        self.chol.dim()
    }

    /// Push whitened coefficients through the factor and the link.
    pub fn node_values(&self, z: &DVector<f64>) -> Vec<f64> {
        self.chol
            .multiply(z)
            .iter()
            .map(|&u| link_apply(self.link, u))
            .collect()
    }

    pub fn field_from_latent(&self, z: &DVector<f64>) -> Result<GridField> {
        GridField::new(self.grid.clone(), self.node_values(z), self.domain)
    }

    /// Recover whitened coefficients from field node values.
    pub fn whiten(&self, field: &GridField) -> Result<DVector<f64>> {
        let u: Result<Vec<f64>> = field
            .values()
            .iter()
            .map(|&v| link_invert(self.link, v))
            .collect();
        Ok(self.chol.solve_lower(&DVector::from_vec(u?)))
    }
}

/// Whitened latent state of one field: the inference parameterization.
#[derive(Debug, Clone)]
pub struct LatentField {
    prior: Arc<FieldPrior>,
    z: DVector<f64>,
}

impl LatentField {
    pub fn new(prior: Arc<FieldPrior>, z: DVector<f64>) -> Result<Self> {
        if z.len() != prior.dim() {
            return Err(Error::DimensionMismatch {
                expected: prior.dim(),
                got: z.len(),
            });
        }
        Ok(LatentField { prior, z })
    }

    pub fn zeros(prior: Arc<FieldPrior>) -> Self {
        let n = prior.dim();
        LatentField { prior, z: DVector::zeros(n) }
    }

    pub fn prior(&self) -> &FieldPrior {
        &self.prior
    }

    pub fn z(&self) -> &DVector<f64> {
        &self.z
    }

    pub fn field(&self) -> Result<GridField> {
        self.prior.field_from_latent(&self.z)
    }
}

pub fn standard_normal_vector(rng: &mut ChaCha8Rng, n: usize) -> DVector<f64> {
    DVector::from_iterator(n, (0..n).map(|_| StandardNormal.sample(rng)))
}

/// Draw `f = (mu, g)` from the prior. The trigger component is redrawn up to
/// 100 times if its branching ratio reaches 1.
pub fn prior_draw(
    mu_kernel: &KernelSpec,
    g_kernel: &KernelSpec,
    links: (LinkSpec, LinkSpec),
    support: TriggeringSupport,
    d: usize,
    resolution: usize,
    seed: u64,
) -> Result<ParameterF> {
    let mu_prior = FieldPrior::new(
        mu_kernel,
        Grid::background(d, resolution),
        FieldDomain::Background,
        links.0,
    )?;
    let g_prior = FieldPrior::new(
        g_kernel,
        Grid::trigger(support.a(), support.b(), d, resolution),
        FieldDomain::Trigger,
        links.1,
    )?;
    prior_draw_with(&mu_prior, &g_prior, support, seed)
}

/// As [`prior_draw`] but reusing existing factored priors.
pub fn prior_draw_with(
    mu_prior: &FieldPrior,
    g_prior: &FieldPrior,
    support: TriggeringSupport,
    seed: u64,
) -> Result<ParameterF> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(0);
    let z_mu = standard_normal_vector(&mut rng, mu_prior.dim());
    let mu = mu_prior.field_from_latent(&z_mu)?;
    for attempt in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(1 + attempt);
        let z_g = standard_normal_vector(&mut rng, g_prior.dim());
        let g = g_prior.field_from_latent(&z_g)?;
        if branching_ratio(&g) < 1.0 {
            return ParameterF::new(mu, g, support);
        }
    }
    Err(Error::Config(
        "prior draws persistently have branching ratio >= 1; \
         use a smaller trigger amplitude or a link ceiling"
            .into(),
    ))
}
