//! Exact log-likelihood of repeated Hawkes observations and its gradient in
//! whitened latent coordinates, plus the reparameterized ELBO estimator.
//!
//! The workspace precomputes everything that depends on the data and the
//! grids but not on the field values: sparse interpolation rows for each
//! event's intensity, and dense compensator weights (the `||mu||_1`
//! quadrature and the accumulated clipped trigger-box weights of every
//! event). Both the event intensities and the compensator are then linear in
//! the node values, so one likelihood evaluation is a handful of dot
//! products and the gradient is exact.

use crate::error::{Error, Result};
use crate::gp::{standard_normal_vector, FieldPrior, LatentField};
use crate::grid::Grid;
use crate::link::{link_apply, link_derivative};
use crate::model::{Dataset, ParameterF, TriggeringSupport};
use nalgebra::DVector;
use rand_chacha::ChaCha8Rng;

/// Sparse interpolation row of one event.
struct EventTerm {
    seq: usize,
    index: usize,
    mu_idx: Vec<u32>,
    mu_w: Vec<f64>,
    g_idx: Vec<u32>,
    g_w: Vec<f64>,
    neighbors: Vec<usize>,
}

/// Precomputed evaluation plan for one dataset under one pair of grids.
pub struct LikelihoodWorkspace {
    dataset: Dataset,
    support: TriggeringSupport,
    mu_grid: Grid,
    g_grid: Grid,
    events: Vec<EventTerm>,
    mu_quad: Vec<f64>,
    g_comp: Vec<f64>,
}

impl LikelihoodWorkspace {
    /// Build with both grids at `resolution` cells per axis.
    pub fn new(dataset: Dataset, support: TriggeringSupport, resolution: usize) -> Result<Self> {
        let mu_grid = Grid::background(dataset.d(), resolution);
        let g_grid = Grid::trigger(support.a(), support.b(), dataset.d(), resolution);
        Self::with_grids(dataset, support, mu_grid, g_grid)
    }

    pub fn with_grids(
        dataset: Dataset,
        support: TriggeringSupport,
        mu_grid: Grid,
        g_grid: Grid,
    ) -> Result<Self> {
        if mu_grid.dim() != dataset.d() + 1 || g_grid.dim() != dataset.d() + 1 {
            return Err(Error::DimensionMismatch {
                expected: dataset.d() + 1,
                got: mu_grid.dim(),
            });
        }
        let a = support.a();
        let b = support.b();
        let d = dataset.d();
        let mut events = Vec::with_capacity(dataset.total_events());
        let mut g_comp = vec![0.0; g_grid.node_count()];
        let mut x = vec![0.0; d + 1];
        let mut shifted = vec![0.0; d + 1];
        for (si, seq) in dataset.sequences().iter().enumerate() {
            let pts = seq.points();
            for (j, p) in pts.iter().enumerate() {
                x[0] = p.t;
                x[1..].copy_from_slice(&p.s);
                let mu_pairs = mu_grid.interp_weights(&x);
                let mut term = EventTerm {
                    seq: si,
                    index: j,
                    mu_idx: mu_pairs.iter().map(|&(i, _)| i as u32).collect(),
                    mu_w: mu_pairs.iter().map(|&(_, w)| w).collect(),
                    g_idx: Vec::new(),
                    g_w: Vec::new(),
                    neighbors: Vec::new(),
                };
                // Influence window: earlier events within lag a and box radius b.
                for k in (0..j).rev() {
                    let dt = p.t - pts[k].t;
                    if dt > a {
                        break;
                    }
                    if p.s.iter().zip(&pts[k].s).any(|(x1, x0)| (x1 - x0).abs() > b) {
                        continue;
                    }
                    term.neighbors.push(k);
                    shifted[0] = dt;
                    for (m, (x1, x0)) in p.s.iter().zip(&pts[k].s).enumerate() {
                        shifted[m + 1] = x1 - x0;
                    }
                    for (i, w) in g_grid.interp_weights(&shifted) {
                        term.g_idx.push(i as u32);
                        term.g_w.push(w);
                    }
                }
                term.neighbors.reverse();
                events.push(term);
                // Compensator contribution: clipped shifted support.
                let mut lo = Vec::with_capacity(d + 1);
                let mut hi = Vec::with_capacity(d + 1);
                lo.push(0.0);
                hi.push(a.min(1.0 - p.t));
                for &sj in &p.s {
                    lo.push((-b).max(-sj));
                    hi.push(b.min(1.0 - sj));
                }
                g_grid.accumulate_box_weights(&lo, &hi, &mut g_comp);
            }
        }
        let mu_quad = mu_grid.quadrature_weights();
        Ok(LikelihoodWorkspace {
            dataset,
            support,
            mu_grid,
            g_grid,
            events,
            mu_quad,
            g_comp,
        })
    }

    pub fn dataset(&self) -> &Dataset {
        &self.dataset
    }

    pub fn support(&self) -> TriggeringSupport {
        self.support
    }

    pub fn mu_grid(&self) -> &Grid {
        &self.mu_grid
    }

    pub fn g_grid(&self) -> &Grid {
        &self.g_grid
    }

    /// Influencing earlier events per event of one sequence (for validation).
    pub fn neighbor_lists(&self, seq: usize) -> Vec<Vec<usize>> {
        self.events
            .iter()
            .filter(|e| e.seq == seq)
            .map(|e| e.neighbors.clone())
            .collect()
    }

    /// Log-likelihood from raw node values. `clamp` floors event intensities
    /// at 1e-300 instead of erroring; it is used only for trial points inside
    /// optimizers, never for reported states.
    pub(crate) fn loglik_values(
        &self,
        mu: &[f64],
        g: &[f64],
        trigger_zero: bool,
        clamp: bool,
    ) -> Result<f64> {
        let mut total = 0.0;
        for ev in &self.events {
            let mut r = 0.0;
            for (i, w) in ev.mu_idx.iter().zip(&ev.mu_w) {
                r += w * mu[*i as usize];
            }
            if !trigger_zero {
                for (i, w) in ev.g_idx.iter().zip(&ev.g_w) {
                    r += w * g[*i as usize];
                }
            }
            if r <= 0.0 {
                if clamp {
                    r = 1e-300;
                } else {
                    return Err(Error::NonpositiveIntensity {
                        sequence: ev.seq,
                        event: ev.index,
                        value: r,
                    });
                }
            }
            total += r.ln();
        }
        let comp_mu: f64 = self.mu_quad.iter().zip(mu).map(|(w, v)| w * v).sum();
        total -= self.dataset.n() as f64 * comp_mu;
        if !trigger_zero {
            total -= self.g_comp.iter().zip(g).map(|(w, v)| w * v).sum::<f64>();
        }
        Ok(total)
    }

    /// Log-likelihood and its gradient with respect to the node values.
    pub(crate) fn loglik_grad_values(
        &self,
        mu: &[f64],
        g: &[f64],
        trigger_zero: bool,
    ) -> Result<(f64, Vec<f64>, Vec<f64>)> {
        let mut grad_mu = vec![0.0; mu.len()];
        let mut grad_g = vec![0.0; g.len()];
        let mut total = 0.0;
        for ev in &self.events {
            let mut r = 0.0;
            for (i, w) in ev.mu_idx.iter().zip(&ev.mu_w) {
                r += w * mu[*i as usize];
            }
            if !trigger_zero {
                for (i, w) in ev.g_idx.iter().zip(&ev.g_w) {
                    r += w * g[*i as usize];
                }
            }
            if r <= 0.0 {
                return Err(Error::NonpositiveIntensity {
                    sequence: ev.seq,
                    event: ev.index,
                    value: r,
                });
            }
            total += r.ln();
            let inv = 1.0 / r;
            for (i, w) in ev.mu_idx.iter().zip(&ev.mu_w) {
                grad_mu[*i as usize] += w * inv;
            }
            if !trigger_zero {
                for (i, w) in ev.g_idx.iter().zip(&ev.g_w) {
                    grad_g[*i as usize] += w * inv;
                }
            }
        }
        let n = self.dataset.n() as f64;
        let comp_mu: f64 = self.mu_quad.iter().zip(mu).map(|(w, v)| w * v).sum();
        total -= n * comp_mu;
        for (gm, w) in grad_mu.iter_mut().zip(&self.mu_quad) {
            *gm -= n * w;
        }
        if !trigger_zero {
            total -= self.g_comp.iter().zip(g).map(|(w, v)| w * v).sum::<f64>();
            for (gg, w) in grad_g.iter_mut().zip(&self.g_comp) {
                *gg -= w;
            }
        }
        Ok((total, grad_mu, grad_g))
    }
}

/// `sum_i [ sum_j log lambda^i(t_j, s_j) - int_S lambda^i ]`.
pub fn log_likelihood(f: &ParameterF, ws: &LikelihoodWorkspace) -> Result<f64> {
    if f.mu().grid() != ws.mu_grid() || f.g().grid() != ws.g_grid() {
        return Err(Error::InvalidParameter(
            "parameter grids do not match the workspace grids".into(),
        ));
    }
    ws.loglik_values(f.mu().values(), f.g().values(), false, false)
}

/// Whitened log-posterior `log L(link(L z)) - ||z_mu||^2/2 - ||z_g||^2/2`
/// and its exact gradient via the chain rule through interpolation weights,
/// link derivative, and Cholesky factor.
pub fn log_posterior_grad(
    z_mu: &LatentField,
    z_g: &LatentField,
    ws: &LikelihoodWorkspace,
) -> Result<(f64, DVector<f64>, DVector<f64>)> {
    let parts = whitened_grad(z_mu.prior(), z_g.prior(), z_mu.z(), z_g.z(), ws, false)?;
    Ok(parts)
}

pub(crate) fn whitened_grad(
    mu_prior: &FieldPrior,
    g_prior: &FieldPrior,
    z_mu: &DVector<f64>,
    z_g: &DVector<f64>,
    ws: &LikelihoodWorkspace,
    trigger_zero: bool,
) -> Result<(f64, DVector<f64>, DVector<f64>)> {
    if mu_prior.grid() != ws.mu_grid() || g_prior.grid() != ws.g_grid() {
        return Err(Error::InvalidParameter(
            "prior grids do not match the workspace grids".into(),
        ));
    }
    let u_mu = mu_prior.chol().multiply(z_mu);
    let u_g = g_prior.chol().multiply(z_g);
    let theta_mu: Vec<f64> = u_mu.iter().map(|&u| link_apply(mu_prior.link(), u)).collect();
    let theta_g: Vec<f64> = u_g.iter().map(|&u| link_apply(g_prior.link(), u)).collect();
    let (ll, gmu, gg) = ws.loglik_grad_values(&theta_mu, &theta_g, trigger_zero)?;
    let gu_mu = DVector::from_iterator(
        u_mu.len(),
        gmu.iter()
            .zip(u_mu.iter())
            .map(|(&g, &u)| g * link_derivative(mu_prior.link(), u)),
    );
    let gu_g = DVector::from_iterator(
        u_g.len(),
        gg.iter()
            .zip(u_g.iter())
            .map(|(&g, &u)| g * link_derivative(g_prior.link(), u)),
    );
    let grad_mu = mu_prior.chol().transpose_multiply(&gu_mu) - z_mu;
    let grad_g = if trigger_zero {
        DVector::zeros(z_g.len())
    } else {
        g_prior.chol().transpose_multiply(&gu_g) - z_g
    };
    let value = ll - 0.5 * (z_mu.dot(z_mu) + if trigger_zero { 0.0 } else { z_g.dot(z_g) });
    Ok((value, grad_mu, grad_g))
}

/// Mean-field Gaussian variational state over whitened coefficients.
#[derive(Debug, Clone)]
pub struct MeanFieldQ {
    pub mu_mean: DVector<f64>,
    pub mu_logstd: DVector<f64>,
    pub g_mean: DVector<f64>,
    pub g_logstd: DVector<f64>,
}

impl MeanFieldQ {
    /// `Q = prior`: zero means and zero log-standard-deviations.
    pub fn prior(dim_mu: usize, dim_g: usize) -> Self {
        MeanFieldQ {
            mu_mean: DVector::zeros(dim_mu),
            mu_logstd: DVector::zeros(dim_mu),
            g_mean: DVector::zeros(dim_g),
            g_logstd: DVector::zeros(dim_g),
        }
    }

    /// Closed-form part of the ELBO: `E_Q[log prior] - E_Q[log Q]`
    /// (Gaussian-vs-Gaussian, both diagonal in whitened coordinates).
    pub fn prior_minus_entropy(&self) -> f64 {
        let mut acc = 0.0;
        for (m, s) in [
            (&self.mu_mean, &self.mu_logstd),
            (&self.g_mean, &self.g_logstd),
        ] {
            for i in 0..m.len() {
                let var = (2.0 * s[i]).exp();
                acc += s[i] - 0.5 * (m[i] * m[i] + var) + 0.5;
            }
        }
        acc
    }
}

/// Reparameterized Monte-Carlo ELBO: the Gaussian entropy and cross-entropy
/// terms are closed-form; only `E_Q[log L]` is sampled. Event intensities are
/// clamped inside the sampler so the estimate is always finite.
pub fn elbo_estimate(
    q: &MeanFieldQ,
    mu_prior: &FieldPrior,
    g_prior: &FieldPrior,
    ws: &LikelihoodWorkspace,
    n_mc: usize,
    seed: u64,
) -> Result<f64> {
    if n_mc == 0 {
        return Err(Error::Config("n_mc must be >= 1".into()));
    }
    let mut rng = crate::sim::stream_rng(seed, 0);
    let mut acc = 0.0;
    for _ in 0..n_mc {
        acc += sample_loglik(q, mu_prior, g_prior, ws, &mut rng)?;
    }
    Ok(acc / n_mc as f64 + q.prior_minus_entropy())
}

fn sample_loglik(
    q: &MeanFieldQ,
    mu_prior: &FieldPrior,
    g_prior: &FieldPrior,
    ws: &LikelihoodWorkspace,
    rng: &mut ChaCha8Rng,
) -> Result<f64> {
    let eps_mu = standard_normal_vector(rng, q.mu_mean.len());
    let eps_g = standard_normal_vector(rng, q.g_mean.len());
    let z_mu = &q.mu_mean
        + DVector::from_iterator(
            eps_mu.len(),
            eps_mu.iter().zip(q.mu_logstd.iter()).map(|(&e, &s)| e * s.exp()),
        );
    let z_g = &q.g_mean
        + DVector::from_iterator(
            eps_g.len(),
            eps_g.iter().zip(q.g_logstd.iter()).map(|(&e, &s)| e * s.exp()),
        );
    let theta_mu = mu_prior.node_values(&z_mu);
    let theta_g = g_prior.node_values(&z_g);
    ws.loglik_values(&theta_mu, &theta_g, false, true)
}

/// One reparameterized gradient estimate of the ELBO with respect to the
/// variational means and log-standard-deviations.
pub(crate) struct ElboGrad {
    pub value: f64,
    pub d_mu_mean: DVector<f64>,
    pub d_mu_logstd: DVector<f64>,
    pub d_g_mean: DVector<f64>,
    pub d_g_logstd: DVector<f64>,
}

pub(crate) fn elbo_grad(
    q: &MeanFieldQ,
    mu_prior: &FieldPrior,
    g_prior: &FieldPrior,
    ws: &LikelihoodWorkspace,
    n_mc: usize,
    rng: &mut ChaCha8Rng,
    trigger_zero: bool,
) -> Result<ElboGrad> {
    let dm = q.mu_mean.len();
    let dg = q.g_mean.len();
    let mut d_mu_mean = DVector::zeros(dm);
    let mut d_mu_logstd = DVector::zeros(dm);
    let mut d_g_mean = DVector::zeros(dg);
    let mut d_g_logstd = DVector::zeros(dg);
    let mut value = 0.0;
    for _ in 0..n_mc {
        let eps_mu = standard_normal_vector(rng, dm);
        let eps_g = standard_normal_vector(rng, dg);
        let z_mu = &q.mu_mean
            + DVector::from_iterator(
                dm,
                eps_mu.iter().zip(q.mu_logstd.iter()).map(|(&e, &s)| e * s.exp()),
            );
        let z_g = &q.g_mean
            + DVector::from_iterator(
                dg,
                eps_g.iter().zip(q.g_logstd.iter()).map(|(&e, &s)| e * s.exp()),
            );
        // Data-term gradient in z, without the -z prior part (the prior and
        // entropy terms enter in closed form below).
        let u_mu = mu_prior.chol().multiply(&z_mu);
        let u_g = g_prior.chol().multiply(&z_g);
        let theta_mu: Vec<f64> = u_mu.iter().map(|&u| link_apply(mu_prior.link(), u)).collect();
        let theta_g: Vec<f64> = u_g.iter().map(|&u| link_apply(g_prior.link(), u)).collect();
        let (ll, gmu, gg) = ws.loglik_grad_values(&theta_mu, &theta_g, trigger_zero)?;
        value += ll;
        let gu_mu = DVector::from_iterator(
            dm,
            gmu.iter()
                .zip(u_mu.iter())
                .map(|(&g, &u)| g * link_derivative(mu_prior.link(), u)),
        );
        let gz_mu = mu_prior.chol().transpose_multiply(&gu_mu);
        for i in 0..dm {
            d_mu_mean[i] += gz_mu[i];
            d_mu_logstd[i] += gz_mu[i] * eps_mu[i] * q.mu_logstd[i].exp();
        }
        if !trigger_zero {
            let gu_g = DVector::from_iterator(
                dg,
                gg.iter()
                    .zip(u_g.iter())
                    .map(|(&g, &u)| g * link_derivative(g_prior.link(), u)),
            );
            let gz_g = g_prior.chol().transpose_multiply(&gu_g);
            for i in 0..dg {
                d_g_mean[i] += gz_g[i];
                d_g_logstd[i] += gz_g[i] * eps_g[i] * q.g_logstd[i].exp();
            }
        }
    }
    let scale = 1.0 / n_mc as f64;
    d_mu_mean *= scale;
    d_mu_logstd *= scale;
    d_g_mean *= scale;
    d_g_logstd *= scale;
    value *= scale;
    value += q.prior_minus_entropy();
    // Closed-form gradients of E_Q[log prior] - E_Q[log Q].
    for i in 0..dm {
        d_mu_mean[i] -= q.mu_mean[i];
        d_mu_logstd[i] += 1.0 - (2.0 * q.mu_logstd[i]).exp();
    }
    for i in 0..dg {
        if trigger_zero {
            break;
        }
        d_g_mean[i] -= q.g_mean[i];
        d_g_logstd[i] += 1.0 - (2.0 * q.g_logstd[i]).exp();
    }
    Ok(ElboGrad {
        value,
        d_mu_mean,
        d_mu_logstd,
        d_g_mean,
        d_g_logstd,
    })
}
