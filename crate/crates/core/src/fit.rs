//! Posterior computation in whitened coordinates: gradient-ascent MAP,
//! preconditioned Crank-Nicolson MCMC (prior-reversible, so acceptance uses
//! the data term only), stochastic-gradient variational inference, and the
//! posterior-contraction experiment driver.

use crate::distance;
use crate::error::{Error, Result};
use crate::gp::{standard_normal_vector, FieldPrior};
use crate::grid::{FieldDomain, GridField};
use crate::kernel::KernelSpec;
use crate::likelihood::{elbo_grad, whitened_grad, LikelihoodWorkspace, MeanFieldQ};
use crate::link::{link_apply, LinkSpec};
use crate::model::ParameterF;
use crate::sim::{simulate_branching, stream_rng, SimConfig, SimMethod};
use crate::stats;
use nalgebra::DVector;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::sync::Arc;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FitMethod {
    Map,
    Pcn,
    Vi,
}

/// Configuration shared by the three fit methods.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitConfig {
    pub method: FitMethod,
    pub iterations: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub pcn_beta: f64,
    pub adapt_beta: bool,
    /// Initial step for MAP line search; learning rate for VI.
    pub step_size: f64,
    /// Step-size schedule: `step / (1 + decay * iter)`.
    pub step_decay: f64,
    /// MAP terminates when the gradient norm falls below this.
    pub tolerance: f64,
    /// Monte-Carlo samples per ELBO gradient estimate.
    pub n_mc: usize,
    pub seed: u64,
    pub mu_kernel: KernelSpec,
    pub g_kernel: KernelSpec,
    pub mu_link: LinkSpec,
    pub g_link: LinkSpec,
    /// Pin the trigger component to exactly zero (background-only fit).
    pub fix_trigger_at_zero: bool,
}

impl FitConfig {
    pub fn new(method: FitMethod, mu_kernel: KernelSpec, g_kernel: KernelSpec) -> Self {
        FitConfig {
            method,
            iterations: 200,
            burn_in: 500,
            thin: 5,
            pcn_beta: 0.2,
            adapt_beta: true,
            step_size: 0.1,
            step_decay: 0.0,
            tolerance: 1e-4,
            n_mc: 8,
            seed: 0,
            mu_kernel,
            g_kernel,
            mu_link: LinkSpec::Softplus,
            g_link: LinkSpec::Softplus,
            fix_trigger_at_zero: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.pcn_beta > 0.0 && self.pcn_beta <= 1.0) {
            return Err(Error::Config(format!(
                "pcn_beta must lie in (0, 1], got {}",
                self.pcn_beta
            )));
        }
        if self.thin == 0 {
            return Err(Error::Config("thin must be >= 1".into()));
        }
        if self.n_mc == 0 {
            return Err(Error::Config("n_mc must be >= 1".into()));
        }
        if self.step_size <= 0.0 {
            return Err(Error::Config("step_size must be positive".into()));
        }
        self.mu_kernel.validate()?;
        self.g_kernel.validate()?;
        self.mu_link.validate()?;
        self.g_link.validate()?;
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TraceRow {
    pub iter: usize,
    pub objective: f64,
    pub acceptance: f64,
}

/// Fit result: point estimate, per-node credible bands where the method
/// provides them, optional errors against a known truth, and the trace.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PosteriorSummary {
    pub method: FitMethod,
    pub point: ParameterF,
    pub mu_lower: Option<Vec<f64>>,
    pub mu_upper: Option<Vec<f64>>,
    pub g_lower: Option<Vec<f64>>,
    pub g_upper: Option<Vec<f64>>,
    pub mu_mean: Option<Vec<f64>>,
    pub g_mean: Option<Vec<f64>>,
    pub acceptance_rate: Option<f64>,
    pub final_beta: Option<f64>,
    pub supercritical_fraction: Option<f64>,
    pub final_elbo: Option<f64>,
    pub l1_error: Option<f64>,
    pub ds_error: Option<f64>,
    pub trace: Vec<TraceRow>,
    pub warnings: Vec<String>,
}

impl PosteriorSummary {
    fn check_bands(&self) -> Result<()> {
        for (lower, point, upper) in [
            (&self.mu_lower, self.point.mu().values(), &self.mu_upper),
            (&self.g_lower, self.point.g().values(), &self.g_upper),
        ] {
            if let (Some(lo), Some(hi)) = (lower, upper) {
                for i in 0..point.len() {
                    if !(lo[i] <= point[i] + 1e-12 && point[i] <= hi[i] + 1e-12) {
                        return Err(Error::InvalidParameter(format!(
                            "credible band violated at node {i}: {} <= {} <= {}",
                            lo[i], point[i], hi[i]
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    /// Record distances to a known truth.
    pub fn attach_errors(&mut self, truth: &ParameterF, data: &crate::model::Dataset) -> Result<()> {
        self.l1_error = Some(distance::l1_distance(&self.point, truth)?);
        self.ds_error = Some(distance::stochastic_distance(&self.point, truth, data)?);
        Ok(())
    }
}

fn build_priors(
    ws: &LikelihoodWorkspace,
    cfg: &FitConfig,
) -> Result<(Arc<FieldPrior>, Arc<FieldPrior>)> {
    let mu = FieldPrior::new(
        &cfg.mu_kernel,
        ws.mu_grid().clone(),
        FieldDomain::Background,
        cfg.mu_link,
    )?;
    let g = FieldPrior::new(
        &cfg.g_kernel,
        ws.g_grid().clone(),
        FieldDomain::Trigger,
        cfg.g_link,
    )?;
    Ok((Arc::new(mu), Arc::new(g)))
}

fn parameter_from_values(
    ws: &LikelihoodWorkspace,
    mu_values: Vec<f64>,
    g_values: Vec<f64>,
) -> Result<ParameterF> {
    let mu = GridField::new(ws.mu_grid().clone(), mu_values, FieldDomain::Background)?;
    let g = GridField::new(ws.g_grid().clone(), g_values, FieldDomain::Trigger)?;
    ParameterF::new(mu, g, ws.support())
}

/// Posterior mode by gradient ascent with backtracking line search.
/// The objective trace is nondecreasing by construction; trial points use
/// clamped intensities, accepted states never do.
pub fn fit_map(ws: &LikelihoodWorkspace, cfg: &FitConfig) -> Result<PosteriorSummary> {
    cfg.validate()?;
    let (mu_prior, g_prior) = build_priors(ws, cfg)?;
    let tz = cfg.fix_trigger_at_zero;
    let mut z_mu = DVector::zeros(mu_prior.dim());
    let mut z_g = DVector::zeros(g_prior.dim());
    let (mut value, mut grad_mu, mut grad_g) =
        whitened_grad(&mu_prior, &g_prior, &z_mu, &z_g, ws, tz)?;
    if !value.is_finite() {
        return Err(Error::NonFiniteObjective { iteration: 0 });
    }
    let mut trace = vec![TraceRow { iter: 0, objective: value, acceptance: 1.0 }];
    for iter in 1..=cfg.iterations {
        let g2 = grad_mu.dot(&grad_mu) + grad_g.dot(&grad_g);
        if g2.sqrt() < cfg.tolerance {
            break;
        }
        let mut alpha = cfg.step_size / (1.0 + cfg.step_decay * iter as f64);
        let mut moved = false;
        for _ in 0..60 {
            let zt_mu = &z_mu + alpha * &grad_mu;
            let zt_g = &z_g + alpha * &grad_g;
            let trial = whitened_value_clamped(&mu_prior, &g_prior, &zt_mu, &zt_g, ws, tz)?;
            if trial >= value + 1e-4 * alpha * g2 {
                z_mu = zt_mu;
                z_g = zt_g;
                moved = true;
                break;
            }
            alpha *= 0.5;
        }
        if !moved {
            break;
        }
        let refreshed = whitened_grad(&mu_prior, &g_prior, &z_mu, &z_g, ws, tz)?;
        value = refreshed.0;
        grad_mu = refreshed.1;
        grad_g = refreshed.2;
        if !value.is_finite() {
            return Err(Error::NonFiniteObjective { iteration: iter });
        }
        trace.push(TraceRow { iter, objective: value, acceptance: 1.0 });
    }
    let mu_values = mu_prior.node_values(&z_mu);
    let g_values = if tz {
        vec![0.0; g_prior.dim()]
    } else {
        g_prior.node_values(&z_g)
    };
    let point = parameter_from_values(ws, mu_values, g_values)?;
    Ok(PosteriorSummary {
        method: FitMethod::Map,
        point,
        mu_lower: None,
        mu_upper: None,
        g_lower: None,
        g_upper: None,
        mu_mean: None,
        g_mean: None,
        acceptance_rate: None,
        final_beta: None,
        supercritical_fraction: None,
        final_elbo: None,
        l1_error: None,
        ds_error: None,
        trace,
        warnings: Vec::new(),
    })
}

fn whitened_value_clamped(
    mu_prior: &FieldPrior,
    g_prior: &FieldPrior,
    z_mu: &DVector<f64>,
    z_g: &DVector<f64>,
    ws: &LikelihoodWorkspace,
    trigger_zero: bool,
) -> Result<f64> {
    let theta_mu = mu_prior.node_values(z_mu);
    let theta_g = g_prior.node_values(z_g);
    let ll = ws.loglik_values(&theta_mu, &theta_g, trigger_zero, true)?;
    Ok(ll - 0.5 * (z_mu.dot(z_mu) + if trigger_zero { 0.0 } else { z_g.dot(z_g) }))
}

pub(crate) struct PcnRun {
    pub draws_mu: Vec<Vec<f64>>,
    pub draws_g: Vec<Vec<f64>>,
    pub draws_z: Option<Vec<DVector<f64>>>,
    pub acceptance_rate: f64,
    pub final_beta: f64,
    pub trace: Vec<TraceRow>,
}

/// Core pCN chain over the concatenated whitened state. The proposal
/// `z' = sqrt(1 - beta^2) z + beta xi` preserves the N(0, I) prior, so the
/// prior term cancels exactly and acceptance uses the data term only.
pub(crate) fn run_pcn(
    mu_prior: &FieldPrior,
    g_prior: &FieldPrior,
    data_term: &dyn Fn(&[f64], &[f64]) -> f64,
    trigger_zero: bool,
    cfg: &FitConfig,
    keep_z: bool,
) -> PcnRun {
    let dim_mu = mu_prior.dim();
    let dim_g = if trigger_zero { 0 } else { g_prior.dim() };
    let dim = dim_mu + dim_g;
    let mut rng = stream_rng(cfg.seed, 0);
    let mut beta = cfg.pcn_beta;

    let values_of = |z: &DVector<f64>| -> (Vec<f64>, Vec<f64>) {
        let z_mu = DVector::from_iterator(dim_mu, z.iter().take(dim_mu).cloned());
        let theta_mu = mu_prior.node_values(&z_mu);
        let theta_g = if trigger_zero {
            vec![0.0; g_prior.dim()]
        } else {
            let z_g = DVector::from_iterator(dim_g, z.iter().skip(dim_mu).cloned());
            g_prior.node_values(&z_g)
        };
        (theta_mu, theta_g)
    };

    let mut z = DVector::zeros(dim);
    let (theta_mu, theta_g) = values_of(&z);
    let mut ll = data_term(&theta_mu, &theta_g);
    let mut cur = (theta_mu, theta_g);

    let total = cfg.burn_in + cfg.iterations;
    let mut accepted_total = 0usize;
    let mut accepted_window = 0usize;
    let mut window = 0usize;
    let mut draws_mu = Vec::new();
    let mut draws_g = Vec::new();
    let mut draws_z = if keep_z { Some(Vec::new()) } else { None };
    let mut trace = Vec::with_capacity(total);
    for iter in 0..total {
        let xi = standard_normal_vector(&mut rng, dim);
        let z_prop = (1.0 - beta * beta).sqrt() * &z + beta * xi;
        let (tm, tg) = values_of(&z_prop);
        let ll_prop = data_term(&tm, &tg);
        let log_alpha = ll_prop - ll;
        if log_alpha >= 0.0 || rng.gen::<f64>() < log_alpha.exp() {
            z = z_prop;
            ll = ll_prop;
            cur = (tm, tg);
            accepted_total += 1;
            accepted_window += 1;
        }
        window += 1;
        // Robbins-Monro adaptation toward 23% acceptance during burn-in.
        if cfg.adapt_beta && iter < cfg.burn_in && window == 50 {
            let rate = accepted_window as f64 / window as f64;
            beta = (beta * (0.8 * (rate - 0.23)).exp()).clamp(1e-6, 1.0);
            accepted_window = 0;
            window = 0;
        }
        if iter >= cfg.burn_in && (iter - cfg.burn_in) % cfg.thin == 0 {
            draws_mu.push(cur.0.clone());
            draws_g.push(cur.1.clone());
            if let Some(zs) = draws_z.as_mut() {
                zs.push(z.clone());
            }
        }
        trace.push(TraceRow {
            iter,
            objective: ll,
            acceptance: accepted_total as f64 / (iter + 1) as f64,
        });
    }
    PcnRun {
        draws_mu,
        draws_g,
        draws_z,
        acceptance_rate: accepted_total as f64 / total.max(1) as f64,
        final_beta: beta,
        trace,
    }
}

fn node_quantiles(draws: &[Vec<f64>], q_lo: f64, q_hi: f64) -> (Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>) {
    let nodes = draws[0].len();
    let mut lower = vec![0.0; nodes];
    let mut median = vec![0.0; nodes];
    let mut upper = vec![0.0; nodes];
    let mut mean = vec![0.0; nodes];
    let mut column = vec![0.0; draws.len()];
    for i in 0..nodes {
        for (k, d) in draws.iter().enumerate() {
            column[k] = d[i];
        }
        mean[i] = stats::mean(&column);
        column.sort_by(|a, b| a.partial_cmp(b).unwrap());
        lower[i] = stats::quantile_sorted(&column, q_lo);
        median[i] = stats::quantile_sorted(&column, 0.5);
        upper[i] = stats::quantile_sorted(&column, q_hi);
    }
    (lower, median, upper, mean)
}

/// Function-space random-walk MCMC targeting the posterior. Returns the
/// pointwise posterior median as the point estimate, with 5-95% bands and
/// node means across retained draws.
pub fn fit_pcn(ws: &LikelihoodWorkspace, cfg: &FitConfig) -> Result<PosteriorSummary> {
    cfg.validate()?;
    if cfg.iterations == 0 {
        return Err(Error::Config("pCN requires iterations >= 1".into()));
    }
    let (mu_prior, g_prior) = build_priors(ws, cfg)?;
    let tz = cfg.fix_trigger_at_zero;
    let data_term = |tm: &[f64], tg: &[f64]| ws.loglik_values(tm, tg, tz, true).unwrap_or(f64::NEG_INFINITY);
    let run = run_pcn(&mu_prior, &g_prior, &data_term, tz, cfg, false);

    let mut warnings = Vec::new();
    if run.acceptance_rate < 0.01 {
        warnings.push(format!(
            "acceptance rate {:.4} below 1% after adaptation window",
            run.acceptance_rate
        ));
    }
    let g_quad = ws.g_grid().quadrature_weights();
    let supercritical = run
        .draws_g
        .iter()
        .filter(|g| g_quad.iter().zip(g.iter()).map(|(w, v)| w * v).sum::<f64>() >= 1.0)
        .count() as f64
        / run.draws_g.len().max(1) as f64;

    let (mu_lo, mu_med, mu_hi, mu_mean) = node_quantiles(&run.draws_mu, 0.05, 0.95);
    let (g_lo, g_med, g_hi, g_mean) = node_quantiles(&run.draws_g, 0.05, 0.95);
    let point = parameter_from_values(ws, mu_med, g_med)?;
    let summary = PosteriorSummary {
        method: FitMethod::Pcn,
        point,
        mu_lower: Some(mu_lo),
        mu_upper: Some(mu_hi),
        g_lower: Some(g_lo),
        g_upper: Some(g_hi),
        mu_mean: Some(mu_mean),
        g_mean: Some(g_mean),
        acceptance_rate: Some(run.acceptance_rate),
        final_beta: Some(run.final_beta),
        supercritical_fraction: Some(supercritical),
        final_elbo: None,
        l1_error: None,
        ds_error: None,
        trace: run.trace,
        warnings,
    };
    summary.check_bands()?;
    Ok(summary)
}

struct Adam {
    m: DVector<f64>,
    v: DVector<f64>,
    t: usize,
}

impl Adam {
    fn new(dim: usize) -> Self {
        Adam { m: DVector::zeros(dim), v: DVector::zeros(dim), t: 0 }
    }

    /// Ascent step.
    fn step(&mut self, params: &mut DVector<f64>, grad: &DVector<f64>, lr: f64) {
        const B1: f64 = 0.9;
        const B2: f64 = 0.999;
        const EPS: f64 = 1e-8;
        self.t += 1;
        for i in 0..params.len() {
            self.m[i] = B1 * self.m[i] + (1.0 - B1) * grad[i];
            self.v[i] = B2 * self.v[i] + (1.0 - B2) * grad[i] * grad[i];
            let mh = self.m[i] / (1.0 - B1.powi(self.t as i32));
            let vh = self.v[i] / (1.0 - B2.powi(self.t as i32));
            params[i] += lr * mh / (vh.sqrt() + EPS);
        }
    }
}

/// Variational fit: stochastic gradient ascent on the reparameterized ELBO
/// with a mean-field Gaussian over whitened coefficients. Bands come from
/// the Gaussian quantiles of the latent field pushed through the link.
pub fn fit_vi(ws: &LikelihoodWorkspace, cfg: &FitConfig) -> Result<PosteriorSummary> {
    cfg.validate()?;
    let (mu_prior, g_prior) = build_priors(ws, cfg)?;
    let tz = cfg.fix_trigger_at_zero;
    let dm = mu_prior.dim();
    let dg = g_prior.dim();
    let mut q = MeanFieldQ {
        mu_mean: DVector::zeros(dm),
        mu_logstd: DVector::from_element(dm, (0.1f64).ln()),
        g_mean: DVector::zeros(dg),
        g_logstd: DVector::from_element(dg, (0.1f64).ln()),
    };
    let mut rng = stream_rng(cfg.seed, 0);
    let mut opt_mm = Adam::new(dm);
    let mut opt_ms = Adam::new(dm);
    let mut opt_gm = Adam::new(dg);
    let mut opt_gs = Adam::new(dg);
    let mut trace = Vec::with_capacity(cfg.iterations);
    let mut last_elbo = f64::NAN;
    for iter in 0..cfg.iterations {
        let est = elbo_grad(&q, &mu_prior, &g_prior, ws, cfg.n_mc, &mut rng, tz)?;
        if !est.value.is_finite() {
            return Err(Error::NonFiniteObjective { iteration: iter });
        }
        let lr = cfg.step_size / (1.0 + cfg.step_decay * iter as f64);
        opt_mm.step(&mut q.mu_mean, &est.d_mu_mean, lr);
        opt_ms.step(&mut q.mu_logstd, &est.d_mu_logstd, lr);
        if !tz {
            opt_gm.step(&mut q.g_mean, &est.d_g_mean, lr);
            opt_gs.step(&mut q.g_logstd, &est.d_g_logstd, lr);
        }
        last_elbo = est.value;
        trace.push(TraceRow { iter, objective: est.value, acceptance: 1.0 });
    }

    // Point estimate and bands from the Gaussian pushforward of each node.
    let z95 = 1.6448536269514722;
    let mut fields = Vec::new();
    for (prior, mean, logstd, zero) in [
        (&mu_prior, &q.mu_mean, &q.mu_logstd, false),
        (&g_prior, &q.g_mean, &q.g_logstd, tz),
    ] {
        let n = prior.dim();
        if zero {
            fields.push((vec![0.0; n], vec![0.0; n], vec![0.0; n]));
            continue;
        }
        let center = prior.chol().multiply(mean);
        let sd = DVector::from_iterator(n, logstd.iter().map(|s| s.exp()));
        let mut lo = vec![0.0; n];
        let mut mid = vec![0.0; n];
        let mut hi = vec![0.0; n];
        for i in 0..n {
            let spread = prior.chol().row_weighted_norm(i, &sd);
            lo[i] = link_apply(prior.link(), center[i] - z95 * spread);
            mid[i] = link_apply(prior.link(), center[i]);
            hi[i] = link_apply(prior.link(), center[i] + z95 * spread);
        }
        fields.push((lo, mid, hi));
    }
    let (g_lo, g_mid, g_hi) = fields.pop().unwrap();
    let (mu_lo, mu_mid, mu_hi) = fields.pop().unwrap();
    let point = parameter_from_values(ws, mu_mid, g_mid)?;
    let summary = PosteriorSummary {
        method: FitMethod::Vi,
        point,
        mu_lower: Some(mu_lo),
        mu_upper: Some(mu_hi),
        g_lower: Some(g_lo),
        g_upper: Some(g_hi),
        mu_mean: None,
        g_mean: None,
        acceptance_rate: None,
        final_beta: None,
        supercritical_fraction: None,
        final_elbo: if last_elbo.is_nan() { None } else { Some(last_elbo) },
        l1_error: None,
        ds_error: None,
        trace,
        warnings: Vec::new(),
    };
    summary.check_bands()?;
    Ok(summary)
}

/// Dispatch on `cfg.method`.
pub fn fit(ws: &LikelihoodWorkspace, cfg: &FitConfig) -> Result<PosteriorSummary> {
    match cfg.method {
        FitMethod::Map => fit_map(ws, cfg),
        FitMethod::Pcn => fit_pcn(ws, cfg),
        FitMethod::Vi => fit_vi(ws, cfg),
    }
}

/// Contraction-rate exponent `tau / (2 tau + d + 1)` for a Matérn prior of
/// smoothness `tau` in spatial dimension `d`.
pub fn rate_exponent(tau: f64, d: usize) -> f64 {
    tau / (2.0 * tau + d as f64 + 1.0)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ContractionRow {
    pub n: usize,
    pub median_l1: f64,
    pub q25: f64,
    pub q75: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ContractionCurve {
    pub rows: Vec<ContractionRow>,
    pub slope: f64,
}

/// For each `n`: simulate `n` sequences from the truth, fit by pCN, and
/// record quartiles of the posterior draws' L1 distance to the truth, plus
/// the fitted log-log slope of the medians.
pub fn posterior_l1_curve(
    truth: &ParameterF,
    ns: &[usize],
    base_cfg: &FitConfig,
    seed: u64,
) -> Result<ContractionCurve> {
    if ns.len() < 3 || ns.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Config(
            "contraction requires at least 3 strictly increasing values of n".into(),
        ));
    }
    base_cfg.validate()?;
    let mut rows = Vec::with_capacity(ns.len());
    for (i, &n) in ns.iter().enumerate() {
        let sim_cfg = SimConfig::new(truth.clone(), n, seed.wrapping_add(i as u64), SimMethod::Branching)?;
        let data = simulate_branching(&sim_cfg)?;
        let ws = LikelihoodWorkspace::with_grids(
            data,
            truth.support(),
            truth.mu().grid().clone(),
            truth.g().grid().clone(),
        )?;
        let mut cfg = base_cfg.clone();
        cfg.seed = seed.wrapping_add(1000 + i as u64);
        let (mu_prior, g_prior) = build_priors(&ws, &cfg)?;
        let data_term =
            |tm: &[f64], tg: &[f64]| ws.loglik_values(tm, tg, false, true).unwrap_or(f64::NEG_INFINITY);
        let run = run_pcn(&mu_prior, &g_prior, &data_term, false, &cfg, false);
        let mut l1s: Vec<f64> = run
            .draws_mu
            .iter()
            .zip(&run.draws_g)
            .map(|(mv, gv)| {
                let mu = GridField::new(ws.mu_grid().clone(), mv.clone(), FieldDomain::Background)?;
                let g = GridField::new(ws.g_grid().clone(), gv.clone(), FieldDomain::Trigger)?;
                distance::l1_distance_fields(&mu, &g, truth.mu(), truth.g(), 2)
            })
            .collect::<Result<_>>()?;
        l1s.sort_by(|a, b| a.partial_cmp(b).unwrap());
        rows.push(ContractionRow {
            n,
            median_l1: stats::quantile_sorted(&l1s, 0.5),
            q25: stats::quantile_sorted(&l1s, 0.25),
            q75: stats::quantile_sorted(&l1s, 0.75),
        });
    }
    let medians: Vec<f64> = rows.iter().map(|r| r.median_l1).collect();
    let slope = stats::loglog_slope(ns, &medians);
    Ok(ContractionCurve { rows, slope })
}
