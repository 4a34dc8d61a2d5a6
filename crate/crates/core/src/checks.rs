//! Monte-Carlo validation harness for the quantitative concentration
//! machinery: the high-probability count event, the KL bound with its kappa
//! constant, the two Bernstein inequalities, and identifiability.
//!
//! Every report stores the numbers its verdict is derived from, so the
//! verdict is recomputable from the report alone.

use crate::error::{Error, Result};
use crate::grid::GridField;
use crate::likelihood::{log_likelihood, LikelihoodWorkspace};
use crate::model::{branching_ratio, Dataset, ParameterF};
use crate::sim::{simulate_branching, stream_rng, SimConfig, SimMethod};
use crate::stats;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Splitmix-style seed derivation for independent replicate streams.
pub fn derive_seed(seed: u64, tag: u64) -> u64 {
    let mut z = seed ^ tag.wrapping_mul(0x9E3779B97F4A7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    Pass,
    Fail,
}

/// How a row's empirical value is compared against its bound.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BoundKind {
    /// `empirical <= bound + 3 se`.
    UpperTail,
    /// `empirical >= bound - 3 se`.
    LowerFreq,
    /// `empirical == bound` exactly.
    ExactZero,
    /// `empirical > bound + 3 se`.
    PositiveBeyondSe,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckRow {
    pub label: String,
    pub x: f64,
    pub empirical: f64,
    pub se: f64,
    pub bound: f64,
    pub kind: BoundKind,
}

impl CheckRow {
    pub fn satisfied(&self) -> bool {
        match self.kind {
            BoundKind::UpperTail => self.empirical <= self.bound + 3.0 * self.se,
            BoundKind::LowerFreq => self.empirical >= self.bound - 3.0 * self.se,
            BoundKind::ExactZero => self.empirical == self.bound,
            BoundKind::PositiveBeyondSe => self.empirical > self.bound + 3.0 * self.se,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckReport {
    pub name: String,
    pub settings: serde_json::Value,
    pub replicates: usize,
    pub rows: Vec<CheckRow>,
    pub verdict: Verdict,
}

impl CheckReport {
    fn finalized(name: &str, settings: serde_json::Value, replicates: usize, rows: Vec<CheckRow>) -> Self {
        let mut report = CheckReport {
            name: name.into(),
            settings,
            replicates,
            rows,
            verdict: Verdict::Pass,
        };
        report.verdict = report.recompute_verdict();
        report
    }

    /// Re-derive the verdict from the stored rows alone.
    pub fn recompute_verdict(&self) -> Verdict {
        if self.rows.iter().all(CheckRow::satisfied) {
            Verdict::Pass
        } else {
            Verdict::Fail
        }
    }

    /// Flat CSV rows for plotting: one line per `(check, label, x)`.
    pub fn write_csv<W: std::io::Write>(&self, mut w: W, header: bool) -> Result<()> {
        if header {
            writeln!(w, "check,label,x,empirical,se,bound,kind,satisfied")?;
        }
        for r in &self.rows {
            writeln!(
                w,
                "{},{},{},{},{},{},{:?},{}",
                self.name,
                r.label,
                r.x,
                r.empirical,
                r.se,
                r.bound,
                r.kind,
                r.satisfied()
            )?;
        }
        Ok(())
    }
}

/// Inputs of the kappa constant.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct KappaInputs {
    pub mu_lower: f64,
    pub mu_upper: f64,
    pub g0_l1: f64,
    pub lambda02: f64,
}

impl KappaInputs {
    pub fn validate(&self) -> Result<()> {
        if !(self.mu_lower > 0.0 && self.mu_lower <= self.mu_upper) {
            return Err(Error::Config(format!(
                "kappa requires 0 < mu_lower <= mu_upper, got ({}, {})",
                self.mu_lower, self.mu_upper
            )));
        }
        if self.g0_l1 >= 1.0 || self.g0_l1 < 0.0 {
            return Err(Error::Config(format!(
                "kappa requires branching ratio in [0, 1), got {}",
                self.g0_l1
            )));
        }
        if self.lambda02 <= 0.0 {
            return Err(Error::Config(format!(
                "kappa requires a positive second-moment integral, got {}",
                self.lambda02
            )));
        }
        Ok(())
    }
}

/// `kappa = (4 log 2 / mu_lower) * (2 + 4 (mu_upper / (1 - ||g0||_1) + Lambda_{0,2}))`.
pub fn kappa(inputs: &KappaInputs) -> Result<f64> {
    inputs.validate()?;
    Ok(4.0 * 2.0f64.ln() / inputs.mu_lower
        * (2.0 + 4.0 * (inputs.mu_upper / (1.0 - inputs.g0_l1) + inputs.lambda02)))
}

/// Monte-Carlo estimate of `E_0[int (lambda^1)^2]` over simulated sequences.
pub fn estimate_lambda02(f0: &ParameterF, sequences: usize, seed: u64) -> Result<f64> {
    let cfg = SimConfig::new(f0.clone(), sequences, seed, SimMethod::Branching)?;
    let data = simulate_branching(&cfg)?;
    let grid = f0.mu().grid().refined(2);
    let nodes = grid.node_coords();
    let weights = grid.quadrature_weights();
    let a = f0.support().a();
    let d = f0.d();
    let totals: Vec<f64> = data
        .sequences()
        .par_iter()
        .map(|seq| {
            let mut shifted = vec![0.0; d + 1];
            let mut acc = 0.0;
            for (x, w) in nodes.iter().zip(&weights) {
                let t = x[0];
                let mut lam = f0.mu().eval(x);
                for p in seq.points() {
                    if p.t >= t {
                        break;
                    }
                    if t - p.t > a {
                        continue;
                    }
                    shifted[0] = t - p.t;
                    for k in 0..d {
                        shifted[k + 1] = x[k + 1] - p.s[k];
                    }
                    lam += f0.g().eval(&shifted);
                }
                acc += w * lam * lam;
            }
            acc
        })
        .collect();
    Ok(stats::mean(&totals))
}

/// Empirical frequency of the high-probability count event across replicate
/// datasets. The existential constants are calibrated on a pilot run at the
/// smallest `n` (the smallest values that pass there), then the scaling is
/// verified at every `n`.
pub fn check_omega_event(
    f0: &ParameterF,
    n_values: &[usize],
    alpha: f64,
    replicates: usize,
    seed: u64,
) -> Result<CheckReport> {
    if replicates == 0 {
        return Err(Error::Config("omega check requires replicates >= 1".into()));
    }
    if n_values.is_empty() || n_values.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Config("n_values must be nonempty and strictly increasing".into()));
    }
    let rho = branching_ratio(f0.g());
    let m_lo = f0.mu().min_value() / (1.0 - rho);
    let m_hi = f0.mu().max_value() / (1.0 - rho);

    let stats_for = |n: usize, tag: u64| -> Result<Vec<(f64, usize)>> {
        (0..replicates)
            .into_par_iter()
            .map(|r| {
                let cfg = SimConfig::new(
                    f0.clone(),
                    n,
                    derive_seed(seed, tag.wrapping_mul(1 << 24).wrapping_add(r as u64)),
                    SimMethod::Branching,
                )?;
                let data = simulate_branching(&cfg)?;
                let avg = data.total_events() as f64 / n as f64;
                Ok((avg, data.max_sequence_count()))
            })
            .collect()
    };

    // Pilot at the smallest n, on its own stream space.
    let n0 = n_values[0];
    let log_n0 = (n0 as f64).ln();
    let pilot = stats_for(n0, u64::MAX)?;
    let mut devs: Vec<f64> = pilot
        .iter()
        .map(|&(avg, _)| (avg - m_hi).max(m_lo - avg).max(0.0) * (n0 as f64).sqrt() / log_n0)
        .collect();
    let mut caps: Vec<f64> = pilot.iter().map(|&(_, m)| m as f64 / log_n0).collect();
    devs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    caps.sort_by(|a, b| a.partial_cmp(b).unwrap());
    // Split the 3 n^-alpha failure budget between the two conditions.
    let budget = (1.5 * (n0 as f64).powf(-alpha)).min(0.5);
    let order = |v: &[f64]| {
        let k = (((1.0 - budget) * v.len() as f64).ceil() as usize).min(v.len() - 1);
        v[k] * (1.0 + 1e-9) + 1e-12
    };
    let delta0 = order(&devs);
    let c_alpha = order(&caps);

    let mut rows = Vec::new();
    for (ni, &n) in n_values.iter().enumerate() {
        let log_n = (n as f64).ln();
        let delta_n = delta0 * log_n / (n as f64).sqrt();
        let cap = c_alpha * log_n;
        let samples = stats_for(n, ni as u64 + 1)?;
        let mean_ok = samples
            .iter()
            .filter(|&&(avg, _)| avg >= m_lo - delta_n && avg <= m_hi + delta_n)
            .count();
        let joint_ok = samples
            .iter()
            .filter(|&&(avg, m)| avg >= m_lo - delta_n && avg <= m_hi + delta_n && (m as f64) <= cap)
            .count();
        let bound = 1.0 - 3.0 * (n as f64).powf(-alpha);
        for (label, ok) in [("mean_count", mean_ok), ("omega", joint_ok)] {
            let freq = ok as f64 / replicates as f64;
            rows.push(CheckRow {
                label: label.into(),
                x: n as f64,
                empirical: freq,
                se: stats::freq_se(freq, replicates),
                bound,
                kind: BoundKind::LowerFreq,
            });
        }
    }
    let settings = serde_json::json!({
        "alpha": alpha,
        "delta0": delta0,
        "c_alpha": c_alpha,
        "mean_lower": m_lo,
        "mean_upper": m_hi,
        "n_values": n_values,
    });
    Ok(CheckReport::finalized("omega_event", settings, replicates, rows))
}

/// Which boxes the Bernstein check counts events on.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum SubsetKind {
    FullDomain,
    FixedBox { lo: Vec<f64>, hi: Vec<f64> },
    /// Per-sequence random boxes with the given side lengths, uniformly
    /// placed inside `S`.
    RandomBox { sides: Vec<f64> },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SubsetsRule {
    pub n: usize,
    pub kind: SubsetKind,
}

/// Tail threshold `sqrt(2 v x) + x / 3`.
pub fn bernstein_threshold(v: f64, x: f64) -> f64 {
    (2.0 * v * x).sqrt() + x / 3.0
}

/// Compensator of one sequence over a box inside `S`: the background part
/// plus each event's shifted trigger integral, both exact for the grids.
fn compensator_on_box(f: &ParameterF, seq: &crate::model::EventSequence, lo: &[f64], hi: &[f64]) -> f64 {
    let mut total = f.mu().grid().box_integral(f.mu().values(), lo, hi);
    let d = f.d();
    let mut tlo = vec![0.0; d + 1];
    let mut thi = vec![0.0; d + 1];
    for p in seq.points() {
        tlo[0] = lo[0] - p.t;
        thi[0] = hi[0] - p.t;
        for k in 0..d {
            tlo[k + 1] = lo[k + 1] - p.s[k];
            thi[k + 1] = hi[k + 1] - p.s[k];
        }
        // box_integral clamps to the trigger domain, which is exactly the
        // intersection with the shifted support.
        total += f.g().grid().box_integral(f.g().values(), &tlo, &thi);
    }
    total
}

fn count_in_box(seq: &crate::model::EventSequence, lo: &[f64], hi: &[f64]) -> usize {
    seq.points()
        .iter()
        .filter(|p| {
            p.t >= lo[0]
                && p.t <= hi[0]
                && p.s.iter().enumerate().all(|(k, &x)| x >= lo[k + 1] && x <= hi[k + 1])
        })
        .count()
}

/// Empirical tails of `sum_i N^i(S_i) - Lambda^i(S_i)` against the
/// point-process Bernstein bound `e^{-x}` at threshold `sqrt(2vx) + x/3`,
/// plus the moment form with its `x^2`-rate bound, on the same thresholds.
pub fn check_bernstein(
    f: &ParameterF,
    rule: &SubsetsRule,
    v: f64,
    x_grid: &[f64],
    replicates: usize,
    seed: u64,
) -> Result<CheckReport> {
    if replicates == 0 || rule.n == 0 {
        return Err(Error::Config("bernstein check requires replicates >= 1 and n >= 1".into()));
    }
    if let SubsetKind::FixedBox { lo, hi } = &rule.kind {
        if lo.len() != f.d() + 1
            || hi.len() != f.d() + 1
            || lo.iter().zip(hi).any(|(l, h)| l >= h)
            || lo[0] < 0.0
            || hi[0] > 1.0
        {
            return Err(Error::Config("fixed box must be a nonempty box inside S".into()));
        }
    }
    let d = f.d();
    let full_lo = vec![0.0; d + 1];
    let full_hi = vec![1.0; d + 1];

    // Pilot for the moment-form constants: exponential-moment estimate of
    // the full-domain count at a fixed theta.
    let theta = 0.2;
    let pilot_cfg = SimConfig::new(f.clone(), 2000, derive_seed(seed, 0xBE57), SimMethod::Branching)?;
    let pilot = simulate_branching(&pilot_cfg)?;
    let c_hat = stats::mean(
        &pilot
            .sequences()
            .iter()
            .map(|s| (theta * s.len() as f64).exp())
            .collect::<Vec<_>>(),
    ) * 1.2;
    let sigma2 = 2.0 * c_hat / theta;
    let b_const = 1.0 / theta;

    let results: Result<Vec<(f64, f64)>> = (0..replicates)
        .into_par_iter()
        .map(|r| {
            let cfg = SimConfig::new(
                f.clone(),
                rule.n,
                derive_seed(seed, 1 + r as u64),
                SimMethod::Branching,
            )?;
            let data = simulate_branching(&cfg)?;
            let mut box_rng = stream_rng(derive_seed(seed, 0xB0C5), r as u64);
            let mut t_sum = 0.0;
            let mut lam_sum = 0.0;
            for seq in data.sequences() {
                let (lo, hi) = match &rule.kind {
                    SubsetKind::FullDomain => (full_lo.clone(), full_hi.clone()),
                    SubsetKind::FixedBox { lo, hi } => (lo.clone(), hi.clone()),
                    SubsetKind::RandomBox { sides } => {
                        let mut lo = Vec::with_capacity(d + 1);
                        let mut hi = Vec::with_capacity(d + 1);
                        for &side in sides {
                            let start = box_rng.gen::<f64>() * (1.0 - side);
                            lo.push(start);
                            hi.push(start + side);
                        }
                        (lo, hi)
                    }
                };
                let lam = compensator_on_box(f, seq, &lo, &hi);
                t_sum += count_in_box(seq, &lo, &hi) as f64 - lam;
                lam_sum += lam;
            }
            Ok((t_sum, lam_sum))
        })
        .collect();
    let results = results?;
    let worst = results.iter().map(|r| r.1).fold(f64::NEG_INFINITY, f64::max);
    if worst > v {
        return Err(Error::Config(format!(
            "subsets violate the variance budget: measured sum of compensators up to {worst:.6} exceeds v = {v}"
        )));
    }
    let t_values: Vec<f64> = results.iter().map(|r| r.0).collect();

    let mut rows = Vec::new();
    for &x in x_grid {
        let thr = bernstein_threshold(v, x);
        let bound = (-x).exp();
        let upper = t_values.iter().filter(|&&t| t >= thr).count() as f64 / replicates as f64;
        let lower = t_values.iter().filter(|&&t| t <= -thr).count() as f64 / replicates as f64;
        rows.push(CheckRow {
            label: "upper_tail".into(),
            x,
            empirical: upper,
            se: stats::freq_se(upper, replicates),
            bound,
            kind: BoundKind::UpperTail,
        });
        rows.push(CheckRow {
            label: "lower_tail".into(),
            x,
            empirical: lower,
            se: stats::freq_se(lower, replicates),
            bound,
            kind: BoundKind::UpperTail,
        });
        // Moment form on the same threshold, expressed on the average scale.
        let x_avg = thr / rule.n as f64;
        let moment_bound = (-(rule.n as f64) * x_avg * x_avg / (2.0 * (sigma2 + b_const * x_avg))).exp();
        rows.push(CheckRow {
            label: "moment_form".into(),
            x,
            empirical: upper,
            se: stats::freq_se(upper, replicates),
            bound: moment_bound,
            kind: BoundKind::UpperTail,
        });
    }
    let settings = serde_json::json!({
        "v": v,
        "n": rule.n,
        "kind": format!("{:?}", rule.kind),
        "theta": theta,
        "c_hat": c_hat,
        "sigma2": sigma2,
        "b": b_const,
        "max_sum_compensator": worst,
    });
    Ok(CheckReport::finalized("bernstein", settings, replicates, rows))
}

/// Monte-Carlo KL divergence between datasets of `n` sequences under `f0`
/// versus `f`: mean and standard error over replicate datasets.
pub fn kl_divergence_mc(
    f0: &ParameterF,
    f: &ParameterF,
    n: usize,
    replicates: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    let diffs: Result<Vec<f64>> = (0..replicates)
        .into_par_iter()
        .map(|r| {
            let cfg = SimConfig::new(f0.clone(), n, derive_seed(seed, r as u64), SimMethod::Branching)?;
            let data = simulate_branching(&cfg)?;
            let ws = LikelihoodWorkspace::with_grids(
                data,
                f0.support(),
                f0.mu().grid().clone(),
                f0.g().grid().clone(),
            )?;
            Ok(log_likelihood(f0, &ws)? - log_likelihood(f, &ws)?)
        })
        .collect();
    let diffs = diffs?;
    let (mean, se) = stats::mean_and_se(&diffs);
    Ok((mean, se))
}

/// Uniform perturbation used by the KL check: `mu + eps/2`,
/// `g = max(g - eps/2, 0)` (clipped to keep positivity). The sup distance is
/// at most `eps` by construction.
pub fn perturb_for_kl(f0: &ParameterF, eps_bar: f64) -> Result<ParameterF> {
    let mu_values: Vec<f64> = f0.mu().values().iter().map(|v| v + eps_bar / 2.0).collect();
    let g_values: Vec<f64> = f0
        .g()
        .values()
        .iter()
        .map(|v| (v - eps_bar / 2.0).max(0.0))
        .collect();
    let mu = GridField::new(f0.mu().grid().clone(), mu_values, f0.mu().domain())?;
    let g = GridField::new(f0.g().grid().clone(), g_values, f0.g().domain())?;
    ParameterF::new(mu, g, f0.support())
}

/// KL bound check: the Monte-Carlo KL estimate must stay below
/// `kappa n eps^2 (1 + 1/2)` (the asymptotic `1 + o(1)` budgeted as 50%
/// slack) within 3 standard errors; nonnegativity of the estimate is
/// recorded as a second row.
pub fn check_kl_bound(
    f0: &ParameterF,
    eps_bar: f64,
    n: usize,
    replicates: usize,
    seed: u64,
) -> Result<CheckReport> {
    if replicates == 0 || n == 0 {
        return Err(Error::Config("kl check requires replicates >= 1 and n >= 1".into()));
    }
    if eps_bar <= 0.0 || eps_bar >= f0.mu().min_value() {
        return Err(Error::Config(format!(
            "eps_bar = {eps_bar} too large to keep the perturbation in the bounded-parameter ball \
             (min background node {})",
            f0.mu().min_value()
        )));
    }
    let f = perturb_for_kl(f0, eps_bar)?;
    let (kl, se) = kl_divergence_mc(f0, &f, n, replicates, seed)?;
    let lambda02 = estimate_lambda02(f0, 1000, derive_seed(seed, 0x7AB))?;
    let inputs = KappaInputs {
        mu_lower: f0.mu().min_value(),
        mu_upper: f0.mu().max_value(),
        g0_l1: branching_ratio(f0.g()),
        lambda02,
    };
    let kappa_value = kappa(&inputs)?;
    let slack = 1.5;
    let bound = kappa_value * n as f64 * eps_bar * eps_bar * slack;
    let rows = vec![
        CheckRow {
            label: "kl_vs_kappa_bound".into(),
            x: eps_bar,
            empirical: kl,
            se,
            bound,
            kind: BoundKind::UpperTail,
        },
        CheckRow {
            label: "kl_nonnegative".into(),
            x: eps_bar,
            empirical: -kl,
            se,
            bound: 0.0,
            kind: BoundKind::UpperTail,
        },
    ];
    let settings = serde_json::json!({
        "eps_bar": eps_bar,
        "n": n,
        "kappa": kappa_value,
        "lambda02": lambda02,
        "mu_lower": inputs.mu_lower,
        "mu_upper": inputs.mu_upper,
        "g0_l1": inputs.g0_l1,
        "slack": slack,
    });
    Ok(CheckReport::finalized("kl_bound", settings, replicates, rows))
}

/// Identifiability: the log-likelihood ratio of the generating parameter
/// against an alternative is zero exactly when they coincide and separates
/// beyond 3 standard errors when they differ.
pub fn check_identifiability(
    f: &ParameterF,
    f2: &ParameterF,
    n: usize,
    seed: u64,
) -> Result<CheckReport> {
    let cfg = SimConfig::new(f.clone(), n, seed, SimMethod::Branching)?;
    let data = simulate_branching(&cfg)?;
    let per_seq: Result<Vec<f64>> = data
        .sequences()
        .par_iter()
        .map(|seq| {
            let mini = Dataset::new(vec![seq.clone()], f.d())?;
            let ws = LikelihoodWorkspace::with_grids(
                mini,
                f.support(),
                f.mu().grid().clone(),
                f.g().grid().clone(),
            )?;
            Ok(log_likelihood(f, &ws)? - log_likelihood(f2, &ws)?)
        })
        .collect();
    let per_seq = per_seq?;
    let total: f64 = per_seq.iter().sum();
    let se_total = (stats::variance(&per_seq) * n as f64).sqrt();
    let same = crate::distance::l1_distance(f, f2)? == 0.0;
    let rows = vec![CheckRow {
        label: if same { "self_ratio_zero" } else { "ratio_separates" }.into(),
        x: n as f64,
        empirical: total,
        se: se_total,
        bound: 0.0,
        kind: if same { BoundKind::ExactZero } else { BoundKind::PositiveBeyondSe },
    }];
    let settings = serde_json::json!({
        "n": n,
        "l1_distance": crate::distance::l1_distance(f, f2)?,
    });
    Ok(CheckReport::finalized("identifiability", settings, n, rows))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::TriggeringSupport;

    fn support() -> TriggeringSupport {
        TriggeringSupport::new(0.2, 0.1).unwrap()
    }

    #[test]
    fn kappa_direct_arithmetic() {
        let k = kappa(&KappaInputs {
            mu_lower: 1.0,
            mu_upper: 2.0,
            g0_l1: 0.5,
            lambda02: 5.0,
        })
        .unwrap();
        assert!((k - 152.0 * 2.0f64.ln()).abs() < 1e-10);
        assert!((k - 105.36).abs() < 0.01);

        let k2 = kappa(&KappaInputs {
            mu_lower: 1.0,
            mu_upper: 1.0,
            g0_l1: 0.0,
            lambda02: 1.0,
        })
        .unwrap();
        assert!((k2 - 40.0 * 2.0f64.ln()).abs() < 1e-10);
        assert!((k2 - 27.726).abs() < 0.01);
    }

    #[test]
    fn kappa_boundary_cases_rejected() {
        assert!(kappa(&KappaInputs { mu_lower: 1.0, mu_upper: 2.0, g0_l1: 0.5, lambda02: 0.0 }).is_err());
        assert!(kappa(&KappaInputs { mu_lower: 1.0, mu_upper: 2.0, g0_l1: 1.0, lambda02: 1.0 }).is_err());
        assert!(kappa(&KappaInputs { mu_lower: 0.0, mu_upper: 2.0, g0_l1: 0.5, lambda02: 1.0 }).is_err());
    }

    #[test]
    fn kappa_monotonicity() {
        let base = KappaInputs { mu_lower: 1.0, mu_upper: 2.0, g0_l1: 0.3, lambda02: 2.0 };
        let k = |inp: KappaInputs| kappa(&inp).unwrap();
        // Increasing in lambda02 and mu_upper, decreasing in mu_lower.
        let mut prev = 0.0;
        for lam in [1.0, 2.0, 4.0] {
            let v = k(KappaInputs { lambda02: lam, ..base });
            assert!(v > prev);
            prev = v;
        }
        prev = 0.0;
        for hi in [1.5, 2.0, 3.0] {
            let v = k(KappaInputs { mu_upper: hi, ..base });
            assert!(v > prev);
            prev = v;
        }
        prev = f64::INFINITY;
        for lo in [0.5, 0.8, 1.0] {
            let v = k(KappaInputs { mu_lower: lo, ..base });
            assert!(v < prev);
            prev = v;
        }
    }

    #[test]
    fn bernstein_threshold_arithmetic() {
        let thr = bernstein_threshold(10.0, 2.0);
        assert!((thr - 6.99122).abs() < 1e-3);
        assert_eq!(bernstein_threshold(10.0, 0.0), 0.0);
    }

    #[test]
    fn bernstein_poisson_small_run_passes() {
        let f = ParameterF::constant(1, 2, 2.0, 0.0, support()).unwrap();
        let rule = SubsetsRule { n: 1, kind: SubsetKind::FullDomain };
        // Poisson with S_i = S: the compensator is exactly ||mu||_1 = 2.
        let report = check_bernstein(&f, &rule, 2.0, &[0.0, 0.5, 2.0], 20_000, 3).unwrap();
        assert_eq!(report.verdict, Verdict::Pass);
        // x = 0 rows have bound 1 and are trivially satisfied.
        let x0: Vec<_> = report.rows.iter().filter(|r| r.x == 0.0).collect();
        assert!(x0.iter().all(|r| r.bound == 1.0 && r.satisfied()));
        // Tails are nonincreasing in x.
        let uppers: Vec<f64> = report
            .rows
            .iter()
            .filter(|r| r.label == "upper_tail")
            .map(|r| r.empirical)
            .collect();
        assert!(uppers.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn bernstein_rejects_undersized_v() {
        let f = ParameterF::constant(1, 2, 2.0, 0.0, support()).unwrap();
        let rule = SubsetsRule { n: 2, kind: SubsetKind::FullDomain };
        match check_bernstein(&f, &rule, 1.0, &[1.0], 100, 3) {
            Err(Error::Config(msg)) => assert!(msg.contains("exceeds v"), "{msg}"),
            other => panic!("expected config error, got {other:?}"),
        }
    }

    #[test]
    fn kl_zero_for_identical_parameters() {
        let f = ParameterF::constant(1, 2, 1.5, 2.0, support()).unwrap();
        let (kl, se) = kl_divergence_mc(&f, &f, 2, 50, 11).unwrap();
        assert_eq!(kl, 0.0);
        assert_eq!(se, 0.0);
    }

    #[test]
    fn kl_poisson_closed_form() {
        let f0 = ParameterF::constant(1, 2, 1.0, 0.0, support()).unwrap();
        let f = ParameterF::constant(1, 2, 1.1, 0.0, support()).unwrap();
        let (kl, se) = kl_divergence_mc(&f0, &f, 1, 20_000, 5).unwrap();
        let exact = 0.1 - 1.1f64.ln();
        assert!((exact - 0.0046898).abs() < 1e-6);
        assert!(
            (kl - exact).abs() <= 3.0 * se,
            "kl {kl} vs exact {exact} (se {se})"
        );
    }

    #[test]
    fn kl_check_passes_budgeted_bound() {
        let f0 = ParameterF::constant(1, 2, 2.0, 0.3 / 0.04, support()).unwrap();
        let report = check_kl_bound(&f0, 0.05, 50, 150, 9).unwrap();
        assert_eq!(report.verdict, Verdict::Pass);
        assert_eq!(report.recompute_verdict(), report.verdict);
    }

    #[test]
    fn kl_rejects_oversized_eps() {
        let f0 = ParameterF::constant(1, 2, 1.0, 0.0, support()).unwrap();
        assert!(matches!(check_kl_bound(&f0, 1.5, 10, 10, 1), Err(Error::Config(_))));
    }

    #[test]
    fn identifiability_self_is_exactly_zero() {
        let f = ParameterF::constant(1, 2, 2.0, 5.0, support()).unwrap();
        let report = check_identifiability(&f, &f, 100, 3).unwrap();
        assert_eq!(report.verdict, Verdict::Pass);
        assert_eq!(report.rows[0].empirical, 0.0);
    }

    #[test]
    fn identifiability_separates_scaled_background() {
        let f = ParameterF::constant(1, 2, 2.0, 5.0, support()).unwrap();
        let f2 = ParameterF::constant(1, 2, 3.0, 5.0, support()).unwrap();
        let report = check_identifiability(&f, &f2, 500, 7).unwrap();
        assert_eq!(report.verdict, Verdict::Pass);
        assert!(report.rows[0].empirical > 0.0);
    }

    #[test]
    fn identifiability_separates_trigger_difference() {
        let f = ParameterF::constant(1, 2, 2.0, 8.0, support()).unwrap();
        let f2 = ParameterF::constant(1, 2, 2.0, 2.0, support()).unwrap();
        let report = check_identifiability(&f, &f2, 500, 13).unwrap();
        assert_eq!(report.verdict, Verdict::Pass);
    }

    #[test]
    fn omega_event_requires_replicates() {
        let f = ParameterF::constant(1, 2, 2.0, 0.0, support()).unwrap();
        assert!(check_omega_event(&f, &[50], 1.0, 0, 1).is_err());
    }

    #[test]
    fn omega_event_records_theoretical_slack() {
        let f = ParameterF::constant(1, 2, 2.0, 0.0, support()).unwrap();
        let report = check_omega_event(&f, &[100], 1.0, 50, 21).unwrap();
        for row in &report.rows {
            assert!((row.bound - 0.97).abs() < 1e-12);
        }
    }

    #[test]
    fn omega_event_poisson_frequency_grows() {
        let f = ParameterF::constant(1, 2, 2.0, 0.0, support()).unwrap();
        let report = check_omega_event(&f, &[50, 200, 800], 1.0, 400, 5).unwrap();
        assert_eq!(report.verdict, Verdict::Pass);
        let freqs: Vec<(f64, f64)> = report
            .rows
            .iter()
            .filter(|r| r.label == "mean_count")
            .map(|r| (r.empirical, r.se))
            .collect();
        assert_eq!(freqs.len(), 3);
        // Monotone nondecreasing up to one standard error.
        for w in freqs.windows(2) {
            assert!(w[1].0 >= w[0].0 - w[0].1.max(w[1].1));
        }
    }

    #[test]
    fn report_verdict_is_recomputable() {
        let f = ParameterF::constant(1, 2, 2.0, 0.0, support()).unwrap();
        let rule = SubsetsRule { n: 1, kind: SubsetKind::FullDomain };
        let mut report = check_bernstein(&f, &rule, 2.0, &[1.0], 2000, 3).unwrap();
        assert_eq!(report.recompute_verdict(), report.verdict);
        // Corrupt a row; the stored numbers alone must flip the verdict.
        report.rows[0].empirical = 1.0;
        assert_eq!(report.recompute_verdict(), Verdict::Fail);
    }
}
