//! Two independent samplers for the same process — a cluster (branching)
//! construction and Ogata-style thinning of the ground process — plus the
//! time-rescaling transform used for goodness of fit. Each simulator
//! validates the other.
//!
//! Randomness is drawn from counter-based streams keyed by
//! `(seed, sequence index)`, so sequences can be generated in parallel with
//! results independent of the thread schedule.

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::model::{Dataset, EventSequence, ParameterF, SpatioTemporalPoint};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SimMethod {
    Branching,
    Thinning,
}

#[derive(Debug, Clone)]
pub struct SimConfig {
    pub f: ParameterF,
    pub n: usize,
    pub seed: u64,
    pub method: SimMethod,
    pub max_events_per_seq: usize,
}

impl SimConfig {
    pub fn new(f: ParameterF, n: usize, seed: u64, method: SimMethod) -> Result<Self> {
        if n == 0 {
            return Err(Error::Config("number of sequences must be >= 1".into()));
        }
        Ok(SimConfig {
            f,
            n,
            seed,
            method,
            max_events_per_seq: 100_000,
        })
    }
}

/// Per-sequence RNG stream; `stream` is the sequence (or replicate) index.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn poisson_count(rng: &mut ChaCha8Rng, rate: f64) -> u64 {
    if rate <= 0.0 {
        return 0;
    }
    Poisson::new(rate).expect("positive rate").sample(rng) as u64
}

/// Dispatch on the configured method.
pub fn simulate(cfg: &SimConfig) -> Result<Dataset> {
    match cfg.method {
        SimMethod::Branching => simulate_branching(cfg),
        SimMethod::Thinning => simulate_thinning(cfg),
    }
}

/// Cluster representation: immigrants from an inhomogeneous Poisson process
/// with intensity `mu`, each event spawning offspring from the shifted,
/// clipped trigger kernel. Exact for grid-interpolated fields because the
/// interpolant is bounded by its node maxima.
pub fn simulate_branching(cfg: &SimConfig) -> Result<Dataset> {
    let sequences: Result<Vec<EventSequence>> = (0..cfg.n)
        .into_par_iter()
        .map(|i| branching_sequence(cfg, i))
        .collect();
    Dataset::new(sequences?, cfg.f.d())
}

fn branching_sequence(cfg: &SimConfig, index: usize) -> Result<EventSequence> {
    let f = &cfg.f;
    let d = f.d();
    let mut rng = stream_rng(cfg.seed, index as u64);
    let mu_max = f.mu().max_value();

    let mut points: Vec<SpatioTemporalPoint> = Vec::new();
    let immigrants = poisson_count(&mut rng, mu_max);
    for _ in 0..immigrants {
        let t = rng.gen::<f64>();
        let s: Vec<f64> = (0..d).map(|_| rng.gen::<f64>()).collect();
        let mut x = Vec::with_capacity(d + 1);
        x.push(t);
        x.extend_from_slice(&s);
        if rng.gen::<f64>() * mu_max < f.mu().eval(&x) {
            points.push(SpatioTemporalPoint { t, s });
        }
    }

    let mut cursor = 0;
    while cursor < points.len() {
        if points.len() > cfg.max_events_per_seq {
            return Err(Error::EventCapExceeded { sequence: index });
        }
        let parent = points[cursor].clone();
        cursor += 1;
        let (lo, hi) = f.clipped_trigger_box(&parent);
        let vol: f64 = lo.iter().zip(&hi).map(|(l, h)| (h - l).max(0.0)).product();
        if vol <= 0.0 {
            continue;
        }
        let g_bar = max_node_over_box(f.g().grid(), f.g().values(), &lo, &hi);
        if g_bar <= 0.0 {
            continue;
        }
        let count = poisson_count(&mut rng, g_bar * vol);
        for _ in 0..count {
            let u: Vec<f64> = lo
                .iter()
                .zip(&hi)
                .map(|(l, h)| l + rng.gen::<f64>() * (h - l))
                .collect();
            if rng.gen::<f64>() * g_bar < f.g().eval(&u) && u[0] > 0.0 {
                let t = parent.t + u[0];
                let s: Vec<f64> = parent.s.iter().zip(&u[1..]).map(|(p, v)| p + v).collect();
                points.push(SpatioTemporalPoint { t, s });
            }
        }
    }

    points.sort_by(|a, b| a.t.partial_cmp(&b.t).unwrap());
    EventSequence::new(points)
}

/// Maximum node value over all grid cells intersecting the box; an upper
/// bound for the interpolant there.
fn max_node_over_box(grid: &Grid, values: &[f64], lo: &[f64], hi: &[f64]) -> f64 {
    let ranges: Vec<(usize, usize)> = grid
        .axes()
        .iter()
        .enumerate()
        .map(|(k, ax)| {
            if ax.nodes == 1 {
                (0, 0)
            } else {
                let h = ax.step();
                let i0 = (((lo[k] - ax.lo) / h).floor().max(0.0)) as usize;
                let i1 = (((hi[k] - ax.lo) / h).ceil() as usize).min(ax.nodes - 1);
                (i0.min(ax.nodes - 1), i1)
            }
        })
        .collect();
    let mut max = f64::NEG_INFINITY;
    let mut idx: Vec<usize> = ranges.iter().map(|r| r.0).collect();
    loop {
        let mut flat = 0;
        for (k, &i) in idx.iter().enumerate() {
            flat = flat * grid.axes()[k].nodes + i;
        }
        max = max.max(values[flat]);
        let mut k = idx.len();
        loop {
            if k == 0 {
                return max;
            }
            k -= 1;
            idx[k] += 1;
            if idx[k] <= ranges[k].1 {
                break;
            }
            idx[k] = ranges[k].0;
        }
    }
}

/// Spatial integrals of each time slice of a field, over the given spatial
/// box. Linear interpolation in time of these values equals the spatial
/// integral of the interpolant at any time.
struct SliceIntegrals {
    values: Vec<f64>,
    t_axis: crate::grid::Axis,
}

impl SliceIntegrals {
    fn new(grid: &Grid, values: &[f64], space_lo: &[f64], space_hi: &[f64]) -> Self {
        let t_axis = grid.axes()[0].clone();
        let space_grid = Grid::new(grid.axes()[1..].to_vec());
        let stride = space_grid.node_count();
        let slices = (0..t_axis.nodes)
            .map(|i| space_grid.box_integral(&values[i * stride..(i + 1) * stride], space_lo, space_hi))
            .collect();
        SliceIntegrals { values: slices, t_axis }
    }

    fn at(&self, t: f64) -> f64 {
        if self.t_axis.nodes == 1 {
            return self.values[0];
        }
        let h = self.t_axis.step();
        let pos = ((t - self.t_axis.lo) / h).clamp(0.0, (self.t_axis.nodes - 1) as f64);
        let cell = (pos.floor() as usize).min(self.t_axis.nodes - 2);
        let xi = pos - cell as f64;
        self.values[cell] * (1.0 - xi) + self.values[cell + 1] * xi
    }

    fn max(&self) -> f64 {
        self.values.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Ogata thinning of the ground (time-marginal) process: candidate times are
/// proposed from the piecewise bound `R_mu + k(t) G_max` and accepted with
/// the exact ratio; accepted times receive a spatial mark sampled from the
/// discretized spatial section of the intensity (grid cell + uniform jitter,
/// an `O(1/R)` approximation).
pub fn simulate_thinning(cfg: &SimConfig) -> Result<Dataset> {
    let f = &cfg.f;
    let d = f.d();
    let space_lo = vec![0.0; d];
    let space_hi = vec![1.0; d];
    let mu_slices = SliceIntegrals::new(f.mu().grid(), f.mu().values(), &space_lo, &space_hi);
    let g_lo: Vec<f64> = f.g().grid().axes()[1..].iter().map(|a| a.lo).collect();
    let g_hi: Vec<f64> = f.g().grid().axes()[1..].iter().map(|a| a.hi).collect();
    let g_slices = SliceIntegrals::new(f.g().grid(), f.g().values(), &g_lo, &g_hi);
    let r_mu = mu_slices.max();
    let g_max = g_slices.max().max(0.0);

    let sequences: Result<Vec<EventSequence>> = (0..cfg.n)
        .into_par_iter()
        .map(|i| thinning_sequence(cfg, i, &mu_slices, r_mu, g_max))
        .collect();
    Dataset::new(sequences?, d)
}

fn thinning_sequence(
    cfg: &SimConfig,
    index: usize,
    mu_slices: &SliceIntegrals,
    r_mu: f64,
    g_max: f64,
) -> Result<EventSequence> {
    let f = &cfg.f;
    let d = f.d();
    let a = f.support().a();
    let mut rng = stream_rng(cfg.seed, index as u64);

    let mut points: Vec<SpatioTemporalPoint> = Vec::new();
    // Per accepted event: spatial slice integrals of g over its clipped box.
    let mut event_slices: Vec<SliceIntegrals> = Vec::new();
    let mut window_lo = 0usize; // events before this index have left the lag window
    let mut t = 0.0f64;

    loop {
        let active = points.len() - window_lo;
        let bound = r_mu + active as f64 * g_max;
        if bound <= 0.0 {
            break;
        }
        let next_change = if window_lo < points.len() {
            points[window_lo].t + a
        } else {
            f64::INFINITY
        };
        let dt = -rng.gen::<f64>().ln() / bound;
        if t + dt >= next_change.min(1.0) {
            if next_change <= 1.0 {
                t = next_change;
                window_lo += 1;
                continue;
            }
            break;
        }
        t += dt;
        let mut ground = mu_slices.at(t);
        for (p, slices) in points[window_lo..].iter().zip(&event_slices[window_lo..]) {
            ground += slices.at(t - p.t);
        }
        if rng.gen::<f64>() * bound < ground {
            let s = sample_spatial_mark(f, &points[window_lo..], t, &mut rng);
            let point = SpatioTemporalPoint { t, s };
            let (lo, hi) = f.clipped_trigger_box(&point);
            event_slices.push(SliceIntegrals::new(
                f.g().grid(),
                f.g().values(),
                &lo[1..],
                &hi[1..],
            ));
            points.push(point);
            if points.len() > cfg.max_events_per_seq {
                return Err(Error::EventCapExceeded { sequence: index });
            }
        }
        let _ = d;
    }
    EventSequence::new(points)
}

/// Sample a spatial mark from the normalized spatial section of the
/// intensity at time `t`: discretize on the background grid, pick a cell
/// proportionally to its trapezoid mass, jitter uniformly inside it.
fn sample_spatial_mark(
    f: &ParameterF,
    active: &[SpatioTemporalPoint],
    t: f64,
    rng: &mut ChaCha8Rng,
) -> Vec<f64> {
    let d = f.d();
    let space_axes = &f.mu().grid().axes()[1..];
    let nodes_per_axis: Vec<usize> = space_axes.iter().map(|ax| ax.nodes).collect();
    let total_nodes: usize = nodes_per_axis.iter().product();

    // Section values at the spatial grid nodes.
    let mut section = vec![0.0; total_nodes];
    let mut idx = vec![0usize; d];
    let mut x = vec![0.0; d + 1];
    x[0] = t;
    let mut shifted = vec![0.0; d + 1];
    for flat in 0..total_nodes {
        for (k, &i) in idx.iter().enumerate() {
            x[k + 1] = space_axes[k].node(i);
        }
        let mut v = f.mu().eval(&x);
        for p in active {
            shifted[0] = t - p.t;
            for k in 0..d {
                shifted[k + 1] = x[k + 1] - p.s[k];
            }
            v += f.g().eval(&shifted);
        }
        section[flat] = v;
        let mut k = d;
        while k > 0 {
            k -= 1;
            idx[k] += 1;
            if idx[k] < nodes_per_axis[k] {
                break;
            }
            idx[k] = 0;
        }
    }

    // Cell masses: average of corner values times cell volume.
    let cells_per_axis: Vec<usize> = nodes_per_axis.iter().map(|&n| (n - 1).max(1)).collect();
    let n_cells: usize = cells_per_axis.iter().product();
    let cell_vol: f64 = space_axes
        .iter()
        .map(|ax| if ax.nodes == 1 { ax.hi - ax.lo } else { ax.step() })
        .product();
    let mut masses = vec![0.0; n_cells];
    let mut cell_idx = vec![0usize; d];
    for mass in masses.iter_mut() {
        let mut acc = 0.0;
        let corners = 1usize << d;
        for corner in 0..corners {
            let mut flat = 0;
            for k in 0..d {
                let off = if nodes_per_axis[k] == 1 { 0 } else { (corner >> k) & 1 };
                flat = flat * nodes_per_axis[k] + cell_idx[k] + off;
            }
            acc += section[flat];
        }
        *mass = acc / corners as f64 * cell_vol;
        let mut k = d;
        while k > 0 {
            k -= 1;
            cell_idx[k] += 1;
            if cell_idx[k] < cells_per_axis[k] {
                break;
            }
            cell_idx[k] = 0;
        }
    }

    let total_mass: f64 = masses.iter().sum();
    let mut target = rng.gen::<f64>() * total_mass;
    let mut chosen = n_cells - 1;
    for (c, &m) in masses.iter().enumerate() {
        if target < m {
            chosen = c;
            break;
        }
        target -= m;
    }
    // Unravel the chosen cell and jitter uniformly inside it.
    let mut s = vec![0.0; d];
    let mut rem = chosen;
    for k in (0..d).rev() {
        let c = rem % cells_per_axis[k];
        rem /= cells_per_axis[k];
        let ax = &space_axes[k];
        let width = if ax.nodes == 1 { ax.hi - ax.lo } else { ax.step() };
        s[k] = ax.lo + (c as f64 + rng.gen::<f64>()) * width;
    }
    s
}

/// Ground compensator `Lambda_g(t)`: the intensity integrated over
/// `[0,t] x [0,1]^d`. Exact for the interpolated fields.
pub fn ground_compensator(f: &ParameterF, seq: &EventSequence, t: f64) -> f64 {
    let d = f.d();
    let mut lo = vec![0.0; d + 1];
    let mut hi = vec![1.0; d + 1];
    hi[0] = t;
    let mut total = f.mu().grid().box_integral(f.mu().values(), &lo, &hi);
    for p in seq.points() {
        if p.t >= t {
            break;
        }
        let (mut blo, mut bhi) = f.clipped_trigger_box(p);
        bhi[0] = bhi[0].min(t - p.t);
        if bhi[0] <= blo[0] {
            continue;
        }
        std::mem::swap(&mut lo, &mut blo);
        std::mem::swap(&mut hi, &mut bhi);
        total += f.g().grid().box_integral(f.g().values(), &lo, &hi);
        std::mem::swap(&mut lo, &mut blo);
        std::mem::swap(&mut hi, &mut bhi);
    }
    total
}

/// Compensator gaps `Lambda_g(t_{j+1}) - Lambda_g(t_j)` (the first gap is
/// from 0). Under the true parameter these are i.i.d. Exp(1) draws, up to
/// the censored remainder past the last event.
pub fn time_rescale(f: &ParameterF, seq: &EventSequence) -> Vec<f64> {
    let mut gaps = Vec::with_capacity(seq.len());
    let mut last = 0.0;
    for p in seq.points() {
        let lam = ground_compensator(f, seq, p.t);
        gaps.push(lam - last);
        last = lam;
    }
    gaps
}

/// Pool rescaled gaps across sequences into one exact Exp(1) sample by
/// concatenating the transformed timelines: the censored remainder of each
/// sequence carries into the next one's first gap, so only the final
/// remainder of the whole pool is censored.
pub fn pooled_rescaled_gaps(f: &ParameterF, data: &Dataset) -> Vec<f64> {
    let mut pooled = Vec::new();
    let mut carry = 0.0;
    for seq in data.sequences() {
        let gaps = time_rescale(f, seq);
        let total = ground_compensator(f, seq, 1.0);
        let consumed: f64 = gaps.iter().sum();
        for (j, gap) in gaps.into_iter().enumerate() {
            if j == 0 {
                pooled.push(carry + gap);
                carry = 0.0;
            } else {
                pooled.push(gap);
            }
        }
        carry += total - consumed;
    }
    pooled
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::TriggeringSupport;
    use crate::stats;

    fn support(a: f64, b: f64) -> TriggeringSupport {
        TriggeringSupport::new(a, b).unwrap()
    }

    fn counts(data: &Dataset) -> Vec<f64> {
        data.sequences().iter().map(|s| s.len() as f64).collect()
    }

    #[test]
    fn poisson_special_case_moments() {
        let f = ParameterF::constant(1, 4, 3.0, 0.0, support(0.2, 0.1)).unwrap();
        for method in [SimMethod::Branching, SimMethod::Thinning] {
            let cfg = SimConfig::new(f.clone(), 10_000, 99, method).unwrap();
            let data = simulate(&cfg).unwrap();
            let c = counts(&data);
            let mean = stats::mean(&c);
            let var = stats::variance(&c);
            assert!((2.9..=3.1).contains(&mean), "{method:?}: mean {mean}");
            assert!((2.8..=3.2).contains(&var), "{method:?}: var {var}");
        }
    }

    #[test]
    fn hawkes_mean_count_band() {
        // mu = 2, ||g||_1 = 0.5 with a = b = 0.05: domination bounds the mean
        // by mu/(1 - ||g||_1) = 4; boundary clipping loses a few percent.
        let g_level = 0.5 / (0.05 * 0.1);
        let f = ParameterF::constant(1, 4, 2.0, g_level, support(0.05, 0.05)).unwrap();
        let cfg = SimConfig::new(f, 10_000, 4, SimMethod::Branching).unwrap();
        let data = simulate(&cfg).unwrap();
        let mean = stats::mean(&counts(&data));
        assert!((3.6..=4.0).contains(&mean), "mean {mean}");
    }

    #[test]
    fn all_points_inside_domain_and_sorted() {
        let f = ParameterF::constant(1, 4, 2.0, 20.0, support(0.2, 0.1)).unwrap();
        for method in [SimMethod::Branching, SimMethod::Thinning] {
            let cfg = SimConfig::new(f.clone(), 50, 7, method).unwrap();
            let data = simulate(&cfg).unwrap();
            for seq in data.sequences() {
                let mut last = -1.0;
                for p in seq.points() {
                    assert!((0.0..=1.0).contains(&p.t));
                    assert!(p.s.iter().all(|&x| (0.0..=1.0).contains(&x)));
                    assert!(p.t > last);
                    last = p.t;
                }
            }
        }
    }

    #[test]
    fn same_seed_is_byte_identical() {
        let f = ParameterF::constant(2, 3, 2.0, 8.0, support(0.2, 0.1)).unwrap();
        for method in [SimMethod::Branching, SimMethod::Thinning] {
            let cfg = SimConfig::new(f.clone(), 40, 11, method).unwrap();
            let d1 = simulate(&cfg).unwrap();
            let d2 = simulate(&cfg).unwrap();
            let mut b1 = Vec::new();
            let mut b2 = Vec::new();
            d1.write_csv(&mut b1).unwrap();
            d2.write_csv(&mut b2).unwrap();
            assert_eq!(b1, b2);
        }
    }

    #[test]
    fn event_cap_is_reported() {
        let f = ParameterF::constant(1, 2, 50.0, 20.0, support(0.2, 0.1)).unwrap();
        let mut cfg = SimConfig::new(f, 3, 5, SimMethod::Branching).unwrap();
        cfg.max_events_per_seq = 3;
        match simulate(&cfg) {
            Err(Error::EventCapExceeded { .. }) => {}
            other => panic!("expected event cap error, got {other:?}"),
        }
    }

    #[test]
    fn rescale_homogeneous_poisson_gaps() {
        let f = ParameterF::constant(1, 2, 2.0, 0.0, support(0.2, 0.1)).unwrap();
        let seq = EventSequence::new(vec![
            SpatioTemporalPoint::new(0.1, vec![0.4]).unwrap(),
            SpatioTemporalPoint::new(0.5, vec![0.6]).unwrap(),
        ])
        .unwrap();
        let gaps = time_rescale(&f, &seq);
        assert_eq!(gaps.len(), 2);
        assert!((gaps[0] - 0.2).abs() < 1e-12);
        assert!((gaps[1] - 0.8).abs() < 1e-12);
        assert!(time_rescale(&f, &EventSequence::empty()).is_empty());
    }

    #[test]
    fn rescaled_gaps_pass_ks_in_batches() {
        let f = ParameterF::constant(1, 4, 2.5, 12.0, support(0.15, 0.1)).unwrap();
        let mut passes = 0;
        let batches = 100;
        for batch in 0..batches {
            let cfg = SimConfig::new(f.clone(), 40, 1000 + batch, SimMethod::Branching).unwrap();
            let data = simulate(&cfg).unwrap();
            let gaps = pooled_rescaled_gaps(&f, &data);
            let d = stats::ks_statistic(&gaps, stats::exp1_cdf);
            if stats::ks_pvalue(d, gaps.len()) > 0.01 {
                passes += 1;
            }
        }
        assert!(passes >= 95, "only {passes}/{batches} batches passed KS");
    }
}
