//! Domain types for spatio-temporal event data and the Hawkes parameter,
//! together with the conditional intensity, compensator and branching ratio.
//!
//! The observation domain is `S = [0,1] x [0,1]^d`. The parameter is a pair
//! `f = (mu, g)` of nonnegative grid fields: the background rate on `S` and
//! the triggering kernel on `[0,a] x [-b,b]^d`, which vanishes outside that
//! box (finite range).

use crate::error::{Error, Result};
use crate::grid::{FieldDomain, Grid, GridField};
use serde::{Deserialize, Serialize};
use std::io::{BufRead, Write};
use std::path::Path;

/// One event: a time in `[0,1]` and a spatial coordinate in `[0,1]^d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpatioTemporalPoint {
    pub t: f64,
    pub s: Vec<f64>,
}

impl SpatioTemporalPoint {
    pub fn new(t: f64, s: Vec<f64>) -> Result<Self> {
        if s.is_empty() {
            return Err(Error::DimensionMismatch { expected: 1, got: 0 });
        }
        if !(0.0..=1.0).contains(&t) || s.iter().any(|&x| !(0.0..=1.0).contains(&x)) {
            return Err(Error::PointOutsideDomain { t, s });
        }
        Ok(SpatioTemporalPoint { t, s })
    }

    pub fn dim(&self) -> usize {
        self.s.len()
    }
}

/// Events of one observed sequence, strictly increasing in time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventSequence {
    points: Vec<SpatioTemporalPoint>,
}

impl EventSequence {
    /// Ties in `t` are rejected: the model assumes a strict ordering.
    pub fn new(points: Vec<SpatioTemporalPoint>) -> Result<Self> {
        for i in 1..points.len() {
            if points[i].t <= points[i - 1].t {
                return Err(Error::UnorderedEvents {
                    index: i,
                    t: points[i].t,
                });
            }
        }
        Ok(EventSequence { points })
    }

    pub fn empty() -> Self {
        EventSequence { points: Vec::new() }
    }

    pub fn points(&self) -> &[SpatioTemporalPoint] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// A set of i.i.d. sequences sharing one spatial dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    sequences: Vec<EventSequence>,
    d: usize,
}

impl Dataset {
    pub fn new(sequences: Vec<EventSequence>, d: usize) -> Result<Self> {
        if d == 0 {
            return Err(Error::DimensionMismatch { expected: 1, got: 0 });
        }
        for seq in &sequences {
            for p in seq.points() {
                if p.dim() != d {
                    return Err(Error::DimensionMismatch {
                        expected: d,
                        got: p.dim(),
                    });
                }
            }
        }
        Ok(Dataset { sequences, d })
    }

    pub fn sequences(&self) -> &[EventSequence] {
        &self.sequences
    }

    pub fn n(&self) -> usize {
        self.sequences.len()
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn total_events(&self) -> usize {
        self.sequences.iter().map(|s| s.len()).sum()
    }

    pub fn max_sequence_count(&self) -> usize {
        self.sequences.iter().map(|s| s.len()).max().unwrap_or(0)
    }

    /// Write the `seq_id,t,s1,...,sd` CSV schema.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        write!(w, "seq_id,t")?;
        for k in 1..=self.d {
            write!(w, ",s{k}")?;
        }
        writeln!(w)?;
        for (i, seq) in self.sequences.iter().enumerate() {
            for p in seq.points() {
                write!(w, "{i},{}", p.t)?;
                for x in &p.s {
                    write!(w, ",{x}")?;
                }
                writeln!(w)?;
            }
        }
        Ok(())
    }

    pub fn write_csv_path(&self, path: &Path) -> Result<()> {
        self.write_csv(std::io::BufWriter::new(std::fs::File::create(path)?))
    }

    /// Read the CSV schema. The spatial dimension comes from the header; rows
    /// may interleave sequences but must be strictly increasing in `t` within
    /// each `seq_id`. The number of sequences is `max(seq_id) + 1`.
    pub fn read_csv<R: BufRead>(r: R) -> Result<Self> {
        let mut lines = r.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::CsvFormat { line: 1, msg: "missing header".into() })??;
        let cols: Vec<&str> = header.trim().split(',').collect();
        if cols.len() < 3 || cols[0] != "seq_id" || cols[1] != "t" {
            return Err(Error::CsvFormat {
                line: 1,
                msg: format!("expected header seq_id,t,s1,...,sd; got '{header}'"),
            });
        }
        let d = cols.len() - 2;
        for (k, col) in cols[2..].iter().enumerate() {
            if *col != format!("s{}", k + 1) {
                return Err(Error::CsvFormat {
                    line: 1,
                    msg: format!("spatial column {} named '{}', expected 's{}'", k + 3, col, k + 1),
                });
            }
        }
        let mut per_seq: Vec<Vec<SpatioTemporalPoint>> = Vec::new();
        for (lineno, line) in lines.enumerate() {
            let lineno = lineno + 2;
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.trim().split(',').collect();
            if fields.len() != d + 2 {
                return Err(Error::CsvFormat {
                    line: lineno,
                    msg: format!("expected {} fields, got {}", d + 2, fields.len()),
                });
            }
            let parse = |s: &str, what: &str| -> Result<f64> {
                s.parse::<f64>().map_err(|_| Error::CsvFormat {
                    line: lineno,
                    msg: format!("cannot parse {what} '{s}'"),
                })
            };
            let id: usize = fields[0].parse().map_err(|_| Error::CsvFormat {
                line: lineno,
                msg: format!("cannot parse seq_id '{}'", fields[0]),
            })?;
            let t = parse(fields[1], "t")?;
            let mut s = Vec::with_capacity(d);
            for (k, f) in fields[2..].iter().enumerate() {
                s.push(parse(f, &format!("s{}", k + 1))?);
            }
            let point = SpatioTemporalPoint::new(t, s).map_err(|e| Error::CsvFormat {
                line: lineno,
                msg: e.to_string(),
            })?;
            if per_seq.len() <= id {
                per_seq.resize(id + 1, Vec::new());
            }
            if let Some(prev) = per_seq[id].last() {
                if point.t <= prev.t {
                    return Err(Error::CsvFormat {
                        line: lineno,
                        msg: format!(
                            "t={} not strictly greater than previous t={} within seq_id {}",
                            point.t, prev.t, id
                        ),
                    });
                }
            }
            per_seq[id].push(point);
        }
        let sequences = per_seq
            .into_iter()
            .map(EventSequence::new)
            .collect::<Result<Vec<_>>>()?;
        Dataset::new(sequences, d)
    }

    pub fn read_csv_path(path: &Path) -> Result<Self> {
        Dataset::read_csv(std::io::BufReader::new(std::fs::File::open(path)?))
    }
}

/// Finite range of the triggering kernel: lag `a` in time, box radius `b` in
/// space, both constrained to `(0, 1/2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TriggeringSupport {
    a: f64,
    b: f64,
}

impl TriggeringSupport {
    pub fn new(a: f64, b: f64) -> Result<Self> {
        if !(a > 0.0 && a < 0.5 && b > 0.0 && b < 0.5) {
            return Err(Error::InvalidSupport { a, b });
        }
        Ok(TriggeringSupport { a, b })
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn b(&self) -> f64 {
        self.b
    }
}

/// The Hawkes parameter `f = (mu, g)`.
///
/// Construction enforces the model constraints: `mu` strictly positive at
/// every node and branching ratio `||g||_1 < 1` (non-explosion).
/// Serialization uses the flat persistence schema
/// `{d, a, b, resolution, mu_values, g_values}` (row-major, last axis
/// fastest).
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterF {
    mu: GridField,
    g: GridField,
    support: TriggeringSupport,
    d: usize,
}

impl ParameterF {
    pub fn new(mu: GridField, g: GridField, support: TriggeringSupport) -> Result<Self> {
        if mu.domain() != FieldDomain::Background || g.domain() != FieldDomain::Trigger {
            return Err(Error::InvalidParameter(
                "mu must be a BACKGROUND field and g a TRIGGER field".into(),
            ));
        }
        let d = mu.grid().dim() - 1;
        if g.grid().dim() != d + 1 {
            return Err(Error::DimensionMismatch {
                expected: d + 1,
                got: g.grid().dim(),
            });
        }
        let g_axes = g.grid().axes();
        let ok_time = g_axes[0].lo == 0.0 && (g_axes[0].hi - support.a()).abs() < 1e-12;
        let ok_space = g_axes[1..]
            .iter()
            .all(|ax| (ax.lo + support.b()).abs() < 1e-12 && (ax.hi - support.b()).abs() < 1e-12);
        if !ok_time || !ok_space {
            return Err(Error::InvalidParameter(
                "trigger grid extents do not match the support (a, b)".into(),
            ));
        }
        if mu.min_value() <= 0.0 {
            return Err(Error::InvalidParameter(format!(
                "mu must be strictly positive at every node (min node value {})",
                mu.min_value()
            )));
        }
        let eta = branching_ratio(&g);
        if eta >= 1.0 {
            return Err(Error::InvalidParameter(format!(
                "branching ratio {eta} is not < 1"
            )));
        }
        Ok(ParameterF { mu, g, support, d })
    }

    /// Constant background `mu` and constant trigger `g` at the given grid
    /// resolution (cells per axis).
    pub fn constant(
        d: usize,
        resolution: usize,
        mu: f64,
        g: f64,
        support: TriggeringSupport,
    ) -> Result<Self> {
        let mu_field = GridField::constant(Grid::background(d, resolution), mu, FieldDomain::Background)?;
        let g_field = GridField::constant(
            Grid::trigger(support.a(), support.b(), d, resolution),
            g,
            FieldDomain::Trigger,
        )?;
        ParameterF::new(mu_field, g_field, support)
    }

    pub fn mu(&self) -> &GridField {
        &self.mu
    }

    pub fn g(&self) -> &GridField {
        &self.g
    }

    pub fn support(&self) -> TriggeringSupport {
        self.support
    }

    pub fn d(&self) -> usize {
        self.d
    }

    /// Spatial box of the shifted, clipped trigger support around an event at
    /// `(t_j, s_j)`, expressed in trigger coordinates `(u, v) = (t - t_j, s - s_j)`.
    pub fn clipped_trigger_box(&self, point: &SpatioTemporalPoint) -> (Vec<f64>, Vec<f64>) {
        let a = self.support.a();
        let b = self.support.b();
        let mut lo = Vec::with_capacity(self.d + 1);
        let mut hi = Vec::with_capacity(self.d + 1);
        lo.push(0.0);
        hi.push(a.min(1.0 - point.t));
        for &sj in &point.s {
            lo.push((-b).max(-sj));
            hi.push(b.min(1.0 - sj));
        }
        (lo, hi)
    }
}

/// JSON persistence schema for `ParameterF`: both grids share one resolution
/// (cells per axis); values row-major with the last axis fastest.
#[derive(Debug, Serialize, Deserialize)]
struct ParameterJson {
    d: usize,
    a: f64,
    b: f64,
    resolution: usize,
    mu_values: Vec<f64>,
    g_values: Vec<f64>,
}

impl ParameterF {
    fn to_schema(&self) -> ParameterJson {
        ParameterJson {
            d: self.d,
            a: self.support.a(),
            b: self.support.b(),
            resolution: self.mu.grid().axes()[0].nodes.saturating_sub(1),
            mu_values: self.mu.values().to_vec(),
            g_values: self.g.values().to_vec(),
        }
    }

    fn from_schema(doc: ParameterJson) -> Result<Self> {
        let support = TriggeringSupport::new(doc.a, doc.b)?;
        let mu = GridField::new(
            Grid::background(doc.d, doc.resolution),
            doc.mu_values,
            FieldDomain::Background,
        )?;
        let g = GridField::new(
            Grid::trigger(doc.a, doc.b, doc.d, doc.resolution),
            doc.g_values,
            FieldDomain::Trigger,
        )?;
        ParameterF::new(mu, g, support)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.to_schema())?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        ParameterF::from_schema(serde_json::from_str(text)?)
    }

    pub fn save_json(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load_json(path: &Path) -> Result<Self> {
        ParameterF::from_json(&std::fs::read_to_string(path)?)
    }
}

impl Serialize for ParameterF {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_schema().serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for ParameterF {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let doc = ParameterJson::deserialize(deserializer)?;
        ParameterF::from_schema(doc).map_err(serde::de::Error::custom)
    }
}

/// Conditional intensity at `(t, s)` given the history of events before `t`.
///
/// Only events with `t - t_j <= a` and `||s - s_j||_inf <= b` contribute; the
/// trigger field enforces that by vanishing outside its domain.
pub fn intensity_at(f: &ParameterF, history: &EventSequence, t: f64, s: &[f64]) -> Result<f64> {
    if s.len() != f.d() || !(0.0..=1.0).contains(&t) || s.iter().any(|&x| !(0.0..=1.0).contains(&x))
    {
        return Err(Error::PointOutsideDomain { t, s: s.to_vec() });
    }
    let mut x = Vec::with_capacity(s.len() + 1);
    x.push(t);
    x.extend_from_slice(s);
    let mut rate = f.mu().eval(&x);
    let a = f.support().a();
    let mut shifted = vec![0.0; s.len() + 1];
    for p in history.points() {
        if p.t >= t {
            continue;
        }
        let dt = t - p.t;
        if dt > a {
            continue;
        }
        shifted[0] = dt;
        for (k, (&sk, &pk)) in s.iter().zip(&p.s).enumerate() {
            shifted[k + 1] = sk - pk;
        }
        rate += f.g().eval(&shifted);
    }
    Ok(rate)
}

/// Branching ratio `||g||_1` over the trigger domain.
pub fn branching_ratio(g: &GridField) -> f64 {
    g.l1_norm()
}

/// Integral of the conditional intensity over `S` for one sequence:
/// `||mu||_1` plus, per event, the integral of the shifted trigger kernel
/// over its support clipped to `S` (never rescaled).
pub fn compensator(f: &ParameterF, sequence: &EventSequence) -> f64 {
    let mut total = f.mu().l1_norm();
    for p in sequence.points() {
        let (lo, hi) = f.clipped_trigger_box(p);
        total += f.g().grid().box_integral(f.g().values(), &lo, &hi);
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;

    fn support(a: f64, b: f64) -> TriggeringSupport {
        TriggeringSupport::new(a, b).unwrap()
    }

    #[test]
    fn intensity_no_excitation() {
        let f = ParameterF::constant(1, 4, 1.5, 0.0, support(0.2, 0.1)).unwrap();
        let v = intensity_at(&f, &EventSequence::empty(), 0.37, &[0.81]).unwrap();
        assert_eq!(v, 1.5);
    }

    #[test]
    fn intensity_inside_and_outside_range() {
        let f = ParameterF::constant(1, 4, 1.0, 0.8, support(0.2, 0.1)).unwrap();
        let history = EventSequence::new(vec![SpatioTemporalPoint::new(0.5, vec![0.5]).unwrap()]).unwrap();
        // dt = 0.1 <= a, |ds| = 0.05 <= b: direct evaluation of the conditional intensity.
        let v = intensity_at(&f, &history, 0.6, &[0.55]).unwrap();
        assert!((v - 1.8).abs() < 1e-14);
        // dt = 0.4 > a = 0.2: outside the finite range.
        let v = intensity_at(&f, &history, 0.9, &[0.55]).unwrap();
        assert!((v - 1.0).abs() < 1e-14);
    }

    #[test]
    fn intensity_rejects_points_outside_domain() {
        let f = ParameterF::constant(1, 2, 1.0, 0.0, support(0.2, 0.1)).unwrap();
        assert!(intensity_at(&f, &EventSequence::empty(), 1.2, &[0.5]).is_err());
        assert!(intensity_at(&f, &EventSequence::empty(), 0.5, &[-0.1]).is_err());
    }

    #[test]
    fn branching_ratio_of_constant_field() {
        let g = GridField::constant(Grid::trigger(0.2, 0.1, 1, 8), 2.0, FieldDomain::Trigger).unwrap();
        assert!((branching_ratio(&g) - 0.08).abs() < 1e-14);
        let zero = GridField::constant(Grid::trigger(0.2, 0.1, 1, 8), 0.0, FieldDomain::Trigger).unwrap();
        assert_eq!(branching_ratio(&zero), 0.0);
    }

    #[test]
    fn branching_ratio_matches_dense_riemann_refinement() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let grid = Grid::trigger(0.2, 0.1, 1, 64);
        let values: Vec<f64> = (0..grid.node_count()).map(|_| rng.gen::<f64>()).collect();
        let g = GridField::new(grid, values, FieldDomain::Trigger).unwrap();
        let exact = branching_ratio(&g);
        let m = 4096;
        let mut acc = 0.0;
        for i in 0..m {
            let u = (i as f64 + 0.5) / m as f64 * 0.2;
            for j in 0..m {
                let v = -0.1 + (j as f64 + 0.5) / m as f64 * 0.2;
                acc += g.eval(&[u, v]);
            }
        }
        acc *= 0.2 * 0.2 / (m * m) as f64;
        assert!((exact - acc).abs() / exact < 1e-3);
    }

    #[test]
    fn compensator_poisson_cases() {
        let f = ParameterF::constant(1, 4, 1.0, 0.0, support(0.2, 0.1)).unwrap();
        assert!((compensator(&f, &EventSequence::empty()) - 1.0).abs() < 1e-15);
        let f2 = ParameterF::constant(2, 3, 2.0, 0.0, support(0.2, 0.1)).unwrap();
        assert!((compensator(&f2, &EventSequence::empty()) - 2.0).abs() < 1e-15);
    }

    #[test]
    fn compensator_interior_event_full_support() {
        let f = ParameterF::constant(1, 4, 1.0, 0.8, support(0.2, 0.1)).unwrap();
        let seq =
            EventSequence::new(vec![SpatioTemporalPoint::new(0.4, vec![0.5]).unwrap()]).unwrap();
        assert!((compensator(&f, &seq) - 1.032).abs() < 1e-14);
    }

    #[test]
    fn compensator_clips_at_boundary() {
        let f = ParameterF::constant(1, 4, 1.0, 0.8, support(0.2, 0.1)).unwrap();
        // Event at t = 0.95: only 0.05 of the temporal lag window remains in S.
        let seq =
            EventSequence::new(vec![SpatioTemporalPoint::new(0.95, vec![0.5]).unwrap()]).unwrap();
        assert!((compensator(&f, &seq) - (1.0 + 0.8 * 0.05 * 0.2)).abs() < 1e-14);
    }

    #[test]
    fn parameter_invariants_enforced() {
        // Branching ratio >= 1 rejected at construction.
        assert!(ParameterF::constant(1, 4, 1.0, 30.0, support(0.2, 0.1)).is_err());
        // mu must be strictly positive.
        assert!(ParameterF::constant(1, 4, 0.0, 0.1, support(0.2, 0.1)).is_err());
    }

    #[test]
    fn support_range_enforced() {
        assert!(TriggeringSupport::new(0.5, 0.1).is_err());
        assert!(TriggeringSupport::new(0.2, 0.0).is_err());
        assert!(TriggeringSupport::new(0.49, 0.49).is_ok());
    }

    #[test]
    fn ties_rejected_at_ingestion() {
        let p1 = SpatioTemporalPoint::new(0.5, vec![0.1]).unwrap();
        let p2 = SpatioTemporalPoint::new(0.5, vec![0.9]).unwrap();
        assert!(matches!(
            EventSequence::new(vec![p1, p2]),
            Err(Error::UnorderedEvents { index: 1, .. })
        ));
    }

    #[test]
    fn csv_round_trip_and_errors() {
        let seqs = vec![
            EventSequence::new(vec![
                SpatioTemporalPoint::new(0.1, vec![0.3]).unwrap(),
                SpatioTemporalPoint::new(0.6, vec![0.9]).unwrap(),
            ])
            .unwrap(),
            EventSequence::new(vec![SpatioTemporalPoint::new(0.4, vec![0.2]).unwrap()]).unwrap(),
        ];
        let data = Dataset::new(seqs, 1).unwrap();
        let mut buf = Vec::new();
        data.write_csv(&mut buf).unwrap();
        let back = Dataset::read_csv(std::io::Cursor::new(&buf)).unwrap();
        assert_eq!(back, data);

        let bad = "seq_id,t,s1\n0,0.5,0.1\n0,0.5,0.2\n";
        match Dataset::read_csv(std::io::Cursor::new(bad)) {
            Err(Error::CsvFormat { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected tie rejection with line number, got {other:?}"),
        }
    }

    #[test]
    fn parameter_json_round_trip() {
        let f = ParameterF::constant(1, 4, 1.5, 0.3, support(0.2, 0.1)).unwrap();
        let text = f.to_json().unwrap();
        let back = ParameterF::from_json(&text).unwrap();
        assert_eq!(back, f);
    }
}
