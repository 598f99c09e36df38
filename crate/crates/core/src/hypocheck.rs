//! Sample-based audit of the hypotheses behind the three connectedness
//! guarantees.
//!
//! The guarantees quantify over every point of the base and every H^1 path,
//! so sampling can refute them (with a concrete witness) or support them
//! (with the measured margins), never prove them. Verdicts are three-valued
//! and always carry their evidence.
//!
//! Three audits feed the verdicts: a pointwise sweep of H = B^2 + A C and
//! of the sign of A - C over a low-discrepancy point set; a Monte-Carlo
//! ensemble of random paths scoring L = b^2 + a c and the ratios a/L, b/L,
//! c/L; and a quadratic-growth envelope fit gamma(x) <= k + lambda d(x, xbar)^2
//! (for the static embedding the envelope is fitted to beta instead, which
//! is the field the positive-case guarantee constrains there).

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::pathspace::{path_integrals, DiscretePath};
use crate::spacetime::{GodelSpacetime, PresetKind};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SEED_STRIDE: u64 = 0x9E37_79B9_7F4A_7C15;
/// |A - C| at or below this counts as a sign boundary, which already breaks
/// the strict-sign hypotheses.
const DIFF_TOL: f64 = 1e-12;
/// Ensemble |L| must clear this for a supported verdict.
const L_MARGIN: f64 = 1e-6;
/// Envelope slopes below this are treated as "no quadratic term needed".
const LAMBDA_FLOOR: f64 = 1e-3;
/// Cap on stored witnesses per category.
const WITNESS_CAP: usize = 8;

/// Axis-aligned box in the base, one (lo, hi) pair per dimension.
pub type Region = Vec<(f64, f64)>;

/// What to sample and how much.
#[derive(Clone, Debug, Serialize)]
pub struct AuditConfig {
    /// Coordinate box in the base, one (lo, hi) pair per dimension.
    pub region: Region,
    /// Low-discrepancy point count for the pointwise sweep.
    pub point_samples: usize,
    /// Random path count for the ensemble.
    pub path_samples: usize,
    /// Segments per random path.
    pub path_n: usize,
    /// Center of the growth bound; defaults to the region center.
    pub base_point: Option<Vec<f64>>,
    /// Optional separate endpoint boxes (p-box, q-box); endpoints default
    /// to the region itself.
    pub endpoint_boxes: Option<(Region, Region)>,
    /// Sine modes added to each random chord.
    pub bump_modes: usize,
    /// Amplitude of the random bumps.
    pub bump_amp: f64,
    pub seed: u64,
}

impl AuditConfig {
    pub fn new(region: Region) -> Self {
        AuditConfig {
            region,
            point_samples: 10_000,
            path_samples: 1_000,
            path_n: 100,
            base_point: None,
            endpoint_boxes: None,
            bump_modes: 3,
            bump_amp: 0.25,
            seed: 42,
        }
    }

    pub fn validate(&self, st: &GodelSpacetime) -> Result<()> {
        if self.region.len() != st.dim() {
            return Err(Error::DimMismatch {
                expected: st.dim(),
                got: self.region.len(),
            });
        }
        check_box(&self.region, "region")?;
        if self.point_samples == 0 || self.path_samples == 0 {
            return Err(Error::InvalidParameter(
                "sample counts must be positive".into(),
            ));
        }
        if self.path_n < 2 {
            return Err(Error::InvalidParameter(
                "paths need at least two segments".into(),
            ));
        }
        if let Some(xb) = &self.base_point {
            if xb.len() != st.dim() {
                return Err(Error::DimMismatch {
                    expected: st.dim(),
                    got: xb.len(),
                });
            }
            if xb.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidParameter(
                    "base point must be finite".into(),
                ));
            }
        }
        if let Some((bp, bq)) = &self.endpoint_boxes {
            for (name, b) in [("p endpoint box", bp), ("q endpoint box", bq)] {
                if b.len() != st.dim() {
                    return Err(Error::DimMismatch {
                        expected: st.dim(),
                        got: b.len(),
                    });
                }
                check_box(b, name)?;
            }
        }
        if !(self.bump_amp.is_finite() && self.bump_amp >= 0.0) {
            return Err(Error::InvalidParameter(
                "bump amplitude must be finite and non-negative".into(),
            ));
        }
        Ok(())
    }

    fn center(&self) -> Vec<f64> {
        self.region.iter().map(|&(lo, hi)| 0.5 * (lo + hi)).collect()
    }

    fn base_point_or_center(&self) -> Vec<f64> {
        self.base_point.clone().unwrap_or_else(|| self.center())
    }
}

fn check_box(b: &[(f64, f64)], name: &str) -> Result<()> {
    for &(lo, hi) in b {
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::InvalidParameter(format!(
                "{name} must have finite lo < hi in every coordinate"
            )));
        }
    }
    Ok(())
}

/// A point together with the value that makes it interesting.
#[derive(Clone, Debug, Serialize)]
pub struct PointWitness {
    pub x: Vec<f64>,
    pub value: f64,
    pub note: String,
}

/// A sampled path together with its L; the node list is enough to
/// re-evaluate the claim.
#[derive(Clone, Debug, Serialize)]
pub struct PathWitness {
    pub index: usize,
    pub l: f64,
    pub points: Vec<f64>,
}

/// Pointwise sweep results.
#[derive(Clone, Debug, Serialize)]
pub struct PointwiseAudit {
    pub samples: usize,
    pub h_min: Option<f64>,
    pub h_min_at: Option<Vec<f64>>,
    /// Points where H <= 0 or the coefficients failed to evaluate.
    pub h_failures: Vec<PointWitness>,
    pub h_failure_count: usize,
    pub diff_positive: usize,
    pub diff_negative: usize,
    pub diff_zero: usize,
    pub positive_witness: Option<PointWitness>,
    pub negative_witness: Option<PointWitness>,
    pub zero_witness: Option<PointWitness>,
}

/// Halton points shifted by a seeded rotation, mapped into `region`.
fn sample_points(region: &[(f64, f64)], count: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    const PRIMES: [u64; 10] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29];
    let dim = region.len();
    if dim > PRIMES.len() {
        return Err(Error::InvalidParameter(format!(
            "pointwise sampling supports up to {} dimensions",
            PRIMES.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shift: Vec<f64> = (0..dim).map(|_| rng.gen_range(0.0..1.0)).collect();
    let mut out = Vec::with_capacity(count);
    for i in 0..count {
        let mut x = Vec::with_capacity(dim);
        for (d, &(lo, hi)) in region.iter().enumerate() {
            let u = (halton(i as u64 + 1, PRIMES[d]) + shift[d]).fract();
            x.push(lo + u * (hi - lo));
        }
        out.push(x);
    }
    Ok(out)
}

fn halton(mut index: u64, base: u64) -> f64 {
    let mut f = 1.0;
    let mut r = 0.0;
    while index > 0 {
        f /= base as f64;
        r += f * (index % base) as f64;
        index /= base;
    }
    r
}

/// Sweeps H and the sign of A - C over a low-discrepancy point set.
pub fn audit_pointwise(st: &GodelSpacetime, cfg: &AuditConfig) -> Result<PointwiseAudit> {
    cfg.validate(st)?;
    let points = sample_points(&cfg.region, cfg.point_samples, cfg.seed)?;
    let mut audit = PointwiseAudit {
        samples: points.len(),
        h_min: None,
        h_min_at: None,
        h_failures: Vec::new(),
        h_failure_count: 0,
        diff_positive: 0,
        diff_negative: 0,
        diff_zero: 0,
        positive_witness: None,
        negative_witness: None,
        zero_witness: None,
    };
    for x in &points {
        let (a, _, c) = match st.coefficients(x) {
            Ok(v) => v,
            Err(e) => {
                audit.h_failure_count += 1;
                if audit.h_failures.len() < WITNESS_CAP {
                    audit.h_failures.push(PointWitness {
                        x: x.clone(),
                        value: f64::NAN,
                        note: format!("coefficient evaluation failed: {e}"),
                    });
                }
                continue;
            }
        };
        match st.h(x) {
            Ok(h) => {
                if audit.h_min.is_none_or(|m| h < m) {
                    audit.h_min = Some(h);
                    audit.h_min_at = Some(x.clone());
                }
            }
            Err(_) => {
                let h = match st.coefficients(x) {
                    Ok((a, b, c)) => b * b + a * c,
                    Err(_) => f64::NAN,
                };
                audit.h_failure_count += 1;
                if audit.h_failures.len() < WITNESS_CAP {
                    audit.h_failures.push(PointWitness {
                        x: x.clone(),
                        value: h,
                        note: "H = B^2 + A C is not positive here".into(),
                    });
                }
            }
        }
        let diff = a - c;
        if diff.abs() <= DIFF_TOL {
            audit.diff_zero += 1;
            if audit.zero_witness.is_none() {
                audit.zero_witness = Some(PointWitness {
                    x: x.clone(),
                    value: diff,
                    note: "A - C vanishes here".into(),
                });
            }
        } else if diff > 0.0 {
            audit.diff_positive += 1;
            if audit.positive_witness.is_none() {
                audit.positive_witness = Some(PointWitness {
                    x: x.clone(),
                    value: diff,
                    note: "A - C > 0 here".into(),
                });
            }
        } else {
            audit.diff_negative += 1;
            if audit.negative_witness.is_none() {
                audit.negative_witness = Some(PointWitness {
                    x: x.clone(),
                    value: diff,
                    note: "A - C < 0 here".into(),
                });
            }
        }
    }
    Ok(audit)
}

/// Path-ensemble results.
#[derive(Clone, Debug, Serialize)]
pub struct EnsembleAudit {
    pub paths: usize,
    pub l_min: f64,
    pub l_max: f64,
    pub min_abs_l: f64,
    /// Empirical margin min |L|, present only when the sign is uniform.
    pub nu: Option<f64>,
    pub mixed_signs: bool,
    pub positive_witness: Option<PathWitness>,
    pub negative_witness: Option<PathWitness>,
    /// Largest |a/L|, |b/L|, |c/L| seen across the ensemble.
    pub ratio_bounds: [f64; 3],
    pub failures: Vec<String>,
    pub failure_count: usize,
}

struct PathSample {
    l: f64,
    ratios: [f64; 3],
    points: Vec<f64>,
}

fn random_endpoint(rng: &mut ChaCha8Rng, b: &[(f64, f64)]) -> Vec<f64> {
    b.iter().map(|&(lo, hi)| rng.gen_range(lo..hi)).collect()
}

/// Scores L over a seeded ensemble of perturbed chords.
pub fn audit_l(st: &GodelSpacetime, cfg: &AuditConfig) -> Result<EnsembleAudit> {
    cfg.validate(st)?;
    let (p_box, q_box) = match &cfg.endpoint_boxes {
        Some((bp, bq)) => (bp.as_slice(), bq.as_slice()),
        None => (cfg.region.as_slice(), cfg.region.as_slice()),
    };
    let results: Vec<(usize, std::result::Result<PathSample, String>)> = (0..cfg.path_samples)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(
                cfg.seed
                    .wrapping_add((i as u64 + 1).wrapping_mul(SEED_STRIDE)),
            );
            let p = random_endpoint(&mut rng, p_box);
            let q = random_endpoint(&mut rng, q_box);
            let sample = DiscretePath::perturbed_chord(
                &p,
                &q,
                cfg.path_n,
                cfg.bump_modes,
                cfg.bump_amp,
                &mut rng,
            )
            .and_then(|path| {
                let pi = path_integrals(st, &path)?;
                Ok(PathSample {
                    l: pi.l,
                    ratios: [
                        (pi.a / pi.l).abs(),
                        (pi.b / pi.l).abs(),
                        (pi.c / pi.l).abs(),
                    ],
                    points: path.values().to_vec(),
                })
            })
            .map_err(|e| format!("path {i}: {e}"));
            (i, sample)
        })
        .collect();

    let mut audit = EnsembleAudit {
        paths: cfg.path_samples,
        l_min: f64::INFINITY,
        l_max: f64::NEG_INFINITY,
        min_abs_l: f64::INFINITY,
        nu: None,
        mixed_signs: false,
        positive_witness: None,
        negative_witness: None,
        ratio_bounds: [0.0; 3],
        failures: Vec::new(),
        failure_count: 0,
    };
    let mut scored = 0usize;
    for (i, res) in results {
        match res {
            Ok(s) => {
                scored += 1;
                audit.l_min = audit.l_min.min(s.l);
                audit.l_max = audit.l_max.max(s.l);
                audit.min_abs_l = audit.min_abs_l.min(s.l.abs());
                for k in 0..3 {
                    audit.ratio_bounds[k] = audit.ratio_bounds[k].max(s.ratios[k]);
                }
                if s.l > 0.0 && audit.positive_witness.is_none() {
                    audit.positive_witness = Some(PathWitness {
                        index: i,
                        l: s.l,
                        points: s.points,
                    });
                } else if s.l < 0.0 && audit.negative_witness.is_none() {
                    audit.negative_witness = Some(PathWitness {
                        index: i,
                        l: s.l,
                        points: s.points,
                    });
                }
            }
            Err(msg) => {
                audit.failure_count += 1;
                if audit.failures.len() < WITNESS_CAP {
                    audit.failures.push(msg);
                }
            }
        }
    }
    if scored > 0 {
        audit.mixed_signs = audit.l_min < 0.0 && audit.l_max > 0.0;
        if !audit.mixed_signs {
            audit.nu = Some(audit.min_abs_l);
        }
    } else {
        audit.l_min = f64::NAN;
        audit.l_max = f64::NAN;
        audit.min_abs_l = f64::NAN;
    }
    Ok(audit)
}

/// One fitted bound value <= lambda d^2 + k, tight on the sample set.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct Envelope {
    pub lambda: f64,
    pub k: f64,
    pub samples: usize,
    pub d2_mean: f64,
    pub field_max: f64,
}

/// Quadratic-growth audit results.
#[derive(Clone, Debug, Serialize)]
pub struct GrowthAudit {
    /// "gamma" for the comparison field H / (A - C), "beta" for the static
    /// embedding's warp factor.
    pub field: String,
    pub skipped: Option<String>,
    pub envelope: Option<Envelope>,
    /// Same fit on the region shrunk by half about the base point.
    pub half_envelope: Option<Envelope>,
    /// Envelope slope keeps growing as the region widens.
    pub super_quadratic: bool,
    pub dropped_samples: usize,
}

/// Smallest (lambda, k) on the grid with field <= lambda d^2 + k everywhere,
/// scored by lambda * mean(d^2) + k; ties go to the smaller lambda.
fn fit_envelope(pairs: &[(f64, f64)]) -> Option<Envelope> {
    if pairs.is_empty() {
        return None;
    }
    let d2: Vec<f64> = pairs.iter().map(|&(_, d)| d * d).collect();
    let d2_mean = d2.iter().sum::<f64>() / d2.len() as f64;
    let field_max = pairs
        .iter()
        .map(|&(v, _)| v)
        .fold(f64::NEG_INFINITY, f64::max);
    let mut grid = Vec::with_capacity(201);
    grid.push(0.0);
    for i in 0..200 {
        grid.push(10f64.powf(-6.0 + 12.0 * i as f64 / 199.0));
    }
    let mut best: Option<(f64, f64, f64)> = None;
    for &lambda in &grid {
        let k = pairs
            .iter()
            .zip(&d2)
            .map(|(&(v, _), &dd)| v - lambda * dd)
            .fold(f64::NEG_INFINITY, f64::max);
        let objective = lambda * d2_mean + k;
        if best.is_none_or(|(obj, _, _)| objective < obj) {
            best = Some((objective, lambda, k));
        }
    }
    let (_, lambda, k) = best?;
    Some(Envelope {
        lambda,
        k,
        samples: pairs.len(),
        d2_mean,
        field_max,
    })
}

/// Shrinks `region` by `scale` about `center` (componentwise).
fn scaled_region(region: &[(f64, f64)], center: &[f64], scale: f64) -> Region {
    region
        .iter()
        .zip(center)
        .map(|(&(lo, hi), &c)| (c + scale * (lo - c), c + scale * (hi - c)))
        .collect()
}

/// Squared distances from `xbar` to each sample: chart Euclidean on an
/// identity base, shortest-path over a tensor mesh with base-metric edge
/// lengths otherwise (an approximation, biased slightly long by the
/// 8-neighborhood).
fn growth_pairs<F>(
    st: &GodelSpacetime,
    region: &[(f64, f64)],
    xbar: &[f64],
    count: usize,
    seed: u64,
    field: F,
) -> Result<(Vec<(f64, f64)>, usize)>
where
    F: Fn(&GodelSpacetime, &[f64]) -> Result<f64>,
{
    let mut pairs = Vec::new();
    let mut dropped = 0usize;
    if st.base().is_identity() {
        for x in sample_points(region, count, seed)? {
            let d = x
                .iter()
                .zip(xbar)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            match field(st, &x) {
                Ok(v) => pairs.push((v, d)),
                Err(_) => dropped += 1,
            }
        }
    } else {
        let (nodes, dist) = mesh_distances(st, region, xbar)?;
        for (x, d) in nodes.iter().zip(&dist) {
            if !d.is_finite() {
                dropped += 1;
                continue;
            }
            match field(st, x) {
                Ok(v) => pairs.push((v, *d)),
                Err(_) => dropped += 1,
            }
        }
    }
    Ok((pairs, dropped))
}

/// Tensor-grid mesh over `region` with Dijkstra distances from the node
/// nearest `xbar`; edges connect the full 3^dim - 1 neighborhood, weighted
/// by the base-metric length of the straight segment at its midpoint.
fn mesh_distances(
    st: &GodelSpacetime,
    region: &[(f64, f64)],
    xbar: &[f64],
) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
    let dim = region.len();
    let res = ((2048f64).powf(1.0 / dim as f64) as usize).clamp(5, 33);
    let mut nodes = Vec::with_capacity(res.pow(dim as u32));
    let mut idx = vec![0usize; dim];
    loop {
        let x: Vec<f64> = (0..dim)
            .map(|d| {
                let (lo, hi) = region[d];
                lo + (hi - lo) * idx[d] as f64 / (res - 1) as f64
            })
            .collect();
        nodes.push(x);
        let mut d = 0;
        loop {
            if d == dim {
                let base = st.base();
                let n = nodes.len();
                let mut dist = vec![f64::INFINITY; n];
                let source = nearest_node(&nodes, xbar);
                dist[source] = 0.0;
                let mut heap = std::collections::BinaryHeap::new();
                heap.push(HeapEntry {
                    dist: 0.0,
                    node: source,
                });
                let strides: Vec<usize> = (0..dim)
                    .map(|k| res.pow((dim - 1 - k) as u32))
                    .collect();
                while let Some(HeapEntry { dist: du, node: u }) = heap.pop() {
                    if du > dist[u] {
                        continue;
                    }
                    for v in neighbors(u, dim, res, &strides) {
                        let w = match edge_length(base, &nodes[u], &nodes[v]) {
                            Ok(w) => w,
                            Err(_) => continue,
                        };
                        let alt = du + w;
                        if alt < dist[v] {
                            dist[v] = alt;
                            heap.push(HeapEntry { dist: alt, node: v });
                        }
                    }
                }
                return Ok((nodes, dist));
            }
            idx[d] += 1;
            if idx[d] < res {
                break;
            }
            idx[d] = 0;
            d += 1;
        }
    }
}

fn nearest_node(nodes: &[Vec<f64>], x: &[f64]) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (i, n) in nodes.iter().enumerate() {
        let d = n.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
        if d < best_d {
            best_d = d;
            best = i;
        }
    }
    best
}

fn neighbors(u: usize, dim: usize, res: usize, strides: &[usize]) -> Vec<usize> {
    // Decode the multi-index, then enumerate all nonzero offsets in
    // {-1, 0, 1}^dim that stay inside the grid.
    let mut coord = vec![0usize; dim];
    let mut rem = u;
    for k in 0..dim {
        coord[k] = rem / strides[k];
        rem %= strides[k];
    }
    let mut out = Vec::with_capacity(3usize.pow(dim as u32) - 1);
    let mut offset = vec![-1i64; dim];
    'outer: loop {
        if offset.iter().any(|&o| o != 0) {
            let mut v = 0usize;
            let mut ok = true;
            for k in 0..dim {
                let c = coord[k] as i64 + offset[k];
                if c < 0 || c >= res as i64 {
                    ok = false;
                    break;
                }
                v += c as usize * strides[k];
            }
            if ok {
                out.push(v);
            }
        }
        let mut d = 0;
        loop {
            if d == dim {
                break 'outer;
            }
            offset[d] += 1;
            if offset[d] <= 1 {
                break;
            }
            offset[d] = -1;
            d += 1;
        }
    }
    out
}

fn edge_length(
    base: &crate::spacetime::RiemannianBase,
    a: &[f64],
    b: &[f64],
) -> Result<f64> {
    let mid: Vec<f64> = a.iter().zip(b).map(|(x, y)| 0.5 * (x + y)).collect();
    let delta: Vec<f64> = b.iter().zip(a).map(|(x, y)| x - y).collect();
    Ok(base.inner(&mid, &delta, &delta)?.max(0.0).sqrt())
}

#[derive(PartialEq)]
struct HeapEntry {
    dist: f64,
    node: usize,
}

impl Eq for HeapEntry {}

impl Ord for HeapEntry {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        // Min-heap on distance via reversed comparison; node index breaks
        // ties deterministically.
        other
            .dist
            .total_cmp(&self.dist)
            .then_with(|| other.node.cmp(&self.node))
    }
}

impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

/// Fits the quadratic-growth envelope on the full and half-sized region.
///
/// The comparison field gamma = H / (A - C) needs a uniform sign of A - C;
/// when the pointwise sweep cannot certify that, the audit records the skip
/// reason instead. The static embedding is audited through beta = C, whose
/// growth is the actual constraint there.
pub fn audit_gamma_growth(st: &GodelSpacetime, cfg: &AuditConfig) -> Result<GrowthAudit> {
    cfg.validate(st)?;
    let xbar = cfg.base_point_or_center();
    let is_static = *st.kind() == PresetKind::StaticEmbed;
    let field_name = if is_static { "beta" } else { "gamma" };
    let mut audit = GrowthAudit {
        field: field_name.into(),
        skipped: None,
        envelope: None,
        half_envelope: None,
        super_quadratic: false,
        dropped_samples: 0,
    };
    if !is_static {
        let pw = audit_pointwise(st, cfg)?;
        let one_signed = pw.diff_zero == 0
            && (pw.diff_positive == 0) != (pw.diff_negative == 0)
            && pw.h_failure_count == 0;
        if !one_signed {
            audit.skipped = Some(format!(
                "A - C is not one-signed on the region (positive {}, negative {}, zero {}, failures {})",
                pw.diff_positive, pw.diff_negative, pw.diff_zero, pw.h_failure_count
            ));
            return Ok(audit);
        }
    }
    let field = move |st: &GodelSpacetime, x: &[f64]| -> Result<f64> {
        if is_static {
            Ok(st.coefficients(x)?.2)
        } else {
            st.gamma(x)
        }
    };
    let (pairs, dropped) =
        growth_pairs(st, &cfg.region, &xbar, cfg.point_samples, cfg.seed, field)?;
    let half_region = scaled_region(&cfg.region, &xbar, 0.5);
    let (half_pairs, half_dropped) = growth_pairs(
        st,
        &half_region,
        &xbar,
        cfg.point_samples,
        cfg.seed,
        field,
    )?;
    audit.dropped_samples = dropped + half_dropped;
    audit.envelope = fit_envelope(&pairs);
    audit.half_envelope = fit_envelope(&half_pairs);
    if let (Some(full), Some(half)) = (audit.envelope, audit.half_envelope) {
        audit.super_quadratic = full.lambda > LAMBDA_FLOOR && full.lambda > 4.0 * half.lambda;
    }
    Ok(audit)
}

/// Which connectedness guarantee a verdict refers to: the bounded-ratio
/// form, the L > 0 form, or the L < 0 form.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Claim {
    General,
    PositiveL,
    NegativeL,
}

impl std::fmt::Display for Claim {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Claim::General => "general",
            Claim::PositiveL => "positive-L",
            Claim::NegativeL => "negative-L",
        };
        f.write_str(s)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Supported,
    Violated,
    Inconclusive,
}

impl std::fmt::Display for Status {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Status::Supported => "supported",
            Status::Violated => "violated",
            Status::Inconclusive => "inconclusive",
        };
        f.write_str(s)
    }
}

/// One evidence-carrying verdict. Sampling never proves the hypotheses, so
/// `Supported` means "no counterexample found, margins attached".
#[derive(Clone, Debug, Serialize)]
pub struct Verdict {
    pub claim: Claim,
    pub status: Status,
    pub evidence: Vec<String>,
}

impl Verdict {
    fn new(claim: Claim) -> Self {
        Verdict {
            claim,
            status: Status::Inconclusive,
            evidence: Vec::new(),
        }
    }
}

/// Everything the audit produced, verdicts last.
#[derive(Clone, Debug, Serialize)]
pub struct AuditReport {
    pub config: AuditConfig,
    pub base_complete: bool,
    pub pointwise: PointwiseAudit,
    pub ensemble: EnsembleAudit,
    pub growth: GrowthAudit,
    pub verdicts: Vec<Verdict>,
}

impl AuditReport {
    pub fn verdict(&self, claim: Claim) -> &Verdict {
        self.verdicts
            .iter()
            .find(|v| v.claim == claim)
            .expect("all claims are always present")
    }
}

fn fmt_point(x: &[f64]) -> String {
    let coords: Vec<String> = x.iter().map(|v| format!("{v:.6}")).collect();
    format!("({})", coords.join(", "))
}

/// Combines the component audits into the three verdicts.
pub fn verdicts(
    base_complete: bool,
    pointwise: &PointwiseAudit,
    ensemble: &EnsembleAudit,
    growth: &GrowthAudit,
) -> Vec<Verdict> {
    let scored = ensemble.paths - ensemble.failure_count;
    let starved = scored == 0 || ensemble.failure_count * 2 > ensemble.paths;
    let metric_witness = pointwise.h_failures.first();

    let mut general = Verdict::new(Claim::General);
    if let Some(w) = metric_witness {
        general.status = Status::Violated;
        general
            .evidence
            .push(format!("metric degenerates at {}: {}", fmt_point(&w.x), w.note));
    } else if !base_complete {
        general.status = Status::Violated;
        general
            .evidence
            .push("the base metric is declared incomplete".into());
    } else if starved {
        general.status = Status::Inconclusive;
        general.evidence.push(format!(
            "only {scored} of {} paths could be scored",
            ensemble.paths
        ));
    } else if ensemble.mixed_signs {
        general.status = Status::Violated;
        if let (Some(p), Some(n)) = (&ensemble.positive_witness, &ensemble.negative_witness) {
            general.evidence.push(format!(
                "L changes sign across the ensemble (path {} has L = {:.6e}, path {} has L = {:.6e}), so a path with L = 0 exists between them",
                p.index, p.l, n.index, n.l
            ));
        }
    } else if ensemble.min_abs_l <= L_MARGIN {
        general.status = Status::Inconclusive;
        general.evidence.push(format!(
            "min |L| = {:.3e} is too close to zero to support a uniform bound",
            ensemble.min_abs_l
        ));
    } else {
        general.status = Status::Supported;
        general.evidence.push(format!(
            "min |L| = {:.6e} over {scored} paths; ratio bounds |a/L| <= {:.6e}, |b/L| <= {:.6e}, |c/L| <= {:.6e}",
            ensemble.min_abs_l,
            ensemble.ratio_bounds[0],
            ensemble.ratio_bounds[1],
            ensemble.ratio_bounds[2]
        ));
    }

    let mut positive = Verdict::new(Claim::PositiveL);
    if let Some(w) = metric_witness {
        positive.status = Status::Violated;
        positive
            .evidence
            .push(format!("metric degenerates at {}: {}", fmt_point(&w.x), w.note));
    } else if let Some(w) = &pointwise.negative_witness {
        positive.status = Status::Violated;
        positive.evidence.push(format!(
            "A - C = {:.6e} < 0 at {} ({} of {} samples are negative)",
            w.value,
            fmt_point(&w.x),
            pointwise.diff_negative,
            pointwise.samples
        ));
    } else if let Some(w) = &pointwise.zero_witness {
        positive.status = Status::Violated;
        positive.evidence.push(format!(
            "A - C vanishes at {} and the hypothesis needs strict positivity",
            fmt_point(&w.x)
        ));
    } else if let Some(w) = &ensemble.negative_witness {
        positive.status = Status::Violated;
        positive.evidence.push(format!(
            "path {} has L = {:.6e} <= 0",
            w.index, w.l
        ));
    } else if starved {
        positive.status = Status::Inconclusive;
        positive.evidence.push(format!(
            "only {scored} of {} paths could be scored",
            ensemble.paths
        ));
    } else if growth.super_quadratic {
        positive.status = Status::Violated;
        let (full, half) = (growth.envelope.unwrap(), growth.half_envelope.unwrap());
        positive.evidence.push(format!(
            "{} grows faster than quadratically: envelope slope {:.3e} on the full region vs {:.3e} on the half region",
            growth.field, full.lambda, half.lambda
        ));
    } else if growth.envelope.is_none() && growth.skipped.is_none() {
        positive.status = Status::Inconclusive;
        positive
            .evidence
            .push("no growth envelope could be fitted".into());
    } else if ensemble.min_abs_l <= L_MARGIN {
        positive.status = Status::Inconclusive;
        positive.evidence.push(format!(
            "min L = {:.3e} is too close to zero for an empirical margin",
            ensemble.l_min
        ));
    } else {
        positive.status = Status::Supported;
        let mut e = format!(
            "A - C > 0 at all {} samples; L >= {:.6e} over {scored} paths",
            pointwise.samples, ensemble.l_min
        );
        if let Some(env) = growth.envelope {
            e.push_str(&format!(
                "; {} <= {:.6e} d^2 + {:.6e} on the region",
                growth.field, env.lambda, env.k
            ));
        }
        positive.evidence.push(e);
    }

    let mut negative = Verdict::new(Claim::NegativeL);
    if let Some(w) = metric_witness {
        negative.status = Status::Violated;
        negative
            .evidence
            .push(format!("metric degenerates at {}: {}", fmt_point(&w.x), w.note));
    } else if let Some(w) = &pointwise.positive_witness {
        negative.status = Status::Violated;
        negative.evidence.push(format!(
            "A - C = {:.6e} > 0 at {} ({} of {} samples are positive)",
            w.value,
            fmt_point(&w.x),
            pointwise.diff_positive,
            pointwise.samples
        ));
    } else if let Some(w) = &pointwise.zero_witness {
        negative.status = Status::Violated;
        negative.evidence.push(format!(
            "A - C vanishes at {} and the hypothesis needs strict negativity",
            fmt_point(&w.x)
        ));
    } else if let Some(w) = &ensemble.positive_witness {
        negative.status = Status::Violated;
        negative.evidence.push(format!(
            "path {} has L = {:.6e} >= 0",
            w.index, w.l
        ));
    } else if starved {
        negative.status = Status::Inconclusive;
        negative.evidence.push(format!(
            "only {scored} of {} paths could be scored",
            ensemble.paths
        ));
    } else if ensemble.min_abs_l <= L_MARGIN {
        negative.status = Status::Inconclusive;
        negative.evidence.push(format!(
            "max L = {:.3e} is too close to zero for an empirical margin",
            ensemble.l_max
        ));
    } else {
        negative.status = Status::Supported;
        negative.evidence.push(format!(
            "A - C < 0 at all {} samples; L <= {:.6e} over {scored} paths",
            pointwise.samples, ensemble.l_max
        ));
    }

    vec![general, positive, negative]
}

/// Runs all three audits and combines them.
pub fn run_audit(st: &GodelSpacetime, cfg: &AuditConfig) -> Result<AuditReport> {
    cfg.validate(st)?;
    let pointwise = audit_pointwise(st, cfg)?;
    let ensemble = audit_l(st, cfg)?;
    let growth = audit_gamma_growth(st, cfg)?;
    let base_complete = st.base().is_complete();
    let verdicts = verdicts(base_complete, &pointwise, &ensemble, &growth);
    Ok(AuditReport {
        config: cfg.clone(),
        base_complete,
        pointwise,
        ensemble,
        growth,
        verdicts,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spacetime::Preset;
    use approx::assert_relative_eq;
    use std::collections::HashMap;

    fn small_cfg(region: Vec<(f64, f64)>) -> AuditConfig {
        let mut cfg = AuditConfig::new(region);
        cfg.point_samples = 2_000;
        cfg.path_samples = 200;
        cfg.path_n = 40;
        cfg
    }

    #[test]
    fn flat_preset_gets_the_expected_verdict_pattern() {
        let st = GodelSpacetime::preset(Preset::Flat).unwrap();
        let cfg = small_cfg(vec![(-1.0, 1.0), (-1.0, 1.0)]);
        let report = run_audit(&st, &cfg).unwrap();
        // A = C = 1 everywhere: every pointwise sample sits on the boundary.
        assert_eq!(report.pointwise.diff_zero, report.pointwise.samples);
        assert_relative_eq!(report.pointwise.h_min.unwrap(), 1.0, epsilon = 1e-12);
        // L = 1 for every path, with unit ratio bounds.
        assert_relative_eq!(report.ensemble.l_min, 1.0, epsilon = 1e-12);
        assert_relative_eq!(report.ensemble.l_max, 1.0, epsilon = 1e-12);
        assert_eq!(report.ensemble.nu, Some(report.ensemble.min_abs_l));
        assert_relative_eq!(report.ensemble.ratio_bounds[0], 1.0, epsilon = 1e-12);
        assert!(report.ensemble.ratio_bounds[1].abs() < 1e-15);
        assert_relative_eq!(report.ensemble.ratio_bounds[2], 1.0, epsilon = 1e-12);
        assert_eq!(report.verdict(Claim::General).status, Status::Supported);
        // Strict sign hypotheses fail on the boundary, with a witness each.
        let pos = report.verdict(Claim::PositiveL);
        assert_eq!(pos.status, Status::Violated);
        assert!(!pos.evidence.is_empty());
        assert!(report.pointwise.zero_witness.is_some());
        assert_eq!(report.verdict(Claim::NegativeL).status, Status::Violated);
        // The comparison field is undefined when A = C, so the fit is skipped.
        assert!(report.growth.skipped.is_some());
    }

    #[test]
    fn godel_preset_mixes_l_signs_on_a_wide_region() {
        let st = GodelSpacetime::preset(Preset::Godel { omega: 1.0 }).unwrap();
        let mut cfg = small_cfg(vec![(-3.0, 3.0), (-1.0, 1.0)]);
        cfg.path_samples = 300;
        let report = run_audit(&st, &cfg).unwrap();
        // A - C = -exp(2 sqrt2 x1)/2 - 1 < 0 at every sample.
        assert_eq!(report.pointwise.diff_negative, report.pointwise.samples);
        let w = report.pointwise.negative_witness.as_ref().unwrap();
        let (a, _, c) = st.coefficients(&w.x).unwrap();
        assert_eq!(a - c, w.value);
        assert!(w.value < 0.0);
        // Wide endpoint spread drives L through both signs.
        assert!(report.ensemble.mixed_signs, "{:?}", report.ensemble);
        assert_eq!(report.verdict(Claim::General).status, Status::Violated);
        assert_eq!(report.verdict(Claim::PositiveL).status, Status::Violated);
        assert_eq!(report.verdict(Claim::NegativeL).status, Status::Violated);
        // Witness paths re-evaluate to their stored L exactly.
        for witness in [
            report.ensemble.positive_witness.as_ref().unwrap(),
            report.ensemble.negative_witness.as_ref().unwrap(),
        ] {
            let path = DiscretePath::from_points(2, witness.points.clone()).unwrap();
            let pi = path_integrals(&st, &path).unwrap();
            assert_eq!(pi.l, witness.l);
        }
    }

    #[test]
    fn constant_coefficient_preset_supports_the_positive_claim() {
        // A = 2, B = 0, C = 1: gamma = 2 everywhere, L = 1/2 per path.
        let st = GodelSpacetime::preset(Preset::CaseI).unwrap();
        let cfg = small_cfg(vec![(-1.0, 1.0), (-1.0, 1.0)]);
        let report = run_audit(&st, &cfg).unwrap();
        assert_eq!(report.pointwise.diff_positive, report.pointwise.samples);
        assert_relative_eq!(report.ensemble.l_min, 0.5, epsilon = 1e-12);
        assert_relative_eq!(report.ensemble.l_max, 0.5, epsilon = 1e-12);
        let env = report.growth.envelope.unwrap();
        assert_eq!(env.lambda, 0.0);
        assert_relative_eq!(env.k, 2.0, epsilon = 1e-12);
        assert!(!report.growth.super_quadratic);
        assert_eq!(report.verdict(Claim::General).status, Status::Supported);
        assert_eq!(report.verdict(Claim::PositiveL).status, Status::Supported);
        assert_eq!(report.verdict(Claim::NegativeL).status, Status::Violated);
    }

    #[test]
    fn bounded_gamma_fits_a_flat_envelope() {
        // A = 2 + x1^2, B = 0, C = 1: gamma = (2 + x1^2)/(1 + x1^2) <= 2,
        // with the maximum at the region center.
        let params = HashMap::new();
        let st = GodelSpacetime::new(
            crate::spacetime::RiemannianBase::flat(2),
            crate::exprdsl::parse("2+x1^2", &params, 2).unwrap(),
            crate::exprdsl::parse("0", &params, 2).unwrap(),
            crate::exprdsl::parse("1", &params, 2).unwrap(),
        )
        .unwrap();
        let cfg = small_cfg(vec![(-2.0, 2.0), (-0.5, 0.5)]);
        let growth = audit_gamma_growth(&st, &cfg).unwrap();
        let env = growth.envelope.unwrap();
        assert_eq!(env.lambda, 0.0);
        assert!(env.k <= 2.0 + 1e-12 && env.k > 1.9, "k = {}", env.k);
        assert!(!growth.super_quadratic);
    }

    #[test]
    fn separated_endpoints_support_the_negative_claim() {
        let st = GodelSpacetime::preset(Preset::CaseIV { eps: 0.05 }).unwrap();
        let mut cfg = small_cfg(vec![(-2.0, 2.0), (-0.5, 0.5)]);
        cfg.endpoint_boxes = Some((
            vec![(-2.0, -1.5), (-0.5, 0.5)],
            vec![(1.5, 2.0), (-0.5, 0.5)],
        ));
        let report = run_audit(&st, &cfg).unwrap();
        // A - C = -exp(-2 x1) - 1 < 0 everywhere.
        assert_eq!(report.pointwise.diff_negative, report.pointwise.samples);
        assert!(report.ensemble.l_max < 0.0, "{:?}", report.ensemble);
        let neg = report.verdict(Claim::NegativeL);
        assert_eq!(neg.status, Status::Supported, "{:?}", neg.evidence);
        assert_eq!(report.verdict(Claim::PositiveL).status, Status::Violated);
        assert_eq!(report.verdict(Claim::General).status, Status::Supported);
    }

    #[test]
    fn super_quadratic_warp_factor_is_flagged() {
        let st = GodelSpacetime::preset(Preset::StaticEmbed {
            beta: "exp(1.1*x1^2)".into(),
            dim: 2,
            params: HashMap::new(),
        })
        .unwrap();
        let cfg = small_cfg(vec![(-2.0, 2.0), (-0.5, 0.5)]);
        let growth = audit_gamma_growth(&st, &cfg).unwrap();
        assert_eq!(growth.field, "beta");
        let (full, half) = (growth.envelope.unwrap(), growth.half_envelope.unwrap());
        assert!(
            growth.super_quadratic,
            "full lambda {} half lambda {}",
            full.lambda, half.lambda
        );
        assert!(full.lambda > 4.0 * half.lambda);
        // Exactly quadratic growth is not flagged.
        let st = GodelSpacetime::preset(Preset::StaticEmbed {
            beta: "1+x1^2".into(),
            dim: 2,
            params: HashMap::new(),
        })
        .unwrap();
        let growth = audit_gamma_growth(&st, &cfg).unwrap();
        assert!(!growth.super_quadratic);
        let env = growth.envelope.unwrap();
        assert!(env.lambda < 2.0, "lambda = {}", env.lambda);
    }

    #[test]
    fn envelope_fit_covers_every_sample() {
        // Synthetic field v = 3 d^2 + 1 with noise pulling values down only:
        // the fitted envelope must still dominate every sample.
        let pairs: Vec<(f64, f64)> = (0..400)
            .map(|i| {
                let d = i as f64 / 100.0;
                let dip = 0.3 * ((i * 7919) % 100) as f64 / 100.0;
                (3.0 * d * d + 1.0 - dip, d)
            })
            .collect();
        let env = fit_envelope(&pairs).unwrap();
        for &(v, d) in &pairs {
            assert!(
                v <= env.lambda * d * d + env.k + 1e-12,
                "sample ({v}, {d}) escapes the envelope"
            );
        }
        assert_relative_eq!(env.lambda, 3.0, max_relative = 0.1);
        assert!(fit_envelope(&[]).is_none());
    }

    #[test]
    fn mesh_distances_respect_an_anisotropic_base() {
        // Constant base diag(4, 1): distance from the center to a corner of
        // [0,1]^2 is sqrt(4 * 0.25 + 0.25). The 8-neighborhood overestimates
        // slightly, so allow a one-sided 15% band.
        let params = HashMap::new();
        let base = crate::spacetime::RiemannianBase::from_upper_triangle(
            2,
            vec![
                crate::exprdsl::parse("4", &params, 2).unwrap(),
                crate::exprdsl::parse("0", &params, 2).unwrap(),
                crate::exprdsl::parse("1", &params, 2).unwrap(),
            ],
            true,
        )
        .unwrap();
        let st = GodelSpacetime::new(
            base,
            crate::exprdsl::parse("2", &params, 2).unwrap(),
            crate::exprdsl::parse("0", &params, 2).unwrap(),
            crate::exprdsl::parse("1", &params, 2).unwrap(),
        )
        .unwrap();
        let region = vec![(0.0, 1.0), (0.0, 1.0)];
        let xbar = vec![0.5, 0.5];
        let (nodes, dist) = mesh_distances(&st, &region, &xbar).unwrap();
        let corner = nearest_node(&nodes, &[1.0, 1.0]);
        let exact = (4.0 * 0.25 + 0.25f64).sqrt();
        assert!(
            dist[corner] >= exact - 1e-9 && dist[corner] <= 1.15 * exact,
            "corner distance {} vs exact {exact}",
            dist[corner]
        );
        // Pure x-direction edge: metric weight 2 per unit.
        let east = nearest_node(&nodes, &[1.0, 0.5]);
        assert_relative_eq!(dist[east], 1.0, max_relative = 0.08);
    }

    #[test]
    fn audit_is_deterministic_under_a_fixed_seed() {
        let st = GodelSpacetime::preset(Preset::Godel { omega: 0.8 }).unwrap();
        let mut cfg = small_cfg(vec![(-1.5, 1.5), (-1.0, 1.0)]);
        cfg.seed = 7;
        cfg.path_samples = 120;
        let a = serde_json::to_string(&run_audit(&st, &cfg).unwrap()).unwrap();
        let b = serde_json::to_string(&run_audit(&st, &cfg).unwrap()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn bad_configs_are_rejected() {
        let st = GodelSpacetime::preset(Preset::Flat).unwrap();
        let mut cfg = AuditConfig::new(vec![(0.0, 1.0)]);
        assert!(matches!(
            cfg.validate(&st),
            Err(Error::DimMismatch { .. })
        ));
        cfg = AuditConfig::new(vec![(0.0, 1.0), (1.0, 1.0)]);
        assert!(matches!(
            cfg.validate(&st),
            Err(Error::InvalidParameter(_))
        ));
        cfg = AuditConfig::new(vec![(0.0, 1.0), (0.0, 1.0)]);
        cfg.point_samples = 0;
        assert!(matches!(
            cfg.validate(&st),
            Err(Error::InvalidParameter(_))
        ));
        cfg = AuditConfig::new(vec![(0.0, 1.0), (0.0, 1.0)]);
        cfg.endpoint_boxes = Some((vec![(0.0, 0.5)], vec![(0.5, 1.0), (0.0, 1.0)]));
        assert!(matches!(
            cfg.validate(&st),
            Err(Error::DimMismatch { .. })
        ));
        cfg = AuditConfig::new(vec![(0.0, 1.0), (0.0, 1.0)]);
        cfg.base_point = Some(vec![0.5]);
        assert!(matches!(
            cfg.validate(&st),
            Err(Error::DimMismatch { .. })
        ));
    }
}
