//! Discrete paths on the base manifold and the quadrature layer.
//!
//! A path is N+1 nodes on the uniform grid s_i = i/N with fixed endpoints.
//! All integrals use the composite midpoint rule: coefficients are read at
//! segment midpoints, velocities are forward differences, h = 1/N. The rule
//! is second order, so every derived quantity converges at O(h^2).
//!
//! The reduced path integrals are
//!
//! ```text
//!   a = int A/H ds,  b = int B/H ds,  c = int C/H ds,  L = b^2 + a c,
//! ```
//!
//! with cumulative partials so fiber reconstruction can reuse exactly the
//! same sums (the endpoint closure is then structural, not approximate).

use std::io::{BufRead, Write};

use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::spacetime::GodelSpacetime;

/// Spatial path: N+1 nodes of dimension `dim`, endpoints immutable.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DiscretePath {
    dim: usize,
    pts: Vec<f64>,
}

impl DiscretePath {
    pub fn from_points(dim: usize, pts: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidParameter("path dimension must be >= 1".into()));
        }
        if !pts.len().is_multiple_of(dim) || pts.len() / dim < 3 {
            return Err(Error::GridMismatch(format!(
                "need at least 3 nodes of dimension {dim}, got {} values",
                pts.len()
            )));
        }
        if pts.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("path contains non-finite values".into()));
        }
        Ok(DiscretePath { dim, pts })
    }

    /// Straight segment from `x_p` to `x_q` with n segments. The lerp form
    /// (1-t) p + t q is exact at both endpoints.
    pub fn chord(x_p: &[f64], x_q: &[f64], n: usize) -> Result<Self> {
        if x_p.len() != x_q.len() {
            return Err(Error::DimMismatch {
                expected: x_p.len(),
                got: x_q.len(),
            });
        }
        if n < 2 {
            return Err(Error::InvalidParameter("need at least 2 segments".into()));
        }
        let dim = x_p.len();
        let mut pts = Vec::with_capacity((n + 1) * dim);
        for i in 0..=n {
            let t = i as f64 / n as f64;
            for k in 0..dim {
                pts.push((1.0 - t) * x_p[k] + t * x_q[k]);
            }
        }
        DiscretePath::from_points(dim, pts)
    }

    /// Chord plus seeded sine bumps on the interior nodes. Mode k gets an
    /// amplitude drawn uniformly from [-amp, amp] per coordinate; endpoints
    /// are never touched.
    pub fn perturbed_chord<R: Rng>(
        x_p: &[f64],
        x_q: &[f64],
        n: usize,
        modes: usize,
        amp: f64,
        rng: &mut R,
    ) -> Result<Self> {
        let mut path = DiscretePath::chord(x_p, x_q, n)?;
        let dim = path.dim;
        let coefs: Vec<f64> = (0..modes * dim)
            .map(|_| rng.gen_range(-amp..=amp))
            .collect();
        for i in 1..n {
            let t = i as f64 / n as f64;
            for k in 0..dim {
                let mut bump = 0.0;
                for m in 0..modes {
                    bump += coefs[m * dim + k] * ((m + 1) as f64 * std::f64::consts::PI * t).sin();
                }
                path.pts[i * dim + k] += bump;
            }
        }
        Ok(path)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_segments(&self) -> usize {
        self.pts.len() / self.dim - 1
    }

    pub fn n_nodes(&self) -> usize {
        self.pts.len() / self.dim
    }

    pub fn h(&self) -> f64 {
        1.0 / self.n_segments() as f64
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.pts[i * self.dim..(i + 1) * self.dim]
    }

    pub fn first(&self) -> &[f64] {
        self.point(0)
    }

    pub fn last(&self) -> &[f64] {
        self.point(self.n_segments())
    }

    pub fn midpoint_into(&self, i: usize, out: &mut [f64]) {
        for ((o, a), b) in out.iter_mut().zip(self.point(i)).zip(self.point(i + 1)) {
            *o = 0.5 * (a + b);
        }
    }

    pub fn delta_into(&self, i: usize, out: &mut [f64]) {
        for ((o, a), b) in out.iter_mut().zip(self.point(i)).zip(self.point(i + 1)) {
            *o = b - a;
        }
    }

    /// New path with `step * direction` added to the interior nodes only.
    /// `direction` has one entry per node coordinate; its endpoint rows are
    /// ignored, which keeps the endpoint constraint structural.
    pub fn displaced(&self, direction: &[f64], step: f64) -> Result<Self> {
        if direction.len() != self.pts.len() {
            return Err(Error::GridMismatch(format!(
                "direction length {} does not match path ({} values)",
                direction.len(),
                self.pts.len()
            )));
        }
        let mut pts = self.pts.clone();
        let n = self.n_segments();
        for i in 1..n {
            for k in 0..self.dim {
                let idx = i * self.dim + k;
                pts[idx] += step * direction[idx];
            }
        }
        DiscretePath::from_points(self.dim, pts)
    }

    pub fn values(&self) -> &[f64] {
        &self.pts
    }
}

/// Scalar fiber component sampled on the same grid as a path.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FiberPath {
    vals: Vec<f64>,
}

impl FiberPath {
    pub fn from_values(vals: Vec<f64>) -> Result<Self> {
        if vals.len() < 3 {
            return Err(Error::GridMismatch("fiber path needs at least 3 nodes".into()));
        }
        if vals.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter(
                "fiber path contains non-finite values".into(),
            ));
        }
        Ok(FiberPath { vals })
    }

    pub fn value(&self, i: usize) -> f64 {
        self.vals[i]
    }

    pub fn values(&self) -> &[f64] {
        &self.vals
    }

    pub fn len(&self) -> usize {
        self.vals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vals.is_empty()
    }
}

/// Midpoint-rule values of the reduced integrals along one path.
///
/// `partial_*[j]` is the integral up to s = j/N; index 0 is exactly 0 and
/// index N is exactly the total (same summation, same rounding).
#[derive(Clone, Debug, Serialize)]
pub struct PathIntegrals {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub l: f64,
    pub partial_a: Vec<f64>,
    pub partial_b: Vec<f64>,
    pub partial_c: Vec<f64>,
}

/// Reduced integrals a, b, c and L = b^2 + a c along `path`.
pub fn path_integrals(st: &GodelSpacetime, path: &DiscretePath) -> Result<PathIntegrals> {
    check_dim(st, path)?;
    let n = path.n_segments();
    let h = path.h();
    let mut partial_a = vec![0.0; n + 1];
    let mut partial_b = vec![0.0; n + 1];
    let mut partial_c = vec![0.0; n + 1];
    let mut m = vec![0.0; path.dim()];
    let (mut acc_a, mut acc_b, mut acc_c) = (0.0, 0.0, 0.0);
    for i in 0..n {
        path.midpoint_into(i, &mut m);
        let (ra, rb, rc) = st.ratios(&m)?;
        acc_a += ra * h;
        acc_b += rb * h;
        acc_c += rc * h;
        partial_a[i + 1] = acc_a;
        partial_b[i + 1] = acc_b;
        partial_c[i + 1] = acc_c;
    }
    let l = acc_b * acc_b + acc_a * acc_c;
    Ok(PathIntegrals {
        a: acc_a,
        b: acc_b,
        c: acc_c,
        l,
        partial_a,
        partial_b,
        partial_c,
    })
}

/// Dirichlet energy (1/2) sum <d_i, d_i>_R(m_i) / h of the spatial path.
pub fn dirichlet_energy(st: &GodelSpacetime, path: &DiscretePath) -> Result<f64> {
    check_dim(st, path)?;
    let n = path.n_segments();
    let h = path.h();
    let dim = path.dim();
    let base = st.base();
    let mut m = vec![0.0; dim];
    let mut d = vec![0.0; dim];
    let mut acc = 0.0;
    if base.is_identity() {
        for i in 0..n {
            path.delta_into(i, &mut d);
            let q: f64 = d.iter().map(|v| v * v).sum();
            acc += q / h;
        }
    } else {
        for i in 0..n {
            path.midpoint_into(i, &mut m);
            path.delta_into(i, &mut d);
            acc += base.inner(&m, &d, &d)? / h;
        }
    }
    Ok(0.5 * acc)
}

/// Full discrete action of a spacetime curve (x, y, t):
/// (1/2) sum [ <dx,dx>_R + A dy^2 + 2 B dy dt - C dt^2 ](m_i) / h.
pub fn action(
    st: &GodelSpacetime,
    path: &DiscretePath,
    y: &FiberPath,
    t: &FiberPath,
) -> Result<f64> {
    check_dim(st, path)?;
    let n = path.n_segments();
    if y.len() != n + 1 || t.len() != n + 1 {
        return Err(Error::GridMismatch(format!(
            "fiber grids ({}, {}) do not match the path ({} nodes)",
            y.len(),
            t.len(),
            n + 1
        )));
    }
    let h = path.h();
    let dim = path.dim();
    let base = st.base();
    let mut m = vec![0.0; dim];
    let mut d = vec![0.0; dim];
    let mut acc = 0.0;
    for i in 0..n {
        path.midpoint_into(i, &mut m);
        path.delta_into(i, &mut d);
        let dx2 = if base.is_identity() {
            d.iter().map(|v| v * v).sum()
        } else {
            base.inner(&m, &d, &d)?
        };
        let (a, b, c) = st.coefficients(&m)?;
        let dy = y.value(i + 1) - y.value(i);
        let dt = t.value(i + 1) - t.value(i);
        acc += (dx2 + a * dy * dy + 2.0 * b * dy * dt - c * dt * dt) / h;
    }
    Ok(0.5 * acc)
}

fn check_dim(st: &GodelSpacetime, path: &DiscretePath) -> Result<()> {
    if st.dim() != path.dim() {
        return Err(Error::DimMismatch {
            expected: st.dim(),
            got: path.dim(),
        });
    }
    Ok(())
}

/// Writes `s,x1..xn[,y,t]` rows. Floats use the shortest representation
/// that parses back to the same bits, so a read-back is exact.
pub fn write_csv<W: Write>(
    w: &mut W,
    path: &DiscretePath,
    fibers: Option<(&FiberPath, &FiberPath)>,
    comments: &[String],
) -> Result<()> {
    let n = path.n_segments();
    if let Some((y, t)) = fibers {
        if y.len() != n + 1 || t.len() != n + 1 {
            return Err(Error::GridMismatch("fiber grids do not match the path".into()));
        }
    }
    for line in comments {
        writeln!(w, "# {line}")?;
    }
    let mut header = String::from("s");
    for k in 0..path.dim() {
        header.push_str(&format!(",x{}", k + 1));
    }
    if fibers.is_some() {
        header.push_str(",y,t");
    }
    writeln!(w, "{header}")?;
    for i in 0..=n {
        let mut row = format!("{}", i as f64 / n as f64);
        for v in path.point(i) {
            row.push_str(&format!(",{v}"));
        }
        if let Some((y, t)) = fibers {
            row.push_str(&format!(",{},{}", y.value(i), t.value(i)));
        }
        writeln!(w, "{row}")?;
    }
    Ok(())
}

/// Reads a path (and fibers when the `y,t` columns are present) written by
/// `write_csv`. Comment lines start with `#`.
pub fn read_csv<R: BufRead>(r: R) -> Result<(DiscretePath, Option<(FiberPath, FiberPath)>)> {
    let mut lines = r.lines().enumerate();
    let header = loop {
        match lines.next() {
            Some((no, line)) => {
                let line = line?;
                let trimmed = line.trim();
                if trimmed.is_empty() || trimmed.starts_with('#') {
                    continue;
                }
                break (no + 1, trimmed.to_string());
            }
            None => {
                return Err(Error::Csv {
                    line: 0,
                    msg: "missing header row".into(),
                })
            }
        }
    };
    let cols: Vec<&str> = header.1.split(',').collect();
    if cols.first() != Some(&"s") {
        return Err(Error::Csv {
            line: header.0,
            msg: "first column must be `s`".into(),
        });
    }
    let mut dim = 0;
    while dim + 1 < cols.len() && cols[dim + 1] == format!("x{}", dim + 1) {
        dim += 1;
    }
    let rest = &cols[dim + 1..];
    let fibered = match rest {
        [] => false,
        ["y", "t"] => true,
        _ => {
            return Err(Error::Csv {
                line: header.0,
                msg: format!("unrecognised columns {rest:?}"),
            })
        }
    };
    if dim == 0 {
        return Err(Error::Csv {
            line: header.0,
            msg: "no coordinate columns".into(),
        });
    }
    let mut pts = Vec::new();
    let mut ys = Vec::new();
    let mut ts = Vec::new();
    let mut svals = Vec::new();
    for (no, line) in lines {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = trimmed.split(',').collect();
        let want = 1 + dim + if fibered { 2 } else { 0 };
        if fields.len() != want {
            return Err(Error::Csv {
                line: no + 1,
                msg: format!("expected {want} fields, got {}", fields.len()),
            });
        }
        let parse = |s: &str| -> Result<f64> {
            s.trim().parse::<f64>().map_err(|_| Error::Csv {
                line: no + 1,
                msg: format!("invalid float `{s}`"),
            })
        };
        svals.push(parse(fields[0])?);
        for f in &fields[1..=dim] {
            pts.push(parse(f)?);
        }
        if fibered {
            ys.push(parse(fields[dim + 1])?);
            ts.push(parse(fields[dim + 2])?);
        }
    }
    let rows = svals.len();
    if rows < 3 {
        return Err(Error::Csv {
            line: 0,
            msg: "need at least 3 rows".into(),
        });
    }
    let n = rows - 1;
    for (i, s) in svals.iter().enumerate() {
        if (s - i as f64 / n as f64).abs() > 1e-12 {
            return Err(Error::Csv {
                line: 0,
                msg: format!("s column not uniform at row {i}: {s}"),
            });
        }
    }
    let path = DiscretePath::from_points(dim, pts)?;
    let fibers = if fibered {
        Some((FiberPath::from_values(ys)?, FiberPath::from_values(ts)?))
    } else {
        None
    };
    Ok((path, fibers))
}
