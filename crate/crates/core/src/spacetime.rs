//! Godel-type product spacetimes.
//!
//! The model is M0 x R^2 with coordinates (x, y, t), base metric
//! `<.,.>_R` on M0 and fiber block
//!
//! ```text
//!   A(x) dy^2 + 2 B(x) dy dt - C(x) dt^2,
//! ```
//!
//! Lorentzian exactly where H(x) = B^2 + A C > 0. H equals minus the
//! determinant of the fiber block, so H > 0 pins signature (n+1, 1).

use std::collections::HashMap;

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::exprdsl::{self, Expr, ValueGrad};

/// Hard floor for the Lorentzian condition: H at or below this is an error.
pub const H_FLOOR: f64 = 1e-12;

/// Riemannian base manifold: one global chart on R^n with an
/// expression-valued symmetric metric. Completeness is a caller-supplied
/// assertion; it cannot be decided from samples.
#[derive(Clone, Debug)]
pub struct RiemannianBase {
    dim: usize,
    /// Row-major n x n entries; kept symmetric by construction.
    entries: Vec<Expr>,
    identity: bool,
    complete: bool,
}

impl RiemannianBase {
    /// Flat R^n with the identity metric.
    pub fn flat(dim: usize) -> Self {
        assert!(dim >= 1, "base dimension must be at least 1");
        let mut entries = Vec::with_capacity(dim * dim);
        for i in 0..dim {
            for j in 0..dim {
                entries.push(Expr::constant(if i == j { 1.0 } else { 0.0 }, dim));
            }
        }
        RiemannianBase {
            dim,
            entries,
            identity: true,
            complete: true,
        }
    }

    /// Builds from the upper triangle (row-major, n(n+1)/2 expressions).
    pub fn from_upper_triangle(dim: usize, upper: Vec<Expr>, complete: bool) -> Result<Self> {
        if dim < 1 {
            return Err(Error::InvalidParameter(
                "base dimension must be at least 1".into(),
            ));
        }
        let expected = dim * (dim + 1) / 2;
        if upper.len() != expected {
            return Err(Error::InvalidParameter(format!(
                "upper triangle of a {dim}x{dim} metric needs {expected} entries, got {}",
                upper.len()
            )));
        }
        let mut grid: Vec<Option<Expr>> = vec![None; dim * dim];
        let mut it = upper.into_iter();
        for i in 0..dim {
            for j in i..dim {
                let e = it.next().unwrap();
                if e.dim() != dim {
                    return Err(Error::DimMismatch {
                        expected: dim,
                        got: e.dim(),
                    });
                }
                grid[i * dim + j] = Some(e.clone());
                grid[j * dim + i] = Some(e);
            }
        }
        let entries: Vec<Expr> = grid.into_iter().map(|e| e.unwrap()).collect();
        let identity = entries
            .iter()
            .enumerate()
            .all(|(k, e)| e.as_constant() == Some(if k / dim == k % dim { 1.0 } else { 0.0 }));
        Ok(RiemannianBase {
            dim,
            entries,
            identity,
            complete,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_identity(&self) -> bool {
        self.identity
    }

    pub fn is_complete(&self) -> bool {
        self.complete
    }

    pub fn metric_at(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        let n = self.dim;
        let mut g = DMatrix::zeros(n, n);
        if self.identity {
            g.fill_with_identity();
            return Ok(g);
        }
        for i in 0..n {
            for j in i..n {
                let v = self.entries[i * n + j].eval(x)?;
                g[(i, j)] = v;
                g[(j, i)] = v;
            }
        }
        Ok(g)
    }

    /// Metric and its coordinate derivatives: (g, [dg/dx^1, .., dg/dx^n]).
    pub fn metric_grad_at(&self, x: &[f64]) -> Result<(DMatrix<f64>, Vec<DMatrix<f64>>)> {
        let n = self.dim;
        let mut g = DMatrix::zeros(n, n);
        let mut dg = vec![DMatrix::zeros(n, n); n];
        if self.identity {
            g.fill_with_identity();
            return Ok((g, dg));
        }
        for i in 0..n {
            for j in i..n {
                let vg = self.entries[i * n + j].eval_grad(x)?;
                g[(i, j)] = vg.value;
                g[(j, i)] = vg.value;
                for (l, d) in vg.grad.iter().enumerate() {
                    dg[l][(i, j)] = *d;
                    dg[l][(j, i)] = *d;
                }
            }
        }
        Ok((g, dg))
    }

    /// <u, v>_R at x.
    pub fn inner(&self, x: &[f64], u: &[f64], v: &[f64]) -> Result<f64> {
        if self.identity {
            return Ok(u.iter().zip(v).map(|(a, b)| a * b).sum());
        }
        let g = self.metric_at(x)?;
        let mut acc = 0.0;
        for i in 0..self.dim {
            for j in 0..self.dim {
                acc += g[(i, j)] * u[i] * v[j];
            }
        }
        Ok(acc)
    }

    /// Positive-definiteness check (smallest eigenvalue above 1e-12).
    pub fn check_positive_definite(&self, x: &[f64]) -> Result<()> {
        let g = self.metric_at(x)?;
        let eigs = g.symmetric_eigenvalues();
        let min = eigs.iter().cloned().fold(f64::INFINITY, f64::min);
        if min <= 1e-12 {
            return Err(Error::NotPositiveDefinite {
                point: x.to_vec(),
                eig: min,
            });
        }
        Ok(())
    }
}

/// Point of the product manifold.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SpacetimePoint {
    pub x: Vec<f64>,
    pub y: f64,
    pub t: f64,
}

impl SpacetimePoint {
    pub fn new(x: Vec<f64>, y: f64, t: f64) -> Self {
        SpacetimePoint { x, y, t }
    }

    /// Chart coordinates ordered (x1..xn, y, t).
    pub fn coords(&self) -> Vec<f64> {
        let mut z = self.x.clone();
        z.push(self.y);
        z.push(self.t);
        z
    }

    pub fn from_coords(z: &[f64]) -> Self {
        let n = z.len() - 2;
        SpacetimePoint {
            x: z[..n].to_vec(),
            y: z[n],
            t: z[n + 1],
        }
    }
}

/// Which preset built a spacetime (drives preset-specific checks).
#[derive(Clone, Debug, PartialEq, Serialize)]
pub enum PresetKind {
    Godel { omega: f64 },
    Flat,
    StaticEmbed,
    CaseI,
    CaseII,
    CaseIII { eps: f64 },
    CaseIV { eps: f64 },
    Custom,
}

/// Preset selector for `GodelSpacetime::preset`.
#[derive(Clone, Debug)]
pub enum Preset {
    /// Classical rotating universe, omega > 0:
    /// A = -exp(2 sqrt2 w x1)/2, B = -exp(sqrt2 w x1), C = 1 on flat R^2.
    Godel { omega: f64 },
    /// Minkowski R^4: A = 1, B = 0, C = 1 on flat R^2.
    Flat,
    /// Standard static spacetime crossed with a flat y line:
    /// A = 1, B = 0, C = beta(x), beta > 0.
    StaticEmbed {
        beta: String,
        dim: usize,
        params: HashMap<String, f64>,
    },
    /// L > 0, a - c > 0 for every path: constants A = 2, B = 0, C = 1.
    CaseI,
    /// L > 0, a - c < 0 for every path: constants A = -1, B = 2, C = 1.
    CaseII,
    /// L < 0, a - c > 0 over well-separated paths (constants cannot reach
    /// L < 0: for constant coefficients L = 1/H > 0 identically):
    /// A = 1, B = -(1+eps) exp(-x1), C = -exp(-2 x1).
    CaseIII { eps: f64 },
    /// L < 0, a - c < 0 over well-separated paths:
    /// A = -exp(-2 x1), B = -(1+eps) exp(-x1), C = 1.
    CaseIV { eps: f64 },
}

/// The spacetime: base + three fiber coefficient fields.
#[derive(Clone, Debug)]
pub struct GodelSpacetime {
    base: RiemannianBase,
    a: Expr,
    b: Expr,
    c: Expr,
    kind: PresetKind,
}

fn parse_coef(text: &str, params: &HashMap<String, f64>, dim: usize) -> Result<Expr> {
    exprdsl::parse(text, params, dim)
}

impl GodelSpacetime {
    pub fn new(base: RiemannianBase, a: Expr, b: Expr, c: Expr) -> Result<Self> {
        let dim = base.dim();
        for e in [&a, &b, &c] {
            if e.dim() != dim {
                return Err(Error::DimMismatch {
                    expected: dim,
                    got: e.dim(),
                });
            }
        }
        Ok(GodelSpacetime {
            base,
            a,
            b,
            c,
            kind: PresetKind::Custom,
        })
    }

    pub fn preset(p: Preset) -> Result<Self> {
        let none = HashMap::new();
        let st = match p {
            Preset::Godel { omega } => {
                if omega.is_nan() || omega <= 0.0 {
                    return Err(Error::InvalidParameter(format!(
                        "godel preset needs omega > 0, got {omega}"
                    )));
                }
                let mut params = HashMap::new();
                params.insert("w".to_string(), omega);
                GodelSpacetime {
                    base: RiemannianBase::flat(2),
                    a: parse_coef("-exp(2*sqrt(2)*w*x1)/2", &params, 2)?,
                    b: parse_coef("-exp(sqrt(2)*w*x1)", &params, 2)?,
                    c: Expr::constant(1.0, 2),
                    kind: PresetKind::Godel { omega },
                }
            }
            Preset::Flat => GodelSpacetime {
                base: RiemannianBase::flat(2),
                a: Expr::constant(1.0, 2),
                b: Expr::constant(0.0, 2),
                c: Expr::constant(1.0, 2),
                kind: PresetKind::Flat,
            },
            Preset::StaticEmbed { beta, dim, params } => {
                let c = parse_coef(&beta, &params, dim)?;
                let origin = vec![0.0; dim];
                match c.eval(&origin) {
                    Ok(v) if v > 0.0 => {}
                    Ok(v) => {
                        return Err(Error::InvalidParameter(format!(
                            "static_embed needs beta > 0; beta(0) = {v}"
                        )))
                    }
                    Err(e) => return Err(e),
                }
                GodelSpacetime {
                    base: RiemannianBase::flat(dim),
                    a: Expr::constant(1.0, dim),
                    b: Expr::constant(0.0, dim),
                    c,
                    kind: PresetKind::StaticEmbed,
                }
            }
            Preset::CaseI => GodelSpacetime {
                base: RiemannianBase::flat(2),
                a: Expr::constant(2.0, 2),
                b: Expr::constant(0.0, 2),
                c: Expr::constant(1.0, 2),
                kind: PresetKind::CaseI,
            },
            Preset::CaseII => GodelSpacetime {
                base: RiemannianBase::flat(2),
                a: Expr::constant(-1.0, 2),
                b: Expr::constant(2.0, 2),
                c: Expr::constant(1.0, 2),
                kind: PresetKind::CaseII,
            },
            Preset::CaseIII { eps } => {
                check_eps(eps)?;
                let mut params = HashMap::new();
                params.insert("eps".to_string(), eps);
                GodelSpacetime {
                    base: RiemannianBase::flat(2),
                    a: Expr::constant(1.0, 2),
                    b: parse_coef("-(1+eps)*exp(-x1)", &params, 2)?,
                    c: parse_coef("-exp(-2*x1)", &none, 2)?,
                    kind: PresetKind::CaseIII { eps },
                }
            }
            Preset::CaseIV { eps } => {
                check_eps(eps)?;
                let mut params = HashMap::new();
                params.insert("eps".to_string(), eps);
                GodelSpacetime {
                    base: RiemannianBase::flat(2),
                    a: parse_coef("-exp(-2*x1)", &none, 2)?,
                    b: parse_coef("-(1+eps)*exp(-x1)", &params, 2)?,
                    c: Expr::constant(1.0, 2),
                    kind: PresetKind::CaseIV { eps },
                }
            }
        };
        Ok(st)
    }

    pub fn base(&self) -> &RiemannianBase {
        &self.base
    }

    pub fn kind(&self) -> &PresetKind {
        &self.kind
    }

    pub fn dim(&self) -> usize {
        self.base.dim()
    }

    /// Chart dimension of the product, n + 2.
    pub fn total_dim(&self) -> usize {
        self.base.dim() + 2
    }

    pub fn coefficient_exprs(&self) -> (&Expr, &Expr, &Expr) {
        (&self.a, &self.b, &self.c)
    }

    /// (A, B, C) at x.
    pub fn coefficients(&self, x: &[f64]) -> Result<(f64, f64, f64)> {
        Ok((self.a.eval(x)?, self.b.eval(x)?, self.c.eval(x)?))
    }

    /// (A, B, C) with their exact coordinate gradients.
    pub fn coefficient_grads(&self, x: &[f64]) -> Result<(ValueGrad, ValueGrad, ValueGrad)> {
        Ok((
            self.a.eval_grad(x)?,
            self.b.eval_grad(x)?,
            self.c.eval_grad(x)?,
        ))
    }

    /// H(x) = B^2 + A C; errors when the Lorentzian condition fails.
    pub fn h(&self, x: &[f64]) -> Result<f64> {
        let (a, b, c) = self.coefficients(x)?;
        let h = b * b + a * c;
        if h <= H_FLOOR {
            return Err(Error::NonLorentzian {
                point: x.to_vec(),
                h,
            });
        }
        Ok(h)
    }

    /// gamma(x) = H / (A - C), the comparison field of the coercivity bound.
    pub fn gamma(&self, x: &[f64]) -> Result<f64> {
        let (a, b, c) = self.coefficients(x)?;
        let h = b * b + a * c;
        if h <= H_FLOOR {
            return Err(Error::NonLorentzian {
                point: x.to_vec(),
                h,
            });
        }
        let diff = a - c;
        if diff == 0.0 {
            return Err(Error::GammaUndefined {
                point: x.to_vec(),
                diff,
            });
        }
        Ok(h / diff)
    }

    /// (A/H, B/H, C/H) at x, the integrands of the reduced path integrals.
    pub fn ratios(&self, x: &[f64]) -> Result<(f64, f64, f64)> {
        let (a, b, c) = self.coefficients(x)?;
        let h = b * b + a * c;
        if h <= H_FLOOR {
            return Err(Error::NonLorentzian {
                point: x.to_vec(),
                h,
            });
        }
        Ok((a / h, b / h, c / h))
    }

    /// Full (n+2) x (n+2) metric at p, chart order (x1..xn, y, t).
    pub fn lorentz_metric(&self, p: &SpacetimePoint) -> Result<DMatrix<f64>> {
        let n = self.base.dim();
        if p.x.len() != n {
            return Err(Error::DimMismatch {
                expected: n,
                got: p.x.len(),
            });
        }
        // Guard first so callers never receive a non-Lorentzian matrix.
        self.h(&p.x)?;
        let (a, b, c) = self.coefficients(&p.x)?;
        let g_base = self.base.metric_at(&p.x)?;
        let mut g = DMatrix::zeros(n + 2, n + 2);
        g.view_mut((0, 0), (n, n)).copy_from(&g_base);
        g[(n, n)] = a;
        g[(n, n + 1)] = b;
        g[(n + 1, n)] = b;
        g[(n + 1, n + 1)] = -c;
        Ok(g)
    }
}

fn check_eps(eps: f64) -> Result<()> {
    if eps > 0.0 && eps < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "case preset needs 0 < eps < 1, got {eps}"
        )))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn all_presets() -> Vec<(&'static str, GodelSpacetime)> {
        vec![
            (
                "godel",
                GodelSpacetime::preset(Preset::Godel { omega: 1.0 }).unwrap(),
            ),
            ("flat", GodelSpacetime::preset(Preset::Flat).unwrap()),
            (
                "static_embed",
                GodelSpacetime::preset(Preset::StaticEmbed {
                    beta: "1+x1^2".into(),
                    dim: 2,
                    params: HashMap::new(),
                })
                .unwrap(),
            ),
            ("case_i", GodelSpacetime::preset(Preset::CaseI).unwrap()),
            ("case_ii", GodelSpacetime::preset(Preset::CaseII).unwrap()),
            (
                "case_iii",
                GodelSpacetime::preset(Preset::CaseIII { eps: 0.05 }).unwrap(),
            ),
            (
                "case_iv",
                GodelSpacetime::preset(Preset::CaseIV { eps: 0.05 }).unwrap(),
            ),
        ]
    }

    fn halton(i: usize, base: usize) -> f64 {
        let mut f = 1.0;
        let mut r = 0.0;
        let mut n = i + 1;
        while n > 0 {
            f /= base as f64;
            r += f * (n % base) as f64;
            n /= base;
        }
        r
    }

    #[test]
    fn godel_h_matches_closed_form() {
        let st = GodelSpacetime::preset(Preset::Godel { omega: 1.0 }).unwrap();
        for i in 0..50 {
            let x1 = -2.0 + 4.0 * halton(i, 2);
            let x = [x1, 1.0 - 2.0 * halton(i, 3)];
            let want = (2.0 * 2.0_f64.sqrt() * x1).exp() / 2.0;
            assert_relative_eq!(st.h(&x).unwrap(), want, max_relative = 1e-12);
        }
        let w = 2.5;
        let st = GodelSpacetime::preset(Preset::Godel { omega: w }).unwrap();
        let x = [0.3, 0.0];
        let want = (2.0 * 2.0_f64.sqrt() * w * 0.3).exp() / 2.0;
        assert_relative_eq!(st.h(&x).unwrap(), want, max_relative = 1e-12);
    }

    #[test]
    fn h_equals_minus_fiber_determinant() {
        for (name, st) in all_presets() {
            for i in 0..30 {
                let x = [2.0 * halton(i, 2) - 1.0, 2.0 * halton(i, 3) - 1.0];
                let p = SpacetimePoint::new(x.to_vec(), 0.0, 0.0);
                let g = st.lorentz_metric(&p).unwrap();
                let n = st.dim();
                let det = g[(n, n)] * g[(n + 1, n + 1)] - g[(n, n + 1)] * g[(n + 1, n)];
                let h = st.h(&x).unwrap();
                assert!(
                    (h + det).abs() <= 1e-12 * (1.0 + h.abs()),
                    "{name}: H = {h}, fiber det = {det}"
                );
            }
        }
    }

    #[test]
    fn lorentz_metric_has_signature_n_plus_one_comma_one() {
        for (name, st) in all_presets() {
            for i in 0..100 {
                let x = [4.0 * halton(i, 2) - 2.0, 4.0 * halton(i, 3) - 2.0];
                let p = SpacetimePoint::new(x.to_vec(), 0.3, -0.7);
                let g = st.lorentz_metric(&p).unwrap();
                let eigs = g.symmetric_eigenvalues();
                let neg = eigs.iter().filter(|&&e| e < 0.0).count();
                assert_eq!(neg, 1, "{name} at {x:?}: eigenvalues {eigs:?}");
            }
        }
    }

    #[test]
    fn godel_fiber_block_at_origin() {
        let st = GodelSpacetime::preset(Preset::Godel { omega: 1.0 }).unwrap();
        let p = SpacetimePoint::new(vec![0.0, 0.0], 0.0, 0.0);
        let g = st.lorentz_metric(&p).unwrap();
        assert_relative_eq!(g[(2, 2)], -0.5, epsilon = 1e-15);
        assert_relative_eq!(g[(2, 3)], -1.0, epsilon = 1e-15);
        assert_relative_eq!(g[(3, 2)], -1.0, epsilon = 1e-15);
        assert_relative_eq!(g[(3, 3)], -1.0, epsilon = 1e-15);
        assert_relative_eq!(st.h(&[0.0, 0.0]).unwrap(), 0.5, epsilon = 1e-15);
    }

    #[test]
    fn flat_preset_is_minkowski() {
        let st = GodelSpacetime::preset(Preset::Flat).unwrap();
        let p = SpacetimePoint::new(vec![0.4, -0.2], 1.0, 2.0);
        let g = st.lorentz_metric(&p).unwrap();
        let want = DMatrix::from_diagonal(&nalgebra::dvector![1.0, 1.0, 1.0, -1.0]);
        assert_eq!(g, want);
    }

    #[test]
    fn gamma_sign_and_guards() {
        // A = 2 + x1^2, B = 0, C = 1: gamma = (2+x1^2)/(1+x1^2) <= 2.
        let base = RiemannianBase::flat(2);
        let none = HashMap::new();
        let st = GodelSpacetime::new(
            base,
            exprdsl::parse("2+x1^2", &none, 2).unwrap(),
            Expr::constant(0.0, 2),
            Expr::constant(1.0, 2),
        )
        .unwrap();
        assert_relative_eq!(st.gamma(&[0.0, 0.0]).unwrap(), 2.0, epsilon = 1e-15);
        for i in 0..50 {
            let x = [6.0 * halton(i, 2) - 3.0, 0.0];
            let g = st.gamma(&x).unwrap();
            assert!(g > 0.0 && g <= 2.0 + 1e-15, "gamma({x:?}) = {g}");
        }
        // Godel: A - C < 0 everywhere, so gamma < 0.
        let st = GodelSpacetime::preset(Preset::Godel { omega: 1.0 }).unwrap();
        for i in 0..50 {
            let x = [6.0 * halton(i, 2) - 3.0, 0.0];
            assert!(st.gamma(&x).unwrap() < 0.0);
        }
        // A = C = 1 makes gamma undefined.
        let st = GodelSpacetime::preset(Preset::Flat).unwrap();
        assert!(matches!(
            st.gamma(&[0.0, 0.0]),
            Err(Error::GammaUndefined { .. })
        ));
    }

    #[test]
    fn non_lorentzian_is_a_hard_error() {
        let none = HashMap::new();
        let st = GodelSpacetime::new(
            RiemannianBase::flat(2),
            Expr::constant(1.0, 2),
            Expr::constant(0.0, 2),
            Expr::constant(-1.0, 2),
        )
        .unwrap();
        match st.h(&[0.0, 0.0]) {
            Err(Error::NonLorentzian { h, .. }) => assert_eq!(h, -1.0),
            other => panic!("{other:?}"),
        }
        // Boundary case H = 0 (A = 0, B = 0 impossible; use B=1, A=1, C=-1).
        let st = GodelSpacetime::new(
            RiemannianBase::flat(2),
            Expr::constant(1.0, 2),
            Expr::constant(1.0, 2),
            exprdsl::parse("-1", &none, 2).unwrap(),
        )
        .unwrap();
        assert!(st.h(&[0.0, 0.0]).is_err());
    }

    #[test]
    fn static_embed_validates_beta() {
        let bad = GodelSpacetime::preset(Preset::StaticEmbed {
            beta: "-1".into(),
            dim: 2,
            params: HashMap::new(),
        });
        assert!(matches!(bad, Err(Error::InvalidParameter(_))));
        let good = GodelSpacetime::preset(Preset::StaticEmbed {
            beta: "exp(2*x1)".into(),
            dim: 2,
            params: HashMap::new(),
        })
        .unwrap();
        assert_relative_eq!(good.h(&[0.5, 0.0]).unwrap(), 1.0_f64.exp(), epsilon = 1e-12);
    }

    /// Exhaustive search over constant triples (halves in [-3,3]^3, H > 0):
    /// only the first two sign-table rows are reachable, because constants
    /// force L = (B^2+AC)/H^2 = 1/H > 0. This is why case_iii/case_iv are
    /// exponential families rather than constants.
    #[test]
    fn constant_triples_only_realize_cases_one_and_two() {
        let mut found = [false; 4];
        let vals: Vec<f64> = (-6..=6).map(|k| k as f64 / 2.0).collect();
        for &a_coef in &vals {
            for &b_coef in &vals {
                for &c_coef in &vals {
                    let h = b_coef * b_coef + a_coef * c_coef;
                    if h <= 1e-12 {
                        continue;
                    }
                    let (a, b, c) = (a_coef / h, b_coef / h, c_coef / h);
                    let l = b * b + a * c;
                    assert!(
                        (l - 1.0 / h).abs() <= 1e-12 * (1.0 + l.abs()),
                        "L must equal 1/H for constants"
                    );
                    let d = a - c;
                    if l.abs() < 1e-12 || d.abs() < 1e-12 {
                        continue;
                    }
                    let row = match (l > 0.0, d > 0.0) {
                        (true, true) => 0,
                        (true, false) => 1,
                        (false, true) => 2,
                        (false, false) => 3,
                    };
                    found[row] = true;
                }
            }
        }
        assert_eq!(found, [true, true, false, false]);
    }

    #[test]
    fn case_preset_coefficients_have_designed_signs() {
        let iii = GodelSpacetime::preset(Preset::CaseIII { eps: 0.05 }).unwrap();
        let iv = GodelSpacetime::preset(Preset::CaseIV { eps: 0.05 }).unwrap();
        for i in 0..50 {
            let x = [6.0 * halton(i, 2) - 3.0, 2.0 * halton(i, 3) - 1.0];
            // Both have H = (2 eps + eps^2) exp(-2 x1) > 0.
            let want_h = (2.0 * 0.05 + 0.05 * 0.05) * (-2.0 * x[0]).exp();
            assert_relative_eq!(iii.h(&x).unwrap(), want_h, max_relative = 1e-12);
            assert_relative_eq!(iv.h(&x).unwrap(), want_h, max_relative = 1e-12);
            // case_iii: A - C > 0 pointwise; case_iv: A - C < 0 pointwise.
            let (a3, _, c3) = iii.coefficients(&x).unwrap();
            let (a4, _, c4) = iv.coefficients(&x).unwrap();
            assert!(a3 - c3 > 0.0);
            assert!(a4 - c4 < 0.0);
        }
    }

    #[test]
    fn non_identity_base_metric_evaluates() {
        let none = HashMap::new();
        let base = RiemannianBase::from_upper_triangle(
            2,
            vec![
                exprdsl::parse("exp(2*x1)", &none, 2).unwrap(),
                Expr::constant(0.0, 2),
                exprdsl::parse("exp(2*x1)", &none, 2).unwrap(),
            ],
            true,
        )
        .unwrap();
        assert!(!base.is_identity());
        let g = base.metric_at(&[0.5, 0.0]).unwrap();
        assert_relative_eq!(g[(0, 0)], 1.0_f64.exp(), epsilon = 1e-12);
        assert_eq!(g[(0, 1)], 0.0);
        base.check_positive_definite(&[0.5, 0.0]).unwrap();
        let (g2, dg) = base.metric_grad_at(&[0.5, 0.0]).unwrap();
        assert_eq!(g, g2);
        assert_relative_eq!(dg[0][(0, 0)], 2.0 * 1.0_f64.exp(), max_relative = 1e-12);
        assert_eq!(dg[1][(0, 0)], 0.0);
        let v = base.inner(&[0.0, 0.0], &[3.0, 4.0], &[3.0, 4.0]).unwrap();
        assert_relative_eq!(v, 25.0, epsilon = 1e-12);
        // Degenerate metric is caught.
        let sick = RiemannianBase::from_upper_triangle(
            2,
            vec![
                Expr::constant(1.0, 2),
                Expr::constant(1.0, 2),
                Expr::constant(1.0, 2),
            ],
            true,
        )
        .unwrap();
        assert!(sick.check_positive_definite(&[0.0, 0.0]).is_err());
    }
}
