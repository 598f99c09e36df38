//! The reduced variational problem over spatial paths.
//!
//! For fixed endpoints in the full product, minimizing the action over the
//! fiber components (y, t) has a closed-form solution: the discrete fiber
//! momenta are constant along the path. Substituting it back leaves a
//! functional of the spatial path alone,
//!
//! ```text
//!   J(x) = E(x) + (Dy^2 a + 2 Dy Dt b - Dt^2 c) / (2 L)
//!        = E(x) - Dp^2 / (2 lambda_minus) - Dm^2 / (2 lambda_plus),
//! ```
//!
//! with E the Dirichlet energy, (a, b, c) the reduced path integrals,
//! L = b^2 + a c, (Dy, Dt) the fiber endpoint gaps and (Dp, Dm) their
//! components in the eigenbasis of S = [[a, b], [b, -c]]. Both forms are
//! evaluated and compared; they are algebraically identical, so sustained
//! disagreement is an internal bug, not a property of the input.
//!
//! Because the fiber elimination is exact at the discrete level, the value
//! identity (J equals the action of the reconstructed curve) and the
//! gradient identity (grad J is the partial x-gradient of the action with
//! fibers held at their reconstructed values) hold to rounding, not O(h).

use serde::Serialize;

use crate::error::{Error, Result};
use crate::pathspace::{dirichlet_energy, path_integrals, DiscretePath, FiberPath, PathIntegrals};
use crate::spacetime::{GodelSpacetime, PresetKind};

/// |L| at or below this is treated as singular (the reduction divides by L).
pub const L_FLOOR: f64 = 1e-12;
/// |L| below this is still usable but flagged: closure and the two J forms
/// lose digits roughly like 1/|L|.
pub const L_WARN: f64 = 1e-6;
/// Width of the a = c boundary strip folded into case I.
const CASE_BOUNDARY: f64 = 1e-12;
/// Discriminant threshold below which S is treated as scalar.
const DEGENERATE_TOL: f64 = 1e-12;
/// Relative disagreement between the two J forms treated as an internal bug
/// (enforced only while |L| is large enough for the forms to be comparable).
const FORM_TOL: f64 = 1e-8;

/// Fixed endpoints of the connection problem, spatial and fiber parts.
#[derive(Clone, Debug, Serialize)]
pub struct BoundaryData {
    pub x_p: Vec<f64>,
    pub x_q: Vec<f64>,
    pub y_p: f64,
    pub y_q: f64,
    pub t_p: f64,
    pub t_q: f64,
}

impl BoundaryData {
    pub fn new(x_p: Vec<f64>, x_q: Vec<f64>, y_p: f64, y_q: f64, t_p: f64, t_q: f64) -> Result<Self> {
        if x_p.len() != x_q.len() {
            return Err(Error::DimMismatch {
                expected: x_p.len(),
                got: x_q.len(),
            });
        }
        let all = x_p
            .iter()
            .chain(x_q.iter())
            .chain([&y_p, &y_q, &t_p, &t_q]);
        if all.into_iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter(
                "boundary data contains non-finite values".into(),
            ));
        }
        Ok(BoundaryData {
            x_p,
            x_q,
            y_p,
            y_q,
            t_p,
            t_q,
        })
    }

    pub fn dim(&self) -> usize {
        self.x_p.len()
    }

    pub fn delta_y(&self) -> f64 {
        self.y_q - self.y_p
    }

    pub fn delta_t(&self) -> f64 {
        self.t_q - self.t_p
    }
}

/// Sign class of the boundary quadratic form S = [[a, b], [b, -c]].
///
/// `I`: L > 0, a >= c (the a = c strip is folded in here; L >= 0 is forced
/// there). `II`: L > 0, a < c. `III`: L < 0, a > c (both eigenvalues
/// positive). `IV`: L < 0, a < c (both negative). L < 0 forces
/// |a - c| >= 2 sqrt(-L), so III/IV are never boundary cases. `Degenerate`
/// marks a numerically scalar S (b = 0 and a = -c, where L = -c^2).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum CaseTag {
    I,
    II,
    III,
    IV,
    Degenerate,
}

impl std::fmt::Display for CaseTag {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            CaseTag::I => "I",
            CaseTag::II => "II",
            CaseTag::III => "III",
            CaseTag::IV => "IV",
            CaseTag::Degenerate => "DEGENERATE",
        };
        f.write_str(s)
    }
}

/// Sign-table classification from the integrals alone.
pub fn classify(pi: &PathIntegrals) -> Result<CaseTag> {
    if pi.l.abs() <= L_FLOOR {
        return Err(Error::SingularL {
            l_abs: pi.l.abs(),
            floor: L_FLOOR,
        });
    }
    let diff = pi.a - pi.c;
    Ok(if pi.l > 0.0 {
        if diff >= -CASE_BOUNDARY {
            CaseTag::I
        } else {
            CaseTag::II
        }
    } else if diff > 0.0 {
        CaseTag::III
    } else {
        CaseTag::IV
    })
}

/// Spectral data of S = [[a, b], [b, -c]] together with the eigen
/// components of the fiber gap.
///
/// Guarantees: lambda_minus <= lambda_plus, lambda_plus * lambda_minus = -L,
/// lambda_plus + lambda_minus = a - c, the eigenvectors are orthonormal, and
/// |delta_plus|, |delta_minus| <= |(Dy, Dt)|.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct Eigensystem {
    pub lambda_plus: f64,
    pub lambda_minus: f64,
    pub v_plus: [f64; 2],
    pub v_minus: [f64; 2],
    pub delta_plus: f64,
    pub delta_minus: f64,
    pub case_tag: CaseTag,
}

impl Eigensystem {
    pub fn is_degenerate(&self) -> bool {
        self.case_tag == CaseTag::Degenerate
    }
}

/// Eigensystem of the integrals with the boundary gaps resolved in the
/// eigenbasis.
pub fn eigensystem(pi: &PathIntegrals, bd: &BoundaryData) -> Result<Eigensystem> {
    eigensystem_parts(pi.a, pi.b, pi.c, bd.delta_y(), bd.delta_t())
}

/// Same, from raw (a, b, c) and fiber gaps.
pub fn eigensystem_parts(a: f64, b: f64, c: f64, dy: f64, dt: f64) -> Result<Eigensystem> {
    let l = b * b + a * c;
    if l.abs() <= L_FLOOR {
        return Err(Error::SingularL {
            l_abs: l.abs(),
            floor: L_FLOOR,
        });
    }
    let tr = a - c;
    let s = a + c;
    // disc^2 = (a - c)^2 + 4 (b^2 + a c) = (a + c)^2 + 4 b^2; the second
    // form is a sum of squares, so hypot keeps it accurate near degeneracy.
    let disc = f64::hypot(s, 2.0 * b);
    let degenerate = disc < DEGENERATE_TOL;
    // Larger-magnitude root from the quadratic formula (no cancellation),
    // the other from the product lambda_plus * lambda_minus = -L.
    let (lambda_plus, lambda_minus) = if degenerate {
        (0.5 * tr, 0.5 * tr)
    } else if tr >= 0.0 {
        let lp = 0.5 * (tr + disc);
        (lp, if lp == 0.0 { 0.0 } else { -l / lp })
    } else {
        let lm = 0.5 * (tr - disc);
        (if lm == 0.0 { 0.0 } else { -l / lm }, lm)
    };
    let (v_plus, v_minus) = if degenerate {
        ([1.0, 0.0], [0.0, 1.0])
    } else if b == 0.0 {
        // Branch rules on the a = -c split (a = -c is the degenerate case).
        if a > -c {
            ([1.0, 0.0], [0.0, 1.0])
        } else {
            ([0.0, 1.0], [1.0, 0.0])
        }
    } else {
        // v_plus is parallel to (lambda_plus + c, b); lambda_plus + c =
        // (s + disc)/2 cancels when s < 0, where 2 b^2 / (disc - s) is the
        // stable equivalent. Orientation: positive second component,
        // matching ((lambda_plus + c)/b, 1) after normalization.
        let lp_c = if s >= 0.0 {
            0.5 * (s + disc)
        } else {
            2.0 * b * b / (disc - s)
        };
        let mut vp = normalize([lp_c, b]);
        if vp[1] < 0.0 {
            vp = [-vp[0], -vp[1]];
        }
        // The orthogonal complement is the other eigenvector; orient it the
        // same way.
        let mut vm = [-vp[1], vp[0]];
        if vm[1] < 0.0 {
            vm = [-vm[0], -vm[1]];
        }
        (vp, vm)
    };
    let case_tag = if degenerate {
        CaseTag::Degenerate
    } else if l > 0.0 {
        if tr >= -CASE_BOUNDARY {
            CaseTag::I
        } else {
            CaseTag::II
        }
    } else if tr > 0.0 {
        CaseTag::III
    } else {
        CaseTag::IV
    };
    Ok(Eigensystem {
        lambda_plus,
        lambda_minus,
        v_plus,
        v_minus,
        delta_plus: dy * v_plus[0] + dt * v_plus[1],
        delta_minus: dy * v_minus[0] + dt * v_minus[1],
        case_tag,
    })
}

fn normalize(v: [f64; 2]) -> [f64; 2] {
    let n = f64::hypot(v[0], v[1]);
    [v[0] / n, v[1] / n]
}

/// One evaluation of the reduced functional at a spatial path.
///
/// `j` is the coefficient-form value (the primary one); `j_eigen` is the
/// eigen-form value - Dp^2/(2 lambda_minus) - Dm^2/(2 lambda_plus) on top of
/// the same Dirichlet energy.
#[derive(Clone, Debug, Serialize)]
pub struct ReducedState {
    pub integrals: PathIntegrals,
    pub eigen: Eigensystem,
    pub case: CaseTag,
    pub dirichlet: f64,
    pub fiber_term: f64,
    pub j: f64,
    pub j_eigen: f64,
    pub warnings: Vec<String>,
}

/// Evaluates J at `path` for the boundary data `bd`, by both formulas.
pub fn reduce(st: &GodelSpacetime, path: &DiscretePath, bd: &BoundaryData) -> Result<ReducedState> {
    check_boundary(path, bd)?;
    let pi = path_integrals(st, path)?;
    let eigen = eigensystem(&pi, bd)?;
    let mut warnings = Vec::new();
    if pi.l.abs() < L_WARN {
        warnings.push(format!(
            "|L| = {:.3e} is small; closure and the value identities lose accuracy",
            pi.l.abs()
        ));
    }
    let dy = bd.delta_y();
    let dt = bd.delta_t();
    let fiber_term = (pi.a * dy * dy + 2.0 * pi.b * dy * dt - pi.c * dt * dt) / (2.0 * pi.l);
    let fiber_eigen = -0.5 * eigen.delta_plus * eigen.delta_plus / eigen.lambda_minus
        - 0.5 * eigen.delta_minus * eigen.delta_minus / eigen.lambda_plus;
    let dirichlet = dirichlet_energy(st, path)?;
    let j = dirichlet + fiber_term;
    let j_eigen = dirichlet + fiber_eigen;
    let scale = j.abs().max(j_eigen.abs()).max(1.0);
    if (j - j_eigen).abs() > FORM_TOL * scale {
        if pi.l.abs() >= L_WARN {
            return Err(Error::Inconsistency(format!(
                "the two functional forms disagree: {j:.17e} vs {j_eigen:.17e} at L = {:.3e}",
                pi.l
            )));
        }
        warnings.push(format!(
            "functional forms differ by {:.3e} under near-singular L = {:.3e}",
            (j - j_eigen).abs(),
            pi.l
        ));
    }
    Ok(ReducedState {
        case: eigen.case_tag,
        integrals: pi,
        eigen,
        dirichlet,
        fiber_term,
        j,
        j_eigen,
        warnings,
    })
}

/// Fiber components reconstructed from a spatial path.
///
/// The discrete momenta (p_y, p_t) are constant by construction; `closure_*`
/// are the floating-point defects at the far endpoint (structurally zero).
#[derive(Clone, Debug, Serialize)]
pub struct Reconstruction {
    pub y: FiberPath,
    pub t: FiberPath,
    pub p_y: f64,
    pub p_t: f64,
    pub closure_y: f64,
    pub closure_t: f64,
}

/// Solves the fiber boundary problem on top of precomputed path integrals.
pub fn reconstruct(pi: &PathIntegrals, bd: &BoundaryData) -> Result<Reconstruction> {
    if pi.l.abs() <= L_FLOOR {
        return Err(Error::SingularL {
            l_abs: pi.l.abs(),
            floor: L_FLOOR,
        });
    }
    let dy = bd.delta_y();
    let dt = bd.delta_t();
    let p_y = (pi.a * dy + pi.b * dt) / pi.l;
    let p_t = (pi.b * dy - pi.c * dt) / pi.l;
    let n = pi.partial_a.len();
    let mut y = Vec::with_capacity(n);
    let mut t = Vec::with_capacity(n);
    for j in 0..n {
        y.push(bd.y_p + p_y * pi.partial_c[j] + p_t * pi.partial_b[j]);
        t.push(bd.t_p + p_y * pi.partial_b[j] - p_t * pi.partial_a[j]);
    }
    let closure_y = y[n - 1] - bd.y_q;
    let closure_t = t[n - 1] - bd.t_q;
    Ok(Reconstruction {
        y: FiberPath::from_values(y)?,
        t: FiberPath::from_values(t)?,
        p_y,
        p_t,
        closure_y,
        closure_t,
    })
}

/// Per-segment discrete fiber momenta of a spacetime curve:
/// p_y = (A dy + B dt)/h and p_t = (B dy - C dt)/h at segment midpoints.
/// For reconstructed fibers both sequences are constant.
pub fn segment_momenta(
    st: &GodelSpacetime,
    path: &DiscretePath,
    y: &FiberPath,
    t: &FiberPath,
) -> Result<Vec<(f64, f64)>> {
    let n = path.n_segments();
    if y.len() != n + 1 || t.len() != n + 1 {
        return Err(Error::GridMismatch(
            "fiber grids do not match the path".into(),
        ));
    }
    let h = path.h();
    let mut m = vec![0.0; path.dim()];
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        path.midpoint_into(i, &mut m);
        let (a, b, c) = st.coefficients(&m)?;
        let dy = y.value(i + 1) - y.value(i);
        let dt = t.value(i + 1) - t.value(i);
        out.push(((a * dy + b * dt) / h, (b * dy - c * dt) / h));
    }
    Ok(out)
}

/// Exact gradient of J with respect to the interior path nodes.
///
/// Because the reconstructed fibers are a critical point of the action over
/// fiber moves, the chain-rule terms through (a, b, c) collapse: grad J is
/// the partial x-gradient of the discrete action with the fibers frozen at
/// their reconstructed differences. Endpoint entries are zero.
pub fn grad_j(st: &GodelSpacetime, path: &DiscretePath, bd: &BoundaryData) -> Result<Vec<f64>> {
    check_boundary(path, bd)?;
    let pi = path_integrals(st, path)?;
    let rec = reconstruct(&pi, bd)?;
    let n = path.n_segments();
    let dim = path.dim();
    let h = path.h();
    let base = st.base();
    let mut g = vec![0.0; (n + 1) * dim];
    let mut m = vec![0.0; dim];
    let mut d = vec![0.0; dim];
    for i in 0..n {
        path.midpoint_into(i, &mut m);
        path.delta_into(i, &mut d);
        let dy = rec.y.value(i + 1) - rec.y.value(i);
        let dt = rec.t.value(i + 1) - rec.t.value(i);
        let (va, vb, vc) = st.coefficient_grads(&m)?;
        // Midpoint-derivative part, shared by both adjacent nodes.
        let mut shared = vec![0.0; dim];
        let grads = va.grad.iter().zip(&vb.grad).zip(&vc.grad);
        for (sh, ((ga, gb), gc)) in shared.iter_mut().zip(grads) {
            *sh = (ga * dy * dy + 2.0 * gb * dy * dt - gc * dt * dt) / (4.0 * h);
        }
        // Velocity part, odd between the two adjacent nodes.
        let mut odd = vec![0.0; dim];
        if base.is_identity() {
            for l in 0..dim {
                odd[l] = d[l] / h;
            }
        } else {
            let (gm, dgm) = base.metric_grad_at(&m)?;
            for l in 0..dim {
                let mut gd = 0.0;
                for k in 0..dim {
                    gd += gm[(l, k)] * d[k];
                }
                odd[l] = gd / h;
                let mut quad = 0.0;
                for p in 0..dim {
                    for q in 0..dim {
                        quad += dgm[l][(p, q)] * d[p] * d[q];
                    }
                }
                shared[l] += quad / (4.0 * h);
            }
        }
        for l in 0..dim {
            if i > 0 {
                g[i * dim + l] += shared[l] - odd[l];
            }
            if i + 1 < n {
                g[(i + 1) * dim + l] += shared[l] + odd[l];
            }
        }
    }
    Ok(g)
}

/// Lower-bound diagnostics for J at one path.
///
/// Case I: J >= E - delta_minus^2 / (a - c), using lambda_plus >= (a - c)/2;
/// the denominator a - c is also evaluated as the path quadratures of
/// (A - C)/H and of 1/gamma, which agree with it identically.
/// Case IV (and the degenerate subcase with negative eigenvalues): the
/// fiber term is non-negative, so J >= E.
/// Cases II and III carry no one-sided bound.
#[derive(Clone, Debug, Serialize)]
pub struct CoercivityReport {
    pub case: CaseTag,
    pub dirichlet: f64,
    pub j: f64,
    pub lower_bound: Option<f64>,
    pub margin: Option<f64>,
    pub denominators: Option<[f64; 3]>,
    pub lambda_plus_slack: Option<f64>,
    pub notes: Vec<String>,
}

pub fn coercivity_report(
    st: &GodelSpacetime,
    path: &DiscretePath,
    bd: &BoundaryData,
) -> Result<CoercivityReport> {
    let state = reduce(st, path, bd)?;
    let mut notes = Vec::new();
    let mut report = CoercivityReport {
        case: state.case,
        dirichlet: state.dirichlet,
        j: state.j,
        lower_bound: None,
        margin: None,
        denominators: None,
        lambda_plus_slack: None,
        notes: Vec::new(),
    };
    match state.case {
        CaseTag::I => {
            let diff = state.integrals.a - state.integrals.c;
            if diff <= L_FLOOR {
                notes.push("a - c vanishes on this path; the case I bound degenerates".into());
            } else {
                let n = path.n_segments();
                let h = path.h();
                let mut m = vec![0.0; path.dim()];
                let (mut via_ratio, mut via_gamma) = (0.0, 0.0);
                let mut gamma_ok = true;
                for i in 0..n {
                    path.midpoint_into(i, &mut m);
                    let (ra, _, rc) = st.ratios(&m)?;
                    via_ratio += (ra - rc) * h;
                    match st.gamma(&m) {
                        Ok(g) => via_gamma += h / g,
                        Err(_) => gamma_ok = false,
                    }
                }
                if !gamma_ok {
                    notes.push("gamma undefined somewhere along the path; skipped that route".into());
                    via_gamma = f64::NAN;
                }
                let w_minus = state.eigen.delta_minus;
                let bound = state.dirichlet - w_minus * w_minus / diff;
                report.lower_bound = Some(bound);
                report.margin = Some(state.j - bound);
                report.denominators = Some([diff, via_ratio, via_gamma]);
                report.lambda_plus_slack = Some(state.eigen.lambda_plus - 0.5 * diff);
            }
        }
        CaseTag::IV => {
            if state.eigen.lambda_plus > 0.0 {
                notes.push(format!(
                    "expected lambda_plus <= 0 in case IV, got {:.3e}",
                    state.eigen.lambda_plus
                ));
            }
            report.lower_bound = Some(state.dirichlet);
            report.margin = Some(state.j - state.dirichlet);
        }
        CaseTag::Degenerate => {
            // Scalar S with L = -c^2 < 0: same non-negative fiber term as
            // case IV when the eigenvalue is negative.
            if state.eigen.lambda_plus < 0.0 {
                report.lower_bound = Some(state.dirichlet);
                report.margin = Some(state.j - state.dirichlet);
            } else {
                notes.push("degenerate S with positive eigenvalue: no bound".into());
            }
        }
        CaseTag::II | CaseTag::III => {
            notes.push(format!(
                "case {} admits no one-sided lower bound of this kind",
                state.case
            ));
        }
    }
    report.notes = notes;
    Ok(report)
}

/// Cross-check against the classical static functional.
///
/// For the static embedding (A = 1, B = 0, C = beta) the reduction must
/// satisfy J = [E - Dt^2 / (2 int 1/beta)] + Dy^2 / 2, with int 1/beta
/// evaluated directly from the coefficient expression.
#[derive(Clone, Debug, Serialize)]
pub struct StaticConsistencyReport {
    pub j: f64,
    pub j_static: f64,
    pub dy_sq_half: f64,
    pub predicted: f64,
    pub difference: f64,
}

pub fn static_consistency(
    st: &GodelSpacetime,
    path: &DiscretePath,
    bd: &BoundaryData,
) -> Result<StaticConsistencyReport> {
    if *st.kind() != PresetKind::StaticEmbed {
        return Err(Error::PresetMismatch(format!(
            "static consistency check needs the static_embed preset, got {:?}",
            st.kind()
        )));
    }
    let state = reduce(st, path, bd)?;
    let n = path.n_segments();
    let h = path.h();
    let mut m = vec![0.0; path.dim()];
    let mut inv_beta = 0.0;
    for i in 0..n {
        path.midpoint_into(i, &mut m);
        let (_, _, beta) = st.coefficients(&m)?;
        if beta <= 0.0 {
            return Err(Error::NonLorentzian {
                point: m.clone(),
                h: beta,
            });
        }
        inv_beta += h / beta;
    }
    let dt = bd.delta_t();
    let j_static = state.dirichlet - dt * dt / (2.0 * inv_beta);
    let dy = bd.delta_y();
    let predicted = j_static + 0.5 * dy * dy;
    Ok(StaticConsistencyReport {
        j: state.j,
        j_static,
        dy_sq_half: 0.5 * dy * dy,
        predicted,
        difference: state.j - predicted,
    })
}

fn check_boundary(path: &DiscretePath, bd: &BoundaryData) -> Result<()> {
    if path.dim() != bd.dim() {
        return Err(Error::DimMismatch {
            expected: bd.dim(),
            got: path.dim(),
        });
    }
    if path.first() != bd.x_p.as_slice() || path.last() != bd.x_q.as_slice() {
        return Err(Error::GridMismatch(
            "path endpoints do not match the boundary data".into(),
        ));
    }
    Ok(())
}
