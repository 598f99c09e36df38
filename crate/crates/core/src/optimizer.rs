//! Minimization of the reduced functional over interior path nodes.
//!
//! The search direction is the gradient preconditioned by the inverse of
//! K = (1/h) tridiag(-1, 2, -1), the stiffness matrix of the discrete
//! Dirichlet energy. Measuring convergence in the induced dual norm
//! (g' K^-1 g)^(1/2) makes the stopping rule mesh-independent, and on the
//! flat preset the preconditioned step is an exact Newton step: any start
//! reaches the minimizer in one accepted step.
//!
//! Coefficient blow-ups during a trial step (Lorentzian floor, singular L)
//! are treated as line-search rejections, so the iterate can never cross a
//! sign-structure boundary: L -> 0 sends J to +/- infinity and the descent
//! condition filters it out.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::pathspace::DiscretePath;
use crate::reduction::{grad_j, reconstruct, reduce, BoundaryData, Reconstruction, ReducedState};
use crate::spacetime::GodelSpacetime;

/// Mixes the start index into the base seed (golden-ratio increment).
const SEED_STRIDE: u64 = 0x9E37_79B9_7F4A_7C15;

#[derive(Clone, Debug, Serialize)]
pub struct SolveOptions {
    /// Number of path segments.
    pub n: usize,
    /// Stop when the dual norm of the gradient drops below this.
    pub grad_tol: f64,
    /// Accepted-step budget; exceeding it returns converged = false.
    pub max_iters: usize,
    /// Initial trial step of every line search.
    pub step0: f64,
    /// Backtracking factor in (0, 1).
    pub shrink: f64,
    /// Sufficient-decrease constant in (0, 1/2].
    pub sufficient: f64,
    /// Consecutive trial failures tolerated inside one line search.
    pub max_rejections: usize,
    /// Number of independent starts; start 0 is the unperturbed chord.
    pub multistart: usize,
    /// Sine modes used to perturb the chord for starts >= 1.
    pub perturb_modes: usize,
    /// Amplitude range of the perturbation coefficients.
    pub perturb_amp: f64,
    pub seed: u64,
    /// L-BFGS (memory 8, K^-1 as the base metric) on top of the
    /// preconditioned direction. Off, the solver is plain preconditioned
    /// descent, whose reachable gradient floor is about sqrt(eps |J|); tight
    /// tolerances then end in an honest non-convergence report.
    pub lbfgs: bool,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            n: 200,
            grad_tol: 1e-8,
            max_iters: 20_000,
            step0: 1.0,
            shrink: 0.5,
            sufficient: 1e-4,
            max_rejections: 60,
            multistart: 1,
            perturb_modes: 3,
            perturb_amp: 0.25,
            seed: 42,
            lbfgs: true,
        }
    }
}

impl SolveOptions {
    fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidParameter(msg.into()));
        if self.n < 2 {
            return bad("n must be at least 2");
        }
        if self.grad_tol.is_nan() || self.grad_tol <= 0.0 {
            return bad("grad_tol must be positive");
        }
        if self.step0.is_nan() || self.step0 <= 0.0 {
            return bad("step0 must be positive");
        }
        if !(self.shrink > 0.0 && self.shrink < 1.0) {
            return bad("shrink must lie in (0, 1)");
        }
        if !(self.sufficient > 0.0 && self.sufficient <= 0.5) {
            return bad("sufficient must lie in (0, 1/2]");
        }
        if self.multistart == 0 {
            return bad("multistart must be at least 1");
        }
        if self.max_rejections == 0 {
            return bad("max_rejections must be at least 1");
        }
        Ok(())
    }
}

/// Outcome of one minimization (the best start when multistart > 1).
#[derive(Clone, Debug, Serialize)]
pub struct SolveReport {
    pub converged: bool,
    /// Accepted descent steps.
    pub iterations: usize,
    /// Which start produced this report.
    pub start_index: usize,
    /// Final dual gradient norm.
    pub grad_norm: f64,
    /// J after each accepted step (index 0 is the start value).
    pub j_history: Vec<f64>,
    /// Dual gradient norm at the same instants.
    pub grad_history: Vec<f64>,
    /// Total rejected line-search trials.
    pub rejections: usize,
    pub state: ReducedState,
    pub reconstruction: Reconstruction,
    pub path: DiscretePath,
    pub warnings: Vec<String>,
}

impl SolveReport {
    pub fn j(&self) -> f64 {
        self.state.j
    }
}

/// Start path for the given start index: the plain chord for index 0,
/// a seeded sine-bump perturbation of it otherwise.
pub fn initial_path(bd: &BoundaryData, idx: usize, opts: &SolveOptions) -> Result<DiscretePath> {
    if idx == 0 {
        DiscretePath::chord(&bd.x_p, &bd.x_q, opts.n)
    } else {
        let mut rng =
            ChaCha8Rng::seed_from_u64(opts.seed.wrapping_add(SEED_STRIDE.wrapping_mul(idx as u64)));
        DiscretePath::perturbed_chord(
            &bd.x_p,
            &bd.x_q,
            opts.n,
            opts.perturb_modes,
            opts.perturb_amp,
            &mut rng,
        )
    }
}

/// Multistart driver: runs `minimize` from every start, keeps the lowest J.
/// Ties and incomparable values resolve to the smaller start index, so the
/// result does not depend on scheduling.
pub fn solve(st: &GodelSpacetime, bd: &BoundaryData, opts: &SolveOptions) -> Result<SolveReport> {
    opts.validate()?;
    let runs: Vec<(usize, Result<SolveReport>)> = (0..opts.multistart)
        .into_par_iter()
        .map(|idx| {
            let run = initial_path(bd, idx, opts)
                .and_then(|p0| minimize(st, bd, p0, idx, opts));
            (idx, run)
        })
        .collect();
    let mut failures = Vec::new();
    let mut first_error: Option<Error> = None;
    let mut best: Option<SolveReport> = None;
    for (idx, run) in runs {
        match run {
            Ok(report) => {
                let better = match &best {
                    None => true,
                    Some(b) => report.j() < b.j(),
                };
                if better {
                    best = Some(report);
                }
            }
            Err(e) => {
                failures.push(format!("start {idx}: {e}"));
                if first_error.is_none() {
                    first_error = Some(e);
                }
            }
        }
    }
    match best {
        Some(mut report) => {
            report.warnings.extend(failures);
            Ok(report)
        }
        // All starts failed: surface the first error verbatim so callers can
        // still classify it (singular geometry vs a stalled line search).
        None => Err(first_error.unwrap_or(Error::StepRejected {
            rejections: opts.max_rejections,
        })),
    }
}

/// Preconditioned descent from one explicit start path.
pub fn minimize(
    st: &GodelSpacetime,
    bd: &BoundaryData,
    path0: DiscretePath,
    start_index: usize,
    opts: &SolveOptions,
) -> Result<SolveReport> {
    opts.validate()?;
    let dim = path0.dim();
    let h = path0.h();
    let mut path = path0;
    let mut state = reduce(st, &path, bd)?;
    let mut g = grad_j(st, &path, bd)?;
    let (mut u, mut dual_sq) = precondition(h, dim, &g);
    let mut j_history = vec![state.j];
    let mut grad_history = vec![dual_sq.sqrt()];
    let mut rejections = 0usize;
    let mut iterations = 0usize;
    let mut converged = false;
    let mut stalled = false;
    let mut lbfgs = opts.lbfgs.then(|| LbfgsMemory::new(8));

    while iterations < opts.max_iters {
        if dual_sq.sqrt() <= opts.grad_tol {
            converged = true;
            break;
        }
        // Direction: L-BFGS two-loop when enabled and usable, otherwise the
        // plain preconditioned negative gradient.
        let mut dir: Vec<f64> = u.iter().map(|v| -v).collect();
        if let Some(mem) = lbfgs.as_mut() {
            if let Some(d) = mem.direction(h, dim, &g) {
                let slope: f64 = dot(&g, &d);
                if slope < 0.0 {
                    dir = d;
                } else {
                    mem.clear();
                }
            }
        }
        let slope = dot(&g, &dir);
        debug_assert!(slope < 0.0);

        let mut alpha = opts.step0;
        let mut accepted = None;
        let mut consecutive = 0usize;
        while consecutive < opts.max_rejections {
            match try_step(st, bd, &path, &dir, alpha) {
                Ok((cand, cand_state))
                    if cand_state.j <= state.j + opts.sufficient * alpha * slope =>
                {
                    accepted = Some((cand, cand_state, alpha));
                    break;
                }
                _ => {
                    rejections += 1;
                    consecutive += 1;
                    alpha *= opts.shrink;
                }
            }
        }
        let Some((new_path, new_state, _)) = accepted else {
            return Err(Error::StepRejected {
                rejections: consecutive,
            });
        };
        // The backtracked step can underflow to the identity once J stops
        // being resolvable in doubles; no further progress is possible then.
        if bitwise_equal(new_path.values(), path.values()) {
            stalled = true;
            break;
        }
        let new_g = grad_j(st, &new_path, bd)?;
        if let Some(mem) = lbfgs.as_mut() {
            mem.push(&path, &new_path, &g, &new_g);
        }
        path = new_path;
        state = new_state;
        g = new_g;
        let (nu, nd) = precondition(h, dim, &g);
        u = nu;
        dual_sq = nd;
        iterations += 1;
        j_history.push(state.j);
        grad_history.push(dual_sq.sqrt());
    }
    if !converged && dual_sq.sqrt() <= opts.grad_tol {
        converged = true;
    }

    let reconstruction = reconstruct(&state.integrals, bd)?;
    let mut warnings = state.warnings.clone();
    if stalled && !converged {
        warnings.push(format!(
            "J is stationary at floating-point resolution; dual gradient norm {:.3e} \
             did not reach grad_tol = {:.3e}",
            dual_sq.sqrt(),
            opts.grad_tol
        ));
    } else if !converged {
        warnings.push(format!(
            "stopped at max_iters = {} with dual gradient norm {:.3e}",
            opts.max_iters,
            dual_sq.sqrt()
        ));
    }
    Ok(SolveReport {
        converged,
        iterations,
        start_index,
        grad_norm: dual_sq.sqrt(),
        j_history,
        grad_history,
        rejections,
        state,
        reconstruction,
        path,
        warnings,
    })
}

fn try_step(
    st: &GodelSpacetime,
    bd: &BoundaryData,
    path: &DiscretePath,
    dir: &[f64],
    alpha: f64,
) -> Result<(DiscretePath, ReducedState)> {
    let cand = path.displaced(dir, alpha)?;
    let state = reduce(st, &cand, bd)?;
    Ok((cand, state))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn bitwise_equal(a: &[f64], b: &[f64]) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits())
}

/// Applies K^-1 channel-wise to a node-indexed gradient (endpoints zero)
/// and returns (K^-1 g, g' K^-1 g).
fn precondition(h: f64, dim: usize, g: &[f64]) -> (Vec<f64>, f64) {
    let nodes = g.len() / dim;
    let m = nodes - 2;
    let mut out = vec![0.0; g.len()];
    let mut dual_sq = 0.0;
    let mut rhs = vec![0.0; m];
    for k in 0..dim {
        for i in 0..m {
            rhs[i] = h * g[(i + 1) * dim + k];
        }
        tridiag_solve(&mut rhs);
        for i in 0..m {
            out[(i + 1) * dim + k] = rhs[i];
            dual_sq += g[(i + 1) * dim + k] * rhs[i];
        }
    }
    (out, dual_sq)
}

/// In-place Thomas solve of tridiag(-1, 2, -1) u = r.
fn tridiag_solve(r: &mut [f64]) {
    let m = r.len();
    if m == 0 {
        return;
    }
    let mut cp = vec![0.0; m];
    cp[0] = -0.5;
    r[0] *= 0.5;
    for i in 1..m {
        let w = 2.0 + cp[i - 1];
        cp[i] = -1.0 / w;
        r[i] = (r[i] + r[i - 1]) / w;
    }
    for i in (0..m - 1).rev() {
        let next = r[i + 1];
        r[i] -= cp[i] * next;
    }
}

struct LbfgsMemory {
    cap: usize,
    s: Vec<Vec<f64>>,
    y: Vec<Vec<f64>>,
    rho: Vec<f64>,
}

impl LbfgsMemory {
    fn new(cap: usize) -> Self {
        LbfgsMemory {
            cap,
            s: Vec::new(),
            y: Vec::new(),
            rho: Vec::new(),
        }
    }

    fn clear(&mut self) {
        self.s.clear();
        self.y.clear();
        self.rho.clear();
    }

    fn push(&mut self, old: &DiscretePath, new: &DiscretePath, g_old: &[f64], g_new: &[f64]) {
        let s: Vec<f64> = new
            .values()
            .iter()
            .zip(old.values())
            .map(|(a, b)| a - b)
            .collect();
        let y: Vec<f64> = g_new.iter().zip(g_old).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        let ss = dot(&s, &s).sqrt();
        let yy = dot(&y, &y).sqrt();
        // Curvature guard: skip updates that would break positivity.
        if sy <= 1e-12 * ss * yy {
            return;
        }
        if self.s.len() == self.cap {
            self.s.remove(0);
            self.y.remove(0);
            self.rho.remove(0);
        }
        self.s.push(s);
        self.y.push(y);
        self.rho.push(1.0 / sy);
    }

    /// Two-loop recursion with K^-1 in the middle; None when empty.
    fn direction(&self, h: f64, dim: usize, g: &[f64]) -> Option<Vec<f64>> {
        if self.s.is_empty() {
            return None;
        }
        let k = self.s.len();
        let mut q = g.to_vec();
        let mut alphas = vec![0.0; k];
        for i in (0..k).rev() {
            let a = self.rho[i] * dot(&self.s[i], &q);
            alphas[i] = a;
            for (qv, yv) in q.iter_mut().zip(&self.y[i]) {
                *qv -= a * yv;
            }
        }
        let (mut r, _) = precondition(h, dim, &q);
        for (i, &alpha) in alphas.iter().enumerate() {
            let b = self.rho[i] * dot(&self.y[i], &r);
            for (rv, sv) in r.iter_mut().zip(&self.s[i]) {
                *rv += (alpha - b) * sv;
            }
        }
        for v in r.iter_mut() {
            *v = -*v;
        }
        Some(r)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spacetime::Preset;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};

    fn bd(x_p: &[f64], x_q: &[f64], dy: f64, dt: f64) -> BoundaryData {
        BoundaryData::new(x_p.to_vec(), x_q.to_vec(), 0.0, dy, 0.0, dt).unwrap()
    }

    #[test]
    fn tridiag_solver_inverts_the_stiffness_matrix() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for m in [1usize, 2, 5, 33] {
            let rhs: Vec<f64> = (0..m).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let mut u = rhs.clone();
            tridiag_solve(&mut u);
            for i in 0..m {
                let left = if i > 0 { u[i - 1] } else { 0.0 };
                let right = if i + 1 < m { u[i + 1] } else { 0.0 };
                assert_relative_eq!(2.0 * u[i] - left - right, rhs[i], epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn flat_minimizer_is_reached_in_one_step() {
        let st = GodelSpacetime::preset(Preset::Flat).unwrap();
        let b = bd(&[0.0, 0.0], &[1.0, 0.5], 1.0, 2.0);
        let opts = SolveOptions {
            n: 100,
            ..SolveOptions::default()
        };
        // Perturbed start: the preconditioned step is exact Newton here.
        let p0 = initial_path(&b, 3, &opts).unwrap();
        let report = minimize(&st, &b, p0, 3, &opts).unwrap();
        assert!(report.converged);
        assert!(report.iterations <= 2, "iterations = {}", report.iterations);
        let want = 0.5 * ((1.0f64 + 0.25) + 1.0 - 4.0);
        assert_relative_eq!(report.j(), want, epsilon = 1e-10);
        let chord = DiscretePath::chord(&b.x_p, &b.x_q, opts.n).unwrap();
        let err = report
            .path
            .values()
            .iter()
            .zip(chord.values())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(err < 1e-8, "node error {err}");
    }

    #[test]
    fn chord_start_on_flat_converges_without_stepping() {
        let st = GodelSpacetime::preset(Preset::Flat).unwrap();
        let b = bd(&[0.0, 0.0], &[1.0, 0.0], 0.0, 0.0);
        let report = solve(&st, &b, &SolveOptions::default()).unwrap();
        assert!(report.converged);
        assert_eq!(report.iterations, 0);
        assert_eq!(report.start_index, 0);
    }

    #[test]
    fn godel_descent_converges_and_decreases_monotonically() {
        let st = GodelSpacetime::preset(Preset::Godel { omega: 1.0 }).unwrap();
        let b = BoundaryData::new(vec![-0.3, 0.0], vec![0.4, 0.3], 0.0, 0.8, 0.0, 0.5).unwrap();
        let opts = SolveOptions {
            n: 100,
            multistart: 3,
            ..SolveOptions::default()
        };
        let report = solve(&st, &b, &opts).unwrap();
        assert!(report.converged, "grad norm {}", report.grad_norm);
        assert!(report.grad_norm <= opts.grad_tol);
        for w in report.j_history.windows(2) {
            assert!(w[1] <= w[0] + 1e-15, "J increased: {} -> {}", w[0], w[1]);
        }
        assert!(report.reconstruction.closure_y.abs() < 1e-10);
        assert!(report.reconstruction.closure_t.abs() < 1e-10);
    }

    #[test]
    fn multistart_is_deterministic() {
        let st = GodelSpacetime::preset(Preset::Godel { omega: 1.0 }).unwrap();
        let b = BoundaryData::new(vec![-0.3, -0.2], vec![0.3, 0.2], 0.0, 1.0, 0.0, 0.2).unwrap();
        let opts = SolveOptions {
            n: 60,
            multistart: 4,
            ..SolveOptions::default()
        };
        let r1 = solve(&st, &b, &opts).unwrap();
        let r2 = solve(&st, &b, &opts).unwrap();
        assert_eq!(r1.j().to_bits(), r2.j().to_bits());
        assert_eq!(r1.start_index, r2.start_index);
        let bits = |p: &DiscretePath| p.values().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&r1.path), bits(&r2.path));
    }

    #[test]
    fn plain_descent_reaches_the_same_minimum() {
        let st = GodelSpacetime::preset(Preset::Godel { omega: 1.0 }).unwrap();
        let b = BoundaryData::new(vec![-0.3, 0.0], vec![0.4, 0.3], 0.0, 0.8, 0.0, 0.5).unwrap();
        // Plain descent can only certify gradients down to about
        // sqrt(eps |J|), so it gets a correspondingly looser tolerance.
        let plain = SolveOptions {
            n: 80,
            lbfgs: false,
            grad_tol: 1e-6,
            ..SolveOptions::default()
        };
        let accel = SolveOptions {
            lbfgs: true,
            grad_tol: 1e-8,
            ..plain.clone()
        };
        let r1 = solve(&st, &b, &plain).unwrap();
        let r2 = solve(&st, &b, &accel).unwrap();
        assert!(r1.converged && r2.converged);
        assert_relative_eq!(r1.j(), r2.j(), epsilon = 1e-9, max_relative = 1e-9);
        assert!(r2.grad_norm <= 1e-8);
    }

    #[test]
    fn plain_descent_stalls_honestly_below_float_resolution() {
        let st = GodelSpacetime::preset(Preset::Godel { omega: 1.0 }).unwrap();
        let b = BoundaryData::new(vec![-0.3, 0.0], vec![0.4, 0.3], 0.0, 0.8, 0.0, 0.5).unwrap();
        let opts = SolveOptions {
            n: 60,
            lbfgs: false,
            grad_tol: 1e-13,
            ..SolveOptions::default()
        };
        let r = solve(&st, &b, &opts).unwrap();
        assert!(!r.converged);
        // Breaks out well before the iteration budget, with an explanation.
        assert!(r.iterations < opts.max_iters / 2);
        assert!(r
            .warnings
            .iter()
            .any(|w| w.contains("floating-point resolution")));
    }

    #[test]
    fn max_iters_reports_nonconvergence_instead_of_failing() {
        let st = GodelSpacetime::preset(Preset::Godel { omega: 1.0 }).unwrap();
        let b = BoundaryData::new(vec![-0.5, 0.0], vec![0.5, 0.5], 0.0, 1.5, 0.0, 0.5).unwrap();
        let opts = SolveOptions {
            n: 60,
            max_iters: 1,
            grad_tol: 1e-15,
            ..SolveOptions::default()
        };
        let report = solve(&st, &b, &opts).unwrap();
        assert!(!report.converged);
        assert_eq!(report.iterations, 1);
        assert!(report.warnings.iter().any(|w| w.contains("max_iters")));
    }

    #[test]
    fn option_validation_rejects_nonsense() {
        let st = GodelSpacetime::preset(Preset::Flat).unwrap();
        let b = bd(&[0.0, 0.0], &[1.0, 0.0], 0.0, 0.0);
        for bad in [
            SolveOptions { n: 1, ..SolveOptions::default() },
            SolveOptions { shrink: 1.0, ..SolveOptions::default() },
            SolveOptions { sufficient: 0.9, ..SolveOptions::default() },
            SolveOptions { multistart: 0, ..SolveOptions::default() },
            SolveOptions { grad_tol: 0.0, ..SolveOptions::default() },
        ] {
            assert!(matches!(
                solve(&st, &b, &bad),
                Err(Error::InvalidParameter(_))
            ));
        }
    }

    #[test]
    fn initial_paths_share_endpoints_and_differ_in_the_interior() {
        let b = bd(&[0.25, -1.0], &[1.5, 2.0], 0.0, 0.0);
        let opts = SolveOptions {
            n: 16,
            ..SolveOptions::default()
        };
        let p0 = initial_path(&b, 0, &opts).unwrap();
        let chord = DiscretePath::chord(&b.x_p, &b.x_q, 16).unwrap();
        assert_eq!(p0, chord);
        let p1 = initial_path(&b, 1, &opts).unwrap();
        let p2 = initial_path(&b, 2, &opts).unwrap();
        assert_eq!(p1.first(), chord.first());
        assert_eq!(p1.last(), chord.last());
        assert_ne!(p1, chord);
        assert_ne!(p1, p2);
        // Same index, same path: seeding is pure.
        assert_eq!(initial_path(&b, 1, &opts).unwrap(), p1);
    }
}

