//! Independent cross-check: direct integration of the geodesic equation.
//!
//! Nothing here reuses the reduction. The full (n+2)-dimensional metric is
//! assembled pointwise, Christoffel symbols come either from the exact
//! coefficient gradients or from central finite differences of the metric,
//! and the second-order system z'' = -Gamma(z', z') is integrated with a
//! fixed-step RK4. A damped Newton iteration on the initial velocity turns
//! this into a two-point solver, with a four-segment multiple-shooting
//! fallback for stiff boundary data. Agreement between this route and the
//! variational minimizer validates both.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::pathspace::{DiscretePath, FiberPath};
use crate::reduction::BoundaryData;
use crate::spacetime::GodelSpacetime;

/// How metric derivatives are obtained for the Christoffel symbols.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub enum ChristoffelMode {
    /// Exact coordinate gradients of the coefficient expressions.
    #[default]
    Exact,
    /// Central differences of the metric with the given step.
    FiniteDifference { step: f64 },
}

/// Full metric at spatial position x, chart order (x1..xn, y, t).
fn metric_full(st: &GodelSpacetime, x: &[f64]) -> Result<DMatrix<f64>> {
    let n = st.dim();
    st.h(x)?;
    let (a, b, c) = st.coefficients(x)?;
    let gb = st.base().metric_at(x)?;
    let mut g = DMatrix::zeros(n + 2, n + 2);
    g.view_mut((0, 0), (n, n)).copy_from(&gb);
    g[(n, n)] = a;
    g[(n, n + 1)] = b;
    g[(n + 1, n)] = b;
    g[(n + 1, n + 1)] = -c;
    Ok(g)
}

/// Christoffel symbols at z = (x, y, t); entry k is the symmetric matrix
/// Gamma^k_{ij}. Fiber coordinates never enter the metric, so their
/// derivative slots are identically zero in both modes.
pub fn christoffel(
    st: &GodelSpacetime,
    z: &[f64],
    mode: ChristoffelMode,
) -> Result<Vec<DMatrix<f64>>> {
    let n = st.dim();
    let m = n + 2;
    if z.len() != m {
        return Err(Error::DimMismatch {
            expected: m,
            got: z.len(),
        });
    }
    let x = &z[..n];
    let g = metric_full(st, x)?;
    let ginv = g.clone().try_inverse().ok_or_else(|| {
        Error::Inconsistency(format!("metric not invertible at {x:?}"))
    })?;
    // dg[l] = d g / d z^l; only the first n are nonzero.
    let mut dg: Vec<DMatrix<f64>> = vec![DMatrix::zeros(m, m); m];
    match mode {
        ChristoffelMode::Exact => {
            let (va, vb, vc) = st.coefficient_grads(x)?;
            if !st.base().is_identity() {
                let (_, dgb) = st.base().metric_grad_at(x)?;
                for l in 0..n {
                    dg[l].view_mut((0, 0), (n, n)).copy_from(&dgb[l]);
                }
            }
            for (l, dgl) in dg.iter_mut().enumerate().take(n) {
                dgl[(n, n)] = va.grad[l];
                dgl[(n, n + 1)] = vb.grad[l];
                dgl[(n + 1, n)] = vb.grad[l];
                dgl[(n + 1, n + 1)] = -vc.grad[l];
            }
        }
        ChristoffelMode::FiniteDifference { step } => {
            if step.is_nan() || step <= 0.0 {
                return Err(Error::InvalidParameter(
                    "finite-difference step must be positive".into(),
                ));
            }
            let mut xp = x.to_vec();
            for l in 0..n {
                let keep = xp[l];
                xp[l] = keep + step;
                let gp = metric_full(st, &xp)?;
                xp[l] = keep - step;
                let gm = metric_full(st, &xp)?;
                xp[l] = keep;
                dg[l] = (gp - gm) / (2.0 * step);
            }
        }
    }
    let mut out = Vec::with_capacity(m);
    for k in 0..m {
        let mut gk = DMatrix::zeros(m, m);
        for i in 0..m {
            for j in i..m {
                let mut s = 0.0;
                for l in 0..m {
                    s += ginv[(k, l)] * (dg[i][(l, j)] + dg[j][(l, i)] - dg[l][(i, j)]);
                }
                gk[(i, j)] = 0.5 * s;
                gk[(j, i)] = 0.5 * s;
            }
        }
        out.push(gk);
    }
    Ok(out)
}

/// Geodesic acceleration -Gamma^k(v, v) at z.
pub fn acceleration(
    st: &GodelSpacetime,
    z: &[f64],
    v: &[f64],
    mode: ChristoffelMode,
) -> Result<Vec<f64>> {
    let gams = christoffel(st, z, mode)?;
    let m = z.len();
    let mut a = vec![0.0; m];
    for k in 0..m {
        let mut s = 0.0;
        for i in 0..m {
            for j in 0..m {
                s += gams[k][(i, j)] * v[i] * v[j];
            }
        }
        a[k] = -s;
    }
    Ok(a)
}

/// One state of the second-order system.
#[derive(Clone, Debug, Serialize)]
pub struct State {
    pub z: Vec<f64>,
    pub v: Vec<f64>,
}

/// Fixed-step RK4 solution on s in [s0, s1], states at every node.
#[derive(Clone, Debug, Serialize)]
pub struct Trajectory {
    pub s0: f64,
    pub s1: f64,
    pub states: Vec<State>,
}

impl Trajectory {
    pub fn steps(&self) -> usize {
        self.states.len() - 1
    }

    pub fn end(&self) -> &State {
        self.states.last().expect("trajectory has at least one state")
    }
}

fn rk4_rhs(
    st: &GodelSpacetime,
    z: &[f64],
    v: &[f64],
    mode: ChristoffelMode,
) -> Result<(Vec<f64>, Vec<f64>)> {
    Ok((v.to_vec(), acceleration(st, z, v, mode)?))
}

/// Integrates the geodesic equation from (z0, v0) over [s0, s1] with the
/// given number of RK4 steps. Divergence to non-finite values is an error.
pub fn integrate_span(
    st: &GodelSpacetime,
    z0: &[f64],
    v0: &[f64],
    s0: f64,
    s1: f64,
    steps: usize,
    mode: ChristoffelMode,
) -> Result<Trajectory> {
    let m = st.dim() + 2;
    if z0.len() != m || v0.len() != m {
        return Err(Error::DimMismatch {
            expected: m,
            got: z0.len().max(v0.len()),
        });
    }
    if steps == 0 {
        return Err(Error::InvalidParameter("need at least one step".into()));
    }
    let h = (s1 - s0) / steps as f64;
    let mut z = z0.to_vec();
    let mut v = v0.to_vec();
    let mut states = Vec::with_capacity(steps + 1);
    states.push(State { z: z.clone(), v: v.clone() });
    let add = |a: &[f64], b: &[f64], s: f64| -> Vec<f64> {
        a.iter().zip(b).map(|(x, y)| x + s * y).collect()
    };
    for _ in 0..steps {
        let (k1z, k1v) = rk4_rhs(st, &z, &v, mode)?;
        let (k2z, k2v) = rk4_rhs(st, &add(&z, &k1z, 0.5 * h), &add(&v, &k1v, 0.5 * h), mode)?;
        let (k3z, k3v) = rk4_rhs(st, &add(&z, &k2z, 0.5 * h), &add(&v, &k2v, 0.5 * h), mode)?;
        let (k4z, k4v) = rk4_rhs(st, &add(&z, &k3z, h), &add(&v, &k3v, h), mode)?;
        for i in 0..m {
            z[i] += h / 6.0 * (k1z[i] + 2.0 * k2z[i] + 2.0 * k3z[i] + k4z[i]);
            v[i] += h / 6.0 * (k1v[i] + 2.0 * k2v[i] + 2.0 * k3v[i] + k4v[i]);
        }
        if z.iter().chain(v.iter()).any(|u| !u.is_finite()) {
            return Err(Error::Inconsistency(
                "trajectory diverged to non-finite values".into(),
            ));
        }
        states.push(State { z: z.clone(), v: v.clone() });
    }
    Ok(Trajectory { s0, s1, states })
}

/// Integration over the unit interval.
pub fn integrate(
    st: &GodelSpacetime,
    z0: &[f64],
    v0: &[f64],
    steps: usize,
    mode: ChristoffelMode,
) -> Result<Trajectory> {
    integrate_span(st, z0, v0, 0.0, 1.0, steps, mode)
}

#[derive(Clone, Debug, Serialize)]
pub struct ShootOptions {
    /// RK4 steps across the unit interval.
    pub steps: usize,
    /// Target sup norm of the endpoint position residual.
    pub tol: f64,
    /// Newton iteration budget (shared by the fallback).
    pub max_iters: usize,
    /// Finite-difference step for the shooting Jacobian.
    pub fd_step: f64,
    /// Step-halving factor when a Newton update does not improve.
    pub damping: f64,
    pub mode: ChristoffelMode,
}

impl Default for ShootOptions {
    fn default() -> Self {
        ShootOptions {
            steps: 2000,
            tol: 1e-10,
            max_iters: 100,
            fd_step: 1e-6,
            damping: 0.5,
            mode: ChristoffelMode::Exact,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ShootReport {
    pub trajectory: Trajectory,
    pub v0: Vec<f64>,
    /// Endpoint position residual, sup norm.
    pub residual: f64,
    pub iterations: usize,
    /// True when the four-segment fallback produced the answer.
    pub multiple_shooting: bool,
}

/// Boundary endpoints as full chart vectors.
fn endpoints(bd: &BoundaryData) -> (Vec<f64>, Vec<f64>) {
    let mut zp = bd.x_p.clone();
    zp.push(bd.y_p);
    zp.push(bd.t_p);
    let mut zq = bd.x_q.clone();
    zq.push(bd.y_q);
    zq.push(bd.t_q);
    (zp, zq)
}

fn sup(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |acc, x| acc.max(x.abs()))
}

/// Two-point solver: Newton on the initial velocity, seeded by `v0_seed`,
/// falling back to four-segment multiple shooting when single shooting
/// stalls. The returned trajectory always starts exactly at the near
/// endpoint; `residual` measures the miss at the far one.
pub fn shoot(
    st: &GodelSpacetime,
    bd: &BoundaryData,
    v0_seed: &[f64],
    opts: &ShootOptions,
) -> Result<ShootReport> {
    let m = st.dim() + 2;
    if v0_seed.len() != m {
        return Err(Error::DimMismatch {
            expected: m,
            got: v0_seed.len(),
        });
    }
    if !opts.steps.is_multiple_of(4) {
        return Err(Error::InvalidParameter(
            "steps must be divisible by 4 (multiple-shooting fallback)".into(),
        ));
    }
    let (zp, zq) = endpoints(bd);
    match single_shoot(st, &zp, &zq, v0_seed, opts) {
        Ok(r) => Ok(r),
        Err(first) => {
            multiple_shoot(st, &zp, &zq, v0_seed, opts).map_err(|second| {
                // Keep the more informative of the two failures.
                match (&first, &second) {
                    (
                        Error::ShootingFailed { best_residual: a, .. },
                        Error::ShootingFailed { best_residual: b, .. },
                    ) if a <= b => first,
                    _ => second,
                }
            })
        }
    }
}

fn single_shoot(
    st: &GodelSpacetime,
    zp: &[f64],
    zq: &[f64],
    v0_seed: &[f64],
    opts: &ShootOptions,
) -> Result<ShootReport> {
    let m = zp.len();
    let eval = |v0: &[f64]| -> Result<(Trajectory, Vec<f64>)> {
        let traj = integrate(st, zp, v0, opts.steps, opts.mode)?;
        let f: Vec<f64> = traj.end().z.iter().zip(zq).map(|(a, b)| a - b).collect();
        Ok((traj, f))
    };
    let mut v0 = v0_seed.to_vec();
    let (mut traj, mut f) = eval(&v0)?;
    let mut res = sup(&f);
    let mut best_res = res;
    for iter in 0..opts.max_iters {
        if res <= opts.tol {
            return Ok(ShootReport {
                trajectory: traj,
                v0,
                residual: res,
                iterations: iter,
                multiple_shooting: false,
            });
        }
        // Finite-difference Jacobian dF/dv0.
        let mut jac = DMatrix::zeros(m, m);
        for j in 0..m {
            let mut vp = v0.clone();
            vp[j] += opts.fd_step;
            let fp = match eval(&vp) {
                Ok((_, fp)) => fp,
                Err(_) => {
                    return Err(Error::ShootingFailed {
                        iterations: iter,
                        best_residual: best_res,
                    })
                }
            };
            for i in 0..m {
                jac[(i, j)] = (fp[i] - f[i]) / opts.fd_step;
            }
        }
        let rhs = nalgebra::DVector::from_iterator(m, f.iter().map(|x| -x));
        let Some(delta) = jac.lu().solve(&rhs) else {
            return Err(Error::ShootingFailed {
                iterations: iter,
                best_residual: best_res,
            });
        };
        // Damped update: accept the first scale that improves the residual.
        let mut scale = 1.0;
        let mut improved = None;
        for _ in 0..30 {
            let cand: Vec<f64> = v0
                .iter()
                .enumerate()
                .map(|(i, x)| x + scale * delta[i])
                .collect();
            match eval(&cand) {
                Ok((t, fc)) if sup(&fc) < res => {
                    improved = Some((cand, t, fc));
                    break;
                }
                _ => scale *= opts.damping,
            }
        }
        let Some((cand, t, fc)) = improved else {
            return Err(Error::ShootingFailed {
                iterations: iter + 1,
                best_residual: best_res,
            });
        };
        v0 = cand;
        traj = t;
        f = fc;
        res = sup(&f);
        best_res = best_res.min(res);
    }
    if res <= opts.tol {
        return Ok(ShootReport {
            trajectory: traj,
            v0,
            residual: res,
            iterations: opts.max_iters,
            multiple_shooting: false,
        });
    }
    Err(Error::ShootingFailed {
        iterations: opts.max_iters,
        best_residual: best_res,
    })
}

/// Four-segment multiple shooting. Unknowns: v0 plus full states at the
/// three interior junction times; equations: state continuity at the
/// junctions plus the endpoint position condition.
fn multiple_shoot(
    st: &GodelSpacetime,
    zp: &[f64],
    zq: &[f64],
    v0_seed: &[f64],
    opts: &ShootOptions,
) -> Result<ShootReport> {
    let m = zp.len();
    let nseg = 4usize;
    let seg_steps = opts.steps / nseg;
    // Seed junction states from the seed trajectory (divergence downgraded
    // to a chord-like guess).
    let mut u = vec![0.0; (2 * nseg - 1) * m];
    u[..m].copy_from_slice(v0_seed);
    match integrate(st, zp, v0_seed, opts.steps, opts.mode) {
        Ok(t) => {
            for j in 1..nseg {
                let s = &t.states[j * seg_steps];
                u[(2 * j - 1) * m..2 * j * m].copy_from_slice(&s.z);
                u[2 * j * m..(2 * j + 1) * m].copy_from_slice(&s.v);
            }
        }
        Err(_) => {
            for j in 1..nseg {
                let w = j as f64 / nseg as f64;
                for i in 0..m {
                    u[(2 * j - 1) * m + i] = (1.0 - w) * zp[i] + w * zq[i];
                    u[2 * j * m + i] = v0_seed[i];
                }
            }
        }
    }
    let dim_u = u.len();
    let residual = |u: &[f64]| -> Result<Vec<f64>> {
        let mut f = Vec::with_capacity(dim_u);
        for j in 0..nseg {
            let (z0, v0): (Vec<f64>, Vec<f64>) = if j == 0 {
                (zp.to_vec(), u[..m].to_vec())
            } else {
                (
                    u[(2 * j - 1) * m..2 * j * m].to_vec(),
                    u[2 * j * m..(2 * j + 1) * m].to_vec(),
                )
            };
            let t = integrate_span(
                st,
                &z0,
                &v0,
                j as f64 / nseg as f64,
                (j + 1) as f64 / nseg as f64,
                seg_steps,
                opts.mode,
            )?;
            let end = t.end();
            if j + 1 < nseg {
                for i in 0..m {
                    f.push(end.z[i] - u[(2 * (j + 1) - 1) * m + i]);
                }
                for i in 0..m {
                    f.push(end.v[i] - u[2 * (j + 1) * m + i]);
                }
            } else {
                f.extend(end.z.iter().zip(zq).map(|(a, b)| a - b));
            }
        }
        Ok(f)
    };
    let mut f = residual(&u)?;
    let mut res = sup(&f);
    let mut best_res = res;
    let mut iterations = 0;
    while iterations < opts.max_iters {
        if res <= opts.tol {
            break;
        }
        let mut jac = DMatrix::zeros(dim_u, dim_u);
        for j in 0..dim_u {
            let mut up = u.clone();
            up[j] += opts.fd_step;
            let fp = residual(&up).map_err(|_| Error::ShootingFailed {
                iterations,
                best_residual: best_res,
            })?;
            for i in 0..dim_u {
                jac[(i, j)] = (fp[i] - f[i]) / opts.fd_step;
            }
        }
        let rhs = nalgebra::DVector::from_iterator(dim_u, f.iter().map(|x| -x));
        let Some(delta) = jac.lu().solve(&rhs) else {
            return Err(Error::ShootingFailed {
                iterations,
                best_residual: best_res,
            });
        };
        let mut scale = 1.0;
        let mut improved = None;
        for _ in 0..30 {
            let cand: Vec<f64> = u
                .iter()
                .enumerate()
                .map(|(i, x)| x + scale * delta[i])
                .collect();
            match residual(&cand) {
                Ok(fc) if sup(&fc) < res => {
                    improved = Some((cand, fc));
                    break;
                }
                _ => scale *= opts.damping,
            }
        }
        let Some((cand, fc)) = improved else {
            return Err(Error::ShootingFailed {
                iterations: iterations + 1,
                best_residual: best_res,
            });
        };
        u = cand;
        f = fc;
        res = sup(&f);
        best_res = best_res.min(res);
        iterations += 1;
    }
    if res > opts.tol {
        return Err(Error::ShootingFailed {
            iterations,
            best_residual: best_res,
        });
    }
    // Re-integrate the whole interval from the solved initial velocity so
    // the reported trajectory is one smooth solve (junction mismatches are
    // at the Newton tolerance).
    let v0 = u[..m].to_vec();
    let trajectory = integrate(st, zp, &v0, opts.steps, opts.mode)?;
    let res_final: f64 = sup(
        &trajectory
            .end()
            .z
            .iter()
            .zip(zq)
            .map(|(a, b)| a - b)
            .collect::<Vec<_>>(),
    );
    Ok(ShootReport {
        trajectory,
        v0,
        residual: res_final,
        iterations,
        multiple_shooting: true,
    })
}

/// Initial-velocity seed from a discrete spacetime curve: one-sided
/// difference of the first segment, scaled to the unit interval.
pub fn velocity_seed(path: &DiscretePath, y: &FiberPath, t: &FiberPath) -> Vec<f64> {
    let h = path.h();
    let mut v: Vec<f64> = path
        .point(1)
        .iter()
        .zip(path.point(0))
        .map(|(a, b)| (a - b) / h)
        .collect();
    v.push((y.value(1) - y.value(0)) / h);
    v.push((t.value(1) - t.value(0)) / h);
    v
}

/// Conservation and residual diagnostics of a stored trajectory.
#[derive(Clone, Debug, Serialize)]
pub struct OdeAudit {
    /// Sup over interior nodes of the second-difference geodesic defect.
    pub max_residual: f64,
    /// Sup deviation of A y' + B t' from its initial value.
    pub momentum_drift_y: f64,
    /// Sup deviation of B y' - C t' from its initial value.
    pub momentum_drift_t: f64,
    /// Sup deviation of the Lorentzian speed <v, v> from its initial value.
    pub energy_drift: f64,
    /// Initial Lorentzian speed (negative for timelike curves).
    pub energy: f64,
}

pub fn audit(st: &GodelSpacetime, traj: &Trajectory, mode: ChristoffelMode) -> Result<OdeAudit> {
    let n = st.dim();
    let steps = traj.steps();
    if steps < 2 {
        return Err(Error::GridMismatch("audit needs at least 2 steps".into()));
    }
    let h = (traj.s1 - traj.s0) / steps as f64;
    let mut max_residual = 0.0f64;
    for i in 1..steps {
        let zm = &traj.states[i - 1].z;
        let z0 = &traj.states[i].z;
        let zp = &traj.states[i + 1].z;
        let vc: Vec<f64> = zp
            .iter()
            .zip(zm)
            .map(|(a, b)| (a - b) / (2.0 * h))
            .collect();
        let acc = acceleration(st, z0, &vc, mode)?;
        for k in 0..z0.len() {
            let second = (zp[k] - 2.0 * z0[k] + zm[k]) / (h * h);
            max_residual = max_residual.max((second - acc[k]).abs());
        }
    }
    let fiber_momenta = |s: &State| -> Result<(f64, f64)> {
        let (a, b, c) = st.coefficients(&s.z[..n])?;
        let vy = s.v[n];
        let vt = s.v[n + 1];
        Ok((a * vy + b * vt, b * vy - c * vt))
    };
    let speed = |s: &State| -> Result<f64> {
        let (a, b, c) = st.coefficients(&s.z[..n])?;
        let vy = s.v[n];
        let vt = s.v[n + 1];
        let base = st.base().inner(&s.z[..n], &s.v[..n], &s.v[..n])?;
        Ok(base + a * vy * vy + 2.0 * b * vy * vt - c * vt * vt)
    };
    let (p_y0, p_t0) = fiber_momenta(&traj.states[0])?;
    let e0 = speed(&traj.states[0])?;
    let (mut dy, mut dt, mut de) = (0.0f64, 0.0f64, 0.0f64);
    for s in &traj.states {
        let (py, pt) = fiber_momenta(s)?;
        dy = dy.max((py - p_y0).abs());
        dt = dt.max((pt - p_t0).abs());
        de = de.max((speed(s)? - e0).abs());
    }
    Ok(OdeAudit {
        max_residual,
        momentum_drift_y: dy,
        momentum_drift_t: dt,
        energy_drift: de,
        energy: e0,
    })
}

/// Downsamples a trajectory onto an N-node path grid; the step count must
/// be a multiple of N.
pub fn sample(st: &GodelSpacetime, traj: &Trajectory, n: usize) -> Result<(DiscretePath, FiberPath, FiberPath)> {
    let steps = traj.steps();
    if n < 2 || !steps.is_multiple_of(n) {
        return Err(Error::GridMismatch(format!(
            "cannot sample {steps} steps onto {n} segments"
        )));
    }
    let stride = steps / n;
    let dim = st.dim();
    let mut pts = Vec::with_capacity((n + 1) * dim);
    let mut ys = Vec::with_capacity(n + 1);
    let mut ts = Vec::with_capacity(n + 1);
    for i in 0..=n {
        let z = &traj.states[i * stride].z;
        pts.extend_from_slice(&z[..dim]);
        ys.push(z[dim]);
        ts.push(z[dim + 1]);
    }
    Ok((
        DiscretePath::from_points(dim, pts)?,
        FiberPath::from_values(ys)?,
        FiberPath::from_values(ts)?,
    ))
}

/// Sup distance over the shared grid between a discrete spacetime curve and
/// a trajectory, across all chart coordinates.
pub fn sup_distance(
    path: &DiscretePath,
    y: &FiberPath,
    t: &FiberPath,
    traj: &Trajectory,
) -> Result<f64> {
    let n = path.n_segments();
    let steps = traj.steps();
    if !steps.is_multiple_of(n) || y.len() != n + 1 || t.len() != n + 1 {
        return Err(Error::GridMismatch(format!(
            "grids not aligned: {steps} steps vs {n} segments"
        )));
    }
    let stride = steps / n;
    let dim = path.dim();
    let mut worst = 0.0f64;
    for i in 0..=n {
        let z = &traj.states[i * stride].z;
        for (p, zk) in path.point(i).iter().zip(z) {
            worst = worst.max((p - zk).abs());
        }
        worst = worst.max((y.value(i) - z[dim]).abs());
        worst = worst.max((t.value(i) - z[dim + 1]).abs());
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optimizer::{solve, SolveOptions};
    use crate::reduction::reconstruct;
    use crate::spacetime::Preset;
    use approx::assert_relative_eq;
    use std::collections::HashMap;

    fn godel() -> GodelSpacetime {
        GodelSpacetime::preset(Preset::Godel { omega: 1.0 }).unwrap()
    }

    #[test]
    fn flat_geodesics_are_straight_lines() {
        let st = GodelSpacetime::preset(Preset::Flat).unwrap();
        let z0 = [0.0, 0.0, 0.0, 0.0];
        let v0 = [1.0, -0.5, 0.3, 2.0];
        let traj = integrate(&st, &z0, &v0, 40, ChristoffelMode::Exact).unwrap();
        for (i, s) in traj.states.iter().enumerate() {
            let lam = i as f64 / 40.0;
            for (k, &v) in v0.iter().enumerate() {
                assert_relative_eq!(s.z[k], lam * v, epsilon = 1e-13);
                assert_relative_eq!(s.v[k], v, epsilon = 1e-13);
            }
        }
        // Shooting is exactly Newton on a linear map: one iteration.
        let bd = BoundaryData::new(vec![0.0, 0.0], vec![1.0, 0.5], 0.0, 0.7, 0.0, 1.1).unwrap();
        let seed = [0.5, 0.5, 0.5, 0.5];
        let r = shoot(&st, &bd, &seed, &ShootOptions { steps: 40, ..Default::default() }).unwrap();
        assert!(r.iterations <= 2, "iterations = {}", r.iterations);
        assert!(r.residual < 1e-10);
        assert!(!r.multiple_shooting);
        assert_relative_eq!(r.v0[0], 1.0, epsilon = 1e-8);
        assert_relative_eq!(r.v0[3], 1.1, epsilon = 1e-8);
    }

    #[test]
    fn static_exponential_profile_has_unit_connection_entry() {
        // C = exp(2 x1): Gamma^t_{x1 t} = C'/(2C) = 1 at every point, and
        // Gamma^{x1}_{tt} = C'/2 = exp(2 x1).
        let st = GodelSpacetime::preset(Preset::StaticEmbed {
            beta: "exp(2*x1)".into(),
            dim: 2,
            params: HashMap::new(),
        })
        .unwrap();
        for x1 in [-0.7, 0.0, 0.4] {
            let z = [x1, 0.2, 0.1, -0.3];
            let g = christoffel(&st, &z, ChristoffelMode::Exact).unwrap();
            let t_idx = 3;
            assert_relative_eq!(g[t_idx][(0, t_idx)], 1.0, epsilon = 1e-12);
            assert_relative_eq!(g[0][(t_idx, t_idx)], (2.0 * x1).exp(), epsilon = 1e-12);
            // y is a flat dummy direction: its symbol vanishes identically.
            assert!(g[2].iter().all(|v| v.abs() < 1e-13));
        }
    }

    #[test]
    fn finite_difference_symbols_converge_to_exact_ones() {
        let st = godel();
        let z = [0.3, -0.2, 0.5, 0.1];
        let exact = christoffel(&st, &z, ChristoffelMode::Exact).unwrap();
        let err = |step: f64| -> f64 {
            let fd = christoffel(&st, &z, ChristoffelMode::FiniteDifference { step }).unwrap();
            let mut worst = 0.0f64;
            for (a, b) in exact.iter().zip(&fd) {
                for (x, y) in a.iter().zip(b.iter()) {
                    worst = worst.max((x - y).abs());
                }
            }
            worst
        };
        // Central differences are second order: quartering under halving.
        let e1 = err(1e-3);
        let e2 = err(5e-4);
        let ratio = e1 / e2;
        assert!((3.0..5.0).contains(&ratio), "ratio {ratio} ({e1} vs {e2})");
        // And the production step is already deep in agreement.
        assert!(err(1e-6) < 1e-9);
    }

    #[test]
    fn rk4_is_fourth_order() {
        let st = godel();
        let z0 = [0.0, 0.0, 0.0, 0.0];
        let v0 = [0.4, 0.1, 0.6, 0.8];
        let reference = integrate(&st, &z0, &v0, 4000, ChristoffelMode::Exact).unwrap();
        let zref = &reference.end().z;
        let e = |steps: usize| -> f64 {
            let t = integrate(&st, &z0, &v0, steps, ChristoffelMode::Exact).unwrap();
            t.end()
                .z
                .iter()
                .zip(zref)
                .fold(0.0f64, |acc, (a, b)| acc.max((a - b).abs()))
        };
        let ratio = e(125) / e(250);
        assert!((12.0..20.0).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn conserved_quantities_stay_put() {
        let st = godel();
        let z0 = [0.1, -0.3, 0.0, 0.0];
        let v0 = [0.5, 0.2, 0.7, 0.9];
        let traj = integrate(&st, &z0, &v0, 2000, ChristoffelMode::Exact).unwrap();
        let a = audit(&st, &traj, ChristoffelMode::Exact).unwrap();
        assert!(a.momentum_drift_y < 1e-8, "{}", a.momentum_drift_y);
        assert!(a.momentum_drift_t < 1e-8, "{}", a.momentum_drift_t);
        assert!(a.energy_drift < 1e-8, "{}", a.energy_drift);
        // The defect of the true solution under second differences is
        // O(h^2), far from zero but grid-bound.
        assert!(a.max_residual < 1.0);
    }

    #[test]
    fn audit_flags_a_fake_trajectory() {
        // A straight chord is not a geodesic here: the residual stays large
        // and the momenta drift.
        let st = godel();
        let steps = 200;
        let mut states = Vec::new();
        for i in 0..=steps {
            let s = i as f64 / steps as f64;
            states.push(State {
                z: vec![s, 0.0, 0.8 * s, 0.3 * s],
                v: vec![1.0, 0.0, 0.8, 0.3],
            });
        }
        let traj = Trajectory { s0: 0.0, s1: 1.0, states };
        let a = audit(&st, &traj, ChristoffelMode::Exact).unwrap();
        assert!(a.max_residual > 0.1, "residual {}", a.max_residual);
        assert!(a.momentum_drift_y > 1e-2, "drift {}", a.momentum_drift_y);
    }

    #[test]
    fn shooting_matches_the_variational_route() {
        let st = godel();
        let bd = BoundaryData::new(vec![-0.2, 0.0], vec![0.3, 0.2], 0.0, 0.6, 0.0, 0.4).unwrap();
        let sopts = SolveOptions {
            n: 100,
            ..SolveOptions::default()
        };
        let var = solve(&st, &bd, &sopts).unwrap();
        assert!(var.converged);
        let rec = reconstruct(&var.state.integrals, &bd).unwrap();
        let seed = velocity_seed(&var.path, &rec.y, &rec.t);
        let r = shoot(
            &st,
            &bd,
            &seed,
            &ShootOptions { steps: 1000, ..Default::default() },
        )
        .unwrap();
        assert!(r.residual <= 1e-10);
        let d = sup_distance(&var.path, &rec.y, &rec.t, &r.trajectory).unwrap();
        assert!(d < 1e-3, "sup distance {d}");
        // Negative control: an unconverged start curve is far from the
        // geodesic, so the comparison has teeth.
        let chord = DiscretePath::chord(&bd.x_p, &bd.x_q, 100).unwrap();
        let pi = crate::pathspace::path_integrals(&st, &chord).unwrap();
        let rec0 = reconstruct(&pi, &bd).unwrap();
        let d0 = sup_distance(&chord, &rec0.y, &rec0.t, &r.trajectory).unwrap();
        assert!(d0 > 1e-3, "control distance {d0}");
    }

    #[test]
    fn multiple_shooting_agrees_with_single_shooting() {
        let st = godel();
        let bd = BoundaryData::new(vec![-0.2, 0.1], vec![0.25, -0.15], 0.0, 0.5, 0.0, 0.3).unwrap();
        let seed = vec![0.45, -0.25, 0.5, 0.3];
        let opts = ShootOptions { steps: 400, ..Default::default() };
        let single = shoot(&st, &bd, &seed, &opts).unwrap();
        assert!(!single.multiple_shooting);
        let (zp, zq) = endpoints(&bd);
        let multi = multiple_shoot(&st, &zp, &zq, &seed, &opts).unwrap();
        assert!(multi.residual <= 1e-8, "residual {}", multi.residual);
        for (a, b) in single.v0.iter().zip(&multi.v0) {
            assert_relative_eq!(a, b, epsilon = 1e-6, max_relative = 1e-6);
        }
    }

    #[test]
    fn starved_newton_reports_failure() {
        let st = godel();
        let bd = BoundaryData::new(vec![-0.2, 0.0], vec![0.3, 0.2], 0.0, 0.6, 0.0, 0.4).unwrap();
        let opts = ShootOptions {
            steps: 200,
            max_iters: 1,
            tol: 1e-14,
            ..Default::default()
        };
        let r = shoot(&st, &bd, &[5.0, 5.0, 5.0, 5.0], &opts);
        assert!(matches!(r, Err(Error::ShootingFailed { .. })), "{r:?}");
    }

    #[test]
    fn sampling_requires_aligned_grids() {
        let st = godel();
        let traj = integrate(&st, &[0.0, 0.0, 0.0, 0.0], &[0.1, 0.0, 0.2, 0.3], 100, ChristoffelMode::Exact).unwrap();
        assert!(sample(&st, &traj, 7).is_err());
        let (p, y, t) = sample(&st, &traj, 50).unwrap();
        assert_eq!(p.n_segments(), 50);
        assert_eq!(y.len(), 51);
        assert_eq!(p.point(0), &traj.states[0].z[..2]);
        assert_eq!(t.value(50), traj.end().z[3]);
    }
}
