//! Integrators for linear autonomous systems `dy/dt = A y`.
//!
//! The coherent substep of the corner engine and the dense reference
//! integrator both reduce to this form. The default is a Krylov-projected
//! matrix exponential, which is exact for the linear flow up to its projection
//! error and does not care about stiffness. An adaptive Dormand–Prince pair and
//! a fixed-step explicit Euler scheme are provided for comparison.

use crate::error::{Error, Result};
use crate::linalg::expm;
use crate::ops::{CompiledOperator, ZERO};
use ndarray::Array2;
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

/// Linear map `y = A x` on `C^n`.
pub trait LinearMap: Sync {
    fn dim(&self) -> usize;
    fn apply(&self, x: &[C64], y: &mut [C64]);
    /// Upper bound on `‖A‖`, used for initial step heuristics.
    fn norm_bound(&self) -> f64;
}

/// `A = scale · op`, e.g. `−i H̃`.
pub struct Scaled<'a> {
    pub op: &'a CompiledOperator,
    pub scale: C64,
}

impl LinearMap for Scaled<'_> {
    fn dim(&self) -> usize {
        self.op.dim()
    }

    fn apply(&self, x: &[C64], y: &mut [C64]) {
        y.fill(ZERO);
        self.op.apply_add(self.scale, x, y);
    }

    fn norm_bound(&self) -> f64 {
        self.scale.norm() * self.op.norm_bound()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum Integrator {
    /// Adaptive Krylov exponential with at most `max_dim` basis vectors.
    Krylov { max_dim: usize },
    /// Adaptive explicit Runge–Kutta 5(4).
    Dp45,
    /// Explicit Euler with a fixed number of substeps per call.
    Euler { steps: usize },
}

impl Default for Integrator {
    fn default() -> Self {
        Self::Krylov { max_dim: 30 }
    }
}

impl Integrator {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Krylov { .. } => "krylov",
            Self::Dp45 => "dp45",
            Self::Euler { .. } => "euler",
        }
    }
}

/// Work counters, summed over calls.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OdeStats {
    pub substeps: usize,
    pub rejected: usize,
    pub matvecs: usize,
}

impl std::ops::AddAssign for OdeStats {
    fn add_assign(&mut self, o: Self) {
        self.substeps += o.substeps;
        self.rejected += o.rejected;
        self.matvecs += o.matvecs;
    }
}

#[inline]
fn norm(x: &[C64]) -> f64 {
    x.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

#[inline]
fn dotc(x: &[C64], y: &[C64]) -> C64 {
    x.iter().zip(y).map(|(a, b)| a.conj() * b).sum()
}

#[inline]
fn axpy(a: C64, x: &[C64], y: &mut [C64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

fn check_finite(x: &[C64], what: &'static str) -> Result<()> {
    if x.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what))
    }
}

/// Computes `exp(t A) v` in place.
///
/// `tol` bounds the accumulated error relative to `‖v‖`; `budget` caps the
/// number of internal substeps.
pub fn propagate(
    a: &impl LinearMap,
    v: &mut [C64],
    t: f64,
    method: Integrator,
    tol: f64,
    budget: usize,
) -> Result<OdeStats> {
    if v.len() != a.dim() {
        return Err(Error::DimensionMismatch {
            expected: a.dim(),
            found: v.len(),
        });
    }
    if t < 0.0 || !t.is_finite() {
        return Err(Error::InvalidArgument(format!("propagation time must be >= 0, got {t}")));
    }
    if t == 0.0 || norm(v) == 0.0 {
        return Ok(OdeStats::default());
    }
    match method {
        Integrator::Krylov { max_dim } => krylov(a, v, t, tol, budget, max_dim.max(3)),
        Integrator::Dp45 => dp45(a, v, t, tol, budget),
        Integrator::Euler { steps } => euler(a, v, t, steps.max(1)),
    }
}

/// Krylov dimensions at which the error estimate is evaluated.
const CHECKPOINTS: [usize; 12] = [3, 4, 5, 6, 8, 10, 12, 15, 18, 22, 26, 30];

fn krylov(
    a: &impl LinearMap,
    v: &mut [C64],
    t: f64,
    tol: f64,
    budget: usize,
    max_dim: usize,
) -> Result<OdeStats> {
    let n = v.len();
    let mut stats = OdeStats::default();
    let anorm = a.norm_bound().max(f64::MIN_POSITIVE);
    let breakdown = 1e-13 * anorm;
    let mut t_now = 0.0;
    let mut t_step = t;
    let mut basis: Vec<Vec<C64>> = Vec::with_capacity(max_dim + 1);
    let mut checkpoints: Vec<usize> = CHECKPOINTS.iter().copied().filter(|&k| k < max_dim).collect();
    checkpoints.push(max_dim);

    while t_now < t {
        if stats.substeps >= budget {
            return Err(Error::Integrator(format!(
                "Krylov substep budget {budget} exhausted at t = {t_now:.6e} of {t:.6e}"
            )));
        }
        let beta = norm(v);
        if beta == 0.0 {
            break;
        }
        let remaining = t - t_now;
        t_step = t_step.min(remaining);
        let mut h = Array2::<C64>::zeros((max_dim + 2, max_dim + 2));
        basis.clear();
        basis.push(v.iter().map(|z| z / beta).collect());
        let mut next_check = 0;
        let mut accepted: Option<(usize, Array2<C64>, f64)> = None;
        let mut happy = false;
        let mut k = 0;
        while k < max_dim {
            let mut p = vec![ZERO; n];
            a.apply(&basis[k], &mut p);
            stats.matvecs += 1;
            for (i, q) in basis.iter().enumerate() {
                let c = dotc(q, &p);
                h[[i, k]] = c;
                axpy(-c, q, &mut p);
            }
            let pn = norm(&p);
            k += 1;
            if pn <= breakdown {
                // Invariant subspace: the projection is exact for any time.
                happy = true;
                t_step = remaining;
                let f = expm(&h.slice(ndarray::s![..k, ..k]).mapv(|z| z * t_step).view())?;
                accepted = Some((k, f, 0.0));
                break;
            }
            h[[k, k - 1]] = C64::from(pn);
            p.iter_mut().for_each(|z| *z /= pn);
            basis.push(p);
            if k != checkpoints[next_check] {
                continue;
            }
            next_check += 1;
            let mut tries = 0;
            loop {
                let (f, err) = krylov_exp(&h, k, t_step, beta)?;
                let target = tol * beta * t_step / t;
                if err <= target {
                    accepted = Some((k, f, err / target));
                    break;
                }
                if k < max_dim {
                    break;
                }
                // Full basis used: shrink the step and reuse the basis.
                stats.rejected += 1;
                tries += 1;
                if tries > 60 {
                    return Err(Error::Integrator(format!(
                        "Krylov step collapsed at t = {t_now:.6e} (error {err:.3e})"
                    )));
                }
                let ratio = (target / err).powf(1.0 / (k as f64 + 1.0));
                t_step *= (0.9 * ratio).clamp(0.05, 0.9);
            }
            if accepted.is_some() {
                break;
            }
        }
        let (k, f, ratio) = accepted.ok_or_else(|| Error::Integrator("Krylov error estimate did not converge".into()))?;
        v.fill(ZERO);
        for (j, q) in basis.iter().take(k).enumerate() {
            axpy(f[[j, 0]] * beta, q, v);
        }
        check_finite(v, "Krylov propagation")?;
        t_now += t_step;
        stats.substeps += 1;
        if !happy && k == max_dim && ratio > 0.0 {
            let grow = (0.9 * ratio.recip().powf(1.0 / (k as f64 + 1.0))).clamp(0.2, 2.0);
            t_step *= grow;
        } else if !happy && k < max_dim / 2 {
            t_step *= 2.0;
        }
        if t - t_now <= 1e-14 * t {
            break;
        }
    }
    Ok(stats)
}

/// Exponential of the augmented Hessenberg matrix; returns the first column
/// of `exp(t H_k)` and the a-posteriori error estimate.
fn krylov_exp(h: &Array2<C64>, k: usize, t: f64, beta: f64) -> Result<(Array2<C64>, f64)> {
    let mut aug = Array2::<C64>::zeros((k + 1, k + 1));
    for i in 0..=k {
        for j in 0..k {
            aug[[i, j]] = h[[i, j]] * t;
        }
    }
    // The appended row yields t·h_{k+1,k}·φ₁(tH_k)e₁, the residual estimate.
    let f = expm(&aug.view())?;
    let err = beta * f[[k, 0]].norm();
    Ok((f.slice(ndarray::s![..k, ..k]).to_owned(), err))
}

fn dp45(a: &impl LinearMap, v: &mut [C64], t: f64, tol: f64, budget: usize) -> Result<OdeStats> {
    const A: [[f64; 6]; 6] = [
        [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
        [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
        [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
        [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
        [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
        [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
    ];
    const E: [f64; 7] = [
        71.0 / 57600.0,
        0.0,
        -71.0 / 16695.0,
        71.0 / 1920.0,
        -17253.0 / 339200.0,
        22.0 / 525.0,
        -1.0 / 40.0,
    ];
    let n = v.len();
    let mut stats = OdeStats::default();
    let scale0 = norm(v);
    let atol = tol * scale0;
    let mut h = (0.5 / a.norm_bound().max(1e-12)).min(t);
    let mut t_now = 0.0;
    let mut k: Vec<Vec<C64>> = vec![vec![ZERO; n]; 7];
    let mut stage = vec![ZERO; n];
    a.apply(v, &mut k[0]);
    stats.matvecs += 1;
    while t_now < t {
        if stats.substeps + stats.rejected >= budget {
            return Err(Error::Integrator(format!(
                "Dormand-Prince budget {budget} exhausted at t = {t_now:.6e} of {t:.6e}"
            )));
        }
        h = h.min(t - t_now);
        for s in 1..7 {
            stage.copy_from_slice(v);
            for (j, kj) in k.iter().take(s).enumerate() {
                let c = A[s - 1][j];
                if c != 0.0 {
                    axpy(C64::from(h * c), kj, &mut stage);
                }
            }
            a.apply(&stage, &mut k[s]);
            stats.matvecs += 1;
        }
        // stage holds the 5th-order solution; k[6] is f at it (FSAL).
        let mut err = vec![ZERO; n];
        for (j, kj) in k.iter().enumerate() {
            if E[j] != 0.0 {
                axpy(C64::from(h * E[j]), kj, &mut err);
            }
        }
        let sc = atol + tol * norm(&stage).max(norm(v));
        let en = norm(&err) / sc;
        if !en.is_finite() {
            return Err(Error::NonFinite("Dormand-Prince stage"));
        }
        if en <= 1.0 {
            v.copy_from_slice(&stage);
            t_now += h;
            stats.substeps += 1;
            k.swap(0, 6);
        } else {
            stats.rejected += 1;
        }
        let fac = if en == 0.0 { 5.0 } else { (0.9 * en.powf(-0.2)).clamp(0.2, 5.0) };
        h *= fac;
        if t - t_now <= 1e-14 * t {
            break;
        }
    }
    Ok(stats)
}

fn euler(a: &impl LinearMap, v: &mut [C64], t: f64, steps: usize) -> Result<OdeStats> {
    let h = C64::from(t / steps as f64);
    let n0 = norm(v);
    let mut d = vec![ZERO; v.len()];
    for _ in 0..steps {
        a.apply(v, &mut d);
        axpy(h, &d, v);
    }
    let n1 = norm(v);
    if !n1.is_finite() || n1 > 1e3 * n0 {
        return Err(Error::Integrator(format!(
            "explicit Euler diverged: norm grew from {n0:.3e} to {n1:.3e} over {steps} substeps"
        )));
    }
    Ok(OdeStats {
        substeps: steps,
        rejected: 0,
        matvecs: steps,
    })
}
