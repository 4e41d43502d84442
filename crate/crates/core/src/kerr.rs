//! Two-photon driven Kerr cavity with one- and two-photon loss, and Wigner
//! functions of Fock-space vectors.

use crate::corner::{evolve_schedule, CornerBasis, EvolveStats, StepConfig};
use crate::circuit::{GateSchedule, Segment};
use crate::error::{invalid, Error, Result};
use crate::noise::NoiseModel;
use crate::ops::{HilbertSpec, LocalOp, OperatorSpec, Term, ZERO};
use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::io::Write;

/// Cavity parameters; rates share one unit, conventionally `γ = 1`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KerrParams {
    /// Kerr nonlinearity `K`.
    pub k: f64,
    pub omega_c: f64,
    /// Two-photon drive `G`.
    pub g: f64,
    /// One-photon loss rate.
    pub gamma: f64,
    /// Two-photon loss rate.
    pub kappa: f64,
    /// Highest Fock level kept.
    pub n_ph: usize,
}

impl Default for KerrParams {
    fn default() -> Self {
        Self {
            k: 10.0,
            omega_c: 1.0,
            g: 50.0,
            gamma: 1.0,
            kappa: 2.0,
            n_ph: 20,
        }
    }
}

impl KerrParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("K", self.k), ("omega_c", self.omega_c), ("G", self.g)] {
            if !v.is_finite() {
                return Err(invalid(format!("{name} must be finite")));
            }
        }
        for (name, v) in [("gamma", self.gamma), ("kappa", self.kappa)] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(invalid(format!("{name} must be a non-negative rate")));
            }
        }
        if self.n_ph < 2 {
            return Err(invalid("photon cutoff must be at least 2"));
        }
        Ok(())
    }
}

/// `H = K a†a†aa + ω_c a†a + G(a² + a†²)` with jumps `√γ a` and `√κ a²`.
pub fn kerr_model(p: &KerrParams) -> Result<(OperatorSpec, NoiseModel)> {
    p.validate()?;
    let space = HilbertSpec::boson(p.n_ph)?;
    let a = LocalOp::annihilation(p.n_ph);
    let ad = a.adjoint();
    let a2 = a.matmul(&a)?;
    let ad2 = ad.matmul(&ad)?;
    let kerr = ad2.matmul(&a2)?;
    let n = LocalOp::number(p.n_ph);
    let h = OperatorSpec::new(
        space.clone(),
        vec![
            Term::new(C64::from(p.k), vec![(0, kerr)]),
            Term::new(C64::from(p.omega_c), vec![(0, n)]),
            Term::new(C64::from(p.g), vec![(0, a2.clone())]),
            Term::new(C64::from(p.g), vec![(0, ad2)]),
        ],
        true,
    )?
    .simplified();
    let jumps = vec![
        OperatorSpec::local(&space, 0, a, C64::from(p.gamma.sqrt()))?,
        OperatorSpec::local(&space, 0, a2, C64::from(p.kappa.sqrt()))?,
    ];
    let noise = NoiseModel::new(space, jumps)?;
    Ok((h, noise))
}

/// `⟨(−1)^{a†a}⟩` of a Fock-space vector, normalized by its norm.
pub fn parity(v: &[C64]) -> f64 {
    let mut even = 0.0;
    let mut total = 0.0;
    for (n, z) in v.iter().enumerate() {
        let w = z.norm_sqr();
        total += w;
        if n % 2 == 0 {
            even += w;
        } else {
            even -= w;
        }
    }
    if total > 0.0 {
        even / total
    } else {
        0.0
    }
}

fn photon_number(a: &CornerBasis) -> f64 {
    (0..a.rank())
        .map(|k| a.column(k).iter().enumerate().map(|(n, z)| n as f64 * z.norm_sqr()).sum::<f64>())
        .sum::<f64>()
        / a.trace()
}

/// Population of the highest Fock level.
fn tail_population(a: &CornerBasis) -> f64 {
    let top = a.dim() - 1;
    (0..a.rank()).map(|k| a.column(k)[top].norm_sqr()).sum::<f64>() / a.trace()
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct KerrRun {
    pub weights: Vec<f64>,
    /// Parity of each corner state, in weight order.
    pub parities: Vec<f64>,
    pub total_parity: f64,
    pub max_photon_number: f64,
    pub max_tail_population: f64,
    pub stats: EvolveStats,
    #[serde(skip)]
    pub state: Option<CornerBasis>,
}

impl KerrRun {
    /// Mean photon number stayed clear of the cutoff and the top Fock level
    /// stayed below `1e-4` at all times.
    pub fn cutoff_ok(&self, n_ph: usize) -> bool {
        self.max_photon_number < n_ph as f64 - 4.0 && self.max_tail_population < 1e-4
    }
}

/// Evolves the vacuum for `t_final` with the corner engine.
pub fn run_kerr_cat(p: &KerrParams, t_final: f64, cfg: &StepConfig) -> Result<KerrRun> {
    if !(t_final >= 0.0) {
        return Err(invalid("final time must be non-negative"));
    }
    let (h, noise) = kerr_model(p)?;
    let space = h.space().clone();
    let schedule = GateSchedule::new(
        space.clone(),
        vec![Segment {
            label: "kerr".into(),
            gate: 0,
            hamiltonian: h,
            duration: t_final,
        }],
    )?;
    let mut vacuum = vec![ZERO; space.dim()];
    vacuum[0] = C64::from(1.0);
    let mut max_n: f64 = 0.0;
    let mut max_tail: f64 = 0.0;
    let (state, stats) = evolve_schedule(
        CornerBasis::from_pure_state(&vacuum)?,
        &schedule,
        &noise,
        cfg,
        1,
        |obs| {
            max_n = max_n.max(photon_number(obs.state));
            max_tail = max_tail.max(tail_population(obs.state));
            Ok(())
        },
    )?;
    let parities: Vec<f64> = (0..state.rank()).map(|k| parity(state.column(k))).collect();
    let total_parity = parities.iter().zip(state.weights()).map(|(x, w)| x * w).sum::<f64>() / state.trace();
    Ok(KerrRun {
        weights: state.weights().to_vec(),
        parities,
        total_parity,
        max_photon_number: max_n,
        max_tail_population: max_tail,
        stats,
        state: Some(state),
    })
}

/// Default phase-space grid: 101×101 points over `[−7.5, 7.5]²`.
pub fn default_grid() -> Vec<C64> {
    square_grid(7.5, 101)
}

/// `points × points` grid over `[−half, half]²`, real part fastest.
pub fn square_grid(half: f64, points: usize) -> Vec<C64> {
    let step = if points > 1 { 2.0 * half / (points - 1) as f64 } else { 0.0 };
    let axis: Vec<f64> = (0..points).map(|i| -half + step * i as f64).collect();
    axis.iter().flat_map(|&y| axis.iter().map(move |&x| C64::new(x, y))).collect()
}

/// `W(α) = Σ_{mn} ψ_m ψ_n* W_{mn}(α) / ‖ψ‖²`, normalized so `∫W d²α = 1`.
///
/// The Wigner functions `W_{mn}` of the Fock dyads are built row by row with
/// the three-term Laguerre recursion. Every `W_{mn}` is bounded by `2/π`, so
/// the sum stays accurate far from the origin.
pub fn wigner(column: &[C64], grid: &[C64]) -> Result<Vec<f64>> {
    let norm2: f64 = column.iter().map(|z| z.norm_sqr()).sum();
    if norm2 == 0.0 {
        return Err(Error::ZeroVector);
    }
    if grid.iter().any(|a| !a.re.is_finite() || !a.im.is_finite()) {
        return Err(Error::NonFinite("Wigner grid"));
    }
    let len = column.iter().rposition(|z| *z != ZERO).map_or(1, |i| i + 1);
    let psi = &column[..len];
    let roots: Vec<f64> = (0..len).map(|k| (k as f64).sqrt()).collect();
    Ok(grid
        .par_iter()
        .map(|&a| {
            let rho = |m: usize, n: usize| psi[m] * psi[n].conj();
            let mut w = vec![ZERO; len];
            w[0] = C64::from(2.0 / PI * (-2.0 * a.norm_sqr()).exp());
            let mut total = rho(0, 0).re * w[0].re;
            for n in 1..len {
                w[n] = 2.0 * a * w[n - 1] / roots[n];
                total += 2.0 * (rho(0, n) * w[n]).re;
            }
            for m in 1..len {
                let mut prev = w[m];
                w[m] = (2.0 * a.conj() * prev - roots[m] * w[m - 1]) / roots[m];
                total += rho(m, m).re * w[m].re;
                for n in m + 1..len {
                    let next = (2.0 * a * w[n - 1] - roots[m] * prev) / roots[n];
                    prev = w[n];
                    w[n] = next;
                    total += 2.0 * (rho(m, n) * w[n]).re;
                }
            }
            total / norm2
        })
        .collect())
}

/// Writes `Re α, Im α, W_1, …` with the weight of each column in the header.
pub fn write_wigner_csv(mut out: impl Write, grid: &[C64], fields: &[(f64, Vec<f64>)]) -> Result<()> {
    write!(out, "re_alpha,im_alpha")?;
    for (k, (p, _)) in fields.iter().enumerate() {
        write!(out, ",W{}[p={:.6e}]", k + 1, p)?;
    }
    writeln!(out)?;
    for (i, a) in grid.iter().enumerate() {
        write!(out, "{:.6},{:.6}", a.re, a.im)?;
        for (_, w) in fields {
            write!(out, ",{:.8e}", w[i])?;
        }
        writeln!(out)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::expm;
    use approx::assert_abs_diff_eq;
    use ndarray::{Array1, Array2};

    /// Amplitudes `⟨k|D(β)|ψ⟩` for `k < rows`, built column by column in the
    /// input Fock index: `D|0⟩` is the coherent state, and
    /// `√(n+1) D_{k,n+1} = √k D_{k−1,n} − β* D_{k,n}`.
    fn displaced(psi: &[C64], beta: C64, rows: usize) -> Vec<C64> {
    let mut col: Vec<C64> = Vec::with_capacity(rows);
    let mut c = C64::from((-beta.norm_sqr() / 2.0).exp());
    for k in 0..rows {
        if k > 0 {
            c = c * beta / (k as f64).sqrt();
        }
        col.push(c);
    }
    let mut out: Vec<C64> = col.iter().map(|z| z * psi[0]).collect();
    let bc = beta.conj();
    let mut next = vec![ZERO; rows];
    for (n, &amp) in psi.iter().enumerate().skip(1) {
        let s = 1.0 / (n as f64).sqrt();
        for k in 0..rows {
            let up = if k > 0 { (k as f64).sqrt() * col[k - 1] } else { ZERO };
            next[k] = (up - bc * col[k]) * s;
        }
        std::mem::swap(&mut col, &mut next);
        if amp != ZERO {
            out.iter_mut().zip(&col).for_each(|(o, d)| *o += amp * d);
        }
    }
    out
    }

    /// Parity route: `W(α) = (2/π) Σ_k (−1)^k |⟨k|D(−α)|ψ⟩|²`.
    fn wigner_by_parity(psi: &[C64], alpha: C64) -> f64 {
        let d = displaced(psi, -alpha, 200);
        let norm2: f64 = psi.iter().map(|z| z.norm_sqr()).sum();
        2.0 / PI * d.iter().enumerate().map(|(k, z)| if k % 2 == 0 { z.norm_sqr() } else { -z.norm_sqr() }).sum::<f64>() / norm2
    }

    fn fock(n: usize, dim: usize) -> Vec<C64> {
        let mut v = vec![ZERO; dim];
        v[n] = C64::from(1.0);
        v
    }

    fn coherent(alpha: C64, dim: usize) -> Vec<C64> {
        let mut v = Vec::with_capacity(dim);
        let mut c = C64::from((-alpha.norm_sqr() / 2.0).exp());
        for n in 0..dim {
            if n > 0 {
                c = c * alpha / (n as f64).sqrt();
            }
            v.push(c);
        }
        v
    }

    #[test]
    fn ladder_matrix_elements() {
        let (h, noise) = kerr_model(&KerrParams::default()).unwrap();
        assert_eq!(h.dim(), 21);
        let a = noise.jumps()[0].dense();
        for n in 1..21 {
            assert_abs_diff_eq!(a[[n - 1, n]].re, (n as f64).sqrt(), epsilon = 1e-14);
        }
    }

    #[test]
    fn hamiltonian_matches_fock_matrix() {
        let p = KerrParams::default();
        let (h, _) = kerr_model(&p).unwrap();
        let dim = p.n_ph + 1;
        let a = Array2::from_shape_fn((dim, dim), |(r, c)| if c == r + 1 { C64::from((c as f64).sqrt()) } else { ZERO });
        let ad = a.t().to_owned();
        let a2 = a.dot(&a);
        let ad2 = ad.dot(&ad);
        let expect = ad2.dot(&a2).mapv(|z| z * p.k) + ad.dot(&a).mapv(|z| z * p.omega_c) + (&a2 + &ad2).mapv(|z| z * p.g);
        assert!((&h.dense() - &expect).iter().all(|z| z.norm() < 1e-12));
    }

    #[test]
    fn free_cavity_keeps_vacuum() {
        let p = KerrParams {
            k: 0.0,
            g: 0.0,
            n_ph: 6,
            ..Default::default()
        };
        let cfg = StepConfig {
            dt: 0.05,
            ..Default::default()
        };
        let run = run_kerr_cat(&p, 1.0, &cfg).unwrap();
        assert_eq!(run.weights.len(), 1);
        assert_abs_diff_eq!(run.total_parity, 1.0, epsilon = 1e-12);
        assert!(run.max_photon_number < 1e-12);
    }

    #[test]
    fn pair_processes_conserve_parity() {
        let p = KerrParams {
            gamma: 0.0,
            n_ph: 14,
            k: 1.0,
            g: 2.0,
            kappa: 1.0,
            ..Default::default()
        };
        let cfg = StepConfig {
            dt: 2e-3,
            ..Default::default()
        };
        let run = run_kerr_cat(&p, 1.0, &cfg).unwrap();
        assert!((run.total_parity - 1.0).abs() < 1e-6, "{}", run.total_parity);
    }

    #[test]
    fn explicit_euler_breaks_down_on_the_stiff_substep() {
        let cfg = StepConfig {
            dt: 2e-3,
            integrator: crate::ode::Integrator::Euler { steps: 1 },
            ..Default::default()
        };
        let euler = run_kerr_cat(&KerrParams::default(), 0.2, &cfg).unwrap();
        let krylov = run_kerr_cat(&KerrParams::default(), 0.2, &StepConfig { dt: 2e-3, ..Default::default() }).unwrap();
        // Euler's per-step norm error is O(1) or worse; the exponential
        // integrator's is set by the Kraus step alone.
        assert!(euler.stats.drift_max > 1.0);
        assert!(krylov.stats.drift_max < 0.05);
        assert!(euler.max_photon_number > krylov.max_photon_number + 5.0);
    }

    #[test]
    fn wigner_of_vacuum_and_single_photon() {
        let w = wigner(&fock(0, 8), &[ZERO]).unwrap();
        assert_abs_diff_eq!(w[0], 2.0 / PI, epsilon = 1e-12);
        let w = wigner(&fock(1, 8), &[ZERO]).unwrap();
        assert_abs_diff_eq!(w[0], -2.0 / PI, epsilon = 1e-12);
    }

    #[test]
    fn wigner_of_coherent_state_is_gaussian() {
        let a0 = C64::new(1.2, -0.7);
        let psi = coherent(a0, 40);
        let grid = square_grid(3.0, 13);
        let w = wigner(&psi, &grid).unwrap();
        for (a, v) in grid.iter().zip(&w) {
            let expect = 2.0 / PI * (-2.0 * (a - a0).norm_sqr()).exp();
            assert_abs_diff_eq!(*v, expect, epsilon = 1e-6);
        }
    }

    #[test]
    fn displacement_recursion_matches_matrix_exponential() {
        let dim = 60;
        let beta = C64::new(-1.1, 2.3);
        let mut psi = vec![ZERO; dim];
        for (n, z) in psi.iter_mut().enumerate().take(6) {
            *z = C64::new(1.0 / (n + 1) as f64, 0.3 * n as f64);
        }
        let a = Array2::from_shape_fn((dim, dim), |(r, c)| if c == r + 1 { C64::from((c as f64).sqrt()) } else { ZERO });
        let gen = a.t().mapv(|z| z * beta) - a.mapv(|z| z * beta.conj());
        let d = expm(&gen.view()).unwrap();
        let expect = d.dot(&Array1::from(psi.clone()));
        let got = displaced(&psi[..6], beta, 30);
        for k in 0..30 {
            assert!((got[k] - expect[k]).norm() < 1e-10, "{k}");
        }
    }

    #[test]
    fn wigner_integrates_to_one() {
        let mut psi = coherent(C64::new(1.5, 0.0), 30);
        let minus = coherent(C64::new(-1.5, 0.0), 30);
        psi.iter_mut().zip(&minus).for_each(|(a, b)| *a += b);
        let half = 5.0;
        let points = 81;
        let grid = square_grid(half, points);
        let w = wigner(&psi, &grid).unwrap();
        let cell = (2.0 * half / (points - 1) as f64).powi(2);
        assert!((w.iter().sum::<f64>() * cell - 1.0).abs() < 1e-2);
        // Even cat: positive parity peak at the origin.
        assert!(w[grid.len() / 2] > 0.0);
    }

    #[test]
    fn csv_layout() {
        let grid = square_grid(1.0, 3);
        let mut buf = Vec::new();
        write_wigner_csv(&mut buf, &grid, &[(0.5, vec![0.1; 9]), (0.25, vec![0.2; 9])]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.lines().next().unwrap().starts_with("re_alpha,im_alpha,W1[p=5.000000e-1]"));
        assert_eq!(text.lines().count(), 10);
    }

    #[test]
    fn laguerre_and_parity_routes_agree() {
        let psi: Vec<C64> = (0..7).map(|k| C64::new((k as f64 * 0.7).cos(), 0.3 * k as f64 - 0.5)).collect();
        for alpha in [C64::new(0.4, -1.1), C64::new(-2.0, 0.5), C64::new(1.5, 2.5)] {
            let w = wigner(&psi, &[alpha]).unwrap()[0];
            assert_abs_diff_eq!(w, wigner_by_parity(&psi, alpha), epsilon = 1e-12);
        }
    }

    #[test]
    fn wigner_stays_bounded_at_grid_corners() {
        let cat: Vec<C64> = coherent(C64::new(2.5, 0.0), 21).iter().zip(coherent(C64::new(-2.5, 0.0), 21)).map(|(a, b)| a + b).collect();
        let corners = [C64::new(7.5, 7.5), C64::new(-7.5, 7.5), C64::new(7.5, -7.5)];
        for w in wigner(&cat, &corners).unwrap() {
            assert!(w.abs() < 1e-20, "{w}");
        }
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(kerr_model(&KerrParams { kappa: -1.0, ..Default::default() }).is_err());
        assert!(kerr_model(&KerrParams { n_ph: 1, ..Default::default() }).is_err());
        assert!(wigner(&[ZERO; 4], &[ZERO]).is_err());
    }
}
