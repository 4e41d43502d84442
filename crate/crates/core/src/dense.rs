//! Brute-force reference: full density matrices under the Lindblad equation.
//!
//! The generator acts on `vec(ρ)` (row-major, `vec(ρ)[r·N + c] = ρ[r, c]`) as
//! a structured operator on the doubled space,
//! `−i H̃ ⊗ 𝟙 + i 𝟙 ⊗ conj(H̃) + Σ_i J_i ⊗ conj(J_i)`,
//! i.e. `H̃` acts on the row index and `H̃†` on the column index. Memory stays
//! `O(N²)`; no `N²×N²` matrix is formed.

use crate::circuit::GateSchedule;
use crate::corner::CornerBasis;
use crate::error::{Error, Result};
use crate::linalg::{adjoint, adjoint_dot, eigh_desc, sqrtm_psd};
use crate::noise::NoiseModel;
use crate::ode::{propagate, Integrator, OdeStats, Scaled};
use crate::ops::{build_effective_hamiltonian, OperatorSpec, IM, ONE, ZERO};
use ndarray::Array2;
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

/// Default largest Hilbert-space dimension the dense engine accepts.
pub const DEFAULT_DENSE_CAP: usize = 1 << 10;

#[derive(Clone, Debug, PartialEq)]
pub struct DenseState {
    /// Row-major `N×N` density matrix.
    pub rho: Array2<C64>,
    pub t: f64,
}

impl DenseState {
    pub fn from_pure(psi: &[C64]) -> Result<Self> {
        let norm2: f64 = psi.iter().map(|z| z.norm_sqr()).sum();
        if norm2 == 0.0 {
            return Err(Error::ZeroVector);
        }
        let n = psi.len();
        let rho = Array2::from_shape_fn((n, n), |(r, c)| psi[r] * psi[c].conj() / norm2);
        Ok(Self { rho, t: 0.0 })
    }

    pub fn from_matrix(rho: Array2<C64>) -> Result<Self> {
        if rho.nrows() != rho.ncols() {
            return Err(Error::DimensionMismatch {
                expected: rho.nrows(),
                found: rho.ncols(),
            });
        }
        Ok(Self {
            rho: rho.as_standard_layout().into_owned(),
            t: 0.0,
        })
    }

    pub fn dim(&self) -> usize {
        self.rho.nrows()
    }

    pub fn trace(&self) -> C64 {
        self.rho.diag().sum()
    }

    /// Largest entry of `ρ − ρ†`.
    pub fn hermiticity_error(&self) -> f64 {
        let n = self.dim();
        let mut e: f64 = 0.0;
        for r in 0..n {
            for c in r..n {
                e = e.max((self.rho[[r, c]] - self.rho[[c, r]].conj()).norm());
            }
        }
        e
    }

    pub fn min_eigenvalue(&self) -> Result<f64> {
        let (w, _) = eigh_desc(&self.rho.view())?;
        Ok(w.last().copied().unwrap_or(0.0))
    }
}

/// Lindblad generator as an operator on the doubled space.
pub fn lindblad_superoperator(h: &OperatorSpec, noise: &NoiseModel) -> Result<OperatorSpec> {
    let space = h.space();
    if noise.space() != space {
        return Err(Error::MixedSpaces);
    }
    let doubled = space.doubled();
    let l = space.sites();
    let h_eff = build_effective_hamiltonian(h, noise)?;
    let mut sup = h_eff.scaled(-IM).embed(&doubled, 0)?;
    sup = sup.plus(&h_eff.conj().scaled(IM).embed(&doubled, l)?)?;
    for j in noise.jumps() {
        let left = j.embed(&doubled, 0)?;
        let right = j.conj().embed(&doubled, l)?;
        sup = sup.plus(&left.times(&right)?)?;
    }
    Ok(sup.simplified().with_hermitian_hint(false))
}

/// `−i[H, ρ] + Σ_i (J_i ρ J_i† − ½{J_i†J_i, ρ})`.
pub fn lindblad_rhs(rho: &DenseState, h: &OperatorSpec, noise: &NoiseModel) -> Result<Array2<C64>> {
    h.space().check_len(rho.dim())?;
    let sup = lindblad_superoperator(h, noise)?.compile();
    let n = rho.dim();
    let x = rho.rho.as_standard_layout();
    let mut y = vec![ZERO; n * n];
    sup.apply(x.as_slice().expect("standard layout"), &mut y);
    Ok(Array2::from_shape_vec((n, n), y).expect("square"))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DenseConfig {
    pub tol: f64,
    pub integrator: Integrator,
    pub cap: usize,
    pub substep_budget: usize,
}

impl Default for DenseConfig {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            integrator: Integrator::Krylov { max_dim: 20 },
            cap: DEFAULT_DENSE_CAP,
            substep_budget: 1_000_000,
        }
    }
}

/// Integrates the master equation through `schedule` with sudden switching.
pub fn integrate_exact(
    rho0: &DenseState,
    schedule: &GateSchedule,
    noise: &NoiseModel,
    cfg: &DenseConfig,
) -> Result<(DenseState, OdeStats)> {
    let n = rho0.dim();
    schedule.space().check_len(n)?;
    if n > cfg.cap {
        return Err(Error::CapExceeded { dim: n, cap: cfg.cap });
    }
    let mut v = rho0.rho.as_standard_layout().into_owned().into_raw_vec_and_offset().0;
    let mut stats = OdeStats::default();
    for seg in schedule.segments() {
        let sup = lindblad_superoperator(&seg.hamiltonian, noise)?.compile();
        let gen = Scaled { op: &sup, scale: ONE };
        stats += propagate(&gen, &mut v, seg.duration, cfg.integrator, cfg.tol, cfg.substep_budget)?;
    }
    let rho = Array2::from_shape_vec((n, n), v).expect("square");
    Ok((
        DenseState {
            rho,
            t: rho0.t + schedule.total_duration(),
        },
        stats,
    ))
}

/// Uhlmann fidelity `Tr √(√ρ σ √ρ)`.
pub fn fidelity_dense(rho: &Array2<C64>, sigma: &Array2<C64>) -> Result<f64> {
    if rho.dim() != sigma.dim() {
        return Err(Error::DimensionMismatch {
            expected: rho.nrows(),
            found: sigma.nrows(),
        });
    }
    let s = sqrtm_psd(&rho.view())?;
    let m = s.dot(sigma).dot(&s);
    let herm = (&m + &adjoint(&m.view())).mapv(|z| z * 0.5);
    let (w, _) = eigh_desc(&herm.view())?;
    Ok(w.iter().map(|&l| l.max(0.0).sqrt()).sum())
}

/// Fidelity between a corner state and a dense one: `Tr √(C† σ C)`.
pub fn fidelity_corner_dense(a: &CornerBasis, sigma: &Array2<C64>) -> Result<f64> {
    if a.dim() != sigma.nrows() {
        return Err(Error::DimensionMismatch {
            expected: sigma.nrows(),
            found: a.dim(),
        });
    }
    let c = a.factor();
    let m = adjoint_dot(&c, &sigma.dot(&c).view());
    let herm = (&m + &adjoint(&m.view())).mapv(|z| z * 0.5);
    let (w, _) = eigh_desc(&herm.view())?;
    Ok(w.iter().map(|&l| l.max(0.0).sqrt()).sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::{ghz_state, inverse_qft_ghz_state, qft_schedule, Segment};
    use crate::noise::local_decay;
    use crate::ops::{HilbertSpec, LocalOp};

    fn dense_rhs_oracle(rho: &Array2<C64>, h: &Array2<C64>, js: &[Array2<C64>]) -> Array2<C64> {
        let mut out = (h.dot(rho) - rho.dot(h)).mapv(|z| -IM * z);
        for j in js {
            let jd = adjoint(&j.view());
            let jdj = jd.dot(j);
            out = out + j.dot(rho).dot(&jd) - (jdj.dot(rho) + rho.dot(&jdj)).mapv(|z| z * 0.5);
        }
        out
    }

    #[test]
    fn rhs_matches_dense_formula() {
        let sp = HilbertSpec::qubits(2).unwrap();
        let h = OperatorSpec::local(&sp, 0, LocalOp::pauli_x(), C64::from(0.7))
            .unwrap()
            .plus(&OperatorSpec::local(&sp, 1, LocalOp::pauli_y(), C64::from(-0.2)).unwrap())
            .unwrap();
        let noise = local_decay(2, 0.3).unwrap();
        let psi = [C64::new(0.4, 0.1), C64::new(0.2, -0.5), C64::new(0.0, 0.3), C64::new(0.6, 0.0)];
        let rho = DenseState::from_pure(&psi).unwrap();
        let got = lindblad_rhs(&rho, &h, &noise).unwrap();
        let js: Vec<_> = noise.jumps().iter().map(|j| j.dense()).collect();
        let want = dense_rhs_oracle(&rho.rho, &h.dense(), &js);
        assert!((&got - &want).iter().all(|z| z.norm() < 1e-13));
        assert!(got.diag().sum().norm() < 1e-13);
    }

    #[test]
    fn trivial_generators_vanish() {
        let sp = HilbertSpec::qubits(1).unwrap();
        let rho = DenseState::from_pure(&[C64::new(0.6, 0.0), C64::new(0.0, 0.8)]).unwrap();
        let z = lindblad_rhs(&rho, &OperatorSpec::zero(&sp), &NoiseModel::none(&sp)).unwrap();
        assert!(z.iter().all(|x| *x == ZERO));
        let down = DenseState::from_pure(&[ZERO, ONE]).unwrap();
        let z = lindblad_rhs(&down, &OperatorSpec::zero(&sp), &local_decay(1, 0.5).unwrap()).unwrap();
        assert!(z.iter().all(|x| x.norm() < 1e-16));
    }

    #[test]
    fn single_qubit_decay_closed_form() {
        let noise = local_decay(1, 0.7).unwrap();
        let sp = noise.space().clone();
        let seg = Segment {
            label: "idle".into(),
            gate: 0,
            hamiltonian: OperatorSpec::zero(&sp),
            duration: 2.0,
        };
        let sched = GateSchedule::new(sp, vec![seg]).unwrap();
        let rho0 = DenseState::from_pure(&[ONE, ZERO]).unwrap();
        for integrator in [Integrator::default(), Integrator::Dp45] {
            let cfg = DenseConfig {
                integrator,
                tol: 1e-11,
                ..DenseConfig::default()
            };
            let (out, _) = integrate_exact(&rho0, &sched, &noise, &cfg).unwrap();
            assert!((out.rho[[0, 0]].re - (-1.4f64).exp()).abs() < 1e-8, "{}", integrator.name());
        }
    }

    #[test]
    fn noiseless_qft_gives_ghz_projector() {
        let l = 4;
        let sched = qft_schedule(l, 1.0).unwrap();
        let rho0 = DenseState::from_pure(&inverse_qft_ghz_state(l).unwrap()).unwrap();
        let (out, _) = integrate_exact(&rho0, &sched, &NoiseModel::none(sched.space()), &DenseConfig::default()).unwrap();
        let ghz = DenseState::from_pure(&ghz_state(l).unwrap()).unwrap();
        assert!((&out.rho - &ghz.rho).iter().all(|z| z.norm() < 1e-8));
    }

    #[test]
    fn cap_is_enforced() {
        let sched = qft_schedule(3, 1.0).unwrap();
        let rho0 = DenseState::from_pure(&inverse_qft_ghz_state(3).unwrap()).unwrap();
        let cfg = DenseConfig {
            cap: 4,
            ..DenseConfig::default()
        };
        let r = integrate_exact(&rho0, &sched, &NoiseModel::none(sched.space()), &cfg);
        assert!(matches!(r, Err(Error::CapExceeded { dim: 8, cap: 4 })));
    }

    #[test]
    fn dense_fidelity_basics() {
        let a = DenseState::from_pure(&[ONE, ZERO]).unwrap().rho;
        let b = DenseState::from_pure(&[ZERO, ONE]).unwrap().rho;
        assert!((fidelity_dense(&a, &a).unwrap() - 1.0).abs() < 1e-12);
        assert!(fidelity_dense(&a, &b).unwrap().abs() < 1e-7);
        let mix = (&a + &b).mapv(|z| z * 0.5);
        assert!((fidelity_dense(&a, &mix).unwrap() - 0.5f64.sqrt()).abs() < 1e-12);
        assert!((fidelity_dense(&mix, &mix).unwrap() - 1.0).abs() < 1e-12);
    }
}
