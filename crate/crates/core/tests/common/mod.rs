//! Strategies and checks shared by the property suites and the acceptance run.

use cornerspace::corner::{gram_truncate, step, CornerBasis, StepConfig, TracePolicy};
use cornerspace::linalg::{adjoint, eigh_desc};
use cornerspace::metrics::fidelity_mixed;
use cornerspace::noise::local_decay_rates;
use cornerspace::ops::{HilbertSpec, LocalOp, OperatorSpec, Term};
use cornerspace::C64;
use ndarray::{linalg::kron, Array2};
use proptest::prelude::*;
use proptest::test_runner::TestCaseError;

pub fn c64() -> impl Strategy<Value = C64> {
    (-1.0..1.0f64, -1.0..1.0f64).prop_map(|(re, im)| C64::new(re, im))
}

pub fn matrix(rows: usize, cols: usize) -> impl Strategy<Value = Array2<C64>> {
    prop::collection::vec(c64(), rows * cols).prop_map(move |v| Array2::from_shape_vec((rows, cols), v).unwrap())
}

pub fn vector(n: usize) -> impl Strategy<Value = Vec<C64>> {
    prop::collection::vec(c64(), n).prop_filter("nonzero", |v| v.iter().map(|z| z.norm_sqr()).sum::<f64>() > 1e-3)
}

fn local_op() -> impl Strategy<Value = LocalOp> {
    prop::collection::vec(c64(), 4).prop_map(|v| LocalOp::from_rows(vec![v[..2].to_vec(), v[2..].to_vec()]).unwrap())
}

/// A random term: coefficient plus distinct sites with random 2×2 factors.
pub fn term(qubits: usize) -> impl Strategy<Value = (C64, Vec<(usize, LocalOp)>)> {
    (c64(), prop::sample::subsequence((0..qubits).collect::<Vec<_>>(), 1..=qubits.min(3)))
        .prop_flat_map(|(coeff, sites)| {
            let n = sites.len();
            (Just(coeff), Just(sites), prop::collection::vec(local_op(), n))
        })
        .prop_map(|(coeff, sites, ops)| (coeff, sites.into_iter().zip(ops).collect()))
}

fn local_dense(op: &LocalOp) -> Array2<C64> {
    Array2::from_shape_fn((2, 2), |(r, c)| op.get(r, c))
}

/// Kronecker-product matrix of one term; site 0 is the leftmost factor.
fn kron_term(qubits: usize, coeff: C64, factors: &[(usize, LocalOp)]) -> Array2<C64> {
    let mut full = Array2::from_elem((1, 1), coeff);
    for site in 0..qubits {
        let f = factors
            .iter()
            .find(|(s, _)| *s == site)
            .map(|(_, op)| local_dense(op))
            .unwrap_or_else(|| Array2::eye(2));
        full = kron(&full, &f);
    }
    full
}

fn basis_from(t: &Array2<C64>) -> CornerBasis {
    let cfg = StepConfig {
        eps: 1e-15,
        p_floor: 0.0,
        trace_policy: TracePolicy::Renormalize,
        ..StepConfig::default()
    };
    gram_truncate(&t.view(), &cfg).unwrap().basis
}

fn orthogonality_error(c: &CornerBasis) -> f64 {
    let f = c.factor();
    let g = adjoint(&f).dot(&f);
    let scale = c.trace();
    let mut worst: f64 = 0.0;
    for ((i, j), z) in g.indexed_iter() {
        let expect = if i == j { c.weights()[i] } else { 0.0 };
        worst = worst.max((z - expect).norm() / scale);
    }
    worst
}

/// `Tr √(√ρ σ √ρ)` by dense eigendecompositions, with eigenvalues below
/// round-off of the largest one treated as zero at both roots.
fn uhlmann(rho: &Array2<C64>, sigma: &Array2<C64>) -> f64 {
    let floor = |w: &[f64]| w[0].max(0.0) * 1e-13;
    let (w, v) = eigh_desc(&rho.view()).unwrap();
    let f = floor(&w);
    let mut s = v.clone();
    for (mut col, &l) in s.columns_mut().into_iter().zip(&w) {
        let r = if l > f { l.sqrt() } else { 0.0 };
        col.mapv_inplace(|z| z * r);
    }
    let root = s.dot(&adjoint(&v.view()));
    let m = root.dot(sigma).dot(&root);
    let m = (&m + &adjoint(&m.view())).mapv(|z| z * 0.5);
    let (w, _) = eigh_desc(&m.view()).unwrap();
    let f = floor(&w);
    w.iter().filter(|&&l| l > f).map(|l| l.sqrt()).sum()
}

fn two_qubit_noisy_system(h_coeffs: &[C64], rates: &[f64]) -> (OperatorSpec, cornerspace::noise::NoiseModel) {
    let space = HilbertSpec::qubits(2).unwrap();
    let paulis = [LocalOp::pauli_x(), LocalOp::pauli_y(), LocalOp::pauli_z()];
    let mut terms = Vec::new();
    for (k, c) in h_coeffs.iter().enumerate() {
        let (a, b) = (k / 3, k % 3);
        terms.push(Term::new(C64::from(c.re), vec![(0, paulis[a].clone()), (1, paulis[b].clone())]));
    }
    terms.push(Term::new(C64::from(h_coeffs[0].im), vec![(0, paulis[0].clone())]));
    let h = OperatorSpec::new(space, terms, true).unwrap();
    (h, local_decay_rates(2, rates).unwrap())
}

pub type Case = Result<(), TestCaseError>;

pub type ApplyInput = (usize, Vec<(C64, Vec<(usize, LocalOp)>)>, Vec<C64>);

pub fn apply_input() -> impl Strategy<Value = ApplyInput> {
    (1usize..=6).prop_flat_map(|q| (Just(q), prop::collection::vec(term(q), 1..5), vector(1 << q)))
}

pub fn apply_matches_kronecker((qubits, terms, v): ApplyInput) -> Case {
    let space = HilbertSpec::qubits(qubits).unwrap();
    let n = 1 << qubits;
    let mut dense = Array2::<C64>::zeros((n, n));
    let mut spec_terms = Vec::new();
    for (coeff, factors) in &terms {
        dense = dense + kron_term(qubits, *coeff, factors);
        spec_terms.push(Term::new(*coeff, factors.clone()));
    }
    let op = OperatorSpec::new(space, spec_terms, false).unwrap();
    let got = op.apply(&v).unwrap();
    let want = dense.dot(&ndarray::Array1::from(v.clone()));
    let scale = 1.0 + want.iter().map(|z| z.norm()).fold(0.0, f64::max);
    for (a, b) in got.iter().zip(want.iter()) {
        prop_assert!((a - b).norm() <= 1e-12 * scale, "{a} vs {b}");
    }
    Ok(())
}

pub fn truncate_input() -> impl Strategy<Value = (Array2<C64>, f64)> {
    (
        (1usize..=16, 1usize..=12).prop_flat_map(|(n, w)| matrix(n, w)),
        prop::sample::select(vec![1e-12, 1e-4, 1e-2]),
    )
}

pub fn gram_truncate_matches_dense((t, eps): (Array2<C64>, f64)) -> Case {
    prop_assume!(t.iter().map(|z| z.norm_sqr()).sum::<f64>() > 1e-6);
    let cfg = StepConfig {
        eps,
        p_floor: 0.0,
        trace_policy: TracePolicy::CarryDeficit,
        ..StepConfig::default()
    };
    let out = gram_truncate(&t.view(), &cfg).unwrap();
    let full = t.dot(&adjoint(&t.view()));
    let (lam, vecs) = eigh_desc(&full.view()).unwrap();
    let total: f64 = lam.iter().map(|l| l.max(0.0)).sum();
    let kept = out.basis.rank();
    for (p, l) in out.basis.weights().iter().zip(&lam) {
        prop_assert!((p - l).abs() <= 1e-9 * total, "{p} vs {l}");
    }
    let tail: f64 = lam[kept..].iter().map(|l| l.max(0.0)).sum();
    prop_assert!((out.discarded * out.trace_before - tail).abs() <= 1e-9 * total);
    // Projected states only coincide when the cut does not split a cluster.
    let gap = lam[kept - 1] - lam.get(kept).copied().unwrap_or(0.0).max(0.0);
    if gap > 1e-3 * total {
        let mut rho_k = Array2::<C64>::zeros(full.dim());
        for (k, &l) in lam.iter().enumerate().take(kept) {
            let col = vecs.column(k);
            for ((i, j), z) in rho_k.indexed_iter_mut() {
                *z += col[i] * col[j].conj() * l;
            }
        }
        let diff = (&out.basis.density() - &rho_k).iter().map(|z| z.norm()).fold(0.0, f64::max);
        prop_assert!(diff <= 1e-9 * total, "{diff}");
    }
    prop_assert!(orthogonality_error(&out.basis) <= 1e-10);
    Ok(())
}

pub type SystemInput = (Vec<C64>, Vec<f64>, Array2<C64>, f64);

pub fn system_input() -> impl Strategy<Value = SystemInput> {
    (
        prop::collection::vec(c64(), 9),
        prop::collection::vec(0.05..1.0f64, 2),
        (1usize..=3).prop_flat_map(|r| matrix(4, r)),
        prop::sample::select(vec![1e-10, 1e-4, 1e-2]),
    )
}

pub fn columns_stay_orthogonal((h, rates, init, eps): SystemInput) -> Case {
    let (h, noise) = two_qubit_noisy_system(&h, &rates);
    let cfg = StepConfig {
        dt: 0.1,
        eps,
        ..StepConfig::default()
    };
    let mut state = basis_from(&init);
    for _ in 0..5 {
        state = step(&state, &h, &noise, &cfg).unwrap();
        let err = orthogonality_error(&state);
        prop_assert!(err <= 1e-10, "{err}");
    }
    Ok(())
}

pub fn drift_is_second_order((h, rates, init, _): SystemInput) -> Case {
    let (h, noise) = two_qubit_noisy_system(&h, &rates);
    let start = basis_from(&init);
    let drift = |dt: f64| {
        let cfg = StepConfig {
            dt,
            eps: 1e-15,
            p_floor: 0.0,
            ..StepConfig::default()
        };
        step(&start, &h, &noise, &cfg).unwrap().trace_drift
    };
    let (coarse, fine) = (drift(0.02), drift(0.01));
    let g: f64 = rates.iter().sum();
    prop_assert!(coarse <= 2.0 * g * g * 0.02 * 0.02, "{coarse}");
    if coarse > 1e-12 {
        prop_assert!(coarse / fine >= 3.0, "ratio {}", coarse / fine);
    }
    Ok(())
}

pub fn fidelity_input() -> impl Strategy<Value = (Array2<C64>, Array2<C64>)> {
    (
        (1usize..=4).prop_flat_map(|r| matrix(4, r)),
        (1usize..=4).prop_flat_map(|r| matrix(4, r)),
    )
}

pub fn fidelity_matches_uhlmann((a, b): (Array2<C64>, Array2<C64>)) -> Case {
    prop_assume!(a.iter().map(|z| z.norm_sqr()).sum::<f64>() > 1e-3);
    prop_assume!(b.iter().map(|z| z.norm_sqr()).sum::<f64>() > 1e-3);
    let (a, b) = (basis_from(&a), basis_from(&b));
    let oracle = uhlmann(&a.density(), &b.density());
    let got = fidelity_mixed(&a, &b).unwrap();
    prop_assert!((got - oracle).abs() <= 1e-9, "{got} vs {oracle}");
    prop_assert!((fidelity_mixed(&b, &a).unwrap() - oracle).abs() <= 1e-9);
    Ok(())
}
