//! Fidelities, entropies and spin statistics evaluated directly on corner
//! factors, plus the bilinear infidelity surface used for initial-state sweeps.

use crate::corner::CornerBasis;
use crate::error::{invalid, Error, Result};
use crate::linalg::{adjoint, adjoint_dot, eigh_desc};
use crate::ops::HilbertSpec;
use ndarray::{Array1, Array2, ShapeBuilder};
use ndarray_linalg::LeastSquaresSvd;
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

/// Reduced states larger than this are refused by [`entanglement_entropy`].
pub const DEFAULT_REDUCED_CAP: usize = 1 << 11;

fn hermitian_part(m: &Array2<C64>) -> Array2<C64> {
    (m + &adjoint(&m.view())).mapv(|z| z * 0.5)
}

fn check_same_dim(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::DimensionMismatch { expected: a, found: b });
    }
    Ok(())
}

/// Uhlmann fidelity `Tr √(√ρ_A ρ_B √ρ_A)` of two corner states.
///
/// With weighted factors `ρ = C C†` the operator under the root is unitarily
/// equivalent to `M = O O†`, `O = C_A† C_B`, which is only `M_A × M_A`.
/// `M_km = Σ_k' √(p_k p_m) p'_k' ⟨φ_k|φ'_k'⟩⟨φ'_k'|φ_m⟩` entry by entry.
pub fn fidelity_mixed(a: &CornerBasis, b: &CornerBasis) -> Result<f64> {
    check_same_dim(a.dim(), b.dim())?;
    let o = adjoint_dot(&a.factor(), &b.factor());
    // O O† and O† O share their nonzero spectrum; take the smaller one.
    let m = if o.nrows() <= o.ncols() {
        o.dot(&adjoint(&o.view()))
    } else {
        adjoint_dot(&o.view(), &o.view())
    };
    let (w, _) = eigh_desc(&hermitian_part(&m).view())?;
    Ok(sum_sqrt(&w))
}

/// `Σ √λ` with eigenvalues at round-off level treated as zero; otherwise
/// their square roots would dominate the error.
fn sum_sqrt(w: &[f64]) -> f64 {
    let top = w.first().copied().unwrap_or(0.0).max(0.0);
    let floor = top * f64::EPSILON * (4 * w.len()) as f64;
    w.iter().filter(|&&l| l > floor).map(|l| l.sqrt()).sum()
}

/// `√⟨φ|ρ|φ⟩` for a pure reference, which need not be normalized.
pub fn fidelity_to_pure(a: &CornerBasis, phi: &[C64]) -> Result<f64> {
    check_same_dim(a.dim(), phi.len())?;
    let norm2: f64 = phi.iter().map(|z| z.norm_sqr()).sum();
    if norm2 == 0.0 {
        return Err(Error::ZeroVector);
    }
    let overlap: f64 = (0..a.rank())
        .map(|k| {
            let s: C64 = phi.iter().zip(a.column(k)).map(|(x, y)| x.conj() * y).sum();
            s.norm_sqr()
        })
        .sum();
    Ok((overlap / norm2).sqrt())
}

fn entropy_of(p: impl IntoIterator<Item = f64>) -> f64 {
    p.into_iter()
        .filter(|&x| x > 0.0)
        .map(|x| -x * x.ln())
        .sum()
}

/// `−Σ p_k ln p_k` over the retained weights, in nats. Discarded weight is not
/// imputed.
pub fn von_neumann_entropy(a: &CornerBasis) -> f64 {
    entropy_of(a.weights().iter().copied())
}

/// Entropy of the state of sites `n..L` after tracing out the first `n`
/// sites, in nats.
///
/// Each weighted column is reshaped to a `d_A × d_B` block `Ψ_k`. The reduced
/// state is `ρ_B = X†X` with `X` the stack of all blocks, so its nonzero
/// spectrum is also that of `X X†`. Whichever of the two is smaller gets
/// diagonalized; `cap` bounds that size.
pub fn entanglement_entropy(a: &CornerBasis, space: &HilbertSpec, n: usize, cap: usize) -> Result<f64> {
    check_same_dim(space.dim(), a.dim())?;
    let sites = space.sites();
    if n == 0 || n >= sites {
        return Err(invalid(format!("cut {n} must lie in 1..{sites}")));
    }
    let d_a: usize = space.dims()[..n].iter().product();
    let d_b = space.dim() / d_a;
    let stacked = a.rank() * d_a;
    let side = d_b.min(stacked);
    if side > cap {
        return Err(Error::CapExceeded { dim: side, cap });
    }
    let mut x = Array2::<C64>::zeros((stacked, d_b).f());
    for k in 0..a.rank() {
        let col = a.column(k);
        for i in 0..d_a {
            x.row_mut(k * d_a + i).assign(&ndarray::ArrayView1::from(&col[i * d_b..(i + 1) * d_b]));
        }
    }
    let reduced = if d_b <= stacked {
        adjoint_dot(&x.view(), &x.view())
    } else {
        x.dot(&adjoint(&x.view()))
    };
    let (w, _) = eigh_desc(&hermitian_part(&reduced).view())?;
    Ok(entropy_of(w))
}

/// Spin-up count and barycenter of a qubit register.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpinStats {
    /// `Σ_ℓ Tr[|↑⟩⟨↑|_ℓ ρ]`.
    pub n_s: f64,
    /// `(1/n_S) Σ_ℓ ℓ Tr[|↑⟩⟨↑|_ℓ ρ]` with `ℓ` counted from 1; `None` when no
    /// spin is up.
    pub barycenter: Option<f64>,
}

/// Up-spin populations per qubit (qubit 1 first).
pub fn up_populations(a: &CornerBasis, qubits: usize) -> Result<Vec<f64>> {
    if a.dim() != 1usize << qubits {
        return Err(Error::DimensionMismatch {
            expected: 1usize << qubits,
            found: a.dim(),
        });
    }
    let mut diag = vec![0.0; a.dim()];
    for k in 0..a.rank() {
        for (d, z) in diag.iter_mut().zip(a.column(k)) {
            *d += z.norm_sqr();
        }
    }
    let mut up = vec![0.0; qubits];
    for (idx, &w) in diag.iter().enumerate() {
        if w == 0.0 {
            continue;
        }
        for (l, u) in up.iter_mut().enumerate() {
            // |↑⟩ is bit value 0; qubit 1 is the most significant bit.
            if idx >> (qubits - 1 - l) & 1 == 0 {
                *u += w;
            }
        }
    }
    Ok(up)
}

pub fn spin_statistics(a: &CornerBasis, qubits: usize) -> Result<SpinStats> {
    let up = up_populations(a, qubits)?;
    let n_s: f64 = up.iter().sum();
    let barycenter = (n_s > 1e-12).then(|| up.iter().enumerate().map(|(l, u)| (l + 1) as f64 * u).sum::<f64>() / n_s);
    Ok(SpinStats { n_s, barycenter })
}

/// Time series of the entanglement entropy across one cut.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct BipartitionEntropySeries {
    pub cut: usize,
    /// `(t, S_ent)` in nats.
    pub samples: Vec<(f64, f64)>,
}

/// One initial state of a sweep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    pub index: usize,
    pub n_s: f64,
    pub barycenter: f64,
    pub infidelity: f64,
}

/// `1 − F ≈ a (n_S − n_S0)(B − B_0) + I_0`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BilinearFit {
    pub a: f64,
    /// Undefined for a flat surface (`a = 0`).
    pub n_s0: Option<f64>,
    pub b0: Option<f64>,
    pub i0: f64,
    /// Linear-model coefficients of `a n_S B + b n_S + c B + d`.
    pub linear: [f64; 4],
    /// Root-mean-square residual.
    pub residual: f64,
}

/// Least-squares fit of the bilinear surface through the equivalent linear
/// model, then back-solved for the centered parameters.
pub fn bilinear_fit(records: &[SweepRecord]) -> Result<BilinearFit> {
    if records.len() < 8 {
        return Err(Error::DegenerateFit(format!("{} records, need at least 8", records.len())));
    }
    let distinct = |f: fn(&SweepRecord) -> f64| {
        let mut v: Vec<f64> = records.iter().map(f).collect();
        v.sort_by(f64::total_cmp);
        v.dedup_by(|x, y| (*x - *y).abs() <= 1e-9 * y.abs().max(1.0));
        v.len()
    };
    if distinct(|r| r.n_s) < 3 || distinct(|r| r.barycenter) < 3 {
        return Err(Error::DegenerateFit("need at least 3 distinct n_S and B values".into()));
    }
    if records
        .iter()
        .any(|r| !(r.n_s.is_finite() && r.barycenter.is_finite() && r.infidelity.is_finite()))
    {
        return Err(Error::NonFinite("sweep record"));
    }
    let rows = records.len();
    let design = Array2::from_shape_fn((rows, 4), |(i, j)| {
        let r = &records[i];
        match j {
            0 => r.n_s * r.barycenter,
            1 => r.n_s,
            2 => r.barycenter,
            _ => 1.0,
        }
    });
    let y: Array1<f64> = records.iter().map(|r| r.infidelity).collect();
    let sol = design
        .least_squares(&y)
        .map_err(|e| Error::Linalg(format!("least squares: {e}")))?;
    let sv = &sol.singular_values;
    let smax = sv.iter().copied().fold(0.0, f64::max);
    if sol.rank < 4 || sv.iter().any(|&s| s <= 1e-12 * smax) {
        return Err(Error::DegenerateFit("collinear design matrix".into()));
    }
    let x = &sol.solution;
    let (a, b, c, d) = (x[0], x[1], x[2], x[3]);
    let fitted = design.dot(x);
    let residual = ((&fitted - &y).mapv(|r| r * r).sum() / rows as f64).sqrt();
    // Flat when the bilinear term never moves the surface beyond round-off.
    let scale = y.iter().map(|v| v.abs()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let reach = design.column(0).iter().map(|v| v.abs()).fold(0.0, f64::max);
    let flat = a.abs() * reach <= 1e-10 * scale;
    Ok(BilinearFit {
        a: if flat { 0.0 } else { a },
        n_s0: (!flat).then(|| -c / a),
        b0: (!flat).then(|| -b / a),
        i0: if flat { d } else { d - b * c / a },
        linear: [a, b, c, d],
        residual,
    })
}

/// Overlap matrix `O = C_A† C_B` of the weighted factors.
pub fn overlap_matrix(a: &CornerBasis, b: &CornerBasis) -> Result<Array2<C64>> {
    check_same_dim(a.dim(), b.dim())?;
    Ok(adjoint_dot(&a.factor(), &b.factor()))
}
