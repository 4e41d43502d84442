//! Process tomography of a noisy two-qubit gate and its Pauli error matrix.
//!
//! Choi convention: `J = Σ_ij |i⟩⟨j| ⊗ E(|i⟩⟨j|)`, input index major, so
//! `J[(i·4 + a), (j·4 + b)] = ⟨a|E(|i⟩⟨j|)|b⟩`.

use crate::circuit::{schedule_unitary, GateSchedule};
use crate::dense::{integrate_exact, DenseConfig, DenseState};
use crate::error::{invalid, Error, Result};
use crate::linalg::{adjoint, eigh_desc};
use crate::noise::NoiseModel;
use crate::ops::{HilbertSpec, LocalOp, IM, ONE, ZERO};
use ndarray::{Array1, Array2};
use ndarray_linalg::Inverse;
use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::io::Write;

const D: usize = 4;
const PAULI: [char; 4] = ['I', 'X', 'Y', 'Z'];

/// Label of Pauli string `m = 4a + b`, qubit 1 first.
pub fn pauli_label(m: usize) -> String {
    format!("{}{}", PAULI[m / 4], PAULI[m % 4])
}

/// Number of non-identity factors in string `m`.
pub fn pauli_weight(m: usize) -> usize {
    usize::from(m / 4 != 0) + usize::from(!m.is_multiple_of(4))
}

fn pauli_1q(k: usize) -> Array2<C64> {
    let op = match k {
        0 => LocalOp::identity(2),
        1 => LocalOp::pauli_x(),
        2 => LocalOp::pauli_y(),
        _ => LocalOp::pauli_z(),
    };
    Array2::from_shape_fn((2, 2), |(r, c)| op.get(r, c))
}

fn kron(a: &Array2<C64>, b: &Array2<C64>) -> Array2<C64> {
    let (ra, ca) = a.dim();
    let (rb, cb) = b.dim();
    Array2::from_shape_fn((ra * rb, ca * cb), |(r, c)| a[[r / rb, c / cb]] * b[[r % rb, c % cb]])
}

/// Two-qubit Pauli string `m = 4a + b` as a 4×4 matrix.
pub fn pauli_string(m: usize) -> Array2<C64> {
    kron(&pauli_1q(m / 4), &pauli_1q(m % 4))
}

/// Choi matrix of a two-qubit channel.
#[derive(Clone, Debug, PartialEq)]
pub struct Choi {
    pub matrix: Array2<C64>,
}

impl Choi {
    pub fn from_kraus(kraus: &[Array2<C64>]) -> Result<Self> {
        let mut matrix = Array2::<C64>::zeros((D * D, D * D));
        for k in kraus {
            if k.dim() != (D, D) {
                return Err(Error::DimensionMismatch { expected: D, found: k.nrows() });
            }
            // |K⟩⟩ = Σ_i |i⟩ ⊗ K|i⟩
            let v = Array1::from_shape_fn(D * D, |idx| k[[idx % D, idx / D]]);
            for r in 0..D * D {
                for c in 0..D * D {
                    matrix[[r, c]] += v[r] * v[c].conj();
                }
            }
        }
        Ok(Self { matrix })
    }

    pub fn from_unitary(u: &Array2<C64>) -> Result<Self> {
        Self::from_kraus(std::slice::from_ref(u))
    }

    /// `E(X) = Σ_ij X_ij E(|i⟩⟨j|)`.
    pub fn apply(&self, x: &Array2<C64>) -> Array2<C64> {
        Array2::from_shape_fn((D, D), |(a, b)| {
            let mut s = ZERO;
            for i in 0..D {
                for j in 0..D {
                    s += x[[i, j]] * self.matrix[[i * D + a, j * D + b]];
                }
            }
            s
        })
    }

    /// Channel `E ∘ F` (apply `F` first).
    pub fn after(&self, first: &Choi) -> Choi {
        let mut matrix = Array2::<C64>::zeros((D * D, D * D));
        for i in 0..D {
            for j in 0..D {
                let mut unit = Array2::<C64>::zeros((D, D));
                for a in 0..D {
                    for b in 0..D {
                        unit[[a, b]] = first.matrix[[i * D + a, j * D + b]];
                    }
                }
                let out = self.apply(&unit);
                for a in 0..D {
                    for b in 0..D {
                        matrix[[i * D + a, j * D + b]] = out[[a, b]];
                    }
                }
            }
        }
        Choi { matrix }
    }

    /// `max |Tr_out J − 𝟙|`.
    pub fn trace_preservation_error(&self) -> f64 {
        let mut err: f64 = 0.0;
        for i in 0..D {
            for j in 0..D {
                let t: C64 = (0..D).map(|a| self.matrix[[i * D + a, j * D + a]]).sum();
                let target = if i == j { ONE } else { ZERO };
                err = err.max((t - target).norm());
            }
        }
        err
    }

    pub fn min_eigenvalue(&self) -> Result<f64> {
        let h = (&self.matrix + &adjoint(&self.matrix.view())).mapv(|z| z * 0.5);
        let (w, _) = eigh_desc(&h.view())?;
        Ok(*w.last().expect("nonempty"))
    }

    /// `Tr J² / (Tr J)²`; one for a unitary channel.
    pub fn purity(&self) -> f64 {
        let tr: C64 = self.matrix.diag().sum();
        let tr2: f64 = self.matrix.iter().map(|z| z.norm_sqr()).sum();
        tr2 / tr.norm_sqr()
    }
}

/// The 16 products of `{|0⟩, |1⟩, |+⟩, |+i⟩}`, as state vectors.
pub fn tomography_inputs() -> Vec<Vec<C64>> {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let singles = [
        [ONE, ZERO],
        [ZERO, ONE],
        [C64::from(h), C64::from(h)],
        [C64::from(h), IM * h],
    ];
    let mut out = Vec::with_capacity(16);
    for a in &singles {
        for b in &singles {
            out.push(vec![a[0] * b[0], a[0] * b[1], a[1] * b[0], a[1] * b[1]]);
        }
    }
    out
}

/// Runs the gate on every tomography input with the dense engine and
/// assembles the Choi matrix from the linear combinations that give matrix
/// units.
pub fn channel_from_evolution(gate: &GateSchedule, noise: &NoiseModel, cfg: &DenseConfig) -> Result<Choi> {
    if gate.space() != &HilbertSpec::qubits(2)? {
        return Err(invalid("process tomography needs a two-qubit schedule"));
    }
    let inputs = tomography_inputs();
    let outputs: Vec<Array2<C64>> = inputs
        .par_iter()
        .map(|psi| {
            let rho = DenseState::from_pure(psi)?;
            integrate_exact(&rho, gate, noise, cfg).map(|(s, _)| s.rho)
        })
        .collect::<Result<_>>()?;
    // Columns: row-major vec of each input density matrix.
    let s = Array2::from_shape_fn((D * D, D * D), |(r, k)| inputs[k][r / D] * inputs[k][r % D].conj());
    let s_inv = s.inv().map_err(|e| Error::Linalg(format!("tomography inputs: {e}")))?;
    let mut matrix = Array2::<C64>::zeros((D * D, D * D));
    for i in 0..D {
        for j in 0..D {
            let coeffs = s_inv.column(i * D + j);
            for (k, out) in outputs.iter().enumerate() {
                let w = coeffs[k];
                if w == ZERO {
                    continue;
                }
                for a in 0..D {
                    for b in 0..D {
                        matrix[[i * D + a, j * D + b]] += w * out[[a, b]];
                    }
                }
            }
        }
    }
    let choi = Choi { matrix };
    let min = choi.min_eigenvalue()?;
    if min < -1e-8 {
        return Err(Error::NonPhysical(format!("Choi matrix eigenvalue {min:.3e}")));
    }
    let tp = choi.trace_preservation_error();
    if tp > 1e-6 {
        return Err(Error::NonPhysical(format!("trace preservation error {tp:.3e}")));
    }
    Ok(choi)
}

/// `χ` of a channel in the two-qubit Pauli basis:
/// `E(ρ) = Σ_mn χ_mn P_m ρ P_n`.
pub fn chi_from_choi(choi: &Choi) -> Array2<C64> {
    let vecs: Vec<Array1<C64>> = (0..16)
        .map(|m| {
            let p = pauli_string(m);
            Array1::from_shape_fn(D * D, |idx| p[[idx % D, idx / D]])
        })
        .collect();
    let jv: Vec<Array1<C64>> = vecs.iter().map(|v| choi.matrix.dot(v)).collect();
    Array2::from_shape_fn((16, 16), |(m, n)| {
        vecs[m].iter().zip(jv[n].iter()).map(|(a, b)| a.conj() * b).sum::<C64>() / 16.0
    })
}

/// Pauli error matrix of a gate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChiMatrix {
    /// Raw `χ^err`, not rescaled and with `χ_11` intact. Rows of `[re, im]`.
    #[serde(with = "complex_rows")]
    pub chi: Array2<C64>,
    /// `γτ`, the reporting scale.
    pub gamma_tau: f64,
}

impl ChiMatrix {
    /// `|χ_mn| / (γτ)` with the `II,II` entry zeroed.
    pub fn reported(&self) -> Array2<f64> {
        let scale = if self.gamma_tau > 0.0 { self.gamma_tau } else { 1.0 };
        let mut r = self.chi.mapv(|z| z.norm() / scale);
        r[[0, 0]] = 0.0;
        r
    }

    /// Largest `|χ_mn|` over entries accepted by `filter`, skipping `II,II`.
    pub fn max_entry(&self, filter: impl Fn(usize, usize) -> bool) -> f64 {
        let mut best: f64 = 0.0;
        for ((m, n), z) in self.chi.indexed_iter() {
            if (m, n) != (0, 0) && filter(m, n) {
                best = best.max(z.norm());
            }
        }
        best
    }

    /// Largest entry that involves a string outside `{I,Z}⊗{I,Z}`.
    pub fn max_off_z_support(&self) -> f64 {
        let z_only = |m: usize| matches!(m / 4, 0 | 3) && matches!(m % 4, 0 | 3);
        self.max_entry(|m, n| !(z_only(m) && z_only(n)))
    }

    /// Largest entry among single-qubit (`w = 1`) and two-qubit (`w = 2`)
    /// events, where an entry's weight is the larger of its two strings.
    pub fn max_by_weight(&self, w: usize) -> f64 {
        self.max_entry(|m, n| pauli_weight(m).max(pauli_weight(n)) == w)
    }

    pub fn write_csv(&self, mut out: impl Write) -> Result<()> {
        let r = self.reported();
        write!(out, "pauli")?;
        for n in 0..16 {
            write!(out, ",{}", pauli_label(n))?;
        }
        writeln!(out)?;
        for m in 0..16 {
            write!(out, "{}", pauli_label(m))?;
            for n in 0..16 {
                write!(out, ",{:.6e}", r[[m, n]])?;
            }
            writeln!(out)?;
        }
        Ok(())
    }
}

mod complex_rows {
    use super::*;
    use serde::{Deserializer, Serializer};

    pub fn serialize<S: Serializer>(a: &Array2<C64>, s: S) -> std::result::Result<S::Ok, S::Error> {
        let rows: Vec<Vec<[f64; 2]>> = a.rows().into_iter().map(|r| r.iter().map(|z| [z.re, z.im]).collect()).collect();
        rows.serialize(s)
    }

    pub fn deserialize<'de, De: Deserializer<'de>>(d: De) -> std::result::Result<Array2<C64>, De::Error> {
        let rows: Vec<Vec<[f64; 2]>> = Vec::deserialize(d)?;
        let n = rows.len();
        let flat: Vec<C64> = rows.iter().flatten().map(|p| C64::new(p[0], p[1])).collect();
        if rows.iter().any(|r| r.len() != n) {
            return Err(serde::de::Error::custom("chi matrix must be square"));
        }
        Ok(Array2::from_shape_vec((n, n), flat).expect("square"))
    }
}

/// Strips the ideal unitary off a simulated channel, `E_G = E ∘ U†·U`, and
/// expresses the remainder in the Pauli basis.
pub fn error_chi(choi: &Choi, ideal: &GateSchedule, gamma_tau: f64) -> Result<ChiMatrix> {
    let u = schedule_unitary(ideal)?;
    if u.dim() != (D, D) {
        return Err(invalid("ideal gate must act on two qubits"));
    }
    let undo = Choi::from_unitary(&adjoint(&u.view()))?;
    let e_g = choi.after(&undo);
    Ok(ChiMatrix {
        chi: chi_from_choi(&e_g),
        gamma_tau,
    })
}
