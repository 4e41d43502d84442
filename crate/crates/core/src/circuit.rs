//! Continuous-time gate schedules and reference states.
//!
//! Gates are realized by switching piecewise-constant Hamiltonians on and off
//! instantaneously. Times are in units of `1/δ`, with `δ` the Rabi frequency.

use crate::error::{invalid, Error, Result};
use crate::linalg::expm;
use crate::ode::{propagate, Integrator, Scaled};
use crate::ops::{HilbertSpec, LocalOp, OperatorSpec, Term, IM, ONE, ZERO};
use ndarray::Array2;
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub label: String,
    /// Index of the logical gate this segment belongs to.
    pub gate: usize,
    pub hamiltonian: OperatorSpec,
    pub duration: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GateSchedule {
    space: HilbertSpec,
    segments: Vec<Segment>,
}

impl GateSchedule {
    pub fn new(space: HilbertSpec, segments: Vec<Segment>) -> Result<Self> {
        for s in &segments {
            if s.hamiltonian.space() != &space {
                return Err(Error::MixedSpaces);
            }
            if !(s.duration >= 0.0) || !s.duration.is_finite() {
                return Err(invalid(format!("segment '{}' has invalid duration {}", s.label, s.duration)));
            }
        }
        Ok(Self { space, segments })
    }

    pub fn empty(space: &HilbertSpec) -> Self {
        Self {
            space: space.clone(),
            segments: Vec::new(),
        }
    }

    pub fn space(&self) -> &HilbertSpec {
        &self.space
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn total_duration(&self) -> f64 {
        self.segments.iter().map(|s| s.duration).sum()
    }

    /// Number of logical gates.
    pub fn gate_count(&self) -> usize {
        let mut gates: Vec<usize> = self.segments.iter().map(|s| s.gate).collect();
        gates.dedup();
        gates.len()
    }

    pub fn push(&mut self, segment: Segment) -> Result<()> {
        if segment.hamiltonian.space() != &self.space {
            return Err(Error::MixedSpaces);
        }
        self.segments.push(segment);
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let raw: GateSchedule = serde_json::from_str(text)?;
        Self::new(raw.space, raw.segments)
    }
}

fn check_qubit(space: &HilbertSpec, site: usize) -> Result<()> {
    let l = space
        .qubit_count()
        .ok_or_else(|| invalid("gate schedules act on qubit registers"))?;
    if site >= l {
        return Err(Error::SiteOutOfRange { site, sites: l });
    }
    Ok(())
}

/// Hadamard on qubit `site` as two segments: a `π/2` rotation about `y`
/// followed by a `π` rotation about `z`.
pub fn hadamard_segments(space: &HilbertSpec, site: usize, delta: f64, gate: usize) -> Result<[Segment; 2]> {
    check_qubit(space, site)?;
    if !(delta > 0.0) {
        return Err(invalid("Rabi frequency must be positive"));
    }
    let hy = OperatorSpec::local(space, site, LocalOp::pauli_y(), C64::from(-delta / 2.0))?.with_hermitian_hint(true);
    let hz = OperatorSpec::local(space, site, LocalOp::pauli_z(), C64::from(delta / 2.0))?.with_hermitian_hint(true);
    Ok([
        Segment {
            label: format!("H{}a", site + 1),
            gate,
            hamiltonian: hy,
            duration: PI / (2.0 * delta),
        },
        Segment {
            label: format!("H{}b", site + 1),
            gate,
            hamiltonian: hz,
            duration: PI / delta,
        },
    ])
}

/// Controlled phase `θ` between `control` and `target`, imprinting `e^{iθ}`
/// on the state where both qubits are down.
pub fn controlled_phase_segment(
    space: &HilbertSpec,
    control: usize,
    target: usize,
    theta: f64,
    delta: f64,
    gate: usize,
) -> Result<Segment> {
    check_qubit(space, control)?;
    check_qubit(space, target)?;
    if control == target {
        return Err(invalid("controlled phase needs two distinct qubits"));
    }
    if !(theta > 0.0) || !(delta > 0.0) {
        return Err(invalid("phase angle and Rabi frequency must be positive"));
    }
    let c = C64::from(delta / 4.0);
    let z = LocalOp::pauli_z;
    let h = OperatorSpec::new(
        space.clone(),
        vec![
            Term::new(c, vec![(control, z())]),
            Term::new(c, vec![(target, z())]),
            Term::new(-c, vec![(control, z()), (target, z())]),
            Term::new(-c, vec![]),
        ],
        true,
    )?;
    Ok(Segment {
        label: format!("CP{}{}", control + 1, target + 1),
        gate,
        hamiltonian: h,
        duration: theta / delta,
    })
}

/// Gate-ladder QFT: for each qubit a Hadamard followed by controlled phases
/// `π/2^m` from the qubits `m` positions below it. No terminal swaps, so the
/// noiseless unitary is the DFT up to bit reversal.
pub fn qft_schedule(qubits: usize, delta: f64) -> Result<GateSchedule> {
    let space = HilbertSpec::qubits(qubits)?;
    let mut schedule = GateSchedule::empty(&space);
    let mut gate = 0;
    for i in 0..qubits {
        for s in hadamard_segments(&space, i, delta, gate)? {
            schedule.push(s)?;
        }
        gate += 1;
        for m in 1..qubits - i {
            let theta = PI / (1u64 << m) as f64;
            schedule.push(controlled_phase_segment(&space, i + m, i, theta, delta, gate)?)?;
            gate += 1;
        }
    }
    Ok(schedule)
}

/// `ψ₀ = (1/√(2N)) Σ_n (1 + e^{2πi n/N}) |n⟩`, which the QFT maps to GHZ.
pub fn inverse_qft_ghz_state(qubits: usize) -> Result<Vec<C64>> {
    let n = HilbertSpec::qubits(qubits)?.dim();
    let norm = 1.0 / (2.0 * n as f64).sqrt();
    Ok((0..n)
        .map(|k| (ONE + C64::from_polar(1.0, 2.0 * PI * k as f64 / n as f64)) * norm)
        .collect())
}

pub fn ghz_state(qubits: usize) -> Result<Vec<C64>> {
    let n = HilbertSpec::qubits(qubits)?.dim();
    let mut v = vec![ZERO; n];
    v[0] = C64::from(0.5f64.sqrt());
    v[n - 1] = v[0];
    Ok(v)
}

pub fn basis_state(dim: usize, index: usize) -> Result<Vec<C64>> {
    if index >= dim {
        return Err(invalid(format!("basis index {index} out of range for dimension {dim}")));
    }
    let mut v = vec![ZERO; dim];
    v[index] = ONE;
    Ok(v)
}

/// Basis index of a bit string, first character = qubit 1 = most significant
/// bit. `'0'` is up, `'1'` is down.
pub fn bitstring_index(bits: &str) -> Result<usize> {
    if bits.is_empty() || bits.len() > 40 {
        return Err(invalid("bit string must have 1..=40 characters"));
    }
    bits.chars().try_fold(0usize, |acc, ch| match ch {
        '0' => Ok(acc << 1),
        '1' => Ok((acc << 1) | 1),
        other => Err(invalid(format!("bit string contains '{other}'"))),
    })
}

/// Noiseless output: each segment's exact propagator `e^{−iHτ}` applied in
/// turn. Gate Hamiltonians have two or three distinct eigenvalues, so the
/// Krylov projection terminates early and is exact to round-off.
pub fn ideal_output(schedule: &GateSchedule, psi: &[C64]) -> Result<Vec<C64>> {
    schedule.space().check_len(psi.len())?;
    let mut v = psi.to_vec();
    for seg in schedule.segments() {
        let op = seg.hamiltonian.compile();
        let gen = Scaled { op: &op, scale: -IM };
        propagate(&gen, &mut v, seg.duration, Integrator::default(), 1e-14, 100_000)?;
    }
    Ok(v)
}

/// Dense unitary of a noiseless schedule. Small registers only.
pub fn schedule_unitary(schedule: &GateSchedule) -> Result<Array2<C64>> {
    let n = schedule.space().dim();
    if n > 1 << 10 {
        return Err(Error::CapExceeded { dim: n, cap: 1 << 10 });
    }
    let mut u = Array2::<C64>::eye(n);
    for seg in schedule.segments() {
        let gen = seg.hamiltonian.dense().mapv(|z| -IM * z * seg.duration);
        u = expm(&gen.view())?.dot(&u);
    }
    Ok(u)
}
