//! Jump-operator sets for the dissipation channels used in the experiments.

use crate::error::{invalid, Error, Result};
use crate::ops::{HilbertSpec, LocalOp, OperatorSpec, Term};
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

/// Channel family, as named in run configurations.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseKind {
    Decay,
    Dephasing,
    Collective,
}

impl NoiseKind {
    pub fn build(self, qubits: usize, gamma: f64) -> Result<NoiseModel> {
        match self {
            Self::Decay => local_decay(qubits, gamma),
            Self::Dephasing => local_dephasing(qubits, gamma),
            Self::Collective => collective_dephasing(qubits, gamma),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Decay => "decay",
            Self::Dephasing => "dephasing",
            Self::Collective => "collective",
        }
    }
}

/// A set of jump operators `J_i`, each already scaled by `√rate`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    space: HilbertSpec,
    jumps: Vec<OperatorSpec>,
}

impl NoiseModel {
    pub fn new(space: HilbertSpec, jumps: Vec<OperatorSpec>) -> Result<Self> {
        if jumps.iter().any(|j| j.space() != &space) {
            return Err(Error::MixedSpaces);
        }
        Ok(Self { space, jumps })
    }

    pub fn none(space: &HilbertSpec) -> Self {
        Self {
            space: space.clone(),
            jumps: Vec::new(),
        }
    }

    pub fn space(&self) -> &HilbertSpec {
        &self.space
    }

    pub fn jumps(&self) -> &[OperatorSpec] {
        &self.jumps
    }

    /// Channel count `D`.
    pub fn channels(&self) -> usize {
        self.jumps.len()
    }
}

fn check_rate(rate: f64) -> Result<f64> {
    if !(rate >= 0.0) || !rate.is_finite() {
        return Err(invalid(format!("rates must be finite and non-negative, got {rate}")));
    }
    Ok(rate)
}

fn per_site(qubits: usize, rates: &[f64], op: LocalOp) -> Result<NoiseModel> {
    if rates.len() != qubits {
        return Err(Error::DimensionMismatch {
            expected: qubits,
            found: rates.len(),
        });
    }
    let space = HilbertSpec::qubits(qubits)?;
    let jumps = rates
        .iter()
        .enumerate()
        .map(|(site, &g)| {
            let g = check_rate(g)?;
            OperatorSpec::local(&space, site, op.clone(), C64::from(g.sqrt()))
        })
        .collect::<Result<_>>()?;
    NoiseModel::new(space, jumps)
}

/// `J_i = √γ σ⁻_i` on every qubit.
pub fn local_decay(qubits: usize, gamma: f64) -> Result<NoiseModel> {
    local_decay_rates(qubits, &vec![check_rate(gamma)?; qubits])
}

pub fn local_decay_rates(qubits: usize, rates: &[f64]) -> Result<NoiseModel> {
    per_site(qubits, rates, LocalOp::sigma_minus())
}

/// `J_i = √γ σᶻ_i` on every qubit.
pub fn local_dephasing(qubits: usize, gamma: f64) -> Result<NoiseModel> {
    local_dephasing_rates(qubits, &vec![check_rate(gamma)?; qubits])
}

pub fn local_dephasing_rates(qubits: usize, rates: &[f64]) -> Result<NoiseModel> {
    per_site(qubits, rates, LocalOp::pauli_z())
}

/// Single collective jump `J = √γ (1/√L) Σ_i σᶻ_i`.
pub fn collective_dephasing(qubits: usize, gamma: f64) -> Result<NoiseModel> {
    let gamma = check_rate(gamma)?;
    let space = HilbertSpec::qubits(qubits)?;
    let coeff = C64::from((gamma / qubits as f64).sqrt());
    let terms = (0..qubits)
        .map(|site| Term::new(coeff, vec![(site, LocalOp::pauli_z())]))
        .collect();
    let jump = OperatorSpec::new(space.clone(), terms, true)?;
    NoiseModel::new(space, vec![jump])
}
