//! Run configuration and experiment drivers shared by the command-line tool
//! and the integration tests.

use crate::circuit::{basis_state, bitstring_index, controlled_phase_segment, ideal_output, inverse_qft_ghz_state, qft_schedule, GateSchedule};
use crate::corner::{evolve_schedule, CornerBasis, EvolveStats, StepConfig, TracePolicy};
use crate::dense::{integrate_exact, DenseConfig, DenseState};
use crate::error::{invalid, Error, Result};
use crate::kerr::{run_kerr_cat, square_grid, wigner, write_wigner_csv, KerrParams, KerrRun};
use crate::metrics::{
    bilinear_fit, entanglement_entropy, fidelity_to_pure, spin_statistics, von_neumann_entropy, BilinearFit, SweepRecord,
    DEFAULT_REDUCED_CAP,
};
use crate::noise::NoiseKind;
use crate::ops::HilbertSpec;
use crate::tomography::{channel_from_evolution, error_chi, ChiMatrix};
use num_complex::Complex64 as C64;
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

/// Name of the generator used for basis-state sampling, recorded in outputs.
pub const RNG_NAME: &str = "ChaCha8Rng";

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Experiment {
    #[default]
    Qft,
    Scaling,
    Sweep,
    Benchmark,
    Tomography,
    Kerrcat,
}

/// Noise channel and its strength. Exactly one of the two rate keys is set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSpec {
    #[serde(rename = "type", default = "default_noise_kind")]
    pub kind: NoiseKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma_over_delta: Option<f64>,
    #[serde(rename = "gamma_T_qft", default, skip_serializing_if = "Option::is_none")]
    pub gamma_t_qft: Option<f64>,
}

fn default_noise_kind() -> NoiseKind {
    NoiseKind::Decay
}

impl Default for NoiseSpec {
    fn default() -> Self {
        Self {
            kind: NoiseKind::Decay,
            gamma_over_delta: Some(1e-3),
            gamma_t_qft: None,
        }
    }
}

impl NoiseSpec {
    pub fn validate(&self) -> Result<()> {
        match (self.gamma_over_delta, self.gamma_t_qft) {
            (Some(_), Some(_)) => Err(invalid("give either noise.gamma_over_delta or noise.gamma_T_qft, not both")),
            (None, None) => Err(invalid("noise needs gamma_over_delta or gamma_T_qft")),
            (Some(g), None) | (None, Some(g)) if !(g >= 0.0) || !g.is_finite() => {
                Err(invalid(format!("noise rate must be a non-negative number, got {g}")))
            }
            _ => Ok(()),
        }
    }

    /// `γ` for an `L`-qubit QFT at Rabi frequency `delta`.
    pub fn gamma(&self, qubits: usize, delta: f64) -> Result<f64> {
        self.validate()?;
        match (self.gamma_over_delta, self.gamma_t_qft) {
            (Some(g), _) => Ok(g * delta),
            (_, Some(gt)) => Ok(gt / qft_schedule(qubits, delta)?.total_duration()),
            _ => unreachable!(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialState {
    /// Inverse QFT of the GHZ state.
    #[default]
    GhzPreimage,
    /// `|↑…↑⟩ = |0…0⟩`.
    AllUp,
    /// `|↓…↓⟩ = |1…1⟩`.
    AllDown,
    /// Basis state, qubit 1 first, `0` = up.
    Bitstring { bits: String },
    /// Basis states drawn without replacement.
    RandomBasis { count: usize, seed: u64 },
}

impl InitialState {
    pub fn name(&self) -> String {
        match self {
            Self::GhzPreimage => "ghz_preimage".into(),
            Self::AllUp => "all_up".into(),
            Self::AllDown => "all_down".into(),
            Self::Bitstring { bits } => format!("bitstring_{bits}"),
            Self::RandomBasis { count, seed } => format!("random_basis_{count}_{seed}"),
        }
    }

    pub fn validate(&self, qubits: usize) -> Result<()> {
        match self {
            Self::Bitstring { bits } if bits.len() != qubits => Err(invalid(format!(
                "initial_state.bits has {} characters but the register has {qubits} qubits",
                bits.len()
            ))),
            Self::Bitstring { bits } => bitstring_index(bits).map(|_| ()),
            Self::RandomBasis { count, .. } if *count == 0 || *count > 1usize << qubits.min(40) => {
                Err(invalid(format!("initial_state.count must lie in 1..=2^{qubits}")))
            }
            _ => Ok(()),
        }
    }

    /// Single state vector; random sampling is only meaningful for sweeps.
    pub fn vector(&self, qubits: usize) -> Result<Vec<C64>> {
        self.validate(qubits)?;
        let n = 1usize << qubits;
        match self {
            Self::GhzPreimage => inverse_qft_ghz_state(qubits),
            Self::AllUp => basis_state(n, 0),
            Self::AllDown => basis_state(n, n - 1),
            Self::Bitstring { bits } => basis_state(n, bitstring_index(bits)?),
            Self::RandomBasis { .. } => Err(invalid("random_basis initial states are only used by the sweep experiment")),
        }
    }

    /// Sampled basis indices for `RandomBasis`.
    pub fn sample_indices(&self, qubits: usize) -> Result<Vec<usize>> {
        self.validate(qubits)?;
        match self {
            Self::RandomBasis { count, seed } => {
                let mut rng = ChaCha8Rng::seed_from_u64(*seed);
                Ok(sample(&mut rng, 1usize << qubits, *count).into_vec())
            }
            _ => Err(invalid("the sweep experiment needs initial_state.kind = \"random_basis\"")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScalingSpec {
    pub qubits: Vec<usize>,
    pub gamma_over_delta: Vec<f64>,
    pub states: Vec<InitialState>,
}

impl Default for ScalingSpec {
    fn default() -> Self {
        Self {
            qubits: (6..=12).collect(),
            gamma_over_delta: vec![2.5e-4, 1e-3],
            states: vec![InitialState::GhzPreimage, InitialState::AllUp, InitialState::AllDown],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSpec {
    pub noises: Vec<NoiseKind>,
}

impl Default for SweepSpec {
    fn default() -> Self {
        Self {
            noises: vec![NoiseKind::Decay, NoiseKind::Dephasing],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchmarkSpec {
    pub qubits: Vec<usize>,
    pub epsilons: Vec<f64>,
}

impl Default for BenchmarkSpec {
    fn default() -> Self {
        Self {
            qubits: vec![4, 6, 8, 10],
            epsilons: vec![2e-4],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TomographySpec {
    /// Controlled-phase angle; the duration is `theta / delta`.
    pub theta: f64,
}

impl Default for TomographySpec {
    fn default() -> Self {
        Self { theta: PI / 2.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KerrSpec {
    pub params: KerrParams,
    /// Final time in units of `1/γ` (of `1/κ` when `γ = 0`).
    pub t_final: f64,
    /// Outer step; overrides `corner.dt` for this experiment.
    pub dt: f64,
    /// Number of leading corner states rendered as Wigner functions.
    pub wigner_columns: usize,
    pub grid_half_width: f64,
    pub grid_points: usize,
}

impl Default for KerrSpec {
    fn default() -> Self {
        Self {
            params: KerrParams::default(),
            t_final: 10.0,
            dt: 2e-3,
            wigner_columns: 4,
            grid_half_width: 7.5,
            grid_points: 101,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSpec {
    pub dir: Option<PathBuf>,
    /// Steps between time-series samples; segment ends are always sampled.
    pub sample_stride: usize,
    pub entanglement: bool,
    /// Largest reduced-state size diagonalized for entanglement entropies.
    pub entropy_cap: usize,
}

impl Default for OutputSpec {
    fn default() -> Self {
        Self {
            dir: None,
            sample_stride: 1,
            entanglement: true,
            entropy_cap: DEFAULT_REDUCED_CAP,
        }
    }
}

/// Full description of one run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub experiment: Experiment,
    /// Register size `L`.
    pub qubits: usize,
    /// Rabi frequency; sets the time unit.
    pub delta: f64,
    pub noise: NoiseSpec,
    pub corner: StepConfig,
    pub dense: DenseConfig,
    pub initial_state: InitialState,
    pub scaling: ScalingSpec,
    pub sweep: SweepSpec,
    pub benchmark: BenchmarkSpec,
    pub tomography: TomographySpec,
    pub kerr: KerrSpec,
    pub output: OutputSpec,
    /// Global worker-thread cap; `None` leaves the pool default.
    pub threads: Option<usize>,
    /// Serial reductions, no wall-clock values in outputs.
    pub deterministic: bool,
    /// Do not treat `m_max` preventing `eps` as a failure.
    pub allow_unreachable: bool,
    /// Repeat QFT runs at `dt/2` and report the fidelity change.
    pub convergence_check: bool,
}

/// Step settings used for circuit runs unless configured otherwise.
pub fn circuit_step_config() -> StepConfig {
    StepConfig {
        dt: 0.5,
        eps: 1e-4,
        trace_policy: TracePolicy::CarryDeficit,
        ..StepConfig::default()
    }
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            experiment: Experiment::Qft,
            qubits: 8,
            delta: 1.0,
            noise: NoiseSpec::default(),
            corner: circuit_step_config(),
            dense: DenseConfig::default(),
            initial_state: InitialState::GhzPreimage,
            scaling: ScalingSpec::default(),
            sweep: SweepSpec::default(),
            benchmark: BenchmarkSpec::default(),
            tomography: TomographySpec::default(),
            kerr: KerrSpec::default(),
            output: OutputSpec::default(),
            threads: None,
            deterministic: false,
            allow_unreachable: false,
            convergence_check: false,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.delta > 0.0) || !self.delta.is_finite() {
            return Err(invalid("delta must be positive"));
        }
        if self.threads == Some(0) {
            return Err(invalid("threads must be at least 1"));
        }
        self.corner.validate()?;
        let qubit_list: Vec<usize> = match self.experiment {
            Experiment::Scaling => self.scaling.qubits.clone(),
            Experiment::Benchmark => self.benchmark.qubits.clone(),
            Experiment::Tomography => vec![2],
            Experiment::Kerrcat => vec![],
            _ => vec![self.qubits],
        };
        for &l in &qubit_list {
            if !(1..=30).contains(&l) {
                return Err(invalid(format!("qubit count {l} outside 1..=30")));
            }
        }
        match self.experiment {
            Experiment::Qft => {
                self.noise.validate()?;
                self.initial_state.validate(self.qubits)?;
                if matches!(self.initial_state, InitialState::RandomBasis { .. }) {
                    return Err(invalid("random_basis initial states are only used by the sweep experiment"));
                }
            }
            Experiment::Scaling => {
                if self.scaling.qubits.len() < 2 {
                    return Err(invalid("scaling.qubits needs at least two sizes"));
                }
                if self.scaling.gamma_over_delta.iter().any(|g| !(*g > 0.0)) || self.scaling.gamma_over_delta.is_empty() {
                    return Err(invalid("scaling.gamma_over_delta needs positive rates"));
                }
                for s in &self.scaling.states {
                    for &l in &self.scaling.qubits {
                        s.validate(l)?;
                    }
                    if matches!(s, InitialState::RandomBasis { .. }) {
                        return Err(invalid("scaling.states cannot use random_basis"));
                    }
                }
            }
            Experiment::Sweep => {
                self.noise.validate()?;
                self.initial_state.sample_indices(self.qubits)?;
                if self.sweep.noises.is_empty() {
                    return Err(invalid("sweep.noises is empty"));
                }
            }
            Experiment::Benchmark => {
                self.noise.validate()?;
                if self.benchmark.epsilons.iter().any(|e| !(*e > 0.0 && *e < 1.0)) {
                    return Err(invalid("benchmark.epsilons must lie in (0, 1)"));
                }
            }
            Experiment::Tomography => {
                self.noise.validate()?;
                if self.noise.gamma_t_qft.is_some() {
                    return Err(invalid("tomography takes noise.gamma_over_delta"));
                }
                if !(self.tomography.theta > 0.0) {
                    return Err(invalid("tomography.theta must be positive"));
                }
            }
            Experiment::Kerrcat => {
                self.kerr.params.validate()?;
                if !(self.kerr.dt > 0.0) || !(self.kerr.t_final >= 0.0) {
                    return Err(invalid("kerr.dt must be positive and kerr.t_final non-negative"));
                }
                if self.kerr.grid_points == 0 {
                    return Err(invalid("kerr.grid_points must be positive"));
                }
            }
        }
        Ok(())
    }

    fn step_config(&self) -> StepConfig {
        StepConfig {
            parallel: self.corner.parallel && !self.deterministic,
            ..self.corner.clone()
        }
    }

    fn clock(&self, start: Instant) -> Option<f64> {
        (!self.deterministic).then(|| start.elapsed().as_secs_f64())
    }
}

/// Scalar result of one noisy QFT.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QftRecord {
    #[serde(rename = "L")]
    pub qubits: usize,
    pub noise: NoiseKind,
    pub gamma_over_delta: f64,
    #[serde(rename = "gamma_T")]
    pub gamma_t: f64,
    pub epsilon: f64,
    pub m_max: Option<usize>,
    pub dt: f64,
    pub initial_state: String,
    pub fidelity_to_ideal: f64,
    /// Same, after rescaling the final state to unit trace.
    pub fidelity_normalized: f64,
    #[serde(rename = "n_S")]
    pub n_s: f64,
    #[serde(rename = "B")]
    pub barycenter: Option<f64>,
    pub wall_time_s: Option<f64>,
    #[serde(rename = "max_M")]
    pub max_m: usize,
    pub final_m: usize,
    pub final_trace: f64,
    pub steps: usize,
    pub discarded_total: f64,
    pub drift_max: f64,
    pub unreachable_steps: usize,
    /// Fidelity change when the run is repeated at `dt/2`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub half_dt_delta: Option<f64>,
    /// Mixed-state entanglement entropies are qualitative indicators only.
    pub entanglement_qualitative: bool,
}

/// One time-series sample.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeriesRow {
    pub t: f64,
    pub m: usize,
    pub s: f64,
    pub trace_drift: f64,
    pub s_ent: Vec<f64>,
    pub segment: String,
    pub gate: usize,
    pub segment_end: bool,
}

#[derive(Clone, Debug)]
pub struct QftOutcome {
    pub record: QftRecord,
    pub series: Vec<SeriesRow>,
    pub state: CornerBasis,
}

struct QftJob<'a> {
    qubits: usize,
    delta: f64,
    kind: NoiseKind,
    gamma: f64,
    psi: &'a [C64],
    cfg: &'a StepConfig,
    series: Option<(usize, bool, usize)>,
}

struct QftRaw {
    state: CornerBasis,
    stats: EvolveStats,
    fidelity: f64,
    series: Vec<SeriesRow>,
}

fn qft_core(job: &QftJob) -> Result<QftRaw> {
    let schedule = qft_schedule(job.qubits, job.delta)?;
    let noise = job.kind.build(job.qubits, job.gamma)?;
    let space = schedule.space().clone();
    let mut series = Vec::new();
    let stride = job.series.map(|s| s.0).unwrap_or(usize::MAX);
    let (state, stats) = evolve_schedule(CornerBasis::from_pure_state(job.psi)?, &schedule, &noise, job.cfg, stride, |obs| {
        if let Some((_, ent, cap)) = job.series {
            let s_ent = if ent {
                (1..job.qubits)
                    .map(|n| entanglement_entropy(obs.state, &space, n, cap))
                    .collect::<Result<Vec<_>>>()?
            } else {
                Vec::new()
            };
            series.push(SeriesRow {
                t: obs.state.t,
                m: obs.state.rank(),
                s: von_neumann_entropy(obs.state),
                trace_drift: obs.state.trace_drift,
                s_ent,
                segment: obs.label.to_string(),
                gate: schedule.segments().get(obs.segment).map(|s| s.gate).unwrap_or(0),
                segment_end: obs.segment_end,
            });
        }
        Ok(())
    })?;
    let ideal = ideal_output(&schedule, job.psi)?;
    let fidelity = fidelity_to_pure(&state, &ideal)?;
    Ok(QftRaw {
        state,
        stats,
        fidelity,
        series,
    })
}

/// Noisy QFT with time series.
pub fn run_qft(cfg: &RunConfig) -> Result<QftOutcome> {
    cfg.validate()?;
    let l = cfg.qubits;
    let gamma = cfg.noise.gamma(l, cfg.delta)?;
    let t_qft = qft_schedule(l, cfg.delta)?.total_duration();
    let psi = cfg.initial_state.vector(l)?;
    let step = cfg.step_config();
    let start = Instant::now();
    let raw = qft_core(&QftJob {
        qubits: l,
        delta: cfg.delta,
        kind: cfg.noise.kind,
        gamma,
        psi: &psi,
        cfg: &step,
        series: Some((cfg.output.sample_stride.max(1), cfg.output.entanglement, cfg.output.entropy_cap)),
    })?;
    let wall = cfg.clock(start);
    let half_dt_delta = if cfg.convergence_check {
        let half = StepConfig {
            dt: step.dt / 2.0,
            ..step.clone()
        };
        let fine = qft_core(&QftJob {
            qubits: l,
            delta: cfg.delta,
            kind: cfg.noise.kind,
            gamma,
            psi: &psi,
            cfg: &half,
            series: None,
        })?;
        Some((fine.fidelity - raw.fidelity).abs())
    } else {
        None
    };
    let spins = spin_statistics(&CornerBasis::from_pure_state(&psi)?, l)?;
    let trace = raw.state.trace();
    let record = QftRecord {
        qubits: l,
        noise: cfg.noise.kind,
        gamma_over_delta: gamma / cfg.delta,
        gamma_t: gamma * t_qft,
        epsilon: step.eps,
        m_max: step.m_max,
        dt: step.dt,
        initial_state: cfg.initial_state.name(),
        fidelity_to_ideal: raw.fidelity,
        fidelity_normalized: raw.fidelity / trace.sqrt(),
        n_s: spins.n_s,
        barycenter: spins.barycenter,
        wall_time_s: wall,
        max_m: raw.stats.max_rank,
        final_m: raw.state.rank(),
        final_trace: trace,
        steps: raw.stats.steps,
        discarded_total: raw.stats.discarded_total,
        drift_max: raw.stats.drift_max,
        unreachable_steps: raw.stats.unreachable_steps,
        half_dt_delta,
        entanglement_qualitative: true,
    };
    Ok(QftOutcome {
        record,
        series: raw.series,
        state: raw.state,
    })
}

impl QftOutcome {
    pub fn write_series_csv(&self, mut out: impl Write) -> Result<()> {
        let cuts = self.series.first().map(|r| r.s_ent.len()).unwrap_or(0);
        write!(out, "t,M,S,exp_S,trace_drift")?;
        for n in 1..=cuts {
            write!(out, ",S_ent_{n}")?;
        }
        writeln!(out, ",segment,gate,segment_end")?;
        for r in &self.series {
            write!(out, "{:.6},{},{:.10e},{:.10e},{:.6e}", r.t, r.m, r.s, r.s.exp(), r.trace_drift)?;
            for s in &r.s_ent {
                write!(out, ",{s:.10e}")?;
            }
            writeln!(out, ",{},{},{}", r.segment, r.gate, u8::from(r.segment_end))?;
        }
        Ok(())
    }
}

/// One point of a scaling study.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingRow {
    pub state: String,
    pub gamma_over_delta: f64,
    #[serde(rename = "L")]
    pub qubits: usize,
    pub infidelity: f64,
    #[serde(rename = "max_M")]
    pub max_m: usize,
    pub unreachable_steps: usize,
    pub wall_time_s: Option<f64>,
}

/// Least-squares slope of `ln(1 − F)` against `ln L`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SlopeFit {
    pub state: String,
    pub gamma_over_delta: f64,
    pub slope: f64,
    pub stderr: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingOutcome {
    pub rows: Vec<ScalingRow>,
    pub fits: Vec<SlopeFit>,
}

/// Straight-line fit `y = a + b x`; returns `(b, stderr(b))`.
pub fn fit_line(x: &[f64], y: &[f64]) -> Result<(f64, f64)> {
    let n = x.len();
    if n < 2 || y.len() != n {
        return Err(Error::DegenerateFit("need at least two points".into()));
    }
    let mx = x.iter().sum::<f64>() / n as f64;
    let my = y.iter().sum::<f64>() / n as f64;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    if !(sxx > 0.0) {
        return Err(Error::DegenerateFit("abscissae coincide".into()));
    }
    let b = x.iter().zip(y).map(|(u, v)| (u - mx) * (v - my)).sum::<f64>() / sxx;
    let stderr = if n > 2 {
        let a = my - b * mx;
        let rss: f64 = x.iter().zip(y).map(|(u, v)| (v - a - b * u).powi(2)).sum();
        (rss / (n - 2) as f64 / sxx).sqrt()
    } else {
        0.0
    };
    Ok((b, stderr))
}

pub fn run_scaling(cfg: &RunConfig) -> Result<ScalingOutcome> {
    cfg.validate()?;
    let step = cfg.step_config();
    let mut jobs = Vec::new();
    for s in &cfg.scaling.states {
        for &g in &cfg.scaling.gamma_over_delta {
            for &l in &cfg.scaling.qubits {
                jobs.push((s.clone(), g, l));
            }
        }
    }
    let run = |(s, g, l): &(InitialState, f64, usize)| -> Result<ScalingRow> {
        let psi = s.vector(*l)?;
        let start = Instant::now();
        let raw = qft_core(&QftJob {
            qubits: *l,
            delta: cfg.delta,
            kind: cfg.noise.kind,
            gamma: g * cfg.delta,
            psi: &psi,
            cfg: &step,
            series: None,
        })?;
        Ok(ScalingRow {
            state: s.name(),
            gamma_over_delta: *g,
            qubits: *l,
            infidelity: 1.0 - raw.fidelity,
            max_m: raw.stats.max_rank,
            unreachable_steps: raw.stats.unreachable_steps,
            wall_time_s: cfg.clock(start),
        })
    };
    let rows: Vec<ScalingRow> = if cfg.deterministic {
        jobs.iter().map(run).collect::<Result<_>>()?
    } else {
        jobs.par_iter().map(run).collect::<Result<_>>()?
    };
    let mut fits = Vec::new();
    for s in &cfg.scaling.states {
        for &g in &cfg.scaling.gamma_over_delta {
            let pts: Vec<&ScalingRow> = rows.iter().filter(|r| r.state == s.name() && r.gamma_over_delta == g).collect();
            let x: Vec<f64> = pts.iter().map(|r| (r.qubits as f64).ln()).collect();
            let y: Vec<f64> = pts.iter().map(|r| r.infidelity.max(f64::MIN_POSITIVE).ln()).collect();
            let (slope, stderr) = fit_line(&x, &y)?;
            fits.push(SlopeFit {
                state: s.name(),
                gamma_over_delta: g,
                slope,
                stderr,
            });
        }
    }
    Ok(ScalingOutcome { rows, fits })
}

/// Sweep results for one noise channel.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepSeries {
    pub noise: NoiseKind,
    pub records: Vec<SweepRecord>,
    /// Basis states with no spin up; their barycenter is undefined and they
    /// are left out of the fit.
    pub all_down: Vec<(usize, f64)>,
    pub fit: BilinearFit,
    /// `∂(1 − F)/∂n_S` of the fitted surface at the mean barycenter.
    pub n_s_sensitivity: f64,
    pub max_m: usize,
    pub unreachable_steps: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepOutcome {
    #[serde(rename = "L")]
    pub qubits: usize,
    pub gamma_over_delta: f64,
    #[serde(rename = "gamma_T")]
    pub gamma_t: f64,
    pub epsilon: f64,
    pub rng: String,
    pub seed: u64,
    pub series: Vec<SweepSeries>,
    pub wall_time_s: Option<f64>,
}

pub fn run_sweep(cfg: &RunConfig) -> Result<SweepOutcome> {
    cfg.validate()?;
    let l = cfg.qubits;
    let n = 1usize << l;
    let gamma = cfg.noise.gamma(l, cfg.delta)?;
    let t_qft = qft_schedule(l, cfg.delta)?.total_duration();
    let indices = cfg.initial_state.sample_indices(l)?;
    let seed = match cfg.initial_state {
        InitialState::RandomBasis { seed, .. } => seed,
        _ => unreachable!(),
    };
    let step = cfg.step_config();
    let start = Instant::now();
    let mut series = Vec::new();
    for &kind in &cfg.sweep.noises {
        let run = |&i: &usize| -> Result<(usize, f64, f64, Option<f64>, EvolveStats)> {
            let psi = basis_state(n, i)?;
            let spins = spin_statistics(&CornerBasis::from_pure_state(&psi)?, l)?;
            let raw = qft_core(&QftJob {
                qubits: l,
                delta: cfg.delta,
                kind,
                gamma,
                psi: &psi,
                cfg: &step,
                series: None,
            })?;
            Ok((i, 1.0 - raw.fidelity, spins.n_s, spins.barycenter, raw.stats))
        };
        let results: Vec<_> = if cfg.deterministic {
            indices.iter().map(run).collect::<Result<_>>()?
        } else {
            indices.par_iter().map(run).collect::<Result<_>>()?
        };
        let mut records = Vec::new();
        let mut all_down = Vec::new();
        let mut max_m = 0;
        let mut unreachable = 0;
        for (i, inf, n_s, b, stats) in results {
            max_m = max_m.max(stats.max_rank);
            unreachable += stats.unreachable_steps;
            match b {
                Some(barycenter) => records.push(SweepRecord {
                    index: i,
                    n_s,
                    barycenter,
                    infidelity: inf,
                }),
                None => all_down.push((i, inf)),
            }
        }
        let fit = bilinear_fit(&records)?;
        let mean_b = records.iter().map(|r| r.barycenter).sum::<f64>() / records.len() as f64;
        let n_s_sensitivity = fit.linear[0] * mean_b + fit.linear[1];
        series.push(SweepSeries {
            noise: kind,
            records,
            all_down,
            fit,
            n_s_sensitivity,
            max_m,
            unreachable_steps: unreachable,
        });
    }
    Ok(SweepOutcome {
        qubits: l,
        gamma_over_delta: gamma / cfg.delta,
        gamma_t: gamma * t_qft,
        epsilon: step.eps,
        rng: RNG_NAME.into(),
        seed,
        series,
        wall_time_s: cfg.clock(start),
    })
}

/// Wall times of both engines on one QFT and their mutual fidelity.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkRow {
    #[serde(rename = "L")]
    pub qubits: usize,
    pub epsilon: f64,
    pub t_corner_s: f64,
    pub t_exact_s: f64,
    pub fidelity_cross: f64,
    #[serde(rename = "max_M")]
    pub max_m: usize,
}

impl BenchmarkRow {
    pub fn speedup(&self) -> f64 {
        self.t_exact_s / self.t_corner_s
    }
}

/// Runs the corner and dense engines on the same noisy QFT of `ψ_0`.
pub fn benchmark_pair(
    qubits: usize,
    delta: f64,
    noise: &NoiseSpec,
    step: &StepConfig,
    dense: &DenseConfig,
) -> Result<BenchmarkRow> {
    let schedule = qft_schedule(qubits, delta)?;
    let gamma = noise.gamma(qubits, delta)?;
    let model = noise.kind.build(qubits, gamma)?;
    let psi = inverse_qft_ghz_state(qubits)?;
    let start = Instant::now();
    let (corner, stats) = evolve_schedule(CornerBasis::from_pure_state(&psi)?, &schedule, &model, step, usize::MAX, |_| Ok(()))?;
    let t_corner = start.elapsed().as_secs_f64();
    let start = Instant::now();
    let (exact, _) = integrate_exact(&DenseState::from_pure(&psi)?, &schedule, &model, dense)?;
    let t_exact = start.elapsed().as_secs_f64();
    let trace = corner.trace();
    let f = crate::dense::fidelity_corner_dense(&corner, &exact.rho)? / trace.sqrt();
    Ok(BenchmarkRow {
        qubits,
        epsilon: step.eps,
        t_corner_s: t_corner,
        t_exact_s: t_exact,
        fidelity_cross: f,
        max_m: stats.max_rank,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkOutcome {
    pub rows: Vec<BenchmarkRow>,
}

/// Benchmarks run one after another so their timings do not interfere.
pub fn run_benchmark(cfg: &RunConfig) -> Result<BenchmarkOutcome> {
    cfg.validate()?;
    let mut rows = Vec::new();
    for &eps in &cfg.benchmark.epsilons {
        for &l in &cfg.benchmark.qubits {
            let step = StepConfig {
                eps,
                ..cfg.step_config()
            };
            rows.push(benchmark_pair(l, cfg.delta, &cfg.noise, &step, &cfg.dense)?);
        }
    }
    Ok(BenchmarkOutcome { rows })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TomographyOutcome {
    pub noise: NoiseKind,
    pub gamma_over_delta: f64,
    pub gamma_tau: f64,
    pub chi: ChiMatrix,
    /// Largest entry outside `{I,Z}⊗{I,Z}`, over `γτ`.
    pub off_z_support: f64,
    pub single_qubit_max: f64,
    pub two_qubit_max: f64,
}

pub fn run_tomography(cfg: &RunConfig) -> Result<TomographyOutcome> {
    cfg.validate()?;
    let space = HilbertSpec::qubits(2)?;
    let gamma = cfg.noise.gamma(2, cfg.delta)?;
    let seg = controlled_phase_segment(&space, 0, 1, cfg.tomography.theta, cfg.delta, 0)?;
    let tau = seg.duration;
    let gate = GateSchedule::new(space, vec![seg])?;
    let noise = cfg.noise.kind.build(2, gamma)?;
    let choi = channel_from_evolution(&gate, &noise, &cfg.dense)?;
    let gamma_tau = gamma * tau;
    let chi = error_chi(&choi, &gate, gamma_tau)?;
    let scale = if gamma_tau > 0.0 { gamma_tau } else { 1.0 };
    Ok(TomographyOutcome {
        noise: cfg.noise.kind,
        gamma_over_delta: gamma / cfg.delta,
        gamma_tau,
        off_z_support: chi.max_off_z_support() / scale,
        single_qubit_max: chi.max_by_weight(1) / scale,
        two_qubit_max: chi.max_by_weight(2) / scale,
        chi,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct KerrOutcome {
    pub params: KerrParams,
    pub t_final: f64,
    pub run: KerrRun,
    pub cutoff_ok: bool,
    pub wall_time_s: Option<f64>,
    #[serde(skip)]
    pub grid: Vec<C64>,
    #[serde(skip)]
    pub wigner: Vec<(f64, Vec<f64>)>,
}

pub fn run_kerrcat(cfg: &RunConfig) -> Result<KerrOutcome> {
    cfg.validate()?;
    let k = &cfg.kerr;
    // The stiff first-order jump step leaks O(dt²) trace each step; carrying
    // that deficit over thousands of steps would swamp the weights.
    let step = StepConfig {
        dt: k.dt,
        trace_policy: TracePolicy::Renormalize,
        ..cfg.step_config()
    };
    let rate = if k.params.gamma > 0.0 { k.params.gamma } else { k.params.kappa };
    let t_final = if rate > 0.0 { k.t_final / rate } else { k.t_final };
    let start = Instant::now();
    let run = run_kerr_cat(&k.params, t_final, &step)?;
    let wall = cfg.clock(start);
    let grid = square_grid(k.grid_half_width, k.grid_points);
    let mut fields = Vec::new();
    if let Some(state) = &run.state {
        for j in 0..state.rank().min(k.wigner_columns) {
            fields.push((state.weights()[j], wigner(&state.eigenvector(j), &grid)?));
        }
    }
    Ok(KerrOutcome {
        params: k.params.clone(),
        t_final,
        cutoff_ok: run.cutoff_ok(k.params.n_ph),
        run,
        wall_time_s: wall,
        grid,
        wigner: fields,
    })
}

/// Result of any experiment.
#[derive(Clone, Debug)]
pub enum Outcome {
    Qft(Box<QftOutcome>),
    Scaling(ScalingOutcome),
    Sweep(SweepOutcome),
    Benchmark(BenchmarkOutcome),
    Tomography(Box<TomographyOutcome>),
    Kerrcat(Box<KerrOutcome>),
}

pub fn run(cfg: &RunConfig) -> Result<Outcome> {
    Ok(match cfg.experiment {
        Experiment::Qft => Outcome::Qft(Box::new(run_qft(cfg)?)),
        Experiment::Scaling => Outcome::Scaling(run_scaling(cfg)?),
        Experiment::Sweep => Outcome::Sweep(run_sweep(cfg)?),
        Experiment::Benchmark => Outcome::Benchmark(run_benchmark(cfg)?),
        Experiment::Tomography => Outcome::Tomography(Box::new(run_tomography(cfg)?)),
        Experiment::Kerrcat => Outcome::Kerrcat(Box::new(run_kerrcat(cfg)?)),
    })
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(dir.join(name))?))
}

fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<()> {
    let mut f = create(dir, name)?;
    serde_json::to_writer_pretty(&mut f, value)?;
    writeln!(f)?;
    f.flush()?;
    Ok(())
}

impl Outcome {
    /// Steps in which `m_max` kept the truncation above `eps`.
    pub fn unreachable_steps(&self) -> usize {
        match self {
            Outcome::Qft(o) => o.record.unreachable_steps,
            Outcome::Scaling(o) => o.rows.iter().map(|r| r.unreachable_steps).sum(),
            Outcome::Sweep(o) => o.series.iter().map(|s| s.unreachable_steps).sum(),
            Outcome::Kerrcat(o) => o.run.stats.unreachable_steps,
            Outcome::Benchmark(_) | Outcome::Tomography(_) => 0,
        }
    }

    /// One-line human summary.
    pub fn summary(&self) -> String {
        match self {
            Outcome::Qft(o) => format!(
                "qft L={} F={:.6} max_M={} steps={}",
                o.record.qubits, o.record.fidelity_to_ideal, o.record.max_m, o.record.steps
            ),
            Outcome::Scaling(o) => o
                .fits
                .iter()
                .map(|f| format!("{} γ/δ={:e}: slope {:.3} ± {:.3}", f.state, f.gamma_over_delta, f.slope, f.stderr))
                .collect::<Vec<_>>()
                .join("\n"),
            Outcome::Sweep(o) => o
                .series
                .iter()
                .map(|s| format!("{}: a={:.3e} dI/dn_S={:.3e} rms={:.2e}", s.noise.name(), s.fit.a, s.n_s_sensitivity, s.fit.residual))
                .collect::<Vec<_>>()
                .join("\n"),
            Outcome::Benchmark(o) => o
                .rows
                .iter()
                .map(|r| {
                    format!(
                        "L={} eps={:e} corner {:.3}s exact {:.3}s speedup {:.1} F={:.6}",
                        r.qubits,
                        r.epsilon,
                        r.t_corner_s,
                        r.t_exact_s,
                        r.speedup(),
                        r.fidelity_cross
                    )
                })
                .collect::<Vec<_>>()
                .join("\n"),
            Outcome::Tomography(o) => format!(
                "{}: off-Z {:.3e}, single {:.3e}, two-qubit {:.3e} (units of γτ)",
                o.noise.name(),
                o.off_z_support,
                o.single_qubit_max,
                o.two_qubit_max
            ),
            Outcome::Kerrcat(o) => format!(
                "kerrcat M={} p={:?} parity={:?}",
                o.run.weights.len(),
                &o.run.weights[..o.run.weights.len().min(4)],
                &o.run.parities[..o.run.parities.len().min(4)]
            ),
        }
    }

    /// Writes CSV and JSON files into `dir`, creating it if needed.
    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        match self {
            Outcome::Qft(o) => {
                write_json(dir, "qft.json", &o.record)?;
                let mut f = create(dir, "qft_series.csv")?;
                o.write_series_csv(&mut f)?;
                f.flush()?;
            }
            Outcome::Scaling(o) => {
                write_json(dir, "scaling.json", o)?;
                let mut w = csv::Writer::from_path(dir.join("scaling.csv"))?;
                for r in &o.rows {
                    w.serialize(r)?;
                }
                w.flush()?;
            }
            Outcome::Sweep(o) => {
                write_json(dir, "sweep.json", o)?;
                for s in &o.series {
                    let mut f = create(dir, &format!("sweep_{}.csv", s.noise.name()))?;
                    writeln!(f, "index,n_S,B,infidelity")?;
                    for r in &s.records {
                        writeln!(f, "{},{},{:.10},{:.10e}", r.index, r.n_s, r.barycenter, r.infidelity)?;
                    }
                    for (i, inf) in &s.all_down {
                        writeln!(f, "{i},0,,{inf:.10e}")?;
                    }
                    f.flush()?;
                }
            }
            Outcome::Benchmark(o) => {
                write_json(dir, "benchmark.json", o)?;
                let mut f = create(dir, "benchmark.csv")?;
                writeln!(f, "L,epsilon,t_corner_s,t_exact_s,fidelity_cross")?;
                for r in &o.rows {
                    writeln!(f, "{},{:e},{:.6},{:.6},{:.10}", r.qubits, r.epsilon, r.t_corner_s, r.t_exact_s, r.fidelity_cross)?;
                }
                f.flush()?;
            }
            Outcome::Tomography(o) => {
                write_json(dir, "tomography.json", o)?;
                let mut f = create(dir, &format!("chi_{}.csv", o.noise.name()))?;
                o.chi.write_csv(&mut f)?;
                f.flush()?;
            }
            Outcome::Kerrcat(o) => {
                write_json(dir, "kerrcat.json", o)?;
                let mut f = create(dir, "wigner.csv")?;
                write_wigner_csv(&mut f, &o.grid, &o.wigner)?;
                f.flush()?;
            }
        }
        Ok(())
    }
}
