//! Time-dependent corner-space propagation.
//!
//! One step maps `ρ = C C†` through the Kraus set
//! `{e^{−iH̃dt}, √dt J_1, …, √dt J_D}`: the coherent block is integrated
//! exactly over `dt`, the jump blocks act on the pre-step corner. The
//! resulting transition basis `T` (width `M(D+1)`) satisfies `ρ' = T T†`, and
//! the leading eigenpairs of `ρ'` come from the small Gram matrix `T†T`.

use crate::circuit::GateSchedule;
use crate::error::{invalid, Error, Result};
use crate::linalg::eigh_desc;
use crate::noise::NoiseModel;
use crate::ode::{propagate, Integrator, OdeStats, Scaled};
use crate::ops::{build_effective_hamiltonian, CompiledOperator, OperatorSpec, IM, ZERO};
use ndarray::linalg::general_mat_mul;
use ndarray::{s, Array2, ArrayView2, ArrayViewMut2, ShapeBuilder};
use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// How the coherent flow and the jump terms are interleaved within a step.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Splitting {
    /// `T = [K₀C, √dt J_i C]`: jumps act on the corner at the start of the step.
    FirstOrder,
    /// Half a coherent step, then `T = [C, √dt J_i C]` and truncation, then
    /// the other half. Second order in `dt` at the same Gram cost.
    #[default]
    Strang,
}

/// What to do with the trace after truncation.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TracePolicy {
    /// Rescale the kept weights to sum to one.
    #[default]
    Renormalize,
    /// Keep the weights as they are; the deficit accumulates.
    CarryDeficit,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StepConfig {
    pub dt: f64,
    pub ode_tol: f64,
    /// Largest discarded fraction of the trace per truncation.
    pub eps: f64,
    pub m_max: Option<usize>,
    pub p_floor: f64,
    pub integrator: Integrator,
    /// Internal integrator substeps allowed per column per step.
    pub substep_budget: usize,
    pub trace_policy: TracePolicy,
    pub splitting: Splitting,
    /// Evolve columns on the rayon pool. Results do not depend on it.
    pub parallel: bool,
}

impl Default for StepConfig {
    fn default() -> Self {
        Self {
            dt: 0.05,
            ode_tol: 1e-10,
            eps: 1e-4,
            m_max: None,
            p_floor: 1e-14,
            integrator: Integrator::default(),
            substep_budget: 10_000,
            trace_policy: TracePolicy::Renormalize,
            splitting: Splitting::Strang,
            parallel: false,
        }
    }
}

impl StepConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(invalid(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.eps > 0.0 && self.eps < 1.0) {
            return Err(invalid(format!("eps must lie in (0, 1), got {}", self.eps)));
        }
        if !(self.p_floor >= 0.0) {
            return Err(invalid("p_floor must be non-negative"));
        }
        if !(self.ode_tol > 0.0) {
            return Err(invalid("ode_tol must be positive"));
        }
        if self.m_max == Some(0) {
            return Err(invalid("m_max must be at least 1"));
        }
        Ok(())
    }
}

/// Weighted corner factor: column `k` of `c` is `√p_k |φ_k⟩`.
#[derive(Clone, Debug, PartialEq)]
pub struct CornerBasis {
    c: Array2<C64>,
    p: Vec<f64>,
    pub t: f64,
    /// Discarded fraction of the last truncation.
    pub eps_step: f64,
    /// Configured per-step tolerance.
    pub eps_budget: f64,
    /// `|Tr ρ' − Tr ρ|` of the last Kraus map, before truncation.
    pub trace_drift: f64,
    /// Set when the last truncation hit `m_max` before reaching `eps`.
    pub eps_unreachable: bool,
}

impl CornerBasis {
    pub fn from_pure_state(psi: &[C64]) -> Result<Self> {
        let norm = psi.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(Error::ZeroVector);
        }
        if !norm.is_finite() {
            return Err(Error::NonFinite("initial state"));
        }
        let mut c = Array2::zeros((psi.len(), 1).f());
        for (dst, z) in c.column_mut(0).iter_mut().zip(psi) {
            *dst = z / norm;
        }
        Ok(Self::from_parts(c, vec![1.0]))
    }

    /// Mixture `Σ p_k |ψ_k⟩⟨ψ_k|` of orthonormal states given as columns.
    /// Weights are used as given.
    pub fn from_eigenpairs(vectors: &ArrayView2<C64>, p: &[f64]) -> Result<Self> {
        if vectors.ncols() != p.len() || p.is_empty() {
            return Err(Error::DimensionMismatch {
                expected: vectors.ncols(),
                found: p.len(),
            });
        }
        if p.iter().any(|&x| !(x >= 0.0)) {
            return Err(invalid("weights must be non-negative"));
        }
        let mut c = Array2::zeros(vectors.raw_dim().f());
        for (k, mut col) in c.columns_mut().into_iter().enumerate() {
            let s = p[k].sqrt();
            col.zip_mut_with(&vectors.column(k), |d, v| *d = v * s);
        }
        Ok(Self::from_parts(c, p.to_vec()))
    }

    fn from_parts(c: Array2<C64>, p: Vec<f64>) -> Self {
        Self {
            c,
            p,
            t: 0.0,
            eps_step: 0.0,
            eps_budget: 0.0,
            trace_drift: 0.0,
            eps_unreachable: false,
        }
    }

    /// Hilbert-space dimension `N`.
    pub fn dim(&self) -> usize {
        self.c.nrows()
    }

    /// Corner dimension `M`.
    pub fn rank(&self) -> usize {
        self.c.ncols()
    }

    pub fn weights(&self) -> &[f64] {
        &self.p
    }

    pub fn trace(&self) -> f64 {
        self.p.iter().sum()
    }

    /// The weighted factor `C` (column-major).
    pub fn factor(&self) -> ArrayView2<'_, C64> {
        self.c.view()
    }

    /// Column `k` as a contiguous slice.
    pub fn column(&self, k: usize) -> &[C64] {
        let n = self.dim();
        &self.c.as_slice_memory_order().expect("column-major factor")[k * n..(k + 1) * n]
    }

    /// Normalized eigenvector `|φ_k⟩`.
    pub fn eigenvector(&self, k: usize) -> Vec<C64> {
        let s = self.p[k].sqrt();
        self.column(k).iter().map(|z| if s > 0.0 { z / s } else { ZERO }).collect()
    }

    /// `ρ = C C†` as a dense matrix. Small systems only.
    pub fn density(&self) -> Array2<C64> {
        self.c.dot(&crate::linalg::adjoint(&self.c.view()))
    }
}

/// Propagates each column of `c` under `dc/dt = −i H̃ c` for time `dt`.
pub fn coherent_substep(c: &Array2<C64>, h_eff: &OperatorSpec, dt: f64, tol: f64) -> Result<Array2<C64>> {
    let op = h_eff.compile();
    if op.dim() != c.nrows() {
        return Err(Error::DimensionMismatch {
            expected: op.dim(),
            found: c.nrows(),
        });
    }
    let mut out = Array2::zeros(c.raw_dim().f());
    out.assign(c);
    let n = c.nrows();
    let cfg = StepConfig {
        ode_tol: tol,
        ..StepConfig::default()
    };
    evolve_columns(&op, out.as_slice_memory_order_mut().expect("column-major"), n, dt, &cfg)?;
    Ok(out)
}

fn evolve_columns(op: &CompiledOperator, buf: &mut [C64], n: usize, dt: f64, cfg: &StepConfig) -> Result<OdeStats> {
    if op.is_zero() || dt == 0.0 {
        return Ok(OdeStats::default());
    }
    let gen = Scaled { op, scale: -IM };
    let run = |col: &mut [C64]| propagate(&gen, col, dt, cfg.integrator, cfg.ode_tol, cfg.substep_budget);
    let results: Vec<Result<OdeStats>> = if cfg.parallel {
        buf.par_chunks_mut(n).map(run).collect()
    } else {
        buf.chunks_mut(n).map(run).collect()
    };
    let mut total = OdeStats::default();
    for r in results {
        total += r?;
    }
    Ok(total)
}

/// Assembles the transition basis `[K₀C, √dt J₁C_pre, …, √dt J_D C_pre]`.
/// Column `m` (0-based) holds Kraus operator `m / M` applied to corner column
/// `m mod M`.
pub fn expand_transition_basis(
    coherent: &ArrayView2<C64>,
    pre: &ArrayView2<C64>,
    noise: &NoiseModel,
    dt: f64,
) -> Result<Array2<C64>> {
    if coherent.dim() != pre.dim() {
        return Err(Error::DimensionMismatch {
            expected: coherent.ncols(),
            found: pre.ncols(),
        });
    }
    noise.space().check_len(pre.nrows())?;
    let (n, m) = pre.dim();
    let d = noise.channels();
    let mut t = Array2::zeros((n, m * (d + 1)).f());
    t.slice_mut(s![.., ..m]).assign(coherent);
    let jumps: Vec<CompiledOperator> = noise.jumps().iter().map(|j| j.compile()).collect();
    fill_jump_blocks(&jumps, pre, dt, t.view_mut(), false);
    Ok(t)
}

fn fill_jump_blocks(jumps: &[CompiledOperator], pre: &ArrayView2<C64>, dt: f64, mut t: ArrayViewMut2<C64>, skip_zero: bool) -> usize {
    let (n, m) = pre.dim();
    let a = C64::from(dt.sqrt());
    let mut x = vec![ZERO; n];
    let mut y = vec![ZERO; n];
    let mut block = 1;
    for j in jumps {
        if skip_zero && j.is_zero() {
            continue;
        }
        for mu in 0..m {
            x.iter_mut().zip(pre.column(mu)).for_each(|(d, s)| *d = *s);
            y.fill(ZERO);
            j.apply_add(a, &x, &mut y);
            t.column_mut(block * m + mu).assign(&ndarray::ArrayView1::from(&y));
        }
        block += 1;
    }
    block * m
}

/// Result of one truncation.
#[derive(Clone, Debug)]
pub struct Truncation {
    pub basis: CornerBasis,
    /// `Tr(T T†)` before truncation.
    pub trace_before: f64,
    /// Discarded fraction of `trace_before`.
    pub discarded: f64,
}

/// Diagonalizes `T T†` through its Gram matrix and keeps the smallest leading
/// set of eigenpairs whose discarded weight is at most `eps` (capped at
/// `m_max`).
pub fn gram_truncate(t: &ArrayView2<C64>, cfg: &StepConfig) -> Result<Truncation> {
    let (n, w) = t.dim();
    if w == 0 {
        return Err(invalid("transition basis has no columns"));
    }
    if t.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::NonFinite("transition basis"));
    }
    let tf = if t.is_standard_layout() || t.t().is_standard_layout() {
        None
    } else {
        Some(crate::linalg::to_fortran(t))
    };
    let t = tf.as_ref().map(|a| a.view()).unwrap_or(*t);
    let wide = w > n;
    let gram = if wide {
        t.dot(&t.t().mapv(|z| z.conj()))
    } else {
        t.t().mapv(|z| z.conj()).dot(&t)
    };
    let (mut lam, vecs) = eigh_desc(&gram.view())?;
    for l in lam.iter_mut() {
        if *l < cfg.p_floor.max(0.0) {
            *l = 0.0;
        }
    }
    let total: f64 = lam.iter().sum();
    if !(total > 0.0) {
        return Err(Error::NonPhysical("transition basis has zero trace".into()));
    }
    let positive = lam.iter().take_while(|&&l| l > 0.0).count().max(1);
    let mut keep = positive;
    let mut cum = 0.0;
    for (k, &l) in lam.iter().enumerate().take(positive) {
        cum += l;
        if (total - cum) / total <= cfg.eps {
            keep = k + 1;
            break;
        }
    }
    let mut unreachable = false;
    if let Some(cap) = cfg.m_max {
        if keep > cap {
            keep = cap;
            unreachable = true;
        }
    }
    let kept: f64 = lam[..keep].iter().sum();
    let discarded = ((total - kept) / total).max(0.0);
    let mut c = Array2::<C64>::zeros((n, keep).f());
    if wide {
        for (k, mut col) in c.columns_mut().into_iter().enumerate() {
            let s = lam[k].sqrt();
            col.zip_mut_with(&vecs.column(k), |d, v| *d = v * s);
        }
    } else {
        general_mat_mul(C64::from(1.0), &t, &vecs.slice(s![.., ..keep]), ZERO, &mut c);
    }
    let mut p = lam[..keep].to_vec();
    if cfg.trace_policy == TracePolicy::Renormalize {
        let s = 1.0 / kept;
        p.iter_mut().for_each(|x| *x *= s);
        c.mapv_inplace(|z| z * s.sqrt());
    }
    let mut basis = CornerBasis::from_parts(c, p);
    basis.eps_step = discarded;
    basis.eps_budget = cfg.eps;
    basis.eps_unreachable = unreachable;
    Ok(Truncation {
        basis,
        trace_before: total,
        discarded,
    })
}

/// Running totals over an evolution.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EvolveStats {
    pub steps: usize,
    pub max_rank: usize,
    pub ode: OdeStats,
    /// Sum of per-step discarded fractions.
    pub discarded_total: f64,
    pub drift_total: f64,
    pub drift_max: f64,
    /// Steps in which `m_max` prevented reaching `eps`.
    pub unreachable_steps: usize,
}

/// Stepper holding compiled operators and scratch space.
pub struct CornerEngine {
    noise: NoiseModel,
    jumps: Vec<CompiledOperator>,
    h_eff: Option<CompiledOperator>,
    cfg: StepConfig,
    buf: Vec<C64>,
    pub stats: EvolveStats,
}

impl CornerEngine {
    pub fn new(noise: &NoiseModel, cfg: &StepConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            noise: noise.clone(),
            jumps: noise.jumps().iter().map(|j| j.compile()).collect(),
            h_eff: None,
            cfg: cfg.clone(),
            buf: Vec::new(),
            stats: EvolveStats::default(),
        })
    }

    pub fn config(&self) -> &StepConfig {
        &self.cfg
    }

    /// Switches the Hamiltonian; takes effect from the next step.
    pub fn set_hamiltonian(&mut self, h: &OperatorSpec) -> Result<()> {
        if h.space() != self.noise.space() {
            return Err(Error::MixedSpaces);
        }
        self.h_eff = Some(build_effective_hamiltonian(h, &self.noise)?.compile());
        Ok(())
    }

    /// One Kraus step of length `dt` followed by truncation.
    pub fn step(&mut self, state: &CornerBasis, dt: f64) -> Result<CornerBasis> {
        let h = self
            .h_eff
            .as_ref()
            .ok_or_else(|| invalid("no Hamiltonian set on the engine"))?;
        let (n, m) = state.factor().dim();
        if n != h.dim() {
            return Err(Error::DimensionMismatch {
                expected: h.dim(),
                found: n,
            });
        }
        let strang = self.cfg.splitting == Splitting::Strang;
        let mut ode = OdeStats::default();
        let half;
        let pre = if strang {
            let mut c = crate::linalg::to_fortran(&state.factor());
            ode += evolve_columns(h, c.as_slice_memory_order_mut().expect("column-major"), n, dt / 2.0, &self.cfg)?;
            half = c;
            half.view()
        } else {
            state.factor()
        };
        let active = self.jumps.iter().filter(|j| !j.is_zero()).count();
        let width = m * (active + 1);
        if self.buf.len() < n * width {
            let want = (n * width).max(2 * self.buf.len());
            self.buf.resize(want, ZERO);
        }
        let buf = &mut self.buf[..n * width];
        buf[..n * m].copy_from_slice(pre.as_slice_memory_order().expect("column-major"));
        if !strang {
            ode += evolve_columns(h, &mut buf[..n * m], n, dt, &self.cfg)?;
        }
        let mut tview = ArrayViewMut2::from_shape((n, width).f(), buf).expect("buffer shape");
        fill_jump_blocks(&self.jumps, &pre, dt, tview.view_mut(), true);
        let trunc = gram_truncate(&tview.view(), &self.cfg)?;
        let mut next = trunc.basis;
        let mut growth = trunc.trace_before / state.trace();
        if strang {
            let kept = next.trace();
            let mut c = next.c;
            ode += evolve_columns(h, c.as_slice_memory_order_mut().expect("column-major"), n, dt / 2.0, &self.cfg)?;
            let exact = StepConfig {
                eps: 0.0,
                m_max: None,
                ..self.cfg.clone()
            };
            let re = gram_truncate(&c.view(), &exact)?;
            growth *= re.trace_before / kept;
            let (eps_step, unreachable) = (next.eps_step, next.eps_unreachable);
            next = re.basis;
            next.eps_step = eps_step;
            next.eps_budget = self.cfg.eps;
            next.eps_unreachable = unreachable;
        }
        next.t = state.t + dt;
        next.trace_drift = (growth - 1.0).abs();
        let s = &mut self.stats;
        s.steps += 1;
        s.ode += ode;
        s.max_rank = s.max_rank.max(next.rank()).max(m);
        s.discarded_total += trunc.discarded;
        s.drift_total += next.trace_drift;
        s.drift_max = s.drift_max.max(next.trace_drift);
        s.unreachable_steps += usize::from(next.eps_unreachable);
        Ok(next)
    }
}

/// Single step with a freshly compiled engine.
pub fn step(state: &CornerBasis, h: &OperatorSpec, noise: &NoiseModel, cfg: &StepConfig) -> Result<CornerBasis> {
    let mut engine = CornerEngine::new(noise, cfg)?;
    engine.set_hamiltonian(h)?;
    engine.step(state, cfg.dt)
}

/// Snapshot passed to observers.
pub struct Observation<'a> {
    pub state: &'a CornerBasis,
    pub segment: usize,
    pub label: &'a str,
    /// True on the last step of a segment.
    pub segment_end: bool,
}

/// Steps through every segment with sudden switching, calling `observer` at
/// `t = 0`, every `stride` steps and at the end of each segment.
pub fn evolve_schedule(
    state: CornerBasis,
    schedule: &GateSchedule,
    noise: &NoiseModel,
    cfg: &StepConfig,
    stride: usize,
    mut observer: impl FnMut(&Observation) -> Result<()>,
) -> Result<(CornerBasis, EvolveStats)> {
    if schedule.space() != noise.space() {
        return Err(Error::MixedSpaces);
    }
    let mut engine = CornerEngine::new(noise, cfg)?;
    let mut state = state;
    state.eps_budget = cfg.eps;
    let stride = stride.max(1);
    observer(&Observation {
        state: &state,
        segment: 0,
        label: "start",
        segment_end: false,
    })?;
    let mut count = 0usize;
    for (idx, seg) in schedule.segments().iter().enumerate() {
        engine.set_hamiltonian(&seg.hamiltonian)?;
        let steps = segment_steps(seg.duration, cfg.dt);
        let mut t_seg = 0.0;
        for k in 0..steps {
            let dt = if k + 1 == steps { seg.duration - t_seg } else { cfg.dt };
            state = engine.step(&state, dt)?;
            t_seg += dt;
            count += 1;
            let end = k + 1 == steps;
            if end || count.is_multiple_of(stride) {
                observer(&Observation {
                    state: &state,
                    segment: idx,
                    label: &seg.label,
                    segment_end: end,
                })?;
            }
        }
    }
    Ok((state, engine.stats))
}

/// Number of steps for a segment: full `dt` steps, the last one shortened.
/// Remainders below `1e-9 dt` are absorbed into the previous step.
pub fn segment_steps(duration: f64, dt: f64) -> usize {
    if duration <= 0.0 {
        return 0;
    }
    let q = duration / dt;
    let whole = q.floor();
    let steps = if q - whole > 1e-9 { whole + 1.0 } else { whole.max(1.0) };
    steps as usize
}
