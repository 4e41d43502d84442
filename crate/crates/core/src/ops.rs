//! Structured operator algebra.
//!
//! Operators are sums of products of small dense local matrices
//! ([`OperatorSpec`]). They are never expanded into `N×N` matrices on the hot
//! path: [`OperatorSpec::compile`] turns every term into a strided kernel that
//! walks only the basis indices the term touches, and folds all diagonal terms
//! into a single vector.
//!
//! Basis convention: site 0 is the most significant digit of the basis index.
//! For qubits, local state `0` is the excited state `|↑⟩` and `1` is `|↓⟩`.

use crate::error::{invalid, Error, Result};
use crate::noise::NoiseModel;
use ndarray::{Array2, ShapeBuilder};
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);
pub const IM: C64 = C64::new(0.0, 1.0);

/// Largest dimension for which diagonal terms are folded into a dense vector.
const DIAG_MERGE_MAX: usize = 1 << 22;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HilbertKind {
    Qubits,
    Boson,
    Composite,
}

/// Tensor-product Hilbert space described by its local dimensions.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct HilbertSpec {
    kind: HilbertKind,
    dims: Vec<usize>,
}

impl HilbertSpec {
    /// Register of `count` qubits, `N = 2^count`.
    pub fn qubits(count: usize) -> Result<Self> {
        if count == 0 || count > 40 {
            return Err(invalid(format!("qubit count must be in 1..=40, got {count}")));
        }
        Ok(Self {
            kind: HilbertKind::Qubits,
            dims: vec![2; count],
        })
    }

    /// Single bosonic mode truncated at `cutoff` photons, `N = cutoff + 1`.
    pub fn boson(cutoff: usize) -> Result<Self> {
        if cutoff == 0 {
            return Err(invalid("photon cutoff must be at least 1"));
        }
        Ok(Self {
            kind: HilbertKind::Boson,
            dims: vec![cutoff + 1],
        })
    }

    pub fn composite(dims: Vec<usize>) -> Result<Self> {
        if dims.is_empty() || dims.iter().any(|&d| d < 2) {
            return Err(invalid("composite space needs at least one site, each of dimension >= 2"));
        }
        Ok(Self {
            kind: HilbertKind::Composite,
            dims,
        })
    }

    /// The space `H ⊗ H` on which vectorized density matrices live. Row index
    /// sites come first, so `vec(ρ)[a·N + b] = ρ[a, b]`.
    pub fn doubled(&self) -> Self {
        let mut dims = self.dims.clone();
        dims.extend_from_slice(&self.dims);
        Self {
            kind: HilbertKind::Composite,
            dims,
        }
    }

    pub fn kind(&self) -> HilbertKind {
        self.kind
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn sites(&self) -> usize {
        self.dims.len()
    }

    pub fn dim(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn site_dim(&self, site: usize) -> usize {
        self.dims[site]
    }

    /// Index stride of `site`: the product of all dimensions after it.
    pub fn stride(&self, site: usize) -> usize {
        self.dims[site + 1..].iter().product()
    }

    /// Number of qubits when this is a qubit register.
    pub fn qubit_count(&self) -> Option<usize> {
        (self.kind == HilbertKind::Qubits).then_some(self.dims.len())
    }

    pub fn photon_cutoff(&self) -> Option<usize> {
        (self.kind == HilbertKind::Boson).then(|| self.dims[0] - 1)
    }

    pub(crate) fn check_len(&self, len: usize) -> Result<()> {
        let n = self.dim();
        if len != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: len,
            });
        }
        Ok(())
    }
}

/// Dense square matrix acting on one site.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(into = "LocalOpRepr", try_from = "LocalOpRepr")]
pub struct LocalOp {
    dim: usize,
    data: Vec<C64>,
}

#[derive(Serialize, Deserialize)]
struct LocalOpRepr {
    rows: Vec<Vec<[f64; 2]>>,
}

impl From<LocalOp> for LocalOpRepr {
    fn from(op: LocalOp) -> Self {
        let rows = op
            .data
            .chunks(op.dim)
            .map(|row| row.iter().map(|z| [z.re, z.im]).collect())
            .collect();
        Self { rows }
    }
}

impl TryFrom<LocalOpRepr> for LocalOp {
    type Error = Error;

    fn try_from(repr: LocalOpRepr) -> Result<Self> {
        let rows: Vec<Vec<C64>> = repr
            .rows
            .into_iter()
            .map(|r| r.into_iter().map(|[re, im]| C64::new(re, im)).collect())
            .collect();
        LocalOp::from_rows(rows)
    }
}

impl LocalOp {
    pub fn from_rows(rows: Vec<Vec<C64>>) -> Result<Self> {
        let dim = rows.len();
        if dim == 0 || rows.iter().any(|r| r.len() != dim) {
            return Err(invalid("local operator must be a non-empty square matrix"));
        }
        Ok(Self {
            dim,
            data: rows.into_iter().flatten().collect(),
        })
    }

    fn from_fn(dim: usize, f: impl Fn(usize, usize) -> C64) -> Self {
        let mut data = Vec::with_capacity(dim * dim);
        for r in 0..dim {
            for c in 0..dim {
                data.push(f(r, c));
            }
        }
        Self { dim, data }
    }

    pub fn identity(dim: usize) -> Self {
        Self::from_fn(dim, |r, c| if r == c { ONE } else { ZERO })
    }

    pub fn pauli_x() -> Self {
        Self::from_fn(2, |r, c| if r != c { ONE } else { ZERO })
    }

    pub fn pauli_y() -> Self {
        Self {
            dim: 2,
            data: vec![ZERO, -IM, IM, ZERO],
        }
    }

    /// `σᶻ = |↑⟩⟨↑| − |↓⟩⟨↓|`, i.e. `diag(1, −1)`.
    pub fn pauli_z() -> Self {
        Self {
            dim: 2,
            data: vec![ONE, ZERO, ZERO, -ONE],
        }
    }

    /// Lowering operator `σ⁻ = |↓⟩⟨↑|`, mapping local state 0 to 1.
    pub fn sigma_minus() -> Self {
        Self {
            dim: 2,
            data: vec![ZERO, ZERO, ONE, ZERO],
        }
    }

    pub fn sigma_plus() -> Self {
        Self::sigma_minus().adjoint()
    }

    /// `|↑⟩⟨↑|`
    pub fn proj_up() -> Self {
        Self {
            dim: 2,
            data: vec![ONE, ZERO, ZERO, ZERO],
        }
    }

    /// `|↓⟩⟨↓|`
    pub fn proj_down() -> Self {
        Self {
            dim: 2,
            data: vec![ZERO, ZERO, ZERO, ONE],
        }
    }

    /// Photon annihilation operator with `⟨n−1|a|n⟩ = √n`.
    pub fn annihilation(cutoff: usize) -> Self {
        Self::from_fn(cutoff + 1, |r, c| {
            if c == r + 1 {
                C64::from((c as f64).sqrt())
            } else {
                ZERO
            }
        })
    }

    pub fn creation(cutoff: usize) -> Self {
        Self::annihilation(cutoff).adjoint()
    }

    pub fn number(cutoff: usize) -> Self {
        Self::from_fn(cutoff + 1, |r, c| if r == c { C64::from(r as f64) } else { ZERO })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, row: usize, col: usize) -> C64 {
        self.data[row * self.dim + col]
    }

    pub fn matmul(&self, rhs: &LocalOp) -> Result<LocalOp> {
        if self.dim != rhs.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: rhs.dim,
            });
        }
        let d = self.dim;
        Ok(Self::from_fn(d, |r, c| {
            (0..d).map(|k| self.get(r, k) * rhs.get(k, c)).sum()
        }))
    }

    pub fn adjoint(&self) -> Self {
        Self::from_fn(self.dim, |r, c| self.get(c, r).conj())
    }

    /// Elementwise complex conjugate (no transpose).
    pub fn conj(&self) -> Self {
        Self {
            dim: self.dim,
            data: self.data.iter().map(|z| z.conj()).collect(),
        }
    }

    pub fn scaled(&self, s: C64) -> Self {
        Self {
            dim: self.dim,
            data: self.data.iter().map(|z| z * s).collect(),
        }
    }

    pub fn is_diagonal(&self) -> bool {
        (0..self.dim).all(|r| (0..self.dim).all(|c| r == c || self.get(r, c) == ZERO))
    }

    pub fn is_identity(&self) -> bool {
        (0..self.dim)
            .all(|r| (0..self.dim).all(|c| self.get(r, c) == if r == c { ONE } else { ZERO }))
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|z| *z == ZERO)
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    fn approx_eq(&self, other: &LocalOp, tol: f64) -> bool {
        self.dim == other.dim
            && self
                .data
                .iter()
                .zip(&other.data)
                .all(|(a, b)| (a - b).norm() <= tol)
    }

    fn nonzeros(&self) -> Vec<(usize, usize, C64)> {
        let mut out = Vec::new();
        for r in 0..self.dim {
            for c in 0..self.dim {
                let v = self.get(r, c);
                if v != ZERO {
                    out.push((r, c, v));
                }
            }
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Factor {
    pub site: usize,
    pub op: LocalOp,
}

/// `coeff · ⊗_f factor_f`, identity on all other sites.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Term {
    pub coeff: C64,
    pub factors: Vec<Factor>,
}

impl Term {
    pub fn new(coeff: C64, factors: Vec<(usize, LocalOp)>) -> Self {
        Self {
            coeff,
            factors: factors.into_iter().map(|(site, op)| Factor { site, op }).collect(),
        }
    }

    fn same_structure(&self, other: &Term) -> bool {
        self.factors.len() == other.factors.len()
            && self
                .factors
                .iter()
                .zip(&other.factors)
                .all(|(a, b)| a.site == b.site && a.op.approx_eq(&b.op, 1e-14))
    }
}

/// Sparse structured operator: a sum of local-factor terms on a fixed space.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OperatorSpec {
    space: HilbertSpec,
    terms: Vec<Term>,
    hermitian_hint: bool,
}

impl OperatorSpec {
    pub fn new(space: HilbertSpec, mut terms: Vec<Term>, hermitian_hint: bool) -> Result<Self> {
        for term in &mut terms {
            term.factors.sort_by_key(|f| f.site);
            for w in term.factors.windows(2) {
                if w[0].site == w[1].site {
                    return Err(Error::DuplicateSite(w[0].site));
                }
            }
            for f in &term.factors {
                if f.site >= space.sites() {
                    return Err(Error::SiteOutOfRange {
                        site: f.site,
                        sites: space.sites(),
                    });
                }
                if f.op.dim() != space.site_dim(f.site) {
                    return Err(Error::LocalDimension {
                        site: f.site,
                        expected: space.site_dim(f.site),
                        found: f.op.dim(),
                    });
                }
            }
        }
        Ok(Self {
            space,
            terms,
            hermitian_hint,
        })
    }

    pub fn zero(space: &HilbertSpec) -> Self {
        Self {
            space: space.clone(),
            terms: Vec::new(),
            hermitian_hint: true,
        }
    }

    pub fn identity(space: &HilbertSpec) -> Self {
        Self {
            space: space.clone(),
            terms: vec![Term::new(ONE, Vec::new())],
            hermitian_hint: true,
        }
    }

    /// `coeff · op` acting on a single site.
    pub fn local(space: &HilbertSpec, site: usize, op: LocalOp, coeff: C64) -> Result<Self> {
        Self::new(space.clone(), vec![Term::new(coeff, vec![(site, op)])], false)
    }

    pub fn space(&self) -> &HilbertSpec {
        &self.space
    }

    pub fn terms(&self) -> &[Term] {
        &self.terms
    }

    pub fn hermitian_hint(&self) -> bool {
        self.hermitian_hint
    }

    pub fn with_hermitian_hint(mut self, hint: bool) -> Self {
        self.hermitian_hint = hint;
        self
    }

    pub fn dim(&self) -> usize {
        self.space.dim()
    }

    pub fn is_zero(&self) -> bool {
        self.terms.iter().all(|t| t.coeff == ZERO || t.factors.iter().any(|f| f.op.is_zero()))
    }

    fn check_space(&self, other: &OperatorSpec) -> Result<()> {
        if self.space != other.space {
            return Err(Error::MixedSpaces);
        }
        Ok(())
    }

    pub fn plus(&self, other: &OperatorSpec) -> Result<Self> {
        self.check_space(other)?;
        let mut terms = self.terms.clone();
        terms.extend(other.terms.iter().cloned());
        Ok(Self {
            space: self.space.clone(),
            terms,
            hermitian_hint: self.hermitian_hint && other.hermitian_hint,
        })
    }

    pub fn scaled(&self, s: C64) -> Self {
        let mut out = self.clone();
        for t in &mut out.terms {
            t.coeff *= s;
        }
        out.hermitian_hint = self.hermitian_hint && s.im == 0.0;
        out
    }

    pub fn adjoint(&self) -> Self {
        let terms = self
            .terms
            .iter()
            .map(|t| Term {
                coeff: t.coeff.conj(),
                factors: t
                    .factors
                    .iter()
                    .map(|f| Factor {
                        site: f.site,
                        op: f.op.adjoint(),
                    })
                    .collect(),
            })
            .collect();
        Self {
            space: self.space.clone(),
            terms,
            hermitian_hint: self.hermitian_hint,
        }
    }

    /// Elementwise complex conjugate in the computational basis.
    pub fn conj(&self) -> Self {
        let terms = self
            .terms
            .iter()
            .map(|t| Term {
                coeff: t.coeff.conj(),
                factors: t
                    .factors
                    .iter()
                    .map(|f| Factor {
                        site: f.site,
                        op: f.op.conj(),
                    })
                    .collect(),
            })
            .collect();
        Self {
            space: self.space.clone(),
            terms,
            hermitian_hint: self.hermitian_hint,
        }
    }

    /// Operator product `self · rhs`, expanded term by term. Factors sharing a
    /// site are multiplied locally, so e.g. `σ⁺σ⁻` collapses to `|↑⟩⟨↑|`.
    pub fn times(&self, rhs: &OperatorSpec) -> Result<Self> {
        self.check_space(rhs)?;
        let mut terms = Vec::with_capacity(self.terms.len() * rhs.terms.len());
        for a in &self.terms {
            for b in &rhs.terms {
                let mut factors: Vec<Factor> = a.factors.clone();
                for fb in &b.factors {
                    match factors.iter_mut().find(|fa| fa.site == fb.site) {
                        Some(fa) => fa.op = fa.op.matmul(&fb.op)?,
                        None => factors.push(fb.clone()),
                    }
                }
                factors.sort_by_key(|f| f.site);
                terms.push(Term {
                    coeff: a.coeff * b.coeff,
                    factors,
                });
            }
        }
        Ok(Self {
            space: self.space.clone(),
            terms,
            hermitian_hint: false,
        })
    }

    /// Drops identity factors and vanishing terms, and merges terms with the
    /// same factor structure.
    pub fn simplified(&self) -> Self {
        let mut merged: Vec<Term> = Vec::new();
        for t in &self.terms {
            if t.coeff == ZERO || t.factors.iter().any(|f| f.op.is_zero()) {
                continue;
            }
            let mut term = t.clone();
            term.factors.retain(|f| !f.op.is_identity());
            match merged.iter_mut().find(|m| m.same_structure(&term)) {
                Some(m) => m.coeff += term.coeff,
                None => merged.push(term),
            }
        }
        merged.retain(|t| t.coeff.norm() > 0.0);
        Self {
            space: self.space.clone(),
            terms: merged,
            hermitian_hint: self.hermitian_hint,
        }
    }

    /// Re-homes the operator onto `target`, shifting every site by `offset`.
    /// Used to build superoperators on the doubled space.
    pub fn embed(&self, target: &HilbertSpec, offset: usize) -> Result<Self> {
        let terms = self
            .terms
            .iter()
            .map(|t| Term {
                coeff: t.coeff,
                factors: t
                    .factors
                    .iter()
                    .map(|f| Factor {
                        site: f.site + offset,
                        op: f.op.clone(),
                    })
                    .collect(),
            })
            .collect();
        Self::new(target.clone(), terms, self.hermitian_hint)
    }

    /// Upper bound on the spectral norm from the triangle inequality.
    pub fn norm_bound(&self) -> f64 {
        self.terms
            .iter()
            .map(|t| t.coeff.norm() * t.factors.iter().map(|f| f.op.frobenius_norm()).product::<f64>())
            .sum()
    }

    pub fn compile(&self) -> CompiledOperator {
        CompiledOperator::new(self)
    }

    /// `op · v`. Compiles on every call; hot loops should hold a
    /// [`CompiledOperator`] instead.
    pub fn apply(&self, v: &[C64]) -> Result<Vec<C64>> {
        self.space.check_len(v.len())?;
        let mut out = vec![ZERO; v.len()];
        self.compile().apply(v, &mut out);
        Ok(out)
    }

    /// Applies the operator to every column of `c` (an `N×M` matrix).
    pub fn apply_to_columns(&self, c: &Array2<C64>) -> Result<Array2<C64>> {
        self.compile().apply_to_columns(c)
    }

    /// Dense matrix, assembled column by column from basis vectors. Only for
    /// small spaces.
    pub fn dense(&self) -> Array2<C64> {
        let n = self.dim();
        let op = self.compile();
        let mut out = Array2::zeros((n, n).f());
        let mut e = vec![ZERO; n];
        let mut col = vec![ZERO; n];
        for j in 0..n {
            e[j] = ONE;
            op.apply(&e, &mut col);
            out.column_mut(j).assign(&ndarray::ArrayView1::from(&col));
            e[j] = ZERO;
        }
        out
    }
}

/// `H̃ = H − (i/2) Σ_i J_i†J_i`, the non-Hermitian generator of the no-jump
/// evolution.
pub fn build_effective_hamiltonian(h: &OperatorSpec, noise: &NoiseModel) -> Result<OperatorSpec> {
    if noise.jumps().is_empty() {
        return Ok(h.clone());
    }
    let mut out = h.clone();
    for j in noise.jumps() {
        if j.space() != h.space() {
            return Err(Error::MixedSpaces);
        }
        let jdj = j.adjoint().times(j)?.simplified();
        out = out.plus(&jdj.scaled(C64::new(0.0, -0.5)))?;
    }
    Ok(out.simplified().with_hermitian_hint(false))
}

#[derive(Clone, Copy, Debug)]
struct Entry {
    out: usize,
    inp: usize,
    val: C64,
}

/// Enumerates the basis indices whose digits on a term's sites are all zero.
#[derive(Clone, Debug)]
struct BaseWalk {
    /// `(count, stride)` of each run of free sites, outermost first.
    blocks: Vec<(usize, usize)>,
}

impl BaseWalk {
    fn new(space: &HilbertSpec, sites: &[usize]) -> Self {
        let mut blocks = Vec::new();
        let mut start = 0;
        let bounds = sites.iter().copied().chain(std::iter::once(space.sites()));
        for stop in bounds {
            if stop > start {
                let count: usize = space.dims()[start..stop].iter().product();
                blocks.push((count, space.stride(stop - 1)));
            }
            start = stop + 1;
        }
        Self { blocks }
    }

    #[inline]
    fn for_each(&self, mut f: impl FnMut(usize)) {
        let Some((&(inner_count, inner_stride), outer)) = self.blocks.split_last() else {
            f(0);
            return;
        };
        let mut counters = vec![0usize; outer.len()];
        let mut base = 0usize;
        loop {
            for i in 0..inner_count {
                f(base + i * inner_stride);
            }
            let mut k = outer.len();
            loop {
                if k == 0 {
                    return;
                }
                k -= 1;
                counters[k] += 1;
                base += outer[k].1;
                if counters[k] < outer[k].0 {
                    break;
                }
                base -= outer[k].0 * outer[k].1;
                counters[k] = 0;
            }
        }
    }
}

#[derive(Clone, Debug)]
struct CompiledTerm {
    walk: BaseWalk,
    entries: Vec<Entry>,
}

/// Executable form of an [`OperatorSpec`].
#[derive(Clone, Debug)]
pub struct CompiledOperator {
    dim: usize,
    diag: Option<Vec<C64>>,
    terms: Vec<CompiledTerm>,
    norm_bound: f64,
}

impl CompiledOperator {
    fn new(spec: &OperatorSpec) -> Self {
        let space = spec.space();
        let dim = space.dim();
        let fold_diag = dim <= DIAG_MERGE_MAX;
        let mut diag: Option<Vec<C64>> = None;
        let mut terms = Vec::new();
        let mut norm_bound = 0.0;
        for t in spec.simplified().terms() {
            let sites: Vec<usize> = t.factors.iter().map(|f| f.site).collect();
            let walk = BaseWalk::new(space, &sites);
            let mut entries = vec![Entry {
                out: 0,
                inp: 0,
                val: t.coeff,
            }];
            for f in &t.factors {
                let stride = space.stride(f.site);
                let nz = f.op.nonzeros();
                entries = entries
                    .iter()
                    .flat_map(|e| {
                        nz.iter().map(move |&(r, c, v)| Entry {
                            out: e.out + r * stride,
                            inp: e.inp + c * stride,
                            val: e.val * v,
                        })
                    })
                    .collect();
            }
            let is_diag = entries.iter().all(|e| e.out == e.inp);
            if is_diag && fold_diag {
                let d = diag.get_or_insert_with(|| vec![ZERO; dim]);
                walk.for_each(|b| {
                    for e in &entries {
                        d[b + e.out] += e.val;
                    }
                });
            } else {
                norm_bound += t.coeff.norm()
                    * t.factors.iter().map(|f| f.op.frobenius_norm()).product::<f64>();
                terms.push(CompiledTerm { walk, entries });
            }
        }
        if let Some(d) = &diag {
            norm_bound += d.iter().map(|z| z.norm()).fold(0.0, f64::max);
        }
        Self {
            dim,
            diag,
            terms,
            norm_bound,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn norm_bound(&self) -> f64 {
        self.norm_bound
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty() && self.diag.as_ref().is_none_or(|d| d.iter().all(|z| *z == ZERO))
    }

    /// `y += alpha · op · x`.
    pub fn apply_add(&self, alpha: C64, x: &[C64], y: &mut [C64]) {
        assert_eq!(x.len(), self.dim, "input length");
        assert_eq!(y.len(), self.dim, "output length");
        if let Some(d) = &self.diag {
            for ((yi, xi), di) in y.iter_mut().zip(x).zip(d) {
                *yi += alpha * di * xi;
            }
        }
        for term in &self.terms {
            let scaled: Vec<(usize, usize, C64)> =
                term.entries.iter().map(|e| (e.out, e.inp, alpha * e.val)).collect();
            match scaled.as_slice() {
                [(o, i, v)] => term.walk.for_each(|b| y[b + o] += v * x[b + i]),
                _ => term.walk.for_each(|b| {
                    for (o, i, v) in &scaled {
                        y[b + o] += v * x[b + i];
                    }
                }),
            }
        }
    }

    /// `y = op · x`.
    pub fn apply(&self, x: &[C64], y: &mut [C64]) {
        y.fill(ZERO);
        self.apply_add(ONE, x, y);
    }

    pub fn apply_to_columns(&self, c: &Array2<C64>) -> Result<Array2<C64>> {
        if c.nrows() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: c.nrows(),
            });
        }
        let mut out = Array2::zeros((c.nrows(), c.ncols()).f());
        let mut buf = vec![ZERO; self.dim];
        for (src, mut dst) in c.columns().into_iter().zip(out.columns_mut()) {
            let x = src.to_vec();
            self.apply(&x, &mut buf);
            dst.assign(&ndarray::ArrayView1::from(&buf));
        }
        Ok(out)
    }
}
