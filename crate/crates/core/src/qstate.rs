//! Composite Hilbert spaces built from labeled tensor factors, together with
//! state vectors, operators, projective measurement and fidelity.
//!
//! Basis ordering is row-major over the factor list: the first factor is the
//! most significant digit of a basis index. Atom levels are ordered `g = 0`,
//! `e = 1`, third level `= 2`; cavity levels are Fock numbers `0..=N`.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::tolerance::TOLERANCES;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);
pub const I: C64 = C64::new(0.0, 1.0);

pub const GROUND: usize = 0;
pub const EXCITED: usize = 1;
pub const THIRD: usize = 2;

/// One tensor factor: a name and a dimension.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct FactorLabel {
    name: String,
    dim: usize,
}

impl FactorLabel {
    pub fn new(name: impl Into<String>, dim: usize) -> Result<Self> {
        let name = name.into();
        if dim < 2 {
            return Err(Error::InvalidParameter(format!(
                "factor `{name}` must have dimension >= 2, got {dim}"
            )));
        }
        if name.is_empty() {
            return Err(Error::InvalidParameter(
                "factor name must not be empty".into(),
            ));
        }
        Ok(Self { name, dim })
    }

    /// An atom with `levels` internal states (2 or 3).
    pub fn atom(name: impl Into<String>, levels: usize) -> Result<Self> {
        if !(2..=3).contains(&levels) {
            return Err(Error::InvalidParameter(format!(
                "atoms have 2 or 3 levels, got {levels}"
            )));
        }
        Self::new(name, levels)
    }

    /// A cavity mode truncated at Fock number `cutoff` (dimension `cutoff + 1`).
    pub fn cavity(name: impl Into<String>, cutoff: usize) -> Result<Self> {
        Self::new(name, cutoff + 1)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.dim
    }
}

impl fmt::Display for FactorLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}[{}]", self.name, self.dim)
    }
}

/// Ordered list of factors. The order is fixed for the lifetime of the space.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct CompositeSpace {
    factors: Vec<FactorLabel>,
}

impl CompositeSpace {
    pub fn new(factors: Vec<FactorLabel>) -> Result<Self> {
        if factors.is_empty() {
            return Err(Error::InvalidParameter(
                "a space needs at least one factor".into(),
            ));
        }
        for (i, f) in factors.iter().enumerate() {
            if factors[..i].iter().any(|g| g.name == f.name) {
                return Err(Error::LabelCollision(f.name.clone()));
            }
        }
        Ok(Self { factors })
    }

    pub fn single(factor: FactorLabel) -> Self {
        Self {
            factors: vec![factor],
        }
    }

    pub fn factors(&self) -> &[FactorLabel] {
        &self.factors
    }

    pub fn dim(&self) -> usize {
        self.factors.iter().map(|f| f.dim).product()
    }

    pub fn position(&self, name: &str) -> Result<usize> {
        self.factors
            .iter()
            .position(|f| f.name == name)
            .ok_or_else(|| Error::UnknownLabel(name.to_string()))
    }

    pub fn factor(&self, name: &str) -> Result<&FactorLabel> {
        Ok(&self.factors[self.position(name)?])
    }

    pub fn contains(&self, name: &str) -> bool {
        self.factors.iter().any(|f| f.name == name)
    }

    /// Concatenation `self ⊗ other`.
    pub fn product(&self, other: &CompositeSpace) -> Result<CompositeSpace> {
        let mut factors = self.factors.clone();
        factors.extend(other.factors.iter().cloned());
        CompositeSpace::new(factors)
    }

    /// The space with the named factor removed.
    pub fn without(&self, name: &str) -> Result<CompositeSpace> {
        let pos = self.position(name)?;
        let mut factors = self.factors.clone();
        factors.remove(pos);
        CompositeSpace::new(factors)
    }

    /// Flat index of a multi-index (one level per factor).
    pub fn index_of(&self, levels: &[usize]) -> Result<usize> {
        if levels.len() != self.factors.len() {
            return Err(Error::DimensionMismatch {
                expected: self.factors.len(),
                found: levels.len(),
            });
        }
        let mut idx = 0;
        for (f, &l) in self.factors.iter().zip(levels) {
            if l >= f.dim {
                return Err(Error::InvalidParameter(format!(
                    "level {l} out of range for factor {f}"
                )));
            }
            idx = idx * f.dim + l;
        }
        Ok(idx)
    }

    /// Inverse of [`CompositeSpace::index_of`].
    pub fn levels_of(&self, mut index: usize) -> Vec<usize> {
        let mut levels = vec![0; self.factors.len()];
        for (slot, f) in levels.iter_mut().zip(&self.factors).rev() {
            *slot = index % f.dim;
            index /= f.dim;
        }
        levels
    }
}

impl fmt::Display for CompositeSpace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names: Vec<String> = self.factors.iter().map(ToString::to_string).collect();
        write!(f, "{}", names.join(" ⊗ "))
    }
}

/// Normalized complex amplitude vector over a composite space.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    space: CompositeSpace,
    amps: DVector<C64>,
}

impl StateVector {
    /// Wraps an amplitude vector that must already be normalized.
    pub fn new(space: CompositeSpace, amps: DVector<C64>) -> Result<Self> {
        if amps.len() != space.dim() {
            return Err(Error::DimensionMismatch {
                expected: space.dim(),
                found: amps.len(),
            });
        }
        let norm = amps.norm();
        if (norm - 1.0).abs() > TOLERANCES.norm {
            return Err(Error::NotNormalized { norm });
        }
        Ok(Self { space, amps })
    }

    /// Normalizes `amps`; fails on a (numerically) zero vector.
    pub fn normalized(space: CompositeSpace, amps: DVector<C64>) -> Result<Self> {
        if amps.len() != space.dim() {
            return Err(Error::DimensionMismatch {
                expected: space.dim(),
                found: amps.len(),
            });
        }
        let norm = amps.norm();
        if !norm.is_finite() || norm < 1e-300 {
            return Err(Error::NotNormalized { norm });
        }
        Ok(Self {
            space,
            amps: amps / C64::from(norm),
        })
    }

    pub fn basis(space: CompositeSpace, levels: &[usize]) -> Result<Self> {
        let idx = space.index_of(levels)?;
        let mut amps = DVector::from_element(space.dim(), ZERO);
        amps[idx] = ONE;
        Ok(Self { space, amps })
    }

    /// State of a single factor from its amplitudes (normalized on entry).
    pub fn from_amplitudes(factor: FactorLabel, amps: &[C64]) -> Result<Self> {
        Self::normalized(
            CompositeSpace::single(factor),
            DVector::from_column_slice(amps),
        )
    }

    pub fn space(&self) -> &CompositeSpace {
        &self.space
    }

    pub fn amplitudes(&self) -> &DVector<C64> {
        &self.amps
    }

    pub fn amplitude(&self, levels: &[usize]) -> Result<C64> {
        Ok(self.amps[self.space.index_of(levels)?])
    }

    pub fn norm(&self) -> f64 {
        self.amps.norm()
    }

    /// `⟨self|other⟩`.
    pub fn inner(&self, other: &StateVector) -> Result<C64> {
        if self.space != other.space {
            return Err(Error::DimensionMismatch {
                expected: self.space.dim(),
                found: other.space.dim(),
            });
        }
        Ok(self.amps.dotc(&other.amps))
    }

    /// Applies a unitary defined on the same space.
    pub fn apply(&self, op: &Operator) -> Result<StateVector> {
        if op.space != self.space {
            return Err(Error::DimensionMismatch {
                expected: self.space.dim(),
                found: op.space.dim(),
            });
        }
        StateVector::new(self.space.clone(), &op.matrix * &self.amps)
    }

    /// Applies `op` (defined on `targets`) and renormalizes. Returns the
    /// squared norm before renormalization, which is below one for
    /// sub-unitary maps that model leakage.
    pub fn apply_local_lossy(
        &self,
        op: &DMatrix<C64>,
        targets: &[&str],
    ) -> Result<(StateVector, f64)> {
        let local = Operator::general(local_space(&self.space, targets)?, op.clone())?;
        let full = embed(&local, targets, &self.space)?;
        let out = &full.matrix * &self.amps;
        let survival = out.norm_squared();
        Ok((StateVector::normalized(self.space.clone(), out)?, survival))
    }

    /// Applies a unitary acting on the listed factors.
    pub fn apply_local(&self, op: &Operator, targets: &[&str]) -> Result<StateVector> {
        let full = embed(op, targets, &self.space)?;
        self.apply(&full)
    }

    /// Projects `factor` onto `vector` and returns the normalized state of the
    /// remaining factors with the projection probability.
    pub fn condition(&self, factor: &str, vector: &DVector<C64>) -> Result<(StateVector, f64)> {
        let pos = self.space.position(factor)?;
        let fdim = self.space.factors[pos].dim;
        if vector.len() != fdim {
            return Err(Error::DimensionMismatch {
                expected: fdim,
                found: vector.len(),
            });
        }
        let rest = self.space.without(factor)?;
        let mut out = DVector::from_element(rest.dim(), ZERO);
        for idx in 0..self.space.dim() {
            let mut levels = self.space.levels_of(idx);
            let l = levels.remove(pos);
            let r = rest.index_of(&levels)?;
            out[r] += vector[l].conj() * self.amps[idx];
        }
        let p = out.norm_squared();
        Ok((StateVector::normalized(rest, out)?, p))
    }

    /// Same state with factors permuted into the order of `target`.
    pub fn reorder(&self, target: &CompositeSpace) -> Result<StateVector> {
        if target.factors.len() != self.space.factors.len() {
            return Err(Error::DimensionMismatch {
                expected: self.space.factors.len(),
                found: target.factors.len(),
            });
        }
        let mut perm = Vec::with_capacity(target.factors.len());
        for f in &target.factors {
            let p = self.space.position(&f.name)?;
            if self.space.factors[p].dim != f.dim {
                return Err(Error::DimensionMismatch {
                    expected: self.space.factors[p].dim,
                    found: f.dim,
                });
            }
            perm.push(p);
        }
        let mut amps = DVector::from_element(target.dim(), ZERO);
        for idx in 0..self.space.dim() {
            let levels = self.space.levels_of(idx);
            let t: Vec<usize> = perm.iter().map(|&p| levels[p]).collect();
            amps[target.index_of(&t)?] = self.amps[idx];
        }
        Ok(StateVector {
            space: target.clone(),
            amps,
        })
    }

    /// Multiplies by a global phase so that the largest amplitude is real and
    /// positive. Useful for printing and comparing up to global phase.
    pub fn canonical_phase(&self) -> StateVector {
        let (imax, _) = self.amps.iter().enumerate().fold((0, -1.0), |acc, (i, a)| {
            if a.norm() > acc.1 + 1e-12 {
                (i, a.norm())
            } else {
                acc
            }
        });
        let a = self.amps[imax];
        let phase = if a.norm() > 0.0 {
            a.conj() / a.norm()
        } else {
            ONE
        };
        StateVector {
            space: self.space.clone(),
            amps: &self.amps * phase,
        }
    }
}

/// Kronecker product of states over disjoint factor sets.
pub fn tensor(states: &[StateVector]) -> Result<StateVector> {
    let (first, rest) = states
        .split_first()
        .ok_or_else(|| Error::InvalidParameter("tensor of an empty list".into()))?;
    let mut space = first.space.clone();
    let mut amps = first.amps.clone();
    for s in rest {
        space = space.product(&s.space)?;
        amps = amps.kronecker(&s.amps);
    }
    StateVector::normalized(space, amps)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OperatorKind {
    Hermitian,
    Unitary,
    General,
}

/// Square complex matrix on a composite space, tagged with its intended
/// character. Hermitian and unitary tags are verified on construction.
#[derive(Debug, Clone, PartialEq)]
pub struct Operator {
    space: CompositeSpace,
    matrix: DMatrix<C64>,
    kind: OperatorKind,
}

impl Operator {
    fn checked_dims(space: &CompositeSpace, matrix: &DMatrix<C64>) -> Result<()> {
        let n = space.dim();
        if matrix.nrows() != n || matrix.ncols() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: matrix.nrows().max(matrix.ncols()),
            });
        }
        Ok(())
    }

    pub fn hermitian(space: CompositeSpace, matrix: DMatrix<C64>) -> Result<Self> {
        Self::checked_dims(&space, &matrix)?;
        let deviation = hermiticity_deviation(&matrix);
        let scale = matrix.iter().map(|z| z.norm()).fold(1.0, f64::max);
        if deviation > TOLERANCES.unitarity * scale {
            return Err(Error::NotHermitian { deviation });
        }
        Ok(Self {
            space,
            matrix,
            kind: OperatorKind::Hermitian,
        })
    }

    pub fn unitary(space: CompositeSpace, matrix: DMatrix<C64>) -> Result<Self> {
        Self::checked_dims(&space, &matrix)?;
        let deviation = unitarity_deviation(&matrix);
        if deviation > TOLERANCES.unitarity {
            return Err(Error::NotUnitary { deviation });
        }
        Ok(Self {
            space,
            matrix,
            kind: OperatorKind::Unitary,
        })
    }

    pub fn general(space: CompositeSpace, matrix: DMatrix<C64>) -> Result<Self> {
        Self::checked_dims(&space, &matrix)?;
        Ok(Self {
            space,
            matrix,
            kind: OperatorKind::General,
        })
    }

    pub fn identity(space: CompositeSpace) -> Self {
        let n = space.dim();
        Self {
            space,
            matrix: DMatrix::identity(n, n),
            kind: OperatorKind::Unitary,
        }
    }

    pub fn space(&self) -> &CompositeSpace {
        &self.space
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.matrix
    }

    pub fn into_matrix(self) -> DMatrix<C64> {
        self.matrix
    }

    pub fn kind(&self) -> OperatorKind {
        self.kind
    }

    pub fn adjoint(&self) -> Operator {
        Self {
            space: self.space.clone(),
            matrix: self.matrix.adjoint(),
            kind: self.kind,
        }
    }

    /// Product `self · other` (apply `other` first).
    pub fn compose(&self, other: &Operator) -> Result<Operator> {
        if self.space != other.space {
            return Err(Error::DimensionMismatch {
                expected: self.space.dim(),
                found: other.space.dim(),
            });
        }
        let kind = if self.kind == OperatorKind::Unitary && other.kind == OperatorKind::Unitary {
            OperatorKind::Unitary
        } else {
            OperatorKind::General
        };
        Ok(Self {
            space: self.space.clone(),
            matrix: &self.matrix * &other.matrix,
            kind,
        })
    }
}

/// Largest entry modulus of a complex array.
pub fn max_norm<'a>(entries: impl IntoIterator<Item = &'a C64>) -> f64 {
    entries.into_iter().map(|z| z.norm()).fold(0.0, f64::max)
}

pub fn hermiticity_deviation(m: &DMatrix<C64>) -> f64 {
    (m - m.adjoint())
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max)
}

pub fn unitarity_deviation(m: &DMatrix<C64>) -> f64 {
    let n = m.nrows();
    (m.adjoint() * m - DMatrix::<C64>::identity(n, n))
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max)
}

/// The sub-space of `space` made of the listed factors, in the listed order.
pub fn local_space(space: &CompositeSpace, targets: &[&str]) -> Result<CompositeSpace> {
    let factors = targets
        .iter()
        .map(|t| space.factor(t).cloned())
        .collect::<Result<Vec<_>>>()?;
    CompositeSpace::new(factors)
}

/// Lifts `op`, acting on the factors `targets` (in that order), to the full
/// `space`, acting as the identity on every other factor.
pub fn embed(op: &Operator, targets: &[&str], space: &CompositeSpace) -> Result<Operator> {
    let positions = targets
        .iter()
        .map(|t| space.position(t))
        .collect::<Result<Vec<_>>>()?;
    for (i, p) in positions.iter().enumerate() {
        if positions[..i].contains(p) {
            return Err(Error::LabelCollision(targets[i].to_string()));
        }
    }
    let sub_dim: usize = positions.iter().map(|&p| space.factors[p].dim).product();
    if op.matrix.nrows() != sub_dim {
        return Err(Error::DimensionMismatch {
            expected: sub_dim,
            found: op.matrix.nrows(),
        });
    }
    let n = space.dim();
    let mut sub = vec![0usize; n];
    let mut rest = vec![0usize; n];
    for idx in 0..n {
        let levels = space.levels_of(idx);
        let mut s = 0;
        for &p in &positions {
            s = s * space.factors[p].dim + levels[p];
        }
        let mut r = 0;
        for (k, f) in space.factors.iter().enumerate() {
            if !positions.contains(&k) {
                r = r * f.dim + levels[k];
            }
        }
        sub[idx] = s;
        rest[idx] = r;
    }
    let n_rest = n / sub_dim;
    let mut groups: Vec<Vec<usize>> = vec![vec![0; sub_dim]; n_rest];
    for idx in 0..n {
        groups[rest[idx]][sub[idx]] = idx;
    }
    let mut m = DMatrix::from_element(n, n, ZERO);
    for g in &groups {
        for (a, &i) in g.iter().enumerate() {
            for (b, &j) in g.iter().enumerate() {
                m[(i, j)] = op.matrix[(a, b)];
            }
        }
    }
    Ok(Operator {
        space: space.clone(),
        matrix: m,
        kind: op.kind,
    })
}

/// Labeled orthonormal basis of one factor.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementBasis {
    labels: Vec<String>,
    vectors: Vec<DVector<C64>>,
}

impl MeasurementBasis {
    pub fn new(labels: Vec<String>, vectors: Vec<DVector<C64>>) -> Result<Self> {
        if labels.len() != vectors.len() || vectors.is_empty() {
            return Err(Error::InvalidBasis(
                "one label per vector is required".into(),
            ));
        }
        let dim = vectors[0].len();
        if vectors.len() != dim {
            return Err(Error::InvalidBasis(format!(
                "{} vectors cannot span a {dim}-dimensional factor",
                vectors.len()
            )));
        }
        for (i, v) in vectors.iter().enumerate() {
            if v.len() != dim {
                return Err(Error::InvalidBasis("vectors differ in length".into()));
            }
            for (j, w) in vectors.iter().enumerate().take(i + 1) {
                let expect = if i == j { 1.0 } else { 0.0 };
                if (v.dotc(w) - C64::from(expect)).norm() > TOLERANCES.unitarity {
                    return Err(Error::InvalidBasis(format!(
                        "vectors {j} and {i} are not orthonormal"
                    )));
                }
            }
        }
        Ok(Self { labels, vectors })
    }

    /// Standard basis with the given level labels.
    pub fn computational(labels: &[&str]) -> Self {
        let dim = labels.len();
        let vectors = (0..dim)
            .map(|k| {
                let mut v = DVector::from_element(dim, ZERO);
                v[k] = ONE;
                v
            })
            .collect();
        Self {
            labels: labels.iter().map(|s| s.to_string()).collect(),
            vectors,
        }
    }

    /// `{g, e}` basis of a two-level atom.
    pub fn atom() -> Self {
        Self::computational(&["g", "e"])
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn vectors(&self) -> &[DVector<C64>] {
        &self.vectors
    }

    pub fn dim(&self) -> usize {
        self.vectors.len()
    }
}

/// One possible outcome of a projective measurement.
#[derive(Debug, Clone, PartialEq)]
pub struct Branch {
    pub outcome: String,
    pub outcome_index: usize,
    pub probability: f64,
    /// Post-measurement state on the full space; `None` when the probability vanishes.
    pub state: Option<StateVector>,
}

fn project(
    state: &StateVector,
    factor: &str,
    basis: &MeasurementBasis,
    k: usize,
) -> Result<(DVector<C64>, f64)> {
    let pos = state.space.position(factor)?;
    let fdim = state.space.factors[pos].dim;
    if basis.dim() != fdim {
        return Err(Error::InvalidBasis(format!(
            "basis of dimension {} does not span factor `{factor}` of dimension {fdim}",
            basis.dim()
        )));
    }
    let v = &basis.vectors[k];
    let proj = Operator::general(
        CompositeSpace::single(state.space.factors[pos].clone()),
        v * v.adjoint(),
    )?;
    let full = embed(&proj, &[factor], &state.space)?;
    let out = &full.matrix * &state.amps;
    let p = out.norm_squared();
    Ok((out, p))
}

/// Deterministic list of all outcomes of measuring `factor` in `basis`.
pub fn enumerate_branches(
    state: &StateVector,
    factor: &str,
    basis: &MeasurementBasis,
) -> Result<Vec<Branch>> {
    (0..basis.dim())
        .map(|k| {
            let (out, p) = project(state, factor, basis, k)?;
            let collapsed = if p > 1e-30 {
                Some(StateVector::normalized(state.space.clone(), out)?)
            } else {
                None
            };
            Ok(Branch {
                outcome: basis.labels[k].clone(),
                outcome_index: k,
                probability: p,
                state: collapsed,
            })
        })
        .collect()
}

/// Samples one outcome with the Born rule using the supplied generator.
pub fn measure_with_rng<R: Rng + ?Sized>(
    state: &StateVector,
    factor: &str,
    basis: &MeasurementBasis,
    rng: &mut R,
) -> Result<Branch> {
    let branches = enumerate_branches(state, factor, basis)?;
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let last = branches
        .iter()
        .rposition(|b| b.state.is_some())
        .unwrap_or(0);
    for (k, b) in branches.iter().enumerate() {
        acc += b.probability;
        if (u < acc || k == last) && b.state.is_some() {
            return Ok(b.clone());
        }
    }
    Ok(branches[last].clone())
}

/// Measures `factor` in `basis`. With a seed the outcome is reproducible;
/// without one the thread-local generator is used.
pub fn measure_factor(
    state: &StateVector,
    factor: &str,
    basis: &MeasurementBasis,
    rng_seed: Option<u64>,
) -> Result<Branch> {
    match rng_seed {
        Some(seed) => measure_with_rng(state, factor, basis, &mut ChaCha8Rng::seed_from_u64(seed)),
        None => measure_with_rng(state, factor, basis, &mut rand::rng()),
    }
}

/// `|⟨x|y⟩|²`, insensitive to global phase.
pub fn state_fidelity(x: &StateVector, y: &StateVector) -> Result<f64> {
    if x.space.dim() != y.space.dim() || x.space != y.space {
        return Err(Error::DimensionMismatch {
            expected: x.space.dim(),
            found: y.space.dim(),
        });
    }
    Ok(x.amps.dotc(&y.amps).norm_sqr().min(1.0))
}

/// Builds a dense matrix from row-major entries.
pub fn cmatrix(n: usize, entries: &[C64]) -> DMatrix<C64> {
    DMatrix::from_row_slice(n, n, entries)
}
