//! Bases, probability assignments and density matrices.
//!
//! All types validate on construction and are immutable afterwards.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::numerics::{check_finite, hermitian_deviation, hermitian_eigen};
use crate::{c, tol, CMat, CVec};

fn frobenius_identity_deviation(m: &CMat) -> f64 {
    (m - CMat::identity(m.nrows(), m.ncols())).norm()
}

/// Orthogonal projection: Hermitian and idempotent.
#[derive(Debug, Clone, PartialEq)]
pub struct Projector {
    matrix: CMat,
    rank: usize,
}

impl Projector {
    /// Validates Hermiticity, idempotence and integral trace.
    pub fn new(matrix: CMat) -> Result<Self> {
        Self::validated(matrix, 0)
    }

    fn validated(matrix: CMat, index: usize) -> Result<Self> {
        check_finite(&matrix)?;
        if !matrix.is_square() {
            return Err(Error::DimensionMismatch {
                index,
                expected: matrix.nrows(),
                found: matrix.ncols(),
            });
        }
        let deviation = hermitian_deviation(&matrix);
        if deviation > tol::HERM {
            return Err(Error::NotHermitian { index, deviation });
        }
        let deviation = (&matrix * &matrix - &matrix).norm();
        if deviation > tol::IDEM {
            return Err(Error::NotIdempotent { index, deviation });
        }
        let trace = matrix.trace().re;
        let rank = trace.round();
        if (trace - rank).abs() > 1e-8 || rank < 1.0 {
            return Err(Error::NotAProjector(format!("trace {trace} of matrix {index} is not a positive integer")));
        }
        Ok(Self {
            matrix,
            rank: rank as usize,
        })
    }

    /// |v⟩⟨v| for a unit vector.
    pub fn from_vector(v: &CVec) -> Result<Self> {
        Self::new(v * v.adjoint())
    }

    pub fn matrix(&self) -> &CMat {
        &self.matrix
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    /// Splits into `rank` mutually orthogonal rank-1 projectors summing to `self`.
    pub fn decompose(&self) -> Vec<Projector> {
        let eig = hermitian_eigen(&self.matrix).expect("validated projector is Hermitian");
        let n = self.dim();
        (0..n)
            .rev()
            .take(self.rank)
            .map(|col| {
                let v = eig.vectors.column(col).into_owned();
                Projector {
                    matrix: &v * v.adjoint(),
                    rank: 1,
                }
            })
            .collect()
    }
}

/// Decomposes a projection of rank k into k orthogonal rank-1 projections.
pub fn decompose_projection(e: &CMat) -> Result<Vec<Projector>> {
    let p = Projector::new(e.clone()).map_err(|err| match err {
        Error::NonFiniteInput => Error::NonFiniteInput,
        other => Error::NotAProjector(other.to_string()),
    })?;
    Ok(p.decompose())
}

/// Unit vector spanning the range of a rank-1 projector: the column with the
/// largest diagonal entry, normalized.
pub(crate) fn vector_of_rank_one(p: &CMat) -> CVec {
    let n = p.nrows();
    let col = (0..n)
        .max_by(|&i, &j| p[(i, i)].re.partial_cmp(&p[(j, j)].re).unwrap().then(j.cmp(&i)))
        .unwrap_or(0);
    let scale = p[(col, col)].re.sqrt();
    p.column(col).map(|z| z / scale)
}

/// Ordered orthonormal basis, stored as rank-1 projectors and unit vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct Basis {
    label: String,
    projectors: Vec<CMat>,
    vectors: Vec<CVec>,
    authored_as_vectors: bool,
}

impl Basis {
    /// Validates `n` rank-1 projectors of size n×n.
    pub fn from_projectors(label: impl Into<String>, matrices: Vec<CMat>) -> Result<Self> {
        let n = matrices.len();
        if n == 0 {
            return Err(Error::DimensionMismatch {
                index: 0,
                expected: 1,
                found: 0,
            });
        }
        for (index, m) in matrices.iter().enumerate() {
            if m.nrows() != n || m.ncols() != n {
                return Err(Error::DimensionMismatch {
                    index,
                    expected: n,
                    found: if m.nrows() != n { m.nrows() } else { m.ncols() },
                });
            }
        }
        for (index, m) in matrices.iter().enumerate() {
            let p = Projector::validated(m.clone(), index)?;
            if p.rank != 1 {
                return Err(Error::NotRankOne {
                    index,
                    trace: m.trace().re,
                });
            }
        }
        for i in 0..n {
            for j in i + 1..n {
                let overlap = (&matrices[i] * &matrices[j]).norm();
                if overlap > tol::ORTH {
                    return Err(Error::NotOrthogonal { i, j, overlap });
                }
            }
        }
        let sum = matrices.iter().fold(CMat::zeros(n, n), |acc, m| acc + m);
        let deviation = frobenius_identity_deviation(&sum);
        if deviation > tol::ORTH {
            return Err(Error::NotComplete { deviation });
        }
        let vectors = matrices.iter().map(vector_of_rank_one).collect();
        Ok(Self {
            label: label.into(),
            projectors: matrices,
            vectors,
            authored_as_vectors: false,
        })
    }

    /// Builds the projectors |v⟩⟨v| from column vectors and validates them.
    /// Vectors are not normalized for you.
    pub fn from_vectors(label: impl Into<String>, vectors: Vec<CVec>) -> Result<Self> {
        let n = vectors.len();
        for (index, v) in vectors.iter().enumerate() {
            if v.len() != n {
                return Err(Error::DimensionMismatch {
                    index,
                    expected: n,
                    found: v.len(),
                });
            }
        }
        let mats = vectors.iter().map(|v| v * v.adjoint()).collect();
        let mut basis = Self::from_projectors(label, mats)?;
        basis.vectors = vectors;
        basis.authored_as_vectors = true;
        Ok(basis)
    }

    /// Columns of a unitary matrix as basis vectors.
    pub fn from_unitary(label: impl Into<String>, u: &CMat) -> Result<Self> {
        Self::from_vectors(label, u.column_iter().map(|c| c.into_owned()).collect())
    }

    /// The computational basis e_0, …, e_{n−1}.
    pub fn computational(n: usize) -> Self {
        Self::from_unitary("computational", &CMat::identity(n, n)).expect("identity is unitary")
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn dim(&self) -> usize {
        self.projectors.len()
    }

    pub fn projectors(&self) -> &[CMat] {
        &self.projectors
    }

    pub fn vectors(&self) -> &[CVec] {
        &self.vectors
    }

    /// Whether the basis was built from vectors (as opposed to projectors).
    /// Serialization keeps the authored form so that round trips are exact.
    pub fn authored_as_vectors(&self) -> bool {
        self.authored_as_vectors
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    /// Reorders the elements: position `i` of the result holds element `order[i]`.
    pub fn reordered(&self, order: &[usize]) -> Result<Self> {
        check_permutation(order, self.dim())?;
        Ok(Self {
            label: self.label.clone(),
            projectors: order.iter().map(|&i| self.projectors[i].clone()).collect(),
            vectors: order.iter().map(|&i| self.vectors[i].clone()).collect(),
            authored_as_vectors: self.authored_as_vectors,
        })
    }
}

pub(crate) fn check_permutation(order: &[usize], len: usize) -> Result<()> {
    let mut seen = vec![false; len];
    if order.len() != len {
        return Err(Error::InvalidArgument(format!(
            "order has {} entries, expected {len}",
            order.len()
        )));
    }
    for &i in order {
        if i >= len || std::mem::replace(&mut seen[i], true) {
            return Err(Error::InvalidArgument(format!("order is not a permutation of 0..{len}")));
        }
    }
    Ok(())
}

/// Validates a list of n×n matrices as an orthonormal rank-1 basis.
pub fn validate_basis(candidate: &[CMat]) -> Result<Basis> {
    Basis::from_projectors("", candidate.to_vec())
}

/// Outcome probabilities of one measurement.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityVector {
    values: Vec<f64>,
}

impl ProbabilityVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidProbabilities("empty".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteInput);
        }
        if let Some((i, v)) = values.iter().enumerate().find(|(_, &v)| v < -tol::PROB) {
            return Err(Error::InvalidProbabilities(format!("entry {i} is negative ({v})")));
        }
        let sum: f64 = values.iter().sum();
        if (sum - 1.0).abs() > tol::PROB {
            return Err(Error::InvalidProbabilities(format!("entries sum to {sum}")));
        }
        Ok(Self { values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// One measured basis with its claimed probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct Assignment {
    basis: Basis,
    probs: ProbabilityVector,
}

impl Assignment {
    pub fn new(basis: Basis, probs: ProbabilityVector) -> Result<Self> {
        if basis.dim() != probs.len() {
            return Err(Error::DimensionMismatch {
                index: 0,
                expected: basis.dim(),
                found: probs.len(),
            });
        }
        Ok(Self { basis, probs })
    }

    pub fn basis(&self) -> &Basis {
        &self.basis
    }

    pub fn probs(&self) -> &ProbabilityVector {
        &self.probs
    }
}

/// Ordered family of assignments in one dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct AssignmentSet {
    dimension: usize,
    assignments: Vec<Assignment>,
}

impl AssignmentSet {
    pub fn new(dimension: usize, assignments: Vec<Assignment>) -> Result<Self> {
        for (index, a) in assignments.iter().enumerate() {
            if a.basis.dim() != dimension {
                return Err(Error::DimensionMismatch {
                    index,
                    expected: dimension,
                    found: a.basis.dim(),
                });
            }
        }
        Ok(Self {
            dimension,
            assignments,
        })
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn assignments(&self) -> &[Assignment] {
        &self.assignments
    }

    pub fn len(&self) -> usize {
        self.assignments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assignments.is_empty()
    }

    pub fn bases(&self) -> Vec<Basis> {
        self.assignments.iter().map(|a| a.basis.clone()).collect()
    }

    /// The sub-family at the given indices, in that order.
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        let mut picked = Vec::with_capacity(indices.len());
        for &i in indices {
            let a = self
                .assignments
                .get(i)
                .ok_or_else(|| Error::InvalidArgument(format!("index {i} out of range")))?;
            picked.push(a.clone());
        }
        Ok(Self {
            dimension: self.dimension,
            assignments: picked,
        })
    }
}

/// Names of the n² real parameters of a Hermitian matrix, in column order:
/// diagonal `a_i`, then `x_jk = Re ρ_jk`, then `y_jk = Im ρ_jk`, pairs j<k
/// in lexicographic order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Param {
    A(usize),
    X(usize, usize),
    Y(usize, usize),
}

impl std::fmt::Display for Param {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Param::A(i) => write!(f, "a{i}"),
            Param::X(j, k) => write!(f, "x{j},{k}"),
            Param::Y(j, k) => write!(f, "y{j},{k}"),
        }
    }
}

/// Index pairs (j, k), j < k, in lexicographic order.
pub fn pairs(n: usize) -> Vec<(usize, usize)> {
    (0..n).flat_map(|j| (j + 1..n).map(move |k| (j, k))).collect()
}

pub fn param_labels(n: usize) -> Vec<Param> {
    let p = pairs(n);
    (0..n)
        .map(Param::A)
        .chain(p.iter().map(|&(j, k)| Param::X(j, k)))
        .chain(p.iter().map(|&(j, k)| Param::Y(j, k)))
        .collect()
}

/// Real parameters of a Hermitian matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct StateParams {
    pub a: Vec<f64>,
    /// Indexed like [`pairs`].
    pub x: Vec<f64>,
    /// Indexed like [`pairs`].
    pub y: Vec<f64>,
}

impl StateParams {
    /// Reads the parameters of a square matrix (only the upper triangle and diagonal are used).
    pub fn of_matrix(m: &CMat) -> Self {
        let p = pairs(m.nrows());
        Self {
            a: (0..m.nrows()).map(|i| m[(i, i)].re).collect(),
            x: p.iter().map(|&(j, k)| m[(j, k)].re).collect(),
            y: p.iter().map(|&(j, k)| m[(j, k)].im).collect(),
        }
    }

    /// Splits a flat vector laid out in column order.
    pub fn from_vector(n: usize, v: &[f64]) -> Result<Self> {
        if v.len() != n * n {
            return Err(Error::DimensionMismatch {
                index: 0,
                expected: n * n,
                found: v.len(),
            });
        }
        let m = n * (n - 1) / 2;
        Ok(Self {
            a: v[..n].to_vec(),
            x: v[n..n + m].to_vec(),
            y: v[n + m..].to_vec(),
        })
    }

    pub fn dimension(&self) -> usize {
        self.a.len()
    }

    pub fn to_vector(&self) -> DVector<f64> {
        DVector::from_iterator(
            self.a.len() + self.x.len() + self.y.len(),
            self.a.iter().chain(&self.x).chain(&self.y).copied(),
        )
    }

    /// The Hermitian matrix with these parameters.
    pub fn to_matrix(&self) -> CMat {
        let n = self.a.len();
        let mut m = CMat::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = c(self.a[i], 0.0);
        }
        for (t, (j, k)) in pairs(n).into_iter().enumerate() {
            m[(j, k)] = c(self.x[t], self.y[t]);
            m[(k, j)] = c(self.x[t], -self.y[t]);
        }
        m
    }
}

/// Hermitian unit-trace matrix whose positivity has not been established.
#[derive(Debug, Clone, PartialEq)]
pub struct StateCandidate {
    matrix: CMat,
}

impl StateCandidate {
    pub fn matrix(&self) -> &CMat {
        &self.matrix
    }

    pub fn params(&self) -> StateParams {
        StateParams::of_matrix(&self.matrix)
    }

    pub fn min_eigenvalue(&self) -> f64 {
        hermitian_eigen(&self.matrix).expect("candidate is Hermitian").min()
    }

    /// Promotes to a state when λ_min ≥ −tol_psd.
    pub fn into_density(self) -> Result<DensityMatrix> {
        DensityMatrix::new(self.matrix)
    }
}

/// Builds the Hermitian unit-trace matrix with diagonal `a` and off-diagonal
/// entries ρ_jk = x_jk + i·y_jk. Positivity is not checked.
pub fn density_from_params(a: &[f64], x: &[f64], y: &[f64]) -> Result<StateCandidate> {
    let n = a.len();
    let m = n * n.saturating_sub(1) / 2;
    if n == 0 || x.len() != m || y.len() != m {
        return Err(Error::DimensionMismatch {
            index: 0,
            expected: m,
            found: x.len().max(y.len()),
        });
    }
    if a.iter().chain(x).chain(y).any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteInput);
    }
    let trace: f64 = a.iter().sum();
    if (trace - 1.0).abs() > tol::PROB {
        return Err(Error::TraceNotOne { trace });
    }
    let params = StateParams {
        a: a.to_vec(),
        x: x.to_vec(),
        y: y.to_vec(),
    };
    Ok(StateCandidate {
        matrix: params.to_matrix(),
    })
}

/// Hermitian, positive semidefinite, unit-trace matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    matrix: CMat,
}

impl DensityMatrix {
    pub fn new(matrix: CMat) -> Result<Self> {
        check_finite(&matrix)?;
        if !matrix.is_square() {
            return Err(Error::DimensionMismatch {
                index: 0,
                expected: matrix.nrows(),
                found: matrix.ncols(),
            });
        }
        let deviation = hermitian_deviation(&matrix);
        if deviation > tol::HERM {
            return Err(Error::NotHermitian { index: 0, deviation });
        }
        let trace = matrix.trace().re;
        if (trace - 1.0).abs() > tol::PROB {
            return Err(Error::TraceNotOne { trace });
        }
        let min_eigenvalue = hermitian_eigen(&matrix)?.min();
        if min_eigenvalue < -tol::PSD {
            return Err(Error::NotPositive { min_eigenvalue });
        }
        Ok(Self { matrix })
    }

    /// I/n.
    pub fn maximally_mixed(n: usize) -> Self {
        Self {
            matrix: CMat::identity(n, n) * c(1.0 / n as f64, 0.0),
        }
    }

    /// |v⟩⟨v| / ⟨v|v⟩.
    pub fn pure(v: &CVec) -> Result<Self> {
        let norm = v.norm();
        if norm.is_nan() || norm <= 0.0 {
            return Err(Error::InvalidArgument("zero state vector".into()));
        }
        let u = v / c(norm, 0.0);
        Self::new(&u * u.adjoint())
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &CMat {
        &self.matrix
    }

    pub fn params(&self) -> StateParams {
        StateParams::of_matrix(&self.matrix)
    }

    pub fn min_eigenvalue(&self) -> f64 {
        hermitian_eigen(&self.matrix).expect("state is Hermitian").min()
    }

    /// Re tr(ρP).
    pub fn expectation(&self, p: &CMat) -> f64 {
        (&self.matrix * p).trace().re
    }

    /// Born probabilities in a basis.
    pub fn probabilities(&self, basis: &Basis) -> Vec<f64> {
        basis.projectors().iter().map(|p| self.expectation(p)).collect()
    }
}

impl From<DensityMatrix> for StateCandidate {
    fn from(d: DensityMatrix) -> Self {
        Self { matrix: d.matrix }
    }
}
