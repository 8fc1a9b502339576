//! Explicit bases and assignment families: the two-dimensional four-basis
//! example, the three-dimensional bases with the replacement basis Q, the
//! standard plane families in any dimension, forward-computed assignments,
//! interior states and the perturbation construction for optimality
//! counterexamples.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::model::{pairs, Assignment, AssignmentSet, Basis, DensityMatrix, ProbabilityVector};
use crate::numerics::{left_nullspace, numerical_rank};
use crate::solver::{basis_system_matrix, block_row_range, check_consistency, consistency_number, DEFAULT_BUDGET};
use crate::{c, CMat, CVec};

/// Label of the computational basis in the standard family.
pub const COMPUTATIONAL_LABEL: &str = "computational";

/// Label of the real-part plane basis for the pair (i, j).
pub fn real_label(i: usize, j: usize) -> String {
    format!("re:{i},{j}")
}

/// Label of the imaginary-part plane basis for the pair (i, j).
pub fn imag_label(i: usize, j: usize) -> String {
    format!("im:{i},{j}")
}

fn unit(n: usize, i: usize) -> CVec {
    let mut v = CVec::zeros(n);
    v[i] = c(1.0, 0.0);
    v
}

fn mat(n: usize, entries: &[(f64, f64)]) -> CMat {
    CMat::from_row_iterator(n, n, entries.iter().map(|&(re, im)| c(re, im)))
}

fn real_mat(n: usize, entries: &[f64]) -> CMat {
    CMat::from_row_iterator(n, n, entries.iter().map(|&re| c(re, 0.0)))
}

fn complete(first: &[CMat]) -> Vec<CMat> {
    let n = first[0].nrows();
    let rest = first.iter().fold(CMat::identity(n, n), |acc, p| acc - p);
    let mut all = first.to_vec();
    all.push(rest);
    all
}

fn two_level(label: &str, p: CMat, prob: f64) -> Assignment {
    let q = CMat::identity(2, 2) - &p;
    let basis = Basis::from_projectors(label, vec![p, q]).expect("hard-coded projectors are valid");
    Assignment::new(basis, ProbabilityVector::new(vec![prob, 1.0 - prob]).expect("valid")).expect("sizes agree")
}

/// The four qubit bases {P, I − P} with probabilities ½, 5/12, 3/8, 9/16:
/// every three are consistent, all four are not.
pub fn dim2_example() -> AssignmentSet {
    let h = 0.5;
    let p1 = real_mat(2, &[1.0, 0.0, 0.0, 0.0]);
    let p2 = real_mat(2, &[h, -h, -h, h]);
    let p3 = mat(2, &[(h, 0.0), (0.0, -h), (0.0, h), (h, 0.0)]);
    let p4 = mat(2, &[(0.8, 0.0), (6.0 / 25.0, 8.0 / 25.0), (6.0 / 25.0, -8.0 / 25.0), (0.2, 0.0)]);
    let assignments = vec![
        two_level("B1", p1, 0.5),
        two_level("B2", p2, 5.0 / 12.0),
        two_level("B3", p3, 3.0 / 8.0),
        two_level("B4", p4, 9.0 / 16.0),
    ];
    AssignmentSet::new(2, assignments).expect("all qubit bases")
}

/// Bloch vector (⟨σx⟩, ⟨σy⟩, ⟨σz⟩) of a 2×2 Hermitian matrix.
pub fn bloch_vector(m: &CMat) -> [f64; 3] {
    [2.0 * m[(0, 1)].re, -2.0 * m[(0, 1)].im, (m[(0, 0)] - m[(1, 1)]).re]
}

/// The seven simple three-dimensional bases and the replacement basis Q.
#[derive(Debug, Clone, PartialEq)]
pub struct Dim3Bases {
    /// B1 … B7.
    pub bases: Vec<Basis>,
    /// {Q1, Q2, I − Q1 − Q2}.
    pub q: Basis,
}

/// The two fourth-basis projectors exactly as printed, without the ½
/// prefactor their siblings carry. They are not idempotent.
pub fn dim3_printed_p4() -> (CMat, CMat) {
    (
        real_mat(3, &[0., 0., 0., 0., 1., 1., 0., 1., 1.]),
        real_mat(3, &[0., 0., 0., 0., 1., -1., 0., -1., 1.]),
    )
}

fn polar(r: f64, turns_of_pi: f64) -> num_complex::Complex64 {
    num_complex::Complex64::from_polar(r, turns_of_pi * PI)
}

/// The projector Q1.
pub fn q1() -> CMat {
    let s6 = 6f64.sqrt();
    let s2 = 2f64.sqrt();
    let s3 = 3f64.sqrt();
    CMat::from_row_slice(
        3,
        3,
        &[
            c(1.0 / 3.0, 0.0),
            polar(1.0 / s6, 7.0 / 12.0),
            polar(1.0 / (3.0 * s2), 1.0 / 3.0),
            polar(1.0 / s6, -7.0 / 12.0),
            c(0.5, 0.0),
            polar(1.0 / (2.0 * s3), -0.25),
            polar(1.0 / (3.0 * s2), -1.0 / 3.0),
            polar(1.0 / (2.0 * s3), 0.25),
            c(1.0 / 6.0, 0.0),
        ],
    )
}

/// The projector Q2.
pub fn q2() -> CMat {
    let s6 = 6f64.sqrt();
    let s2 = 2f64.sqrt();
    let s3 = 3f64.sqrt();
    let m = CMat::from_row_slice(
        3,
        3,
        &[
            c(0.5, 0.0),
            polar(1.0 / s6, -0.75),
            polar(1.0 / s2, -1.0 / 3.0),
            polar(1.0 / s6, 0.75),
            c(1.0 / 3.0, 0.0),
            polar(1.0 / s3, 5.0 / 12.0),
            polar(1.0 / s2, 1.0 / 3.0),
            polar(1.0 / s3, -5.0 / 12.0),
            c(1.0, 0.0),
        ],
    );
    m * c(6.0 / 11.0, 0.0)
}

/// The eight three-dimensional bases, with the fourth basis normalized.
pub fn dim3_bases() -> Dim3Bases {
    let h = 0.5;
    let pairs_of_first_two: [[CMat; 2]; 7] = [
        [real_mat(3, &[1., 0., 0., 0., 0., 0., 0., 0., 0.]), real_mat(3, &[0., 0., 0., 0., 1., 0., 0., 0., 0.])],
        [real_mat(3, &[h, h, 0., h, h, 0., 0., 0., 0.]), real_mat(3, &[h, -h, 0., -h, h, 0., 0., 0., 0.])],
        [real_mat(3, &[h, 0., h, 0., 0., 0., h, 0., h]), real_mat(3, &[h, 0., -h, 0., 0., 0., -h, 0., h])],
        {
            let (a, b) = dim3_printed_p4();
            [a * c(h, 0.0), b * c(h, 0.0)]
        },
        [
            mat(3, &[(h, 0.), (0., -h), (0., 0.), (0., h), (h, 0.), (0., 0.), (0., 0.), (0., 0.), (0., 0.)]),
            mat(3, &[(h, 0.), (0., h), (0., 0.), (0., -h), (h, 0.), (0., 0.), (0., 0.), (0., 0.), (0., 0.)]),
        ],
        [
            mat(3, &[(h, 0.), (0., 0.), (0., h), (0., 0.), (0., 0.), (0., 0.), (0., -h), (0., 0.), (h, 0.)]),
            mat(3, &[(h, 0.), (0., 0.), (0., -h), (0., 0.), (0., 0.), (0., 0.), (0., h), (0., 0.), (h, 0.)]),
        ],
        [
            mat(3, &[(0., 0.), (0., 0.), (0., 0.), (0., 0.), (h, 0.), (0., -h), (0., 0.), (0., h), (h, 0.)]),
            mat(3, &[(0., 0.), (0., 0.), (0., 0.), (0., 0.), (h, 0.), (0., h), (0., 0.), (0., -h), (h, 0.)]),
        ],
    ];
    let bases = pairs_of_first_two
        .iter()
        .enumerate()
        .map(|(k, first)| Basis::from_projectors(format!("B{}", k + 1), complete(first)).expect("valid basis"))
        .collect();
    let q = Basis::from_projectors("Q", complete(&[q1(), q2()])).expect("valid basis");
    Dim3Bases { bases, q }
}

/// The real-part plane basis for (i, j): (e_i ± e_j)/√2 at positions i and j,
/// e_k elsewhere.
pub fn real_plane_basis(n: usize, i: usize, j: usize) -> Basis {
    let mut vs: Vec<CVec> = (0..n).map(|k| unit(n, k)).collect();
    let s = c(FRAC_1_SQRT_2, 0.0);
    vs[i] = (unit(n, i) + unit(n, j)) * s;
    vs[j] = (unit(n, i) - unit(n, j)) * s;
    Basis::from_vectors(real_label(i, j), vs).expect("orthonormal by construction")
}

/// The imaginary-part plane basis for (i, j): (e_i ± i·e_j)/√2 at positions
/// i and j, e_k elsewhere.
pub fn imag_plane_basis(n: usize, i: usize, j: usize) -> Basis {
    let mut vs: Vec<CVec> = (0..n).map(|k| unit(n, k)).collect();
    let s = c(FRAC_1_SQRT_2, 0.0);
    vs[i] = (unit(n, i) + unit(n, j) * c(0.0, 1.0)) * s;
    vs[j] = (unit(n, i) - unit(n, j) * c(0.0, 1.0)) * s;
    Basis::from_vectors(imag_label(i, j), vs).expect("orthonormal by construction")
}

/// Computational basis, then the real-part plane bases, then the
/// imaginary-part plane bases, pairs in lexicographic order: n² − n + 1 bases.
pub fn standard_family(n: usize) -> Result<Vec<Basis>> {
    if n < 2 {
        return Err(Error::DimensionTooSmall { n, min: 2 });
    }
    let p = pairs(n);
    let mut family = vec![Basis::computational(n).with_label(COMPUTATIONAL_LABEL)];
    family.extend(p.iter().map(|&(i, j)| real_plane_basis(n, i, j)));
    family.extend(p.iter().map(|&(i, j)| imag_plane_basis(n, i, j)));
    Ok(family)
}

/// The Fourier basis f_k = Σ_j e^{2πi jk/n} e_j / √n.
pub fn dft_basis(n: usize) -> Basis {
    let s = 1.0 / (n as f64).sqrt();
    let vs = (0..n)
        .map(|k| CVec::from_fn(n, |j, _| polar(s, 2.0 * (j * k) as f64 / n as f64)))
        .collect();
    Basis::from_vectors("dft", vs).expect("Fourier basis is orthonormal")
}

/// Haar-random unitary: QR of a complex Gaussian matrix with the phases of
/// R's diagonal moved into Q.
pub fn random_unitary<R: Rng + ?Sized>(n: usize, rng: &mut R) -> CMat {
    let g = CMat::from_fn(n, n, |_, _| c(rng.sample(StandardNormal), rng.sample(StandardNormal)));
    let qr = g.qr();
    let mut q = qr.q();
    let r = qr.r();
    for k in 0..n {
        let d = r[(k, k)];
        let phase = if d.norm() > 0.0 { d / d.norm() } else { c(1.0, 0.0) };
        for i in 0..n {
            q[(i, k)] *= phase;
        }
    }
    q
}

/// A Haar-random orthonormal basis.
pub fn random_basis<R: Rng + ?Sized>(n: usize, label: impl Into<String>, rng: &mut R) -> Basis {
    Basis::from_unitary(label, &random_unitary(n, rng)).expect("QR factor is unitary")
}

/// Born probabilities of `rho` in each basis, clipped to [0, 1] and
/// renormalized.
pub fn forward_assignments(rho: &DensityMatrix, bases: &[Basis]) -> Result<AssignmentSet> {
    let n = rho.dim();
    let mut out = Vec::with_capacity(bases.len());
    for (index, b) in bases.iter().enumerate() {
        if b.dim() != n {
            return Err(Error::DimensionMismatch {
                index,
                expected: n,
                found: b.dim(),
            });
        }
        let raw: Vec<f64> = rho.probabilities(b).into_iter().map(|p| p.clamp(0.0, 1.0)).collect();
        let sum: f64 = raw.iter().sum();
        let probs = raw.into_iter().map(|p| p / sum).collect();
        out.push(Assignment::new(b.clone(), ProbabilityVector::new(probs)?)?);
    }
    AssignmentSet::new(n, out)
}

/// ρ = A²/tr(A²).
pub fn state_from_hermitian(a: &CMat) -> Result<DensityMatrix> {
    let sq = a * a;
    let trace = sq.trace().re;
    if trace.is_nan() || trace <= 0.0 {
        return Err(Error::InvalidArgument("A² has zero trace".into()));
    }
    DensityMatrix::new(sq * c(1.0 / trace, 0.0))
}

/// Random Hermitian matrix with independent standard Gaussian entries.
pub fn random_hermitian<R: Rng + ?Sized>(n: usize, rng: &mut R) -> CMat {
    let g = CMat::from_fn(n, n, |_, _| c(rng.sample(StandardNormal), rng.sample(StandardNormal)));
    (&g + g.adjoint()) * c(0.5, 0.0)
}

/// Minimum eigenvalue required of an interior state.
pub fn interior_floor(n: usize) -> f64 {
    0.01 / n as f64
}

/// Seeded state A²/tr(A²) with λ_min ≥ 0.01/n.
pub fn interior_state(n: usize, seed: u64) -> Result<DensityMatrix> {
    if n < 2 {
        return Err(Error::DimensionTooSmall { n, min: 2 });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..100 {
        let rho = state_from_hermitian(&random_hermitian(n, &mut rng))?;
        if rho.min_eigenvalue() >= interior_floor(n) {
            return Ok(rho);
        }
    }
    Err(Error::ConstructionFailed(format!(
        "no interior state with λ_min ≥ {} after 100 draws",
        interior_floor(n)
    )))
}

/// Margin required of every leave-one-out witness.
pub const WITNESS_MARGIN: f64 = 1e-4;
/// Residual required of the full perturbed system.
pub const RESIDUAL_MARGIN: f64 = 1e-6;
const BISECTION_STEPS: usize = 60;
const Q_ATTEMPTS: usize = 100;

/// Assignments of size R_n of which every R_n − 1 are consistent and the
/// whole family is not.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimalCounterexample {
    pub assignments: AssignmentSet,
    /// The interior state the probabilities were computed from before the perturbation.
    pub base_state: DensityMatrix,
    /// (assignment index, outcome index) of the moved probability.
    pub perturbed_index: (usize, usize),
    /// Signed offset added to that entry (and subtracted from the last outcome of the block).
    pub perturbation: f64,
}

/// Number of independent directions in which the data of `bases` can be
/// moved so that every leave-one-out subfamily stays linearly solvable while
/// the whole family does not.
///
/// This is the dimension of the left nullspace of the full coefficient matrix
/// modulo the sum of the left nullspaces of the leave-one-out matrices.
pub fn admissible_perturbation_dim(bases: &[Basis]) -> Result<usize> {
    let a = basis_system_matrix(bases)?;
    let n = bases[0].dim();
    let rows = a.nrows();
    let full = left_nullspace(&a)?.len();
    let mut relations: Vec<Vec<f64>> = Vec::new();
    for l in 0..bases.len() {
        let skip = block_row_range(n, l);
        let keep: Vec<usize> = (0..rows).filter(|r| !skip.contains(r)).collect();
        for u in left_nullspace(&a.select_rows(&keep))? {
            let mut embedded = vec![0.0; rows];
            for (&r, &val) in keep.iter().zip(u.iter()) {
                embedded[r] = val;
            }
            relations.push(embedded);
        }
    }
    if relations.is_empty() {
        return Ok(full);
    }
    let stacked = DMatrix::from_fn(relations.len(), rows, |i, j| relations[i][j]);
    Ok(full - numerical_rank(&stacked)?.rank)
}

/// Leave-one-out families of the optimal-counterexample family: the standard
/// family with its last imaginary-part basis replaced by `q`.
fn replaced_family(n: usize, q: Basis) -> Result<Vec<Basis>> {
    let mut family = standard_family(n)?;
    family.pop();
    family.push(q);
    Ok(family)
}

/// Whether dropping any basis other than the last still leaves a system of
/// rank n². Dropping the last one (Q) always leaves rank n² − 1.
fn leave_one_out_full_rank(family: &[Basis]) -> Result<bool> {
    let n = family[0].dim();
    for l in 0..family.len() - 1 {
        let rest: Vec<Basis> = family
            .iter()
            .enumerate()
            .filter(|&(k, _)| k != l)
            .map(|(_, b)| b.clone())
            .collect();
        if numerical_rank(&basis_system_matrix(&rest)?)?.rank < n * n {
            return Ok(false);
        }
    }
    Ok(true)
}

fn replacement_basis(n: usize, seed: u64) -> Result<Basis> {
    if n == 3 {
        return Ok(dim3_bases().q);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    for _ in 0..Q_ATTEMPTS {
        let q = random_basis(n, "Q", &mut rng);
        if leave_one_out_full_rank(&replaced_family(n, q.clone())?)? {
            return Ok(q);
        }
    }
    Err(Error::ConstructionFailed(format!(
        "no replacement basis with full-rank leave-one-out systems after {Q_ATTEMPTS} draws"
    )))
}

fn perturbed(base: &AssignmentSet, block: usize, delta: f64) -> Result<AssignmentSet> {
    let mut assignments = base.assignments().to_vec();
    let asg = &assignments[block];
    let mut probs = asg.probs().values().to_vec();
    let last = probs.len() - 1;
    probs[1] += delta;
    probs[last] -= delta;
    assignments[block] = Assignment::new(asg.basis().clone(), ProbabilityVector::new(probs)?)?;
    AssignmentSet::new(base.dimension(), assignments)
}

/// First leave-one-out subfamily lacking a witness with the required margin.
fn first_bad_subset(f: &AssignmentSet) -> Result<Option<(usize, String)>> {
    let all: Vec<usize> = (0..f.len()).collect();
    for l in 0..f.len() {
        let keep: Vec<usize> = all.iter().copied().filter(|&k| k != l).collect();
        let report = check_consistency(&f.subset(&keep)?, DEFAULT_BUDGET)?;
        if !report.verdict.is_consistent() || report.psd_margin < WITNESS_MARGIN {
            let why = format!(
                "without assignment {l}: verdict {}, residual {:.3e}, λ_min {:.3e}",
                report.verdict.as_str(),
                report.residual,
                report.psd_margin
            );
            return Ok(Some((l, why)));
        }
    }
    Ok(None)
}

/// Builds a size-R_n family whose proper subfamilies are consistent while the
/// whole family is not.
///
/// The family is the standard family with its last imaginary-part basis
/// replaced by a basis Q (the fixed three-dimensional Q for n = 3, a seeded
/// random basis otherwise). Probabilities are computed from a seeded interior
/// state, then the second outcome of the Q block is moved by δ, the last
/// outcome absorbing the change. δ is chosen by bisection as the largest
/// offset for which every leave-one-out subfamily keeps a witness with
/// λ_min ≥ [`WITNESS_MARGIN`].
///
/// When no positive δ keeps the subfamilies consistent, the error reports the
/// dimension of the admissible perturbation space
/// ([`admissible_perturbation_dim`]) and the subfamily that breaks.
pub fn optimal_counterexample(n: usize, seed: u64) -> Result<OptimalCounterexample> {
    if n < 3 {
        return Err(Error::DimensionTooSmall { n, min: 3 });
    }
    let q = replacement_basis(n, seed)?;
    let family = replaced_family(n, q)?;
    debug_assert_eq!(family.len(), consistency_number(n)?);
    let rho = interior_state(n, seed)?;
    let base = forward_assignments(&rho, &family)?;
    let block = family.len() - 1;
    let q_probs = base.assignments()[block].probs().values().to_vec();
    let delta_max = (1.0 - q_probs[1]).min(q_probs[n - 1]);

    let mut lo = 0.0;
    let mut hi = delta_max;
    let mut last_failure = None;
    if first_bad_subset(&perturbed(&base, block, hi)?)?.is_none() {
        lo = hi;
    } else {
        for _ in 0..BISECTION_STEPS {
            let mid = 0.5 * (lo + hi);
            match first_bad_subset(&perturbed(&base, block, mid)?)? {
                None => lo = mid,
                Some(fail) => {
                    hi = mid;
                    last_failure = Some(fail);
                }
            }
        }
    }
    if lo <= 0.0 {
        let admissible = admissible_perturbation_dim(&family)?;
        let (_, why) = last_failure.unwrap_or((0, "no failure recorded".into()));
        return Err(Error::ConstructionFailed(format!(
            "no admissible offset after {BISECTION_STEPS} bisection steps (smallest tried {hi:.3e}); \
             admissible perturbation space has dimension {admissible}; {why}"
        )));
    }
    let assignments = perturbed(&base, block, lo)?;
    let full = check_consistency(&assignments, DEFAULT_BUDGET)?;
    if full.residual < RESIDUAL_MARGIN || full.verdict.is_consistent() {
        let admissible = admissible_perturbation_dim(&family)?;
        return Err(Error::ConstructionFailed(format!(
            "offset {lo:.3e} keeps subfamilies consistent but the full residual is only {:.3e} ({}); \
             admissible perturbation space has dimension {admissible}",
            full.residual,
            full.verdict.as_str()
        )));
    }
    Ok(OptimalCounterexample {
        assignments,
        base_state: rho,
        perturbed_index: (block, 1),
        perturbation: lo,
    })
}

/// Whether every principal minor of a Hermitian matrix is strictly positive.
pub fn principal_minors_positive(m: &CMat) -> bool {
    let n = m.nrows();
    (1u32..(1 << n)).all(|mask| {
        let idx: Vec<usize> = (0..n).filter(|&i| mask & (1 << i) != 0).collect();
        let sub = CMat::from_fn(idx.len(), idx.len(), |r, s| m[(idx[r], idx[s])]);
        sub.determinant().re > 0.0
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn standard_family_sizes() {
        assert_eq!(standard_family(3).unwrap().len(), 7);
        assert_eq!(standard_family(4).unwrap().len(), 13);
        assert_eq!(standard_family(2).unwrap().len(), 3);
        assert!(standard_family(1).is_err());
    }

    #[test]
    fn bloch_vector_of_fourth_qubit_projector() {
        let f = dim2_example();
        let b = bloch_vector(&f.assignments()[3].basis().projectors()[0]);
        assert!((b[0] - 12.0 / 25.0).abs() < 1e-15);
        assert!((b[1] + 16.0 / 25.0).abs() < 1e-15);
        assert!((b[2] - 3.0 / 5.0).abs() < 1e-15);
    }

    #[test]
    fn identity_gives_maximally_mixed() {
        let rho = state_from_hermitian(&CMat::identity(4, 4)).unwrap();
        assert!((rho.matrix() - CMat::identity(4, 4) * c(0.25, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn interior_state_respects_floor() {
        for seed in 0..20 {
            let rho = interior_state(4, seed).unwrap();
            assert!(rho.min_eigenvalue() >= interior_floor(4));
            assert!((rho.matrix().trace().re - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn random_unitary_is_unitary() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let u = random_unitary(5, &mut rng);
        assert!((u.adjoint() * &u - CMat::identity(5, 5)).norm() < 1e-12);
    }

    #[test]
    fn forward_probabilities_of_diagonal_state() {
        let p = [0.2, 0.3, 0.5];
        let rho = DensityMatrix::new(CMat::from_diagonal(&CVec::from_iterator(3, p.iter().map(|&x| c(x, 0.0))))).unwrap();
        let f = forward_assignments(&rho, &[Basis::computational(3)]).unwrap();
        for (a, b) in f.assignments()[0].probs().values().iter().zip(p) {
            assert!((a - b).abs() < 1e-15);
        }
    }
}
