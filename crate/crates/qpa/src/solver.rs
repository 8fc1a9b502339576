//! Consistency equations, the consistency decision, rank chains, pair
//! structure and subset audits.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{check_permutation, pairs, AssignmentSet, Basis, DensityMatrix, StateParams};
use crate::numerics::{hermitian_eigen, least_squares_solve, numerical_rank, psd_check, RankProfile, RealLinearSystem};
use crate::{c, tol, CMat};

/// Iteration budget of the ascent used for underdetermined systems.
pub const DEFAULT_BUDGET: usize = 5000;
/// Number of starting points of the ascent.
pub const RESTARTS: usize = 8;
const ASCENT_SEED: u64 = 0x0a5c_e17d;
const PATIENCE: usize = 200;

/// Coefficients of the real linear form ρ ↦ tr(ρP) in the parameter order of
/// [`crate::model::param_labels`].
pub fn trace_row(p: &CMat) -> Vec<f64> {
    let n = p.nrows();
    let pr = pairs(n);
    let mut row = Vec::with_capacity(n * n);
    row.extend((0..n).map(|j| p[(j, j)].re));
    row.extend(pr.iter().map(|&(j, k)| p[(k, j)].re + p[(j, k)].re));
    row.extend(pr.iter().map(|&(j, k)| p[(j, k)].im - p[(k, j)].im));
    row
}

fn block_rows(bases: &[&Basis], n: usize) -> DMatrix<f64> {
    let rows = 1 + n * bases.len();
    let mut a = DMatrix::zeros(rows, n * n);
    for j in 0..n {
        a[(0, j)] = 1.0;
    }
    let mut r = 1;
    for b in bases {
        for p in b.projectors() {
            for (col, v) in trace_row(p).into_iter().enumerate() {
                a[(r, col)] = v;
            }
            r += 1;
        }
    }
    a
}

/// One trace row followed by n rows per assignment.
pub fn build_system(f: &AssignmentSet) -> Result<RealLinearSystem> {
    if f.is_empty() {
        return Err(Error::EmptyFamily);
    }
    let n = f.dimension();
    let bases: Vec<&Basis> = f.assignments().iter().map(|a| a.basis()).collect();
    let a = block_rows(&bases, n);
    let mut b = DVector::zeros(a.nrows());
    b[0] = 1.0;
    let mut r = 1;
    for asg in f.assignments() {
        for &p in asg.probs().values() {
            b[r] = p;
            r += 1;
        }
    }
    RealLinearSystem::new(n, a, b)
}

/// Rows of the system that belong to assignment `k` (row 0 is the trace row).
pub fn block_row_range(n: usize, k: usize) -> std::ops::Range<usize> {
    1 + n * k..1 + n * (k + 1)
}

/// Coefficient matrix of a list of bases (trace row included).
pub fn basis_system_matrix(bases: &[Basis]) -> Result<DMatrix<f64>> {
    let n = bases.first().ok_or(Error::EmptyFamily)?.dim();
    for (index, b) in bases.iter().enumerate() {
        if b.dim() != n {
            return Err(Error::DimensionMismatch {
                index,
                expected: n,
                found: b.dim(),
            });
        }
    }
    let refs: Vec<&Basis> = bases.iter().collect();
    Ok(block_rows(&refs, n))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Verdict {
    Consistent,
    LinearlyInfeasible,
    PsdInfeasible,
    Undecided,
}

impl Verdict {
    pub fn is_consistent(self) -> bool {
        self == Verdict::Consistent
    }

    pub fn is_infeasible(self) -> bool {
        matches!(self, Verdict::LinearlyInfeasible | Verdict::PsdInfeasible)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Consistent => "Consistent",
            Verdict::LinearlyInfeasible => "LinearlyInfeasible",
            Verdict::PsdInfeasible => "PsdInfeasible",
            Verdict::Undecided => "Undecided",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConsistencyReport {
    pub verdict: Verdict,
    /// Present exactly when the verdict is `Consistent`.
    pub witness: Option<DensityMatrix>,
    pub rank_profile: RankProfile,
    /// ‖A·x − b‖₂ of the minimum-norm least-squares solution.
    pub residual: f64,
    /// Best λ_min found over the affine solution set.
    pub psd_margin: f64,
    pub iterations_used: usize,
    pub nullspace_dim: usize,
    /// Certified upper bound on max λ_min, when one was computed.
    pub upper_bound: Option<f64>,
}

fn params_matrix(n: usize, v: &DVector<f64>) -> CMat {
    StateParams::from_vector(n, v.as_slice())
        .expect("vector has n² entries")
        .to_matrix()
}

fn normalized_witness(m: &CMat) -> Option<DensityMatrix> {
    let trace = m.trace().re;
    if trace.is_nan() || trace <= 0.0 {
        return None;
    }
    DensityMatrix::new(m * c(1.0 / trace, 0.0)).ok()
}

/// Decides whether one density matrix reproduces every assignment in `f`.
///
/// The system is solved in the least-squares sense first. A residual above
/// `tol::RES` is linear infeasibility. A unique solution is tested for
/// positivity directly. Otherwise λ_min is maximized over the affine
/// solution set by projected subgradient ascent, and infeasibility is only
/// reported when a dual certificate bounds the maximum below `−10·tol::PSD`.
pub fn check_consistency(f: &AssignmentSet, budget: usize) -> Result<ConsistencyReport> {
    let sys = build_system(f)?;
    let n = f.dimension();
    let ls = least_squares_solve(&sys)?;
    let rho0 = params_matrix(n, &ls.solution);
    let base = ConsistencyReport {
        verdict: Verdict::Undecided,
        witness: None,
        rank_profile: ls.rank_profile.clone(),
        residual: ls.residual_norm,
        psd_margin: hermitian_eigen(&rho0)?.min(),
        iterations_used: 0,
        nullspace_dim: ls.nullspace_dim,
        upper_bound: None,
    };
    if ls.residual_norm > tol::RES {
        return Ok(ConsistencyReport {
            verdict: Verdict::LinearlyInfeasible,
            ..base
        });
    }
    if ls.nullspace_dim == 0 {
        let verdict = psd_check(&rho0, tol::PSD)?;
        let witness = if verdict.is_psd() { normalized_witness(&rho0) } else { None };
        return Ok(ConsistencyReport {
            verdict: if witness.is_some() {
                Verdict::Consistent
            } else {
                Verdict::PsdInfeasible
            },
            witness,
            upper_bound: Some(base.psd_margin),
            ..base
        });
    }

    let dirs: Vec<CMat> = ls.nullspace_basis.iter().map(|v| params_matrix(n, v)).collect();
    let ascent = maximize_min_eigenvalue(&rho0, &dirs, budget);
    if ascent.best_value >= -tol::PSD {
        if let Some(w) = normalized_witness(&ascent.best_matrix) {
            return Ok(ConsistencyReport {
                verdict: Verdict::Consistent,
                witness: Some(w),
                psd_margin: ascent.best_value,
                iterations_used: ascent.iterations,
                ..base
            });
        }
    }
    let bound = dual_upper_bound(&rho0, &dirs, &ascent.dual);
    let verdict = if bound < -10.0 * tol::PSD {
        Verdict::PsdInfeasible
    } else {
        Verdict::Undecided
    };
    Ok(ConsistencyReport {
        verdict,
        psd_margin: ascent.best_value,
        iterations_used: ascent.iterations,
        upper_bound: Some(bound),
        ..base
    })
}

struct AscentResult {
    best_value: f64,
    best_matrix: CMat,
    iterations: usize,
    /// Step-weighted average of minimal eigenprojectors from the best run.
    dual: CMat,
}

fn combine(rho0: &CMat, dirs: &[CMat], t: &[f64]) -> CMat {
    let mut m = rho0.clone();
    for (d, &tl) in dirs.iter().zip(t) {
        m += d * c(tl, 0.0);
    }
    m
}

/// Projected subgradient ascent on t ↦ λ_min(ρ0 + Σ t_l N_l). The map is
/// concave; a subgradient is (v†N_l v)_l for a unit minimal eigenvector v.
fn maximize_min_eigenvalue(rho0: &CMat, dirs: &[CMat], budget: usize) -> AscentResult {
    let n = rho0.nrows();
    let d = dirs.len();
    let per_start = (budget / RESTARTS).max(1);
    let mut rng = ChaCha8Rng::seed_from_u64(ASCENT_SEED);
    let mut overall: Option<AscentResult> = None;
    let mut iterations = 0;

    for start in 0..RESTARTS {
        let mut t: Vec<f64> = if start == 0 {
            vec![0.0; d]
        } else {
            (0..d).map(|_| 0.3 * rng.sample::<f64, _>(StandardNormal) / (d as f64).sqrt()).collect()
        };
        let mut best_value = f64::NEG_INFINITY;
        let mut best_t = t.clone();
        let mut since_improvement = 0;
        let mut dual = CMat::zeros(n, n);
        let mut weight = 0.0;

        for k in 1..=per_start {
            iterations += 1;
            let m = combine(rho0, dirs, &t);
            let eig = hermitian_eigen(&m).expect("combination is Hermitian");
            let value = eig.min();
            if value > best_value + 1e-13 {
                best_value = value;
                best_t.clone_from(&t);
                since_improvement = 0;
            } else {
                since_improvement += 1;
            }
            let v = eig.vectors.column(0).into_owned();
            let g: Vec<f64> = dirs.iter().map(|nl| (v.adjoint() * nl * &v)[(0, 0)].re).collect();
            let gnorm = g.iter().map(|x| x * x).sum::<f64>().sqrt();
            let step = 0.1 / (k as f64).sqrt();
            dual += (&v * v.adjoint()) * c(step, 0.0);
            weight += step;
            if gnorm < 1e-14 || (since_improvement > PATIENCE && best_value >= -tol::PSD) {
                break;
            }
            for (tl, gl) in t.iter_mut().zip(&g) {
                *tl += step * gl / gnorm;
            }
        }
        if weight > 0.0 {
            dual /= c(weight, 0.0);
        }
        let run = AscentResult {
            best_value,
            best_matrix: combine(rho0, dirs, &best_t),
            iterations: 0,
            dual,
        };
        let better = overall.as_ref().is_none_or(|o| run.best_value > o.best_value);
        if better {
            overall = Some(run);
        }
        if overall.as_ref().is_some_and(|o| o.best_value >= -tol::PSD) {
            break;
        }
    }
    let mut result = overall.expect("at least one start");
    result.iterations = iterations;
    result
}

/// Weak-duality bound: any PSD unit-trace Z with tr(Z N_l) = 0 for all l
/// satisfies max_t λ_min(ρ0 + Σ t_l N_l) ≤ tr(Z ρ0).
fn dual_upper_bound(rho0: &CMat, dirs: &[CMat], z0: &CMat) -> f64 {
    let n = rho0.nrows();
    let d = dirs.len();
    let inner = |a: &CMat, b: &CMat| (a.adjoint() * b).trace().re;
    let gram = DMatrix::from_fn(d, d, |i, j| inner(&dirs[i], &dirs[j]));
    let rhs = DVector::from_iterator(d, dirs.iter().map(|nl| inner(nl, z0)));
    let coeffs = match gram.clone().cholesky() {
        Some(ch) => ch.solve(&rhs),
        None => gram.pseudo_inverse(1e-12).map(|p| p * rhs).unwrap_or_else(|_| DVector::zeros(d)),
    };
    let mut z = z0.clone();
    for (nl, &cl) in dirs.iter().zip(coeffs.iter()) {
        z -= nl * c(cl, 0.0);
    }
    let z = (&z + z.adjoint()) * c(0.5, 0.0);
    let mu = (-hermitian_eigen(&z).map(|e| e.min()).unwrap_or(0.0)).max(0.0);
    let mut zz = z;
    for i in 0..n {
        zz[(i, i)] += c(mu, 0.0);
    }
    zz /= c(1.0 + n as f64 * mu, 0.0);
    inner(&zz, rho0)
}

/// Cumulative numerical ranks after adding each assignment in `order`.
pub fn rank_chain(f: &AssignmentSet, order: &[usize]) -> Result<Vec<usize>> {
    check_permutation(order, f.len())?;
    let sys = build_system(f)?;
    let n = f.dimension();
    let mut rows = vec![0];
    let mut chain = Vec::with_capacity(order.len());
    for &k in order {
        rows.extend(block_row_range(n, k));
        chain.push(numerical_rank(&sys.matrix().select_rows(&rows))?.rank);
    }
    Ok(chain)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PairKind {
    SamePermuted,
    PlanePair,
    GeneralPosition,
}

/// The coordinate plane shared by two vectors of each basis.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PlaneIndices {
    /// Positions (r, s) in the second basis.
    pub primed: (usize, usize),
    /// Positions (j_r, j_s) in the first basis, ascending.
    pub base: (usize, usize),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PairStructure {
    pub kind: PairKind,
    pub plane_indices: Option<PlaneIndices>,
    /// (index in the second basis, matching index in the first basis).
    pub permutation: Option<Vec<(usize, usize)>>,
    /// rank(B ∪ B′) − n.
    pub rank_increment: usize,
}

fn overlaps(b: &Basis, bp: &Basis) -> Vec<Vec<f64>> {
    // abs[i][j] = |⟨ε_i|β_j⟩|
    b.vectors()
        .iter()
        .map(|e| bp.vectors().iter().map(|beta| e.dotc(beta).norm()).collect())
        .collect()
}

/// Matches each listed second-basis index to a distinct first-basis index
/// outside `excluded` with unit overlap.
fn match_remaining(abs: &[Vec<f64>], cols: &[usize], excluded: &[usize]) -> Option<Vec<(usize, usize)>> {
    let n = abs.len();
    let mut used = vec![false; n];
    for &e in excluded {
        used[e] = true;
    }
    let mut out = Vec::with_capacity(cols.len());
    for &j in cols {
        let hit = (0..n).find(|&i| !used[i] && (abs[i][j] * abs[i][j] - 1.0).abs() < 1e-8)?;
        used[hit] = true;
        out.push((j, hit));
    }
    Some(out)
}

/// Classifies a pair of bases by the rank their joint system adds beyond n.
pub fn analyze_pair(b: &Basis, bp: &Basis) -> Result<PairStructure> {
    let n = b.dim();
    if bp.dim() != n {
        return Err(Error::DimensionMismatch {
            index: 1,
            expected: n,
            found: bp.dim(),
        });
    }
    let joint = basis_system_matrix(&[b.clone(), bp.clone()])?;
    let rank_increment = numerical_rank(&joint)?.rank.saturating_sub(n);
    let abs = overlaps(b, bp);
    let general = PairStructure {
        kind: PairKind::GeneralPosition,
        plane_indices: None,
        permutation: None,
        rank_increment,
    };
    match rank_increment {
        0 => {
            let all: Vec<usize> = (0..n).collect();
            Ok(match match_remaining(&abs, &all, &[]) {
                Some(perm) => PairStructure {
                    kind: PairKind::SamePermuted,
                    permutation: Some(perm),
                    ..general
                },
                None => general,
            })
        }
        1 => {
            let support = |j: usize| -> Vec<usize> { (0..n).filter(|&i| abs[i][j] > tol::ORTH).collect() };
            for r in 0..n {
                let sr = support(r);
                if sr.len() != 2 {
                    continue;
                }
                for s in r + 1..n {
                    if support(s) != sr {
                        continue;
                    }
                    let rest: Vec<usize> = (0..n).filter(|&j| j != r && j != s).collect();
                    if let Some(perm) = match_remaining(&abs, &rest, &sr) {
                        return Ok(PairStructure {
                            kind: PairKind::PlanePair,
                            plane_indices: Some(PlaneIndices {
                                primed: (r, s),
                                base: (sr[0], sr[1]),
                            }),
                            permutation: Some(perm),
                            rank_increment,
                        });
                    }
                }
            }
            Ok(general)
        }
        _ => Ok(general),
    }
}

/// The smallest r such that r-wise consistency implies consistency.
pub fn consistency_number(n: usize) -> Result<usize> {
    match n {
        0 | 1 => Err(Error::DimensionTooSmall { n, min: 2 }),
        2 => Ok(4),
        _ => Ok(n * n - n + 1),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum AuditOutcome {
    AllConsistent { subsets_checked: usize },
    FirstFailure { subset: Vec<usize>, report: Box<ConsistencyReport> },
}

impl AuditOutcome {
    pub fn is_all_consistent(&self) -> bool {
        matches!(self, AuditOutcome::AllConsistent { .. })
    }
}

/// A failing subset and its report.
type Failure = (Vec<usize>, ConsistencyReport);

/// Advances `idx` to the next r-combination of 0..m in lexicographic order.
fn next_combination(idx: &mut [usize], m: usize) -> bool {
    let r = idx.len();
    let mut i = r;
    while i > 0 {
        i -= 1;
        if idx[i] < m - r + i {
            idx[i] += 1;
            for j in i + 1..r {
                idx[j] = idx[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

/// Checks every subset of size exactly `r`, in lexicographic order, and
/// reports the first one that is not certified consistent.
///
/// Subsets are evaluated in parallel chunks; the reported failure is the
/// lexicographically first regardless of scheduling.
pub fn audit_subsets(f: &AssignmentSet, r: usize, budget: usize) -> Result<AuditOutcome> {
    let m = f.len();
    if r == 0 || r > m {
        return Err(Error::InvalidArgument(format!("subset size {r} outside 1..={m}")));
    }
    const CHUNK: usize = 1024;
    let mut idx: Vec<usize> = (0..r).collect();
    let mut checked = 0;
    let mut exhausted = false;
    while !exhausted {
        let mut chunk = Vec::with_capacity(CHUNK);
        while chunk.len() < CHUNK {
            chunk.push(idx.clone());
            if !next_combination(&mut idx, m) {
                exhausted = true;
                break;
            }
        }
        let results: Vec<Result<Option<Failure>>> = chunk
            .par_iter()
            .map(|subset| {
                let report = check_consistency(&f.subset(subset)?, budget)?;
                Ok((!report.verdict.is_consistent()).then(|| (subset.clone(), report)))
            })
            .collect();
        for res in results {
            checked += 1;
            if let Some((subset, report)) = res? {
                return Ok(AuditOutcome::FirstFailure {
                    subset,
                    report: Box::new(report),
                });
            }
        }
    }
    Ok(AuditOutcome::AllConsistent {
        subsets_checked: checked,
    })
}

/// Largest |tr(ρP) − p| over all assignments.
pub fn max_probability_error(rho: &DensityMatrix, f: &AssignmentSet) -> f64 {
    f.assignments()
        .iter()
        .flat_map(|a| {
            a.basis()
                .projectors()
                .iter()
                .zip(a.probs().values())
                .map(|(p, &q)| (rho.expectation(p) - q).abs())
        })
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Assignment, ProbabilityVector};

    #[test]
    fn combinations_are_lexicographic() {
        let mut idx = vec![0, 1];
        let mut all = vec![idx.clone()];
        while next_combination(&mut idx, 4) {
            all.push(idx.clone());
        }
        assert_eq!(all, vec![vec![0, 1], vec![0, 2], vec![0, 3], vec![1, 2], vec![1, 3], vec![2, 3]]);
    }

    #[test]
    fn single_computational_assignment() {
        let asg = Assignment::new(
            Basis::computational(3),
            ProbabilityVector::new(vec![0.2, 0.3, 0.5]).unwrap(),
        )
        .unwrap();
        let f = AssignmentSet::new(3, vec![asg]).unwrap();
        let sys = build_system(&f).unwrap();
        assert_eq!(sys.rows(), 4);
        assert_eq!(numerical_rank(sys.matrix()).unwrap().rank, 3);
        let report = check_consistency(&f, DEFAULT_BUDGET).unwrap();
        assert_eq!(report.verdict, Verdict::Consistent);
        let w = report.witness.unwrap();
        assert!(max_probability_error(&w, &f) < 1e-9);
    }

    #[test]
    fn empty_family_rejected() {
        let f = AssignmentSet::new(2, vec![]).unwrap();
        assert_eq!(build_system(&f), Err(Error::EmptyFamily));
    }

    #[test]
    fn consistency_numbers() {
        assert_eq!(consistency_number(2).unwrap(), 4);
        assert_eq!(consistency_number(3).unwrap(), 7);
        assert_eq!(consistency_number(5).unwrap(), 21);
        assert!(consistency_number(1).is_err());
    }

    #[test]
    fn rank_chain_rejects_bad_order() {
        let asg = Assignment::new(Basis::computational(2), ProbabilityVector::new(vec![0.5, 0.5]).unwrap()).unwrap();
        let f = AssignmentSet::new(2, vec![asg]).unwrap();
        assert!(rank_chain(&f, &[1]).is_err());
        assert_eq!(rank_chain(&f, &[0]).unwrap(), vec![2]);
    }
}
