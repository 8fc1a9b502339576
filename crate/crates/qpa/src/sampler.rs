//! Finite-shot measurement simulation, off-diagonal estimation,
//! linear-inversion tomography, purification and a (k, k) secret-sharing
//! demonstration built on the standard plane bases.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::generators::{imag_label, real_label, standard_family, COMPUTATIONAL_LABEL};
use crate::model::{pairs, Assignment, AssignmentSet, Basis, DensityMatrix, ProbabilityVector, StateParams};
use crate::numerics::{hermitian_eigen, least_squares_solve};
use crate::solver::build_system;
use crate::{c, CMat, CVec};

/// Outcome counts of repeated measurements in one basis.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct MeasurementRecord {
    pub basis_label: String,
    pub shots: u64,
    pub counts: Vec<u64>,
}

impl MeasurementRecord {
    pub fn new(basis_label: impl Into<String>, counts: Vec<u64>) -> Self {
        Self {
            basis_label: basis_label.into(),
            shots: counts.iter().sum(),
            counts,
        }
    }

    /// counts / shots; uniform when no shots were taken.
    pub fn frequencies(&self) -> Vec<f64> {
        if self.shots == 0 {
            return vec![1.0 / self.counts.len() as f64; self.counts.len()];
        }
        self.counts.iter().map(|&k| k as f64 / self.shots as f64).collect()
    }
}

/// Per-trial generator: stream `stream` of the ChaCha8 sequence keyed by `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Multinomial draw by sequential conditional binomials.
pub fn multinomial<R: Rng + ?Sized>(probs: &[f64], shots: u64, rng: &mut R) -> Vec<u64> {
    let clipped: Vec<f64> = probs.iter().map(|p| p.max(0.0)).collect();
    let total: f64 = clipped.iter().sum();
    let mut remaining = shots;
    let mut mass = 1.0;
    let mut counts = Vec::with_capacity(probs.len());
    for (i, p) in clipped.iter().enumerate() {
        let p = p / total;
        let k = if i + 1 == clipped.len() || remaining == 0 {
            remaining
        } else {
            let q = if mass > 0.0 { (p / mass).clamp(0.0, 1.0) } else { 1.0 };
            Binomial::new(remaining, q).expect("q in [0, 1]").sample(rng)
        };
        counts.push(k);
        remaining -= k;
        mass -= p;
    }
    counts
}

/// Measures `shots` copies of `rho` in `basis` using the supplied generator.
pub fn sample_with<R: Rng + ?Sized>(rho: &DensityMatrix, basis: &Basis, shots: u64, rng: &mut R) -> Result<MeasurementRecord> {
    if basis.dim() != rho.dim() {
        return Err(Error::DimensionMismatch {
            index: 0,
            expected: rho.dim(),
            found: basis.dim(),
        });
    }
    let counts = multinomial(&rho.probabilities(basis), shots, rng);
    Ok(MeasurementRecord {
        basis_label: basis.label().to_string(),
        shots,
        counts,
    })
}

/// Measures `shots` copies of `rho` in `basis`; reproducible per seed.
pub fn sample_measurement(rho: &DensityMatrix, basis: &Basis, shots: u64, seed: u64) -> Result<MeasurementRecord> {
    if shots == 0 {
        return Err(Error::InvalidArgument("shots must be at least 1".into()));
    }
    sample_with(rho, basis, shots, &mut ChaCha8Rng::seed_from_u64(seed))
}

/// Estimates of Re ρ_ij and Im ρ_ij with binomial standard errors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OffDiagonalEstimate {
    pub x: f64,
    pub y: f64,
    pub stderr_x: f64,
    pub stderr_y: f64,
}

/// Smoothed binomial variance of a frequency from `shots` trials.
fn binomial_variance(freq: f64, shots: u64) -> f64 {
    if shots == 0 {
        return 0.25;
    }
    let k = freq * shots as f64;
    let p = (k + 0.5) / (shots as f64 + 1.0);
    p * (1.0 - p) / shots as f64
}

impl OffDiagonalEstimate {
    /// x = p^{ij}_i − (a_i + a_j)/2 and y = (a_i + a_j)/2 − p'^{ij}_i from
    /// exact probabilities; standard errors are zero.
    pub fn from_probabilities(diag: &[f64], real: &[f64], imag: &[f64], i: usize, j: usize) -> Self {
        let mid = 0.5 * (diag[i] + diag[j]);
        Self {
            x: real[i] - mid,
            y: mid - imag[i],
            stderr_x: 0.0,
            stderr_y: 0.0,
        }
    }
}

fn find_record<'a>(records: &'a [MeasurementRecord], label: &str) -> Result<&'a MeasurementRecord> {
    records
        .iter()
        .find(|r| r.basis_label == label)
        .ok_or_else(|| Error::MissingRecord(label.to_string()))
}

/// Estimates ρ_ij from records of the computational basis and the two plane
/// bases of the pair (i, j).
pub fn estimate_offdiagonal(records: &[MeasurementRecord], i: usize, j: usize) -> Result<OffDiagonalEstimate> {
    let (i, j) = (i.min(j), i.max(j));
    let diag = find_record(records, COMPUTATIONAL_LABEL)?;
    let re = find_record(records, &real_label(i, j))?;
    let im = find_record(records, &imag_label(i, j))?;
    let fd = diag.frequencies();
    let mut est = OffDiagonalEstimate::from_probabilities(&fd, &re.frequencies(), &im.frequencies(), i, j);
    let var_mid = 0.25 * binomial_variance(fd[i] + fd[j], diag.shots);
    est.stderr_x = (binomial_variance(re.frequencies()[i], re.shots) + var_mid).sqrt();
    est.stderr_y = (binomial_variance(im.frequencies()[i], im.shots) + var_mid).sqrt();
    Ok(est)
}

/// Nearest unit-trace PSD matrix in Frobenius norm: the eigenvalues are
/// projected onto the probability simplex (shift, then clip at zero).
pub fn project_to_density(m: &CMat) -> Result<DensityMatrix> {
    let eig = hermitian_eigen(m)?;
    let mut sorted = eig.values.clone();
    sorted.sort_by(|a, b| b.partial_cmp(a).expect("finite"));
    let mut cumulative = 0.0;
    let mut theta = 0.0;
    for (k, &u) in sorted.iter().enumerate() {
        cumulative += u;
        let t = (cumulative - 1.0) / (k + 1) as f64;
        if u - t > 0.0 {
            theta = t;
        }
    }
    let projected = eig.map(|l| (l - theta).max(0.0));
    let trace = projected.trace().re;
    DensityMatrix::new(projected * c(1.0 / trace, 0.0))
}

/// Linear inversion of assignments, followed by [`project_to_density`].
pub fn reconstruct(f: &AssignmentSet) -> Result<DensityMatrix> {
    let sys = build_system(f)?;
    let ls = least_squares_solve(&sys)?;
    let m = StateParams::from_vector(f.dimension(), ls.solution.as_slice())?.to_matrix();
    project_to_density(&m)
}

/// Reconstructs ρ from one record per standard-family basis.
pub fn tomography(records: &[MeasurementRecord], n: usize) -> Result<DensityMatrix> {
    let family = standard_family(n)?;
    let mut assignments = Vec::with_capacity(family.len());
    for basis in family {
        let rec = find_record(records, basis.label())?;
        if rec.counts.len() != n {
            return Err(Error::DimensionMismatch {
                index: assignments.len(),
                expected: n,
                found: rec.counts.len(),
            });
        }
        assignments.push(Assignment::new(basis, ProbabilityVector::new(rec.frequencies())?)?);
    }
    reconstruct(&AssignmentSet::new(n, assignments)?)
}

/// Samples every standard-family basis with `shots` copies each.
pub fn sample_standard_family(rho: &DensityMatrix, shots: u64, seed: u64) -> Result<Vec<MeasurementRecord>> {
    let family = standard_family(rho.dim())?;
    family
        .iter()
        .enumerate()
        .map(|(k, b)| sample_with(rho, b, shots, &mut stream_rng(seed, k as u64)))
        .collect()
}

/// ½‖ρ − σ‖₁.
pub fn trace_distance(rho: &CMat, sigma: &CMat) -> Result<f64> {
    let eig = hermitian_eigen(&(rho - sigma))?;
    Ok(0.5 * eig.values.iter().map(|l| l.abs()).sum::<f64>())
}

/// A pure state on system ⊗ ancilla whose reduced state is ρ.
#[derive(Debug, Clone, PartialEq)]
pub struct Purification {
    /// Amplitudes indexed by `i·ancilla_dim + k` for system index i and ancilla index k.
    pub state: CVec,
    pub system_dim: usize,
    pub ancilla_dim: usize,
}

impl Purification {
    /// Schmidt coefficients √λ_k, in decreasing order.
    pub fn schmidt_coefficients(&self) -> Vec<f64> {
        let m = CMat::from_fn(self.system_dim, self.ancilla_dim, |i, k| self.state[i * self.ancilla_dim + k]);
        let mut s: Vec<f64> = m.singular_values().iter().copied().collect();
        s.sort_by(|a, b| b.partial_cmp(a).expect("finite"));
        s
    }
}

/// Eigenvalues at or below this are treated as zero when choosing the ancilla.
pub const PURIFY_RANK_TOL: f64 = 1e-13;

/// |Ψ⟩ = Σ_k √λ_k |v_k⟩ ⊗ |k⟩ over the nonzero spectrum of ρ.
pub fn purify(rho: &DensityMatrix) -> Purification {
    let eig = hermitian_eigen(rho.matrix()).expect("state is Hermitian");
    let n = rho.dim();
    let kept: Vec<usize> = (0..n).rev().filter(|&k| eig.values[k] > PURIFY_RANK_TOL).collect();
    let r = kept.len();
    let norm: f64 = kept.iter().map(|&k| eig.values[k]).sum::<f64>().sqrt();
    let mut state = CVec::zeros(n * r);
    for (slot, &k) in kept.iter().enumerate() {
        let w = eig.values[k].sqrt() / norm;
        for i in 0..n {
            state[i * r + slot] = eig.vectors[(i, k)] * w;
        }
    }
    Purification {
        state,
        system_dim: n,
        ancilla_dim: r,
    }
}

/// tr_ancilla |Ψ⟩⟨Ψ|.
pub fn partial_trace_ancilla(p: &Purification) -> CMat {
    let (n, r) = (p.system_dim, p.ancilla_dim);
    CMat::from_fn(n, n, |i, j| (0..r).map(|k| p.state[i * r + k] * p.state[j * r + k].conj()).sum())
}

/// Parameters of the secret-sharing demonstration.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SecretSharingConfig {
    /// Hilbert-space dimension.
    pub n: usize,
    /// Number of lattice values of the secret parameter.
    pub k1: usize,
    /// Spacing of the lattice.
    pub lambda: f64,
    /// Copies measured by each player.
    pub shots: u64,
    pub trials: usize,
    pub seed: u64,
}

/// Equal-width histogram with explicit overflow bins.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Histogram {
    pub bin_edges: Vec<f64>,
    pub counts: Vec<u64>,
    pub underflow: u64,
    pub overflow: u64,
}

impl Histogram {
    fn new(lo: f64, hi: f64, bins: usize) -> Self {
        Self {
            bin_edges: (0..=bins).map(|k| lo + (hi - lo) * k as f64 / bins as f64).collect(),
            counts: vec![0; bins],
            underflow: 0,
            overflow: 0,
        }
    }

    fn add(&mut self, v: f64) {
        let lo = self.bin_edges[0];
        let hi = self.bin_edges[self.bin_edges.len() - 1];
        if v < lo {
            self.underflow += 1;
        } else if v >= hi {
            self.overflow += 1;
        } else {
            let bins = self.counts.len();
            let k = (((v - lo) / (hi - lo)) * bins as f64) as usize;
            self.counts[k.min(bins - 1)] += 1;
        }
    }

    fn merge(&mut self, other: &Histogram) {
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        self.underflow += other.underflow;
        self.overflow += other.overflow;
    }
}

/// Monte-Carlo outcome of [`secret_share_demo`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ShareReport {
    pub config: SecretSharingConfig,
    /// The off-diagonal parameter carrying the secret.
    pub secret_parameter: String,
    /// Lattice values of the secret parameter.
    pub lattice: Vec<f64>,
    pub players: usize,
    /// All players pool their estimates.
    pub full_recovery_rate: f64,
    /// The player holding the secret parameter is absent.
    pub missing_player_recovery_rate: f64,
    /// A player holding a fixed parameter is absent.
    pub bystander_missing_recovery_rate: f64,
    /// Estimation errors α̂ − α over every player and trial.
    pub per_parameter_error_histogram: Histogram,
    /// Fraction of estimates with |α̂ − α| > λ/2.
    pub tail_exceedance_rate: f64,
    /// Hoeffding bound 2·exp(−mλ²/2) on that fraction.
    pub hoeffding_bound: f64,
}

struct TrialOutcome {
    full: bool,
    missing: bool,
    bystander: bool,
    hist: Histogram,
    exceed: u64,
    estimates: u64,
}

fn nearest_level(lattice: &[f64], v: f64) -> usize {
    let mut best = 0;
    for (k, &l) in lattice.iter().enumerate() {
        if (l - v).abs() < (lattice[best] - v).abs() {
            best = k;
        }
    }
    best
}

/// Simulates the (k, k) scheme in which each of the n² − n players measures
/// one plane basis and estimates one off-diagonal parameter.
///
/// The secret set consists of the K1 states obtained from I/n by setting
/// Im ρ_01 to the lattice values (s − (K1 − 1)/2)·λ; every other parameter is
/// fixed and the diagonal is public. Each trial draws a secret level, lets
/// every player measure `shots` copies, and decodes by nearest lattice value.
/// The missing-player decoder guesses the unobserved secret parameter
/// uniformly.
pub fn secret_share_demo(config: &SecretSharingConfig) -> Result<ShareReport> {
    let n = config.n;
    if n < 2 {
        return Err(Error::DimensionTooSmall { n, min: 2 });
    }
    if config.k1 < 2 || config.lambda.is_nan() || config.lambda <= 0.0 || config.trials == 0 {
        return Err(Error::InvalidArgument("need k1 ≥ 2, lambda > 0 and at least one trial".into()));
    }
    let half = (config.k1 as f64 - 1.0) / 2.0;
    let lattice: Vec<f64> = (0..config.k1).map(|s| (s as f64 - half) * config.lambda).collect();
    let base = CMat::identity(n, n) * c(1.0 / n as f64, 0.0);
    let states: Vec<DensityMatrix> = lattice
        .iter()
        .enumerate()
        .map(|(s, &v)| {
            let mut m = base.clone();
            m[(0, 1)] = c(0.0, v);
            m[(1, 0)] = c(0.0, -v);
            let lmin = hermitian_eigen(&m)?.min();
            if lmin < 0.0 {
                return Err(Error::LatticeLeavesPsdCone(format!(
                    "lattice point {s} (Im ρ_01 = {v}) has λ_min = {lmin:.3e}"
                )));
            }
            DensityMatrix::new(m)
        })
        .collect::<Result<_>>()?;

    // Players: real part of each pair, then imaginary part; the secret sits
    // with the imaginary-part player of (0, 1).
    let p = pairs(n);
    let mut players: Vec<(Basis, bool, usize, usize)> = Vec::with_capacity(2 * p.len());
    for &(i, j) in &p {
        players.push((crate::generators::real_plane_basis(n, i, j), false, i, j));
    }
    for &(i, j) in &p {
        players.push((crate::generators::imag_plane_basis(n, i, j), true, i, j));
    }
    let secret_player = p.len();
    let diag = 1.0 / n as f64;
    let hoeffding_bound = 2.0 * (-(config.shots as f64) * config.lambda * config.lambda / 2.0).exp();

    let outcomes: Vec<TrialOutcome> = (0..config.trials)
        .into_par_iter()
        .map(|trial| {
            let mut rng = stream_rng(config.seed, trial as u64);
            let secret = rng.random_range(0..config.k1);
            let rho = &states[secret];
            let truth = rho.params();
            let mut hist = Histogram::new(-2.0 * config.lambda, 2.0 * config.lambda, 20);
            let mut exceed = 0;
            let mut estimates = 0;
            let mut decoded_secret = None;
            for (idx, (basis, imaginary, i, j)) in players.iter().enumerate() {
                if config.shots == 0 {
                    continue;
                }
                let rec = sample_with(rho, basis, config.shots, &mut rng).expect("dimensions agree");
                let freq = rec.frequencies()[*i];
                let (estimate, actual) = if *imaginary {
                    (diag - freq, truth.y[pair_slot(n, *i, *j)])
                } else {
                    (freq - diag, truth.x[pair_slot(n, *i, *j)])
                };
                hist.add(estimate - actual);
                estimates += 1;
                if (estimate - actual).abs() > config.lambda / 2.0 {
                    exceed += 1;
                }
                if idx == secret_player {
                    decoded_secret = Some(nearest_level(&lattice, estimate));
                }
            }
            let full_guess = decoded_secret.unwrap_or_else(|| rng.random_range(0..config.k1));
            let missing_guess = rng.random_range(0..config.k1);
            // A fixed parameter is known from the secret set alone, so losing
            // its player leaves the full decode intact.
            TrialOutcome {
                full: full_guess == secret,
                missing: missing_guess == secret,
                bystander: full_guess == secret,
                hist,
                exceed,
                estimates,
            }
        })
        .collect();

    let trials = config.trials as f64;
    let rate = |f: fn(&TrialOutcome) -> bool| outcomes.iter().filter(|o| f(o)).count() as f64 / trials;
    let mut hist = Histogram::new(-2.0 * config.lambda, 2.0 * config.lambda, 20);
    let (mut exceed, mut estimates) = (0u64, 0u64);
    for o in &outcomes {
        hist.merge(&o.hist);
        exceed += o.exceed;
        estimates += o.estimates;
    }
    Ok(ShareReport {
        config: config.clone(),
        secret_parameter: "Im rho_01".into(),
        lattice,
        players: players.len(),
        full_recovery_rate: rate(|o| o.full),
        missing_player_recovery_rate: rate(|o| o.missing),
        bystander_missing_recovery_rate: rate(|o| o.bystander),
        per_parameter_error_histogram: hist,
        tail_exceedance_rate: if estimates > 0 { exceed as f64 / estimates as f64 } else { 0.0 },
        hoeffding_bound,
    })
}

fn pair_slot(n: usize, i: usize, j: usize) -> usize {
    pairs(n).iter().position(|&q| q == (i, j)).expect("valid pair")
}
