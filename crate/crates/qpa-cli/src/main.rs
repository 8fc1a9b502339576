use std::io::Read;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use qpa::generators::{self, forward_assignments, interior_state};
use qpa::model::{AssignmentSet, Assignment, DensityMatrix, ProbabilityVector};
use qpa::sampler::{self, SecretSharingConfig};
use qpa::solver::{self, AuditOutcome, Verdict};
use qpa::{io, Error};

const EXIT_OK: u8 = 0;
const EXIT_MALFORMED: u8 = 1;
const EXIT_INFEASIBLE: u8 = 2;
const EXIT_UNDECIDED: u8 = 3;
const EXIT_CONSTRUCTION: u8 = 4;

#[derive(Parser, Debug)]
#[command(name = "qpa", version, about = "Consistency checks for quantum probability assignments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Decide whether one density matrix reproduces every assignment.
    Check {
        /// Assignment-set JSON, or `-` for stdin.
        file: PathBuf,
        #[arg(long, default_value_t = solver::DEFAULT_BUDGET)]
        budget: usize,
    },
    /// Check every subset of a fixed size.
    Audit {
        file: PathBuf,
        #[arg(long)]
        size: usize,
        #[arg(long, default_value_t = solver::DEFAULT_BUDGET)]
        budget: usize,
    },
    /// Rank of the stacked system after each assignment is added.
    Rank {
        file: PathBuf,
        /// Comma-separated assignment order; defaults to file order.
        #[arg(long, value_delimiter = ',')]
        order: Option<Vec<usize>>,
    },
    /// Rank structure of two bases from a file.
    Pair {
        file: PathBuf,
        #[arg(long)]
        a: usize,
        #[arg(long)]
        b: usize,
    },
    /// Print a generated assignment set.
    Gen {
        #[command(subcommand)]
        kind: GenKind,
    },
    /// Sample the standard family and reconstruct the state.
    Tomo {
        /// Density-matrix JSON, or `-` for stdin.
        file: PathBuf,
        #[arg(long)]
        shots: u64,
        #[arg(long)]
        seed: u64,
    },
    /// Monte Carlo run of the secret-sharing scheme.
    ShareDemo {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        k1: usize,
        #[arg(long)]
        lambda: f64,
        #[arg(long)]
        shots: u64,
        #[arg(long)]
        trials: usize,
        #[arg(long)]
        seed: u64,
    },
    /// Consistency number of dimension n.
    Rn {
        #[arg(long)]
        n: usize,
    },
}

#[derive(Subcommand, Debug)]
enum GenKind {
    /// The four-basis qubit family.
    Dim2,
    /// The eight three-dimensional bases.
    Dim3 {
        /// Probabilities from a seeded interior state instead of I/3.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// The n² − n + 1 standard bases.
    Standard {
        #[arg(long)]
        n: usize,
        /// Probabilities from a seeded interior state instead of I/n.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// A family of size R_n whose proper subfamilies are all consistent.
    Counterexample {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        seed: u64,
    },
}

/// A failure with its exit code.
struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::ConstructionFailed(_) | Error::LatticeLeavesPsdCone(_) => EXIT_CONSTRUCTION,
            _ => EXIT_MALFORMED,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

fn malformed(message: impl Into<String>) -> Failure {
    Failure {
        code: EXIT_MALFORMED,
        message: message.into(),
    }
}

/// Reads a file argument; `-` is stdin.
fn read_input(path: &PathBuf) -> Result<String, Failure> {
    let mut text = String::new();
    if path.as_os_str() == "-" {
        std::io::stdin()
            .read_to_string(&mut text)
            .map_err(|e| malformed(format!("reading stdin: {e}")))?;
    } else {
        text = std::fs::read_to_string(path).map_err(|e| malformed(format!("reading {}: {e}", path.display())))?;
    }
    Ok(text)
}

struct Outcome {
    result: Value,
    code: u8,
}

fn verdict_code(v: Verdict) -> u8 {
    match v {
        Verdict::Consistent => EXIT_OK,
        Verdict::LinearlyInfeasible | Verdict::PsdInfeasible => EXIT_INFEASIBLE,
        Verdict::Undecided => EXIT_UNDECIDED,
    }
}

fn family_from(path: &PathBuf, inputs: &mut Vec<u8>) -> Result<AssignmentSet, Failure> {
    let text = read_input(path)?;
    inputs.extend_from_slice(text.as_bytes());
    Ok(io::parse_assignment_set(&text)?)
}

fn seeded_family(n: usize, bases: Vec<qpa::Basis>, seed: Option<u64>) -> Result<AssignmentSet, Failure> {
    let rho = match seed {
        Some(s) => interior_state(n, s)?,
        None => DensityMatrix::maximally_mixed(n),
    };
    Ok(forward_assignments(&rho, &bases)?)
}

fn generate(kind: &GenKind) -> Result<AssignmentSet, Failure> {
    match *kind {
        GenKind::Dim2 => Ok(generators::dim2_example()),
        GenKind::Dim3 { seed } => {
            let d3 = generators::dim3_bases();
            let mut bases = d3.bases;
            bases.push(d3.q);
            seeded_family(3, bases, seed)
        }
        GenKind::Standard { n, seed } => seeded_family(n, generators::standard_family(n)?, seed),
        GenKind::Counterexample { n, seed } => Ok(generators::optimal_counterexample(n, seed)?.assignments),
    }
}

fn run(command: &Command, inputs: &mut Vec<u8>) -> Result<Outcome, Failure> {
    match command {
        Command::Check { file, budget } => {
            let f = family_from(file, inputs)?;
            let report = solver::check_consistency(&f, *budget)?;
            log::info!("verdict {} after {} iterations", report.verdict.as_str(), report.iterations_used);
            Ok(Outcome {
                code: verdict_code(report.verdict),
                result: io::consistency_report_value(&report),
            })
        }
        Command::Audit { file, size, budget } => {
            let f = family_from(file, inputs)?;
            let outcome = solver::audit_subsets(&f, *size, *budget)?;
            let code = match &outcome {
                AuditOutcome::AllConsistent { .. } => EXIT_OK,
                AuditOutcome::FirstFailure { .. } => EXIT_INFEASIBLE,
            };
            Ok(Outcome {
                code,
                result: io::audit_outcome_value(&outcome),
            })
        }
        Command::Rank { file, order } => {
            let f = family_from(file, inputs)?;
            let order: Vec<usize> = order.clone().unwrap_or_else(|| (0..f.len()).collect());
            let chain = solver::rank_chain(&f, &order)?;
            Ok(Outcome {
                code: EXIT_OK,
                result: json!({ "order": order, "ranks": chain }),
            })
        }
        Command::Pair { file, a, b } => {
            let f = family_from(file, inputs)?;
            let get = |i: usize| {
                f.assignments()
                    .get(i)
                    .map(Assignment::basis)
                    .ok_or_else(|| malformed(format!("assignment {i} out of range (family has {})", f.len())))
            };
            let structure = solver::analyze_pair(get(*a)?, get(*b)?)?;
            Ok(Outcome {
                code: EXIT_OK,
                result: io::pair_structure_value(&structure),
            })
        }
        Command::Gen { .. } => unreachable!("gen prints a bare assignment set"),
        Command::Tomo { file, shots, seed } => {
            let text = read_input(file)?;
            inputs.extend_from_slice(text.as_bytes());
            let rho = io::parse_density(&text)?;
            if *shots == 0 {
                return Err(malformed("shots must be at least 1"));
            }
            let records = sampler::sample_standard_family(&rho, *shots, *seed)?;
            let estimate = sampler::tomography(&records, rho.dim())?;
            let distance = sampler::trace_distance(rho.matrix(), estimate.matrix())?;
            let exact = sampler::reconstruct(&exact_family(&rho)?)?;
            Ok(Outcome {
                code: EXIT_OK,
                result: json!({
                    "dimension": rho.dim(),
                    "shots_per_basis": shots,
                    "seed": seed,
                    "records": records,
                    "reconstruction": io::matrix_value(estimate.matrix()),
                    "reconstruction_min_eigenvalue": estimate.min_eigenvalue(),
                    "trace_distance": distance,
                    "exact_inversion_error": (exact.matrix() - rho.matrix()).norm(),
                }),
            })
        }
        Command::ShareDemo {
            n,
            k1,
            lambda,
            shots,
            trials,
            seed,
        } => {
            let config = SecretSharingConfig {
                n: *n,
                k1: *k1,
                lambda: *lambda,
                shots: *shots,
                trials: *trials,
                seed: *seed,
            };
            let report = sampler::secret_share_demo(&config)?;
            let result = serde_json::to_value(&report).map_err(|e| malformed(e.to_string()))?;
            Ok(Outcome { code: EXIT_OK, result })
        }
        Command::Rn { n } => Ok(Outcome {
            code: EXIT_OK,
            result: json!({ "n": n, "consistency_number": solver::consistency_number(*n)? }),
        }),
    }
}

/// The standard family with exact probabilities of `rho`.
fn exact_family(rho: &DensityMatrix) -> Result<AssignmentSet, Failure> {
    let n = rho.dim();
    let assignments = generators::standard_family(n)?
        .into_iter()
        .map(|b| {
            let p = ProbabilityVector::new(rho.probabilities(&b))?;
            Assignment::new(b, p)
        })
        .collect::<qpa::Result<Vec<_>>>()?;
    Ok(AssignmentSet::new(n, assignments)?)
}

fn command_name(c: &Command) -> &'static str {
    match c {
        Command::Check { .. } => "check",
        Command::Audit { .. } => "audit",
        Command::Rank { .. } => "rank",
        Command::Pair { .. } => "pair",
        Command::Gen { .. } => "gen",
        Command::Tomo { .. } => "tomo",
        Command::ShareDemo { .. } => "share-demo",
        Command::Rn { .. } => "rn",
    }
}

fn emit(value: &Value) {
    println!("{}", io::to_json_string(value).expect("JSON values serialize"));
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().filter_or("QPA_LOG", "warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_MALFORMED } else { EXIT_OK };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };

    if let Command::Gen { kind } = &cli.command {
        return match generate(kind) {
            Ok(f) => {
                println!("{}", io::assignment_set_to_string(&f));
                ExitCode::from(EXIT_OK)
            }
            Err(fail) => {
                eprintln!("error: {}", fail.message);
                ExitCode::from(fail.code)
            }
        };
    }

    let start = Instant::now();
    let argv: Vec<String> = std::env::args().skip(1).collect();
    let mut inputs = argv.join("\u{0}").into_bytes();
    inputs.push(0);
    match run(&cli.command, &mut inputs) {
        Ok(outcome) => {
            let report = json!({
                "command": command_name(&cli.command),
                "tool_version": env!("CARGO_PKG_VERSION"),
                "inputs_digest": hex::encode(Sha256::digest(&inputs)),
                "elapsed": start.elapsed().as_secs_f64(),
                "result": outcome.result,
            });
            emit(&report);
            ExitCode::from(outcome.code)
        }
        Err(fail) => {
            eprintln!("error: {}", fail.message);
            ExitCode::from(fail.code)
        }
    }
}
