use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use noqe::experiment::{
    noqe_energy, pull_datasets, run_sweep, shadow_estimates, sweep_csv, zne_energy, EstimatesFile, Experiment,
    ExperimentReport,
};
use noqe::io::{read, write_atomic};
use noqe::pipeline::{dataset_jobs, exact_matrices, solve_gevp, Method, ReferenceDatasets};
use noqe::shadows::{self, circuit_hash};
use noqe::Error;

#[derive(Parser)]
#[command(name = "noqe", version, about = "Shadow-tomography NOQE experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Acquire the three shadow datasets of every reference.
    Acquire(Common),
    /// Estimate matrices from acquired datasets (raw, plus distilled with --distill).
    Estimate(Common),
    /// Solve the GEVP for estimated matrices, or exact ones with --exact-mode.
    Solve(Common),
    /// Hadamard-test baseline run.
    Hadamard(Common),
    /// ZNE-mitigated Hadamard run.
    Zne(Common),
    /// Noise sweep writing a plot-ready CSV.
    Sweep(Common),
}

#[derive(Args, Clone)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=3))]
    estimator_m: Option<u8>,
    #[arg(long)]
    distill: bool,
    #[arg(long)]
    exact_mode: bool,
}

struct Failure {
    code: u8,
    message: String,
}

const CONFIG: u8 = 2;
const DATA: u8 = 3;
const NUMERICAL: u8 = 4;

fn fail(code: u8) -> impl Fn(Error) -> Failure {
    move |e| Failure {
        code,
        message: e.to_string(),
    }
}

/// Exit code for an error raised while computing.
fn compute(e: Error) -> Failure {
    let code = match &e {
        Error::Degenerate(_) | Error::UnreliableDivision { .. } => NUMERICAL,
        Error::Io { .. } | Error::Format { .. } | Error::Parse { .. } => DATA,
        Error::Contract(_) | Error::Resource(_) => CONFIG,
    };
    Failure {
        code,
        message: e.to_string(),
    }
}

fn load(args: &Common) -> Result<Experiment, Failure> {
    let mut exp = Experiment::load(&args.config).map_err(fail(CONFIG))?;
    if let Some(seed) = args.seed {
        exp.config.seed = seed;
    }
    if let Some(m) = args.estimator_m {
        exp.config.estimator_m = m as usize;
    }
    exp.config.distill |= args.distill;
    Ok(exp)
}

fn write(path: &Path, bytes: &[u8]) -> Result<String, Failure> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Failure {
            code: DATA,
            message: format!("cannot create {}: {e}", dir.display()),
        })?;
    }
    write_atomic(path, bytes).map_err(fail(DATA))?;
    Ok(path.display().to_string())
}

fn finish(mut report: ExperimentReport, path: &Path, start: Instant) -> Result<(), Failure> {
    report.timing.wall_seconds = start.elapsed().as_secs_f64();
    report.artifacts.push(path.display().to_string());
    write(path, &report.to_json())?;
    if let Some(e) = report.ground_energy {
        println!("ground energy {e:.10}");
    }
    println!("wrote {}", path.display());
    Ok(())
}

fn dataset_path(out: &Path, label: &str) -> PathBuf {
    out.join("datasets").join(format!("{label}.jsonl"))
}

fn acquire(args: &Common) -> Result<(), Failure> {
    let start = Instant::now();
    let exp = load(args)?;
    if exp.config.method != Method::Shadow {
        return Err(Failure {
            code: CONFIG,
            message: "config field `method`: acquire needs the shadow method".into(),
        });
    }
    let mut report = ExperimentReport::new("acquire", &exp, false).map_err(compute)?;
    for spec in &exp.specs {
        for (label, circuit, seed) in dataset_jobs(spec, exp.config.seed) {
            let ds = shadows::acquire(&circuit, exp.config.budget as usize, exp.noise(), seed, &label).map_err(compute)?;
            report.shots += ds.len() as u64;
            let path = dataset_path(&args.out, &label);
            report.artifacts.push(write(&path, shadows::to_jsonl(&ds).as_bytes())?);
        }
    }
    finish(report, &args.out.join("acquire.json"), start)
}

fn load_datasets(exp: &Experiment, out: &Path) -> Result<Vec<ReferenceDatasets>, Failure> {
    let data = |message: String| Failure { code: DATA, message };
    exp.specs
        .iter()
        .map(|spec| {
            let mut parts = Vec::with_capacity(3);
            for (label, circuit, _) in dataset_jobs(spec, exp.config.seed) {
                let path = dataset_path(out, &label);
                let ds = shadows::load(&path).map_err(|e| data(format!("{}: {e}", path.display())))?;
                if ds.meta.circuit_hash != circuit_hash(&circuit) {
                    return Err(data(format!("{}: dataset was acquired for a different circuit", path.display())));
                }
                if ds.num_qubits != spec.num_qubits {
                    return Err(data(format!("{}: width {} differs from the reference", path.display(), ds.num_qubits)));
                }
                parts.push(ds);
            }
            let [psi, real, imag]: [_; 3] = parts.try_into().expect("three datasets");
            Ok(ReferenceDatasets { psi, real, imag })
        })
        .collect()
}

fn estimate(args: &Common) -> Result<(), Failure> {
    let start = Instant::now();
    let exp = load(args)?;
    let datasets = load_datasets(&exp, &args.out)?;
    let refs = pull_datasets(&datasets);
    drop(datasets);
    let (raw, distilled) = shadow_estimates(&exp, &refs, exp.config.distill).map_err(compute)?;
    let mut report = ExperimentReport::new("estimate", &exp, false).map_err(compute)?;
    report.method = Method::Shadow;
    let s_min = exp.config.s_min;
    match &distilled {
        Some(d) => {
            report.set_solution(d, solve_gevp(&d.s, &d.h, s_min).map_err(compute)?);
            report.raw_matrices = Some((&raw).into());
            report.raw_gevp = Some(solve_gevp(&raw.s, &raw.h, s_min).map_err(compute)?);
        }
        None => report.set_solution(&raw, solve_gevp(&raw.s, &raw.h, s_min).map_err(compute)?),
    }
    let file = EstimatesFile {
        method: Method::Shadow,
        raw: (&raw).into(),
        distilled: distilled.as_ref().map(Into::into),
    };
    let bytes = serde_json::to_vec_pretty(&file).expect("estimates serialize");
    report.artifacts.push(write(&args.out.join("estimates.json"), &bytes)?);
    finish(report, &args.out.join("estimate.json"), start)
}

fn solve(args: &Common) -> Result<(), Failure> {
    let start = Instant::now();
    let exp = load(args)?;
    let mut report = ExperimentReport::new("solve", &exp, args.exact_mode).map_err(compute)?;
    let matrices = if args.exact_mode {
        exact_matrices(&exp.specs, &exp.hamiltonian).map_err(compute)?
    } else {
        let path = args.out.join("estimates.json");
        let bytes = read(&path).map_err(fail(DATA))?;
        let file: EstimatesFile = serde_json::from_slice(&bytes).map_err(|e| Failure {
            code: DATA,
            message: format!("{}: {e}", path.display()),
        })?;
        report.method = file.method;
        let m = file.preferred().to_estimates().map_err(fail(DATA))?;
        if m.labels != exp.labels() {
            return Err(Failure {
                code: DATA,
                message: format!("{}: labels {:?} differ from the config", path.display(), m.labels),
            });
        }
        m
    };
    let gevp = solve_gevp(&matrices.s, &matrices.h, exp.config.s_min).map_err(compute)?;
    report.set_solution(&matrices, gevp);
    finish(report, &args.out.join("solve.json"), start)
}

fn hadamard(args: &Common) -> Result<(), Failure> {
    let start = Instant::now();
    let mut exp = load(args)?;
    exp.config.method = Method::Hadamard;
    if args.exact_mode {
        // exact expectations under the configured noise
        exp.config.budget = 0;
    }
    let mut report = noqe_energy(&exp, false).map_err(compute)?;
    report.exact_mode = args.exact_mode;
    report.command = "hadamard".into();
    finish(report, &args.out.join("hadamard.json"), start)
}

fn zne(args: &Common) -> Result<(), Failure> {
    let start = Instant::now();
    let exp = load(args)?;
    if exp.config.zne.is_none() {
        return Err(Failure {
            code: CONFIG,
            message: "config field `zne`: required by the zne command".into(),
        });
    }
    let report = zne_energy(&exp, args.exact_mode).map_err(compute)?;
    finish(report, &args.out.join("zne.json"), start)
}

fn sweep(args: &Common) -> Result<(), Failure> {
    let start = Instant::now();
    let exp = load(args)?;
    if exp.config.budget == 0 {
        return Err(Failure {
            code: CONFIG,
            message: "config field `budget`: sweep needs a shadow snapshot budget".into(),
        });
    }
    let rows = run_sweep(&exp, args.exact_mode).map_err(compute)?;
    let mut report = ExperimentReport::new("sweep", &exp, args.exact_mode).map_err(compute)?;
    report.sweep_rows = Some(rows.len());
    let csv = sweep_csv(&rows).map_err(compute)?;
    report.artifacts.push(write(&args.out.join("sweep.csv"), &csv)?);
    finish(report, &args.out.join("sweep.json"), start)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Acquire(a) => acquire(a),
        Command::Estimate(a) => estimate(a),
        Command::Solve(a) => solve(a),
        Command::Hadamard(a) => hadamard(a),
        Command::Zne(a) => zne(a),
        Command::Sweep(a) => sweep(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
