use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use blkrylov::json::{BlockJson, ComplexMatrixJson};
use blkrylov::lambda_matrix::SolventChain;
use blkrylov::prescribe::{check_admissible_grams, construct_with, verify_problem, ConstructOptions, VerifyTolerances};
use blkrylov::solvers::TraceJson;
use blkrylov::{
    check_admissible, check_consistency, pad_problem, solve, Admissibility, BlockMatrix, BlockVector, Consistency,
    ConvergencePrescription, Error, LambdaMatrix, SolveOptions, UpperTriNonneg,
};
use clap::{Args, Parser, Subcommand};
use serde::{de::DeserializeOwned, Deserialize, Serialize};

const EXIT_PARSE: u8 = 2;
const EXIT_BREAKDOWN: u8 = 3;
const EXIT_INCONSISTENT: u8 = 4;
const EXIT_VERIFY: u8 = 5;

#[derive(Parser)]
#[command(name = "blkrylov", version, about = "Block GMRES/FOM runs and prescribed-convergence problem construction")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run block GMRES (and block FOM alongside) on a problem file.
    Solve(SolveArgs),
    /// Build A and B from a prescription of residual norms and Ritz lambda-matrices.
    Prescribe(PrescribeArgs),
    /// Check a constructed instance against its prescription.
    Verify(VerifyArgs),
    /// Latent roots of a lambda-matrix.
    Roots(IoArgs),
    /// Check that a sequence of block residual norms is admissible.
    Admissible(IoArgs),
}

#[derive(Args)]
struct IoArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct SolveArgs {
    #[command(flatten)]
    io: IoArgs,
    /// Number of block steps; defaults to n (floor(m / s) - 1 for padded problems).
    #[arg(long)]
    kmax: Option<usize>,
    /// Stop once the Frobenius norm of the block residual norm drops below this.
    #[arg(long)]
    tol: Option<f64>,
    /// Relative singular value cutoff for singularity decisions.
    #[arg(long)]
    rank_tol: Option<f64>,
    /// Write per-step residual norms as CSV.
    #[arg(long)]
    emit_csv: Option<PathBuf>,
}

#[derive(Args)]
struct PrescribeArgs {
    /// Prescription JSON.
    #[arg(long)]
    input: PathBuf,
    /// Directory for A.json, B.json, H.json, problem.json, prescription.json and manifest.json.
    #[arg(long)]
    output: PathBuf,
    #[arg(long, env = "BLKRYLOV_SEED")]
    seed: Option<u64>,
    /// Draw the free parameters at stagnating steps from the seed.
    #[arg(long)]
    randomize_free: bool,
}

#[derive(Args)]
struct VerifyArgs {
    /// Directory written by `prescribe`.
    #[arg(long)]
    input: PathBuf,
    /// Report JSON.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Threshold for all three metrics instead of the defaults.
    #[arg(long)]
    verify_tol: Option<f64>,
}

/// The resolved settings of one invocation.
#[derive(Debug)]
struct RunConfig {
    input: PathBuf,
    output: Option<PathBuf>,
    k_max: Option<usize>,
    conv_tol: Option<f64>,
    rank_tol: Option<f64>,
    seed: Option<u64>,
    emit_csv: Option<PathBuf>,
}

struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn new(code: u8, message: impl Into<String>) -> Self {
        Failure { code, message: message.into() }
    }

    fn parse(path: &Path, err: impl std::fmt::Display) -> Self {
        Failure::new(EXIT_PARSE, format!("{}: {err}", path.display()))
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Breakdown { .. } => EXIT_BREAKDOWN,
            Error::InconsistentPrescription { .. } => EXIT_INCONSISTENT,
            Error::DimensionMismatch(_) | Error::Invalid(_) => EXIT_PARSE,
            _ => 1,
        };
        Failure::new(code, e.to_string())
    }
}

type CmdResult = Result<(), Failure>;

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, Failure> {
    let text = fs::read_to_string(path).map_err(|e| Failure::parse(path, e))?;
    serde_json::from_str(&text).map_err(|e| Failure::parse(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> CmdResult {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Failure::new(1, e.to_string()))?;
    text.push('\n');
    write_text(path, &text)
}

fn write_text(path: &Path, text: &str) -> CmdResult {
    fs::write(path, text).map_err(|e| Failure::new(1, format!("{}: {e}", path.display())))
}

#[derive(Deserialize)]
#[serde(untagged)]
enum MatrixInput {
    Block(BlockJson),
    Dense(ComplexMatrixJson),
}

impl MatrixInput {
    fn into_dense(self, path: &Path) -> Result<blkrylov::dense::CMat, Failure> {
        match self {
            MatrixInput::Block(b) => {
                let rows = b.n * b.s;
                let cols = if b.data.len() == rows * rows { rows } else { b.s };
                ComplexMatrixJson { rows, cols, data: b.data }.to_matrix()
            }
            MatrixInput::Dense(d) => d.to_matrix(),
        }
        .map_err(|e| Failure::parse(path, e))
    }
}

#[derive(Deserialize)]
struct ProblemInput {
    #[serde(rename = "A")]
    a: MatrixInput,
    #[serde(rename = "B")]
    b: MatrixInput,
}

#[derive(Serialize, Deserialize)]
struct ProblemFile {
    #[serde(rename = "A")]
    a: BlockMatrix,
    #[serde(rename = "B")]
    b: BlockVector,
}

#[derive(Serialize)]
struct Padding {
    original_size: usize,
    padded_size: usize,
}

#[derive(Serialize)]
struct SolveOutput {
    n: usize,
    s: usize,
    k_max: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    padding: Option<Padding>,
    /// Block GMRES iterate after the last step, truncated to the original size.
    solution: ComplexMatrixJson,
    trace: TraceJson,
}

fn cmd_solve(cfg: &RunConfig) -> CmdResult {
    let input: ProblemInput = read_json(&cfg.input)?;
    let a = input.a.into_dense(&cfg.input)?;
    let b = input.b.into_dense(&cfg.input)?;
    let problem = pad_problem(&a, &b)?;
    let (n, s) = (problem.a.n(), problem.a.s());
    // a padded problem has a Krylov space of dimension at most m, so the
    // step that would need block m / s + 1 breaks down
    let default_k = if problem.padded() { (problem.m / s).saturating_sub(1).max(1) } else { n };
    let k_max = cfg.k_max.unwrap_or(default_k);
    if k_max == 0 || k_max > n {
        return Err(Failure::new(EXIT_PARSE, format!("--kmax must be in 1..={n}, got {k_max}")));
    }
    let opts = SolveOptions { k_max, conv_tol: cfg.conv_tol, rank_tol: cfg.rank_tol };
    let trace = solve(&problem.a, &problem.b, opts)?;

    let mut report = String::new();
    let _ = writeln!(report, "block GMRES: n = {n}, s = {s}, k_max = {k_max}");
    if problem.padded() {
        let _ = writeln!(
            report,
            "padded: size {} extended to {} with identity rows and zero right-hand side rows",
            problem.m,
            n * s
        );
    }
    let _ = writeln!(report, "termination: {:?} after {} steps", trace.termination, trace.steps.len());
    for k in 0..=trace.steps.len() {
        let _ =
            writeln!(report, "  k = {k:>2}  ||F_k||_F = {:.6e}", blkrylov::dense::fro(trace.gmres_norm(k).as_mat()));
    }
    print!("{report}");

    if let Some(path) = &cfg.emit_csv {
        write_text(path, &residual_csv(&trace))?;
    }
    if let Some(path) = &cfg.output {
        let x = trace
            .steps
            .last()
            .map(|st| problem.truncate(&st.x_gmres))
            .unwrap_or_else(|| blkrylov::dense::zeros(problem.m, s));
        let out = SolveOutput {
            n,
            s,
            k_max,
            padding: problem.padded().then(|| Padding { original_size: problem.m, padded_size: n * s }),
            solution: ComplexMatrixJson::from(&x),
            trace: trace.to_json(),
        };
        write_json(path, &out)?;
    }
    Ok(())
}

/// `k, frobenius, col_1, ..., col_s` per step, from the directly computed
/// residuals.
fn residual_csv(trace: &blkrylov::SolveTrace) -> String {
    let mut out = String::from("k,frobenius");
    for j in 1..=trace.s {
        let _ = write!(out, ",col_{j}");
    }
    out.push('\n');
    for k in 0..=trace.steps.len() {
        let gram = trace.gmres_gram(k);
        let cols: Vec<f64> = (0..trace.s).map(|j| gram[(j, j)].re.max(0.0).sqrt()).collect();
        let fro = cols.iter().map(|c| c * c).sum::<f64>().sqrt();
        let _ = write!(out, "{k},{fro:e}");
        for c in cols {
            let _ = write!(out, ",{c:e}");
        }
        out.push('\n');
    }
    out
}

#[derive(Serialize)]
struct Manifest {
    n: usize,
    s: usize,
    seed: u64,
    randomize_free: bool,
    cond_u: f64,
    cond_d: f64,
    files: [&'static str; 5],
}

fn cmd_prescribe(cfg: &RunConfig, randomize_free: bool) -> CmdResult {
    let p: ConvergencePrescription = read_json(&cfg.input)?;
    let seed = cfg.seed.or(p.seed).unwrap_or(0);
    let inst = construct_with(&p, ConstructOptions { seed, randomize_free })?;
    let dir = cfg.output.as_deref().expect("output directory is a required flag");
    fs::create_dir_all(dir).map_err(|e| Failure::new(1, format!("{}: {e}", dir.display())))?;
    write_json(&dir.join("A.json"), &inst.a)?;
    write_json(&dir.join("B.json"), &inst.b)?;
    write_json(&dir.join("H.json"), &inst.h)?;
    write_json(&dir.join("problem.json"), &ProblemFile { a: inst.a.clone(), b: inst.b.clone() })?;
    write_json(&dir.join("prescription.json"), &p)?;
    let manifest = Manifest {
        n: p.n,
        s: p.s,
        seed,
        randomize_free,
        cond_u: inst.cond_u,
        cond_d: inst.cond_d,
        files: ["A.json", "B.json", "H.json", "problem.json", "prescription.json"],
    };
    write_json(&dir.join("manifest.json"), &manifest)?;
    println!(
        "constructed n = {}, s = {} with seed {seed}: cond(U) = {:.3e}, cond(D) = {:.3e}",
        p.n, p.s, inst.cond_u, inst.cond_d
    );
    println!("wrote {}", dir.display());
    Ok(())
}

fn cmd_verify(cfg: &RunConfig, verify_tol: Option<f64>) -> CmdResult {
    let dir = &cfg.input;
    let p: ConvergencePrescription = read_json(&dir.join("prescription.json"))?;
    let problem: ProblemFile = read_json(&dir.join("problem.json"))?;
    let h_path = dir.join("H.json");
    let h: Option<BlockMatrix> = if h_path.exists() { Some(read_json(&h_path)?) } else { None };
    let tol = match verify_tol {
        Some(t) => VerifyTolerances { residual: t, annihilation: t, spectrum: t },
        None => VerifyTolerances::default(),
    };
    let report = verify_problem(&problem.a, &problem.b, &p, h.as_ref(), tol)?;
    let mark = |ok: bool| if ok { "ok" } else { "FAILED" };
    println!(
        "residual Gram mismatch  {:.3e} (limit {:.1e}) {}",
        report.max_residual_mismatch(),
        tol.residual,
        mark(report.residual_ok)
    );
    println!(
        "Ritz annihilation       {:.3e} (limit {:.1e}) {}",
        report.max_annihilation(),
        tol.annihilation,
        mark(report.annihilation_ok)
    );
    println!(
        "spectrum distance       {:.3e} (limit {:.1e}) {}",
        report.spectrum_distance,
        tol.spectrum,
        mark(report.spectrum_ok)
    );
    if let Some(hm) = report.hessenberg_mismatch {
        println!("Hessenberg mismatch     {hm:.3e}");
    }
    if let Some(path) = &cfg.output {
        write_json(path, &report)?;
    }
    if report.passed() {
        Ok(())
    } else {
        Err(Failure::new(EXIT_VERIFY, "verification failed"))
    }
}

#[derive(Deserialize)]
#[serde(untagged)]
enum RootsInput {
    Chain { solvent_chain: SolventChain },
    Matrix(LambdaMatrix),
}

#[derive(Serialize)]
struct RootsOutput {
    degree: usize,
    s: usize,
    roots: Vec<[f64; 2]>,
}

fn cmd_roots(cfg: &RunConfig) -> CmdResult {
    let m = match read_json::<RootsInput>(&cfg.input)? {
        RootsInput::Chain { solvent_chain } => LambdaMatrix::from_solvent_chain(&solvent_chain)?,
        RootsInput::Matrix(m) => m,
    };
    let mut roots = m.latent_roots();
    roots.sort_by(|x, y| x.re.total_cmp(&y.re).then(x.im.total_cmp(&y.im)));
    println!("{} latent roots (degree {}, s = {})", roots.len(), m.degree(), m.s());
    for z in &roots {
        println!("  {:+.12e} {:+.12e}i", z.re, z.im);
    }
    if let Some(path) = &cfg.output {
        let out = RootsOutput { degree: m.degree(), s: m.s(), roots: roots.iter().map(|z| [z.re, z.im]).collect() };
        write_json(path, &out)?;
    }
    Ok(())
}

#[derive(Deserialize)]
#[serde(untagged)]
enum AdmissibleInput {
    Prescription(ConvergencePrescription),
    Norms {
        #[serde(rename = "F")]
        f: Vec<UpperTriNonneg>,
    },
    Grams {
        #[serde(with = "blkrylov::json::cmat_vec")]
        grams: Vec<blkrylov::dense::CMat>,
    },
}

#[derive(Serialize)]
struct AdmissibleOutput {
    admissible: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    violation_step: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    slack: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    consistent: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    inconsistent_step: Option<usize>,
}

fn cmd_admissible(cfg: &RunConfig) -> CmdResult {
    let input: AdmissibleInput = read_json(&cfg.input)?;
    let (adm, cons) = match &input {
        AdmissibleInput::Prescription(p) => (check_admissible(&p.f), Some(check_consistency(&p.f, &p.ritz)?)),
        AdmissibleInput::Norms { f } => (check_admissible(f), None),
        AdmissibleInput::Grams { grams } => (check_admissible_grams(grams), None),
    };
    let mut out = AdmissibleOutput {
        admissible: adm.is_ok(),
        violation_step: None,
        slack: None,
        consistent: cons.as_ref().map(Consistency::is_ok),
        inconsistent_step: None,
    };
    match adm {
        Admissibility::Ok => println!("admissible"),
        Admissibility::Violation { k, slack } => {
            println!("not admissible at k = {k} (smallest eigenvalue {slack:.3e})");
            out.violation_step = Some(k);
            out.slack = Some(slack);
        }
    }
    match cons {
        Some(Consistency::RangeMismatch { k, rank_decrement, rank_c0, projector_gap }) => {
            println!(
                "inconsistent at k = {k}: decrement rank {rank_decrement}, C_0 rank {rank_c0}, projector gap {projector_gap:.3e}"
            );
            out.inconsistent_step = Some(k);
        }
        Some(Consistency::Ok) => println!("consistent"),
        None => {}
    }
    if let Some(path) = &cfg.output {
        write_json(path, &out)?;
    }
    if out.admissible && out.consistent != Some(false) {
        Ok(())
    } else {
        Err(Failure::new(EXIT_INCONSISTENT, "prescription rejected"))
    }
}

fn io_config(io: IoArgs) -> RunConfig {
    RunConfig {
        input: io.input,
        output: io.output,
        k_max: None,
        conv_tol: None,
        rank_tol: None,
        seed: None,
        emit_csv: None,
    }
}

fn run(cli: Cli) -> CmdResult {
    match cli.command {
        Command::Solve(a) => {
            let cfg = RunConfig {
                k_max: a.kmax,
                conv_tol: a.tol,
                rank_tol: a.rank_tol,
                emit_csv: a.emit_csv,
                ..io_config(a.io)
            };
            cmd_solve(&cfg)
        }
        Command::Prescribe(a) => {
            let cfg = RunConfig { seed: a.seed, ..io_config(IoArgs { input: a.input, output: Some(a.output) }) };
            cmd_prescribe(&cfg, a.randomize_free)
        }
        Command::Verify(a) => cmd_verify(&io_config(IoArgs { input: a.input, output: a.output }), a.verify_tol),
        Command::Roots(io) => cmd_roots(&io_config(io)),
        Command::Admissible(io) => cmd_admissible(&io_config(io)),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
