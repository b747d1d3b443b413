//! `laakso-lab`: build instances, embed them, certify embeddings, and run
//! sweeps and doubling probes from the command line.
//!
//! Exit codes: 0 success, 2 precondition, 3 hard invariant violation,
//! 4 I/O or schema error. Errors are reported as one JSON object on stderr.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};

use laakso_core::certify::{certify, epsilon_for, Certification, PRECONDITION_RTOL};
use laakso_core::doubling::{doubling_estimate, envelope_check, write_doubling_csv, write_envelope_csv, RadiusGrid};
use laakso_core::instance::{build_instance_with, BuildOptions, InstanceDoc, DEFAULT_MAX_POINTS};
use laakso_core::lab::{
    gaussian_projection, stress_minimize, tradeoff_sweep_with, write_sweep_csv, Decay, Init, OptimizerConfig,
    SweepGrid,
};
use laakso_core::metric::{lp_dist, normalize_nonexpansive};
use laakso_core::report::{fmt_f64, to_stable_json};
use laakso_core::{distortion, Embedding, ErrorKind, Instance, LabError, Params};

const RUN_CONFIG_FORMAT: &str = "laakso-run-config/1";
const EMBEDDING_FORMAT: &str = "laakso-embedding/1";
const CERTIFICATION_FORMAT: &str = "laakso-certification/1";
const SWEEP_FORMAT: &str = "laakso-sweep/1";
const DOUBLING_FORMAT: &str = "laakso-doubling/1";
const ENVELOPE_FORMAT: &str = "laakso-envelope/1";

#[derive(Parser)]
#[command(name = "laakso-lab", version, about = "Recursive doubling subsets of l_p: construction, embedding and certification")]
struct Cli {
    /// Worker threads (defaults to the number of CPUs). Output does not depend on it.
    #[arg(long, global = true)]
    jobs: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build an instance and write it as JSON.
    Build(BuildArgs),
    /// Audit an embedding with the potential-function certifier.
    Certify(CertifyArgs),
    /// Embed an instance with a Gaussian projection or the stress minimizer.
    Embed(EmbedArgs),
    /// Run a parameter sweep described by a JSON grid file.
    Sweep(SweepArgs),
    /// Estimate the doubling constant by greedy ball packings.
    Doubling(DoublingArgs),
    /// Check that descendants stay close to their ancestor edges.
    Envelope(EnvelopeArgs),
}

#[derive(Args, Serialize)]
struct BuildArgs {
    #[arg(long)]
    p: Option<f64>,
    #[arg(long, conflicts_with = "eps_for")]
    eps: Option<f64>,
    /// Pick the largest eps the growth lemma allows for target dimension D_DIM
    /// and distortion DIST under exponent P.
    #[arg(long, num_args = 3, value_names = ["D_DIM", "DIST", "P"])]
    eps_for: Option<Vec<f64>>,
    #[arg(long)]
    k: usize,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = DEFAULT_MAX_POINTS)]
    max_points: usize,
}

#[derive(Args, Serialize)]
struct CertifyArgs {
    #[arg(long)]
    instance: PathBuf,
    #[arg(long)]
    embedding: PathBuf,
    /// Rescale the embedding to be non-expansive before auditing.
    #[arg(long)]
    normalize: bool,
    /// Output file (stdout when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum EmbedMethod {
    Gaussian,
    Stress,
}

#[derive(Clone, Copy, ValueEnum)]
enum InitArg {
    Gaussian,
    ProjectionWarmStart,
    Source,
    Gadget,
}

#[derive(Clone, Copy, ValueEnum)]
enum DecayArg {
    InvSqrt,
    Constant,
}

#[derive(Args)]
struct EmbedArgs {
    #[arg(long)]
    instance: PathBuf,
    #[arg(long, value_enum)]
    method: EmbedMethod,
    #[arg(long)]
    d: usize,
    #[arg(long, env = "LAAKSO_LAB_SEED", default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    restarts: Option<usize>,
    #[arg(long)]
    iterations: Option<usize>,
    #[arg(long)]
    step_size: Option<f64>,
    #[arg(long, value_enum)]
    decay: Option<DecayArg>,
    #[arg(long)]
    temperature: Option<f64>,
    #[arg(long, value_enum)]
    init: Option<InitArg>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Serialize)]
struct SweepArgs {
    #[arg(long)]
    grid: PathBuf,
    #[arg(long)]
    out_csv: PathBuf,
    #[arg(long)]
    out_json: PathBuf,
    /// Write every successful cell's embedding into this directory.
    #[arg(long)]
    persist_dir: Option<PathBuf>,
}

#[derive(Args, Serialize)]
struct DoublingArgs {
    #[arg(long)]
    instance: PathBuf,
    /// `auto` or a comma-separated list of radii.
    #[arg(long, default_value = "auto")]
    radii: String,
    #[arg(long)]
    out_json: PathBuf,
    #[arg(long)]
    out_csv: PathBuf,
}

#[derive(Args, Serialize)]
struct EnvelopeArgs {
    #[arg(long)]
    instance: PathBuf,
    #[arg(long)]
    out_json: PathBuf,
    #[arg(long)]
    out_csv: PathBuf,
}

/// Command outcome: success, or a hard violation found in otherwise valid output.
enum Outcome {
    Ok,
    Violation(String),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            return report_error(&LabError::InvalidParams("--jobs must be >= 1".into()));
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global() {
            return report_error(&LabError::Invariant(format!("thread pool: {e}")));
        }
    }
    let result = match &cli.command {
        Command::Build(a) => cmd_build(a),
        Command::Certify(a) => cmd_certify(a),
        Command::Embed(a) => cmd_embed(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Doubling(a) => cmd_doubling(a),
        Command::Envelope(a) => cmd_envelope(a),
    };
    match result {
        Ok(Outcome::Ok) => ExitCode::SUCCESS,
        Ok(Outcome::Violation(msg)) => {
            eprintln!("{}", error_json("violation", 3, &msg));
            ExitCode::from(3)
        }
        Err(e) => report_error(&e),
    }
}

fn exit_code(kind: ErrorKind) -> u8 {
    match kind {
        ErrorKind::Precondition => 2,
        ErrorKind::Violation => 3,
        ErrorKind::Schema => 4,
    }
}

fn error_json(kind: &str, code: u8, message: &str) -> String {
    json!({"error": {"kind": kind, "code": code, "message": message}}).to_string()
}

fn report_error(e: &LabError) -> ExitCode {
    let kind = e.kind();
    let name = match kind {
        ErrorKind::Precondition => "precondition",
        ErrorKind::Violation => "violation",
        ErrorKind::Schema => "schema",
    };
    let code = exit_code(kind);
    eprintln!("{}", error_json(name, code, &e.to_string()));
    ExitCode::from(code)
}

type Res<T> = laakso_core::Result<T>;

fn run_config(command: &str, body: Value) -> Value {
    json!({
        "format": RUN_CONFIG_FORMAT,
        "command": command,
        "version": env!("CARGO_PKG_VERSION"),
        "config": body,
    })
}

fn read(path: &Path) -> Res<String> {
    fs::read_to_string(path)
        .map_err(|e| LabError::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))
}

fn write(path: &Path, contents: &[u8]) -> Res<()> {
    fs::write(path, contents)
        .map_err(|e| LabError::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))
}

fn load_instance(path: &Path) -> Res<Instance> {
    Instance::from_json(&read(path)?)
}

fn load_embedding(path: &Path) -> Res<Embedding> {
    // Extra keys (format, run_config, report) are ignored.
    Ok(serde_json::from_str(&read(path)?)?)
}

/// Stable JSON of `value` with `format` and `run_config` keys added.
fn artifact<T: Serialize>(value: &T, format: &str, rc: &Value) -> Res<String> {
    let mut v = serde_json::to_value(value)?;
    match v.as_object_mut() {
        Some(obj) => {
            obj.insert("format".into(), json!(format));
            obj.insert("run_config".into(), rc.clone());
        }
        None => return Err(LabError::Invariant("artifact is not a JSON object".into())),
    }
    to_stable_json(&v)
}

fn cmd_build(a: &BuildArgs) -> Res<Outcome> {
    let (p, eps) = match (&a.eps_for, a.eps) {
        (Some(v), None) => {
            let (d, dist, p) = (v[0], v[1], v[2]);
            if d < 1.0 || d.fract() != 0.0 {
                return Err(LabError::InvalidParams(format!("--eps-for dimension must be a positive integer, got {d}")));
            }
            if let Some(pp) = a.p {
                if pp != p {
                    return Err(LabError::InvalidParams(format!("--p {pp} disagrees with --eps-for exponent {p}")));
                }
            }
            (p, epsilon_for(d as usize, dist, p)?)
        }
        (None, Some(eps)) => {
            let p = a
                .p
                .ok_or_else(|| LabError::InvalidParams("--p is required with --eps".into()))?;
            (p, eps)
        }
        _ => return Err(LabError::InvalidParams("give exactly one of --eps or --eps-for".into())),
    };
    let params = Params::new(p, eps, a.k)?;
    let inst = build_instance_with(
        &params,
        BuildOptions {
            max_points: a.max_points,
        },
    )?;
    let mut doc = InstanceDoc::from(&inst);
    doc.run_config = Some(run_config("build", serde_json::to_value(a)?));
    write(&a.out, to_stable_json(&doc)?.as_bytes())?;

    println!("p={} eps={} k={} n={} dim={}", fmt_f64(p), fmt_f64(eps), a.k, inst.n(), params.dim());
    println!("level,edges,edge_len_min,edge_len_max,diagonals,diag_len_min,diag_len_max");
    for level in 0..=a.k {
        let lens: Vec<f64> = inst.edge_range(level).map(|e| inst.edge_length(e)).collect();
        let diags: Vec<f64> = inst
            .diagonals
            .iter()
            .filter(|dg| dg.level == level)
            .map(|dg| lp_dist(inst.coords(dg.u), inst.coords(dg.v), p))
            .collect::<Res<_>>()?;
        let (dmin, dmax) = if diags.is_empty() {
            ("".to_string(), "".to_string())
        } else {
            (fmt_f64(min(&diags)), fmt_f64(max(&diags)))
        };
        println!(
            "{level},{},{},{},{},{dmin},{dmax}",
            lens.len(),
            fmt_f64(min(&lens)),
            fmt_f64(max(&lens)),
            diags.len()
        );
    }
    Ok(Outcome::Ok)
}

fn min(v: &[f64]) -> f64 {
    v.iter().copied().fold(f64::INFINITY, f64::min)
}

fn max(v: &[f64]) -> f64 {
    v.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

fn cmd_certify(a: &CertifyArgs) -> Res<Outcome> {
    let inst = load_instance(&a.instance)?;
    let mut emb = load_embedding(&a.embedding)?;
    emb.check_covers(&inst)?;
    if a.normalize {
        emb = normalize_nonexpansive(&inst, &emb)?;
    } else {
        let rep = distortion(&inst, &emb)?;
        if rep.max_expansion > 1.0 + PRECONDITION_RTOL {
            return Err(LabError::Precondition(format!(
                "embedding expands distances by {} > 1; rerun with --normalize",
                fmt_f64(rep.max_expansion)
            )));
        }
    }
    let cert: Certification = certify(&inst, &emb)?;
    let rc = run_config("certify", json!({
        "instance": a.instance,
        "embedding": a.embedding,
        "normalize": a.normalize,
        "out": a.out,
    }));
    let text = artifact(&cert, CERTIFICATION_FORMAT, &rc)?;
    match &a.out {
        Some(path) => write(path, text.as_bytes())?,
        None => print!("{text}"),
    }
    if cert.has_violation() {
        let what = if cert.witness.violated {
            format!("growth step failed at level {:?}", cert.witness.first_violation_level)
        } else {
            format!("edge potential above the cap {}", fmt_f64(cert.cap.cap))
        };
        return Ok(Outcome::Violation(what));
    }
    if a.out.is_some() {
        eprintln!(
            "certified_lower_bound={} measured_distortion={} chain_length={}",
            fmt_f64(cert.certified_lower_bound),
            fmt_f64(cert.measured_distortion),
            cert.witness.chain.len()
        );
    }
    Ok(Outcome::Ok)
}

fn optimizer_config(a: &EmbedArgs) -> OptimizerConfig {
    let mut cfg = OptimizerConfig {
        seed: a.seed,
        ..Default::default()
    };
    if let Some(v) = a.restarts {
        cfg.restarts = v;
    }
    if let Some(v) = a.iterations {
        cfg.iterations = v;
    }
    if let Some(v) = a.step_size {
        cfg.step_size = v;
    }
    if let Some(v) = a.temperature {
        cfg.temperature = v;
    }
    if let Some(v) = a.decay {
        cfg.decay = match v {
            DecayArg::InvSqrt => Decay::InvSqrt,
            DecayArg::Constant => Decay::Constant,
        };
    }
    if let Some(v) = a.init {
        cfg.init = match v {
            InitArg::Gaussian => Init::Gaussian,
            InitArg::ProjectionWarmStart => Init::ProjectionWarmStart,
            InitArg::Source => Init::Source,
            InitArg::Gadget => Init::Gadget,
        };
    }
    cfg
}

fn cmd_embed(a: &EmbedArgs) -> Res<Outcome> {
    let inst = load_instance(&a.instance)?;
    if a.d == 0 {
        return Err(LabError::InvalidParams("--d must be >= 1".into()));
    }
    let (emb, body) = match a.method {
        EmbedMethod::Gaussian => (
            gaussian_projection(&inst, a.d, a.seed)?,
            json!({"seed": a.seed}),
        ),
        EmbedMethod::Stress => {
            let cfg = optimizer_config(a);
            (stress_minimize(&inst, a.d, &cfg)?, json!({"optimizer": cfg}))
        }
    };
    let report = distortion(&inst, &emb)?;
    let mut config = json!({
        "instance": a.instance,
        "method": a.method,
        "d": a.d,
        "out": a.out,
    });
    if let (Some(obj), Some(extra)) = (config.as_object_mut(), body.as_object()) {
        obj.extend(extra.clone());
    }
    let rc = run_config("embed", config);
    let mut doc = serde_json::to_value(&emb)?;
    if let Some(obj) = doc.as_object_mut() {
        obj.insert("report".into(), serde_json::to_value(&report)?);
    }
    write(&a.out, artifact(&doc, EMBEDDING_FORMAT, &rc)?.as_bytes())?;

    let params = inst.params;
    println!("n,k,p,eps,d,method,seed,expansion,contraction,distortion");
    println!(
        "{},{},{},{},{},{},{},{},{},{}",
        inst.n(),
        params.k,
        fmt_f64(params.p),
        fmt_f64(params.eps),
        a.d,
        emb.meta.method,
        a.seed,
        fmt_f64(report.max_expansion),
        fmt_f64(report.max_contraction),
        fmt_f64(report.distortion)
    );
    if !report.distortion.is_finite() {
        return Ok(Outcome::Violation("embedding collapses distinct points".into()));
    }
    Ok(Outcome::Ok)
}

fn cmd_sweep(a: &SweepArgs) -> Res<Outcome> {
    let text = read(&a.grid)?;
    let grid: SweepGrid = serde_json::from_str(&text).map_err(|e| LabError::Schema(format!("grid file: {e}")))?;
    if let Some(dir) = &a.persist_dir {
        fs::create_dir_all(dir)?;
    }
    let rc = run_config("sweep", json!({
        "grid_file": a.grid,
        "grid": grid,
        "out_csv": a.out_csv,
        "out_json": a.out_json,
        "persist_dir": a.persist_dir,
    }));
    let result = tradeoff_sweep_with(&grid, |row, emb| {
        let Some(dir) = &a.persist_dir else {
            return Ok(());
        };
        let name = format!(
            "k{}_p{}_eps{}_d{}_{}_seed{}.json",
            row.k,
            fmt_f64(row.p),
            fmt_f64(row.eps),
            row.d,
            row.method.name(),
            row.seed
        );
        write(&dir.join(name), artifact(emb, EMBEDDING_FORMAT, &rc)?.as_bytes())
    })?;
    let mut csv = Vec::new();
    write_sweep_csv(&result.rows, &mut csv)?;
    write(&a.out_csv, &csv)?;
    write(&a.out_json, artifact(&result, SWEEP_FORMAT, &rc)?.as_bytes())?;

    let failed = result.failed_rows();
    if failed > 0 {
        eprintln!("{failed} of {} cells failed; see the error column of the JSON output", result.rows.len());
    }
    let unsound: Vec<String> = result
        .rows
        .iter()
        .filter(|r| !r.respects_certificate(1e-9))
        .map(|r| format!("k={} d={} {} seed={}", r.k, r.d, r.method.name(), r.seed))
        .collect();
    if !unsound.is_empty() {
        return Ok(Outcome::Violation(format!(
            "measured distortion below the certified bound in: {}",
            unsound.join("; ")
        )));
    }
    Ok(Outcome::Ok)
}

fn parse_radii(s: &str) -> Res<RadiusGrid> {
    if s.trim() == "auto" {
        return Ok(RadiusGrid::Auto);
    }
    s.split(',')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .map_err(|e| LabError::InvalidParams(format!("radius {t:?}: {e}")))
        })
        .collect::<Res<Vec<f64>>>()
        .map(RadiusGrid::Explicit)
}

fn cmd_doubling(a: &DoublingArgs) -> Res<Outcome> {
    let inst = load_instance(&a.instance)?;
    let grid = parse_radii(&a.radii)?;
    let est = doubling_estimate(&inst, &grid)?;
    let rc = run_config("doubling", serde_json::to_value(a)?);
    write(&a.out_json, artifact(&est, DOUBLING_FORMAT, &rc)?.as_bytes())?;
    let mut csv = Vec::new();
    write_doubling_csv(&est, &mut csv)?;
    write(&a.out_csv, &csv)?;
    println!(
        "n={} scales={} lambda_hat={} lambda_hat_squared={}",
        inst.n(),
        est.scales.len(),
        est.lambda_hat,
        est.lambda_hat_squared
    );
    Ok(Outcome::Ok)
}

fn cmd_envelope(a: &EnvelopeArgs) -> Res<Outcome> {
    let inst = load_instance(&a.instance)?;
    let rep = envelope_check(&inst)?;
    let rc = run_config("envelope", serde_json::to_value(a)?);
    write(&a.out_json, artifact(&rep, ENVELOPE_FORMAT, &rc)?.as_bytes())?;
    let mut csv = Vec::new();
    write_envelope_csv(&rep, &mut csv)?;
    write(&a.out_csv, &csv)?;
    println!(
        "edges={} failures={} worst_ratio={}",
        rep.rows.len(),
        rep.failures,
        fmt_f64(rep.worst_ratio)
    );
    if !rep.all_pass() {
        return Ok(Outcome::Violation(format!("{} edges exceed the envelope bound", rep.failures)));
    }
    Ok(Outcome::Ok)
}
