//! `fuzzyspec`: formula emission, evaluation, verification and sampling for
//! fuzzy spectral triples.
//!
//! Exit status: 0 on success, 1 on a validation or input error, 2 when a
//! verification run finds a mismatch.

use std::collections::hash_map::RandomState;
use std::fs;
use std::hash::BuildHasher;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use fuzzyspec::action::{trace_via, EvalPath};
use fuzzyspec::mcmc::{run_many, write_csv, OBS_ACTION, OBS_F, OBS_TR_D2};
use fuzzyspec::oracle::{verify, DEFAULT_TOLERANCE};
use fuzzyspec::{
    generate_trace_functionals, spectral_action, ActionSpec, ChainConfig, DiracData, Signature,
};
use serde_json::{json, Value};

#[derive(Debug, Parser)]
#[command(
    name = "fuzzyspec",
    version,
    about = "Spectral action of fuzzy geometries"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Print the generated trace functional of Tr D^power.
    Formula {
        /// Signature as `p,q`.
        #[arg(long, value_parser = parse_signature)]
        signature: Signature,
        /// Even power `2t` of the Dirac operator.
        #[arg(long)]
        power: u32,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
    },
    /// Evaluate Tr f(D) for a stored Dirac operator along every path.
    Eval {
        /// Dirac data JSON file.
        #[arg(long)]
        data: PathBuf,
        /// Action polynomial as `m:coeff` pairs, e.g. `2:1,4:0.5`.
        #[arg(long = "f", value_parser = parse_action)]
        f: ActionSpec,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
    },
    /// Compare closed forms and generated functionals with the dense oracle.
    Verify {
        #[arg(long, value_parser = parse_signature)]
        signature: Signature,
        /// Matrix size N.
        #[arg(long)]
        n: usize,
        /// Highest half-power t checked.
        #[arg(long, default_value_t = 2)]
        tmax: u32,
        /// Number of random seeds.
        #[arg(long, default_value_t = 5)]
        seeds: u64,
        /// First seed; chosen at random and printed when omitted.
        #[arg(long)]
        seed: Option<u64>,
        /// Relative tolerance.
        #[arg(long, default_value_t = DEFAULT_TOLERANCE)]
        tol: f64,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
    },
    /// Run Metropolis chains and write their CSV output.
    Sample {
        /// Chain config JSON file.
        #[arg(long)]
        config: PathBuf,
        /// Output CSV. With several chains the seed is appended to the stem.
        #[arg(long)]
        out: PathBuf,
        /// Overrides the config seed. When neither is given a seed is chosen
        /// and printed.
        #[arg(long)]
        seed: Option<u64>,
        /// Number of independent chains, seeded consecutively.
        #[arg(long, default_value_t = 1)]
        chains: u64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Text,
    Json,
}

fn parse_signature(text: &str) -> std::result::Result<Signature, String> {
    Signature::parse(text).map_err(|e| e.to_string())
}

fn parse_action(text: &str) -> std::result::Result<ActionSpec, String> {
    text.parse().map_err(|e: fuzzyspec::Error| e.to_string())
}

/// Outcome of a command that ran to completion.
enum Status {
    Ok,
    VerificationFailed,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli.command) {
        Ok(Status::Ok) => ExitCode::SUCCESS,
        Ok(Status::VerificationFailed) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn run(command: Command) -> Result<Status> {
    let stdout = io::stdout();
    let mut out = stdout.lock();
    match command {
        Command::Formula {
            signature,
            power,
            format,
        } => formula(&mut out, signature, power, format),
        Command::Eval { data, f, format } => eval(&mut out, &data, &f, format),
        Command::Verify {
            signature,
            n,
            tmax,
            seeds,
            seed,
            tol,
            format,
        } => verify_cmd(&mut out, signature, n, tmax, seeds, seed, tol, format),
        Command::Sample {
            config,
            out: path,
            seed,
            chains,
        } => sample(&mut out, &config, &path, seed, chains),
    }
}

fn auto_seed() -> u64 {
    RandomState::new().hash_one(std::time::SystemTime::now())
}

fn formula(out: &mut impl Write, sig: Signature, power: u32, format: Format) -> Result<Status> {
    if power == 0 || power % 2 == 1 {
        bail!("--power must be a positive even number, got {power}");
    }
    let f = generate_trace_functionals(sig, power / 2)?;
    match format {
        Format::Text => writeln!(out, "{}", f.render_text())?,
        Format::Json => writeln!(
            out,
            "{}",
            serde_json::to_string_pretty(&f.to_serializable())?
        )?,
    }
    Ok(Status::Ok)
}

fn read(path: &Path, what: &str) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("cannot read {what} `{}`", path.display()))
}

fn eval(out: &mut impl Write, path: &Path, spec: &ActionSpec, format: Format) -> Result<Status> {
    let data = DiracData::from_json(&read(path, "Dirac data file")?)?;
    let auto = spectral_action(spec, &data)?;
    let paths = [EvalPath::ClosedForm, EvalPath::Generated, EvalPath::Oracle];
    let mut rows = Vec::new();
    for term in &auto.terms {
        let values: Vec<(EvalPath, Option<f64>)> = paths
            .iter()
            .map(|&p| {
                let v = if term.path == EvalPath::Vanishing {
                    Some(0.0)
                } else {
                    trace_via(&data, term.power, p).ok()
                };
                (p, v)
            })
            .collect();
        rows.push((term, values));
    }
    match format {
        Format::Text => {
            writeln!(
                out,
                "signature {}  N={}  f = {}",
                data.signature(),
                data.n(),
                spec
            )?;
            writeln!(
                out,
                "{:>5} {:>12} {:>24} {:>24} {:>24}",
                "power", "coeff", "closed_form", "generated", "oracle"
            )?;
            for (term, values) in &rows {
                write!(out, "{:>5} {:>12} ", term.power, term.coefficient)?;
                for (_, v) in values {
                    match v {
                        Some(v) => write!(out, "{v:>24.15e} ")?,
                        None => write!(out, "{:>24} ", "-")?,
                    }
                }
                writeln!(out)?;
            }
            writeln!(out, "Tr f(D) = {:.15e}", auto.total)?;
        }
        Format::Json => {
            let terms: Vec<Value> = rows
                .iter()
                .map(|(term, values)| {
                    let mut per_path = serde_json::Map::new();
                    for (p, v) in values {
                        per_path.insert(p.to_string(), json!(v));
                    }
                    json!({
                        "power": term.power,
                        "coefficient": term.coefficient,
                        "trace": term.trace,
                        "path": term.path,
                        "paths": per_path,
                    })
                })
                .collect();
            let doc = json!({
                "signature": data.signature(),
                "N": data.n(),
                "total": auto.total,
                "terms": terms,
            });
            writeln!(out, "{}", serde_json::to_string_pretty(&doc)?)?;
        }
    }
    Ok(Status::Ok)
}

#[allow(clippy::too_many_arguments)]
fn verify_cmd(
    out: &mut impl Write,
    sig: Signature,
    n: usize,
    tmax: u32,
    count: u64,
    seed: Option<u64>,
    tol: f64,
    format: Format,
) -> Result<Status> {
    if n == 0 {
        bail!("--n must be at least 1");
    }
    if tmax == 0 {
        bail!("--tmax must be at least 1");
    }
    if count == 0 {
        bail!("--seeds must be at least 1");
    }
    if !(tol.is_finite() && tol > 0.0) {
        bail!("--tol must be positive, got {tol}");
    }
    let dim = sig.dim_v() * n * n;
    let cap = fuzzyspec::dirac::dim_cap();
    if dim > cap {
        bail!("dense dimension {dim} exceeds the cap {cap} (override with FUZZY_DIM_CAP)");
    }
    let first = seed.unwrap_or_else(|| {
        let s = auto_seed() >> 16;
        eprintln!("seed: {s}");
        s
    });
    let seeds: Vec<u64> = (0..count).map(|k| first.wrapping_add(k)).collect();
    let report = verify(sig, n, tmax, &seeds, tol);
    match format {
        Format::Text => write!(out, "{}", report.render_table())?,
        Format::Json => writeln!(out, "{}", serde_json::to_string_pretty(&report)?)?,
    }
    Ok(if report.pass {
        Status::Ok
    } else {
        Status::VerificationFailed
    })
}

/// Fills a missing `seed` in the config document, reporting the choice.
fn resolve_seed(doc: &mut Value, flag: Option<u64>) -> Result<u64> {
    let obj = doc
        .as_object_mut()
        .context("chain config must be a JSON object")?;
    let seed = match (flag, obj.get("seed")) {
        (Some(s), _) => s,
        (None, Some(v)) => v
            .as_u64()
            .context("config `seed` must be a non-negative integer")?,
        (None, None) => {
            let s = auto_seed() >> 16;
            eprintln!("seed: {s}");
            s
        }
    };
    obj.insert("seed".into(), json!(seed));
    Ok(seed)
}

fn chain_path(base: &Path, seed: u64, chains: u64) -> PathBuf {
    if chains == 1 {
        return base.to_path_buf();
    }
    let stem = base.file_stem().and_then(|s| s.to_str()).unwrap_or("chain");
    let name = match base.extension().and_then(|e| e.to_str()) {
        Some(ext) => format!("{stem}_{seed}.{ext}"),
        None => format!("{stem}_{seed}"),
    };
    base.with_file_name(name)
}

fn sample(
    out: &mut impl Write,
    config_path: &Path,
    csv_path: &Path,
    seed: Option<u64>,
    chains: u64,
) -> Result<Status> {
    if chains == 0 {
        bail!("--chains must be at least 1");
    }
    let mut doc: Value = serde_json::from_str(&read(config_path, "chain config")?)
        .context("chain config is not valid JSON")?;
    let first = resolve_seed(&mut doc, seed)?;
    let config = ChainConfig::from_json(&doc.to_string())?;
    let dim = config.signature.dim_v() * config.n * config.n;
    let cap = fuzzyspec::dirac::dim_cap();
    if config.eval_path == EvalPath::Oracle && dim > cap {
        bail!("dense dimension {dim} exceeds the cap {cap} (override with FUZZY_DIM_CAP)");
    }
    let seeds: Vec<u64> = (0..chains).map(|k| first.wrapping_add(k)).collect();
    let results = run_many(&config, &seeds)?;
    for stats in &results {
        let path = chain_path(csv_path, stats.seed, chains);
        let file = fs::File::create(&path)
            .with_context(|| format!("cannot create `{}`", path.display()))?;
        write_csv(stats, io::BufWriter::new(file))?;
        write!(
            out,
            "seed {}  samples {}  acceptance {:.4}  -> {}",
            stats.seed,
            stats.len(),
            stats.acceptance_rate,
            path.display()
        )?;
        for name in [OBS_ACTION, OBS_F, OBS_TR_D2] {
            if let Some((mean, se)) = stats.summary.get(name) {
                write!(out, "  <{name}> = {mean:.6} ± {se:.6}")?;
            }
        }
        writeln!(out)?;
    }
    Ok(Status::Ok)
}
