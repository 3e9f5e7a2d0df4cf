//! `bb1`: solve single precoding instances and run BER / complexity sweeps.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use bb1_precoder::baselines::{
    exhaustive_leaf_count, exhaustive_solve, exhaustive_tree_node_count, reference_exhaustive_count,
    wf_infinite_precoder, wf_quantized_precoder,
};
use bb1_precoder::model::{cmqp_objective, qp_objective};
use bb1_precoder::numerics::{ComplexMatrix, C64};
use bb1_precoder::sim::{run_ber_sweep, run_ber_sweep_with_threads, PrecoderKind, SimConfig, SimResult};
use bb1_precoder::{bb1_solve, PrecodeError, PrecodingProblem, SearchStats, TrickConfig};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Parser)]
#[command(name = "bb1", version, about = "Exact 1-bit MU-MIMO precoding by branch and bound")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one instance file and print the result as JSON.
    Solve {
        /// JSON instance with fields U, B, N0, H_re, H_im, s_re, s_im.
        instance: PathBuf,
        #[arg(long, value_enum, default_value_t = Precoder::Bb1)]
        precoder: Precoder,
        #[command(flatten)]
        tricks: TrickFlags,
    },
    /// Monte-Carlo sweep over SNR.
    Sweep {
        #[arg(value_enum)]
        kind: SweepKind,
        #[command(flatten)]
        opts: SweepOpts,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Precoder {
    Bb1,
    Exhaustive,
    WfQuantized,
    WfInfinite,
}

impl From<Precoder> for PrecoderKind {
    fn from(p: Precoder) -> Self {
        match p {
            Precoder::Bb1 => PrecoderKind::Bb1,
            Precoder::Exhaustive => PrecoderKind::Exhaustive,
            Precoder::WfQuantized => PrecoderKind::WfQuantized,
            Precoder::WfInfinite => PrecoderKind::WfInfinite,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Switch {
    On,
    Off,
}

impl Switch {
    fn on(self) -> bool {
        self == Switch::On
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum SweepKind {
    Ber,
    Complexity,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Args)]
struct TrickFlags {
    #[arg(long, value_enum, default_value_t = Switch::On)]
    trick_radius_init: Switch,
    #[arg(long, value_enum, default_value_t = Switch::On)]
    trick_sorted_qr: Switch,
    #[arg(long, value_enum, default_value_t = Switch::On)]
    trick_eigen_future: Switch,
    #[arg(long, value_enum, default_value_t = Switch::On)]
    trick_preprune: Switch,
}

impl TrickFlags {
    fn config(&self) -> TrickConfig {
        TrickConfig {
            radius_init: self.trick_radius_init.on(),
            sorted_qr: self.trick_sorted_qr.on(),
            eigen_future: self.trick_eigen_future.on(),
            preprune: self.trick_preprune.on(),
        }
    }
}

#[derive(Args)]
struct SweepOpts {
    #[arg(long, default_value_t = 8)]
    bs_antennas: usize,
    #[arg(long, default_value_t = 2)]
    users: usize,
    #[arg(long, default_value_t = -10.0, allow_hyphen_values = true)]
    snr_min: f64,
    #[arg(long, default_value_t = 10.0, allow_hyphen_values = true)]
    snr_max: f64,
    #[arg(long, default_value_t = 2.0, allow_hyphen_values = true)]
    snr_step: f64,
    #[arg(long, default_value_t = 100)]
    trials: usize,
    #[arg(long, default_value_t = 10)]
    symbols_per_trial: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = Precoder::Bb1)]
    precoder: Precoder,
    #[command(flatten)]
    tricks: TrickFlags,
    /// Output file; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
    /// Worker threads; 0 uses all cores.
    #[arg(long, default_value_t = 0)]
    threads: usize,
    /// Record per-solve wall time (makes the output nondeterministic).
    #[arg(long)]
    timing: bool,
}

/// A failure with its exit code.
struct Failure {
    code: u8,
    kind: &'static str,
    message: String,
    field: Option<String>,
}

impl Failure {
    fn parse(field: &str, message: impl Into<String>) -> Self {
        Failure {
            code: 2,
            kind: "parse",
            message: message.into(),
            field: Some(field.into()),
        }
    }

    fn flag(message: impl Into<String>) -> Self {
        Failure {
            code: 5,
            kind: "flag",
            message: message.into(),
            field: None,
        }
    }

    fn io(message: impl Into<String>) -> Self {
        Failure {
            code: 1,
            kind: "io",
            message: message.into(),
            field: None,
        }
    }
}

impl From<PrecodeError> for Failure {
    fn from(e: PrecodeError) -> Self {
        let (code, kind) = match &e {
            PrecodeError::InstanceTooLarge { .. } => (4, "too_large"),
            PrecodeError::DimensionMismatch(_) | PrecodeError::InvalidInput(_) | PrecodeError::NotHermitian { .. } => {
                (2, "parse")
            }
            PrecodeError::DegenerateInstance(_)
            | PrecodeError::ZeroCorrelation
            | PrecodeError::SingularMatrix { .. } => (3, "degenerate"),
        };
        Failure {
            code,
            kind,
            message: e.to_string(),
            field: None,
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            return report(Failure::flag(e.to_string().trim_end()));
        }
    };
    let result = match cli.command {
        Command::Solve {
            instance,
            precoder,
            tricks,
        } => solve(&instance, precoder.into(), &tricks.config()),
        Command::Sweep { kind, opts } => sweep(kind, &opts),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => report(f),
    }
}

fn report(f: Failure) -> ExitCode {
    let mut err = json!({ "kind": f.kind, "code": f.code, "message": f.message });
    if let Some(field) = f.field {
        err["field"] = json!(field);
    }
    eprintln!("{}", json!({ "error": err }));
    ExitCode::from(f.code)
}

fn field<'a>(doc: &'a Value, name: &str) -> Result<&'a Value, Failure> {
    doc.get(name)
        .ok_or_else(|| Failure::parse(name, format!("missing field `{name}`")))
}

fn count_field(doc: &Value, name: &str) -> Result<usize, Failure> {
    field(doc, name)?
        .as_u64()
        .filter(|&v| v >= 1)
        .map(|v| v as usize)
        .ok_or_else(|| Failure::parse(name, format!("`{name}` must be a positive integer")))
}

fn real_array(v: &Value, name: &str, len: usize) -> Result<Vec<f64>, Failure> {
    let items = v
        .as_array()
        .ok_or_else(|| Failure::parse(name, format!("`{name}` must be an array of numbers")))?;
    if items.len() != len {
        return Err(Failure::parse(
            name,
            format!("`{name}` has length {}, expected {len}", items.len()),
        ));
    }
    items
        .iter()
        .map(|x| {
            x.as_f64()
                .ok_or_else(|| Failure::parse(name, format!("`{name}` holds a non-numeric entry")))
        })
        .collect()
}

fn real_matrix(doc: &Value, name: &str, rows: usize, cols: usize) -> Result<Vec<Vec<f64>>, Failure> {
    let items = field(doc, name)?
        .as_array()
        .ok_or_else(|| Failure::parse(name, format!("`{name}` must be an array of {rows} rows")))?;
    if items.len() != rows {
        return Err(Failure::parse(
            name,
            format!("`{name}` has {} rows, expected {rows}", items.len()),
        ));
    }
    items.iter().map(|row| real_array(row, name, cols)).collect()
}

fn load_instance(path: &Path) -> Result<PrecodingProblem, Failure> {
    let text = fs::read_to_string(path).map_err(|e| Failure::io(format!("{}: {e}", path.display())))?;
    let doc: Value = serde_json::from_str(&text).map_err(|e| Failure {
        field: None,
        ..Failure::parse("", format!("invalid JSON: {e}"))
    })?;
    let u = count_field(&doc, "U")?;
    let b = count_field(&doc, "B")?;
    let n0 = field(&doc, "N0")?
        .as_f64()
        .filter(|v| *v >= 0.0)
        .ok_or_else(|| Failure::parse("N0", "`N0` must be a nonnegative number"))?;
    let h_re = real_matrix(&doc, "H_re", u, b)?;
    let h_im = real_matrix(&doc, "H_im", u, b)?;
    let s_re = real_array(field(&doc, "s_re")?, "s_re", u)?;
    let s_im = real_array(field(&doc, "s_im")?, "s_im", u)?;
    let h = ComplexMatrix::from_fn(u, b, |i, j| C64::new(h_re[i][j], h_im[i][j]));
    let s = s_re.iter().zip(&s_im).map(|(&re, &im)| C64::new(re, im)).collect();
    Ok(PrecodingProblem::new(h, s, n0)?)
}

fn complex_json(v: &[C64]) -> Value {
    json!(v.iter().map(|c| json!({ "re": c.re, "im": c.im })).collect::<Vec<_>>())
}

fn solve(path: &Path, kind: PrecoderKind, tricks: &TrickConfig) -> Result<(), Failure> {
    let problem = load_instance(path)?;
    let (x, beta, stats) = match kind {
        PrecoderKind::Bb1 => {
            let r = bb1_solve(&problem, tricks)?;
            (r.x, r.beta, r.stats)
        }
        PrecoderKind::Exhaustive => {
            let r = exhaustive_solve(&problem)?;
            (r.x, r.beta, r.stats)
        }
        PrecoderKind::WfQuantized => {
            let r = wf_quantized_precoder(&problem)?;
            (r.x, r.beta, r.stats)
        }
        PrecoderKind::WfInfinite => {
            let r = wf_infinite_precoder(&problem)?;
            (r.x, r.beta, SearchStats::default())
        }
    };
    let qp_mse = qp_objective(&x, beta, &problem);
    let cmqp_value = cmqp_objective(&x, problem.augmented_channel(), problem.z_mrt())?;
    let out = json!({
        "version": VERSION,
        "precoder": kind.name(),
        "tricks": tricks,
        "x": complex_json(&x),
        "beta": beta,
        "qp_mse": qp_mse,
        "cmqp_value": cmqp_value,
        "stats": {
            "nodes_visited": stats.nodes_visited,
            "leaves_reached": stats.leaves_reached,
            "radius_updates": stats.radius_updates,
            "wall_time_ms": stats.wall_time.as_secs_f64() * 1e3,
        },
    });
    println!("{}", serde_json::to_string_pretty(&out).expect("JSON value serializes"));
    Ok(())
}

/// `min, min + step, ...` up to `max` inclusive.
fn snr_grid(min: f64, max: f64, step: f64) -> Result<Vec<f64>, Failure> {
    if !(min.is_finite() && max.is_finite() && step.is_finite()) {
        return Err(Failure::flag("SNR bounds and step must be finite"));
    }
    if step <= 0.0 {
        return Err(Failure::flag(format!("--snr-step must be positive, got {step}")));
    }
    if min > max {
        return Err(Failure::flag(format!("--snr-min {min} exceeds --snr-max {max}")));
    }
    let count = ((max - min) / step + 1e-9).floor() as usize + 1;
    Ok((0..count).map(|k| min + k as f64 * step).collect())
}

fn sweep(kind: SweepKind, o: &SweepOpts) -> Result<(), Failure> {
    let config = SimConfig {
        snr_db_points: snr_grid(o.snr_min, o.snr_max, o.snr_step)?,
        trials: o.trials,
        symbols_per_trial: o.symbols_per_trial,
        master_seed: o.seed,
        tricks: o.tricks.config(),
        record_timing: o.timing,
        ..SimConfig::new(o.bs_antennas, o.users, o.precoder.into())
    };
    config.validate().map_err(|e| match e {
        PrecodeError::InvalidInput(msg) => Failure::flag(msg),
        other => other.into(),
    })?;
    let kind_name = match kind {
        SweepKind::Ber => "ber",
        SweepKind::Complexity => "complexity",
    };
    let b = config.antennas;
    let reference = (b <= 30).then(|| {
        json!({
            "exhaustive_leaf_count": exhaustive_leaf_count(b),
            "exhaustive_tree_nodes": exhaustive_tree_node_count(b, config.tricks.preprune),
            "reference_formula": reference_exhaustive_count(b),
        })
    });
    let mut provenance = json!({ "version": VERSION, "kind": kind_name, "config": config });
    if let (SweepKind::Complexity, Some(r)) = (kind, &reference) {
        provenance["exhaustive_reference"] = r.clone();
    }
    eprintln!("{provenance}");

    let result = if o.threads == 0 {
        run_ber_sweep(&config)?
    } else {
        run_ber_sweep_with_threads(&config, o.threads)?
    };
    let text = render(&result, kind, o.format, &provenance);
    match &o.out {
        Some(path) => fs::write(path, text).map_err(|e| Failure::io(format!("{}: {e}", path.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn render(result: &SimResult, kind: SweepKind, format: Format, provenance: &Value) -> String {
    match format {
        Format::Csv => format!("# {provenance}\n{}", result.to_csv()),
        Format::Json => {
            let mut doc = result.to_json();
            doc["kind"] = provenance["kind"].clone();
            if let SweepKind::Complexity = kind {
                if let Some(r) = provenance.get("exhaustive_reference") {
                    doc["exhaustive_reference"] = r.clone();
                }
            }
            let mut s = serde_json::to_string_pretty(&doc).expect("JSON value serializes");
            s.push('\n');
            s
        }
    }
}
