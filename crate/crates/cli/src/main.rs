//! Command-line front end for the robustness checker.
//!
//! Three subcommands cover the library's entry points:
//!
//! * `verify` — prove that every point in an L∞ ball around an input keeps
//!   the network's classification.
//! * `quantify` — when full verification fails, lower-bound the fraction of
//!   the ball that is provably safe.
//! * `max-radius` — binary-search the largest verifiable radius.
//!
//! Every command prints a JSON report (stdout by default, `--output FILE` to
//! write it to disk; a flat CSV summary is placed next to the file for
//! tabulation). Reports contain the echoed configuration and no timing
//! information, so reruns of the same query are byte-identical; wall time
//! goes to stderr and the CSV only.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use relucheck::network::{load_network, NetFormat};
use relucheck::quant::{quantify, QuantOptions, QuantReport};
use relucheck::refine::{
    max_verifiable_radius, verify, RegionVerdict, Verdict, VerificationReport, VerifyOptions,
};
use relucheck::Network;

/// Exit code for a sound "not verified" answer (errors use 1).
const EXIT_UNKNOWN: u8 = 2;

#[derive(Parser)]
#[command(
    name = "relucheck",
    version,
    about = "Local-robustness checking for ReLU feedforward networks",
    propagate_version = true
)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Worker threads for parallel phases (0 = one per core).
    #[arg(long, global = true, default_value_t = 0)]
    jobs: usize,

    /// Seed echoed into the report; reserved for sampling-based workflows.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
}

#[derive(Subcommand)]
enum Command {
    /// Prove that an L∞ ball around the input keeps its classification.
    Verify(VerifyArgs),
    /// Lower-bound the provably safe fraction of the perturbation ball.
    Quantify(QuantifyArgs),
    /// Binary-search the largest verifiable radius within a bracket.
    MaxRadius(MaxRadiusArgs),
}

#[derive(Args)]
struct InstanceArgs {
    /// Network file.
    #[arg(long)]
    network: PathBuf,

    /// Network file format; inferred from the extension when omitted
    /// (`.nnet` is the text format, anything else JSON).
    #[arg(long, value_enum)]
    format: Option<FormatArg>,

    /// File holding the centre input: a JSON array or whitespace/
    /// comma-separated numbers.
    #[arg(long)]
    input: PathBuf,

    /// Perturbation radius (for `max-radius`: the upper search bracket).
    #[arg(long)]
    radius: f64,

    /// Write the JSON report here instead of stdout; a CSV summary is
    /// written alongside with the extension replaced by `.csv`.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct VerifyArgs {
    #[command(flatten)]
    instance: InstanceArgs,

    /// Refinement iterations per spurious region (0 = bound propagation
    /// only).
    #[arg(long, default_value_t = 5)]
    iterations: usize,

    /// Encode each spurious region by its half-space instead of the
    /// decision-boundary slice.
    #[arg(long)]
    no_boundary: bool,

    /// Process candidate labels in label order instead of
    /// smallest-region-first.
    #[arg(long)]
    no_ordering: bool,
}

#[derive(Args)]
struct QuantifyArgs {
    #[command(flatten)]
    instance: InstanceArgs,

    /// Number of sub-boxes the ball is split into (a power of two).
    #[arg(long, default_value_t = 32)]
    splits: usize,

    /// Refinement iterations per spurious region and sub-box.
    #[arg(long, default_value_t = 5)]
    iterations: usize,

    /// Target safe fraction; when set, exit 0 only if the certified lower
    /// bound reaches it, and stop splitting as soon as the outcome is
    /// decided.
    #[arg(long)]
    eta: Option<f64>,

    /// Process candidate labels in label order instead of
    /// smallest-region-first.
    #[arg(long)]
    no_ordering: bool,
}

#[derive(Args)]
struct MaxRadiusArgs {
    #[command(flatten)]
    instance: InstanceArgs,

    /// Verification engine probed by the search.
    #[arg(long, value_enum, default_value_t = Engine::Refined)]
    engine: Engine,

    /// Refinement iterations per spurious region (refined engine only).
    #[arg(long, default_value_t = 5)]
    iterations: usize,

    /// Encode each spurious region by its half-space instead of the
    /// decision-boundary slice.
    #[arg(long)]
    no_boundary: bool,

    /// Process candidate labels in label order instead of
    /// smallest-region-first.
    #[arg(long)]
    no_ordering: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum FormatArg {
    Json,
    Nnet,
}

impl From<FormatArg> for NetFormat {
    fn from(f: FormatArg) -> NetFormat {
        match f {
            FormatArg::Json => NetFormat::Json,
            FormatArg::Nnet => NetFormat::Nnet,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Engine {
    /// Bound propagation plus spurious-region LP refinement.
    Refined,
    /// Bound propagation only.
    Deeppoly,
}

impl Engine {
    fn name(self) -> &'static str {
        match self {
            Engine::Refined => "refined",
            Engine::Deeppoly => "deeppoly",
        }
    }
}

/// Query parameters echoed at the top of every report. Execution knobs that
/// cannot change the result (`--jobs`, output paths) are deliberately left
/// out so that reports stay comparable across machines and thread counts.
#[derive(Serialize)]
struct ConfigEcho {
    command: &'static str,
    network: String,
    format: &'static str,
    input: Vec<f64>,
    radius: f64,
    iterations: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    splits: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    eta_target: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    engine: Option<&'static str>,
    boundary_region: bool,
    small_regions_first: bool,
    seed: u64,
}

#[derive(Serialize)]
struct Envelope<'a, R: Serialize> {
    config: &'a ConfigEcho,
    report: &'a R,
}

#[derive(Serialize)]
struct RadiusProbe {
    radius: f64,
    verdict: Verdict,
}

#[derive(Serialize)]
struct MaxRadiusReport {
    anchor_label: usize,
    engine: &'static str,
    bracket_high: f64,
    max_radius: f64,
    probes: Vec<RadiusProbe>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            use clap::error::ErrorKind;
            let code = match err.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = err.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(1)
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    if cli.jobs > 0 {
        // Ignore the error from a pool that already exists (tests call
        // `run` repeatedly in one process).
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(cli.jobs)
            .build_global();
    }
    match cli.command {
        Command::Verify(args) => cmd_verify(args, cli.seed),
        Command::Quantify(args) => cmd_quantify(args, cli.seed),
        Command::MaxRadius(args) => cmd_max_radius(args, cli.seed),
    }
}

/// Loads the network and centre input named by `instance`.
fn load_instance(instance: &InstanceArgs) -> Result<(Network, Vec<f64>, &'static str)> {
    let format: NetFormat = instance
        .format
        .map(NetFormat::from)
        .unwrap_or_else(|| NetFormat::from_path(&instance.network));
    let net = load_network(&instance.network, format)
        .with_context(|| format!("loading network {}", instance.network.display()))?;
    let x = read_input_vector(&instance.input)?;
    let name = match format {
        NetFormat::Json => "json",
        NetFormat::Nnet => "nnet",
    };
    Ok((net, x, name))
}

fn read_input_vector(path: &Path) -> Result<Vec<f64>> {
    let text = fs::read_to_string(path)
        .with_context(|| format!("reading input vector {}", path.display()))?;
    let trimmed = text.trim();
    let values: Vec<f64> = if trimmed.starts_with('[') {
        serde_json::from_str(trimmed)
            .with_context(|| format!("parsing JSON input vector {}", path.display()))?
    } else {
        trimmed
            .split(|c: char| c.is_whitespace() || c == ',')
            .filter(|s| !s.is_empty())
            .map(|s| {
                s.parse::<f64>()
                    .with_context(|| format!("bad number {s:?} in {}", path.display()))
            })
            .collect::<Result<_>>()?
    };
    if values.is_empty() {
        bail!("input vector {} is empty", path.display());
    }
    Ok(values)
}

/// Prints the JSON report to stdout or `output`; with `output`, also writes
/// the CSV summary next to it.
fn emit<R: Serialize>(
    output: Option<&Path>,
    config: &ConfigEcho,
    report: &R,
    csv: &str,
) -> Result<()> {
    let envelope = Envelope { config, report };
    let json = serde_json::to_string_pretty(&envelope).context("serializing report")?;
    match output {
        None => println!("{json}"),
        Some(path) => {
            fs::write(path, format!("{json}\n"))
                .with_context(|| format!("writing report {}", path.display()))?;
            let csv_path = path.with_extension("csv");
            fs::write(&csv_path, csv)
                .with_context(|| format!("writing summary {}", csv_path.display()))?;
        }
    }
    Ok(())
}

fn csv_field(field: &str) -> String {
    if field.contains([',', '"', '\n']) {
        format!("\"{}\"", field.replace('"', "\"\""))
    } else {
        field.to_string()
    }
}

fn cmd_verify(args: VerifyArgs, seed: u64) -> Result<ExitCode> {
    let (net, x, format) = load_instance(&args.instance)?;
    let opts = VerifyOptions {
        max_iterations: args.iterations,
        boundary_spurious_region: !args.no_boundary,
        order_small_regions_first: !args.no_ordering,
    };
    let report: VerificationReport = verify(&net, &x, args.instance.radius, &opts)?;

    let config = ConfigEcho {
        command: "verify",
        network: args.instance.network.display().to_string(),
        format,
        input: x,
        radius: args.instance.radius,
        iterations: args.iterations,
        splits: None,
        eta_target: None,
        engine: None,
        boundary_region: opts.boundary_spurious_region,
        small_regions_first: opts.order_small_regions_first,
        seed,
    };

    let ruled_out = report
        .traces
        .iter()
        .filter(|t| t.verdict == RegionVerdict::RuledOut)
        .count();
    let iterations_total: usize = report.traces.iter().map(|t| t.iterations_used).sum();
    let renewed_activated: usize = report.traces.iter().map(|t| t.renewed_activated).sum();
    let renewed_deactivated: usize = report.traces.iter().map(|t| t.renewed_deactivated).sum();
    let wall_ms = report.wall_time.as_secs_f64() * 1e3;
    let csv = format!(
        "command,network,verdict,anchor,radius,iterations_budget,candidates,\
         regions_ruled_out,iterations_total,renewed_activated,renewed_deactivated,\
         wall_time_ms\n\
         verify,{},{},{},{},{},{},{},{},{},{},{:.3}\n",
        csv_field(&config.network),
        report.verdict,
        report.anchor_label,
        args.instance.radius,
        args.iterations,
        report.candidate_labels.len(),
        ruled_out,
        iterations_total,
        renewed_activated,
        renewed_deactivated,
        wall_ms,
    );
    emit(args.instance.output.as_deref(), &config, &report, &csv)?;
    eprintln!(
        "verdict: {} (anchor {}, {}/{} regions ruled out, {:.1} ms)",
        report.verdict,
        report.anchor_label,
        ruled_out,
        report.candidate_labels.len(),
        wall_ms,
    );
    Ok(match report.verdict {
        Verdict::Yes => ExitCode::SUCCESS,
        Verdict::Unknown => ExitCode::from(EXIT_UNKNOWN),
    })
}

fn cmd_quantify(args: QuantifyArgs, seed: u64) -> Result<ExitCode> {
    let (net, x, format) = load_instance(&args.instance)?;
    let opts = QuantOptions {
        splits: args.splits,
        max_iterations: args.iterations,
        order_small_regions_first: !args.no_ordering,
        eta_target: args.eta,
    };
    let report: QuantReport = quantify(&net, &x, args.instance.radius, &opts)?;

    let config = ConfigEcho {
        command: "quantify",
        network: args.instance.network.display().to_string(),
        format,
        input: x,
        radius: args.instance.radius,
        iterations: args.iterations,
        splits: Some(args.splits),
        eta_target: args.eta,
        engine: None,
        boundary_region: false,
        small_regions_first: opts.order_small_regions_first,
        seed,
    };

    let wall_ms = report.wall_time.as_secs_f64() * 1e3;
    let csv = format!(
        "command,network,anchor,radius,splits,eta_lower_bound,violation_upper_bound,\
         deeppoly_eta_lower_bound,deeppoly_violation_upper_bound,splits_verified,\
         splits_verified_without_refinement,splits_total,wall_time_ms\n\
         quantify,{},{},{},{},{},{},{},{},{},{},{},{:.3}\n",
        csv_field(&config.network),
        report.anchor_label,
        args.instance.radius,
        args.splits,
        report.eta_lower_bound,
        report.violation_upper_bound,
        report.deeppoly_eta_lower_bound,
        report.deeppoly_violation_upper_bound,
        report.splits_verified,
        report.splits_verified_without_refinement,
        report.splits_total,
        wall_ms,
    );
    emit(args.instance.output.as_deref(), &config, &report, &csv)?;
    eprintln!(
        "safe fraction ≥ {:.6} (bound propagation alone: {:.6}; {}/{} sub-boxes verified, {:.1} ms)",
        report.eta_lower_bound,
        report.deeppoly_eta_lower_bound,
        report.splits_verified,
        report.splits_total,
        wall_ms,
    );
    Ok(match args.eta {
        Some(target) if report.eta_lower_bound < target => ExitCode::from(EXIT_UNKNOWN),
        _ => ExitCode::SUCCESS,
    })
}

fn cmd_max_radius(args: MaxRadiusArgs, seed: u64) -> Result<ExitCode> {
    let (net, x, format) = load_instance(&args.instance)?;
    let iterations = match args.engine {
        Engine::Refined => args.iterations,
        Engine::Deeppoly => 0,
    };
    let opts = VerifyOptions {
        max_iterations: iterations,
        boundary_spurious_region: !args.no_boundary,
        order_small_regions_first: !args.no_ordering,
    };
    let started = Instant::now();
    let anchor_label = net.classify(&x)?;
    let search = max_verifiable_radius(&net, &x, args.instance.radius, &opts)?;
    let wall_ms = started.elapsed().as_secs_f64() * 1e3;

    let report = MaxRadiusReport {
        anchor_label,
        engine: args.engine.name(),
        bracket_high: args.instance.radius,
        max_radius: search.max_radius,
        probes: search
            .probes
            .into_iter()
            .map(|(radius, verdict)| RadiusProbe { radius, verdict })
            .collect(),
    };
    let config = ConfigEcho {
        command: "max-radius",
        network: args.instance.network.display().to_string(),
        format,
        input: x,
        radius: args.instance.radius,
        iterations,
        splits: None,
        eta_target: None,
        engine: Some(args.engine.name()),
        boundary_region: opts.boundary_spurious_region,
        small_regions_first: opts.order_small_regions_first,
        seed,
    };

    let csv = format!(
        "command,network,anchor,engine,bracket_high,max_radius,probes,wall_time_ms\n\
         max-radius,{},{},{},{},{},{},{:.3}\n",
        csv_field(&config.network),
        report.anchor_label,
        report.engine,
        report.bracket_high,
        report.max_radius,
        report.probes.len(),
        wall_ms,
    );
    emit(args.instance.output.as_deref(), &config, &report, &csv)?;
    eprintln!(
        "max verified radius: {} ({} engine, {} probes, {:.1} ms)",
        report.max_radius,
        report.engine,
        report.probes.len(),
        wall_ms,
    );
    Ok(ExitCode::SUCCESS)
}
