use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use tracelab::experiment::{run, run_in, CheckEntry, ExperimentConfig, Workspace};
use tracelab::{build_domain, DomainSpec, Family};

#[derive(Parser)]
#[command(name = "tracelab", version, about = "Boundary trace experiments on lattice domains")]
struct Cli {
    /// Experiment config for `run`.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (overrides the config's `output_dir`); the graph
    /// file for `domain build`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Run independent checks concurrently.
    #[arg(long, global = true)]
    parallel: bool,
    /// Default tolerance for checks that do not set one.
    #[arg(long, global = true)]
    tol: Option<f64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Domain construction.
    Domain {
        #[command(subcommand)]
        action: DomainAction,
    },
    Green(CheckArgs),
    Capacity(CheckArgs),
    #[command(name = "cdc-check")]
    CdcCheck(CheckArgs),
    #[command(name = "harmonic-measure")]
    HarmonicMeasure(CheckArgs),
    Profile(CheckArgs),
    #[command(name = "elliptic-measure")]
    EllipticMeasure(CheckArgs),
    #[command(name = "doubling-check")]
    DoublingCheck(CheckArgs),
    #[command(name = "hmeas-check")]
    HmeasCheck(CheckArgs),
    Naim(CheckArgs),
    Trace(CheckArgs),
    #[command(name = "doob-naim-verify")]
    DoobNaimVerify(CheckArgs),
    #[command(name = "jump-check")]
    JumpCheck(CheckArgs),
    #[command(name = "killing-check")]
    KillingCheck(CheckArgs),
    Scale(CheckArgs),
    Heatkernel(CheckArgs),
    #[command(name = "shk-check")]
    ShkCheck(CheckArgs),
    #[command(name = "exit-time")]
    ExitTime(CheckArgs),
    /// Monte Carlo walks.
    Mc {
        #[command(subcommand)]
        mode: McMode,
    },
    /// Runs every check of a config.
    Run,
}

#[derive(Subcommand)]
enum DomainAction {
    /// Writes the graph JSON of a domain spec to `--out`.
    Build {
        #[arg(long)]
        spec: PathBuf,
    },
}

#[derive(Subcommand)]
enum McMode {
    Hitting(CheckArgs),
    Watched(CheckArgs),
}

#[derive(Args)]
struct CheckArgs {
    /// Domain spec JSON, or a graph JSON written by `domain build`.
    #[arg(long)]
    domain: PathBuf,
    /// Check parameters (JSON object).
    #[arg(long)]
    params: Option<PathBuf>,
    /// Base point for graph files: `--base-point X Y`.
    #[arg(long, num_args = 2, allow_negative_numbers = true)]
    base_point: Option<Vec<f64>>,
}

fn read_json(path: &Path) -> tracelab::Result<serde_json::Value> {
    Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
}

fn domain_spec(args: &CheckArgs) -> tracelab::Result<DomainSpec> {
    let v = read_json(&args.domain)?;
    let base = args.base_point.as_ref().map(|b| [b[0], b[1]]);
    if v.get("coords").is_some() {
        let base = base.ok_or_else(|| tracelab::Error::Config("graph files need --base-point".into()))?;
        let mut spec = DomainSpec::new(Family::Custom, 0, base);
        spec.graph_file = Some(args.domain.to_string_lossy().into_owned());
        return Ok(spec);
    }
    let mut spec: DomainSpec = serde_json::from_value(v).map_err(|e| tracelab::Error::Config(e.to_string()))?;
    if let Some(b) = base {
        spec.base_point = b;
    }
    Ok(spec)
}

fn single_check(cli: &Cli, name: &str, args: &CheckArgs) -> tracelab::Result<i32> {
    let params = match &args.params {
        Some(p) => read_json(p)?,
        None => serde_json::Value::Null,
    };
    let spec = domain_spec(args)?;
    let out = cli.out.clone().unwrap_or_else(|| PathBuf::from("out"));
    let mut cfg = ExperimentConfig::new(spec, vec![CheckEntry::new(name, params)], out);
    cfg.tolerance = cli.tol;
    cfg.seed = cli.seed.unwrap_or(0);
    let plan = cfg.validate()?;
    let mut ws = Workspace::new(&cfg.domain, cfg.seed)?;
    ws.tolerance = cfg.tolerance;
    let outcome = run_in(&ws, &plan, &cfg.output_dir, false)?;
    for (label, r) in &outcome.reports {
        println!(
            "{label}: {} min_ratio={} max_ratio={} rows={}",
            if r.pass { "PASS" } else { "FAIL" },
            r.min_ratio,
            r.max_ratio,
            r.rows.len()
        );
    }
    Ok(outcome.exit_code())
}

fn execute(cli: &Cli) -> tracelab::Result<i32> {
    let check = |name: &str, a: &CheckArgs| single_check(cli, name, a);
    match &cli.command {
        Command::Domain { action: DomainAction::Build { spec } } => {
            let output = cli.out.as_ref().ok_or_else(|| tracelab::Error::Config("domain build needs --out".into()))?;
            let spec: DomainSpec =
                serde_json::from_value(read_json(spec)?).map_err(|e| tracelab::Error::Config(e.to_string()))?;
            let g = build_domain(&spec)?;
            g.write_json(output)?;
            println!(
                "{} vertices: {} interior, {} boundary, {} absorbing",
                g.vertex_count(),
                g.interior().len(),
                g.boundary().len(),
                g.absorbing().len()
            );
            Ok(0)
        }
        Command::Green(a) => check("green", a),
        Command::Capacity(a) => check("capacity", a),
        Command::CdcCheck(a) => check("cdc-check", a),
        Command::HarmonicMeasure(a) => check("harmonic-measure", a),
        Command::Profile(a) => check("profile", a),
        Command::EllipticMeasure(a) => check("elliptic-measure", a),
        Command::DoublingCheck(a) => check("doubling-check", a),
        Command::HmeasCheck(a) => check("hmeas-check", a),
        Command::Naim(a) => check("naim", a),
        Command::Trace(a) => check("trace", a),
        Command::DoobNaimVerify(a) => check("doob-naim-verify", a),
        Command::JumpCheck(a) => check("jump-check", a),
        Command::KillingCheck(a) => check("killing-check", a),
        Command::Scale(a) => check("scale", a),
        Command::Heatkernel(a) => check("heatkernel", a),
        Command::ShkCheck(a) => check("shk-check", a),
        Command::ExitTime(a) => check("exit-time", a),
        Command::Mc { mode: McMode::Hitting(a) } => check("mc-hitting", a),
        Command::Mc { mode: McMode::Watched(a) } => check("mc-watched", a),
        Command::Run => {
            let path = cli.config.as_ref().ok_or_else(|| tracelab::Error::Config("run needs --config".into()))?;
            let mut cfg = ExperimentConfig::load(path)?;
            if let Some(o) = &cli.out {
                cfg.output_dir = o.clone();
            }
            if let Some(s) = cli.seed {
                cfg.seed = s;
            }
            if cli.tol.is_some() {
                cfg.tolerance = cli.tol;
            }
            cfg.parallel |= cli.parallel;
            let outcome = run(&cfg)?;
            for (label, r) in &outcome.reports {
                println!("{label}: {}", if r.pass { "PASS" } else { "FAIL" });
            }
            println!("summary: {}", outcome.summary_path.display());
            Ok(outcome.exit_code())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    // Exit status 2 is reserved for failing checks.
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match execute(&cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::Cli;
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }
}
