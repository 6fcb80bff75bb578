use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use csi_core::options::{fixture_options, parse_options};
use csi_core::sim::{parse_report_lines, run_experiment, AgentKind, Arm, ExperimentSpec};
use csi_core::survey::{error_report_for_estimate, parse_responses};
use csi_core::SwarmConfig;
use csi_gateway::GatewayConfig;

#[derive(Parser)]
#[command(
    name = "csi-swarm",
    version,
    about = "Simulate, report on and serve small-group swarm deliberations"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run synthetic-agent replications of the survey and swarm arms.
    Sim(SimArgs),
    /// Compute an error report from survey responses and a group estimate,
    /// or reprint the reports of a finished simulation.
    Report(ReportArgs),
    /// Run the live gateway.
    Serve(ServeArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Model {
    Independent,
    Conformist,
}

#[derive(Clone, Copy, ValueEnum)]
enum ArmArg {
    Survey,
    Csi,
}

#[derive(Args)]
struct SimArgs {
    #[arg(long, default_value_t = 241)]
    agents: usize,
    #[arg(long, default_value_t = 5)]
    group_min: usize,
    #[arg(long, default_value_t = 6)]
    group_max: usize,
    #[arg(long, default_value_t = 240.0)]
    duration: f64,
    #[arg(long, default_value_t = 30.0)]
    relay_interval: f64,
    #[arg(long, default_value_t = 15.0)]
    snapshot_interval: f64,
    /// Line-delimited {id, label, value} records; the bundled ten-option
    /// fixture when omitted.
    #[arg(long)]
    options: Option<PathBuf>,
    /// True value being estimated.
    #[arg(long)]
    truth: f64,
    #[arg(long, value_enum, default_value_t = Model::Conformist)]
    model: Model,
    /// Conformity rate of conformist agents.
    #[arg(long, default_value_t = 0.5)]
    alpha: f64,
    /// Chance per agent per tick of posting.
    #[arg(long, default_value_t = 0.02)]
    talkativeness: f64,
    #[arg(long, default_value_t = 500.0)]
    belief_median: f64,
    #[arg(long, default_value_t = 0.5)]
    belief_sigma: f64,
    /// Seconds of room history a conformist reacts to.
    #[arg(long, default_value_t = 30.0)]
    influence_window: f64,
    #[arg(long, value_enum, value_delimiter = ',', default_values_t = [ArmArg::Survey, ArmArg::Csi])]
    arms: Vec<ArmArg>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1)]
    replications: usize,
    #[arg(long)]
    out: PathBuf,
    /// Also write the sentiment series to series.jsonl.
    #[arg(long)]
    export_series: bool,
}

#[derive(Args)]
struct ReportArgs {
    /// Directory written by `sim`; prints each replication's report.
    #[arg(long, conflicts_with_all = ["truth", "survey", "estimate"])]
    from: Option<PathBuf>,
    #[arg(long, required_unless_present = "from")]
    truth: Option<f64>,
    /// Line-delimited {participant, option_id} survey responses.
    #[arg(long, required_unless_present = "from")]
    survey: Option<PathBuf>,
    /// The swarm's final estimate.
    #[arg(long, required_unless_present = "from")]
    estimate: Option<f64>,
    #[arg(long)]
    options: Option<PathBuf>,
    /// Extra comparison row, as LABEL=ESTIMATE.
    #[arg(long = "reference", value_parser = parse_reference)]
    references: Vec<(String, f64)>,
    /// Append the report as one JSON line to this file.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ServeArgs {
    /// Overrides CSI_BIND.
    #[arg(long)]
    bind: Option<std::net::SocketAddr>,
    /// Overrides CSI_STORAGE_DIR.
    #[arg(long)]
    storage: Option<PathBuf>,
    /// Wall-clock milliseconds per session second; overrides CSI_TICK_MS.
    #[arg(long)]
    tick_ms: Option<u64>,
}

fn parse_reference(s: &str) -> Result<(String, f64), String> {
    let (label, value) = s.rsplit_once('=').ok_or("expected LABEL=ESTIMATE")?;
    let value: f64 = value
        .trim()
        .parse()
        .map_err(|_| format!("bad estimate {value:?}"))?;
    if label.trim().is_empty() {
        return Err("empty label".into());
    }
    Ok((label.trim().to_owned(), value))
}

fn load_options(path: Option<&Path>) -> Result<Vec<csi_core::AnswerOption>> {
    match path {
        None => Ok(fixture_options()),
        Some(p) => {
            let text =
                std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            parse_options(&text).with_context(|| format!("parsing {}", p.display()))
        }
    }
}

fn sim(a: SimArgs) -> Result<()> {
    let config = SwarmConfig {
        min_size: a.group_min,
        max_size: a.group_max,
        duration: a.duration,
        relay_interval: a.relay_interval,
        snapshot_interval: a.snapshot_interval,
        options: load_options(a.options.as_deref())?,
        ..SwarmConfig::default()
    };
    let spec = ExperimentSpec {
        config,
        agents: a.agents,
        belief_median: a.belief_median,
        belief_sigma: a.belief_sigma,
        model: match a.model {
            Model::Independent => AgentKind::Independent,
            Model::Conformist => AgentKind::Conformist,
        },
        conform_rate: a.alpha,
        talkativeness: a.talkativeness,
        influence_window: a.influence_window,
        arms: a
            .arms
            .iter()
            .map(|arm| match arm {
                ArmArg::Survey => Arm::Survey,
                ArmArg::Csi => Arm::Csi,
            })
            .collect::<BTreeSet<_>>(),
        replications: a.replications,
        seed: a.seed,
        ..ExperimentSpec::new(a.truth)
    };
    let report = run_experiment(&spec)?;
    report.write_outputs(&a.out, a.export_series)?;
    print!("{}", report.summary());
    Ok(())
}

fn report(a: ReportArgs) -> Result<()> {
    if let Some(dir) = a.from {
        let path = dir.join("report.jsonl");
        let text = std::fs::read_to_string(&path)
            .with_context(|| format!("reading {}", path.display()))?;
        for r in parse_report_lines(&text)? {
            println!("replication {}", r.replication);
            match r.error_report {
                Some(er) => println!("{}", er.to_table()),
                None => println!("(single-arm run, no comparison)\n"),
            }
        }
        return Ok(());
    }
    let (Some(truth), Some(survey), Some(estimate)) = (a.truth, a.survey, a.estimate) else {
        bail!("--truth, --survey and --estimate are required without --from");
    };
    let options = load_options(a.options.as_deref())?;
    let text = std::fs::read_to_string(&survey)
        .with_context(|| format!("reading {}", survey.display()))?;
    let sr = parse_responses(&text, &options)
        .with_context(|| format!("parsing {}", survey.display()))?;
    let mut er = error_report_for_estimate(truth, &sr, estimate)?;
    for (label, value) in a.references {
        er = er.with_reference(label, value);
    }
    print!("{}", er.to_table());
    if let Some(out) = a.out {
        use std::io::Write;
        let mut f = std::fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(&out)?;
        writeln!(f, "{}", serde_json::to_string(&er)?)?;
    }
    Ok(())
}

async fn serve(a: ServeArgs) -> Result<()> {
    let mut config = GatewayConfig::from_env()?;
    if let Some(bind) = a.bind {
        config.bind = bind;
    }
    if let Some(dir) = a.storage {
        config.storage_dir = dir;
    }
    if let Some(ms) = a.tick_ms {
        if ms == 0 {
            bail!("--tick-ms must be positive");
        }
        config.tick = Duration::from_millis(ms);
    }
    csi_gateway::serve(config).await?;
    Ok(())
}

fn main() -> Result<()> {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::from_default_env())
        .with_writer(std::io::stderr)
        .init();
    match Cli::parse().command {
        Command::Sim(a) => sim(a),
        Command::Report(a) => report(a),
        Command::Serve(a) => tokio::runtime::Runtime::new()?.block_on(serve(a)),
    }
}
