use std::fs::File;
use std::io::{self, BufRead, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use chrono::{DateTime, Duration, NaiveDate};
use clap::{Parser, Subcommand, ValueEnum};

use sleepcoach::context::{FixtureProvider, UnavailableProvider, WeatherProvider};
use sleepcoach::datastore::{run_query, Aggregate, AnalyticsQuery, DatastoreError, DateRange, Metric};
use sleepcoach::domain::{Mode, Timestamp, UserId};
use sleepcoach::orchestrator::{MockLlm, MockModeration};
use sleepcoach::service::{self, encode_stream, AppState, Ports, ServiceConfig, StateError, UserState, WeatherMode};
use sleepcoach::simkit::{cumulative_regret, optimal_rate, run_policy, write_regret_csv, Policy, SyntheticEnv};

#[derive(Debug, Parser)]
#[command(name = "sleepcoach", version, about = "Sleep coaching engine: service, ingestion, analytics, simulation")]
struct Cli {
    /// Data directory holding users/<id>/ state. Defaults to the config's
    /// data_dir, or ./data.
    #[arg(long, global = true)]
    data_dir: Option<PathBuf>,

    /// Service config (TOML) for arms, alpha, temperature thresholds and
    /// the rest. Optional outside `serve`.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the HTTP service.
    Serve,
    /// Load wearable JSON lines into a user's store and settle pending rewards.
    Ingest {
        /// JSON-lines file of sleep, activity and physio records.
        #[arg(long)]
        file: PathBuf,
        #[arg(long)]
        user: String,
    },
    /// Roll out a policy on a synthetic environment and write the regret curve as CSV.
    Simulate {
        #[arg(long, value_enum, default_value_t = PolicyArg::Linucb)]
        policy: PolicyArg,
        /// Exploration weight for linucb.
        #[arg(long, default_value_t = 1.0)]
        alpha: f64,
        /// Exploration rate for epsilon-greedy.
        #[arg(long, default_value_t = 0.1)]
        epsilon: f64,
        #[arg(long, default_value_t = 10_000)]
        rounds: usize,
        /// Number of seeds; seeds run from --first-seed upward.
        #[arg(long, default_value_t = 10)]
        seeds: u64,
        #[arg(long, default_value_t = 0)]
        first_seed: u64,
        /// Environment JSON; the bundled default environment when omitted.
        #[arg(long)]
        env: Option<PathBuf>,
        /// CSV destination; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run one analytics query over a user's store.
    Analyze {
        #[arg(long)]
        user: String,
        /// Metric key, e.g. total_sleep_duration, sleep_score, efficiency, average_hrv.
        #[arg(long, default_value = "total_sleep_duration")]
        metric: String,
        /// latest, mean, min, max or trend.
        #[arg(long, default_value = "mean")]
        aggregate: String,
        /// First day, inclusive (YYYY-MM-DD).
        #[arg(long)]
        from: NaiveDate,
        /// Last day, inclusive (YYYY-MM-DD).
        #[arg(long)]
        to: NaiveDate,
        /// Print the full result as JSON.
        #[arg(long)]
        json: bool,
    },
    /// Offline chat with the mock providers; one message per stdin line.
    Chat {
        #[arg(long)]
        user: String,
        #[arg(long, value_enum)]
        mode: Option<ModeArg>,
        /// Weather payload to use instead of the config's provider.
        #[arg(long)]
        weather_fixture: Option<PathBuf>,
        /// Clock start (RFC 3339); each message advances it by one minute.
        /// Uses the system clock when omitted.
        #[arg(long)]
        at: Option<String>,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum PolicyArg {
    Linucb,
    EpsilonGreedy,
    Random,
    Oracle,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ModeArg {
    Healthguru,
    Baseline,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Healthguru => Mode::HealthGuru,
            ModeArg::Baseline => Mode::Baseline,
        }
    }
}

fn load_config(cli: &Cli, required: bool) -> Result<ServiceConfig> {
    let mut cfg = match &cli.config {
        Some(path) => ServiceConfig::load(path)?,
        None if required => bail!("--config is required"),
        None => {
            ServiceConfig {
                weather: WeatherMode::Off,
                ..ServiceConfig::default()
            }
        }
    };
    if let Some(dir) = &cli.data_dir {
        cfg.data_dir = dir.clone();
    }
    Ok(cfg)
}

fn load_user(cfg: &ServiceConfig, user: &str) -> Result<UserState> {
    let id = UserId::new(user);
    if user.is_empty() || !user.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_') {
        bail!("user id `{user}` must be ASCII letters, digits, - or _");
    }
    UserState::load(&cfg.data_dir, id, cfg).with_context(|| format!("loading state for `{user}`"))
}

fn ingest(cfg: &ServiceConfig, file: &PathBuf, user: &str) -> Result<()> {
    let text = std::fs::read_to_string(file).with_context(|| format!("reading {}", file.display()))?;
    let mut state = load_user(cfg, user)?;
    match state.ingest(&text) {
        Ok(outcome) => {
            let r = &outcome.report;
            println!("ingested {} sleep, {} activity, {} physio record(s)", r.sleep, r.activity, r.physio);
            for u in &outcome.applied {
                println!("reward {:.2} applied to {} ({}) for the night ending {}", u.reward, u.arm, u.rec_id, u.sleep_day);
            }
            Ok(())
        }
        Err(StateError::Lines(lines)) => {
            for l in &lines {
                eprintln!("{}:{}: {}", file.display(), l.line, l.message);
            }
            bail!("{} malformed line(s); nothing was ingested", lines.len())
        }
        Err(e) => Err(e.into()),
    }
}

#[allow(clippy::too_many_arguments)]
fn simulate(
    policy: PolicyArg,
    alpha: f64,
    epsilon: f64,
    rounds: usize,
    seeds: u64,
    first_seed: u64,
    env: Option<&PathBuf>,
    out: Option<&PathBuf>,
) -> Result<()> {
    if rounds == 0 || seeds == 0 {
        bail!("--rounds and --seeds must be at least 1");
    }
    let env = match env {
        Some(path) => SyntheticEnv::load(path)?,
        None => SyntheticEnv::default_env(),
    };
    let policy = match policy {
        PolicyArg::Linucb => Policy::LinUcb { alpha },
        PolicyArg::EpsilonGreedy => Policy::EpsilonGreedy { epsilon },
        PolicyArg::Random => Policy::Random,
        PolicyArg::Oracle => Policy::Oracle,
    };
    let trajectories = (first_seed..first_seed + seeds)
        .map(|seed| run_policy(&env, policy, rounds, seed))
        .collect::<Result<Vec<_>, _>>()?;
    match out {
        Some(path) => {
            let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
            write_regret_csv(BufWriter::new(f), &trajectories)?;
        }
        None => write_regret_csv(io::stdout().lock(), &trajectories)?,
    }
    let n = trajectories.len() as f64;
    let final_regret: f64 = trajectories
        .iter()
        .map(|t| cumulative_regret(t).last().copied().unwrap_or(0.0))
        .sum::<f64>()
        / n;
    let tail_rate: f64 = trajectories.iter().map(|t| optimal_rate(t, 0.2)).sum::<f64>() / n;
    eprintln!(
        "{}: mean final regret {final_regret:.3}, optimal-arm rate over last 20% {tail_rate:.3} ({} seed(s) x {rounds} rounds)",
        policy.name(),
        trajectories.len()
    );
    Ok(())
}

fn analyze(cfg: &ServiceConfig, user: &str, metric: &str, aggregate: &str, range: DateRange, json: bool) -> Result<()> {
    let metric: Metric = metric.parse().map_err(anyhow::Error::msg)?;
    let aggregate: Aggregate = aggregate.parse().map_err(anyhow::Error::msg)?;
    if aggregate == Aggregate::ComparePeriods {
        bail!("compare_periods is only available through the service API");
    }
    let state = load_user(cfg, user)?;
    let query = AnalyticsQuery::new(UserId::new(user), metric, aggregate, range);
    let result = match run_query(&state.store, &query) {
        Ok(r) => r,
        Err(DatastoreError::Unavailable) => bail!(DatastoreError::Unavailable),
        Err(e) => return Err(e.into()),
    };
    if json {
        println!("{}", serde_json::to_string_pretty(&result)?);
    } else {
        for fact in &result.narrative_facts {
            println!("{fact}");
        }
        println!("({} day(s) with data, {range})", result.n);
    }
    Ok(())
}

fn chat(cfg: &ServiceConfig, user: &str, mode: Option<ModeArg>, weather_fixture: Option<&PathBuf>, at: Option<&str>) -> Result<()> {
    let mut state = load_user(cfg, user)?;
    let weather: std::sync::Arc<dyn WeatherProvider> = match weather_fixture.or(cfg.weather_fixture.as_ref()) {
        Some(path) => std::sync::Arc::new(FixtureProvider::new(path)),
        None => std::sync::Arc::new(UnavailableProvider),
    };
    let ports = Ports {
        llm: std::sync::Arc::new(MockLlm),
        moderation: std::sync::Arc::new(MockModeration::with_deny_list(&cfg.moderation_deny)),
        weather,
    };
    let mode = mode.map(Mode::from).unwrap_or_else(|| cfg.mode_for(user));
    let mut clock: Option<Timestamp> = match at {
        Some(s) => Some(DateTime::parse_from_rfc3339(s).with_context(|| format!("--at `{s}` is not RFC 3339"))?),
        None => None,
    };
    let stdin = io::stdin();
    let mut stdout = io::stdout().lock();
    for line in stdin.lock().lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let now = match clock.as_mut() {
            Some(t) => {
                let now = *t;
                *t += Duration::minutes(1);
                now
            }
            None => chrono::Local::now().fixed_offset(),
        };
        let turn = state.chat(&line, mode, now, &ports, cfg)?;
        let chunks = encode_stream(&turn);
        for chunk in &chunks[..chunks.len() - 1] {
            stdout.write_all(chunk.as_bytes())?;
            stdout.flush()?;
        }
        writeln!(stdout)?;
        if let Some(id) = &turn.rec_id {
            writeln!(stdout, "[recommendation {id}]")?;
        }
        stdout.flush()?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match &cli.command {
        Command::Serve => {
            let cfg = load_config(&cli, true)?;
            let ports = Ports::from_config(&cfg);
            let app = AppState::new(cfg, ports, service::system_clock());
            let runtime = tokio::runtime::Runtime::new()?;
            runtime.block_on(service::serve(app))?;
            Ok(())
        }
        Command::Ingest { file, user } => ingest(&load_config(&cli, false)?, file, user),
        Command::Simulate {
            policy,
            alpha,
            epsilon,
            rounds,
            seeds,
            first_seed,
            env,
            out,
        } => simulate(*policy, *alpha, *epsilon, *rounds, *seeds, *first_seed, env.as_ref(), out.as_ref()),
        Command::Analyze {
            user,
            metric,
            aggregate,
            from,
            to,
            json,
        } => {
            if to < from {
                bail!("--to is before --from");
            }
            analyze(&load_config(&cli, false)?, user, metric, aggregate, DateRange::new(*from, *to), *json)
        }
        Command::Chat {
            user,
            mode,
            weather_fixture,
            at,
        } => chat(&load_config(&cli, false)?, user, *mode, weather_fixture.as_ref(), at.as_deref()),
    }
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "warn,sleepcoach=info".into()),
        )
        .with_writer(io::stderr)
        .init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            // The analytics apology is shown as-is.
            match err.downcast_ref::<DatastoreError>() {
                Some(e @ DatastoreError::Unavailable) => eprintln!("{e}"),
                _ => eprintln!("error: {err:#}"),
            }
            ExitCode::from(1)
        }
    }
}
