use std::fs::{self, File};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use pcg_core::levelgen::LevelBatch;
use pcg_core::simulator::{run_experiment, GeneratorWiring};
use pcg_core::telemetry::{write_csv, ExportFilter, GameplayRecord, PlayerProfile, EVENT_LOG_FILE};
use pcg_core::{Group, Store};
use pcg_service::analysis::{analyze, load_rows};
use pcg_service::{build_generator, ServiceConfig};
use pcg_stats::Model;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tracing_subscriber::EnvFilter;

#[derive(Parser)]
#[command(name = "pcg", version, about = "Personalized Match-3 level generation")]
struct Cli {
    /// TOML configuration file; PCG_* environment variables override it.
    #[arg(long, global = true, env = "PCG_CONFIG")]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum GeneratorArg {
    Mock,
    Live,
    TraditionalOnly,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModelArg {
    Completion,
    Ratings,
    RatingsWithDropouts,
}

impl From<ModelArg> for Model {
    fn from(m: ModelArg) -> Self {
        match m {
            ModelArg::Completion => Model::Completion,
            ModelArg::Ratings => Model::Ratings,
            ModelArg::RatingsWithDropouts => Model::RatingsWithDropouts,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Json,
    Text,
}

#[derive(Clone, Copy, ValueEnum)]
enum GroupArg {
    Llm,
    Traditional,
}

#[derive(Subcommand)]
enum Command {
    /// Run the HTTP API.
    Serve {
        #[arg(long)]
        bind: Option<String>,
        #[arg(long)]
        data_dir: Option<PathBuf>,
    },
    /// Run the simulated A/B experiment and write its event log.
    Simulate {
        #[arg(long)]
        players: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, value_enum, default_value = "mock")]
        generator: GeneratorArg,
        #[arg(long)]
        max_levels: Option<u32>,
        /// Output directory for events.jsonl, export.csv and summary.json.
        #[arg(long, default_value = "sim-out")]
        out: PathBuf,
        /// Replace an existing event log in the output directory.
        #[arg(long)]
        force: bool,
    },
    /// Fit a Bayesian model to an event log (.jsonl) or export (.csv).
    Analyze {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, value_enum)]
        model: ModelArg,
        #[arg(long, value_enum, default_value = "json")]
        format: Format,
        /// Compare a claim to a reference probability, as CLAIM=P.
        #[arg(long = "reference", value_name = "CLAIM=P")]
        references: Vec<String>,
        #[arg(long, default_value_t = 0.005)]
        tolerance: f64,
        /// Write the report here instead of stdout.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Generate one batch of levels and print it.
    GenLevel {
        #[arg(long, value_enum)]
        group: GroupArg,
        /// JSON array of gameplay records to personalize on.
        #[arg(long)]
        history: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn main() -> Result<()> {
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("warn")))
        .with_writer(std::io::stderr)
        .init();
    let cli = Cli::parse();
    let mut config = ServiceConfig::load(cli.config.as_deref())?;
    match cli.command {
        Command::Serve { bind, data_dir } => {
            if let Some(b) = bind {
                config.bind = b;
            }
            if let Some(d) = data_dir {
                config.data_dir = d;
            }
            tokio::runtime::Runtime::new()?.block_on(pcg_service::serve(&config))
        }
        Command::Simulate { players, seed, generator, max_levels, out, force } => {
            simulate(config, players, seed, generator, max_levels, &out, force)
        }
        Command::Analyze { input, model, format, references, tolerance, output } => {
            let rows = load_rows(&input)?;
            let mut report = analyze(&rows, model.into(), &config.analysis)?;
            for r in &references {
                let (claim, p) = r.rsplit_once('=').context("--reference takes CLAIM=P")?;
                let p: f64 = p.parse().with_context(|| format!("bad probability in {r:?}"))?;
                report.check_against(claim, p, tolerance)?;
            }
            let text = match format {
                Format::Json => serde_json::to_string_pretty(&report)? + "\n",
                Format::Text => report.text_table(),
            };
            match output {
                Some(path) => fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?,
                None => print!("{text}"),
            }
            Ok(())
        }
        Command::GenLevel { group, history, seed } => gen_level(&config, group, history.as_deref(), seed),
    }
}

fn simulate(
    config: ServiceConfig,
    players: Option<usize>,
    seed: Option<u64>,
    generator: GeneratorArg,
    max_levels: Option<u32>,
    out: &Path,
    force: bool,
) -> Result<()> {
    let mut sim = config.simulation.clone();
    sim.ranges = config.ranges;
    sim.retries = config.retries;
    if let Some(n) = players {
        sim.n_players = n;
    }
    if let Some(s) = seed {
        sim.seed = s;
    }
    if let Some(m) = max_levels {
        sim.max_levels_per_player = m;
    }
    sim.generator = match generator {
        GeneratorArg::Mock => match &config.generator {
            GeneratorWiring::Mock { thresholds } => GeneratorWiring::Mock { thresholds: *thresholds },
            _ => GeneratorWiring::Mock { thresholds: Default::default() },
        },
        GeneratorArg::TraditionalOnly => GeneratorWiring::TraditionalOnly,
        GeneratorArg::Live => match &config.generator {
            GeneratorWiring::Live(live) => GeneratorWiring::Live(live.clone()),
            _ => bail!("--generator live needs an LLM endpoint in the config file or PCG_LLM_ENDPOINT"),
        },
    };

    let log = out.join(EVENT_LOG_FILE);
    if log.exists() {
        if !force {
            bail!("{} already exists; pass --force to replace it", log.display());
        }
        fs::remove_file(&log)?;
        let _ = fs::remove_file(out.join(pcg_core::telemetry::SNAPSHOT_FILE));
    }
    let mut store = Store::open(out)?;
    let summary = run_experiment(&sim, &mut store)?;
    store.compact()?;
    let rows = store.export_dataset(&ExportFilter { include_dropouts: true, ..Default::default() });
    write_csv(&rows, File::create(out.join("export.csv"))?)?;
    let text = serde_json::to_string_pretty(&summary)?;
    fs::write(out.join("summary.json"), &text)?;
    println!("{text}");
    Ok(())
}

fn gen_level(config: &ServiceConfig, group: GroupArg, history: Option<&Path>, seed: u64) -> Result<()> {
    let generator = build_generator(config)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let now = chrono::Utc::now();
    let batch: LevelBatch = match group {
        GroupArg::Traditional => generator.traditional(&mut rng, now),
        GroupArg::Llm => {
            let records: Vec<GameplayRecord> = match history {
                Some(path) => serde_json::from_reader(File::open(path)?)
                    .with_context(|| format!("reading records from {}", path.display()))?,
                None => Vec::new(),
            };
            let profile = PlayerProfile {
                player_id: "cli".into(),
                group: Group::LlmPcg,
                created_at: now,
                history: records,
                pending_levels: None,
                pending_for_history: 0,
                last_served_batch: None,
            };
            let request = generator.request_for(&profile);
            generator.generate(&request, &mut rng, now)
        }
    };
    println!("{}", serde_json::to_string_pretty(&batch)?);
    Ok(())
}
