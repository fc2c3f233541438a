use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::de::DeserializeOwned;

use mobmotif::annotate::ActiveScope;
use mobmotif::ingest::ResidencyMode;
use mobmotif::pipeline::{run, RunConfig, Stage};
use mobmotif::shape_stats::Pooling;
use mobmotif::synth::{generate, SynthConfig};

#[derive(Parser)]
#[command(name = "mobmotif", version, about = "Daily mobility motif mining from geo-located point records")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse records and apply the record- and user-level filters.
    Ingest(RunArgs),
    /// Ingest, then join points to parcels, infer homes and select active days.
    Annotate(RunArgs),
    /// Annotate, then build daily networks and write the motif census.
    Mine(RunArgs),
    /// Mine, then write the reference-frame density and distance statistics.
    Shape(RunArgs),
    /// Every stage (same outputs as `shape`).
    All(RunArgs),
    /// Generate a synthetic city, population and ground truth.
    Synth(SynthArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum ResidencyArg {
    Span,
    ActiveDays,
}

#[derive(Clone, Copy, ValueEnum)]
enum ScopeArg {
    Day,
    User,
}

#[derive(Clone, Copy, ValueEnum)]
enum PoolingArg {
    PerPoint,
    PerUser,
}

#[derive(Args)]
struct RunArgs {
    /// TOML file with any run settings; flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    records: Option<PathBuf>,
    #[arg(long)]
    parcels: Option<PathBuf>,
    /// Study-area polygon (GeoJSON); records outside are dropped.
    #[arg(long)]
    boundary: Option<PathBuf>,
    /// Two-column category,code table replacing the built-in scheme.
    #[arg(long)]
    scheme: Option<PathBuf>,
    /// Zones with a population property, for the home-count correlation.
    #[arg(long)]
    zones: Option<PathBuf>,
    #[arg(short, long = "output")]
    output_dir: Option<PathBuf>,
    #[arg(long)]
    category_attr: Option<String>,
    #[arg(long)]
    population_attr: Option<String>,
    /// Record columns, e.g. `user_id,timestamp,lat,lon,source,text`.
    #[arg(long)]
    columns: Option<String>,
    /// Field delimiter (one character, or `tab`).
    #[arg(long)]
    delimiter: Option<String>,
    /// Salt for user-id pseudonymization.
    #[arg(long)]
    salt: Option<String>,
    /// Comma-separated keyword blocklist (replaces the default list).
    #[arg(long, value_delimiter = ',')]
    blocklist: Option<Vec<String>>,
    #[arg(long)]
    max_speed: Option<f64>,
    #[arg(long)]
    min_days: Option<f64>,
    #[arg(long, value_enum)]
    residency_mode: Option<ResidencyArg>,
    #[arg(long)]
    radius: Option<f64>,
    /// Fixed local-time offset from UTC in minutes.
    #[arg(long, allow_hyphen_values = true)]
    utc_offset: Option<i32>,
    #[arg(long)]
    min_slots: Option<usize>,
    #[arg(long)]
    weekdays_only: Option<bool>,
    #[arg(long, value_enum)]
    active_scope: Option<ScopeArg>,
    #[arg(long)]
    cutoff: Option<f64>,
    #[arg(long)]
    max_nodes: Option<usize>,
    #[arg(long)]
    pin_home: Option<bool>,
    #[arg(long)]
    grid_bins: Option<usize>,
    #[arg(long)]
    grid_bound: Option<f64>,
    #[arg(long, value_enum)]
    pooling: Option<PoolingArg>,
    /// Also write per-point annotations.
    #[arg(long)]
    dump_annotations: bool,
    /// Worker threads (0 = all cores).
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Args)]
struct SynthArgs {
    /// TOML file with generator settings; flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(short, long = "output", default_value = "synth")]
    output_dir: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    users: Option<usize>,
    #[arg(long)]
    days: Option<usize>,
    #[arg(long)]
    stationary_bots: Option<usize>,
    #[arg(long)]
    teleporters: Option<usize>,
    #[arg(long)]
    tourists: Option<usize>,
}

fn load_toml<T: DeserializeOwned + Default>(path: Option<&Path>) -> Result<T> {
    let Some(path) = path else {
        return Ok(T::default());
    };
    let text = fs::read_to_string(path).with_context(|| format!("cannot read config {}", path.display()))?;
    toml::from_str(&text).with_context(|| format!("invalid config {}", path.display()))
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

impl RunArgs {
    fn into_config(self) -> Result<RunConfig> {
        let mut c: RunConfig = load_toml(self.config.as_deref())?;
        if self.records.is_some() {
            c.records = self.records;
        }
        if self.parcels.is_some() {
            c.parcels = self.parcels;
        }
        if self.boundary.is_some() {
            c.boundary = self.boundary;
        }
        if self.scheme.is_some() {
            c.scheme = self.scheme;
        }
        if self.zones.is_some() {
            c.zones = self.zones;
        }
        set(&mut c.output_dir, self.output_dir);
        set(&mut c.category_attr, self.category_attr);
        set(&mut c.population_attr, self.population_attr);
        set(&mut c.columns, self.columns);
        set(&mut c.delimiter, self.delimiter);
        set(&mut c.salt, self.salt);
        set(&mut c.keyword_blocklist, self.blocklist);
        set(&mut c.max_speed_mps, self.max_speed);
        set(&mut c.min_residency_days, self.min_days);
        set(
            &mut c.residency_mode,
            self.residency_mode.map(|m| match m {
                ResidencyArg::Span => ResidencyMode::Span,
                ResidencyArg::ActiveDays => ResidencyMode::ActiveDays,
            }),
        );
        set(&mut c.radius_m, self.radius);
        set(&mut c.utc_offset_minutes, self.utc_offset);
        set(&mut c.min_slots, self.min_slots);
        set(&mut c.weekdays_only, self.weekdays_only);
        set(
            &mut c.active_scope,
            self.active_scope.map(|s| match s {
                ScopeArg::Day => ActiveScope::Day,
                ScopeArg::User => ActiveScope::User,
            }),
        );
        set(&mut c.cutoff, self.cutoff);
        set(&mut c.max_nodes, self.max_nodes);
        set(&mut c.pin_home, self.pin_home);
        set(&mut c.grid_bins, self.grid_bins);
        set(&mut c.grid_bound, self.grid_bound);
        set(
            &mut c.pooling,
            self.pooling.map(|p| match p {
                PoolingArg::PerPoint => Pooling::PerPoint,
                PoolingArg::PerUser => Pooling::PerUser,
            }),
        );
        if self.dump_annotations {
            c.dump_annotations = true;
        }
        set(&mut c.workers, self.workers);
        Ok(c)
    }
}

impl SynthArgs {
    fn into_config(self) -> Result<(SynthConfig, PathBuf)> {
        let mut c: SynthConfig = load_toml(self.config.as_deref())?;
        set(&mut c.seed, self.seed);
        set(&mut c.num_users, self.users);
        set(&mut c.days, self.days);
        set(&mut c.bots.stationary, self.stationary_bots);
        set(&mut c.bots.teleporter, self.teleporters);
        set(&mut c.tourists, self.tourists);
        Ok((c, self.output_dir))
    }
}

fn pipeline(args: RunArgs, stage: Stage) -> Result<()> {
    let cfg = args.into_config()?;
    let manifest = run(&cfg, stage)?;
    println!(
        "{}: wrote {} to {}",
        stage.as_str(),
        manifest.outputs.join(", "),
        cfg.output_dir.display()
    );
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Ingest(a) => pipeline(a, Stage::Ingest),
        Command::Annotate(a) => pipeline(a, Stage::Annotate),
        Command::Mine(a) => pipeline(a, Stage::Mine),
        Command::Shape(a) | Command::All(a) => pipeline(a, Stage::Shape),
        Command::Synth(a) => a.into_config().and_then(|(cfg, dir)| {
            let out = generate(&cfg)?;
            out.write_to(&dir)?;
            println!(
                "synth: {} users, {} parcels side, wrote {}",
                cfg.num_users,
                cfg.parcels_per_side,
                dir.display()
            );
            Ok(())
        }),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
