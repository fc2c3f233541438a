//! End-to-end batch run: ingest, annotate, mine and shape stages with a
//! manifest of per-stage counts. Per-user work runs on a dedicated thread
//! pool; every aggregate is merged in input order so outputs do not depend
//! on the worker count.

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;
use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::annotate::{
    active_locations, annotate_history, infer_home, is_stationary_bot, select_with_scope, split_days, ActiveScope, AnnotatedPoint,
    HomeAssignment, HomeRule, NightWindow, UserDay,
};
use crate::error::{Error, Result};
use crate::geometry::LatLon;
use crate::ingest::{
    group_tracks, parse_records, prefilter, pseudonymize, residency_filter, speed_filter, FilterConfig, ParseReport, RecordSchema,
    ResidencyMode, UserTrack, DEFAULT_BLOCKLIST,
};
use crate::motif::{build_daily_network, motif_census, CensusConfig, DailyNetwork, MotifCensus, MotifKind};
use crate::output::write_atomic;
use crate::parcel_index::{load_boundary, load_parcels, load_zones, ActivityScheme, LoadReport, SpatialIndex, DEFAULT_RADIUS_M};
use crate::shape_stats::{
    align_trajectory, correlation_report, density_histogram, distance_stats, distance_stats_csv, CorrelationReport, DayDistances,
    GridConfig, Pooling,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Ingest,
    Annotate,
    Mine,
    Shape,
}

impl Stage {
    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Ingest => "ingest",
            Stage::Annotate => "annotate",
            Stage::Mine => "mine",
            Stage::Shape => "shape",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub records: Option<PathBuf>,
    pub parcels: Option<PathBuf>,
    pub boundary: Option<PathBuf>,
    pub scheme: Option<PathBuf>,
    /// Zones with a population property for the home-count correlation.
    pub zones: Option<PathBuf>,
    pub output_dir: PathBuf,
    pub category_attr: String,
    pub population_attr: String,
    /// Comma-separated record columns.
    pub columns: String,
    /// Single field delimiter character; `tab` is accepted.
    pub delimiter: String,
    pub salt: String,
    pub keyword_blocklist: Vec<String>,
    pub max_speed_mps: f64,
    pub min_residency_days: f64,
    pub residency_mode: ResidencyMode,
    pub radius_m: f64,
    pub utc_offset_minutes: i32,
    pub min_slots: usize,
    pub weekdays_only: bool,
    pub active_scope: ActiveScope,
    pub cutoff: f64,
    pub max_nodes: usize,
    pub pin_home: bool,
    pub grid_bins: usize,
    pub grid_bound: f64,
    pub pooling: Pooling,
    pub dump_annotations: bool,
    /// Worker threads; 0 uses every available core.
    pub workers: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        let grid = GridConfig::default();
        let census = CensusConfig::default();
        Self {
            records: None,
            parcels: None,
            boundary: None,
            scheme: None,
            zones: None,
            output_dir: PathBuf::from("out"),
            category_attr: "category".into(),
            population_attr: "population".into(),
            columns: "user_id,timestamp,lat,lon,source,text".into(),
            delimiter: "\t".into(),
            salt: String::new(),
            keyword_blocklist: DEFAULT_BLOCKLIST.iter().map(|s| s.to_string()).collect(),
            max_speed_mps: 240.0,
            min_residency_days: 30.0,
            residency_mode: ResidencyMode::Span,
            radius_m: DEFAULT_RADIUS_M,
            utc_offset_minutes: 0,
            min_slots: 6,
            weekdays_only: true,
            active_scope: ActiveScope::Day,
            cutoff: census.cutoff,
            max_nodes: census.max_nodes,
            pin_home: census.pin_home,
            grid_bins: grid.bins,
            grid_bound: grid.bound,
            pooling: Pooling::PerPoint,
            dump_annotations: false,
            workers: 0,
        }
    }
}

impl RunConfig {
    pub fn schema(&self) -> Result<RecordSchema> {
        let delim = match self.delimiter.as_str() {
            "tab" | "\\t" => '\t',
            d => {
                let mut chars = d.chars();
                match (chars.next(), chars.next()) {
                    (Some(c), None) => c,
                    _ => return Err(Error::Config(format!("delimiter must be one character, got {d:?}"))),
                }
            }
        };
        RecordSchema::parse(delim, &self.columns)
    }

    pub fn census_config(&self) -> CensusConfig {
        CensusConfig {
            cutoff: self.cutoff,
            max_nodes: self.max_nodes,
            pin_home: self.pin_home,
        }
    }

    pub fn grid(&self) -> GridConfig {
        GridConfig {
            bins: self.grid_bins,
            bound: self.grid_bound,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("max_speed_mps", self.max_speed_mps),
            ("min_residency_days", self.min_residency_days),
            ("radius_m", self.radius_m),
            ("cutoff", self.cutoff),
            ("grid_bound", self.grid_bound),
        ];
        for (name, v) in positive {
            if !(v > 0.0) {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        if self.min_slots == 0 || self.min_slots > crate::annotate::SLOTS_PER_DAY {
            return Err(Error::Config("min_slots must lie in 1..=48".into()));
        }
        if self.max_nodes < 2 || self.max_nodes > crate::motif::MAX_SIGNATURE_NODES {
            return Err(Error::Config(format!("max_nodes must lie in 2..={}", crate::motif::MAX_SIGNATURE_NODES)));
        }
        if self.grid_bins == 0 {
            return Err(Error::Config("grid_bins must be positive".into()));
        }
        self.schema()?;
        Ok(())
    }

    fn require<'a>(&self, path: &'a Option<PathBuf>, what: &str) -> Result<&'a Path> {
        path.as_deref().ok_or_else(|| Error::Config(format!("{what} path is required")))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Count {
    pub stage: String,
    pub count: usize,
}

fn chain(items: &[(&str, usize)]) -> Vec<Count> {
    items
        .iter()
        .map(|(s, c)| Count {
            stage: s.to_string(),
            count: *c,
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CensusSummary {
    pub kind: MotifKind,
    pub total: usize,
    pub one_node_percentage: f64,
    pub motifs: usize,
    pub motif_coverage: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapeSummary {
    pub trajectories: usize,
    pub aligned: usize,
    pub skipped: BTreeMap<String, usize>,
    pub points_total: usize,
    pub points_in_range: usize,
    pub in_range_mass: f64,
    pub out_of_range_mass: f64,
}

/// Per-stage counts of one run. Each count chain is non-increasing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub stage: Stage,
    pub parse: ParseReport,
    pub records: Vec<Count>,
    pub users: Vec<Count>,
    pub days: Vec<Count>,
    pub home_rules: BTreeMap<String, usize>,
    pub rejected_days: BTreeMap<String, usize>,
    pub parcels: Option<LoadReport>,
    pub census: Vec<CensusSummary>,
    pub shape: Option<ShapeSummary>,
    pub correlation: Option<CorrelationReport>,
    pub outputs: Vec<String>,
}

pub const MANIFEST_FILE: &str = "manifest.json";

struct Ingested {
    parse: ParseReport,
    after_prefilter: usize,
    users: usize,
    after_speed: usize,
    tracks: Vec<UserTrack>,
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path).map(BufReader::new).map_err(|e| Error::io(path, e))
}

fn ingest(cfg: &RunConfig) -> Result<Ingested> {
    let schema = cfg.schema()?;
    let path = cfg.require(&cfg.records, "records")?;
    let boundary = match &cfg.boundary {
        Some(p) => Some(load_boundary(open(p)?)?),
        None => None,
    };
    let filter = FilterConfig {
        boundary,
        keyword_blocklist: cfg.keyword_blocklist.iter().map(|k| k.to_lowercase()).collect(),
        max_speed_mps: cfg.max_speed_mps,
        min_residency_days: cfg.min_residency_days,
        residency_mode: cfg.residency_mode,
    };
    filter.validate()?;

    let (mut records, parse) = parse_records(open(path)?, &schema)?;
    records
        .par_iter_mut()
        .for_each(|r| r.user_id = pseudonymize(&r.user_id, &cfg.salt));
    let records = prefilter(records, &filter);
    let after_prefilter = records.len();
    let tracks = group_tracks(records);
    let users = tracks.len();
    let verdicts: Vec<(bool, bool)> = tracks
        .par_iter()
        .map(|t| {
            let fast = speed_filter(t, &filter).keep();
            (fast, fast && residency_filter(t, &filter))
        })
        .collect();
    let after_speed = verdicts.iter().filter(|v| v.0).count();
    let tracks = tracks
        .into_iter()
        .zip(verdicts)
        .filter(|(_, v)| v.1)
        .map(|(t, _)| t)
        .collect();
    Ok(Ingested {
        parse,
        after_prefilter,
        users,
        after_speed,
        tracks,
    })
}

struct UserResult {
    bot: bool,
    home: HomeAssignment,
    days_total: usize,
    active_days: Vec<UserDay>,
    history: Vec<AnnotatedPoint>,
}

fn annotate_user(track: &UserTrack, idx: &SpatialIndex, cfg: &RunConfig) -> UserResult {
    let history = annotate_history(track, idx, cfg.radius_m, cfg.utc_offset_minutes);
    if is_stationary_bot(&history) {
        return UserResult {
            bot: true,
            home: HomeAssignment {
                user_id: track.user_id.clone(),
                home_parcel_id: None,
                rule: HomeRule::Unknown,
            },
            days_total: 0,
            active_days: Vec::new(),
            history: Vec::new(),
        };
    }
    let actives = active_locations(&history);
    let home = infer_home(&track.user_id, &history, &actives, NightWindow::default());
    let days = split_days(&track.user_id, &history);
    let days_total = days.len();
    let active_days = select_with_scope(days, cfg.min_slots, cfg.weekdays_only, cfg.active_scope);
    UserResult {
        bot: false,
        home,
        days_total,
        active_days,
        history: if cfg.dump_annotations { history } else { Vec::new() },
    }
}

fn rule_name(rule: HomeRule) -> &'static str {
    match rule {
        HomeRule::NightMode => "night_mode",
        HomeRule::TopResidential => "top_residential",
        HomeRule::Unknown => "unknown",
    }
}

fn records_tsv(tracks: &[UserTrack]) -> String {
    let schema = RecordSchema::default();
    let mut out = format!("# {}\n", schema.header());
    for t in tracks {
        for r in &t.points {
            out.push_str(&schema.format(r));
            out.push('\n');
        }
    }
    out
}

fn census_csv(censuses: &[MotifCensus]) -> String {
    let mut out = String::from("kind,rank,signature,node_count,count,percentage\n");
    for c in censuses {
        for (rank, e) in c.motifs().enumerate() {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{:.4}",
                c.kind,
                rank + 1,
                e.signature.signature,
                e.signature.node_count,
                e.count,
                e.percentage
            );
        }
    }
    out
}

fn size_groups_csv(censuses: &[MotifCensus]) -> String {
    let mut out = String::from("kind,group,count,percentage\n");
    for c in censuses {
        for g in &c.size_groups {
            let _ = writeln!(out, "{},{},{},{:.4}", c.kind, g.label, g.count, g.percentage);
        }
    }
    out
}

/// Edge lists of every motif for plotting; node 0 is home.
fn motif_edges(censuses: &[MotifCensus]) -> String {
    let mut out = String::new();
    for c in censuses {
        for (rank, e) in c.motifs().enumerate() {
            let _ = write!(out, "# {} {} {}", c.kind, rank + 1, e.signature.signature);
            if let Some(labels) = e.signature.labels() {
                let names: Vec<&str> = labels.iter().map(|l| l.short()).collect();
                let _ = write!(out, " labels {}", names.join(" "));
            }
            out.push('\n');
            for (a, b) in e.signature.edges() {
                let _ = writeln!(out, "{a} {b}");
            }
        }
    }
    out
}

fn annotations_tsv(results: &[UserResult]) -> String {
    let mut out = String::from("# user_id\ttimestamp\tlocal_time\tlat\tlon\tparcel_id\tcode\n");
    for r in results {
        for p in &r.history {
            let _ = writeln!(
                out,
                "{}\t{}\t{}\t{:.7}\t{:.7}\t{}\t{}",
                p.record.user_id,
                p.record.timestamp.format("%Y-%m-%dT%H:%M:%SZ"),
                p.local_time.format("%Y-%m-%dT%H:%M:%S"),
                p.record.position.lat,
                p.record.position.lon,
                p.parcel_id.map_or_else(String::new, |id| id.0.to_string()),
                p.code
            );
        }
    }
    out
}

struct Writer<'a> {
    dir: &'a Path,
    written: Vec<String>,
}

impl Writer<'_> {
    fn put(&mut self, name: &str, contents: &str) -> Result<()> {
        write_atomic(&self.dir.join(name), contents.as_bytes())?;
        self.written.push(name.to_string());
        Ok(())
    }
}

fn thread_pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))
}

/// Runs the stage chain up to and including `stage`, writing its outputs
/// into `cfg.output_dir`.
pub fn run(cfg: &RunConfig, stage: Stage) -> Result<Manifest> {
    cfg.validate()?;
    // inputs are checked before anything is written
    cfg.require(&cfg.records, "records")?;
    if stage >= Stage::Annotate {
        cfg.require(&cfg.parcels, "parcels")?;
    }
    for p in [&cfg.records, &cfg.parcels, &cfg.boundary, &cfg.scheme, &cfg.zones].into_iter().flatten() {
        if !p.is_file() {
            return Err(Error::io(p, std::io::Error::new(std::io::ErrorKind::NotFound, "input file not found")));
        }
    }
    thread_pool(cfg.workers)?.install(|| run_stages(cfg, stage))
}

fn run_stages(cfg: &RunConfig, stage: Stage) -> Result<Manifest> {
    let mut out = Writer {
        dir: &cfg.output_dir,
        written: Vec::new(),
    };
    let ing = ingest(cfg)?;
    let raw = ing.parse.parsed + ing.parse.malformed + ing.parse.bad_coord + ing.parse.geocoded;
    let kept_records: usize = ing.tracks.iter().map(|t| t.points.len()).sum();
    let mut manifest = Manifest {
        stage,
        parse: ing.parse.clone(),
        records: chain(&[
            ("raw", raw),
            ("parsed_gps", ing.parse.parsed),
            ("after_prefilter", ing.after_prefilter),
            ("after_user_filters", kept_records),
        ]),
        users: chain(&[
            ("users", ing.users),
            ("after_speed", ing.after_speed),
            ("after_residency", ing.tracks.len()),
        ]),
        days: Vec::new(),
        home_rules: BTreeMap::new(),
        rejected_days: BTreeMap::new(),
        parcels: None,
        census: Vec::new(),
        shape: None,
        correlation: None,
        outputs: Vec::new(),
    };

    if stage == Stage::Ingest {
        out.put("filtered_records.tsv", &records_tsv(&ing.tracks))?;
        return finish(manifest, out);
    }

    let scheme = match &cfg.scheme {
        Some(p) => ActivityScheme::from_reader(open(p)?)?,
        None => ActivityScheme::default(),
    };
    let parcels_path = cfg.require(&cfg.parcels, "parcels")?;
    let (idx, load) = load_parcels(open(parcels_path)?, &scheme, &cfg.category_attr)?;
    manifest.parcels = Some(load);

    let results: Vec<UserResult> = ing.tracks.par_iter().map(|t| annotate_user(t, &idx, cfg)).collect();
    let humans: Vec<&UserResult> = results.iter().filter(|r| !r.bot).collect();
    let active_users = humans.iter().filter(|r| !r.active_days.is_empty()).count();
    let active_with_home = humans
        .iter()
        .filter(|r| !r.active_days.is_empty() && r.home.home_parcel_id.is_some())
        .count();
    for r in &humans {
        *manifest.home_rules.entry(rule_name(r.home.rule).to_string()).or_default() += 1;
    }
    manifest.users.push(Count {
        stage: "after_stationary_bot".into(),
        count: humans.len(),
    });
    manifest.users.push(Count {
        stage: "active".into(),
        count: active_users,
    });
    manifest.users.push(Count {
        stage: "active_with_home".into(),
        count: active_with_home,
    });
    let days_total: usize = humans.iter().map(|r| r.days_total).sum();
    let active_days: usize = humans.iter().map(|r| r.active_days.len()).sum();
    manifest.days = chain(&[("user_days", days_total), ("active_user_days", active_days)]);

    if stage == Stage::Annotate || cfg.dump_annotations {
        let mut homes = String::from("user_id,home_parcel_id,rule,active_days\n");
        for r in &humans {
            let _ = writeln!(
                homes,
                "{},{},{},{}",
                r.home.user_id,
                r.home.home_parcel_id.map_or_else(String::new, |id| id.0.to_string()),
                rule_name(r.home.rule),
                r.active_days.len()
            );
        }
        out.put("homes.csv", &homes)?;
        let mut days = String::from("user_id,date,slot_count\n");
        for r in &humans {
            for d in &r.active_days {
                let _ = writeln!(days, "{},{},{}", d.user_id, d.date, d.slot_count);
            }
        }
        out.put("active_days.csv", &days)?;
        if cfg.dump_annotations {
            out.put("annotations.tsv", &annotations_tsv(&results))?;
        }
    }
    if stage == Stage::Annotate {
        return finish(manifest, out);
    }

    let built: Vec<(&str, chrono::NaiveDate, std::result::Result<DailyNetwork, crate::motif::Rejection>)> = humans
        .par_iter()
        .flat_map_iter(|r| {
            r.active_days
                .iter()
                .map(move |d| (d.user_id.as_str(), d.date, build_daily_network(d, &r.home)))
        })
        .collect();
    let mut networks: Vec<DailyNetwork> = Vec::with_capacity(built.len());
    let mut network_days: HashSet<(&str, chrono::NaiveDate)> = HashSet::new();
    for (user, date, b) in built {
        match b {
            Ok(n) => {
                networks.push(n);
                network_days.insert((user, date));
            }
            Err(rej) => *manifest.rejected_days.entry(rej.as_str().to_string()).or_default() += 1,
        }
    }
    manifest.days.push(Count {
        stage: "networks".into(),
        count: networks.len(),
    });

    let abm: Vec<DailyNetwork> = networks.par_iter().map(|n| n.view(MotifKind::Abm)).collect();
    let census_cfg = cfg.census_config();
    let censuses: Vec<MotifCensus> = [
        (MotifKind::Lbm, networks.iter().map(DailyNetwork::digraph).collect::<Vec<_>>()),
        (MotifKind::Abm, abm.iter().map(DailyNetwork::digraph).collect()),
    ]
    .into_iter()
    .map(|(kind, graphs)| motif_census(&graphs, kind, &census_cfg))
    .collect();
    manifest.census = censuses
        .iter()
        .map(|c| CensusSummary {
            kind: c.kind,
            total: c.total,
            one_node_percentage: c.one_node_percentage(),
            motifs: c.motifs().count(),
            motif_coverage: c.motif_coverage(),
        })
        .collect();
    out.put("census.csv", &census_csv(&censuses))?;
    out.put("size_groups.csv", &size_groups_csv(&censuses))?;
    out.put("motif_edges.txt", &motif_edges(&censuses))?;
    if stage == Stage::Mine {
        return finish(manifest, out);
    }

    // trajectories: each user's points on days that produced a network
    let mut per_user: BTreeMap<&str, (Vec<LatLon>, Option<LatLon>)> = BTreeMap::new();
    for r in &humans {
        let home = r.home.home_parcel_id.and_then(|id| idx.get(id)).map(|p| p.polygon.vertex_centroid());
        for d in &r.active_days {
            if network_days.contains(&(d.user_id.as_str(), d.date)) {
                let entry = per_user.entry(d.user_id.as_str()).or_insert((Vec::new(), home));
                entry.0.extend(d.points.iter().map(|p| p.record.position));
            }
        }
    }
    let trajectories: Vec<(Vec<LatLon>, Option<LatLon>)> = per_user.into_values().collect();
    let aligned: Vec<_> = trajectories.par_iter().map(|(pts, home)| align_trajectory(pts, *home)).collect();
    let mut skipped: BTreeMap<String, usize> = BTreeMap::new();
    let mut streams = Vec::new();
    for a in aligned {
        match a {
            Ok(t) => streams.push(t.points),
            Err(d) => {
                let reason = serde_json::to_value(d)?.as_str().unwrap_or("degenerate").to_string();
                *skipped.entry(reason).or_default() += 1;
            }
        }
    }
    let density = density_histogram(&streams, cfg.grid(), cfg.pooling);
    manifest.shape = Some(ShapeSummary {
        trajectories: trajectories.len(),
        aligned: streams.len(),
        skipped,
        points_total: density.points_total,
        points_in_range: density.points_in_range,
        in_range_mass: density.in_range_mass,
        out_of_range_mass: density.out_of_range_mass,
    });
    out.put("density.csv", &density.to_csv())?;

    let days: Vec<DayDistances> = networks
        .par_iter()
        .zip(abm.par_iter())
        .map(|(l, a)| DayDistances::from_network(l, a))
        .collect();
    out.put("distance_stats.csv", &distance_stats_csv(&distance_stats(&days, cfg.max_nodes)))?;

    if let Some(zpath) = &cfg.zones {
        let zones = load_zones(open(zpath)?, &cfg.population_attr)?;
        let homes: Vec<LatLon> = humans
            .iter()
            .filter(|r| !r.active_days.is_empty())
            .filter_map(|r| r.home.home_parcel_id.and_then(|id| idx.get(id)))
            .map(|p| p.polygon.vertex_centroid())
            .collect();
        let counts: Vec<f64> = zones
            .iter()
            .map(|z| homes.iter().filter(|h| z.contains(**h)).count() as f64)
            .collect();
        let pops: Vec<f64> = zones.iter().map(|z| z.population).collect();
        let report = correlation_report(&pops, &counts)?;
        let mut text = serde_json::to_string_pretty(&report)?;
        text.push('\n');
        out.put("correlation.json", &text)?;
        manifest.correlation = Some(report);
    }
    finish(manifest, out)
}

fn finish(mut manifest: Manifest, mut out: Writer<'_>) -> Result<Manifest> {
    out.written.push(MANIFEST_FILE.to_string());
    manifest.outputs = out.written.clone();
    let mut text = serde_json::to_string_pretty(&manifest)?;
    text.push('\n');
    write_atomic(&out.dir.join(MANIFEST_FILE), text.as_bytes())?;
    Ok(manifest)
}
