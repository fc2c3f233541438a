//! Deterministic synthetic city and population with known ground truth.
//!
//! The world is a square grid of rectangular parcels. Each legitimate user
//! follows one walk template on every simulated weekday; the parcels of a
//! template are laid out at the template's spacing along the grid axes.
//! Bots and tourists draw from separate random streams and never modify the
//! grid, so adding them leaves the legitimate users' records unchanged.

use std::collections::{BTreeMap, HashSet};
use std::path::Path;

use chrono::{Duration, NaiveDate, NaiveDateTime, TimeZone, Utc};
use rand::distributions::WeightedIndex;
use rand::prelude::*;
use rand::seq::index::sample;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{LatLon, Polygon};
use crate::ingest::{LocationSource, PointRecord, RecordSchema};
use crate::motif::{motif_census, ActivityLabel, CensusConfig, DailyNetwork, MotifKind, NetworkNode};
use crate::output::write_atomic;
use crate::parcel_index::{to_geojson, ActivityCode};
use crate::shape_stats::{distance_stats, DayDistances, DistanceStats};

/// Chicago land-use shares by activity code 1..=12.
pub const CHICAGO_MIX: [f64; 12] = [
    74.15, 0.12, 12.36, 0.79, 0.15, 2.71, 0.50, 1.91, 0.07, 0.85, 3.49, 2.90,
];

/// First simulated day, a Monday.
pub fn epoch() -> NaiveDate {
    NaiveDate::from_ymd_opt(2014, 1, 6).expect("valid date")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemplateSpec {
    /// Token walk such as `H>W>Sh>H`. Equal tokens are the same parcel;
    /// `R#1` and `R#2` are two different residential parcels.
    pub walk: String,
    pub weight: f64,
    pub spacing_km: f64,
}

impl TemplateSpec {
    pub fn new(walk: &str, weight: f64, spacing_km: f64) -> Self {
        Self {
            walk: walk.to_string(),
            weight,
            spacing_km,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct BotSpec {
    pub stationary: usize,
    pub teleporter: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub seed: u64,
    pub parcels_per_side: usize,
    pub cell_size_m: f64,
    /// Grid center.
    pub center_lat: f64,
    pub center_lon: f64,
    /// Relative weights of activity codes 1..=12 for background parcels.
    pub activity_mix: Vec<f64>,
    pub num_users: usize,
    pub templates: Vec<TemplateSpec>,
    /// Inclusive range of points per user-day.
    pub tweets_per_day: [usize; 2],
    pub bots: BotSpec,
    pub tourists: usize,
    /// Number of simulated weekdays.
    pub days: usize,
    pub utc_offset_minutes: i32,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            seed: 42,
            parcels_per_side: 80,
            cell_size_m: 100.0,
            center_lat: 41.88,
            center_lon: -87.63,
            activity_mix: CHICAGO_MIX.to_vec(),
            num_users: 300,
            templates: vec![
                TemplateSpec::new("H>W>H", 0.5, 3.0),
                TemplateSpec::new("H>W>Sh>H", 0.25, 3.0),
                TemplateSpec::new("H>R#1>H>R#2>H", 0.15, 3.0),
                TemplateSpec::new("H", 0.10, 3.0),
            ],
            tweets_per_day: [6, 10],
            bots: BotSpec::default(),
            tourists: 0,
            days: 20,
            utc_offset_minutes: -360,
        }
    }
}

/// Daytime visits use slots 14..=41 (07:00 to 20:59); the first home point
/// falls in 00:00..06:00 and the last two in 21:00..24:00.
const DAY_SLOTS: std::ops::RangeInclusive<usize> = 14..=41;
const NIGHT_POINTS: usize = 3;
/// Points sit in the first 20 minutes of their slot, so consecutive visits
/// are at least 10 minutes apart.
const SLOT_SPREAD_S: i64 = 1200;
const PARCEL_MARGIN: f64 = 0.1;
const POINT_MARGIN: f64 = 0.15;
/// Days after the epoch of the single out-of-schedule home point that
/// stretches the residency span; it lands on a Saturday.
const ANCHOR_DAY: i64 = 40;
const TOURIST_DAYS: usize = 10;
const PLACEMENT_ATTEMPTS: usize = 2000;

#[derive(Debug, Clone, PartialEq)]
struct Template {
    tokens: Vec<String>,
    labels: Vec<ActivityLabel>,
    spacing_cells: i64,
}

impl Template {
    fn parse(spec: &TemplateSpec, cell_size_m: f64) -> Result<Self> {
        let tokens: Vec<String> = spec.walk.split('>').map(|t| t.trim().to_string()).collect();
        if tokens.first().map(String::as_str) != Some("H") || tokens.last().map(String::as_str) != Some("H") {
            return Err(Error::Config(format!("template {:?} must start and end with H", spec.walk)));
        }
        if tokens.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Config(format!("template {:?} repeats a token consecutively", spec.walk)));
        }
        let labels = tokens
            .iter()
            .map(|t| {
                let base = t.split('#').next().unwrap_or_default();
                let label: ActivityLabel = base.parse().map_err(Error::Config)?;
                if (label == ActivityLabel::Home) != (t == "H") {
                    return Err(Error::Config(format!("token {t:?}: H marks only the home parcel")));
                }
                Ok(label)
            })
            .collect::<Result<Vec<_>>>()?;
        if !(spec.spacing_km > 0.0) {
            return Err(Error::Config(format!("template {:?} needs positive spacing", spec.walk)));
        }
        let spacing_cells = (spec.spacing_km * 1000.0 / cell_size_m).round() as i64;
        if spacing_cells < 1 {
            return Err(Error::Config(format!("template {:?}: spacing below one cell", spec.walk)));
        }
        Ok(Self {
            tokens,
            labels,
            spacing_cells,
        })
    }

    /// Visits between the leading and trailing home visit.
    fn inner_visits(&self) -> usize {
        self.tokens.len().saturating_sub(2)
    }

    /// Distinct tokens in first-appearance order.
    fn distinct(&self) -> Vec<(&str, ActivityLabel)> {
        let mut seen = HashSet::new();
        self.tokens
            .iter()
            .zip(&self.labels)
            .filter(|(t, _)| seen.insert(t.as_str()))
            .map(|(t, l)| (t.as_str(), *l))
            .collect()
    }
}

impl SynthConfig {
    fn templates(&self) -> Result<Vec<Template>> {
        self.templates.iter().map(|t| Template::parse(t, self.cell_size_m)).collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.parcels_per_side == 0 || !(self.cell_size_m > 0.0) {
            return Err(Error::Config("grid needs at least one positive-size cell".into()));
        }
        if self.activity_mix.len() != 12 || self.activity_mix.iter().any(|w| !(*w >= 0.0)) || self.activity_mix.iter().sum::<f64>() <= 0.0 {
            return Err(Error::Config("activity_mix needs 12 non-negative weights with a positive sum".into()));
        }
        if self.templates.is_empty() {
            return Err(Error::Config("at least one template is required".into()));
        }
        let sum: f64 = self.templates.iter().map(|t| t.weight).sum();
        if self.templates.iter().any(|t| !(t.weight >= 0.0)) || (sum - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!("template weights must sum to 1 (got {sum})")));
        }
        let [lo, hi] = self.tweets_per_day;
        if lo < 6 || hi < lo {
            return Err(Error::Config(format!("tweets_per_day [{lo}, {hi}] must satisfy 6 <= min <= max")));
        }
        let day_slots = DAY_SLOTS.count();
        if hi - NIGHT_POINTS > day_slots {
            return Err(Error::Config(format!("at most {} points per day fit the schedule", day_slots + NIGHT_POINTS)));
        }
        if self.days == 0 {
            return Err(Error::Config("days must be positive".into()));
        }
        for (spec, t) in self.templates.iter().zip(self.templates()?) {
            if t.inner_visits() > lo - NIGHT_POINTS {
                return Err(Error::InfeasibleSynth(format!(
                    "template {:?} has {} inner visits but a day may carry only {} daytime points",
                    spec.walk,
                    t.inner_visits(),
                    lo - NIGHT_POINTS
                )));
            }
        }
        Ok(())
    }
}

/// Per-user and per-stream seeds derived from the master seed.
fn derive_seed(seed: u64, stream: u64, index: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ index.wrapping_mul(0xD1B5_4A32_D192_ED03);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

const STREAM_USERS: u64 = 1;
const STREAM_STATIONARY: u64 = 2;
const STREAM_TELEPORTER: u64 = 3;
const STREAM_TOURIST: u64 = 4;

struct Grid {
    side: usize,
    cell_m: f64,
    center: LatLon,
    codes: Vec<ActivityCode>,
    claimed: Vec<bool>,
}

impl Grid {
    fn cell(&self, row: i64, col: i64) -> Option<usize> {
        let s = self.side as i64;
        (row >= 0 && col >= 0 && row < s && col < s).then(|| (row * s + col) as usize)
    }

    fn row_col(&self, cell: usize) -> (i64, i64) {
        ((cell / self.side) as i64, (cell % self.side) as i64)
    }

    /// Local (east, north) meters of the cell's lower-left corner.
    fn corner_m(&self, cell: usize) -> (f64, f64) {
        let (row, col) = self.row_col(cell);
        let half = self.side as f64 * self.cell_m / 2.0;
        (col as f64 * self.cell_m - half, row as f64 * self.cell_m - half)
    }

    fn to_latlon(&self, east: f64, north: f64) -> LatLon {
        self.center.offset_m(east, north)
    }

    fn center_of(&self, cell: usize) -> LatLon {
        let (e, n) = self.corner_m(cell);
        self.to_latlon(e + self.cell_m / 2.0, n + self.cell_m / 2.0)
    }

    fn polygon(&self, cell: usize) -> Polygon {
        let (e, n) = self.corner_m(cell);
        let m = self.cell_m * PARCEL_MARGIN;
        Polygon::rectangle(self.to_latlon(e + m, n + m), self.to_latlon(e + self.cell_m - m, n + self.cell_m - m))
    }

    fn point_in(&self, cell: usize, rng: &mut ChaCha8Rng) -> LatLon {
        let (e, n) = self.corner_m(cell);
        let lo = self.cell_m * POINT_MARGIN;
        let hi = self.cell_m * (1.0 - POINT_MARGIN);
        self.to_latlon(e + rng.gen_range(lo..hi), n + rng.gen_range(lo..hi))
    }

    fn parcel_id(cell: usize) -> u32 {
        cell as u32 + 1
    }

    fn random_cell(&self, rng: &mut ChaCha8Rng, accept: impl Fn(usize) -> bool) -> Option<usize> {
        let n = self.side * self.side;
        (0..PLACEMENT_ATTEMPTS).map(|_| rng.gen_range(0..n)).find(|c| accept(*c))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthUser {
    pub user_id: String,
    pub template: usize,
    pub home_parcel_id: u32,
    /// Parcel per distinct template token, in first-appearance order.
    pub parcel_ids: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpectedClass {
    pub signature: String,
    pub count: usize,
    pub percentage: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpectedCensus {
    pub kind: MotifKind,
    pub total: usize,
    pub one_node_percentage: f64,
    pub classes: Vec<ExpectedClass>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub seed: u64,
    pub users: Vec<GroundTruthUser>,
    pub stationary_bots: Vec<String>,
    pub teleporters: Vec<String>,
    pub tourists: Vec<String>,
    pub census: Vec<ExpectedCensus>,
    /// Distances between parcel centers; observed values differ by the
    /// scatter of points inside parcels.
    pub distances: Vec<DistanceStats>,
}

impl GroundTruth {
    pub fn census_for(&self, kind: MotifKind) -> Option<&ExpectedCensus> {
        self.census.iter().find(|c| c.kind == kind)
    }
}

#[derive(Debug, Clone)]
pub struct SynthOutput {
    pub parcels_geojson: String,
    pub boundary_geojson: String,
    pub records_tsv: String,
    pub ground_truth: GroundTruth,
}

pub const PARCELS_FILE: &str = "parcels.geojson";
pub const BOUNDARY_FILE: &str = "boundary.geojson";
pub const RECORDS_FILE: &str = "records.tsv";
pub const GROUND_TRUTH_FILE: &str = "ground_truth.json";

impl SynthOutput {
    pub fn write_to(&self, dir: &Path) -> Result<()> {
        write_atomic(&dir.join(PARCELS_FILE), self.parcels_geojson.as_bytes())?;
        write_atomic(&dir.join(BOUNDARY_FILE), self.boundary_geojson.as_bytes())?;
        write_atomic(&dir.join(RECORDS_FILE), self.records_tsv.as_bytes())?;
        let mut gt = serde_json::to_string_pretty(&self.ground_truth)?;
        gt.push('\n');
        write_atomic(&dir.join(GROUND_TRUTH_FILE), gt.as_bytes())
    }
}

/// Number of users per template by largest remainder.
fn quotas(weights: &[f64], n: usize) -> Vec<usize> {
    let raw: Vec<f64> = weights.iter().map(|w| w * n as f64).collect();
    let mut q: Vec<usize> = raw.iter().map(|r| r.floor() as usize).collect();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| {
        let (fa, fb) = (raw[a] - raw[a].floor(), raw[b] - raw[b].floor());
        fb.partial_cmp(&fa).unwrap_or(std::cmp::Ordering::Equal).then(a.cmp(&b))
    });
    let missing = n - q.iter().sum::<usize>();
    for &i in order.iter().take(missing) {
        q[i] += 1;
    }
    q
}

fn weekdays(n: usize) -> Vec<NaiveDate> {
    epoch()
        .iter_days()
        .filter(|d| crate::annotate::is_weekday(*d))
        .take(n)
        .collect()
}

struct Emitter {
    offset: Duration,
    records: Vec<PointRecord>,
}

impl Emitter {
    fn emit(&mut self, user: &str, local: NaiveDateTime, position: LatLon) {
        self.records.push(PointRecord {
            user_id: user.to_string(),
            timestamp: Utc.from_utc_datetime(&(local - self.offset)),
            position,
            text: Some("synthetic post".to_string()),
            source: LocationSource::Gps,
        });
    }

    fn at_slot(date: NaiveDate, slot: usize, rng: &mut ChaCha8Rng) -> NaiveDateTime {
        date.and_hms_opt(0, 0, 0).expect("midnight") + Duration::seconds(slot as i64 * 1800 + rng.gen_range(0..SLOT_SPREAD_S))
    }
}

/// Places a template's distinct parcels: home on a free residential-coded
/// cell (recoded if needed), every further location `spacing` cells from
/// the previous one along a grid axis.
fn place(grid: &Grid, t: &Template, rng: &mut ChaCha8Rng) -> Option<Vec<usize>> {
    let distinct = t.distinct();
    let n = grid.side * grid.side;
    'attempt: for _ in 0..PLACEMENT_ATTEMPTS {
        let home = rng.gen_range(0..n);
        if grid.claimed[home] {
            continue;
        }
        let mut cells = vec![home];
        for _ in 1..distinct.len() {
            let (r, c) = grid.row_col(*cells.last().expect("home placed"));
            let s = t.spacing_cells;
            let mut dirs = [(0, s), (s, 0), (0, -s), (-s, 0)];
            dirs.shuffle(rng);
            let next = dirs
                .iter()
                .filter_map(|(dr, dc)| grid.cell(r + dr, c + dc))
                .find(|cell| !grid.claimed[*cell] && !cells.contains(cell));
            match next {
                Some(cell) => cells.push(cell),
                None => continue 'attempt,
            }
        }
        return Some(cells);
    }
    None
}

/// Daytime slots of one day split into `visits` non-empty ascending groups.
fn day_schedule(points: usize, visits: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<usize>> {
    let day: Vec<usize> = DAY_SLOTS.collect();
    let daytime = points - NIGHT_POINTS;
    let mut slots: Vec<usize> = sample(rng, day.len(), daytime).into_iter().map(|i| day[i]).collect();
    slots.sort_unstable();
    if visits == 0 {
        return vec![slots];
    }
    let mut cuts: Vec<usize> = sample(rng, daytime - 1, visits - 1).into_iter().map(|i| i + 1).collect();
    cuts.sort_unstable();
    let mut groups = Vec::with_capacity(visits);
    let mut start = 0;
    for cut in cuts.into_iter().chain(std::iter::once(daytime)) {
        groups.push(slots[start..cut].to_vec());
        start = cut;
    }
    groups
}

fn night_slots(rng: &mut ChaCha8Rng) -> (usize, [usize; 2]) {
    let early = rng.gen_range(0..12);
    let late: Vec<usize> = sample(rng, 6, 2).into_iter().map(|i| 42 + i).collect();
    let (a, b) = (late[0].min(late[1]), late[0].max(late[1]));
    (early, [a, b])
}

/// Builds the world, population and ground truth for `cfg`.
pub fn generate(cfg: &SynthConfig) -> Result<SynthOutput> {
    cfg.validate()?;
    let templates = cfg.templates()?;
    let side = cfg.parcels_per_side;
    let n_cells = side * side;

    let mut world_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mix = WeightedIndex::new(&cfg.activity_mix).map_err(|e| Error::Config(e.to_string()))?;
    let codes: Vec<ActivityCode> = (0..n_cells)
        .map(|_| ActivityCode::new(mix.sample(&mut world_rng) as u8 + 1).expect("code in range"))
        .collect();
    let mut grid = Grid {
        side,
        cell_m: cfg.cell_size_m,
        center: LatLon::new(cfg.center_lat, cfg.center_lon),
        codes,
        claimed: vec![false; n_cells],
    };

    let weights: Vec<f64> = cfg.templates.iter().map(|t| t.weight).collect();
    let mut assignment: Vec<usize> = quotas(&weights, cfg.num_users)
        .iter()
        .enumerate()
        .flat_map(|(i, q)| std::iter::repeat_n(i, *q))
        .collect();
    assignment.shuffle(&mut world_rng);

    let dates = weekdays(cfg.days);
    let anchor_date = epoch() + Duration::days(ANCHOR_DAY);
    let mut out = Emitter {
        offset: Duration::minutes(cfg.utc_offset_minutes as i64),
        records: Vec::new(),
    };
    let mut users = Vec::with_capacity(cfg.num_users);
    let mut expected_days: Vec<DailyNetwork> = Vec::new();

    for (u, &ti) in assignment.iter().enumerate() {
        let t = &templates[ti];
        let user_id = format!("user-{:05}", u + 1);
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, STREAM_USERS, u as u64));
        let cells = place(&grid, t, &mut rng).ok_or_else(|| {
            Error::InfeasibleSynth(format!("no free cells for template {:?} of {user_id}", cfg.templates[ti].walk))
        })?;
        let distinct = t.distinct();
        let cell_of: BTreeMap<&str, usize> = distinct.iter().zip(&cells).map(|((tok, _), c)| (*tok, *c)).collect();
        for ((_, label), &cell) in distinct.iter().zip(&cells) {
            grid.claimed[cell] = true;
            grid.codes[cell] = label.code();
        }
        let home = cells[0];

        for &date in &dates {
            let k = rng.gen_range(cfg.tweets_per_day[0]..=cfg.tweets_per_day[1]);
            let (early, late) = night_slots(&mut rng);
            out.emit(&user_id, Emitter::at_slot(date, early, &mut rng), grid.point_in(home, &mut rng));
            let inner = if t.tokens.len() > 2 { &t.tokens[1..t.tokens.len() - 1] } else { &[][..] };
            let groups = day_schedule(k, inner.len(), &mut rng);
            let targets: Vec<usize> = if inner.is_empty() {
                vec![home]
            } else {
                inner.iter().map(|tok| cell_of[tok.as_str()]).collect()
            };
            for (cell, slots) in targets.iter().zip(&groups) {
                for &slot in slots {
                    out.emit(&user_id, Emitter::at_slot(date, slot, &mut rng), grid.point_in(*cell, &mut rng));
                }
            }
            for slot in late {
                out.emit(&user_id, Emitter::at_slot(date, slot, &mut rng), grid.point_in(home, &mut rng));
            }
        }
        let noon = anchor_date.and_hms_opt(12, 0, 0).expect("noon");
        out.emit(&user_id, noon, grid.point_in(home, &mut rng));

        let nodes: Vec<NetworkNode> = distinct
            .iter()
            .zip(&cells)
            .map(|((_, label), cell)| NetworkNode {
                location: None,
                label: *label,
                anchor: Some(grid.center_of(*cell)),
            })
            .collect();
        let index: BTreeMap<&str, usize> = distinct.iter().enumerate().map(|(i, (tok, _))| (*tok, i)).collect();
        let walk: Vec<usize> = t.tokens.iter().map(|tok| index[tok.as_str()]).collect();
        let net = DailyNetwork::from_walk(user_id.clone(), nodes, walk);
        expected_days.extend(std::iter::repeat_n(net, dates.len()));

        users.push(GroundTruthUser {
            user_id,
            template: ti,
            home_parcel_id: Grid::parcel_id(home),
            parcel_ids: cells.iter().map(|c| Grid::parcel_id(*c)).collect(),
        });
    }

    let free = |grid: &Grid, c: usize| !grid.claimed[c];
    let residential = ActivityCode::RESIDENTIAL;

    let mut stationary_bots = Vec::new();
    for b in 0..cfg.bots.stationary {
        let id = format!("bot-stationary-{:03}", b + 1);
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, STREAM_STATIONARY, b as u64));
        let cell = grid
            .random_cell(&mut rng, |c| free(&grid, c) && grid.codes[c] != residential)
            .ok_or_else(|| Error::InfeasibleSynth("no free non-residential parcel for a stationary bot".into()))?;
        for &date in dates.iter().chain(std::iter::once(&anchor_date)) {
            for slot in [20, 26, 32] {
                out.emit(&id, Emitter::at_slot(date, slot, &mut rng), grid.point_in(cell, &mut rng));
            }
        }
        stationary_bots.push(id);
    }

    let mut teleporters = Vec::new();
    for b in 0..cfg.bots.teleporter {
        let id = format!("bot-teleporter-{:03}", b + 1);
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, STREAM_TELEPORTER, b as u64));
        let home = grid
            .random_cell(&mut rng, |c| free(&grid, c) && grid.codes[c] == residential)
            .ok_or_else(|| Error::InfeasibleSynth("no free residential parcel for a teleporter".into()))?;
        let (r, c) = grid.row_col(home);
        let last = side as i64 - 1;
        let far = grid
            .cell(if r * 2 > last { 0 } else { last }, if c * 2 > last { 0 } else { last })
            .expect("corner cell");
        let here = grid.point_in(home, &mut rng);
        let there = grid.point_in(far, &mut rng);
        let dist = crate::geometry::haversine(here, there);
        if dist <= 2.0 * 240.0 {
            return Err(Error::InfeasibleSynth("grid too small for a teleporter jump".into()));
        }
        for &date in dates.iter().chain(std::iter::once(&anchor_date)) {
            out.emit(&id, date.and_hms_opt(12, 0, 0).expect("noon"), grid.point_in(home, &mut rng));
        }
        // one jump at twice the speed limit at least
        let jump_at = dates[dates.len() / 2].and_hms_opt(13, 0, 0).expect("13:00");
        let dt = ((dist / 1000.0).floor() as i64).max(1);
        out.emit(&id, jump_at, here);
        out.emit(&id, jump_at + Duration::seconds(dt), there);
        teleporters.push(id);
    }

    let mut tourists = Vec::new();
    for v in 0..cfg.tourists {
        let id = format!("tourist-{:03}", v + 1);
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, STREAM_TOURIST, v as u64));
        let stay = grid
            .random_cell(&mut rng, |c| free(&grid, c) && grid.codes[c] == residential)
            .ok_or_else(|| Error::InfeasibleSynth("no free residential parcel for a tourist".into()))?;
        let sight = grid
            .random_cell(&mut rng, |c| free(&grid, c) && grid.codes[c] != residential)
            .ok_or_else(|| Error::InfeasibleSynth("no free parcel for a tourist".into()))?;
        for &date in dates.iter().take(TOURIST_DAYS) {
            let (early, late) = night_slots(&mut rng);
            out.emit(&id, Emitter::at_slot(date, early, &mut rng), grid.point_in(stay, &mut rng));
            for slot in day_schedule(cfg.tweets_per_day[0], 1, &mut rng).concat() {
                out.emit(&id, Emitter::at_slot(date, slot, &mut rng), grid.point_in(sight, &mut rng));
            }
            for slot in late {
                out.emit(&id, Emitter::at_slot(date, slot, &mut rng), grid.point_in(stay, &mut rng));
            }
        }
        tourists.push(id);
    }

    let schema = RecordSchema::default();
    let mut records_tsv = format!("# {}\n", schema.header());
    for r in &out.records {
        records_tsv.push_str(&schema.format(r));
        records_tsv.push('\n');
    }

    let polygons: Vec<Polygon> = (0..n_cells).map(|c| grid.polygon(c)).collect();
    let parcels = to_geojson(
        polygons.iter().zip(&grid.codes).map(|(p, code)| (p, code.category_name())),
        "category",
    );
    let half = side as f64 * cfg.cell_size_m / 2.0 + 1000.0;
    let boundary = Polygon::rectangle(grid.to_latlon(-half, -half), grid.to_latlon(half, half));
    let boundary_doc = to_geojson(std::iter::once((&boundary, "boundary")), "name");

    let census_cfg = CensusConfig::default();
    let census = [MotifKind::Lbm, MotifKind::Abm]
        .into_iter()
        .map(|kind| {
            let graphs: Vec<_> = expected_days.iter().map(|d| d.view(kind).digraph()).collect();
            let c = motif_census(&graphs, kind, &census_cfg);
            ExpectedCensus {
                kind,
                total: c.total,
                one_node_percentage: c.one_node_percentage(),
                classes: c
                    .classes
                    .iter()
                    .map(|e| ExpectedClass {
                        signature: e.signature.signature.clone(),
                        count: e.count,
                        percentage: e.percentage,
                    })
                    .collect(),
            }
        })
        .collect();
    let day_distances: Vec<DayDistances> = expected_days
        .iter()
        .map(|d| DayDistances::from_network(d, &d.view(MotifKind::Abm)))
        .collect();

    Ok(SynthOutput {
        parcels_geojson: serde_json::to_string(&parcels)? + "\n",
        boundary_geojson: serde_json::to_string(&boundary_doc)? + "\n",
        records_tsv,
        ground_truth: GroundTruth {
            seed: cfg.seed,
            users,
            stationary_bots,
            teleporters,
            tourists,
            census,
            distances: distance_stats(&day_distances, census_cfg.max_nodes),
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::parse_records;

    fn small(walk: &str) -> SynthConfig {
        SynthConfig {
            parcels_per_side: 40,
            num_users: 1,
            templates: vec![TemplateSpec::new(walk, 1.0, 1.0)],
            days: 1,
            ..SynthConfig::default()
        }
    }

    #[test]
    fn quotas_largest_remainder() {
        assert_eq!(quotas(&[0.5, 0.25, 0.15, 0.1], 300), vec![150, 75, 45, 30]);
        assert_eq!(quotas(&[1.0 / 3.0; 3], 10).iter().sum::<usize>(), 10);
    }

    #[test]
    fn single_user_single_day() {
        let out = generate(&small("H>W>H")).unwrap();
        let (records, report) = parse_records(out.records_tsv.as_bytes(), &RecordSchema::default()).unwrap();
        assert_eq!(report.malformed, 0);
        // one weekday plus the residency anchor
        let on_day: Vec<_> = records.iter().filter(|r| r.timestamp < Utc.with_ymd_and_hms(2014, 1, 8, 0, 0, 0).unwrap()).collect();
        assert!(on_day.len() >= 6);
        let gt = &out.ground_truth;
        assert_eq!(gt.users.len(), 1);
        assert_eq!(gt.census_for(MotifKind::Lbm).unwrap().classes[0].signature, "2|0110");
        assert_eq!(gt.census_for(MotifKind::Abm).unwrap().classes[0].signature, "2|H.W|0110");
    }

    #[test]
    fn same_seed_same_bytes() {
        let cfg = SynthConfig {
            num_users: 20,
            days: 3,
            bots: BotSpec { stationary: 2, teleporter: 2 },
            tourists: 2,
            ..SynthConfig::default()
        };
        let a = generate(&cfg).unwrap();
        let b = generate(&cfg).unwrap();
        assert_eq!(a.records_tsv, b.records_tsv);
        assert_eq!(a.parcels_geojson, b.parcels_geojson);
        assert_eq!(a.ground_truth, b.ground_truth);
        let other = generate(&SynthConfig { seed: 7, ..cfg }).unwrap();
        assert_ne!(a.records_tsv, other.records_tsv);
    }

    #[test]
    fn extras_do_not_touch_legitimate_users() {
        let base = SynthConfig {
            num_users: 10,
            days: 2,
            ..SynthConfig::default()
        };
        let noisy = SynthConfig {
            bots: BotSpec { stationary: 3, teleporter: 2 },
            tourists: 4,
            ..base.clone()
        };
        let a = generate(&base).unwrap();
        let b = generate(&noisy).unwrap();
        assert_eq!(a.parcels_geojson, b.parcels_geojson);
        assert!(b.records_tsv.starts_with(&a.records_tsv));
    }

    #[test]
    fn rejects_bad_configs() {
        let mut cfg = small("H>W>H");
        cfg.templates[0].weight = 0.5;
        assert!(matches!(generate(&cfg), Err(Error::Config(_))));

        let mut cfg = small("H>W>Sh>E>C>H");
        cfg.tweets_per_day = [6, 8];
        assert!(matches!(generate(&cfg), Err(Error::InfeasibleSynth(_))));

        assert!(matches!(generate(&small("W>H")), Err(Error::Config(_))));
        assert!(matches!(generate(&small("H>W>W>H")), Err(Error::Config(_))));
        assert!(matches!(generate(&small("H>Q>H")), Err(Error::Config(_))));
    }

    #[test]
    fn schedule_groups_nonempty_and_ordered() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for k in 6..=20 {
            for v in 1..=(k - NIGHT_POINTS) {
                let g = day_schedule(k, v, &mut rng);
                assert_eq!(g.len(), v);
                assert!(g.iter().all(|s| !s.is_empty()));
                let flat = g.concat();
                assert_eq!(flat.len(), k - NIGHT_POINTS);
                assert!(flat.windows(2).all(|w| w[0] < w[1]));
            }
        }
    }
}
