//! Land-use annotation of user histories, the stationary-bot filter, active
//! locations, home inference, and daily splitting with slot occupancy.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use chrono::{Datelike, Duration, NaiveDate, NaiveDateTime, Timelike, Weekday};
use serde::{Deserialize, Serialize};

use crate::ingest::{PointRecord, UserTrack};
use crate::parcel_index::{ActivityCode, ParcelId, SpatialIndex};

#[derive(Debug, Clone, PartialEq)]
pub struct AnnotatedPoint {
    pub record: PointRecord,
    pub parcel_id: Option<ParcelId>,
    pub code: ActivityCode,
    pub local_time: NaiveDateTime,
}

/// Joins every point to its nearest parcel (code 12 when none lies within
/// `radius_m`) and shifts timestamps by a fixed UTC offset. Order and count
/// are preserved.
pub fn annotate_history(track: &UserTrack, idx: &SpatialIndex, radius_m: f64, utc_offset_minutes: i32) -> Vec<AnnotatedPoint> {
    let offset = Duration::minutes(utc_offset_minutes as i64);
    track
        .points
        .iter()
        .map(|r| {
            let hit = idx.nearest(r.position, radius_m);
            AnnotatedPoint {
                record: r.clone(),
                parcel_id: hit.map(|m| m.parcel_id),
                code: hit.map_or(ActivityCode::OTHERS, |m| m.code),
                local_time: r.timestamp.naive_utc() + offset,
            }
        })
        .collect()
}

/// True when every point sits on one and the same non-residential parcel.
pub fn is_stationary_bot(history: &[AnnotatedPoint]) -> bool {
    let Some(first) = history.first() else {
        return false;
    };
    let Some(parcel) = first.parcel_id else {
        return false;
    };
    first.code != ActivityCode::RESIDENTIAL && history.iter().all(|p| p.parcel_id == Some(parcel))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActiveLocation {
    pub parcel_id: ParcelId,
    pub code: ActivityCode,
    pub tweet_count: usize,
    pub rank: usize,
}

/// Parcels whose point count strictly exceeds the user's mean count per
/// distinct parcel, ranked by count (ties: smaller parcel id first). Points
/// with code 12 carry no context and are not counted.
pub fn active_locations(history: &[AnnotatedPoint]) -> Vec<ActiveLocation> {
    let mut counts: BTreeMap<ParcelId, (usize, ActivityCode)> = BTreeMap::new();
    for p in history {
        if p.code == ActivityCode::OTHERS {
            continue;
        }
        if let Some(id) = p.parcel_id {
            counts.entry(id).or_insert((0, p.code)).0 += 1;
        }
    }
    let total: usize = counts.values().map(|(c, _)| c).sum();
    let distinct = counts.len();
    // count > total / distinct, in integers
    let mut active: Vec<(ParcelId, usize, ActivityCode)> = counts
        .into_iter()
        .filter(|(_, (c, _))| c * distinct > total)
        .map(|(id, (c, code))| (id, c, code))
        .collect();
    active.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    active
        .into_iter()
        .enumerate()
        .map(|(i, (parcel_id, tweet_count, code))| ActiveLocation {
            parcel_id,
            code,
            tweet_count,
            rank: i + 1,
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HomeRule {
    NightMode,
    TopResidential,
    Unknown,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HomeAssignment {
    pub user_id: String,
    pub home_parcel_id: Option<ParcelId>,
    pub rule: HomeRule,
}

/// Local-time window `[start, end)` in minutes after midnight; wraps past
/// midnight when `start > end`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NightWindow {
    pub start_minute: u32,
    pub end_minute: u32,
}

impl Default for NightWindow {
    fn default() -> Self {
        Self {
            start_minute: 21 * 60,
            end_minute: 6 * 60,
        }
    }
}

impl NightWindow {
    pub fn contains(&self, t: NaiveDateTime) -> bool {
        let m = t.hour() * 60 + t.minute();
        if self.start_minute <= self.end_minute {
            (self.start_minute..self.end_minute).contains(&m)
        } else {
            m >= self.start_minute || m < self.end_minute
        }
    }
}

/// Home inference. Rule 1: the residential parcel with the most points in
/// the night window (ties: more points overall, then smaller id). Rule 2:
/// the best-ranked residential active location. Otherwise unknown.
pub fn infer_home(user_id: &str, history: &[AnnotatedPoint], actives: &[ActiveLocation], night: NightWindow) -> HomeAssignment {
    let mut per_parcel: HashMap<ParcelId, (usize, usize)> = HashMap::new();
    for p in history {
        if p.code != ActivityCode::RESIDENTIAL {
            continue;
        }
        if let Some(id) = p.parcel_id {
            let e = per_parcel.entry(id).or_default();
            e.1 += 1;
            if night.contains(p.local_time) {
                e.0 += 1;
            }
        }
    }
    let night_best = per_parcel
        .iter()
        .filter(|(_, (night_count, _))| *night_count > 0)
        .max_by(|a, b| {
            a.1 .0
                .cmp(&b.1 .0)
                .then(a.1 .1.cmp(&b.1 .1))
                .then(b.0.cmp(a.0))
        })
        .map(|(id, _)| *id);
    if let Some(id) = night_best {
        return HomeAssignment {
            user_id: user_id.into(),
            home_parcel_id: Some(id),
            rule: HomeRule::NightMode,
        };
    }
    let ranked = actives
        .iter()
        .filter(|a| a.code == ActivityCode::RESIDENTIAL)
        .min_by_key(|a| a.rank);
    match ranked {
        Some(a) => HomeAssignment {
            user_id: user_id.into(),
            home_parcel_id: Some(a.parcel_id),
            rule: HomeRule::TopResidential,
        },
        None => HomeAssignment {
            user_id: user_id.into(),
            home_parcel_id: None,
            rule: HomeRule::Unknown,
        },
    }
}

pub const SLOTS_PER_DAY: usize = 48;

#[derive(Debug, Clone, PartialEq)]
pub struct UserDay {
    pub user_id: String,
    pub date: NaiveDate,
    pub points: Vec<AnnotatedPoint>,
    /// Distinct half-hour slots occupied, 0..=48.
    pub slot_count: usize,
}

fn slot_of(t: NaiveDateTime) -> u32 {
    (t.hour() * 60 + t.minute()) / 30
}

/// Partitions a history into local calendar days.
pub fn split_days(user_id: &str, history: &[AnnotatedPoint]) -> Vec<UserDay> {
    let mut by_date: BTreeMap<NaiveDate, Vec<AnnotatedPoint>> = BTreeMap::new();
    for p in history {
        by_date.entry(p.local_time.date()).or_default().push(p.clone());
    }
    by_date
        .into_iter()
        .map(|(date, mut points)| {
            points.sort_by_key(|p| p.local_time);
            let slot_count = points.iter().map(|p| slot_of(p.local_time)).collect::<BTreeSet<_>>().len();
            UserDay {
                user_id: user_id.into(),
                date,
                points,
                slot_count,
            }
        })
        .collect()
}

pub fn is_weekday(date: NaiveDate) -> bool {
    !matches!(date.weekday(), Weekday::Sat | Weekday::Sun)
}

/// Keeps days with at least `min_slots` occupied slots (and, when
/// `weekdays_only`, falling Monday to Friday).
pub fn select_active_days(days: Vec<UserDay>, min_slots: usize, weekdays_only: bool) -> Vec<UserDay> {
    days.into_iter()
        .filter(|d| d.slot_count >= min_slots && (!weekdays_only || is_weekday(d.date)))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ActiveScope {
    /// Each day is tested on its own.
    #[default]
    Day,
    /// A user with at least one qualifying day keeps all of their days
    /// (still subject to the weekday filter).
    User,
}

pub fn select_with_scope(days: Vec<UserDay>, min_slots: usize, weekdays_only: bool, scope: ActiveScope) -> Vec<UserDay> {
    match scope {
        ActiveScope::Day => select_active_days(days, min_slots, weekdays_only),
        ActiveScope::User => {
            let qualifies = days
                .iter()
                .any(|d| d.slot_count >= min_slots && (!weekdays_only || is_weekday(d.date)));
            if qualifies {
                days.into_iter().filter(|d| !weekdays_only || is_weekday(d.date)).collect()
            } else {
                Vec::new()
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{LatLon, Polygon};
    use crate::ingest::LocationSource;
    use crate::parcel_index::Parcel;
    use chrono::{TimeZone, Utc};

    fn ap(parcel: Option<u32>, code: u8, local: &str) -> AnnotatedPoint {
        let local_time = NaiveDateTime::parse_from_str(local, "%Y-%m-%d %H:%M").unwrap();
        AnnotatedPoint {
            record: PointRecord {
                user_id: "u".into(),
                timestamp: local_time.and_utc(),
                position: LatLon::new(0.0, 0.0),
                text: None,
                source: LocationSource::Gps,
            },
            parcel_id: parcel.map(ParcelId),
            code: ActivityCode::new(code).unwrap(),
            local_time,
        }
    }

    fn repeat(n: usize, parcel: u32, code: u8) -> Vec<AnnotatedPoint> {
        (0..n).map(|_| ap(Some(parcel), code, "2014-06-02 12:00")).collect()
    }

    #[test]
    fn annotation_codes_and_local_time() {
        let res = Polygon::rectangle(LatLon::new(0.0, 0.0), LatLon::new(0.001, 0.001));
        let idx = SpatialIndex::new(vec![Parcel {
            id: ParcelId(1),
            polygon: res,
            category: "Residential".into(),
            code: ActivityCode::RESIDENTIAL,
        }]);
        let mk = |lat: f64, lon: f64| PointRecord {
            user_id: "u".into(),
            timestamp: Utc.with_ymd_and_hms(2014, 6, 2, 3, 30, 0).unwrap(),
            position: LatLon::new(lat, lon),
            text: None,
            source: LocationSource::Gps,
        };
        let track = UserTrack {
            user_id: "u".into(),
            points: vec![mk(0.0005, 0.0005), mk(0.0005, 0.0047)],
        };
        let out = annotate_history(&track, &idx, 250.0, -300);
        assert_eq!(out.len(), 2);
        assert_eq!(out[0].code, ActivityCode::RESIDENTIAL);
        assert_eq!(out[0].parcel_id, Some(ParcelId(1)));
        // about 410 m away
        assert_eq!(out[1].code, ActivityCode::OTHERS);
        assert_eq!(out[1].parcel_id, None);
        assert_eq!(
            out[0].local_time,
            NaiveDateTime::parse_from_str("2014-06-01 22:30", "%Y-%m-%d %H:%M").unwrap()
        );
    }

    #[test]
    fn stationary_bot_rules() {
        assert!(is_stationary_bot(&repeat(500, 12, 6)));
        assert!(!is_stationary_bot(&repeat(500, 3, 1)));
        let mut two = repeat(10, 1, 6);
        two.extend(repeat(10, 2, 6));
        assert!(!is_stationary_bot(&two));
    }

    #[test]
    fn active_location_strict_mean() {
        let mut h = repeat(10, 1, 6);
        h.extend(repeat(2, 2, 6));
        h.extend(repeat(3, 3, 9));
        let a = active_locations(&h);
        assert_eq!(a.len(), 1);
        assert_eq!((a[0].parcel_id, a[0].rank, a[0].tweet_count), (ParcelId(1), 1, 10));

        let mut even = repeat(4, 1, 6);
        even.extend(repeat(4, 2, 6));
        assert!(active_locations(&even).is_empty());

        let mut tie = repeat(9, 5, 6);
        tie.extend(repeat(9, 4, 1));
        tie.extend(repeat(3, 6, 9));
        let a = active_locations(&tie);
        assert_eq!(a.iter().map(|x| (x.parcel_id.0, x.rank)).collect::<Vec<_>>(), vec![(4, 1), (5, 2)]);
    }

    #[test]
    fn code_twelve_points_not_counted() {
        let mut h = repeat(3, 1, 6);
        h.extend((0..50).map(|_| ap(None, 12, "2014-06-02 12:00")));
        h.extend(repeat(1, 2, 6));
        let a = active_locations(&h);
        assert_eq!(a.len(), 1);
        assert_eq!(a[0].parcel_id, ParcelId(1));
    }

    #[test]
    fn home_night_mode() {
        let mut h: Vec<_> = (0..5).map(|_| ap(Some(1), 1, "2014-06-02 23:00")).collect();
        h.extend((0..2).map(|_| ap(Some(2), 1, "2014-06-02 02:00")));
        let home = infer_home("u", &h, &active_locations(&h), NightWindow::default());
        assert_eq!(home.home_parcel_id, Some(ParcelId(1)));
        assert_eq!(home.rule, HomeRule::NightMode);
    }

    #[test]
    fn home_top_residential_fallback() {
        let mut h: Vec<_> = (0..10).map(|_| ap(Some(1), 6, "2014-06-02 10:00")).collect();
        h.extend((0..6).map(|_| ap(Some(2), 1, "2014-06-02 12:00")));
        h.extend((0..1).map(|_| ap(Some(3), 9, "2014-06-02 13:00")));
        let actives = active_locations(&h);
        assert_eq!(actives.iter().map(|a| a.parcel_id.0).collect::<Vec<_>>(), vec![1, 2]);
        let home = infer_home("u", &h, &actives, NightWindow::default());
        assert_eq!(home.home_parcel_id, Some(ParcelId(2)));
        assert_eq!(home.rule, HomeRule::TopResidential);
    }

    #[test]
    fn home_unknown_without_residential() {
        let h: Vec<_> = (0..10).map(|_| ap(Some(1), 6, "2014-06-02 23:00")).collect();
        let home = infer_home("u", &h, &active_locations(&h), NightWindow::default());
        assert_eq!(home.home_parcel_id, None);
        assert_eq!(home.rule, HomeRule::Unknown);
    }

    #[test]
    fn night_mode_beats_top_residential() {
        // parcel 2 is the top-ranked residential active location, but parcel 1
        // holds the only night tweet
        let mut h: Vec<_> = (0..20).map(|_| ap(Some(2), 1, "2014-06-02 12:00")).collect();
        h.push(ap(Some(1), 1, "2014-06-02 22:00"));
        let actives = active_locations(&h);
        assert_eq!(actives[0].parcel_id, ParcelId(2));
        let home = infer_home("u", &h, &actives, NightWindow::default());
        assert_eq!((home.home_parcel_id, home.rule), (Some(ParcelId(1)), HomeRule::NightMode));
    }

    #[test]
    fn night_window_edges() {
        let w = NightWindow::default();
        let t = |s: &str| NaiveDateTime::parse_from_str(&format!("2014-06-02 {s}"), "%Y-%m-%d %H:%M").unwrap();
        assert!(w.contains(t("21:00")));
        assert!(w.contains(t("05:59")));
        assert!(!w.contains(t("06:00")));
        assert!(!w.contains(t("20:59")));
    }

    #[test]
    fn slot_counting_and_midnight_split() {
        let days = split_days("u", &[ap(Some(1), 1, "2014-06-02 08:10"), ap(Some(1), 1, "2014-06-02 08:20")]);
        assert_eq!(days[0].slot_count, 1);
        let days = split_days(
            "u",
            &[
                ap(Some(1), 1, "2014-06-02 08:10"),
                ap(Some(1), 1, "2014-06-02 08:40"),
                ap(Some(1), 1, "2014-06-02 21:00"),
            ],
        );
        assert_eq!(days[0].slot_count, 3);
        let days = split_days("u", &[ap(Some(1), 1, "2014-06-02 23:59"), ap(Some(1), 1, "2014-06-03 00:01")]);
        assert_eq!(days.len(), 2);
        assert_eq!(days.iter().map(|d| d.points.len()).sum::<usize>(), 2);
    }

    fn day_with_slots(date: &str, slots: usize) -> UserDay {
        let pts: Vec<_> = (0..slots)
            .map(|s| ap(Some(1), 1, &format!("{date} {:02}:{:02}", s / 2, (s % 2) * 30)))
            .collect();
        split_days("u", &pts).pop().unwrap()
    }

    #[test]
    fn active_day_threshold_and_weekdays() {
        // 2014-06-02 is a Monday, 2014-06-07 a Saturday
        let kept = select_active_days(vec![day_with_slots("2014-06-02", 6)], 6, true);
        assert_eq!(kept.len(), 1);
        assert!(select_active_days(vec![day_with_slots("2014-06-02", 5)], 6, true).is_empty());
        assert!(select_active_days(vec![day_with_slots("2014-06-07", 10)], 6, true).is_empty());
        assert_eq!(select_active_days(vec![day_with_slots("2014-06-07", 10)], 6, false).len(), 1);
    }

    #[test]
    fn active_day_selection_idempotent() {
        let days = vec![
            day_with_slots("2014-06-02", 6),
            day_with_slots("2014-06-03", 2),
            day_with_slots("2014-06-07", 9),
            day_with_slots("2014-06-09", 12),
        ];
        let once = select_active_days(days, 6, true);
        assert_eq!(select_active_days(once.clone(), 6, true), once);
    }

    #[test]
    fn user_scope_keeps_all_weekdays() {
        let days = vec![day_with_slots("2014-06-02", 6), day_with_slots("2014-06-03", 2), day_with_slots("2014-06-07", 9)];
        let kept = select_with_scope(days.clone(), 6, true, ActiveScope::User);
        assert_eq!(kept.len(), 2);
        let none = select_with_scope(vec![day_with_slots("2014-06-03", 2)], 6, true, ActiveScope::User);
        assert!(none.is_empty());
    }
}
