use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use super::{ActivityLabel, Digraph, MotifKind};
use crate::annotate::{AnnotatedPoint, HomeAssignment, UserDay};
use crate::geometry::LatLon;
use crate::parcel_index::ParcelId;

/// Grid step (degrees) used to give unmatched points a location identity.
const UNMATCHED_CELL_DEG: f64 = 0.0025;

/// Identity of a visited location: a parcel, or for points without a
/// parcel in range, a coarse lat/lon cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum LocationKey {
    Parcel(ParcelId),
    Cell(i64, i64),
}

impl LocationKey {
    pub fn of(p: &AnnotatedPoint) -> Self {
        match p.parcel_id {
            Some(id) => LocationKey::Parcel(id),
            None => LocationKey::Cell(
                (p.record.position.lat / UNMATCHED_CELL_DEG).floor() as i64,
                (p.record.position.lon / UNMATCHED_CELL_DEG).floor() as i64,
            ),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkNode {
    /// `None` in the ABM view, where a node stands for an activity type.
    pub location: Option<LocationKey>,
    pub label: ActivityLabel,
    /// Centroid of the day's points at this location (LBM view only).
    pub anchor: Option<LatLon>,
}

/// Directed network of one user-day, built from a closed walk that starts
/// and ends at home. Nodes are numbered by first appearance, so home is 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DailyNetwork {
    pub user_id: String,
    pub nodes: Vec<NetworkNode>,
    pub edges: BTreeSet<(usize, usize)>,
    pub home: usize,
    pub walk: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rejection {
    NoHome,
    OpenWalk,
    Empty,
}

impl Rejection {
    pub fn as_str(self) -> &'static str {
        match self {
            Rejection::NoHome => "no_home",
            Rejection::OpenWalk => "open_walk",
            Rejection::Empty => "empty",
        }
    }
}

impl DailyNetwork {
    /// Builds a network from nodes and a walk over node indices; edges are
    /// the consecutive pairs with distinct endpoints.
    ///
    /// Panics if the walk is not closed at `walk[0]` or leaves a node
    /// unvisited; those are construction bugs, not data conditions.
    pub fn from_walk(user_id: impl Into<String>, nodes: Vec<NetworkNode>, walk: Vec<usize>) -> Self {
        assert!(!walk.is_empty(), "empty walk");
        assert_eq!(walk.first(), walk.last(), "walk must be closed");
        let edges: BTreeSet<(usize, usize)> = walk.windows(2).filter(|w| w[0] != w[1]).map(|w| (w[0], w[1])).collect();
        let net = Self {
            user_id: user_id.into(),
            home: walk[0],
            nodes,
            edges,
            walk,
        };
        assert!(
            (0..net.nodes.len()).all(|v| net.walk.contains(&v)),
            "every node must lie on the walk"
        );
        // closed walks give every node an entry and an exit
        assert!(net.digraph().every_node_entered_and_left(), "closed walk violated in/out degree");
        net
    }

    /// Network over anonymous locations from a label walk where equal
    /// tokens denote the same location; the first token is home.
    pub fn from_tokens<T: Eq + std::hash::Hash + Clone>(user_id: &str, tokens: &[(T, ActivityLabel)]) -> Self {
        let mut index: HashMap<T, usize> = HashMap::new();
        let mut nodes = Vec::new();
        let walk = tokens
            .iter()
            .map(|(t, label)| {
                *index.entry(t.clone()).or_insert_with(|| {
                    nodes.push(NetworkNode {
                        location: None,
                        label: *label,
                        anchor: None,
                    });
                    nodes.len() - 1
                })
            })
            .collect();
        Self::from_walk(user_id, nodes, walk)
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn trip_count(&self) -> usize {
        self.walk.len() - 1
    }

    pub fn digraph(&self) -> Digraph {
        Digraph::with_labels(self.nodes.iter().map(|n| n.label).collect(), self.home, self.edges.iter().copied())
    }

    pub fn label_walk(&self) -> Vec<ActivityLabel> {
        self.walk.iter().map(|&v| self.nodes[v].label).collect()
    }

    /// The view used for the given motif kind.
    pub fn view(&self, kind: MotifKind) -> DailyNetwork {
        match kind {
            MotifKind::Lbm => self.clone(),
            MotifKind::Abm => abm_reduce(self),
        }
    }
}

/// Builds the LBM network of one day: consecutive points on the same
/// location collapse into one visit, and the visit sequence must start and
/// end at the home parcel.
pub fn build_daily_network(day: &UserDay, home: &HomeAssignment) -> Result<DailyNetwork, Rejection> {
    let home_parcel = home.home_parcel_id.ok_or(Rejection::NoHome)?;
    let home_key = LocationKey::Parcel(home_parcel);
    if day.points.is_empty() {
        return Err(Rejection::Empty);
    }

    let mut visits: Vec<LocationKey> = Vec::new();
    let mut sums: HashMap<LocationKey, (f64, f64, usize)> = HashMap::new();
    let mut first_point: HashMap<LocationKey, &AnnotatedPoint> = HashMap::new();
    for p in &day.points {
        let key = LocationKey::of(p);
        if visits.last() != Some(&key) {
            visits.push(key);
        }
        let s = sums.entry(key).or_insert((0.0, 0.0, 0));
        s.0 += p.record.position.lat;
        s.1 += p.record.position.lon;
        s.2 += 1;
        first_point.entry(key).or_insert(p);
    }
    if visits.first() != Some(&home_key) || visits.last() != Some(&home_key) {
        return Err(Rejection::OpenWalk);
    }

    let mut index: HashMap<LocationKey, usize> = HashMap::new();
    let mut nodes: Vec<NetworkNode> = Vec::new();
    let walk: Vec<usize> = visits
        .iter()
        .map(|key| {
            *index.entry(*key).or_insert_with(|| {
                let (lat, lon, n) = sums[key];
                let label = if *key == home_key {
                    ActivityLabel::Home
                } else {
                    ActivityLabel::from_code(first_point[key].code)
                };
                nodes.push(NetworkNode {
                    location: Some(*key),
                    label,
                    anchor: Some(LatLon::new(lat / n as f64, lon / n as f64)),
                });
                nodes.len() - 1
            })
        })
        .collect();
    Ok(DailyNetwork::from_walk(day.user_id.clone(), nodes, walk))
}

/// ABM view: the walk is rewritten as labels, consecutive equal labels
/// merge, and one node remains per distinct label.
pub fn abm_reduce(net: &DailyNetwork) -> DailyNetwork {
    let mut labels = net.label_walk();
    labels.dedup();
    let tokens: Vec<(ActivityLabel, ActivityLabel)> = labels.iter().map(|l| (*l, *l)).collect();
    DailyNetwork::from_tokens(&net.user_id, &tokens)
}
