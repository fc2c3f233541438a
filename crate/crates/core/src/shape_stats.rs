//! Trajectory shape in the intrinsic reference frame, the pooled density
//! of normalized positions, motif distance statistics and the Pearson
//! correlation used for the representativeness check.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};
use crate::geometry::{haversine, LatLon, LocalFrame};
use crate::motif::{DailyNetwork, MotifKind};

/// Second moments of centered coordinates, divided by n.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GyrationTensor {
    pub xx: f64,
    pub xy: f64,
    pub yy: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Eigen2 {
    /// Larger eigenvalue first.
    pub values: [f64; 2],
    /// Unit eigenvector of the larger eigenvalue.
    pub major_axis: (f64, f64),
}

impl GyrationTensor {
    pub fn from_centered(points: &[(f64, f64)]) -> Self {
        let n = points.len() as f64;
        let (xx, xy, yy) = points
            .iter()
            .fold((0.0, 0.0, 0.0), |(a, b, c), (x, y)| (a + x * x, b + x * y, c + y * y));
        Self {
            xx: xx / n,
            xy: xy / n,
            yy: yy / n,
        }
    }

    /// Eigen decomposition by a single Jacobi rotation.
    pub fn eigen(&self) -> Eigen2 {
        let theta = 0.5 * (2.0 * self.xy).atan2(self.xx - self.yy);
        let (s, c) = theta.sin_cos();
        let major = self.xx * c * c + 2.0 * self.xy * s * c + self.yy * s * s;
        let minor = self.xx * s * s - 2.0 * self.xy * s * c + self.yy * c * c;
        Eigen2 {
            values: [major, minor],
            major_axis: (c, s),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Degenerate {
    TooFewPoints,
    AllIdentical,
    Collinear,
}

/// A trajectory in the intrinsic reference frame.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignedTrajectory {
    /// `(x / sigma_x, y / sigma_y)` after centering and rotation.
    pub points: Vec<(f64, f64)>,
    pub sigma_x: f64,
    pub sigma_y: f64,
    /// Principal axis as an (east, north) unit vector in the input frame,
    /// oriented towards the rotated frame's negative x side.
    pub principal_axis: (f64, f64),
    pub eigenvalues: [f64; 2],
}

/// Aligns planar points (meters). The principal axis is the major
/// eigenvector of the gyration tensor; it is oriented so the point with the
/// largest |projection| lands on the negative x side (ties: the side away
/// from `home`), and the frame is rotated so that axis runs along x.
pub fn align_planar(points: &[(f64, f64)], home: Option<(f64, f64)>) -> Result<AlignedTrajectory, Degenerate> {
    if points.len() < 3 {
        return Err(Degenerate::TooFewPoints);
    }
    if points.iter().all(|p| *p == points[0]) {
        return Err(Degenerate::AllIdentical);
    }
    let n = points.len() as f64;
    let (sx, sy) = points.iter().fold((0.0, 0.0), |(a, b), (x, y)| (a + x, b + y));
    let (cx, cy) = (sx / n, sy / n);
    let centered: Vec<(f64, f64)> = points.iter().map(|(x, y)| (x - cx, y - cy)).collect();

    let eig = GyrationTensor::from_centered(&centered).eigen();
    let mut axis = eig.major_axis;
    let proj = |p: &(f64, f64), a: (f64, f64)| p.0 * a.0 + p.1 * a.1;

    let max_abs = centered.iter().map(|p| proj(p, axis).abs()).fold(0.0, f64::max);
    let near_max = |p: &&(f64, f64)| proj(p, axis).abs() >= max_abs * (1.0 - 1e-12);
    let has_pos = centered.iter().filter(near_max).any(|p| proj(p, axis) > 0.0);
    let has_neg = centered.iter().filter(near_max).any(|p| proj(p, axis) < 0.0);
    let flip = match (has_pos, has_neg) {
        (true, false) => true,
        (true, true) => home.is_some_and(|(hx, hy)| proj(&(hx - cx, hy - cy), axis) > 0.0),
        _ => false,
    };
    if flip {
        axis = (-axis.0, -axis.1);
    }
    let perp = (-axis.1, axis.0);

    let rotated: Vec<(f64, f64)> = centered.iter().map(|p| (proj(p, axis), proj(p, perp))).collect();
    let sigma_x = (rotated.iter().map(|p| p.0 * p.0).sum::<f64>() / n).sqrt();
    let sigma_y = (rotated.iter().map(|p| p.1 * p.1).sum::<f64>() / n).sqrt();
    if sigma_y <= sigma_x * 1e-9 {
        return Err(Degenerate::Collinear);
    }
    Ok(AlignedTrajectory {
        points: rotated.iter().map(|(x, y)| (x / sigma_x, y / sigma_y)).collect(),
        sigma_x,
        sigma_y,
        principal_axis: axis,
        eigenvalues: eig.values,
    })
}

/// Projects positions onto an equirectangular frame centered on their mean
/// position and aligns them.
pub fn align_trajectory(points: &[LatLon], home: Option<LatLon>) -> Result<AlignedTrajectory, Degenerate> {
    if points.is_empty() {
        return Err(Degenerate::TooFewPoints);
    }
    let n = points.len() as f64;
    let (lat, lon) = points.iter().fold((0.0, 0.0), |(a, b), p| (a + p.lat, b + p.lon));
    let frame = LocalFrame::new(LatLon::new(lat / n, lon / n));
    let planar: Vec<(f64, f64)> = points.iter().map(|p| frame.project(*p)).collect();
    align_planar(&planar, home.map(|h| frame.project(h)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridConfig {
    pub bins: usize,
    /// Grid covers `[-bound, bound)` on both axes.
    pub bound: f64,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self { bins: 80, bound: 4.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Pooling {
    /// Every point weighs the same.
    #[default]
    PerPoint,
    /// Every trajectory contributes total weight one.
    PerUser,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceFrameDensity {
    pub grid: GridConfig,
    /// Row-major by y then x: `mass[iy * bins + ix]`.
    pub mass: Vec<f64>,
    pub in_range_mass: f64,
    pub out_of_range_mass: f64,
    pub points_total: usize,
    pub points_in_range: usize,
}

impl ReferenceFrameDensity {
    pub fn cell_width(&self) -> f64 {
        2.0 * self.grid.bound / self.grid.bins as f64
    }

    pub fn cell_center(&self, i: usize) -> f64 {
        -self.grid.bound + (i as f64 + 0.5) * self.cell_width()
    }

    pub fn at(&self, ix: usize, iy: usize) -> f64 {
        self.mass[iy * self.grid.bins + ix]
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("bin_x_center,bin_y_center,mass\n");
        for iy in 0..self.grid.bins {
            for ix in 0..self.grid.bins {
                let _ = writeln!(out, "{:.4},{:.4},{:.10}", self.cell_center(ix), self.cell_center(iy), self.at(ix, iy));
            }
        }
        out
    }
}

fn bin_index(v: f64, bound: f64, bins: usize) -> Option<usize> {
    if !(v >= -bound && v < bound) {
        return None;
    }
    let i = ((v + bound) / (2.0 * bound) * bins as f64).floor() as usize;
    Some(i.min(bins - 1))
}

/// Pooled 2-D histogram of normalized positions. Cells are half-open with
/// the lower edge inclusive; mass is normalized by the total weight of all
/// points, and the weight falling outside the grid is reported.
pub fn density_histogram(streams: &[Vec<(f64, f64)>], grid: GridConfig, pooling: Pooling) -> ReferenceFrameDensity {
    let bins = grid.bins;
    let mut weights = vec![0.0f64; bins * bins];
    let (mut total_w, mut in_w) = (0.0f64, 0.0f64);
    let (mut points_total, mut points_in_range) = (0usize, 0usize);
    for stream in streams {
        if stream.is_empty() {
            continue;
        }
        let w = match pooling {
            Pooling::PerPoint => 1.0,
            Pooling::PerUser => 1.0 / stream.len() as f64,
        };
        for &(x, y) in stream {
            points_total += 1;
            total_w += w;
            if let (Some(ix), Some(iy)) = (bin_index(x, grid.bound, bins), bin_index(y, grid.bound, bins)) {
                weights[iy * bins + ix] += w;
                in_w += w;
                points_in_range += 1;
            }
        }
    }
    if points_in_range == 0 {
        log::warn!("density histogram: no points inside the grid");
    }
    let norm = if total_w > 0.0 { 1.0 / total_w } else { 0.0 };
    ReferenceFrameDensity {
        grid,
        mass: weights.iter().map(|w| w * norm).collect(),
        in_range_mass: in_w * norm,
        out_of_range_mass: (total_w - in_w) * norm,
        points_total,
        points_in_range,
    }
}

/// Root-mean-square great-circle distance (km) of visit positions from home.
pub fn gyradius_from_home(visits: &[LatLon], home: LatLon) -> f64 {
    if visits.is_empty() {
        return 0.0;
    }
    let sum_sq: f64 = visits.iter().map(|v| haversine(*v, home).powi(2)).sum();
    (sum_sq / visits.len() as f64).sqrt() / 1000.0
}

/// Distances travelled on one day, with the motif groups the day belongs to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DayDistances {
    pub lbm_nodes: usize,
    pub abm_nodes: usize,
    /// Label string such as `H-W` when the ABM view has two nodes.
    pub abm_two_node_class: Option<String>,
    pub trips_km: Vec<f64>,
    pub gyradius_km: f64,
}

impl DayDistances {
    /// Trips run between the anchors of consecutive visits of the LBM walk;
    /// the gyradius uses one sample per visit.
    pub fn from_network(lbm: &DailyNetwork, abm: &DailyNetwork) -> Self {
        let anchor = |v: usize| lbm.nodes[v].anchor.expect("LBM nodes carry anchors");
        let trips_km = lbm
            .walk
            .windows(2)
            .map(|w| haversine(anchor(w[0]), anchor(w[1])) / 1000.0)
            .collect();
        let visits: Vec<LatLon> = lbm.walk.iter().map(|&v| anchor(v)).collect();
        let abm_two_node_class = (abm.node_count() == 2).then(|| {
            let mut labels: Vec<_> = abm.nodes.iter().map(|n| n.label).collect();
            labels.sort();
            labels.iter().map(|l| l.short()).collect::<Vec<_>>().join("-")
        });
        Self {
            lbm_nodes: lbm.node_count(),
            abm_nodes: abm.node_count(),
            abm_two_node_class,
            trips_km,
            gyradius_km: gyradius_from_home(&visits, anchor(lbm.home)),
        }
    }

    pub fn total_km(&self) -> f64 {
        self.trips_km.iter().sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceStats {
    pub kind: MotifKind,
    /// Node-size group (`"2"`..`"6"`, `"7+"`) or a two-node ABM class.
    pub group: String,
    pub days: usize,
    pub trips: usize,
    /// Mean trip distance, km.
    pub d_hat_km: f64,
    /// Mean total daily distance, km.
    pub total_hat_km: f64,
    /// Mean daily gyradius from home, km.
    pub gyradius_home_km: f64,
}

#[derive(Default)]
struct Acc {
    days: usize,
    trips: usize,
    trip_sum: f64,
    gyr_sum: f64,
}

impl Acc {
    fn add(&mut self, d: &DayDistances) {
        self.days += 1;
        self.trips += d.trips_km.len();
        self.trip_sum += d.total_km();
        self.gyr_sum += d.gyradius_km;
    }

    fn finish(&self, kind: MotifKind, group: String) -> Option<DistanceStats> {
        (self.trips > 0).then(|| DistanceStats {
            kind,
            group,
            days: self.days,
            trips: self.trips,
            d_hat_km: self.trip_sum / self.trips as f64,
            total_hat_km: self.trip_sum / self.days as f64,
            gyradius_home_km: self.gyr_sum / self.days as f64,
        })
    }
}

fn size_group(n: usize, max_nodes: usize) -> String {
    if n > max_nodes {
        format!("{}+", max_nodes + 1)
    } else {
        n.to_string()
    }
}

/// Distance statistics per node-size group (2..=max_nodes and oversize) for
/// both views, then per two-node ABM class. Groups without trips are
/// omitted.
pub fn distance_stats(days: &[DayDistances], max_nodes: usize) -> Vec<DistanceStats> {
    let mut out = Vec::new();
    for kind in [MotifKind::Lbm, MotifKind::Abm] {
        out.extend(by_size(days, kind, max_nodes));
    }
    let mut classes: BTreeMap<&str, Acc> = BTreeMap::new();
    for d in days {
        if let Some(c) = &d.abm_two_node_class {
            classes.entry(c.as_str()).or_default().add(d);
        }
    }
    out.extend(
        classes
            .into_iter()
            .filter_map(|(c, acc)| acc.finish(MotifKind::Abm, c.to_string())),
    );
    out
}

fn by_size(days: &[DayDistances], kind: MotifKind, max_nodes: usize) -> Vec<DistanceStats> {
    let mut groups: BTreeMap<usize, Acc> = BTreeMap::new();
    for d in days {
        let n = match kind {
            MotifKind::Lbm => d.lbm_nodes,
            MotifKind::Abm => d.abm_nodes,
        };
        groups.entry(n.min(max_nodes + 1)).or_default().add(d);
    }
    groups
        .into_iter()
        .filter(|(n, _)| *n >= 2)
        .filter_map(|(n, acc)| acc.finish(kind, size_group(n, max_nodes)))
        .collect()
}

pub fn distance_stats_csv(stats: &[DistanceStats]) -> String {
    let mut out = String::from("kind,group,days,trips,d_hat_km,D_hat_km,gyradius_home_km\n");
    for s in stats {
        let _ = writeln!(
            out,
            "{},{},{},{},{:.4},{:.4},{:.4}",
            s.kind, s.group, s.days, s.trips, s.d_hat_km, s.total_hat_km, s.gyradius_home_km
        );
    }
    out
}

/// Pearson product-moment correlation.
pub fn pearson_r(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() {
        return Err(Error::Undefined(format!("length mismatch {} vs {}", xs.len(), ys.len())));
    }
    if xs.len() < 2 {
        return Err(Error::Undefined("need at least two observations".into()));
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        let (dx, dy) = (x - mx, y - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::Undefined("zero variance".into()));
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorrelationReport {
    pub n: usize,
    pub r: f64,
    /// Two-sided p-value of the t test on r; `None` when n < 3 or |r| = 1.
    pub p_value: Option<f64>,
}

pub fn correlation_report(xs: &[f64], ys: &[f64]) -> Result<CorrelationReport> {
    let r = pearson_r(xs, ys)?;
    let n = xs.len();
    let p_value = if n > 2 && r.abs() < 1.0 {
        let df = (n - 2) as f64;
        let t = r * (df / (1.0 - r * r)).sqrt();
        StudentsT::new(0.0, 1.0, df)
            .ok()
            .map(|dist| 2.0 * (1.0 - dist.cdf(t.abs())))
    } else {
        None
    };
    Ok(CorrelationReport { n, r, p_value })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn closed_form(t: &GyrationTensor) -> (f64, f64) {
        let tr = t.xx + t.yy;
        let det = t.xx * t.yy - t.xy * t.xy;
        let disc = (tr * tr - 4.0 * det).max(0.0).sqrt();
        ((tr + disc) / 2.0, (tr - disc) / 2.0)
    }

    proptest! {
        #[test]
        fn jacobi_matches_closed_form(xx in 0.0f64..10.0, yy in 0.0f64..10.0, f in -1.0f64..1.0) {
            // keep the matrix positive semi-definite
            let xy = f * (xx * yy).sqrt();
            let t = GyrationTensor { xx, xy, yy };
            let e = t.eigen();
            let (l1, l2) = closed_form(&t);
            prop_assert!((e.values[0] - l1).abs() <= 1e-12 * (1.0 + l1.abs()));
            prop_assert!((e.values[1] - l2).abs() <= 1e-12 * (1.0 + l1.abs()));
            prop_assert!(e.values[1] >= -1e-12);
        }

        #[test]
        fn alignment_rigid_motion_invariant(
            pts in prop::collection::vec((-500.0f64..500.0, -200.0f64..200.0), 5..40),
            angle in 0.0f64..std::f64::consts::TAU,
            tx in -1e4f64..1e4,
            ty in -1e4f64..1e4,
        ) {
            let Ok(base) = align_planar(&pts, None) else { return Ok(()); };
            prop_assume!((base.eigenvalues[0] - base.eigenvalues[1]).abs() > 1e-6 * base.eigenvalues[0]);
            let (s, c) = angle.sin_cos();
            let moved: Vec<_> = pts.iter().map(|(x, y)| (c * x - s * y + tx, s * x + c * y + ty)).collect();
            let other = align_planar(&moved, None).unwrap();
            for (a, b) in base.points.iter().zip(&other.points) {
                prop_assert!((a.0 - b.0).abs() < 1e-6 && (a.1 - b.1).abs() < 1e-6);
            }
        }

        #[test]
        fn normalized_unit_variance(pts in prop::collection::vec((-500.0f64..500.0, -200.0f64..200.0), 5..40)) {
            let Ok(al) = align_planar(&pts, None) else { return Ok(()); };
            let n = al.points.len() as f64;
            let vx = al.points.iter().map(|p| p.0 * p.0).sum::<f64>() / n;
            let vy = al.points.iter().map(|p| p.1 * p.1).sum::<f64>() / n;
            prop_assert!((vx - 1.0).abs() < 1e-9 && (vy - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn collinear_is_degenerate() {
        let pts = [(-1.0, 0.0), (0.0, 0.0), (1.0, 0.0)];
        assert_eq!(align_planar(&pts, None), Err(Degenerate::Collinear));
        assert_eq!(align_planar(&pts[..2], None), Err(Degenerate::TooFewPoints));
        assert_eq!(align_planar(&[(1.0, 1.0); 4], None), Err(Degenerate::AllIdentical));
    }

    #[test]
    fn anisotropic_axis_recovered() {
        // var(x) = 4, var(y) = 1 exactly: (+-2, 0) and (0, +-sqrt 2) pairs
        let r2 = 2f64.sqrt();
        let pts = [(2.0, 0.0), (-2.0, 0.0), (0.0, r2), (0.0, -r2), (2.0, 0.0), (-2.0, 0.0)];
        let al = align_planar(&pts, Some((3.0, 0.0))).unwrap();
        assert_abs_diff_eq!(al.principal_axis.1, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(al.principal_axis.0.abs(), 1.0, epsilon = 1e-12);
        // tie between (+2,0) and (-2,0): home lies east so east maps to -x
        assert_abs_diff_eq!(al.principal_axis.0, -1.0, epsilon = 1e-12);
        let n = al.points.len() as f64;
        assert_abs_diff_eq!(al.points.iter().map(|p| p.0 * p.0).sum::<f64>() / n, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(al.points.iter().map(|p| p.1 * p.1).sum::<f64>() / n, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn extreme_point_lands_west() {
        let pts = [(0.0, 0.0), (1.0, 0.1), (2.0, -0.1), (10.0, 0.0)];
        let al = align_planar(&pts, None).unwrap();
        let extreme = al.points[3];
        assert!(extreme.0 < 0.0);
    }

    #[test]
    fn histogram_single_and_symmetric() {
        let grid = GridConfig::default();
        let d = density_histogram(&[vec![(0.0, 0.0); 10]], grid, Pooling::PerPoint);
        assert_eq!(d.at(40, 40), 1.0);
        assert_eq!(d.mass.iter().filter(|m| **m > 0.0).count(), 1);

        let d = density_histogram(&[vec![(-1.0, 0.0), (1.0, 0.0)]], grid, Pooling::PerPoint);
        assert_eq!(d.at(30, 40), 0.5);
        assert_eq!(d.at(50, 40), 0.5);
    }

    #[test]
    fn histogram_out_of_range_and_pooling() {
        let grid = GridConfig { bins: 4, bound: 1.0 };
        let d = density_histogram(&[vec![(0.1, 0.1), (1.0, 0.0), (-1.0, -1.0), (5.0, 5.0)]], grid, Pooling::PerPoint);
        assert_eq!(d.points_in_range, 2);
        assert_eq!(d.in_range_mass, 0.5);
        assert_eq!(d.out_of_range_mass, 0.5);
        assert_eq!(d.at(0, 0), 0.25);

        let streams = vec![vec![(0.1, 0.1); 9], vec![(-0.9, -0.9)]];
        let d = density_histogram(&streams, grid, Pooling::PerUser);
        assert_abs_diff_eq!(d.at(2, 2), 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(d.at(0, 0), 0.5, epsilon = 1e-12);

        let empty = density_histogram(&[vec![(9.0, 9.0)]], grid, Pooling::PerPoint);
        assert!(empty.mass.iter().all(|m| *m == 0.0));
        assert_eq!(empty.out_of_range_mass, 1.0);
    }

    fn std_normal_cdf(x: f64) -> f64 {
        0.5 * (1.0 + statrs::function::erf::erf(x / std::f64::consts::SQRT_2))
    }

    #[test]
    fn gaussian_cells_match_analytic_integrals() {
        let grid = GridConfig { bins: 8, bound: 4.0 };
        let n = 1_000_000usize;
        let mut rng = ChaCha8Rng::seed_from_u64(2014);
        let pts: Vec<(f64, f64)> = (0..n)
            .map(|_| (StandardNormal.sample(&mut rng), StandardNormal.sample(&mut rng)))
            .collect();
        let d = density_histogram(&[pts], grid, Pooling::PerPoint);
        let w = d.cell_width();
        let cell = |i: usize| {
            let lo = -grid.bound + i as f64 * w;
            std_normal_cdf(lo + w) - std_normal_cdf(lo)
        };
        let within = |observed: f64, p: f64| {
            let sigma = (p * (1.0 - p) / n as f64).sqrt();
            (observed - p).abs() <= 3.0 * sigma
        };
        // cells expecting fewer than 100 points are far from normal, so
        // they are compared as one pooled bucket
        let (mut sparse_obs, mut sparse_p) = (0.0, 0.0);
        for iy in 0..grid.bins {
            for ix in 0..grid.bins {
                let p = cell(ix) * cell(iy);
                if p * (n as f64) < 100.0 {
                    sparse_obs += d.at(ix, iy);
                    sparse_p += p;
                } else {
                    assert!(within(d.at(ix, iy), p), "cell ({ix},{iy}): {} vs {p}", d.at(ix, iy));
                }
            }
        }
        assert!(within(sparse_obs, sparse_p), "sparse cells: {sparse_obs} vs {sparse_p}");
        assert_eq!(d.points_total, n);
        assert!((d.in_range_mass + d.out_of_range_mass - 1.0).abs() < 1e-12);
    }

    #[test]
    fn gyradius_examples() {
        let home = LatLon::new(41.0, -87.0);
        assert_eq!(gyradius_from_home(&[home, home], home), 0.0);
        let two_km = home.offset_m(0.0, 2000.0);
        let g = gyradius_from_home(&[home, two_km], home);
        assert_abs_diff_eq!(g, (2.0f64 * 2.0 / 2.0).sqrt(), epsilon = 1e-6);
    }

    fn day(nodes: usize, trips: &[f64]) -> DayDistances {
        DayDistances {
            lbm_nodes: nodes,
            abm_nodes: nodes,
            abm_two_node_class: (nodes == 2).then(|| "H-W".to_string()),
            trips_km: trips.to_vec(),
            gyradius_km: 1.0,
        }
    }

    #[test]
    fn distance_stats_arithmetic() {
        let stats = distance_stats(&[day(2, &[5.0, 5.0])], 6);
        let lbm2 = stats.iter().find(|s| s.kind == MotifKind::Lbm && s.group == "2").unwrap();
        assert_eq!((lbm2.d_hat_km, lbm2.total_hat_km), (5.0, 10.0));
        let hw = stats.iter().find(|s| s.group == "H-W").unwrap();
        assert_eq!(hw.d_hat_km, 5.0);

        let stats = distance_stats(&[day(3, &[3.0, 3.0, 4.0]), day(3, &[7.0, 7.0])], 6);
        let lbm3 = stats.iter().find(|s| s.kind == MotifKind::Lbm && s.group == "3").unwrap();
        assert_eq!(lbm3.total_hat_km, 12.0);
        assert_eq!(lbm3.d_hat_km, 24.0 / 5.0);
    }

    #[test]
    fn distance_stats_groups() {
        let days = [day(1, &[]), day(2, &[1.0, 1.0]), day(9, &[1.0; 10])];
        let stats = distance_stats(&days, 6);
        let groups: Vec<_> = stats.iter().map(|s| format!("{}:{}", s.kind, s.group)).collect();
        assert_eq!(groups, vec!["LBM:2", "LBM:7+", "ABM:2", "ABM:7+", "ABM:H-W"]);
        for s in &stats {
            assert!(s.total_hat_km >= s.d_hat_km);
        }
    }

    #[test]
    fn pearson_examples() {
        assert_eq!(pearson_r(&[1.0, 2.0, 3.0, 4.0], &[3.0, 5.0, 7.0, 9.0]).unwrap(), 1.0);
        assert_eq!(pearson_r(&[1.0, 2.0, 3.0, 4.0], &[-1.0, -2.0, -3.0, -4.0]).unwrap(), -1.0);
        let r = pearson_r(&[1.0, 2.0, 3.0, 4.0], &[2.0, 1.0, 4.0, 3.0]).unwrap();
        assert_abs_diff_eq!(r, 0.6, epsilon = 1e-12);
        assert!(pearson_r(&[1.0, 1.0], &[1.0, 2.0]).is_err());
        assert!(pearson_r(&[1.0], &[1.0]).is_err());
    }

    #[test]
    fn correlation_p_value() {
        let rep = correlation_report(&[1.0, 2.0, 3.0, 4.0], &[2.0, 1.0, 4.0, 3.0]).unwrap();
        assert_eq!(rep.n, 4);
        // t = 0.6 * sqrt(2 / 0.64) = 1.0607, two-sided with 2 df
        let p = rep.p_value.unwrap();
        assert_abs_diff_eq!(p, 0.4, epsilon = 1e-9);
    }
}
