//! Land-use parcels, the activity-code scheme, and nearest-parcel lookup
//! backed by an R-tree over parcel bounding boxes.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{BufRead, Read};

use rstar::primitives::{GeomWithData, Rectangle};
use rstar::{RTree, AABB};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::geometry::{LatLon, LocalFrame, Polygon};

/// Default search radius for the nearest-parcel join.
pub const DEFAULT_RADIUS_M: f64 = 250.0;

/// Activity code 1..=12.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub struct ActivityCode(u8);

impl ActivityCode {
    pub const RESIDENTIAL: Self = Self(1);
    pub const HOTEL: Self = Self(2);
    pub const MIXED_USE: Self = Self(3);
    pub const K12_SCHOOL: Self = Self(4);
    pub const COLLEGE: Self = Self(5);
    pub const OFFICE: Self = Self(6);
    pub const SERVICES: Self = Self(7);
    pub const CIVIC: Self = Self(8);
    pub const SHOPPING: Self = Self(9);
    pub const RECREATION: Self = Self(10);
    pub const TRANSPORTATION: Self = Self(11);
    pub const OTHERS: Self = Self(12);

    pub fn new(code: u8) -> Option<Self> {
        (1..=12).contains(&code).then_some(Self(code))
    }

    pub fn get(self) -> u8 {
        self.0
    }

    pub fn all() -> impl Iterator<Item = ActivityCode> {
        (1..=12).map(ActivityCode)
    }

    pub fn category_name(self) -> &'static str {
        match self.0 {
            1 => "Residential",
            2 => "Hotel/Resort",
            3 => "Mixed-Use",
            4 => "K-12 Schools",
            5 => "University/College",
            6 => "Office/Workplace",
            7 => "Services",
            8 => "Civic/Religious",
            9 => "Shopping/Retail",
            10 => "Recreation/Entertainment",
            11 => "Transportation",
            _ => "Others",
        }
    }
}

impl TryFrom<u8> for ActivityCode {
    type Error = String;
    fn try_from(v: u8) -> std::result::Result<Self, String> {
        ActivityCode::new(v).ok_or_else(|| format!("activity code {v} outside 1..=12"))
    }
}

impl From<ActivityCode> for u8 {
    fn from(c: ActivityCode) -> u8 {
        c.0
    }
}

impl fmt::Display for ActivityCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Maps land-use category names (case-insensitive) to activity codes.
/// Unmapped categories fall back to code 12.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ActivityScheme {
    map: BTreeMap<String, ActivityCode>,
}

fn normalize_category(s: &str) -> String {
    s.trim().to_lowercase()
}

impl Default for ActivityScheme {
    fn default() -> Self {
        let entries: &[(&str, u8)] = &[
            ("residential", 1),
            ("hotel/resort", 2),
            ("hotel", 2),
            ("resort", 2),
            ("mixed-use", 3),
            ("mixed use", 3),
            ("urban mix", 3),
            ("k-12 schools", 4),
            ("k-12 school", 4),
            ("school", 4),
            ("university/college", 5),
            ("university", 5),
            ("college", 5),
            ("office/workplace", 6),
            ("office", 6),
            ("workplace", 6),
            ("services", 7),
            ("service", 7),
            ("civic/religious", 8),
            ("civic", 8),
            ("religious", 8),
            ("shopping/retail", 9),
            ("shopping", 9),
            ("retail", 9),
            ("recreation/entertainment", 10),
            ("recreation", 10),
            ("entertainment", 10),
            ("transportation", 11),
            ("others", 12),
            ("other", 12),
        ];
        Self {
            map: entries
                .iter()
                .map(|(k, v)| (k.to_string(), ActivityCode(*v)))
                .collect(),
        }
    }
}

impl ActivityScheme {
    /// Reads a two-column `category<TAB or comma>code` table. `#` starts a
    /// comment line. Every code 1..=11 must be reachable; 12 is the fallback.
    pub fn from_reader<R: BufRead>(reader: R) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (lineno, line) in reader.lines().enumerate() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let split = line.rfind(['\t', ',']).ok_or_else(|| {
                Error::Scheme(format!("line {}: expected `category,code`", lineno + 1))
            })?;
            let (category, code) = (&line[..split], line[split + 1..].trim());
            let code = code
                .parse::<u8>()
                .ok()
                .and_then(ActivityCode::new)
                .ok_or_else(|| Error::Scheme(format!("line {}: bad code {code:?}", lineno + 1)))?;
            map.insert(normalize_category(category), code);
        }
        let scheme = Self { map };
        scheme.check_surjective()?;
        Ok(scheme)
    }

    fn check_surjective(&self) -> Result<()> {
        let missing: Vec<u8> = (1..=11u8)
            .filter(|c| !self.map.values().any(|v| v.0 == *c))
            .collect();
        if missing.is_empty() {
            Ok(())
        } else {
            Err(Error::Scheme(format!("no category maps to codes {missing:?}")))
        }
    }

    pub fn code_for(&self, category: &str) -> ActivityCode {
        self.map
            .get(&normalize_category(category))
            .copied()
            .unwrap_or(ActivityCode::OTHERS)
    }

    pub fn entries(&self) -> impl Iterator<Item = (&str, ActivityCode)> {
        self.map.iter().map(|(k, v)| (k.as_str(), *v))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ParcelId(pub u32);

impl fmt::Display for ParcelId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone)]
pub struct Parcel {
    pub id: ParcelId,
    pub polygon: Polygon,
    pub category: String,
    pub code: ActivityCode,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParcelMatch {
    pub parcel_id: ParcelId,
    pub code: ActivityCode,
    pub distance_m: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LoadReport {
    pub features: usize,
    pub loaded: usize,
    pub invalid_geometry: usize,
    pub missing_category: usize,
    /// Parcel count per activity code 1..=12 (index 0 is code 1).
    pub per_code: [usize; 12],
}

impl LoadReport {
    pub fn percentage(&self, code: ActivityCode) -> f64 {
        if self.loaded == 0 {
            0.0
        } else {
            100.0 * self.per_code[code.0 as usize - 1] as f64 / self.loaded as f64
        }
    }
}

type Envelope = GeomWithData<Rectangle<[f64; 2]>, usize>;

/// Immutable nearest-parcel index. Queries return exactly what a linear scan
/// over all parcels returns; the tree only prunes candidates.
pub struct SpatialIndex {
    parcels: Vec<Parcel>,
    tree: RTree<Envelope>,
}

impl SpatialIndex {
    /// Builds the index. Parcel ids must be unique.
    pub fn new(parcels: Vec<Parcel>) -> Self {
        let envelopes = parcels
            .iter()
            .enumerate()
            .map(|(i, p)| {
                let b = p.polygon.bbox();
                GeomWithData::new(Rectangle::from_corners([b.min_lon, b.min_lat], [b.max_lon, b.max_lat]), i)
            })
            .collect();
        Self {
            parcels,
            tree: RTree::bulk_load(envelopes),
        }
    }

    pub fn len(&self) -> usize {
        self.parcels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parcels.is_empty()
    }

    pub fn parcels(&self) -> &[Parcel] {
        &self.parcels
    }

    pub fn get(&self, id: ParcelId) -> Option<&Parcel> {
        // ids are assigned sequentially from 1 at load; fall back to a scan otherwise
        match self.parcels.get((id.0 as usize).wrapping_sub(1)) {
            Some(p) if p.id == id => Some(p),
            _ => self.parcels.iter().find(|p| p.id == id),
        }
    }

    /// Nearest parcel within `radius_m` of `p`: distance 0 when `p` is inside
    /// a parcel, ties broken by the smaller parcel id.
    pub fn nearest(&self, p: LatLon, radius_m: f64) -> Option<ParcelMatch> {
        let frame = LocalFrame::new(p);
        let (dlon, dlat) = frame.degree_span(radius_m);
        // slack so the planar-distance cut is never tighter than the box
        let (dlon, dlat) = (dlon * (1.0 + 1e-9) + 1e-12, dlat * (1.0 + 1e-9) + 1e-12);
        let query = AABB::from_corners([p.lon - dlon, p.lat - dlat], [p.lon + dlon, p.lat + dlat]);
        best_match(
            self.tree
                .locate_in_envelope_intersecting(&query)
                .map(|e| &self.parcels[e.data]),
            p,
            radius_m,
        )
    }

    /// Same contract as [`SpatialIndex::nearest`], by exhaustive scan.
    pub fn nearest_scan(&self, p: LatLon, radius_m: f64) -> Option<ParcelMatch> {
        best_match(self.parcels.iter(), p, radius_m)
    }
}

fn best_match<'a>(candidates: impl Iterator<Item = &'a Parcel>, p: LatLon, radius_m: f64) -> Option<ParcelMatch> {
    let mut best: Option<ParcelMatch> = None;
    for parcel in candidates {
        let d = parcel.polygon.distance_m(p);
        if d > radius_m {
            continue;
        }
        let better = match &best {
            None => true,
            Some(b) => d < b.distance_m || (d == b.distance_m && parcel.id < b.parcel_id),
        };
        if better {
            best = Some(ParcelMatch {
                parcel_id: parcel.id,
                code: parcel.code,
                distance_m: d,
            });
        }
    }
    best
}

fn parse_ring(v: &Value) -> Option<Vec<LatLon>> {
    v.as_array()?
        .iter()
        .map(|pt| {
            let a = pt.as_array()?;
            Some(LatLon::new(a.get(1)?.as_f64()?, a.first()?.as_f64()?))
        })
        .collect()
}

/// Rings of a GeoJSON `Polygon` coordinates array.
fn parse_polygon_coords(v: &Value) -> Option<(Vec<LatLon>, Vec<Vec<LatLon>>)> {
    let rings = v.as_array()?;
    let mut iter = rings.iter();
    let exterior = parse_ring(iter.next()?)?;
    let holes = iter.map(parse_ring).collect::<Option<Vec<_>>>()?;
    Some((exterior, holes))
}

/// Polygons of a GeoJSON geometry object (Polygon or MultiPolygon). `None`
/// for malformed or non-areal geometries.
fn geometry_polygons(geom: &Value) -> Option<Vec<(Vec<LatLon>, Vec<Vec<LatLon>>)>> {
    let coords = geom.get("coordinates")?;
    match geom.get("type")?.as_str()? {
        "Polygon" => Some(vec![parse_polygon_coords(coords)?]),
        "MultiPolygon" => coords.as_array()?.iter().map(parse_polygon_coords).collect(),
        _ => None,
    }
}

fn features(doc: &Value) -> Result<Vec<&Value>> {
    match doc.get("type").and_then(Value::as_str) {
        Some("FeatureCollection") => Ok(doc
            .get("features")
            .and_then(Value::as_array)
            .ok_or_else(|| Error::GeoJson("FeatureCollection without features".into()))?
            .iter()
            .collect()),
        Some("Feature") => Ok(vec![doc]),
        Some("Polygon") | Some("MultiPolygon") => Ok(vec![doc]),
        other => Err(Error::GeoJson(format!("unsupported top-level type {other:?}"))),
    }
}

/// Loads parcels from a GeoJSON feature file. Each valid polygon becomes a
/// parcel with a freshly assigned sequential id (1, 2, ...) in file order;
/// invalid geometries and features lacking `category_attr` are skipped and
/// counted. Fails when no parcel is valid.
pub fn load_parcels<R: Read>(reader: R, scheme: &ActivityScheme, category_attr: &str) -> Result<(SpatialIndex, LoadReport)> {
    let doc: Value = serde_json::from_reader(reader).map_err(|e| Error::GeoJson(e.to_string()))?;
    let mut report = LoadReport::default();
    let mut parcels = Vec::new();
    for feature in features(&doc)? {
        report.features += 1;
        let category = feature
            .get("properties")
            .and_then(|p| p.get(category_attr))
            .and_then(|c| match c {
                Value::String(s) => Some(s.clone()),
                Value::Number(n) => Some(n.to_string()),
                _ => None,
            });
        let Some(category) = category else {
            report.missing_category += 1;
            continue;
        };
        let geometry = feature.get("geometry").unwrap_or(feature);
        let Some(polys) = geometry_polygons(geometry) else {
            report.invalid_geometry += 1;
            continue;
        };
        let code = scheme.code_for(&category);
        for (exterior, holes) in polys {
            match Polygon::new(exterior, holes) {
                Ok(polygon) => {
                    report.loaded += 1;
                    report.per_code[code.0 as usize - 1] += 1;
                    parcels.push(Parcel {
                        id: ParcelId(parcels.len() as u32 + 1),
                        polygon,
                        category: category.clone(),
                        code,
                    });
                }
                Err(_) => report.invalid_geometry += 1,
            }
        }
    }
    if parcels.is_empty() {
        return Err(Error::NoParcels {
            invalid: report.invalid_geometry + report.missing_category,
        });
    }
    Ok((SpatialIndex::new(parcels), report))
}

/// Reads the first valid polygon of a GeoJSON document (used for study-area
/// boundaries).
pub fn load_boundary<R: Read>(reader: R) -> Result<Polygon> {
    let doc: Value = serde_json::from_reader(reader).map_err(|e| Error::GeoJson(e.to_string()))?;
    for feature in features(&doc)? {
        let geometry = feature.get("geometry").unwrap_or(feature);
        for (exterior, holes) in geometry_polygons(geometry).unwrap_or_default() {
            if let Ok(p) = Polygon::new(exterior, holes) {
                return Ok(p);
            }
        }
    }
    Err(Error::GeoJson("no valid polygon in boundary file".into()))
}

/// Areal unit with a population count, used to compare inferred home
/// counts against a reference population.
#[derive(Debug, Clone, PartialEq)]
pub struct Zone {
    pub name: String,
    pub polygons: Vec<Polygon>,
    pub population: f64,
}

impl Zone {
    pub fn contains(&self, p: LatLon) -> bool {
        self.polygons.iter().any(|poly| poly.contains(p))
    }
}

/// Loads zones whose `population_attr` property is numeric; features with
/// no valid polygon or no population are skipped.
pub fn load_zones<R: Read>(reader: R, population_attr: &str) -> Result<Vec<Zone>> {
    let doc: Value = serde_json::from_reader(reader).map_err(|e| Error::GeoJson(e.to_string()))?;
    let mut zones = Vec::new();
    for (i, feature) in features(&doc)?.into_iter().enumerate() {
        let props = feature.get("properties");
        let population = props.and_then(|p| p.get(population_attr)).and_then(|v| match v {
            Value::Number(n) => n.as_f64(),
            Value::String(s) => s.trim().parse().ok(),
            _ => None,
        });
        let Some(population) = population else {
            continue;
        };
        let name = props
            .and_then(|p| p.get("name"))
            .and_then(Value::as_str)
            .map_or_else(|| format!("zone-{}", i + 1), str::to_string);
        let geometry = feature.get("geometry").unwrap_or(feature);
        let polygons: Vec<Polygon> = geometry_polygons(geometry)
            .unwrap_or_default()
            .into_iter()
            .filter_map(|(ext, holes)| Polygon::new(ext, holes).ok())
            .collect();
        if !polygons.is_empty() {
            zones.push(Zone {
                name,
                polygons,
                population,
            });
        }
    }
    if zones.is_empty() {
        return Err(Error::GeoJson(format!("no zone carries a numeric {population_attr:?} property")));
    }
    Ok(zones)
}

/// Serializes polygons with a category property as a GeoJSON
/// FeatureCollection.
pub fn to_geojson<'a>(items: impl Iterator<Item = (&'a Polygon, &'a str)>, category_attr: &str) -> Value {
    let features: Vec<Value> = items
        .map(|(poly, category)| {
            json!({
                "type": "Feature",
                "properties": { category_attr: category },
                "geometry": { "type": "Polygon", "coordinates": poly.to_geojson_rings() },
            })
        })
        .collect();
    json!({ "type": "FeatureCollection", "features": features })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::METERS_PER_DEGREE;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rect(lat0: f64, lon0: f64, lat1: f64, lon1: f64) -> Polygon {
        Polygon::rectangle(LatLon::new(lat0, lon0), LatLon::new(lat1, lon1))
    }

    fn parcel(id: u32, poly: Polygon, code: ActivityCode) -> Parcel {
        Parcel {
            id: ParcelId(id),
            polygon: poly,
            category: code.category_name().into(),
            code,
        }
    }

    #[test]
    fn loads_categories_into_codes() {
        let polys = [
            rect(0.0, 0.0, 0.001, 0.001),
            rect(0.0, 0.002, 0.001, 0.003),
            rect(0.0, 0.004, 0.001, 0.005),
        ];
        let cats = ["Residential", "Office/Workplace", "Quarry"];
        let doc = to_geojson(polys.iter().zip(cats.iter().copied()), "category");
        let (idx, report) = load_parcels(doc.to_string().as_bytes(), &ActivityScheme::default(), "category").unwrap();
        let codes: Vec<u8> = idx.parcels().iter().map(|p| p.code.get()).collect();
        assert_eq!(codes, vec![1, 6, 12]);
        assert_eq!(report.loaded, 3);
        assert_eq!(report.per_code[0], 1);
        assert!((report.percentage(ActivityCode::OFFICE) - 100.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn urban_mix_is_mixed_use() {
        assert_eq!(ActivityScheme::default().code_for("Urban Mix"), ActivityCode::MIXED_USE);
    }

    #[test]
    fn self_intersecting_feature_skipped() {
        let doc = json!({
            "type": "FeatureCollection",
            "features": [
                {"type": "Feature", "properties": {"category": "Residential"},
                 "geometry": {"type": "Polygon", "coordinates": [[[0,0],[1,1],[0,1],[1,0],[0,0]]]}},
                {"type": "Feature", "properties": {"category": "Residential"},
                 "geometry": {"type": "Polygon", "coordinates": [[[0,0],[1,0],[1,1],[0,1],[0,0]]]}},
                {"type": "Feature", "properties": {},
                 "geometry": {"type": "Polygon", "coordinates": [[[0,0],[1,0],[1,1],[0,1],[0,0]]]}}
            ]
        });
        let (idx, report) = load_parcels(doc.to_string().as_bytes(), &ActivityScheme::default(), "category").unwrap();
        assert_eq!(idx.len(), 1);
        assert_eq!(idx.parcels()[0].id, ParcelId(1));
        assert_eq!(report.invalid_geometry, 1);
        assert_eq!(report.missing_category, 1);
    }

    #[test]
    fn empty_collection_is_fatal() {
        let doc = json!({"type": "FeatureCollection", "features": []});
        let err = load_parcels(doc.to_string().as_bytes(), &ActivityScheme::default(), "category");
        assert!(matches!(err, Err(Error::NoParcels { .. })));
        assert!(load_parcels("".as_bytes(), &ActivityScheme::default(), "category").is_err());
    }

    #[test]
    fn scheme_file_parsing() {
        let text = "# category,code\nRes,1\nHotel,2\nMix,3\nK12,4\nUni,5\nOffice,6\nSvc,7\nChurch,8\nShop,9\nPark,10\nRail\t11\n";
        let scheme = ActivityScheme::from_reader(text.as_bytes()).unwrap();
        assert_eq!(scheme.code_for("rail"), ActivityCode::TRANSPORTATION);
        assert_eq!(scheme.code_for("unknown"), ActivityCode::OTHERS);
        assert!(ActivityScheme::from_reader("Res,1\n".as_bytes()).is_err());
        assert!(ActivityScheme::from_reader("Res,13\n".as_bytes()).is_err());
    }

    #[test]
    fn containment_gives_zero_distance() {
        let idx = SpatialIndex::new(vec![
            parcel(7, rect(0.0, 0.0, 0.001, 0.001), ActivityCode::OFFICE),
            parcel(8, rect(0.0, 0.0011, 0.001, 0.002), ActivityCode::RESIDENTIAL),
        ]);
        let m = idx.nearest(LatLon::new(0.0005, 0.0005), DEFAULT_RADIUS_M).unwrap();
        assert_eq!((m.parcel_id, m.code, m.distance_m), (ParcelId(7), ActivityCode::OFFICE, 0.0));
    }

    #[test]
    fn beyond_radius_is_none() {
        let idx = SpatialIndex::new(vec![parcel(1, rect(0.0, 0.0, 0.001, 0.001), ActivityCode::OFFICE)]);
        // 300 m east of the eastern edge
        let p = LatLon::new(0.0005, 0.001 + 300.0 / METERS_PER_DEGREE);
        assert!(idx.nearest(p, DEFAULT_RADIUS_M).is_none());
        let hit = idx.nearest(p, 400.0).unwrap();
        assert!((hit.distance_m - 300.0).abs() < 1e-6);
    }

    #[test]
    fn equal_distance_tie_goes_to_smaller_id() {
        let off = 100.0 / METERS_PER_DEGREE;
        // parcel 9 west, parcel 2 east, both exactly 100 m from the origin
        let idx = SpatialIndex::new(vec![
            parcel(9, rect(-0.001, -off - 0.001, 0.001, -off), ActivityCode::SHOPPING),
            parcel(2, rect(-0.001, off, 0.001, off + 0.001), ActivityCode::OFFICE),
        ]);
        let m = idx.nearest(LatLon::new(0.0, 0.0), DEFAULT_RADIUS_M).unwrap();
        assert_eq!(m.parcel_id, ParcelId(2));
        assert!((m.distance_m - 100.0).abs() < 1e-6);
    }

    #[test]
    fn index_matches_scan_and_radius_monotone() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let parcels: Vec<Parcel> = (0..300)
            .map(|i| {
                let lat = 41.8 + rng.gen::<f64>() * 0.05;
                let lon = -87.7 + rng.gen::<f64>() * 0.05;
                let w = 0.0002 + rng.gen::<f64>() * 0.001;
                parcel(i + 1, rect(lat, lon, lat + w, lon + w), ActivityCode::new(rng.gen_range(1..=12)).unwrap())
            })
            .collect();
        let idx = SpatialIndex::new(parcels);
        for _ in 0..500 {
            let p = LatLon::new(41.79 + rng.gen::<f64>() * 0.07, -87.71 + rng.gen::<f64>() * 0.07);
            let a = idx.nearest(p, 250.0);
            let b = idx.nearest_scan(p, 250.0);
            assert_eq!(a, b);
            let small = idx.nearest(p, 60.0);
            if let Some(s) = small {
                assert_eq!(Some(s), a);
            }
        }
    }
}
