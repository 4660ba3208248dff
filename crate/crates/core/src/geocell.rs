//! Six-digit base-20 geocodes on a 0.05° global grid.
//!
//! A code interleaves latitude and longitude digits at 20°, 1° and 0.05°
//! resolution, following the Open Location Code alphabet and digit order but
//! keeping only the first six significant characters and no `+` separator.
//! The grid has 3600 rows by 7200 columns, 25,920,000 cells in total.
//!
//! Cell membership is half-open: a point on a southern or western edge belongs
//! to that cell, a point on a northern or eastern edge to the next one.
//! Latitude 90 is clamped into the top row and longitude 180 wraps to -180.
//! Coordinates are quantized to 1e-7 degrees before any grid arithmetic, so
//! every geometric predicate here runs on exact integers.

use std::collections::{BTreeSet, HashSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Code alphabet, in ascending digit order.
pub const ALPHABET: &[u8; 20] = b"23456789CFGHJMPQRVWX";
pub const CODE_LEN: usize = 6;
/// Cell side in degrees, both axes.
pub const CELL_DEGREES: f64 = 0.05;
pub const ROWS: u32 = 3600;
pub const COLS: u32 = 7200;
pub const CELL_COUNT: u64 = ROWS as u64 * COLS as u64;
/// Spherical earth radius used for route interpolation.
pub const EARTH_RADIUS_M: f64 = 6_371_000.0;
pub const DEFAULT_ROUTE_STEP_M: f64 = 500.0;
pub const MAX_ROUTE_STEP_M: f64 = 1000.0;

/// Coordinates in 1e-7 degree units.
const E7: f64 = 1e7;
const CELL_E7: i64 = 500_000;
const LAT_OFFSET_E7: i64 = 900_000_000;
const LNG_OFFSET_E7: i64 = 1_800_000_000;
/// Top-level latitude digits in use (180° / 20°).
const LAT_TOP_DIGITS: u8 = 9;
/// Top-level longitude digits in use (360° / 20°).
const LNG_TOP_DIGITS: u8 = 18;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeoError {
    #[error("coordinate out of range: lat={lat}, lng={lng}")]
    InvalidCoordinate { lat: f64, lng: f64 },
    #[error("invalid geocode {0:?}")]
    InvalidGeocode(String),
    #[error("route step must be in (0, {MAX_ROUTE_STEP_M}] meters, got {0}")]
    InvalidStep(f64),
    #[error("a route needs at least two waypoints, got {0}")]
    TooFewWaypoints(usize),
    #[error("route segment {0} joins antipodal points; the great circle is undefined")]
    AntipodalSegment(usize),
    #[error("degenerate polygon: {0}")]
    DegeneratePolygon(&'static str),
    #[error("polygon encloses a pole; polar coverage is not supported")]
    PolarPolygon,
}

/// A position in degrees. Longitude is normalized into [-180, 180).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "(f64, f64)", into = "(f64, f64)")]
pub struct GeoPoint {
    lat: f64,
    lng: f64,
}

impl GeoPoint {
    pub fn new(lat: f64, lng: f64) -> Result<Self, GeoError> {
        if !lat.is_finite() || !lng.is_finite() || !(-90.0..=90.0).contains(&lat) || !(-180.0..=180.0).contains(&lng) {
            return Err(GeoError::InvalidCoordinate { lat, lng });
        }
        let lng = if lng == 180.0 { -180.0 } else { lng };
        Ok(Self { lat, lng })
    }

    pub fn lat(&self) -> f64 {
        self.lat
    }

    pub fn lng(&self) -> f64 {
        self.lng
    }

    /// Great-circle distance in meters on the spherical earth.
    pub fn distance_m(&self, other: &GeoPoint) -> f64 {
        central_angle(self.to_unit(), other.to_unit()) * EARTH_RADIUS_M
    }

    fn to_unit(self) -> [f64; 3] {
        let (lat, lng) = (self.lat.to_radians(), self.lng.to_radians());
        [lat.cos() * lng.cos(), lat.cos() * lng.sin(), lat.sin()]
    }

    fn from_unit(v: [f64; 3]) -> Self {
        let norm = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        let z = (v[2] / norm).clamp(-1.0, 1.0);
        let lat = z.asin().to_degrees();
        let mut lng = v[1].atan2(v[0]).to_degrees();
        if lng >= 180.0 {
            lng -= 360.0;
        }
        Self {
            lat: lat.clamp(-90.0, 90.0),
            lng: lng.clamp(-180.0, 180.0),
        }
    }

    fn lat_e7(&self) -> i64 {
        (self.lat * E7).round() as i64
    }

    fn lng_e7(&self) -> i64 {
        (self.lng * E7).round() as i64
    }
}

impl TryFrom<(f64, f64)> for GeoPoint {
    type Error = GeoError;

    fn try_from((lat, lng): (f64, f64)) -> Result<Self, Self::Error> {
        GeoPoint::new(lat, lng)
    }
}

impl From<GeoPoint> for (f64, f64) {
    fn from(p: GeoPoint) -> Self {
        (p.lat, p.lng)
    }
}

impl fmt::Display for GeoPoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.7},{:.7}", self.lat, self.lng)
    }
}

impl FromStr for GeoPoint {
    type Err = GeoError;

    /// Parses `lat,lng`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || GeoError::InvalidCoordinate {
            lat: f64::NAN,
            lng: f64::NAN,
        };
        let (lat, lng) = s.split_once(',').ok_or_else(bad)?;
        let lat = lat.trim().parse::<f64>().map_err(|_| bad())?;
        let lng = lng.trim().parse::<f64>().map_err(|_| bad())?;
        GeoPoint::new(lat, lng)
    }
}

/// Grid position of a cell: `row` counts 0.05° bands north from -90,
/// `col` counts 0.05° bands east from -180.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CellIndex {
    pub row: u32,
    pub col: u32,
}

impl CellIndex {
    pub fn new(row: u32, col: u32) -> Option<Self> {
        (row < ROWS && col < COLS).then_some(Self { row, col })
    }

    pub fn geocode(self) -> Geocode {
        let lat = [self.row / 400, (self.row / 20) % 20, self.row % 20];
        let lng = [self.col / 400, (self.col / 20) % 20, self.col % 20];
        let mut out = [0u8; CODE_LEN];
        for level in 0..3 {
            out[2 * level] = ALPHABET[lat[level] as usize];
            out[2 * level + 1] = ALPHABET[lng[level] as usize];
        }
        Geocode(out)
    }

    pub fn bounds(self) -> CellBounds {
        CellBounds {
            south: self.row as f64 / 20.0 - 90.0,
            west: self.col as f64 / 20.0 - 180.0,
        }
    }
}

/// A validated six-character geocode.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Geocode([u8; CODE_LEN]);

impl Geocode {
    pub fn from_bytes(bytes: &[u8]) -> Result<Self, GeoError> {
        let invalid = || GeoError::InvalidGeocode(String::from_utf8_lossy(bytes).into_owned());
        let raw: [u8; CODE_LEN] = bytes.try_into().map_err(|_| invalid())?;
        let mut digits = [0u8; CODE_LEN];
        for (d, &b) in digits.iter_mut().zip(raw.iter()) {
            *d = digit_value(b).ok_or_else(invalid)?;
        }
        if digits[0] >= LAT_TOP_DIGITS || digits[1] >= LNG_TOP_DIGITS {
            return Err(invalid());
        }
        Ok(Self(raw))
    }

    pub fn as_bytes(&self) -> &[u8; CODE_LEN] {
        &self.0
    }

    pub fn as_str(&self) -> &str {
        // Alphabet is ASCII, checked at construction.
        std::str::from_utf8(&self.0).expect("geocode is ascii")
    }

    pub fn index(&self) -> CellIndex {
        let d = self.0.map(|b| digit_value(b).expect("validated geocode") as u32);
        CellIndex {
            row: d[0] * 400 + d[2] * 20 + d[4],
            col: d[1] * 400 + d[3] * 20 + d[5],
        }
    }
}

impl fmt::Debug for Geocode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Geocode({})", self.as_str())
    }
}

impl fmt::Display for Geocode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Geocode {
    type Err = GeoError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Geocode::from_bytes(s.as_bytes())
    }
}

impl TryFrom<String> for Geocode {
    type Error = GeoError;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<Geocode> for String {
    fn from(c: Geocode) -> Self {
        c.as_str().to_owned()
    }
}

fn digit_value(b: u8) -> Option<u8> {
    ALPHABET.iter().position(|&a| a == b).map(|i| i as u8)
}

/// South-west corner of a cell; both extents are [`CELL_DEGREES`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellBounds {
    pub south: f64,
    pub west: f64,
}

impl CellBounds {
    pub const LAT_EXTENT: f64 = CELL_DEGREES;
    pub const LNG_EXTENT: f64 = CELL_DEGREES;

    pub fn north(&self) -> f64 {
        self.south + Self::LAT_EXTENT
    }

    pub fn east(&self) -> f64 {
        self.west + Self::LNG_EXTENT
    }

    pub fn center(&self) -> GeoPoint {
        GeoPoint {
            lat: self.south + Self::LAT_EXTENT / 2.0,
            lng: self.west + Self::LNG_EXTENT / 2.0,
        }
    }

    /// Half-open containment, consistent with [`encode`].
    pub fn contains(&self, p: &GeoPoint) -> bool {
        encode(p).index().bounds() == *self
    }
}

fn index_of(p: &GeoPoint) -> CellIndex {
    let row = ((p.lat_e7() + LAT_OFFSET_E7) / CELL_E7).clamp(0, ROWS as i64 - 1) as u32;
    let col = (p.lng_e7() + LNG_OFFSET_E7).div_euclid(CELL_E7).rem_euclid(COLS as i64) as u32;
    CellIndex { row, col }
}

/// The code of the cell containing `p`.
pub fn encode(p: &GeoPoint) -> Geocode {
    index_of(p).geocode()
}

pub fn decode(c: &Geocode) -> CellBounds {
    c.index().bounds()
}

/// Cells sharing an edge or corner with `c`. Longitude wraps; rows past the
/// poles are dropped, so polar rows have five neighbors instead of eight.
pub fn neighbors(c: &Geocode) -> Vec<Geocode> {
    let CellIndex { row, col } = c.index();
    let mut out = Vec::with_capacity(8);
    for dr in -1i64..=1 {
        let r = row as i64 + dr;
        if !(0..ROWS as i64).contains(&r) {
            continue;
        }
        for dc in -1i64..=1 {
            if dr == 0 && dc == 0 {
                continue;
            }
            let cc = (col as i64 + dc).rem_euclid(COLS as i64);
            let code = CellIndex {
                row: r as u32,
                col: cc as u32,
            }
            .geocode();
            if code != *c && !out.contains(&code) {
                out.push(code);
            }
        }
    }
    out
}

fn central_angle(a: [f64; 3], b: [f64; 3]) -> f64 {
    let cross = [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ];
    let sin = (cross[0] * cross[0] + cross[1] * cross[1] + cross[2] * cross[2]).sqrt();
    let cos = a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
    sin.atan2(cos)
}

/// Point at `fraction` of the way along the great circle from `a` to `b`.
pub fn interpolate(a: &GeoPoint, b: &GeoPoint, fraction: f64) -> GeoPoint {
    let (ua, ub) = (a.to_unit(), b.to_unit());
    let omega = central_angle(ua, ub);
    if omega < 1e-12 {
        return *a;
    }
    let sin = omega.sin();
    let wa = ((1.0 - fraction) * omega).sin() / sin;
    let wb = (fraction * omega).sin() / sin;
    GeoPoint::from_unit([
        wa * ua[0] + wb * ub[0],
        wa * ua[1] + wb * ub[1],
        wa * ua[2] + wb * ub[2],
    ])
}

/// Cells visited by a great-circle route sampled every `step_m` meters, in
/// order of first visit.
pub fn cover_route(waypoints: &[GeoPoint], step_m: f64) -> Result<Vec<Geocode>, GeoError> {
    if waypoints.len() < 2 {
        return Err(GeoError::TooFewWaypoints(waypoints.len()));
    }
    if !step_m.is_finite() || step_m <= 0.0 || step_m > MAX_ROUTE_STEP_M {
        return Err(GeoError::InvalidStep(step_m));
    }
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    let mut visit = |p: &GeoPoint| {
        let code = encode(p);
        if seen.insert(code) {
            out.push(code);
        }
    };
    for (i, pair) in waypoints.windows(2).enumerate() {
        let (a, b) = (&pair[0], &pair[1]);
        let angle = central_angle(a.to_unit(), b.to_unit());
        if std::f64::consts::PI - angle < 1e-9 {
            return Err(GeoError::AntipodalSegment(i));
        }
        let samples = ((angle * EARTH_RADIUS_M) / step_m).ceil().max(1.0) as u64;
        visit(a);
        for s in 1..samples {
            visit(&interpolate(a, b, s as f64 / samples as f64));
        }
        visit(b);
    }
    Ok(out)
}

/// How a polygon selects cells in [`cover_area_with`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Membership {
    /// Every cell whose closed bounds meet the closed polygon, including cells
    /// that only touch its boundary.
    #[default]
    Closed,
    /// Only cells sharing positive area with the polygon.
    Interior,
}

/// Cells meeting `polygon` under the closed rule.
pub fn cover_area(polygon: &[GeoPoint]) -> Result<BTreeSet<Geocode>, GeoError> {
    cover_area_with(polygon, Membership::Closed)
}

pub fn cover_area_with(polygon: &[GeoPoint], membership: Membership) -> Result<BTreeSet<Geocode>, GeoError> {
    let ring = Ring::new(polygon)?;
    let (min_x, max_x, min_y, max_y) = ring.bbox();
    let row_lo = (min_y.div_euclid(CELL_E7) - 1).max(0);
    let row_hi = max_y.div_euclid(CELL_E7).min(ROWS as i64 - 1);
    let col_lo = min_x.div_euclid(CELL_E7) - 1;
    let col_hi = max_x.div_euclid(CELL_E7);

    let mut out = BTreeSet::new();
    for row in row_lo..=row_hi {
        let (y0, y1) = (row * CELL_E7, (row + 1) * CELL_E7);
        let band: Vec<usize> = (0..ring.pts.len())
            .filter(|&i| {
                let (a, b) = ring.edge(i);
                a.1.min(b.1) <= y1 && a.1.max(b.1) >= y0
            })
            .collect();
        for col in col_lo..=col_hi {
            let rect = Rect {
                x0: col * CELL_E7,
                x1: (col + 1) * CELL_E7,
                y0,
                y1,
            };
            let hit = match membership {
                Membership::Closed => ring.meets_closed(&rect, &band),
                Membership::Interior => ring.overlap_area(&rect) > 1e-9,
            };
            if hit {
                let cell = CellIndex {
                    row: row as u32,
                    col: col.rem_euclid(COLS as i64) as u32,
                };
                out.insert(cell.geocode());
            }
        }
    }
    Ok(out)
}

type Pt = (i64, i64);

#[derive(Debug, Clone, Copy)]
struct Rect {
    x0: i64,
    x1: i64,
    y0: i64,
    y1: i64,
}

impl Rect {
    fn contains(&self, p: Pt) -> bool {
        (self.x0..=self.x1).contains(&p.0) && (self.y0..=self.y1).contains(&p.1)
    }

    fn corners(&self) -> [Pt; 4] {
        [
            (self.x0, self.y0),
            (self.x1, self.y0),
            (self.x1, self.y1),
            (self.x0, self.y1),
        ]
    }
}

/// Polygon ring in grid-offset 1e-7 degree units with longitudes unwrapped so
/// that consecutive vertices never jump across the antimeridian.
struct Ring {
    pts: Vec<Pt>,
}

impl Ring {
    fn new(polygon: &[GeoPoint]) -> Result<Self, GeoError> {
        let mut verts: Vec<&GeoPoint> = polygon.iter().collect();
        while verts.len() > 1
            && verts.first().map(|p| (p.lat_e7(), p.lng_e7())) == verts.last().map(|p| (p.lat_e7(), p.lng_e7()))
        {
            verts.pop();
        }
        if verts.len() < 3 {
            return Err(GeoError::DegeneratePolygon("fewer than three distinct vertices"));
        }
        let full_turn = 2 * LNG_OFFSET_E7;
        let wrap = |d: i64| {
            let d = d.rem_euclid(full_turn);
            if d > LNG_OFFSET_E7 {
                d - full_turn
            } else {
                d
            }
        };
        let mut pts = Vec::with_capacity(verts.len());
        let mut x = verts[0].lng_e7() + LNG_OFFSET_E7;
        let mut prev_lng = verts[0].lng_e7();
        for (i, p) in verts.iter().enumerate() {
            if i > 0 {
                x += wrap(p.lng_e7() - prev_lng);
                prev_lng = p.lng_e7();
            }
            pts.push((x, p.lat_e7() + LAT_OFFSET_E7));
        }
        let closing = x + wrap(verts[0].lng_e7() - prev_lng);
        if closing != pts[0].0 {
            return Err(GeoError::PolarPolygon);
        }
        let ring = Self { pts };
        if ring.self_intersects() {
            return Err(GeoError::DegeneratePolygon("self-intersecting boundary"));
        }
        if ring.twice_area() == 0 {
            return Err(GeoError::DegeneratePolygon("zero area"));
        }
        Ok(ring)
    }

    fn edge(&self, i: usize) -> (Pt, Pt) {
        (self.pts[i], self.pts[(i + 1) % self.pts.len()])
    }

    fn bbox(&self) -> (i64, i64, i64, i64) {
        let xs = self.pts.iter().map(|p| p.0);
        let ys = self.pts.iter().map(|p| p.1);
        (
            xs.clone().min().unwrap(),
            xs.max().unwrap(),
            ys.clone().min().unwrap(),
            ys.max().unwrap(),
        )
    }

    fn twice_area(&self) -> i128 {
        (0..self.pts.len())
            .map(|i| {
                let (a, b) = self.edge(i);
                a.0 as i128 * b.1 as i128 - b.0 as i128 * a.1 as i128
            })
            .sum()
    }

    fn self_intersects(&self) -> bool {
        let n = self.pts.len();
        for i in 0..n {
            for j in i + 1..n {
                let adjacent = j == i + 1 || (i == 0 && j == n - 1);
                let (a, b) = self.edge(i);
                let (c, d) = self.edge(j);
                if adjacent {
                    // Adjacent edges may only share their common vertex; a
                    // collinear fold-back is an overlap.
                    let (p, shared, q) = if j == i + 1 { (a, b, d) } else { (b, a, c) };
                    if orient(p, shared, q) == 0 && (on_segment(shared, p, q) || on_segment(shared, q, p)) {
                        return true;
                    }
                } else if segments_meet(a, b, c, d) {
                    return true;
                }
            }
        }
        false
    }

    /// Closed point-in-polygon: boundary points count as inside.
    fn contains_closed(&self, p: Pt) -> bool {
        let mut inside = false;
        for i in 0..self.pts.len() {
            let (a, b) = self.edge(i);
            if orient(a, b, p) == 0 && on_segment(a, b, p) {
                return true;
            }
            if (a.1 > p.1) != (b.1 > p.1) {
                // Crossing test with exact rational comparison.
                let lhs = (p.0 - a.0) as i128 * (b.1 - a.1) as i128;
                let rhs = (b.0 - a.0) as i128 * (p.1 - a.1) as i128;
                let crosses = if b.1 > a.1 { lhs < rhs } else { lhs > rhs };
                if crosses {
                    inside = !inside;
                }
            }
        }
        inside
    }

    fn meets_closed(&self, rect: &Rect, band_edges: &[usize]) -> bool {
        if band_edges.iter().any(|&i| rect.contains(self.pts[i]))
            || band_edges
                .iter()
                .any(|&i| rect.contains(self.pts[(i + 1) % self.pts.len()]))
        {
            return true;
        }
        let corners = rect.corners();
        if corners.iter().any(|&c| self.contains_closed(c)) {
            return true;
        }
        band_edges.iter().any(|&i| {
            let (a, b) = self.edge(i);
            (0..4).any(|k| segments_meet(a, b, corners[k], corners[(k + 1) % 4]))
        })
    }

    /// Area of polygon ∩ rect, in cell units, by clipping the ring against
    /// the four rectangle half-planes.
    fn overlap_area(&self, rect: &Rect) -> f64 {
        let scale = CELL_E7 as f64;
        let mut poly: Vec<(f64, f64)> = self
            .pts
            .iter()
            .map(|&(x, y)| (x as f64 / scale, y as f64 / scale))
            .collect();
        let (x0, x1, y0, y1) = (
            rect.x0 as f64 / scale,
            rect.x1 as f64 / scale,
            rect.y0 as f64 / scale,
            rect.y1 as f64 / scale,
        );
        let planes: [(usize, f64, bool); 4] = [(0, x0, true), (0, x1, false), (1, y0, true), (1, y1, false)];
        for (axis, bound, keep_above) in planes {
            if poly.is_empty() {
                return 0.0;
            }
            let inside = |p: &(f64, f64)| {
                let v = if axis == 0 { p.0 } else { p.1 };
                if keep_above {
                    v >= bound
                } else {
                    v <= bound
                }
            };
            let mut next = Vec::with_capacity(poly.len() + 4);
            for i in 0..poly.len() {
                let cur = poly[i];
                let prev = poly[(i + poly.len() - 1) % poly.len()];
                let (ci, pi) = (inside(&cur), inside(&prev));
                if ci != pi {
                    let (pv, cv) = if axis == 0 { (prev.0, cur.0) } else { (prev.1, cur.1) };
                    let t = (bound - pv) / (cv - pv);
                    next.push((prev.0 + t * (cur.0 - prev.0), prev.1 + t * (cur.1 - prev.1)));
                }
                if ci {
                    next.push(cur);
                }
            }
            poly = next;
        }
        let n = poly.len();
        (0..n)
            .map(|i| {
                let (a, b) = (poly[i], poly[(i + 1) % n]);
                a.0 * b.1 - b.0 * a.1
            })
            .sum::<f64>()
            .abs()
            / 2.0
    }
}

fn orient(a: Pt, b: Pt, c: Pt) -> i32 {
    let v = (b.0 - a.0) as i128 * (c.1 - a.1) as i128 - (b.1 - a.1) as i128 * (c.0 - a.0) as i128;
    v.signum() as i32
}

/// Assumes `a`, `b`, `p` are collinear.
fn on_segment(a: Pt, b: Pt, p: Pt) -> bool {
    p.0 >= a.0.min(b.0) && p.0 <= a.0.max(b.0) && p.1 >= a.1.min(b.1) && p.1 <= a.1.max(b.1)
}

/// Closed segment intersection.
fn segments_meet(a: Pt, b: Pt, c: Pt, d: Pt) -> bool {
    let (o1, o2, o3, o4) = (orient(a, b, c), orient(a, b, d), orient(c, d, a), orient(c, d, b));
    if o1 != o2 && o3 != o4 && o1 * o2 <= 0 && o3 * o4 <= 0 {
        return true;
    }
    (o1 == 0 && on_segment(a, b, c))
        || (o2 == 0 && on_segment(a, b, d))
        || (o3 == 0 && on_segment(c, d, a))
        || (o4 == 0 && on_segment(c, d, b))
}

/// Every valid geocode exactly once, in lexicographic order.
pub fn enumerate_all() -> AllCells {
    AllCells { next: 0 }
}

#[derive(Debug, Clone)]
pub struct AllCells {
    next: u64,
}

impl AllCells {
    fn code_at(i: u64) -> Geocode {
        // Mixed radix, most significant first: lat1 (9), lng1 (18), then
        // four base-20 digits.
        let mut rest = i;
        let mut digits = [0u8; CODE_LEN];
        for pos in (2..CODE_LEN).rev() {
            digits[pos] = (rest % 20) as u8;
            rest /= 20;
        }
        digits[1] = (rest % LNG_TOP_DIGITS as u64) as u8;
        digits[0] = (rest / LNG_TOP_DIGITS as u64) as u8;
        Geocode(digits.map(|d| ALPHABET[d as usize]))
    }
}

impl Iterator for AllCells {
    type Item = Geocode;

    fn next(&mut self) -> Option<Geocode> {
        if self.next >= CELL_COUNT {
            return None;
        }
        let code = Self::code_at(self.next);
        self.next += 1;
        Some(code)
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let left = (CELL_COUNT - self.next) as usize;
        (left, Some(left))
    }

    fn nth(&mut self, n: usize) -> Option<Geocode> {
        self.next = self.next.saturating_add(n as u64).min(CELL_COUNT);
        self.next()
    }
}

impl ExactSizeIterator for AllCells {}
