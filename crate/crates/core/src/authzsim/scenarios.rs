//! Built-in scenarios, with keystores issued from a master key.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use crate::geocell::{cover_route, decode, encode, neighbors, GeoError, GeoPoint, Geocode, DEFAULT_ROUTE_STEP_M};
use crate::kdf::{KeyDeriver, TimeInterval, MAX_EPOCH_DAYS};
use crate::keystore::{KeyRecord, KeyStore};

use super::scenario::{AssetSpec, FollowSpec, Role, RouteSpec, ScenarioSpec};
use super::AcceptPolicy;

pub const SUBMARINE_ROUTE_M: f64 = 44_160_000.0;
/// 46 km/h.
pub const SUBMARINE_SPEED_MPS: f64 = 46_000.0 / 3600.0;
pub const MISSION_DAYS: u32 = 40;
pub const ESCORT_BEHIND_M: f64 = 500.0;

/// Offset in degrees from a cell centre that lands well inside a neighbour.
const NEIGHBOR_OFFSET_DEG: f64 = 0.03;
const DIRECTIONS: [(f64, f64); 8] = [
    (1.0, -1.0),
    (1.0, 0.0),
    (1.0, 1.0),
    (0.0, -1.0),
    (0.0, 1.0),
    (-1.0, -1.0),
    (-1.0, 0.0),
    (-1.0, 1.0),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Builtin {
    Stationary,
    Submarine,
    Adversary,
    Rekey,
}

impl Builtin {
    pub const ALL: [Builtin; 4] = [
        Builtin::Stationary,
        Builtin::Submarine,
        Builtin::Adversary,
        Builtin::Rekey,
    ];

    /// Builds the scenario around `cell` (ignored by the submarine route).
    pub fn build(self, deriver: &KeyDeriver, cell: Geocode, start_day: u32) -> Result<ScenarioSpec, GeoError> {
        Ok(match self {
            Builtin::Stationary => stationary(deriver, cell, start_day),
            Builtin::Submarine => submarine(deriver, start_day)?.0,
            Builtin::Adversary => adversary(deriver, cell, start_day, 1000),
            Builtin::Rekey => rekey(deriver, cell, start_day),
        })
    }
}

impl fmt::Display for Builtin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Builtin::Stationary => "stationary",
            Builtin::Submarine => "submarine",
            Builtin::Adversary => "adversary",
            Builtin::Rekey => "rekey",
        })
    }
}

impl FromStr for Builtin {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Builtin::ALL
            .into_iter()
            .find(|b| b.to_string() == s)
            .ok_or_else(|| format!("unknown scenario {s:?}"))
    }
}

pub fn issue_store(
    deriver: &KeyDeriver,
    cells: impl IntoIterator<Item = Geocode>,
    interval: TimeInterval,
) -> Arc<KeyStore> {
    let records: Vec<KeyRecord> = cells
        .into_iter()
        .map(|c| KeyRecord::from(&deriver.derive(&c, &interval)))
        .collect();
    Arc::new(KeyStore::from_records(&records))
}

fn point(lat: f64, lng: f64) -> GeoPoint {
    GeoPoint::new(lat, lng).expect("builtin positions are valid")
}

fn offset(center: GeoPoint, (dlat, dlng): (f64, f64), by: f64) -> GeoPoint {
    point(center.lat() + dlat * by, center.lng() + dlng * by)
}

fn epoch(start_day: u32, days: u32) -> TimeInterval {
    TimeInterval::new(start_day, start_day + days).expect("builtin epochs are valid")
}

/// A buoy holding keys for its cell and the eight around it, visited by one
/// vehicle in each neighbouring cell and one keyless stranger in its own.
pub fn stationary(deriver: &KeyDeriver, cell: Geocode, start_day: u32) -> ScenarioSpec {
    let t = epoch(start_day, MAX_EPOCH_DAYS);
    let center = decode(&cell).center();
    let mut station_cells = neighbors(&cell);
    station_cells.push(cell);
    let mut spec = ScenarioSpec::new(11, start_day, 3600.0, 60.0);
    spec.assets.push(
        AssetSpec::fixed("buoy", Role::Verifier, center, issue_store(deriver, station_cells, t))
            .with_accept(AcceptPolicy::OwnAndNeighbors),
    );
    for d in DIRECTIONS {
        let p = offset(center, d, NEIGHBOR_OFFSET_DEG);
        let c = encode(&p);
        spec.assets.push(AssetSpec::fixed(
            format!("visitor-{c}"),
            Role::Prover,
            p,
            issue_store(deriver, [c], t),
        ));
    }
    spec.assets.push(AssetSpec::fixed(
        "stranger",
        Role::Prover,
        offset(center, (1.0, 0.0), 0.01),
        Arc::new(KeyStore::in_memory()),
    ));
    spec
}

/// Lawnmower pattern near the equator: east-west legs along cell-centre
/// latitudes with a waypoint every half degree, stepping 0.1° north between
/// legs, cut to exactly `length_m`.
pub fn lawnmower_route(length_m: f64) -> Vec<GeoPoint> {
    const WEST: f64 = 0.025;
    const EAST: f64 = 19.975;
    const ROW_STEP: f64 = 0.1;
    let mut lngs: Vec<f64> = (0..)
        .map(|i| WEST + 0.5 * f64::from(i))
        .take_while(|&l| l < EAST)
        .collect();
    lngs.push(EAST);

    let mut route = vec![point(0.025, WEST)];
    let mut travelled = 0.0;
    for leg in 0.. {
        let lat = 0.025 + ROW_STEP * f64::from(leg);
        let order: Box<dyn Iterator<Item = &f64>> = if leg % 2 == 0 {
            Box::new(lngs.iter())
        } else {
            Box::new(lngs.iter().rev())
        };
        for &lng in order {
            let next = point(lat, lng);
            let last = *route.last().expect("non-empty");
            let step = last.distance_m(&next);
            if step == 0.0 {
                continue;
            }
            if travelled + step >= length_m {
                let f = (length_m - travelled) / step;
                route.push(crate::geocell::interpolate(&last, &next, f));
                return route;
            }
            travelled += step;
            route.push(next);
        }
    }
    unreachable!("the loop returns once the length is reached")
}

/// A submarine on a 44,160 km route at 46 km/h for 40 days, with keys for
/// every cell on the route, trailed by an escort that challenges it.
pub fn submarine(deriver: &KeyDeriver, start_day: u32) -> Result<(ScenarioSpec, Vec<Geocode>), GeoError> {
    let route = lawnmower_route(SUBMARINE_ROUTE_M);
    let cells = cover_route(&route, DEFAULT_ROUTE_STEP_M)?;
    let keys = issue_store(deriver, cells.iter().copied(), epoch(start_day, MISSION_DAYS));
    let duration = SUBMARINE_ROUTE_M / SUBMARINE_SPEED_MPS;
    let mut spec = ScenarioSpec::new(46, start_day, duration, 30.0);
    spec.assets.push(AssetSpec {
        route: Some(RouteSpec {
            speed_mps: SUBMARINE_SPEED_MPS,
            waypoints: route,
        }),
        position: None,
        ..AssetSpec::fixed("submarine", Role::Prover, point(0.0, 0.0), keys.clone())
    });
    spec.assets.push(AssetSpec {
        follow: Some(FollowSpec {
            leader: "submarine".into(),
            behind_m: ESCORT_BEHIND_M,
        }),
        position: None,
        ..AssetSpec::fixed("escort", Role::Verifier, point(0.0, 0.0), keys).with_accept(AcceptPolicy::OwnAndNeighbors)
    });
    Ok((spec, cells))
}

/// Guards in `captured` and each neighbour, each keyed for its own cell only,
/// challenging an adversary that holds the captured key for `captured`.
/// Every guard issues `attempts` challenges.
pub fn adversary(deriver: &KeyDeriver, captured: Geocode, start_day: u32, attempts: u32) -> ScenarioSpec {
    let t = epoch(start_day, MAX_EPOCH_DAYS);
    let center = decode(&captured).center();
    let interval = 10.0;
    let mut spec = ScenarioSpec::new(99, start_day, interval * f64::from(attempts) + interval / 2.0, interval);
    spec.assets.push(AssetSpec::fixed(
        format!("guard-{captured}"),
        Role::Verifier,
        center,
        issue_store(deriver, [captured], t),
    ));
    for d in DIRECTIONS {
        let p = offset(center, d, NEIGHBOR_OFFSET_DEG);
        let c = encode(&p);
        spec.assets.push(AssetSpec::fixed(
            format!("guard-{c}"),
            Role::Verifier,
            p,
            issue_store(deriver, [c], t),
        ));
    }
    spec.assets.push(AssetSpec {
        captured_cell: Some(captured),
        ..AssetSpec::fixed(
            "intruder",
            Role::Adversary,
            offset(center, (1.0, 1.0), 0.005),
            issue_store(deriver, [captured], t),
        )
    });
    spec
}

/// One buoy challenging one vehicle in its cell once a minute for a full
/// 60-day epoch.
pub fn rekey(deriver: &KeyDeriver, cell: Geocode, start_day: u32) -> ScenarioSpec {
    let keys = issue_store(deriver, [cell], epoch(start_day, MAX_EPOCH_DAYS));
    let center = decode(&cell).center();
    let interval = 60.0;
    let mut spec = ScenarioSpec::new(60, start_day, f64::from(MAX_EPOCH_DAYS) * 86_400.0 - interval, interval);
    spec.assets
        .push(AssetSpec::fixed("buoy", Role::Verifier, center, keys.clone()));
    spec.assets.push(AssetSpec::fixed(
        "vehicle",
        Role::Prover,
        offset(center, (1.0, 1.0), 0.01),
        keys,
    ));
    spec
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::authzsim::{RejectReason, Simulation};
    use crate::secrets::{CeremonyId, MasterKey};

    fn deriver() -> KeyDeriver {
        KeyDeriver::new(&MasterKey::from_bytes([0x5A; 255], CeremonyId::default()))
    }

    #[test]
    fn stationary_accepts_all_neighbours() {
        let cell = "6FG222".parse().unwrap();
        let spec = stationary(&deriver(), cell, 20000);
        let m = Simulation::new(&spec).unwrap().run(&mut std::io::sink()).unwrap();
        for (name, s) in &m.per_asset {
            match name.as_str() {
                "buoy" => assert_eq!(s.challenged, 0),
                "stranger" => assert_eq!((s.accepted, s.silent), (0, 59)),
                _ => assert_eq!((s.challenged, s.accepted), (59, 59), "{name}"),
            }
        }
        assert_eq!(m.distinct_cells_accepted, 8);
    }

    #[test]
    fn adversary_confined_to_captured_cell() {
        let cell: Geocode = "6FG222".parse().unwrap();
        let m = Simulation::new(&adversary(&deriver(), cell, 20000, 50))
            .unwrap()
            .run(&mut std::io::sink())
            .unwrap();
        assert_eq!(m.per_cell[&cell].accepted, 50);
        for n in neighbors(&cell) {
            assert_eq!(
                m.per_cell[&n],
                crate::authzsim::scenario::CellStats {
                    responses: 50,
                    accepted: 0
                }
            );
        }
        assert_eq!(m.rejected[&RejectReason::BadMac], 400);
    }

    #[test]
    fn lawnmower_length_is_exact() {
        let r = lawnmower_route(3_000_000.0);
        let total: f64 = r.windows(2).map(|w| w[0].distance_m(&w[1])).sum();
        assert!((total - 3_000_000.0).abs() < 1.0, "{total}");
        assert!(r.iter().all(|p| p.lat() > 0.0 && p.lat() < 2.0));
    }

    #[test]
    fn builtin_names() {
        for b in Builtin::ALL {
            assert_eq!(b.to_string().parse::<Builtin>().unwrap(), b);
        }
        assert!("nope".parse::<Builtin>().is_err());
    }
}
