//! Scenario files and the discrete-event simulator.
//!
//! A scenario is a versioned TOML document:
//!
//! ```toml
//! version = 1
//! seed = 7
//! duration_s = 3600.0
//! start_day = 20000
//! challenge_interval_s = 30.0
//! loss_prob = 0.0
//! max_clock_skew_s = 2.0
//!
//! [[assets]]
//! name = "buoy"
//! role = "verifier"            # verifier | prover | adversary | both
//! position = [0.025, 0.025]
//! keystore = "buoy.geok"
//! accept = "own_and_neighbors" # or own_cell (default)
//!
//! [[assets]]
//! name = "sub"
//! role = "prover"
//! keystore = "sub.geok"
//! route = { speed_mps = 12.8, waypoints = [[0.025, 0.025], [0.025, 0.525]] }
//!
//! [[assets]]
//! name = "escort"
//! role = "verifier"
//! follow = { leader = "sub", behind_m = 500.0 }
//! ```
//!
//! Each asset has exactly one of `position`, `route` or `follow`. Adversaries
//! answer with the key of `captured_cell` when given one and with random MACs
//! otherwise. Verifiers challenge every answering asset within acoustic range
//! once per interval. Each exchange produces one transcript line; the run
//! ends with a [`Metrics`] summary.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap, HashMap, HashSet};
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geocell::{encode, interpolate, GeoPoint, Geocode};
use crate::keystore::{KeyStore, KeystoreError};

use super::channel::{ChannelModel, Transmission, SOUND_SPEED_MPS};
use super::{
    respond, response_mac, AcceptPolicy, ChallengePacket, RejectReason, RekeyPolicy, ResponsePacket, Verifier,
};

pub const SCENARIO_VERSION: u32 = 1;
pub const DEFAULT_MAX_CLOCK_SKEW_S: f64 = 2.0;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid scenario: {0}")]
    Spec(String),
    #[error("scenario parse error: {0}")]
    Parse(#[from] toml::de::Error),
    #[error(transparent)]
    Keystore(#[from] KeystoreError),
    #[error("io: {0}")]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Verifier,
    Prover,
    Adversary,
    Both,
}

impl Role {
    fn challenges(self) -> bool {
        matches!(self, Role::Verifier | Role::Both)
    }

    fn answers(self) -> bool {
        !matches!(self, Role::Verifier)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RouteSpec {
    pub speed_mps: f64,
    pub waypoints: Vec<GeoPoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FollowSpec {
    pub leader: String,
    pub behind_m: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AssetSpec {
    pub name: String,
    pub role: Role,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub position: Option<GeoPoint>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub route: Option<RouteSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub follow: Option<FollowSpec>,
    /// Bundle log loaded by [`ScenarioSpec::load`]; relative to the scenario file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub keystore: Option<PathBuf>,
    #[serde(skip)]
    pub keys: Option<Arc<KeyStore>>,
    #[serde(default)]
    pub accept: AcceptPolicy,
    /// Fixed clock offset; drawn from ±`max_clock_skew_s` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub clock_skew_s: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub captured_cell: Option<Geocode>,
}

impl AssetSpec {
    pub fn fixed(name: impl Into<String>, role: Role, position: GeoPoint, keys: Arc<KeyStore>) -> Self {
        Self {
            name: name.into(),
            role,
            position: Some(position),
            route: None,
            follow: None,
            keystore: None,
            keys: Some(keys),
            accept: AcceptPolicy::OwnCell,
            clock_skew_s: None,
            captured_cell: None,
        }
    }

    pub fn with_accept(mut self, accept: AcceptPolicy) -> Self {
        self.accept = accept;
        self
    }
}

fn default_skew() -> f64 {
    DEFAULT_MAX_CLOCK_SKEW_S
}

fn default_sound_speed() -> f64 {
    SOUND_SPEED_MPS
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub version: u32,
    pub seed: u64,
    /// Challenges go out at each multiple of the interval strictly before this.
    pub duration_s: f64,
    pub start_day: u32,
    pub challenge_interval_s: f64,
    #[serde(default)]
    pub loss_prob: f64,
    #[serde(default = "default_skew")]
    pub max_clock_skew_s: f64,
    #[serde(default = "default_sound_speed")]
    pub sound_speed_mps: f64,
    pub assets: Vec<AssetSpec>,
}

impl ScenarioSpec {
    pub fn new(seed: u64, start_day: u32, duration_s: f64, challenge_interval_s: f64) -> Self {
        Self {
            version: SCENARIO_VERSION,
            seed,
            duration_s,
            start_day,
            challenge_interval_s,
            loss_prob: 0.0,
            max_clock_skew_s: DEFAULT_MAX_CLOCK_SKEW_S,
            sound_speed_mps: SOUND_SPEED_MPS,
            assets: Vec::new(),
        }
    }

    pub fn parse(text: &str) -> Result<Self, SimError> {
        let spec: ScenarioSpec = toml::from_str(text)?;
        if spec.version != SCENARIO_VERSION {
            return Err(SimError::Spec(format!("unsupported scenario version {}", spec.version)));
        }
        Ok(spec)
    }

    /// Parses the file and opens every referenced keystore.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, SimError> {
        let path = path.as_ref();
        let mut spec = Self::parse(&std::fs::read_to_string(path)?)?;
        let base = path.parent().unwrap_or(Path::new("."));
        for a in &mut spec.assets {
            if let Some(p) = &a.keystore {
                let p = if p.is_relative() { base.join(p) } else { p.clone() };
                if !p.exists() {
                    return Err(SimError::Spec(format!(
                        "{}: keystore {} not found",
                        a.name,
                        p.display()
                    )));
                }
                a.keys = Some(Arc::new(KeyStore::open(&p)?));
            }
        }
        Ok(spec)
    }
}

/// Polyline traversed at constant speed along great-circle segments.
#[derive(Debug, Clone)]
struct Track {
    points: Vec<GeoPoint>,
    cumulative_m: Vec<f64>,
    speed_mps: f64,
}

impl Track {
    fn new(r: &RouteSpec) -> Result<Self, String> {
        if r.waypoints.is_empty() {
            return Err("route has no waypoints".into());
        }
        if !(r.speed_mps.is_finite() && r.speed_mps > 0.0) {
            return Err(format!("route speed {} must be positive", r.speed_mps));
        }
        let mut cumulative_m = vec![0.0];
        for w in r.waypoints.windows(2) {
            let last = *cumulative_m.last().expect("non-empty");
            cumulative_m.push(last + w[0].distance_m(&w[1]));
        }
        Ok(Self {
            points: r.waypoints.clone(),
            cumulative_m,
            speed_mps: r.speed_mps,
        })
    }

    fn at_distance(&self, s: f64) -> GeoPoint {
        let total = *self.cumulative_m.last().expect("non-empty");
        let s = s.clamp(0.0, total);
        let i = self.cumulative_m.partition_point(|&c| c <= s);
        if i == 0 {
            return self.points[0];
        }
        if i >= self.points.len() {
            return *self.points.last().expect("non-empty");
        }
        let (a, b) = (self.cumulative_m[i - 1], self.cumulative_m[i]);
        let f = if b > a { (s - a) / (b - a) } else { 0.0 };
        interpolate(&self.points[i - 1], &self.points[i], f)
    }

    fn travelled(&self, t_s: f64) -> f64 {
        self.speed_mps * t_s
    }
}

#[derive(Debug, Clone)]
enum Motion {
    Fixed(GeoPoint),
    Route(Track),
    Follow { leader: usize, behind_m: f64 },
}

struct Asset {
    name: String,
    role: Role,
    motion: Motion,
    keys: Arc<KeyStore>,
    skew_us: i64,
    captured: Option<Geocode>,
    verifier: Option<Verifier>,
    /// (timestamp, epoch) -> tick time of the verifier's challenges.
    issued: HashMap<(u32, u32), u64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DelayStats {
    pub count: u64,
    pub min_s: f64,
    pub max_s: f64,
    pub mean_s: f64,
    #[serde(skip)]
    sum: f64,
}

impl DelayStats {
    fn add(&mut self, d: f64) {
        if self.count == 0 || d < self.min_s {
            self.min_s = d;
        }
        if d > self.max_s {
            self.max_s = d;
        }
        self.count += 1;
        self.sum += d;
        self.mean_s = self.sum / self.count as f64;
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AssetStats {
    pub challenged: u64,
    pub accepted: u64,
    pub rejected: u64,
    pub silent: u64,
    pub lost: u64,
}

/// Responses received by verifiers located in one cell.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellStats {
    pub responses: u64,
    pub accepted: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub challenges: u64,
    pub accepted: u64,
    pub rejected: BTreeMap<RejectReason, u64>,
    /// No response before the timeout although nothing was lost.
    pub silent: u64,
    /// A challenge or its response was dropped by the channel.
    pub lost: u64,
    /// Distinct cells a prover was in when its response was accepted.
    pub distinct_cells_accepted: usize,
    /// Challenges that reused a (timestamp, key epoch) pair the same verifier
    /// already used at an earlier tick.
    pub repeated_timestamp_epoch_pairs: u64,
    pub delay: DelayStats,
    /// Keyed by the challenged asset.
    pub per_asset: BTreeMap<String, AssetStats>,
    /// Keyed by the verifier's cell.
    pub per_cell: BTreeMap<Geocode, CellStats>,
}

impl Metrics {
    pub fn rejected_total(&self) -> u64 {
        self.rejected.values().sum()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("metrics serialize")
    }
}

#[derive(Debug, Clone, Copy)]
enum Event {
    Tick {
        verifier: usize,
    },
    ChallengeArrives {
        verifier: usize,
        prover: usize,
        ch: ChallengePacket,
    },
    ResponseArrives {
        verifier: usize,
        prover: usize,
        ch: ChallengePacket,
        resp: ResponsePacket,
    },
    Timeout {
        verifier: usize,
        ch: ChallengePacket,
    },
}

struct Scheduled {
    at_us: u64,
    seq: u64,
    event: Event,
}

impl PartialEq for Scheduled {
    fn eq(&self, other: &Self) -> bool {
        (self.at_us, self.seq) == (other.at_us, other.seq)
    }
}

impl Eq for Scheduled {}

impl PartialOrd for Scheduled {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Scheduled {
    // Reversed so the max-heap pops the earliest event first.
    fn cmp(&self, other: &Self) -> Ordering {
        (other.at_us, other.seq).cmp(&(self.at_us, self.seq))
    }
}

struct Exchange {
    prover: usize,
    sent_us: u64,
    cell: Geocode,
    lost: bool,
}

enum Outcome {
    Accepted,
    Rejected(RejectReason),
    Silent,
    Lost,
}

pub struct Simulation {
    policy: RekeyPolicy,
    channel: ChannelModel,
    start_day: u32,
    duration_us: u64,
    interval_us: u64,
    timeout_us: u64,
    assets: Vec<Asset>,
    rng: StdRng,
    queue: BinaryHeap<Scheduled>,
    seq: u64,
    exchanges: HashMap<(usize, u32, u32), Exchange>,
    accepted_cells: HashSet<Geocode>,
    metrics: Metrics,
}

fn seconds_to_us(s: f64) -> u64 {
    (s * 1e6).round() as u64
}

impl Simulation {
    pub fn new(spec: &ScenarioSpec) -> Result<Self, SimError> {
        Self::with_policy(spec, RekeyPolicy::default())
    }

    pub fn with_policy(spec: &ScenarioSpec, policy: RekeyPolicy) -> Result<Self, SimError> {
        let bad = |m: String| SimError::Spec(m);
        if spec.version != SCENARIO_VERSION {
            return Err(bad(format!("unsupported scenario version {}", spec.version)));
        }
        if !(spec.duration_s.is_finite() && spec.duration_s > 0.0) {
            return Err(bad("duration_s must be positive".into()));
        }
        if !(spec.challenge_interval_s.is_finite() && spec.challenge_interval_s > 0.0) {
            return Err(bad("challenge_interval_s must be positive".into()));
        }
        if !(spec.max_clock_skew_s.is_finite() && spec.max_clock_skew_s >= 0.0) {
            return Err(bad("max_clock_skew_s must be non-negative".into()));
        }
        let channel = ChannelModel::new(spec.sound_speed_mps, spec.loss_prob)?;
        let mut rng = StdRng::seed_from_u64(spec.seed);
        let index: HashMap<&str, usize> = spec
            .assets
            .iter()
            .enumerate()
            .map(|(i, a)| (a.name.as_str(), i))
            .collect();
        if index.len() != spec.assets.len() {
            return Err(bad("asset names must be unique".into()));
        }

        let mut assets = Vec::with_capacity(spec.assets.len());
        for a in &spec.assets {
            let motion = match (&a.position, &a.route, &a.follow) {
                (Some(p), None, None) => Motion::Fixed(*p),
                (None, Some(r), None) => Motion::Route(Track::new(r).map_err(|e| bad(format!("{}: {e}", a.name)))?),
                (None, None, Some(f)) => {
                    let leader = *index
                        .get(f.leader.as_str())
                        .ok_or_else(|| bad(format!("{}: unknown leader {}", a.name, f.leader)))?;
                    if spec.assets[leader].route.is_none() {
                        return Err(bad(format!("{}: leader {} has no route", a.name, f.leader)));
                    }
                    Motion::Follow {
                        leader,
                        behind_m: f.behind_m,
                    }
                }
                _ => return Err(bad(format!("{}: give exactly one of position, route, follow", a.name))),
            };
            let skew_s = match a.clock_skew_s {
                Some(s) => s,
                None if spec.max_clock_skew_s > 0.0 => rng.gen_range(-spec.max_clock_skew_s..=spec.max_clock_skew_s),
                None => 0.0,
            };
            if a.role == Role::Adversary && a.keys.is_none() && a.captured_cell.is_some() {
                return Err(bad(format!("{}: captured_cell needs a keystore", a.name)));
            }
            assets.push(Asset {
                name: a.name.clone(),
                role: a.role,
                motion,
                keys: a.keys.clone().unwrap_or_default(),
                skew_us: (skew_s * 1e6).round() as i64,
                captured: a.captured_cell,
                verifier: a.role.challenges().then(|| Verifier::new(policy, a.accept)),
                issued: HashMap::new(),
            });
        }

        let mut sim = Self {
            policy,
            channel,
            start_day: spec.start_day,
            duration_us: seconds_to_us(spec.duration_s),
            interval_us: seconds_to_us(spec.challenge_interval_s).max(1),
            timeout_us: seconds_to_us(2.0 * policy.window_seconds()),
            assets,
            rng,
            queue: BinaryHeap::new(),
            seq: 0,
            exchanges: HashMap::new(),
            accepted_cells: HashSet::new(),
            metrics: Metrics::default(),
        };
        for v in 0..sim.assets.len() {
            if sim.assets[v].role.challenges() {
                let first = sim.interval_us;
                sim.schedule(first, Event::Tick { verifier: v });
            }
        }
        for a in &sim.assets {
            sim.metrics.per_asset.entry(a.name.clone()).or_default();
        }
        Ok(sim)
    }

    fn schedule(&mut self, at_us: u64, event: Event) {
        self.seq += 1;
        self.queue.push(Scheduled {
            at_us,
            seq: self.seq,
            event,
        });
    }

    fn position(&self, i: usize, t_us: u64) -> GeoPoint {
        let t_s = t_us as f64 / 1e6;
        match &self.assets[i].motion {
            Motion::Fixed(p) => *p,
            Motion::Route(track) => track.at_distance(track.travelled(t_s)),
            Motion::Follow { leader, behind_m } => match &self.assets[*leader].motion {
                Motion::Route(track) => track.at_distance(track.travelled(t_s) - behind_m),
                _ => unreachable!("leaders are validated to have routes"),
            },
        }
    }

    /// Local clock in ticks since the epoch of the day count.
    fn clock(&self, i: usize, t_us: u64) -> u64 {
        let base = i128::from(self.start_day) * i128::from(self.policy.ticks_per_day());
        let tick_us = i128::from(self.policy.tick_ms) * 1000;
        let local = i128::from(t_us) + i128::from(self.assets[i].skew_us);
        (base + local.div_euclid(tick_us)).max(0) as u64
    }

    fn day(&self, clock: u64) -> u32 {
        (clock / self.policy.ticks_per_day()) as u32
    }

    pub fn run(mut self, transcript: &mut dyn Write) -> Result<Metrics, SimError> {
        while let Some(Scheduled { at_us, event, .. }) = self.queue.pop() {
            match event {
                Event::Tick { verifier } => self.on_tick(verifier, at_us),
                Event::ChallengeArrives { verifier, prover, ch } => self.on_challenge(verifier, prover, ch, at_us),
                Event::ResponseArrives {
                    verifier,
                    prover,
                    ch,
                    resp,
                } => self.on_response(verifier, prover, ch, resp, at_us, transcript)?,
                Event::Timeout { verifier, ch } => self.on_timeout(verifier, ch, at_us, transcript)?,
            }
        }
        self.metrics.distinct_cells_accepted = self.accepted_cells.len();
        Ok(self.metrics)
    }

    fn on_tick(&mut self, v: usize, now: u64) {
        if now >= self.duration_us {
            return;
        }
        let here = self.position(v, now);
        let cell = encode(&here);
        let clock = self.clock(v, now);
        let epoch = self.day(clock).saturating_sub(self.start_day) / self.policy.epoch_days;
        for p in 0..self.assets.len() {
            if p == v || !self.assets[p].role.answers() {
                continue;
            }
            let there = self.position(p, now);
            let tx = self.channel.transmit(&here, &there, &mut self.rng);
            if tx == Transmission::OutOfRange {
                continue;
            }
            let verifier = self.assets[v]
                .verifier
                .as_mut()
                .expect("challenging assets have verifiers");
            let ch = verifier.issue(clock, cell, &mut self.rng);
            if *self.assets[v].issued.entry((ch.timestamp(), epoch)).or_insert(now) != now {
                self.metrics.repeated_timestamp_epoch_pairs += 1;
            }
            self.metrics.challenges += 1;
            self.metrics
                .per_asset
                .entry(self.assets[p].name.clone())
                .or_default()
                .challenged += 1;
            let lost = match tx {
                Transmission::Delivered(d) => {
                    self.metrics.delay.add(d);
                    self.schedule(
                        now + seconds_to_us(d),
                        Event::ChallengeArrives {
                            verifier: v,
                            prover: p,
                            ch,
                        },
                    );
                    false
                }
                _ => true,
            };
            self.exchanges.insert(
                (v, ch.timestamp(), ch.nonce()),
                Exchange {
                    prover: p,
                    sent_us: now,
                    cell,
                    lost,
                },
            );
            self.schedule(now + self.timeout_us, Event::Timeout { verifier: v, ch });
        }
        let next = now + self.interval_us;
        if next < self.duration_us {
            self.schedule(next, Event::Tick { verifier: v });
        }
    }

    fn on_challenge(&mut self, v: usize, p: usize, ch: ChallengePacket, now: u64) {
        let clock = self.clock(p, now);
        // Provers ignore challenges their own clock considers stale.
        if !self.policy.is_fresh(clock, ch.timestamp()) {
            return;
        }
        let day = self.day(clock);
        let here = self.position(p, now);
        let cell = encode(&here);
        let prover = &self.assets[p];
        let resp = match (prover.role, prover.captured) {
            (Role::Adversary, Some(c)) => prover
                .keys
                .lookup(&c, day)
                .map(|k| ResponsePacket::new(response_mac(&ch, &c, &k))),
            (Role::Adversary, None) => Some(ResponsePacket::new(self.rng.gen())),
            _ => respond(&ch, &prover.keys, &cell, day),
        };
        let Some(resp) = resp else { return };
        let there = self.position(v, now);
        match self.channel.transmit(&here, &there, &mut self.rng) {
            Transmission::Delivered(d) => {
                self.metrics.delay.add(d);
                self.schedule(
                    now + seconds_to_us(d),
                    Event::ResponseArrives {
                        verifier: v,
                        prover: p,
                        ch,
                        resp,
                    },
                );
            }
            Transmission::Lost | Transmission::OutOfRange => {
                if let Some(x) = self.exchanges.get_mut(&(v, ch.timestamp(), ch.nonce())) {
                    x.lost = true;
                }
            }
        }
    }

    fn on_response(
        &mut self,
        v: usize,
        p: usize,
        ch: ChallengePacket,
        resp: ResponsePacket,
        now: u64,
        out: &mut dyn Write,
    ) -> Result<(), SimError> {
        let clock = self.clock(v, now);
        let day = self.day(clock);
        let keys = self.assets[v].keys.clone();
        let verifier = self.assets[v]
            .verifier
            .as_mut()
            .expect("challenging assets have verifiers");
        let result = verifier.check(&ch, &resp, &keys, clock, day);
        let Some(x) = self.exchanges.remove(&(v, ch.timestamp(), ch.nonce())) else {
            return Ok(());
        };
        debug_assert_eq!(x.prover, p);
        let prover_cell = encode(&self.position(p, now));
        let cell_stats = self.metrics.per_cell.entry(x.cell).or_default();
        cell_stats.responses += 1;
        let outcome = match result {
            Ok(_) => {
                cell_stats.accepted += 1;
                self.accepted_cells.insert(prover_cell);
                Outcome::Accepted
            }
            Err(r) => Outcome::Rejected(r),
        };
        self.finish(v, x, outcome, now, out)
    }

    fn on_timeout(&mut self, v: usize, ch: ChallengePacket, now: u64, out: &mut dyn Write) -> Result<(), SimError> {
        let Some(x) = self.exchanges.remove(&(v, ch.timestamp(), ch.nonce())) else {
            return Ok(());
        };
        let outcome = if x.lost { Outcome::Lost } else { Outcome::Silent };
        self.finish(v, x, outcome, now, out)
    }

    fn finish(
        &mut self,
        v: usize,
        x: Exchange,
        outcome: Outcome,
        now: u64,
        out: &mut dyn Write,
    ) -> Result<(), SimError> {
        let stats = self
            .metrics
            .per_asset
            .entry(self.assets[x.prover].name.clone())
            .or_default();
        let label = match outcome {
            Outcome::Accepted => {
                self.metrics.accepted += 1;
                stats.accepted += 1;
                "accepted".to_string()
            }
            Outcome::Rejected(r) => {
                *self.metrics.rejected.entry(r).or_default() += 1;
                stats.rejected += 1;
                format!("rejected:{r}")
            }
            Outcome::Silent => {
                self.metrics.silent += 1;
                stats.silent += 1;
                "silent".to_string()
            }
            Outcome::Lost => {
                self.metrics.lost += 1;
                stats.lost += 1;
                "lost".to_string()
            }
        };
        writeln!(
            out,
            "{:.3} {}<-{} cell={} outcome={} elapsed_ms={}",
            x.sent_us as f64 / 1e6,
            self.assets[v].name,
            self.assets[x.prover].name,
            x.cell,
            label,
            (now - x.sent_us) / 1000
        )?;
        Ok(())
    }
}
