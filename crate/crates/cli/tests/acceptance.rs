//! Acceptance gate. Runs every criterion, prints one PASS/FAIL line each and
//! exits non-zero when any fails.
//!
//! Built with optimizations (see the workspace test profile); the keyspace
//! criteria walk all 25,920,000 cells.

use std::collections::HashSet;
use std::io::{self, Write};
use std::panic::{self, AssertUnwindSafe};
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use geokey_core::authority::stream_keyspace;
use geokey_core::authzsim::scenarios::{adversary, rekey, submarine};
use geokey_core::authzsim::{
    make_challenge, response_mac, verify, AcceptPolicy, RejectReason, RekeyPolicy, ReplayCache, ResponsePacket,
    Simulation, Verifier, TIMESTAMP_MODULUS,
};
use geokey_core::cipher::RoundKeys;
use geokey_core::geocell::{enumerate_all, neighbors, Geocode, CELL_COUNT};
use geokey_core::kdf::{KeyDeriver, TimeInterval};
use geokey_core::keystore::{EntityId, KeyRecord, KeyStore, HEADER_LEN, RECORD_LEN};
use geokey_core::secrets::{
    assemble_master_key, combine, gf256, split, CeremonyId, Contribution, MasterKey, Share, MASTER_KEY_LEN,
};
use rand::rngs::StdRng;
use rand::{Rng, RngCore, SeedableRng};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

macro_rules! check {
    ($cond:expr, $($msg:tt)+) => {
        let ok: bool = $cond;
        if !ok {
            return Err(format!($($msg)+));
        }
    };
}

const GOLDEN_ZERO_KEY: &str = "00cccf4b5a7069cda300e4d957bc9e1a844a5bba3183918609cb023458d7bfb1";
const START_DAY: u32 = 20_000;

fn zero_master() -> MasterKey {
    MasterKey::from_bytes([0; MASTER_KEY_LEN], CeremonyId::default())
}

fn test_master() -> MasterKey {
    let mut k = [0u8; MASTER_KEY_LEN];
    StdRng::seed_from_u64(0x5eed).fill_bytes(&mut k);
    MasterKey::from_bytes(k, CeremonyId([0xAC; 16]))
}

fn cli() -> Command {
    Command::new(env!("CARGO_BIN_EXE_geokey"))
}

fn cell_count() -> Outcome {
    let t = Instant::now();
    let n = enumerate_all().count() as u64;
    let lib = t.elapsed();
    check!(n == 25_920_000 && n == CELL_COUNT, "library enumerated {n} cells");

    let t = Instant::now();
    let out = cli()
        .args(["enumerate", "--count-only"])
        .output()
        .map_err(|e| e.to_string())?;
    let bin = t.elapsed();
    let printed = String::from_utf8_lossy(&out.stdout).trim().to_string();
    check!(out.status.success(), "enumerate exited with {}", out.status);
    check!(printed == "25920000", "enumerate printed {printed:?}");
    check!(lib.max(bin) < Duration::from_secs(60), "took {lib:?} / {bin:?}");
    Ok(format!("25920000 cells; library {lib:.2?}, cli {bin:.2?}"))
}

/// Counts bytes and keeps the records at chosen positions.
struct SamplingSink {
    bytes: u64,
    wanted: Vec<u64>,
    kept: Vec<(u64, Vec<u8>)>,
    partial: Option<(u64, Vec<u8>)>,
}

impl Write for SamplingSink {
    fn write(&mut self, buf: &[u8]) -> io::Result<usize> {
        let start = self.bytes;
        self.bytes += buf.len() as u64;
        for (i, byte) in buf.iter().enumerate() {
            let pos = start + i as u64;
            if pos < HEADER_LEN as u64 {
                continue;
            }
            let rel = pos - HEADER_LEN as u64;
            let (idx, off) = (rel / RECORD_LEN as u64, rel % RECORD_LEN as u64);
            if off == 0 && self.wanted.contains(&idx) {
                self.partial = Some((idx, Vec::with_capacity(RECORD_LEN)));
            }
            if let Some((_, rec)) = &mut self.partial {
                rec.push(*byte);
                if rec.len() == RECORD_LEN {
                    self.kept.push(self.partial.take().expect("present"));
                }
            }
        }
        Ok(buf.len())
    }

    fn flush(&mut self) -> io::Result<()> {
        Ok(())
    }
}

fn keyspace_feasibility() -> Outcome {
    let mk = test_master();
    let deriver = KeyDeriver::new(&mk);
    let interval = TimeInterval::new(START_DAY, START_DAY + 60).map_err(|e| e.to_string())?;
    let wanted = vec![0, 1, 12_345_678, CELL_COUNT - 1];
    let sink = SamplingSink {
        bytes: 0,
        wanted: wanted.clone(),
        kept: Vec::new(),
        partial: None,
    };
    let t = Instant::now();
    let (sink, records) =
        stream_keyspace(&deriver, &interval, EntityId([0xEE; 16]), None, sink).map_err(|e| e.to_string())?;
    let elapsed = t.elapsed();
    let expected = 33 + 46 * 25_920_000u64;
    check!(records == CELL_COUNT, "{records} records");
    check!(
        sink.bytes == expected,
        "bundle is {} bytes, expected {expected}",
        sink.bytes
    );
    check!(sink.bytes < 7_000_000_000, "bundle exceeds 7 GB");
    check!(
        sink.kept.len() == wanted.len(),
        "sampled {} of {} records",
        sink.kept.len(),
        wanted.len()
    );
    for (idx, bytes) in &sink.kept {
        let rec = KeyRecord::from_bytes(bytes).map_err(|e| e.to_string())?;
        let code = enumerate_all().nth(*idx as usize).expect("index in range");
        check!(rec.geocode == code, "record {idx} is {} not {code}", rec.geocode);
        check!(
            rec.key == deriver.derive(&code, &interval).key(),
            "record {idx} key mismatch"
        );
    }
    // Soft budget 30 min; only twice the budget fails the gate.
    check!(elapsed < Duration::from_secs(3600), "took {elapsed:?}");
    let rate = records as f64 / elapsed.as_secs_f64();
    Ok(format!(
        "{} bytes (1.19 GB < 7 GB) in {elapsed:.1?}, {rate:.0} keys/s",
        sink.bytes
    ))
}

fn cipher_vector() -> Outcome {
    let rk = RoundKeys::new(&[0u8; 16], 12).map_err(|e| e.to_string())?;
    let ct = rk.encrypt_block(&[0u8; 8]).map_err(|e| e.to_string())?;
    let got = hex::encode_upper(ct);
    check!(got == "21A5DBEE154B8F6D", "got {got}");
    Ok(got)
}

fn subsets(n: u8, k: usize, from: u8, acc: &mut Vec<u8>, out: &mut Vec<Vec<u8>>) {
    if acc.len() == k {
        out.push(acc.clone());
        return;
    }
    for x in from..=n {
        acc.push(x);
        subsets(n, k, x + 1, acc, out);
        acc.pop();
    }
}

fn threshold_suite() -> Outcome {
    let t = Instant::now();
    let mk = test_master();
    let mut rng = StdRng::seed_from_u64(11);
    let shares = split(&mk, 6, 11, &mut rng).map_err(|e| e.to_string())?;
    let mut all = Vec::new();
    subsets(11, 6, 1, &mut Vec::new(), &mut all);
    check!(all.len() == 462, "{} subsets", all.len());
    for s in &all {
        let chosen: Vec<Share> = s.iter().map(|&x| shares[x as usize - 1].clone()).collect();
        let back = combine(&chosen, 6).map_err(|e| e.to_string())?;
        check!(back.as_bytes() == mk.as_bytes(), "subset {s:?} rebuilt a different key");
    }

    // Five shares fix nothing: for every candidate byte v there is a sixth
    // share that, with the five, combines to v at every position.
    let five = &shares[..5];
    let mut xs = vec![0u8];
    xs.extend(five.iter().map(Share::x));
    let x6 = shares[5].x();
    let positions = 16usize;
    for v in 0..=255u8 {
        let mut y = *shares[5].y();
        for (pos, slot) in y.iter_mut().enumerate().take(positions) {
            let mut ys = vec![v];
            ys.extend(five.iter().map(|s| s.y()[pos]));
            *slot = gf256::interpolate(&xs, &ys, x6);
        }
        let forged = Share::new(x6, y, mk.ceremony_id()).map_err(|e| e.to_string())?;
        let mut set = five.to_vec();
        set.push(forged);
        let back = combine(&set, 6).map_err(|e| e.to_string())?;
        check!(
            back.as_bytes()[..positions].iter().all(|&b| b == v),
            "candidate {v} not reachable"
        );
    }
    let elapsed = t.elapsed();
    check!(elapsed < Duration::from_secs(60), "took {elapsed:?}");
    Ok(format!(
        "462/462 subsets; 256/256 candidates on {positions} positions; {elapsed:.2?}"
    ))
}

fn derivation_properties() -> Outcome {
    let zero = KeyDeriver::new(&zero_master());
    let golden = zero.derive(
        &"222222".parse().expect("valid"),
        &TimeInterval::new(0, 60).expect("valid"),
    );
    check!(
        hex::encode(golden.key()) == GOLDEN_ZERO_KEY,
        "golden vector is {}",
        hex::encode(golden.key())
    );

    let deriver = KeyDeriver::new(&test_master());
    let interval = TimeInterval::new(START_DAY, START_DAY + 60).expect("valid");
    let sample: Vec<Geocode> = enumerate_all().step_by(259).take(100_000).collect();
    check!(sample.len() == 100_000, "sample has {} cells", sample.len());
    let mut seen = HashSet::with_capacity(sample.len());
    for c in &sample {
        let k = deriver.derive(c, &interval).key();
        check!(k == deriver.derive(c, &interval).key(), "non-deterministic key for {c}");
        check!(seen.insert(k), "collision at {c}");
    }
    Ok("deterministic, 0 collisions in 100000 cells, golden vector stable".into())
}

fn submarine_scenario() -> Outcome {
    let deriver = KeyDeriver::new(&test_master());
    let (spec, route) = submarine(&deriver, START_DAY).map_err(|e| e.to_string())?;
    check!(spec.loss_prob == 0.0, "loss_prob {}", spec.loss_prob);
    let m = Simulation::new(&spec)
        .map_err(|e| e.to_string())?
        .run(&mut io::sink())
        .map_err(|e| e.to_string())?;
    check!(route.len() > 7000, "route covers {} cells", route.len());
    check!(
        m.challenges > 0 && m.accepted == m.challenges,
        "{} of {} accepted",
        m.accepted,
        m.challenges
    );
    check!(
        m.rejected_total() == 0 && m.silent == 0 && m.lost == 0,
        "rejections or silences: {}",
        m.to_json()
    );
    check!(
        m.distinct_cells_accepted > 7000,
        "accepted in {} cells",
        m.distinct_cells_accepted
    );
    Ok(format!(
        "route {} cells; {}/{} accepted across {} cells",
        route.len(),
        m.accepted,
        m.challenges,
        m.distinct_cells_accepted
    ))
}

fn protocol_soundness() -> Outcome {
    let deriver = KeyDeriver::new(&test_master());
    let interval = TimeInterval::new(START_DAY, START_DAY + 60).expect("valid");
    let cell: Geocode = "6FG222".parse().expect("valid");
    let cells: Vec<Geocode> = std::iter::once(cell).chain(neighbors(&cell)).collect();
    let records: Vec<KeyRecord> = cells
        .iter()
        .map(|c| KeyRecord::from(&deriver.derive(c, &interval)))
        .collect();
    let store = KeyStore::from_records(&records);
    let key = store.lookup(&cell, START_DAY).expect("keyed");
    let policy = RekeyPolicy::default();
    let ticks_per_day = policy.ticks_per_day();
    let mut rng = StdRng::seed_from_u64(7);
    let base = u64::from(START_DAY) * ticks_per_day;

    // Forgery: random MACs against the widest accept policy.
    let trials = 100_000u64;
    let mut verifier = Verifier::new(policy, AcceptPolicy::OwnAndNeighbors);
    let mut forged = 0u64;
    for i in 0..trials {
        let clock = base + i * 7;
        let ch = verifier.issue(clock, cell, &mut rng);
        if verifier
            .check(&ch, &ResponsePacket::new(rng.gen()), &store, clock + 50, START_DAY)
            .is_ok()
        {
            forged += 1;
        }
    }
    check!(forged == 0, "{forged} forgeries accepted");

    // Replay: every genuine response accepted once, rejected on reuse.
    let replays = 10_000u64;
    let mut verifier = Verifier::new(policy, AcceptPolicy::OwnCell);
    let mut replay_rejected = 0u64;
    for i in 0..replays {
        let clock = base + i * 13;
        let ch = verifier.issue(clock, cell, &mut rng);
        let resp = ResponsePacket::new(response_mac(&ch, &cell, &key));
        verifier
            .check(&ch, &resp, &store, clock + 100, START_DAY)
            .map_err(|r| format!("genuine rejected: {r}"))?;
        if verifier.check(&ch, &resp, &store, clock + 200, START_DAY) == Err(RejectReason::Replayed) {
            replay_rejected += 1;
        }
    }
    check!(
        replay_rejected == replays,
        "{replay_rejected}/{replays} replays rejected"
    );

    // Delay: genuine responses arriving more than 10 s after the challenge.
    let delays = 10_000u64;
    let window = u64::from(policy.window_ticks);
    let mut cache = ReplayCache::new(&policy);
    let mut stale = 0u64;
    for _ in 0..delays {
        let clock = base + rng.gen_range(0..ticks_per_day);
        let ch = make_challenge(clock, &mut rng);
        let resp = ResponsePacket::new(response_mac(&ch, &cell, &key));
        let late = rng.gen_range(window + 1..TIMESTAMP_MODULUS / 2);
        let r = verify(&ch, &resp, &store, &cell, clock + late, START_DAY, &mut cache, &policy);
        if r == Err(RejectReason::Stale) {
            stale += 1;
        }
    }
    check!(stale == delays, "{stale}/{delays} late responses rejected");
    let on_time = verify(
        &make_challenge(base, &mut rng),
        &ResponsePacket::new(0),
        &store,
        &cell,
        base + window,
        START_DAY,
        &mut cache,
        &policy,
    );
    check!(on_time != Err(RejectReason::Stale), "window edge judged stale");
    Ok(format!(
        "0/{trials} forgeries, {replays}/{replays} replays and {delays}/{delays} late responses rejected"
    ))
}

fn rekey_arithmetic() -> Outcome {
    let policy = RekeyPolicy::default();
    let wrap = policy.wrap_seconds();
    let epoch = policy.epoch_seconds();
    let off = (wrap - 5_368_709.12).abs();
    check!(off < 1e-6, "wrap is {wrap}");
    check!(epoch == 5_184_000.0, "epoch is {epoch}");
    check!(wrap >= epoch && policy.nonce_safe(), "timestamps wrap inside an epoch");

    let deriver = KeyDeriver::new(&test_master());
    let spec = rekey(&deriver, "6FG222".parse().expect("valid"), START_DAY);
    let m = Simulation::new(&spec)
        .map_err(|e| e.to_string())?
        .run(&mut io::sink())
        .map_err(|e| e.to_string())?;
    check!(m.challenges >= 86_000, "only {} challenges", m.challenges);
    check!(
        m.repeated_timestamp_epoch_pairs == 0,
        "{} repeated pairs",
        m.repeated_timestamp_epoch_pairs
    );
    check!(
        m.accepted == m.challenges,
        "{} of {} accepted",
        m.accepted,
        m.challenges
    );
    Ok(format!(
        "{wrap:.2} s >= {epoch:.0} s; {} challenges over 60 days, 0 repeats",
        m.challenges
    ))
}

fn compartmentalization() -> Outcome {
    let deriver = KeyDeriver::new(&test_master());
    let captured: Geocode = "6FG222".parse().expect("valid");
    let spec = adversary(&deriver, captured, START_DAY, 1000);
    let m = Simulation::new(&spec)
        .map_err(|e| e.to_string())?
        .run(&mut io::sink())
        .map_err(|e| e.to_string())?;
    let mut tried = 0u64;
    for n in neighbors(&captured) {
        let s = m.per_cell.get(&n).cloned().unwrap_or_default();
        check!(s.responses >= 1000, "neighbour {n} saw {} responses", s.responses);
        check!(s.accepted == 0, "neighbour {n} accepted {}", s.accepted);
        tried += s.responses;
    }
    let own = m.per_cell.get(&captured).cloned().unwrap_or_default();
    check!(own.accepted > 0, "captured cell accepted nothing");
    Ok(format!(
        "0/{tried} accepted in the 8 neighbours; {} accepted in {captured}",
        own.accepted
    ))
}

fn entropy_accounting() -> Outcome {
    let mut rng = StdRng::seed_from_u64(385);
    let contribs: Vec<Contribution> = (1..=11)
        .map(|p| Contribution::generate(p, 35, &mut rng))
        .collect::<Result<_, _>>()
        .map_err(|e| e.to_string())?;
    let mk = assemble_master_key(&contribs, CeremonyId([1; 16])).map_err(|e| e.to_string())?;
    check!(
        mk.total_entropy_bits() == Some(385),
        "library reports {:?}",
        mk.total_entropy_bits()
    );

    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut cmd = cli();
    cmd.args(["ceremony", "assemble", "--out-dir"])
        .arg(dir.path().join("out"));
    for c in &contribs {
        let path = dir.path().join(format!("c{}.bin", c.participant_id()));
        std::fs::write(&path, c.to_bytes()).map_err(|e| e.to_string())?;
        cmd.arg("--contribution").arg(path);
    }
    let out = cmd.output().map_err(|e| e.to_string())?;
    let text = String::from_utf8_lossy(&out.stdout);
    check!(
        out.status.success(),
        "assemble failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    check!(
        text.lines().any(|l| l == "total entropy: 385 bits"),
        "assemble printed {text:?}"
    );
    Ok("11 x 35 bits = 385 bits (library and cli)".into())
}

fn main() -> ExitCode {
    let criteria: [Criterion; 10] = [
        ("cell count", cell_count),
        ("full keyspace", keyspace_feasibility),
        ("cipher vector", cipher_vector),
        ("threshold sharing", threshold_suite),
        ("derivation", derivation_properties),
        ("submarine route", submarine_scenario),
        ("protocol soundness", protocol_soundness),
        ("rekey arithmetic", rekey_arithmetic),
        ("compartmentalization", compartmentalization),
        ("entropy accounting", entropy_accounting),
    ];
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let outcome = panic::catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let secs = t.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("criterion {:>2} {name}: PASS ({detail}) [{secs:.1} s]", i + 1),
            Err(why) => {
                failed += 1;
                println!("criterion {:>2} {name}: FAIL ({why}) [{secs:.1} s]", i + 1);
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
