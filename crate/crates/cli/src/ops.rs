use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use anyhow::{bail, ensure, Context, Result};
use geokey_core::authority::service::{AuthorityServer, ServiceConfig};
use geokey_core::authority::{stream_keyspace, AuditLog};
use geokey_core::authzsim::scenarios::Builtin;
use geokey_core::authzsim::{ScenarioSpec, Simulation};
use geokey_core::geocell::{cover_area_with, cover_route, enumerate_all, Membership, CELL_COUNT};
use geokey_core::kdf::{DerivedLength, KeyDeriver, TimeInterval};
use geokey_core::keystore::{size_report, Bundle, EntityId, KeyStore};
use geokey_core::secrets::{
    assemble_master_key, combine, split, CeremonyId, Contribution, MasterKey, Share, CONTRIBUTION_LEN,
};
use geokey_core::{Area, Authority, Delegation, LicenseRequest, Span};
use rand::rngs::OsRng;
use serde_json::json;

use crate::{
    AuthorityCmd, BenchCmd, CeremonyCmd, Cli, Command, CoverCmd, DeriveArgs, EnumerateArgs, KeySource, KeystoreCmd,
    SimCmd,
};

/// Bundles larger than this do not fit the storage budget of a carried store.
const STORAGE_BUDGET_BYTES: u64 = 7_000_000_000;

pub fn run(cli: Cli) -> Result<()> {
    let json = cli.json;
    match cli.command {
        Command::Ceremony(cmd) => ceremony(cmd, json),
        Command::Derive(args) => derive(args, json),
        Command::Enumerate(args) => enumerate(args, json),
        Command::Cover(cmd) => cover(cmd, json),
        Command::Keystore(cmd) => keystore(cmd, json),
        Command::Authority(cmd) => authority(cmd, json),
        Command::Sim(cmd) => sim(cmd),
        Command::Bench(cmd) => bench(cmd, json),
    }
}

fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).with_context(|| format!("reading {}", path.display()))
}

fn write(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

fn load_master_key(src: &KeySource) -> Result<MasterKey> {
    if let Some(path) = &src.master_key {
        return MasterKey::from_file_bytes(&read(path)?).with_context(|| format!("parsing {}", path.display()));
    }
    ensure!(!src.share.is_empty(), "no key source: pass --master-key or --share");
    let shares = src
        .share
        .iter()
        .map(|p| Share::from_bytes(&read(p)?).with_context(|| format!("parsing {}", p.display())))
        .collect::<Result<Vec<_>>>()?;
    Ok(combine(&shares, src.threshold)?)
}

fn write_shares(shares: &[Share], dir: &Path) -> Result<Vec<String>> {
    shares
        .iter()
        .map(|s| {
            let name = format!("share-{:02}.bin", s.x());
            write(&dir.join(&name), &s.to_bytes())?;
            Ok(name)
        })
        .collect()
}

fn parse_nonce(hex_str: &str) -> Result<[u8; 16]> {
    let mut nonce = [0u8; 16];
    hex::decode_to_slice(hex_str, &mut nonce).context("ceremony nonce must be 32 hex digits")?;
    Ok(nonce)
}

fn ceremony(cmd: CeremonyCmd, json: bool) -> Result<()> {
    match cmd {
        CeremonyCmd::Contribute {
            participant,
            entropy_bits,
            material_hex,
            out,
        } => {
            let c = match material_hex {
                Some(h) => {
                    let material = hex::decode(h).context("material must be hex")?;
                    ensure!(
                        material.len() == CONTRIBUTION_LEN,
                        "material must be {CONTRIBUTION_LEN} bytes"
                    );
                    Contribution::new(participant, &material, entropy_bits)?
                }
                None => Contribution::generate(participant, entropy_bits, &mut OsRng)?,
            };
            write(&out, &c.to_bytes())?;
            if json {
                println!(
                    "{}",
                    json!({"participant": participant, "entropy_bits": entropy_bits, "out": out})
                );
            } else {
                println!("wrote contribution {participant} to {}", out.display());
            }
        }
        CeremonyCmd::Assemble {
            contributions,
            out_dir,
            ceremony_nonce,
            threshold,
            shares,
        } => {
            let contribs = contributions
                .iter()
                .map(|p| Contribution::from_bytes(&read(p)?).with_context(|| format!("parsing {}", p.display())))
                .collect::<Result<Vec<_>>>()?;
            let id = match ceremony_nonce {
                Some(h) => CeremonyId::from_nonce(parse_nonce(&h)?),
                None => CeremonyId::random(&mut OsRng),
            };
            let mk = assemble_master_key(&contribs, id)?;
            let pieces = split(&mk, threshold, shares, &mut OsRng)?;
            fs::create_dir_all(&out_dir)?;
            write(&out_dir.join("master.key"), &mk.to_file_bytes())?;
            let names = write_shares(&pieces, &out_dir)?;
            let bits = mk.total_entropy_bits().unwrap_or_default();
            if json {
                println!(
                    "{}",
                    json!({"ceremony_id": hex::encode(id.0), "total_entropy_bits": bits, "threshold": threshold, "shares": names})
                );
            } else {
                println!("ceremony {}", hex::encode(id.0));
                println!("total entropy: {bits} bits");
                println!(
                    "wrote master.key and {} shares ({threshold} needed) to {}",
                    names.len(),
                    out_dir.display()
                );
            }
        }
        CeremonyCmd::Split {
            master_key,
            out_dir,
            threshold,
            shares,
        } => {
            let mk = MasterKey::from_file_bytes(&read(&master_key)?)?;
            let pieces = split(&mk, threshold, shares, &mut OsRng)?;
            fs::create_dir_all(&out_dir)?;
            let names = write_shares(&pieces, &out_dir)?;
            if json {
                println!("{}", json!({"threshold": threshold, "shares": names}));
            } else {
                println!(
                    "wrote {} shares ({threshold} needed) to {}",
                    names.len(),
                    out_dir.display()
                );
            }
        }
        CeremonyCmd::Combine { shares, threshold, out } => {
            let mk = load_master_key(&KeySource {
                master_key: None,
                share: shares,
                threshold,
            })?;
            write(&out, &mk.to_file_bytes())?;
            let id = hex::encode(mk.ceremony_id().0);
            if json {
                println!("{}", json!({"ceremony_id": id, "out": out}));
            } else {
                println!("rebuilt master key of ceremony {id} into {}", out.display());
            }
        }
    }
    Ok(())
}

fn derive(args: DeriveArgs, json: bool) -> Result<()> {
    let mk = load_master_key(&args.key)?;
    let interval = TimeInterval::new(args.start_day, args.end_day)?;
    let deriver = KeyDeriver::new(&mk).with_length(DerivedLength::bits(args.bits)?);
    let g = deriver.derive(&args.geocode, &interval);
    let key = if args.reveal {
        hex::encode(g.material())
    } else {
        "<redacted; pass --reveal>".to_string()
    };
    if json {
        println!(
            "{}",
            json!({"geocode": args.geocode, "interval": interval, "bits": args.bits, "key": key})
        );
    } else {
        println!("{} {} {}", args.geocode, interval, key);
    }
    Ok(())
}

fn enumerate(args: EnumerateArgs, json: bool) -> Result<()> {
    let limit = args.limit.map_or(CELL_COUNT, |l| l.min(CELL_COUNT));
    if args.count_only {
        let n = enumerate_all().take(limit as usize).count();
        if json {
            println!("{}", json!({"count": n}));
        } else {
            println!("{n}");
        }
        return Ok(());
    }
    let mut out = BufWriter::new(io::stdout().lock());
    for code in enumerate_all().take(limit as usize) {
        writeln!(out, "{code}")?;
    }
    out.flush()?;
    Ok(())
}

fn cover(cmd: CoverCmd, json: bool) -> Result<()> {
    let cells: Vec<_> = match cmd {
        CoverCmd::Route { waypoints, step_m } => cover_route(&waypoints, step_m)?,
        CoverCmd::Area { vertices, interior } => {
            let m = if interior {
                Membership::Interior
            } else {
                Membership::Closed
            };
            cover_area_with(&vertices, m)?.into_iter().collect()
        }
    };
    if json {
        println!("{}", json!({"count": cells.len(), "cells": cells}));
    } else {
        for c in &cells {
            println!("{c}");
        }
    }
    Ok(())
}

fn keystore(cmd: KeystoreCmd, json: bool) -> Result<()> {
    match cmd {
        KeystoreCmd::Import { store, bundle } => {
            let s = KeyStore::open(&store)?;
            let summary = s.import_bundle(&read(&bundle)?)?;
            if json {
                println!(
                    "{}",
                    json!({"records": summary.records, "added": summary.added, "replaced": summary.replaced, "total": s.len()})
                );
            } else {
                println!(
                    "imported {} records ({} new, {} replaced); store holds {}",
                    summary.records,
                    summary.added,
                    summary.replaced,
                    s.len()
                );
            }
        }
        KeystoreCmd::Export { store, licensee, out } => {
            let bundle = KeyStore::open(&store)?.export(licensee);
            write(&out, &bundle.to_bytes())?;
            if json {
                println!("{}", json!({"records": bundle.records.len(), "out": out}));
            } else {
                println!("exported {} records to {}", bundle.records.len(), out.display());
            }
        }
        KeystoreCmd::Lookup {
            store,
            geocode,
            day,
            reveal,
        } => {
            let s = KeyStore::open(&store)?;
            let Some(g) = s.lookup(&geocode, day) else {
                bail!("no key for {geocode} on day {day}");
            };
            let key = if reveal {
                hex::encode(g.key())
            } else {
                "<redacted>".into()
            };
            if json {
                println!("{}", json!({"geocode": geocode, "interval": g.interval, "key": key}));
            } else {
                println!("{geocode} {} {key}", g.interval);
            }
        }
        KeystoreCmd::Prune { store, day } => {
            let s = KeyStore::open(&store)?;
            let removed = s.prune_expired(day)?;
            if json {
                println!("{}", json!({"removed": removed, "remaining": s.len()}));
            } else {
                println!("removed {removed} expired keys; {} remain", s.len());
            }
        }
        KeystoreCmd::Size { cells, epochs } => {
            let records = cells.checked_mul(epochs).context("record count overflows")?;
            let bytes = size_report(records);
            let fits = bytes < STORAGE_BUDGET_BYTES;
            if json {
                println!("{}", json!({"records": records, "bytes": bytes, "under_7gb": fits}));
            } else {
                println!(
                    "{records} records, {bytes} bytes ({:.2} GB), under 7 GB: {fits}",
                    bytes as f64 / 1e9
                );
            }
        }
    }
    Ok(())
}

fn authority(cmd: AuthorityCmd, json: bool) -> Result<()> {
    match cmd {
        AuthorityCmd::Serve { config } => {
            let cfg = ServiceConfig::load(&config)?;
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(async {
                let server = AuthorityServer::from_config(&cfg).await?;
                eprintln!("listening on {}", server.local_addr()?);
                server
                    .run_until(async {
                        let _ = tokio::signal::ctrl_c().await;
                    })
                    .await?;
                anyhow::Ok(())
            })?;
        }
        AuthorityCmd::Issue {
            key,
            licensee,
            area,
            start_day,
            end_day,
            purpose,
            audit_log,
            out,
        } => {
            let area = if area.cells.is_empty() {
                ensure!(area.vertices.len() >= 3, "pass --cell or at least three --vertex");
                Area::Polygon(area.vertices)
            } else {
                Area::Cells(area.cells)
            };
            let req = LicenseRequest {
                licensee,
                area,
                span: Span { start_day, end_day },
                purpose,
            };
            let bundle = offline_authority(&key, &audit_log)?.issue(&req)?;
            finish_bundle(&bundle, &out, json)?;
        }
        AuthorityCmd::Delegate {
            key,
            subauthority,
            cells,
            start_day,
            end_day,
            audit_log,
            out,
        } => {
            let d = Delegation {
                subauthority,
                cells: cells.into_iter().collect(),
                span: Span { start_day, end_day },
            };
            let bundle = offline_authority(&key, &audit_log)?.delegate(&d)?;
            finish_bundle(&bundle, &out, json)?;
        }
    }
    Ok(())
}

fn offline_authority(key: &KeySource, audit_log: &Path) -> Result<Authority> {
    let mk = load_master_key(key)?;
    let log = AuditLog::open(audit_log).with_context(|| format!("opening {}", audit_log.display()))?;
    Ok(Authority::with_master_key(&mk, Arc::new(log)))
}

fn finish_bundle(bundle: &Bundle, out: &Path, json: bool) -> Result<()> {
    let bytes = bundle.to_bytes();
    write(out, &bytes)?;
    if json {
        println!(
            "{}",
            json!({"licensee": bundle.licensee, "records": bundle.records.len(), "bytes": bytes.len()})
        );
    } else {
        println!(
            "wrote {} records ({} bytes) for {} to {}",
            bundle.records.len(),
            bytes.len(),
            bundle.licensee,
            out.display()
        );
    }
    Ok(())
}

/// Built-in scenarios need a master key; without one they use the all-zero
/// test key so they can run anywhere.
fn sim_deriver(key: &KeySource) -> Result<KeyDeriver> {
    if key.master_key.is_none() && key.share.is_empty() {
        eprintln!("note: no key source given; using the all-zero test master key");
        return Ok(KeyDeriver::new(&MasterKey::from_bytes([0; 255], CeremonyId::default())));
    }
    Ok(KeyDeriver::new(&load_master_key(key)?))
}

fn sim(cmd: SimCmd) -> Result<()> {
    let SimCmd::Run {
        spec,
        builtin,
        cell,
        start_day,
        transcript,
        key,
    } = cmd;
    let spec = match (spec, builtin) {
        (Some(path), _) => ScenarioSpec::load(&path).with_context(|| format!("loading {}", path.display()))?,
        (None, Some(name)) => {
            let b: Builtin = name.parse().map_err(anyhow::Error::msg)?;
            b.build(&sim_deriver(&key)?, cell, start_day)?
        }
        (None, None) => bail!("pass --spec or --builtin"),
    };
    let sim = Simulation::new(&spec)?;
    let metrics = match transcript {
        Some(path) => {
            let f = fs::File::create(&path).with_context(|| format!("creating {}", path.display()))?;
            let mut w = BufWriter::new(f);
            let m = sim.run(&mut w)?;
            w.flush()?;
            m
        }
        None => sim.run(&mut io::sink())?,
    };
    writeln!(io::stdout(), "{}", metrics.to_json())?;
    Ok(())
}

fn bench(cmd: BenchCmd, json: bool) -> Result<()> {
    let BenchCmd::Keyspace { cells, key } = cmd;
    let deriver = sim_deriver(&key)?;
    let interval = TimeInterval::new(0, 60)?;
    let started = Instant::now();
    let (sink, records) = stream_keyspace(&deriver, &interval, EntityId([0; 16]), cells, CountingSink::default())?;
    let elapsed = started.elapsed().as_secs_f64();
    let fits = sink.0 < STORAGE_BUDGET_BYTES;
    let rate = records as f64 / elapsed.max(1e-9);
    if json {
        println!(
            "{}",
            json!({"records": records, "bytes": sink.0, "elapsed_s": elapsed, "keys_per_s": rate, "under_7gb": fits})
        );
    } else {
        println!(
            "{records} records, {} bytes in {elapsed:.2} s ({rate:.0} keys/s), under 7 GB: {fits}",
            sink.0
        );
    }
    Ok(())
}

/// Discards bytes, counting them.
#[derive(Default)]
struct CountingSink(u64);

impl Write for CountingSink {
    fn write(&mut self, buf: &[u8]) -> io::Result<usize> {
        self.0 += buf.len() as u64;
        Ok(buf.len())
    }

    fn flush(&mut self) -> io::Result<()> {
        Ok(())
    }
}
