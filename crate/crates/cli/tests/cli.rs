//! End-to-end runs of the `geokey` binary with golden outputs.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use geokey_core::secrets::{CeremonyId, MasterKey};
use serde_json::Value;
use tempfile::TempDir;

const GOLDEN_ZERO_KEY: &str = "00cccf4b5a7069cda300e4d957bc9e1a844a5bba3183918609cb023458d7bfb1";
const LICENSEE: &str = "0102030405060708090a0b0c0d0e0f10";

fn geokey(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_geokey"))
        .args(args)
        .output()
        .expect("spawn geokey")
}

fn stdout(o: &Output) -> String {
    assert!(o.status.success(), "failed: {}", String::from_utf8_lossy(&o.stderr));
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn zero_key_file(dir: &TempDir) -> PathBuf {
    let path = dir.path().join("zero.key");
    let mk = MasterKey::from_bytes([0; 255], CeremonyId::default());
    std::fs::write(&path, mk.to_file_bytes()).unwrap();
    path
}

#[test]
fn derive_prints_golden_key_only_when_revealed() {
    let dir = TempDir::new().unwrap();
    let key = zero_key_file(&dir);
    let base = [
        "derive",
        "--master-key",
        s(&key),
        "--geocode",
        "222222",
        "--start-day",
        "0",
        "--end-day",
        "60",
    ];
    let shown = stdout(&geokey(&[&base[..], &["--reveal"]].concat()));
    assert_eq!(shown, format!("222222 [0, 60) {GOLDEN_ZERO_KEY}\n"));
    let hidden = stdout(&geokey(&base));
    assert!(!hidden.contains(GOLDEN_ZERO_KEY));
    assert!(hidden.contains("redacted"));
    let json: Value =
        serde_json::from_str(&stdout(&geokey(&[&["--json"], &base[..], &["--reveal"]].concat()))).unwrap();
    assert_eq!(json["key"], GOLDEN_ZERO_KEY);
}

#[test]
fn usage_and_operational_errors_have_distinct_exit_codes() {
    let bad_code = geokey(&["derive", "--geocode", "ZZ", "--start-day", "0", "--end-day", "60"]);
    assert_eq!(bad_code.status.code(), Some(2));

    let missing = geokey(&[
        "derive",
        "--master-key",
        "/nonexistent/key",
        "--geocode",
        "222222",
        "--start-day",
        "0",
        "--end-day",
        "60",
    ]);
    assert_eq!(missing.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&missing.stderr).starts_with("error: "));

    let dir = TempDir::new().unwrap();
    let key = zero_key_file(&dir);
    let too_long = geokey(&[
        "derive",
        "--master-key",
        s(&key),
        "--geocode",
        "222222",
        "--start-day",
        "0",
        "--end-day",
        "61",
    ]);
    assert_eq!(too_long.status.code(), Some(1));
}

#[test]
fn ceremony_shares_rebuild_the_assembled_key() {
    let dir = TempDir::new().unwrap();
    let mut assemble = vec!["ceremony".to_string(), "assemble".into()];
    for p in 1..=11 {
        let path = dir.path().join(format!("c{p}.bin"));
        let material = format!("{:046x}", p * 0x1234567);
        stdout(&geokey(&[
            "ceremony",
            "contribute",
            "--participant",
            &p.to_string(),
            "--entropy-bits",
            "35",
            "--material-hex",
            &material,
            "--out",
            s(&path),
        ]));
        assemble.extend(["--contribution".into(), s(&path).into()]);
    }
    let out = dir.path().join("out");
    assemble.extend([
        "--out-dir".into(),
        s(&out).into(),
        "--ceremony-nonce".into(),
        "00112233445566778899aabbccddeeff".into(),
    ]);
    let args: Vec<&str> = assemble.iter().map(String::as_str).collect();
    let text = stdout(&geokey(&args));
    assert!(text.contains("total entropy: 385 bits"), "{text}");
    assert!(text.contains("ceremony 00112233445566778899aabbccddeeff"));

    let rebuilt = dir.path().join("rebuilt.key");
    let mut combine = vec!["ceremony", "combine", "--out", s(&rebuilt)];
    let shares: Vec<PathBuf> = [2, 4, 6, 8, 10, 11]
        .iter()
        .map(|i| out.join(format!("share-{i:02}.bin")))
        .collect();
    for p in &shares {
        combine.extend(["--share", s(p)]);
    }
    stdout(&geokey(&combine));

    let derive = |key: &Path| {
        stdout(&geokey(&[
            "derive",
            "--master-key",
            s(key),
            "--geocode",
            "6FG222",
            "--start-day",
            "5",
            "--end-day",
            "65",
            "--reveal",
        ]))
    };
    assert_eq!(derive(&rebuilt), derive(&out.join("master.key")));

    let five = geokey(&combine[..combine.len() - 2]);
    assert_eq!(five.status.code(), Some(1));
}

#[test]
fn issued_bundle_imports_and_looks_up() {
    let dir = TempDir::new().unwrap();
    let key = zero_key_file(&dir);
    let bundle = dir.path().join("b.geok");
    let audit = dir.path().join("audit.log");
    let issued = stdout(&geokey(&[
        "authority",
        "issue",
        "--master-key",
        s(&key),
        "--licensee",
        LICENSEE,
        "--cell",
        "222222",
        "--cell",
        "222223",
        "--start-day",
        "0",
        "--end-day",
        "120",
        "--purpose",
        "survey",
        "--audit-log",
        s(&audit),
        "--out",
        s(&bundle),
    ]));
    assert!(issued.starts_with("wrote 4 records (217 bytes)"), "{issued}");
    assert_eq!(std::fs::metadata(&bundle).unwrap().len(), 33 + 46 * 4);
    let log = std::fs::read_to_string(&audit).unwrap();
    assert!(log.contains("survey") && !log.contains(GOLDEN_ZERO_KEY));

    let store = dir.path().join("store.geok");
    let imported = stdout(&geokey(&[
        "keystore",
        "import",
        "--store",
        s(&store),
        "--bundle",
        s(&bundle),
    ]));
    assert_eq!(imported, "imported 4 records (4 new, 0 replaced); store holds 4\n");
    let found = stdout(&geokey(&[
        "keystore",
        "lookup",
        "--store",
        s(&store),
        "--geocode",
        "222222",
        "--day",
        "59",
        "--reveal",
    ]));
    assert_eq!(found, format!("222222 [0, 60) {GOLDEN_ZERO_KEY}\n"));
    let none = geokey(&[
        "keystore",
        "lookup",
        "--store",
        s(&store),
        "--geocode",
        "222224",
        "--day",
        "59",
    ]);
    assert_eq!(none.status.code(), Some(1));

    let pruned = stdout(&geokey(&["keystore", "prune", "--store", s(&store), "--day", "60"]));
    assert_eq!(pruned, "removed 2 expired keys; 2 remain\n");
}

#[test]
fn enumerate_size_and_cover() {
    assert_eq!(
        stdout(&geokey(&["enumerate", "--limit", "3"])),
        "222222\n222223\n222224\n"
    );
    assert_eq!(stdout(&geokey(&["enumerate", "--count-only", "--limit", "21"])), "21\n");
    let size = stdout(&geokey(&["keystore", "size"]));
    assert_eq!(size, "25920000 records, 1192320033 bytes (1.19 GB), under 7 GB: true\n");

    let route: Value = serde_json::from_str(&stdout(&geokey(&[
        "--json",
        "cover",
        "route",
        "--waypoint",
        "0.01,0.01",
        "--waypoint",
        "0.01,0.2",
    ])))
    .unwrap();
    assert_eq!(route["count"], 5);
    assert_eq!(route["cells"][0], "6FG222");

    let area = stdout(&geokey(&[
        "cover",
        "area",
        "--interior",
        "--vertex",
        "0,0",
        "--vertex",
        "0,0.1",
        "--vertex",
        "0.1,0.1",
        "--vertex",
        "0.1,0",
    ]));
    assert_eq!(area.lines().count(), 4);
    let closed = stdout(&geokey(&[
        "cover", "area", "--vertex", "0,0", "--vertex", "0,0.1", "--vertex", "0.1,0.1", "--vertex", "0.1,0",
    ]));
    // Boundary lines at 0 and 0.1 also touch the surrounding ring of cells.
    assert_eq!(closed.lines().count(), 16);
}

#[test]
fn sim_builtin_and_spec_file() {
    let dir = TempDir::new().unwrap();
    let transcript = dir.path().join("t.txt");
    let out = geokey(&[
        "sim",
        "run",
        "--builtin",
        "adversary",
        "--cell",
        "6FG222",
        "--transcript",
        s(&transcript),
    ]);
    let m: Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(m["per_cell"]["6FG222"]["accepted"], 1000);
    assert_eq!(m["per_cell"]["6FG223"]["accepted"], 0);
    assert!(String::from_utf8_lossy(&out.stderr).contains("all-zero test master key"));
    let lines = std::fs::read_to_string(&transcript).unwrap();
    assert!(lines.lines().any(|l| l.contains("outcome=rejected:bad-mac")));

    let key = zero_key_file(&dir);
    let bundle = dir.path().join("b.geok");
    stdout(&geokey(&[
        "authority",
        "issue",
        "--master-key",
        s(&key),
        "--licensee",
        LICENSEE,
        "--cell",
        "6FG222",
        "--start-day",
        "100",
        "--end-day",
        "160",
        "--audit-log",
        s(&dir.path().join("audit.log")),
        "--out",
        s(&bundle),
    ]));
    let store = dir.path().join("auv.geok");
    stdout(&geokey(&[
        "keystore",
        "import",
        "--store",
        s(&store),
        "--bundle",
        s(&bundle),
    ]));
    let spec = dir.path().join("pair.toml");
    std::fs::write(
        &spec,
        r#"version = 1
seed = 4
duration_s = 300.0
start_day = 100
challenge_interval_s = 30.0

[[assets]]
name = "buoy"
role = "verifier"
position = [0.025, 0.025]
keystore = "auv.geok"

[[assets]]
name = "auv"
role = "prover"
position = [0.03, 0.03]
keystore = "auv.geok"
"#,
    )
    .unwrap();
    let m: Value = serde_json::from_str(&stdout(&geokey(&["sim", "run", "--spec", s(&spec)]))).unwrap();
    assert_eq!(m["challenges"], 9);
    assert_eq!(m["accepted"], 9);

    assert_eq!(geokey(&["sim", "run", "--builtin", "nope"]).status.code(), Some(1));
}

#[test]
fn bench_keyspace_reports_counts() {
    let out: Value =
        serde_json::from_str(&stdout(&geokey(&["--json", "bench", "keyspace", "--cells", "5000"]))).unwrap();
    assert_eq!(out["records"], 5000);
    assert_eq!(out["bytes"], 33 + 46 * 5000);
    assert_eq!(out["under_7gb"], true);
}
