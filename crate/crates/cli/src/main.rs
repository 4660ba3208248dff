//! `geokey`: operator entry points for the key ceremony, derivation, key
//! stores, the licensing authority and the authorization simulator.
//!
//! Key material is only printed with `--reveal`. Usage errors exit with 2,
//! operational errors with 1 and a reason on stderr.

mod ops;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use geokey_core::geocell::{GeoPoint, Geocode};
use geokey_core::keystore::EntityId;

#[derive(Debug, Parser)]
#[command(
    name = "geokey",
    version,
    about = "Geocoded, time-bounded keys for underwater assets"
)]
pub struct Cli {
    /// Emit machine-readable JSON instead of text.
    #[arg(long, global = true)]
    pub json: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Master-key ceremony and custody shares.
    #[command(subcommand)]
    Ceremony(CeremonyCmd),
    /// Derive the key for one cell and day interval.
    Derive(DeriveArgs),
    /// Walk every geocode on the grid.
    Enumerate(EnumerateArgs),
    /// Cells touched by a route or an area.
    #[command(subcommand)]
    Cover(CoverCmd),
    /// Local key stores and bundles.
    #[command(subcommand)]
    Keystore(KeystoreCmd),
    /// Licensing authority.
    #[command(subcommand)]
    Authority(AuthorityCmd),
    /// Authorization simulator.
    #[command(subcommand)]
    Sim(SimCmd),
    /// Throughput measurements.
    #[command(subcommand)]
    Bench(BenchCmd),
}

/// Where the master key comes from: a custody file or a quorum of shares.
#[derive(Debug, Clone, Args)]
pub struct KeySource {
    /// Master-key custody file written by `ceremony assemble` or `ceremony combine`.
    #[arg(long, conflicts_with = "share")]
    pub master_key: Option<PathBuf>,
    /// Share file; repeat for each share presented.
    #[arg(long)]
    pub share: Vec<PathBuf>,
    /// Shares required to rebuild the key.
    #[arg(long, default_value_t = geokey_core::secrets::THRESHOLD)]
    pub threshold: usize,
}

#[derive(Debug, Subcommand)]
pub enum CeremonyCmd {
    /// Write one participant's random contribution.
    Contribute {
        #[arg(long)]
        participant: u8,
        /// Entropy the participant vouches for.
        #[arg(long)]
        entropy_bits: u32,
        /// Use this material (46 hex digits) instead of fresh randomness.
        #[arg(long)]
        material_hex: Option<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Assemble the master key from all contributions and split it into shares.
    Assemble {
        #[arg(long = "contribution", required = true)]
        contributions: Vec<PathBuf>,
        #[arg(long)]
        out_dir: PathBuf,
        /// 32 hex digits naming the ceremony; random when absent.
        #[arg(long)]
        ceremony_nonce: Option<String>,
        #[arg(long, default_value_t = geokey_core::secrets::THRESHOLD)]
        threshold: usize,
        #[arg(long, default_value_t = geokey_core::secrets::PARTICIPANTS)]
        shares: usize,
    },
    /// Split an existing master key into fresh shares.
    Split {
        #[arg(long)]
        master_key: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long, default_value_t = geokey_core::secrets::THRESHOLD)]
        threshold: usize,
        #[arg(long, default_value_t = geokey_core::secrets::PARTICIPANTS)]
        shares: usize,
    },
    /// Rebuild the master key from shares.
    Combine {
        #[arg(long = "share", required = true)]
        shares: Vec<PathBuf>,
        #[arg(long, default_value_t = geokey_core::secrets::THRESHOLD)]
        threshold: usize,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Args)]
pub struct DeriveArgs {
    #[arg(long)]
    pub geocode: Geocode,
    #[arg(long)]
    pub start_day: u32,
    /// Exclusive; at most 60 days after the start.
    #[arg(long)]
    pub end_day: u32,
    /// Derived key length in bits.
    #[arg(long, default_value_t = 256)]
    pub bits: u32,
    /// Print the key itself.
    #[arg(long)]
    pub reveal: bool,
    #[command(flatten)]
    pub key: KeySource,
}

#[derive(Debug, Args)]
pub struct EnumerateArgs {
    /// Print only the number of cells.
    #[arg(long)]
    pub count_only: bool,
    /// Stop after this many cells.
    #[arg(long)]
    pub limit: Option<u64>,
}

#[derive(Debug, Subcommand)]
pub enum CoverCmd {
    /// Cells crossed by a great-circle route, in order of first visit.
    Route {
        /// `lat,lng`; at least two.
        #[arg(long = "waypoint", required = true, allow_hyphen_values = true)]
        waypoints: Vec<GeoPoint>,
        #[arg(long, default_value_t = geokey_core::geocell::DEFAULT_ROUTE_STEP_M)]
        step_m: f64,
    },
    /// Cells covered by a polygon.
    Area {
        /// `lat,lng`; at least three, in order around the boundary.
        #[arg(long = "vertex", required = true, allow_hyphen_values = true)]
        vertices: Vec<GeoPoint>,
        /// Only cells overlapping the interior with positive area.
        #[arg(long)]
        interior: bool,
    },
}

#[derive(Debug, Subcommand)]
pub enum KeystoreCmd {
    /// Verify a bundle and merge it into a store.
    Import {
        #[arg(long)]
        store: PathBuf,
        #[arg(long)]
        bundle: PathBuf,
    },
    /// Write the store's keys as one bundle.
    Export {
        #[arg(long)]
        store: PathBuf,
        #[arg(long)]
        licensee: EntityId,
        #[arg(long)]
        out: PathBuf,
    },
    /// Find the key for a cell on a day.
    Lookup {
        #[arg(long)]
        store: PathBuf,
        #[arg(long)]
        geocode: Geocode,
        #[arg(long)]
        day: u32,
        #[arg(long)]
        reveal: bool,
    },
    /// Drop keys whose interval ended before `day`.
    Prune {
        #[arg(long)]
        store: PathBuf,
        #[arg(long)]
        day: u32,
    },
    /// Bundle size for a number of cells and epochs.
    Size {
        #[arg(long, default_value_t = geokey_core::geocell::CELL_COUNT)]
        cells: u64,
        #[arg(long, default_value_t = 1)]
        epochs: u64,
    },
}

#[derive(Debug, Args)]
pub struct AreaArgs {
    /// Explicit cell; repeatable.
    #[arg(long = "cell", conflicts_with = "vertices")]
    pub cells: Vec<Geocode>,
    /// Polygon vertex `lat,lng`; repeatable.
    #[arg(long = "vertex", allow_hyphen_values = true)]
    pub vertices: Vec<GeoPoint>,
}

#[derive(Debug, Subcommand)]
pub enum AuthorityCmd {
    /// Run the TLS licensing service.
    Serve {
        #[arg(long)]
        config: PathBuf,
    },
    /// Issue a license bundle offline.
    Issue {
        #[command(flatten)]
        key: KeySource,
        #[arg(long)]
        licensee: EntityId,
        #[command(flatten)]
        area: AreaArgs,
        #[arg(long)]
        start_day: u32,
        #[arg(long)]
        end_day: u32,
        #[arg(long, default_value = "")]
        purpose: String,
        #[arg(long)]
        audit_log: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Hand a sub-authority the keys for a set of cells.
    Delegate {
        #[command(flatten)]
        key: KeySource,
        #[arg(long)]
        subauthority: EntityId,
        #[arg(long = "cell", required = true)]
        cells: Vec<Geocode>,
        #[arg(long)]
        start_day: u32,
        #[arg(long)]
        end_day: u32,
        #[arg(long)]
        audit_log: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Subcommand)]
pub enum SimCmd {
    /// Run a scenario file or a built-in scenario; prints the metrics summary.
    Run {
        #[arg(long, conflicts_with = "builtin", required_unless_present = "builtin")]
        spec: Option<PathBuf>,
        /// stationary, submarine, adversary or rekey.
        #[arg(long)]
        builtin: Option<String>,
        /// Cell the built-in scenario is centred on.
        #[arg(long, default_value = "6FG222")]
        cell: Geocode,
        #[arg(long, default_value_t = 20000)]
        start_day: u32,
        /// Write one line per exchange here.
        #[arg(long)]
        transcript: Option<PathBuf>,
        #[command(flatten)]
        key: KeySource,
    },
}

#[derive(Debug, Subcommand)]
pub enum BenchCmd {
    /// Derive one epoch of keys for the grid and stream the bundle to a counter.
    Keyspace {
        /// Number of cells; the whole grid by default.
        #[arg(long)]
        cells: Option<u64>,
        #[command(flatten)]
        key: KeySource,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match ops::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
