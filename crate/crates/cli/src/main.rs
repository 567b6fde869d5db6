use std::io::{self, Write};
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use otfs_im::bounds::{write_bound_csv, BoundConfig};
use otfs_im::detect::{DetectorKind, LlrForm};
use otfs_im::frame::{Modulation, Scheme};
use otfs_im::harness::{
    attach_bounds, compare, parse_snr_list, run_sweep, with_scheme, write_records, write_records_to, BerRecord,
    SimConfig, TableFormat,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// BER simulation and union bounds for index-modulated OTFS.
#[derive(Parser)]
#[command(name = "otfs-im", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Monte Carlo BER over an SNR grid.
    Sweep {
        #[command(flatten)]
        sim: SimArgs,
        /// Add a union-bound column.
        #[arg(long)]
        with_bound: bool,
        #[command(flatten)]
        bound: BoundArgs,
    },
    /// Analytical union bound on the BER.
    Bound {
        #[command(flatten)]
        sim: SimArgs,
        #[command(flatten)]
        bound: BoundArgs,
    },
    /// Sweeps several schemes and detectors into one table. RandomIM gets
    /// the activation count that matches the base spectral efficiency.
    Compare {
        #[command(flatten)]
        sim: SimArgs,
        /// Schemes to compare.
        #[arg(long, value_delimiter = ',', default_value = "deim,doim,randim")]
        schemes: Vec<Scheme>,
        /// Detectors to compare (defaults to the configured one).
        #[arg(long, value_delimiter = ',')]
        detectors: Vec<DetectorKind>,
    },
}

#[derive(Args)]
struct BoundArgs {
    /// Path geometries averaged by the bound.
    #[arg(long, default_value_t = BoundConfig::default().geometry_draws)]
    draws: usize,
    /// Use the high-SNR pairwise error form.
    #[arg(long)]
    high_snr: bool,
}

impl BoundArgs {
    fn config(&self) -> BoundConfig {
        BoundConfig { geometry_draws: self.draws, high_snr: self.high_snr, ..Default::default() }
    }
}

/// Experiment flags. Each overrides the config file or preset.
#[derive(Args)]
struct SimArgs {
    /// TOML experiment file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Start from the 64 x 16 frame instead of the 4 x 4 desk frame.
    #[arg(long)]
    long_run: bool,
    #[arg(long)]
    scheme: Option<Scheme>,
    #[arg(long)]
    detector: Option<DetectorKind>,
    /// `start:step:stop` or a comma list; `inf` switches noise off.
    #[arg(long, allow_hyphen_values = true)]
    snr_db: Option<String>,
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    mhat: Option<usize>,
    #[arg(long)]
    nhat: Option<usize>,
    #[arg(long)]
    khat: Option<usize>,
    #[arg(long = "mod")]
    modulation: Option<Modulation>,
    #[arg(long)]
    velocity_kmph: Option<f64>,
    /// Number of channel paths.
    #[arg(long)]
    paths: Option<usize>,
    #[arg(long)]
    csi_eps: Option<f64>,
    #[arg(long)]
    prune_eps: Option<f64>,
    #[arg(long)]
    damping: Option<f64>,
    #[arg(long)]
    max_iters: Option<usize>,
    #[arg(long)]
    llr: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Frame errors that end an SNR point.
    #[arg(long)]
    min_errors: Option<u64>,
    /// Frame limit per SNR point.
    #[arg(long)]
    frames: Option<u64>,
    /// Omit wall-clock time so equal runs give equal bytes.
    #[arg(long)]
    no_timing: bool,
    /// Write tab-separated plot data instead of CSV.
    #[arg(long)]
    plot_data: bool,
    /// Output file (stdout when absent).
    #[arg(long)]
    out: Option<PathBuf>,
}

impl SimArgs {
    fn resolve(&self) -> Result<SimConfig> {
        let mut sim = match (&self.config, self.long_run) {
            (Some(path), _) => {
                SimConfig::from_file(path).with_context(|| format!("reading {}", path.display()))?
            }
            (None, true) => SimConfig::long_run(),
            (None, false) => SimConfig::desk(self.scheme.unwrap_or(Scheme::Deim)),
        };
        macro_rules! set {
            ($($flag:ident => $field:ident),*) => {$(
                if let Some(v) = self.$flag.clone() {
                    sim.$field = v;
                }
            )*};
        }
        set!(scheme => scheme, detector => detector, m => m, n => n, mhat => m_hat, nhat => n_hat,
             khat => k_hat, modulation => modulation, velocity_kmph => velocity_kmph, paths => paths,
             csi_eps => csi_eps, prune_eps => prune_eps, damping => damping, max_iters => max_iters,
             seed => seed, min_errors => min_frame_errors, frames => max_frames);
        if let Some(s) = &self.snr_db {
            sim.snr_db = parse_snr_list(s)?;
        }
        if let Some(l) = &self.llr {
            sim.llr = match l.as_str() {
                "sum" => LlrForm::Sum,
                "product" => LlrForm::Product,
                other => bail!("unknown LLR form `{other}` (expected sum or product)"),
            };
        }
        if self.no_timing {
            sim.record_time = false;
        }
        if self.out.is_some() {
            sim.out = self.out.clone();
        }
        sim.validate()?;
        Ok(sim)
    }

    fn format(&self) -> TableFormat {
        if self.plot_data { TableFormat::Tsv } else { TableFormat::Csv }
    }
}

fn emit(sim: &SimConfig, records: &[BerRecord], format: TableFormat) -> Result<()> {
    match &sim.out {
        Some(path) => write_records_to(path, records, format)?,
        None => write_records(io::stdout().lock(), records, format)?,
    }
    Ok(())
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Sweep { sim, with_bound, bound } => {
            let cfg = sim.resolve()?;
            let mut records = run_sweep(&cfg)?;
            if with_bound {
                attach_bounds(&mut records, &cfg, &bound.config())?;
            }
            emit(&cfg, &records, sim.format())
        }
        Command::Bound { sim, bound } => {
            let cfg = sim.resolve()?;
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            let points = otfs_im::bounds::union_bound(&cfg.frame()?, &cfg.channel(), &cfg.snr_db, &bound.config(), &mut rng)?;
            match &cfg.out {
                Some(path) => write_bound_csv(std::fs::File::create(path)?, &points)?,
                None => write_bound_csv(io::stdout().lock(), &points)?,
            }
            Ok(())
        }
        Command::Compare { sim, schemes, detectors } => {
            let base = sim.resolve()?;
            let detectors = if detectors.is_empty() { vec![base.detector] } else { detectors };
            let mut runs = Vec::new();
            for &scheme in &schemes {
                for &detector in &detectors {
                    runs.push(SimConfig { detector, ..with_scheme(&base, scheme)? });
                }
            }
            let records = compare(&runs)?;
            emit(&base, &records, sim.format())?;
            io::stdout().flush()?;
            Ok(())
        }
    }
}
