//! Monte Carlo BER engine.
//!
//! Every frame draws its payload, channel and noise from its own ChaCha
//! stream keyed by `(seed, frame index)`, so results do not depend on the
//! worker count, and SNR points (or CSI error levels) of one sweep see the
//! same payloads, channels and normalized noise.

use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bounds::{union_bound, BoundConfig};
use crate::channel::{apply_time_domain, build_effective, noise_variance, perturb_csi, ChannelModel};
use crate::detect::{candidate_count, detect, DetectorConfig, DetectorKind, LlrForm};
use crate::error::{Error, Result};
use crate::frame::{FrameConfig, Modulation, Scheme};
use crate::immap::{BitPayload, IndexModulator};
use crate::modem::{add_cp, Modem};

/// Noise variance the detectors assume when noise is switched off.
pub const NOISELESS_SIGMA2: f64 = 1e-12;

/// One experiment: frame layout, channel, detector, SNR grid and stop rule.
/// An SNR of `inf` switches the noise off.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub m: usize,
    pub n: usize,
    pub m_hat: usize,
    pub n_hat: usize,
    pub k_hat: usize,
    pub scheme: Scheme,
    pub modulation: Modulation,
    pub delta_f: f64,
    pub carrier_hz: f64,
    pub snr_db: Vec<f64>,
    pub velocity_kmph: f64,
    pub paths: usize,
    /// Maximum path delay in samples.
    pub max_delay_samples: f64,
    pub rolloff: f64,
    pub span_taps: usize,
    pub detector: DetectorKind,
    pub damping: f64,
    pub slack: f64,
    pub max_iters: usize,
    pub ml_cap: u64,
    pub llr: LlrForm,
    /// Relative CSI error radius.
    pub csi_eps: f64,
    /// Row energy fraction the detector may discard from `H`.
    pub prune_eps: f64,
    pub seed: u64,
    pub min_frame_errors: u64,
    pub max_frames: u64,
    /// Frames simulated per parallel batch.
    pub batch: usize,
    /// Record wall-clock seconds (off for byte-reproducible output).
    pub record_time: bool,
    pub out: Option<PathBuf>,
}

impl Default for SimConfig {
    fn default() -> Self {
        let det = DetectorConfig::default();
        let ch = ChannelModel::default();
        SimConfig {
            m: 4,
            n: 4,
            m_hat: 4,
            n_hat: 4,
            k_hat: 1,
            scheme: Scheme::Deim,
            modulation: Modulation::Qpsk,
            delta_f: 15e3,
            carrier_hz: 4e9,
            snr_db: (0..=8).map(|i| 2.0 * i as f64).collect(),
            velocity_kmph: ch.velocity_kmph,
            paths: ch.paths,
            max_delay_samples: ch.max_delay_samples,
            rolloff: ch.rolloff,
            span_taps: ch.span_taps,
            detector: det.kind,
            damping: det.damping,
            slack: det.slack,
            max_iters: det.max_iters,
            ml_cap: det.ml_cap,
            llr: det.llr,
            csi_eps: 0.0,
            prune_eps: 1e-4,
            seed: 1,
            min_frame_errors: 200,
            max_frames: 1_000_000,
            batch: 256,
            record_time: true,
            out: None,
        }
    }
}

impl SimConfig {
    /// The 4 x 4 configuration with `M_hat = N_hat = 4` at spectral
    /// efficiency 0.625 (RandomIM activates 2 of 16 units).
    pub fn desk(scheme: Scheme) -> Self {
        let k_hat = if scheme == Scheme::Randim { 2 } else { 1 };
        SimConfig { scheme, k_hat, ..Default::default() }
    }

    /// Full-size 64 x 16 frame with 4 x 4 subframes and one active block.
    pub fn long_run() -> Self {
        SimConfig { m: 64, n: 16, detector: DetectorKind::Mljsapd, ..Default::default() }
    }

    pub fn frame(&self) -> Result<FrameConfig> {
        FrameConfig::new(
            self.m,
            self.n,
            self.m_hat,
            self.n_hat,
            self.k_hat,
            self.scheme,
            self.modulation,
            self.delta_f,
            self.carrier_hz,
        )
    }

    pub fn channel(&self) -> ChannelModel {
        ChannelModel {
            paths: self.paths,
            velocity_kmph: self.velocity_kmph,
            max_delay_samples: self.max_delay_samples,
            rolloff: self.rolloff,
            span_taps: self.span_taps,
        }
    }

    pub fn detector_config(&self) -> DetectorConfig {
        DetectorConfig {
            kind: self.detector,
            damping: self.damping,
            slack: self.slack,
            max_iters: self.max_iters,
            ml_cap: self.ml_cap,
            llr: self.llr,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.frame()?;
        self.detector_config().validate()?;
        if self.paths == 0 {
            return Err(Error::config("at least one path is required"));
        }
        if self.min_frame_errors == 0 || self.max_frames == 0 || self.batch == 0 {
            return Err(Error::config("min_frame_errors, max_frames and batch must be positive"));
        }
        if !(self.csi_eps >= 0.0) {
            return Err(Error::config(format!("csi_eps must be nonnegative, got {}", self.csi_eps)));
        }
        if !(0.0..1.0).contains(&self.prune_eps) {
            return Err(Error::config(format!("prune_eps must lie in [0, 1), got {}", self.prune_eps)));
        }
        if self.max_delay_samples < 0.0 || !(0.0..=1.0).contains(&self.rolloff) {
            return Err(Error::config("delay spread must be nonnegative and rolloff in [0, 1]"));
        }
        if self.snr_db.iter().any(|s| s.is_nan()) {
            return Err(Error::config("SNR values must be numbers"));
        }
        Ok(())
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        Self::from_toml_str(&fs::read_to_string(path)?)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }
}

/// `base` with its scheme replaced. For RandomIM, `k_hat` is chosen so the
/// payload size matches `base` as closely as possible (smallest `k_hat` on
/// ties).
pub fn with_scheme(base: &SimConfig, scheme: Scheme) -> Result<SimConfig> {
    let target = IndexModulator::new(&base.frame()?)?.payload_bits() as i64;
    let mut sim = SimConfig { scheme, ..base.clone() };
    if scheme == Scheme::Randim && base.scheme != Scheme::Randim {
        let units = base.m_hat * base.n_hat;
        let mut best: Option<(i64, usize)> = None;
        for k in 1..units {
            let cand = SimConfig { k_hat: k, ..sim.clone() };
            let Ok(m) = cand.frame().and_then(|c| IndexModulator::new(&c)) else { continue };
            let gap = (m.payload_bits() as i64 - target).abs();
            if best.is_none_or(|(g, _)| gap < g) {
                best = Some((gap, k));
            }
        }
        sim.k_hat = best.ok_or_else(|| Error::config("no RandomIM activation fits this frame"))?.1;
    } else if scheme != Scheme::Randim && base.scheme == Scheme::Randim {
        sim.k_hat = 1;
    }
    sim.frame()?;
    Ok(sim)
}

/// Parses `start:step:stop` (inclusive) or a comma-separated list.
pub fn parse_snr_list(spec: &str) -> Result<Vec<f64>> {
    let num = |s: &str| s.trim().parse::<f64>().map_err(|e| Error::Parse(format!("bad SNR `{s}`: {e}")));
    let parts: Vec<&str> = spec.split(':').collect();
    match parts.len() {
        1 => spec.split(',').map(num).collect(),
        3 => {
            let (start, step, stop) = (num(parts[0])?, num(parts[1])?, num(parts[2])?);
            if !(step > 0.0) || stop < start {
                return Err(Error::Parse(format!("empty SNR range `{spec}`")));
            }
            let count = ((stop - start) / step + 1e-9).floor() as usize + 1;
            Ok((0..count).map(|i| start + step * i as f64).collect())
        }
        _ => Err(Error::Parse(format!("SNR range must be start:step:stop, got `{spec}`"))),
    }
}

/// Aggregate result of one SNR point.
#[derive(Clone, Debug, PartialEq)]
pub struct BerRecord {
    pub snr_db: f64,
    pub scheme: Scheme,
    pub detector: DetectorKind,
    pub frames: u64,
    pub bit_errors: u64,
    pub index_bit_errors: u64,
    pub symbol_bit_errors: u64,
    pub ber: f64,
    /// Index-bit errors over all payload bits, so `index_ber + symbol_ber
    /// = ber`.
    pub index_ber: f64,
    pub symbol_ber: f64,
    pub mean_iters: f64,
    pub seconds: f64,
    pub union_bound: Option<f64>,
}

/// What happened to one frame.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FrameOutcome {
    pub index_bit_errors: u64,
    pub symbol_bit_errors: u64,
    pub iterations: usize,
    /// Whether every posterior reached the confidence threshold.
    pub converged: bool,
}

impl FrameOutcome {
    pub fn bit_errors(&self) -> u64 {
        self.index_bit_errors + self.symbol_bit_errors
    }
}

/// Per-configuration state shared by all frames.
pub struct Simulator {
    sim: SimConfig,
    cfg: FrameConfig,
    modulator: IndexModulator,
    modem: Modem,
    model: ChannelModel,
    dcfg: DetectorConfig,
}

impl Simulator {
    pub fn new(sim: &SimConfig) -> Result<Self> {
        sim.validate()?;
        let cfg = sim.frame()?;
        let modulator = IndexModulator::new(&cfg)?;
        let dcfg = sim.detector_config();
        if dcfg.kind == DetectorKind::Ml {
            let count = candidate_count(&modulator);
            if count > dcfg.ml_cap as u128 {
                return Err(Error::Infeasible { what: "ML search", count, cap: dcfg.ml_cap as u128 });
            }
        }
        Ok(Simulator { modem: Modem::new(&cfg), model: sim.channel(), sim: sim.clone(), cfg, modulator, dcfg })
    }

    pub fn modulator(&self) -> &IndexModulator {
        &self.modulator
    }

    /// Simulates frame `index` at `snr_db`.
    pub fn frame(&self, snr_db: f64, index: u64) -> Result<FrameOutcome> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.sim.seed);
        rng.set_stream(index);
        let bits = BitPayload::random(self.modulator.payload_bits(), &mut rng);
        let (x, _) = self.modulator.map_bits(&bits)?;
        let paths = self.model.gen_paths(&self.cfg, &mut rng)?;
        let tx = add_cp(&self.modem.modulate(&x), paths.min_cp());
        let (snr, sigma2) = if snr_db.is_infinite() && snr_db > 0.0 {
            (None, NOISELESS_SIGMA2)
        } else {
            let g = 10f64.powf(snr_db / 10.0);
            (Some(g), noise_variance(g))
        };
        let rx = apply_time_domain(&tx, &paths, snr, &mut rng)?;
        let y: Vec<Complex64> = self.modem.demodulate(&rx)?.into_vec();
        // CSI errors are drawn last so they never shift the other draws.
        let est = perturb_csi(&paths, self.sim.csi_eps, &mut rng)?;
        let h = build_effective(&est, &self.cfg, self.sim.prune_eps).with_noise_variance(sigma2);
        let det = detect(&y, &h, &self.modulator, &self.dcfg)?;
        let (idx, sym) = self.modulator.count_errors(&bits, &det.bits);
        Ok(FrameOutcome {
            index_bit_errors: idx as u64,
            symbol_bit_errors: sym as u64,
            iterations: det.diagnostics.iterations,
            converged: det.diagnostics.final_eta >= 1.0,
        })
    }

    /// Runs frames until the stop rule fires. Frames are simulated in
    /// parallel batches and accumulated in index order, truncating at the
    /// frame that satisfies the rule.
    pub fn run_point(&self, snr_db: f64) -> Result<BerRecord> {
        let start = Instant::now();
        let (mut frames, mut frame_errors) = (0u64, 0u64);
        let (mut idx, mut sym, mut iters) = (0u64, 0u64, 0u64);
        'outer: while frames < self.sim.max_frames {
            let n = (self.sim.batch as u64).min(self.sim.max_frames - frames);
            let batch: Vec<Result<FrameOutcome>> =
                (frames..frames + n).into_par_iter().map(|i| self.frame(snr_db, i)).collect();
            for out in batch {
                let out = out?;
                frames += 1;
                idx += out.index_bit_errors;
                sym += out.symbol_bit_errors;
                iters += out.iterations as u64;
                if out.bit_errors() > 0 {
                    frame_errors += 1;
                    if frame_errors >= self.sim.min_frame_errors {
                        break 'outer;
                    }
                }
            }
        }
        let total_bits = (frames * self.modulator.payload_bits() as u64) as f64;
        Ok(BerRecord {
            snr_db,
            scheme: self.cfg.scheme,
            detector: self.dcfg.kind,
            frames,
            bit_errors: idx + sym,
            index_bit_errors: idx,
            symbol_bit_errors: sym,
            ber: (idx + sym) as f64 / total_bits,
            index_ber: idx as f64 / total_bits,
            symbol_ber: sym as f64 / total_bits,
            mean_iters: iters as f64 / frames as f64,
            seconds: if self.sim.record_time { start.elapsed().as_secs_f64() } else { 0.0 },
            union_bound: None,
        })
    }
}

pub fn run_point(sim: &SimConfig, snr_db: f64) -> Result<BerRecord> {
    Simulator::new(sim)?.run_point(snr_db)
}

/// One record per SNR, ascending.
pub fn run_sweep(sim: &SimConfig) -> Result<Vec<BerRecord>> {
    let s = Simulator::new(sim)?;
    let mut snrs = sim.snr_db.clone();
    snrs.sort_by(f64::total_cmp);
    snrs.iter().map(|&snr| s.run_point(snr)).collect()
}

/// Sweeps several configurations into one table ordered by SNR, then by
/// input order.
pub fn compare(sims: &[SimConfig]) -> Result<Vec<BerRecord>> {
    let mut rows: Vec<(usize, BerRecord)> = Vec::new();
    for (i, sim) in sims.iter().enumerate() {
        rows.extend(run_sweep(sim)?.into_iter().map(|r| (i, r)));
    }
    rows.sort_by(|a, b| a.1.snr_db.total_cmp(&b.1.snr_db).then(a.0.cmp(&b.0)));
    Ok(rows.into_iter().map(|r| r.1).collect())
}

/// Fills the `union_bound` column from the analytical bound of `sim`'s
/// configuration.
pub fn attach_bounds(records: &mut [BerRecord], sim: &SimConfig, bcfg: &BoundConfig) -> Result<()> {
    let snrs: Vec<f64> = records.iter().map(|r| r.snr_db).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(sim.seed);
    let pts = union_bound(&sim.frame()?, &sim.channel(), &snrs, bcfg, &mut rng)?;
    for (r, p) in records.iter_mut().zip(pts) {
        r.union_bound = Some(p.bound);
    }
    Ok(())
}

/// Comma-separated file or tab-separated plot data.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TableFormat {
    Csv,
    Tsv,
}

impl TableFormat {
    fn delimiter(self) -> u8 {
        match self {
            TableFormat::Csv => b',',
            TableFormat::Tsv => b'\t',
        }
    }
}

pub const COLUMNS: [&str; 10] =
    ["snr_db", "scheme", "detector", "frames", "bit_errors", "ber", "index_ber", "symbol_ber", "mean_iters", "seconds"];

pub fn write_records<W: Write>(out: W, records: &[BerRecord], format: TableFormat) -> Result<()> {
    let with_bound = records.iter().any(|r| r.union_bound.is_some());
    let mut w = csv::WriterBuilder::new().delimiter(format.delimiter()).from_writer(out);
    let mut header: Vec<&str> = COLUMNS.to_vec();
    if with_bound {
        header.push("union_bound");
    }
    w.write_record(&header)?;
    for r in records {
        let mut row = vec![
            r.snr_db.to_string(),
            r.scheme.to_string(),
            r.detector.to_string(),
            r.frames.to_string(),
            r.bit_errors.to_string(),
            r.ber.to_string(),
            r.index_ber.to_string(),
            r.symbol_ber.to_string(),
            r.mean_iters.to_string(),
            r.seconds.to_string(),
        ];
        if with_bound {
            row.push(r.union_bound.map(|b| b.to_string()).unwrap_or_default());
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads [`write_records`] output. Index and symbol error counts are
/// recovered from the BER split.
pub fn read_records<R: Read>(input: R, format: TableFormat) -> Result<Vec<BerRecord>> {
    let mut rdr = csv::ReaderBuilder::new().delimiter(format.delimiter()).from_reader(input);
    let header = rdr.headers()?.clone();
    if header.len() < COLUMNS.len() || header.iter().zip(COLUMNS).any(|(a, b)| a != b) {
        return Err(Error::Parse(format!("unexpected header {:?}", header.iter().collect::<Vec<_>>())));
    }
    let mut out = Vec::new();
    for row in rdr.records() {
        let row = row?;
        let f = |i: usize| row[i].parse::<f64>().map_err(|e| Error::Parse(format!("column {}: {e}", COLUMNS[i])));
        let u = |i: usize| row[i].parse::<u64>().map_err(|e| Error::Parse(format!("column {}: {e}", COLUMNS[i])));
        let (ber, index_ber, bit_errors) = (f(5)?, f(6)?, u(4)?);
        let index_bit_errors = if ber > 0.0 { (index_ber / ber * bit_errors as f64).round() as u64 } else { 0 };
        let union_bound = match row.get(10) {
            Some(s) if !s.is_empty() => {
                Some(s.parse::<f64>().map_err(|e| Error::Parse(format!("column union_bound: {e}")))?)
            }
            _ => None,
        };
        out.push(BerRecord {
            snr_db: f(0)?,
            scheme: row[1].parse()?,
            detector: row[2].parse()?,
            frames: u(3)?,
            bit_errors,
            index_bit_errors,
            symbol_bit_errors: bit_errors - index_bit_errors.min(bit_errors),
            ber,
            index_ber,
            symbol_ber: f(7)?,
            mean_iters: f(8)?,
            seconds: f(9)?,
            union_bound,
        });
    }
    Ok(out)
}

/// Writes records to `path`, creating parent directories.
pub fn write_records_to(path: &Path, records: &[BerRecord], format: TableFormat) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir)?;
        }
    }
    write_records(fs::File::create(path)?, records, format)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quick(scheme: Scheme, detector: DetectorKind) -> SimConfig {
        SimConfig {
            detector,
            min_frame_errors: 20,
            max_frames: 400,
            batch: 64,
            record_time: false,
            ..SimConfig::desk(scheme)
        }
    }

    #[test]
    fn snr_lists() {
        assert_eq!(parse_snr_list("0:2:16").unwrap(), vec![0.0, 2.0, 4.0, 6.0, 8.0, 10.0, 12.0, 14.0, 16.0]);
        assert_eq!(parse_snr_list("5, 7.5").unwrap(), vec![5.0, 7.5]);
        assert_eq!(parse_snr_list("0:0.1:0.3").unwrap().len(), 4);
        assert!(parse_snr_list("3:1:2").is_err());
        assert!(parse_snr_list("0:0:2").is_err());
        assert!(parse_snr_list("a").is_err());
    }

    #[test]
    fn matched_efficiency() {
        let base = SimConfig::desk(Scheme::Deim);
        let r = with_scheme(&base, Scheme::Randim).unwrap();
        assert_eq!(r, SimConfig::desk(Scheme::Randim));
        let bits = |s: &SimConfig| IndexModulator::new(&s.frame().unwrap()).unwrap().payload_bits();
        assert_eq!(bits(&r), 10);
        assert_eq!(bits(&with_scheme(&base, Scheme::Doim).unwrap()), 10);
        assert_eq!(with_scheme(&r, Scheme::Deim).unwrap(), base);
    }

    #[test]
    fn config_toml_roundtrip() {
        let sim = SimConfig { csi_eps: 0.05, out: Some("x.csv".into()), ..SimConfig::long_run() };
        let back = SimConfig::from_toml_str(&sim.to_toml_string().unwrap()).unwrap();
        assert_eq!(back, sim);
        let partial = SimConfig::from_toml_str("scheme = \"doim\"\nsnr_db = [4.0]\ndetector = \"cmpd\"\n").unwrap();
        assert_eq!(partial.scheme, Scheme::Doim);
        assert_eq!(partial.detector, DetectorKind::Cmpd);
        assert_eq!(partial.m, 4);
        assert!(SimConfig::from_toml_str("bogus = 1").is_err());
    }

    #[test]
    fn validation() {
        assert!(SimConfig::default().validate().is_ok());
        assert!(SimConfig { min_frame_errors: 0, ..Default::default() }.validate().is_err());
        assert!(SimConfig { prune_eps: 1.0, ..Default::default() }.validate().is_err());
        assert!(SimConfig { m_hat: 3, ..Default::default() }.validate().is_err());
        let big_ml = SimConfig { m: 16, n: 8, detector: DetectorKind::Ml, ..Default::default() };
        assert!(matches!(Simulator::new(&big_ml), Err(Error::Infeasible { .. })));
    }

    #[test]
    fn noiseless_identity_like_channel_is_error_free() {
        let sim = SimConfig {
            paths: 1,
            velocity_kmph: 0.0,
            max_delay_samples: 0.0,
            ..quick(Scheme::Deim, DetectorKind::Mljsapd)
        };
        let r = run_point(&sim, f64::INFINITY).unwrap();
        assert_eq!(r.frames, 400);
        assert_eq!(r.ber, 0.0);
    }

    #[test]
    fn deterministic_and_batch_independent() {
        let sim = quick(Scheme::Deim, DetectorKind::Cmpd);
        let a = run_point(&sim, 6.0).unwrap();
        let b = run_point(&sim, 6.0).unwrap();
        let c = run_point(&SimConfig { batch: 7, ..sim.clone() }, 6.0).unwrap();
        assert_eq!(a, b);
        assert_eq!(a, c);
        assert_eq!(a.index_bit_errors + a.symbol_bit_errors, a.bit_errors);
        assert!((a.index_ber + a.symbol_ber - a.ber).abs() < 1e-15);
    }

    #[test]
    fn ml_ber_falls_with_snr() {
        let sim = SimConfig { min_frame_errors: 100, max_frames: 2000, ..quick(Scheme::Deim, DetectorKind::Ml) };
        let s = Simulator::new(&sim).unwrap();
        assert!(s.run_point(15.0).unwrap().ber < s.run_point(5.0).unwrap().ber);
    }

    #[test]
    fn sweep_compare_and_csv_roundtrip() {
        let sim = SimConfig { snr_db: vec![8.0, 0.0, 4.0], ..quick(Scheme::Deim, DetectorKind::Mljsapd) };
        let recs = run_sweep(&sim).unwrap();
        assert_eq!(recs.iter().map(|r| r.snr_db).collect::<Vec<_>>(), vec![0.0, 4.0, 8.0]);
        let table = compare(&[
            SimConfig { snr_db: vec![10.0], ..sim.clone() },
            SimConfig { snr_db: vec![10.0], ..quick(Scheme::Doim, DetectorKind::Mljsapd) },
        ])
        .unwrap();
        assert_eq!(table.len(), 2);
        assert_eq!((table[0].scheme, table[1].scheme), (Scheme::Deim, Scheme::Doim));
        for format in [TableFormat::Csv, TableFormat::Tsv] {
            let mut buf = Vec::new();
            write_records(&mut buf, &recs, format).unwrap();
            assert_eq!(read_records(buf.as_slice(), format).unwrap(), recs);
        }
        let mut buf = Vec::new();
        write_records(&mut buf, &recs, TableFormat::Csv).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("snr_db,scheme,detector,frames,bit_errors,ber,index_ber,symbol_ber,mean_iters,seconds\n"));
        let mut with_bound = recs.clone();
        with_bound[1].union_bound = Some(0.125);
        let mut buf = Vec::new();
        write_records(&mut buf, &with_bound, TableFormat::Tsv).unwrap();
        assert_eq!(read_records(buf.as_slice(), TableFormat::Tsv).unwrap(), with_bound);
    }

    #[test]
    fn same_seed_same_bytes() {
        let sim = SimConfig { snr_db: vec![2.0, 6.0], ..quick(Scheme::Doim, DetectorKind::Mljsapd) };
        let dir = tempfile::tempdir().unwrap();
        let (pa, pb) = (dir.path().join("a/out.csv"), dir.path().join("b.csv"));
        write_records_to(&pa, &run_sweep(&sim).unwrap(), TableFormat::Csv).unwrap();
        write_records_to(&pb, &run_sweep(&sim).unwrap(), TableFormat::Csv).unwrap();
        assert_eq!(fs::read(pa).unwrap(), fs::read(pb).unwrap());
    }
}
