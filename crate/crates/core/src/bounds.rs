//! Pairwise error probability and the union bound on average BER for
//! small frames.
//!
//! For a fixed path geometry the received noiseless frame is
//! `h Phi(X)`, with `h` the `1 x L` gain vector. A codeword pair enters the
//! bound only through the eigenvalues `lambda_i^2` of
//! `Gamma = Delta Delta^H`, `Delta = Phi(X) - Phi(X_hat)`.

use std::io::Write;

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::channel::{build_phi, unit_path_channels, ChannelModel, PathSet};
use crate::error::{Error, Result};
use crate::frame::{DelayDopplerGrid, FrameConfig};
use crate::immap::{BitPayload, IndexModulator};

/// Eigenvalues below this fraction of the largest count as zero.
pub const RANK_TOL: f64 = 1e-10;

/// Two-exponential approximation of the Gaussian Q-function,
/// `e^(-x^2/2) / 12 + e^(-2x^2/3) / 4`.
pub fn q_approx(x: f64) -> f64 {
    (-x * x / 2.0).exp() / 12.0 + (-2.0 * x * x / 3.0).exp() / 4.0
}

/// Spectrum of one codeword pair.
#[derive(Clone, Debug, PartialEq)]
pub struct PairwiseTerm {
    /// Nonzero singular values `lambda_i` of `Delta`, descending.
    pub singular_values: Vec<f64>,
    /// Bits in which the two codewords differ.
    pub hamming: usize,
}

impl PairwiseTerm {
    /// From the `L x L` Hermitian matrix `Gamma`.
    pub fn from_gram(gamma: DMatrix<Complex64>, hamming: usize) -> Self {
        let eig = SymmetricEigen::new(gamma).eigenvalues;
        let top = eig.iter().cloned().fold(0.0, f64::max);
        let mut sv: Vec<f64> = eig.iter().filter(|&&e| e > RANK_TOL * top && e > 0.0).map(|e| e.sqrt()).collect();
        sv.sort_by(|a, b| b.total_cmp(a));
        PairwiseTerm { singular_values: sv, hamming }
    }

    /// From the difference matrix `Delta` (`L x MN`).
    pub fn from_difference(delta: &DMatrix<Complex64>, hamming: usize) -> Self {
        Self::from_gram(delta * delta.adjoint(), hamming)
    }

    /// Rank `alpha` of `Delta`.
    pub fn rank(&self) -> usize {
        self.singular_values.len()
    }

    /// Approximate PEP at linear SNR `snr` for `paths` i.i.d. `CN(0, 1/L)`
    /// gains.
    pub fn pep(&self, snr: f64, paths: usize) -> f64 {
        let l = paths as f64;
        let (mut a, mut b) = (1.0, 1.0);
        for s in &self.singular_values {
            let g = snr * s * s;
            a *= 1.0 + g / (4.0 * l);
            b *= 1.0 + g / (3.0 * l);
        }
        1.0 / (12.0 * a) + 1.0 / (4.0 * b)
    }

    /// High-SNR form: the `1 +` terms dropped, decaying as `snr^-alpha`.
    pub fn pep_high_snr(&self, snr: f64, paths: usize) -> f64 {
        let l = paths as f64;
        let (mut a, mut b) = (1.0, 1.0);
        for s in &self.singular_values {
            let g = snr * s * s;
            a *= g / (4.0 * l);
            b *= g / (3.0 * l);
        }
        1.0 / (12.0 * a) + 1.0 / (4.0 * b)
    }
}

/// Approximate PEP of deciding `x_hat` when `x` was sent, for the path
/// geometry of `paths` (its gains are ignored).
pub fn pep_pair(
    x: &DelayDopplerGrid,
    x_hat: &DelayDopplerGrid,
    paths: &PathSet,
    cfg: &FrameConfig,
    snr: f64,
) -> Result<f64> {
    if x == x_hat {
        return Err(Error::domain("a codeword pair must consist of distinct codewords"));
    }
    let delta = build_phi(x, paths, cfg) - build_phi(x_hat, paths, cfg);
    Ok(PairwiseTerm::from_difference(&delta, 0).pep(snr, paths.len()))
}

/// Union-bound settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BoundConfig {
    /// Path geometries the bound is averaged over.
    pub geometry_draws: usize,
    /// Largest codebook enumerated.
    pub codeword_cap: u64,
    /// Use the high-SNR PEP form.
    pub high_snr: bool,
}

impl Default for BoundConfig {
    fn default() -> Self {
        BoundConfig { geometry_draws: 50, codeword_cap: 4096, high_snr: false }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoundPoint {
    pub snr_db: f64,
    pub bound: f64,
}

/// Every codeword of the frame with its payload.
pub fn codebook(modulator: &IndexModulator, cap: u64) -> Result<Vec<(BitPayload, DelayDopplerGrid)>> {
    let bits = modulator.payload_bits();
    let count = if bits >= 64 { u64::MAX } else { 1u64 << bits };
    if count > cap {
        return Err(Error::Infeasible { what: "union bound codebook", count: 1u128 << bits.min(127), cap: cap as u128 });
    }
    (0..count)
        .map(|v| {
            let p = BitPayload::from_integer(v, bits);
            let (x, _) = modulator.map_bits(&p)?;
            Ok((p, x))
        })
        .collect()
}

/// `(1 / (B w)) sum_X sum_{X_hat != X} PEP e(X, X_hat)` for one geometry,
/// evaluated at each linear SNR.
pub fn union_bound_for_paths(
    modulator: &IndexModulator,
    codebook: &[(BitPayload, DelayDopplerGrid)],
    paths: &PathSet,
    snrs: &[f64],
    high_snr: bool,
) -> Vec<f64> {
    let cfg = modulator.config();
    let l = paths.len();
    // Phi(X) row i is the unit-gain response of path i.
    let units = unit_path_channels(paths, cfg);
    let phis: Vec<DMatrix<Complex64>> = codebook
        .iter()
        .map(|(_, x)| {
            let mut phi = DMatrix::zeros(l, cfg.mn());
            for (i, hi) in units.iter().enumerate() {
                for (rho, v) in hi.apply(x.as_slice()).into_iter().enumerate() {
                    phi[(i, rho)] = v;
                }
            }
            phi
        })
        .collect();
    let mut acc = vec![0.0; snrs.len()];
    for a in 0..codebook.len() {
        for b in a + 1..codebook.len() {
            let hamming = codebook[a].0.hamming(&codebook[b].0);
            let term = PairwiseTerm::from_difference(&(&phis[a] - &phis[b]), hamming);
            for (s, &snr) in acc.iter_mut().zip(snrs) {
                let pep = if high_snr { term.pep_high_snr(snr, l) } else { term.pep(snr, l) };
                // Both orderings of the pair contribute equally.
                *s += 2.0 * pep * hamming as f64;
            }
        }
    }
    bound_scale(&mut acc, modulator.payload_bits(), codebook.len());
    acc
}

fn bound_scale(acc: &mut [f64], payload_bits: usize, codewords: usize) {
    let norm = (payload_bits * codewords) as f64;
    acc.iter_mut().for_each(|v| *v /= norm);
}

/// Combines precomputed pair terms into the bound (each unordered pair
/// counted in both directions).
pub fn bound_from_terms(terms: &[PairwiseTerm], payload_bits: usize, codewords: usize, snr: f64, paths: usize) -> f64 {
    let mut acc = [terms.iter().map(|t| 2.0 * t.pep(snr, paths) * t.hamming as f64).sum::<f64>()];
    bound_scale(&mut acc, payload_bits, codewords);
    acc[0]
}

/// Union bound averaged over `bcfg.geometry_draws` random path geometries
/// of `model`.
pub fn union_bound<R: Rng + ?Sized>(
    cfg: &FrameConfig,
    model: &ChannelModel,
    snr_db: &[f64],
    bcfg: &BoundConfig,
    rng: &mut R,
) -> Result<Vec<BoundPoint>> {
    if bcfg.geometry_draws == 0 {
        return Err(Error::config("the bound needs at least one geometry draw"));
    }
    let modulator = IndexModulator::new(cfg)?;
    let book = codebook(&modulator, bcfg.codeword_cap)?;
    let snrs: Vec<f64> = snr_db.iter().map(|d| 10f64.powf(d / 10.0)).collect();
    let mut acc = vec![0.0; snrs.len()];
    for _ in 0..bcfg.geometry_draws {
        let paths = model.gen_paths(cfg, rng)?;
        for (a, v) in acc.iter_mut().zip(union_bound_for_paths(&modulator, &book, &paths, &snrs, bcfg.high_snr)) {
            *a += v;
        }
    }
    Ok(snr_db
        .iter()
        .zip(acc)
        .map(|(&snr_db, a)| BoundPoint { snr_db, bound: a / bcfg.geometry_draws as f64 })
        .collect())
}

/// Writes `snr_db,bound` rows.
pub fn write_bound_csv<W: Write>(out: W, points: &[BoundPoint]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["snr_db", "bound"])?;
    for p in points {
        w.write_record([p.snr_db.to_string(), format!("{:e}", p.bound)])?;
    }
    w.flush()?;
    Ok(())
}
