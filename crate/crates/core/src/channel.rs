//! Linear time-varying multipath channel with off-grid delays and fractional
//! Dopplers.
//!
//! The same channel is available in two forms: applied sample by sample in
//! the time domain ([`apply_time_domain`]), and as the exact delay-Doppler
//! input-output matrix ([`build_effective`]) used by the detectors. Without
//! noise, demodulating the first equals multiplying by the second.

use std::f64::consts::{FRAC_1_SQRT_2, PI};
use std::fmt::Write as _;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::frame::{DelayDopplerGrid, FrameConfig};
use crate::modem::TimeSignal;

const SPEED_OF_LIGHT: f64 = 3.0e8;
const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

/// Which member of the raised-cosine family a [`PulseShape`] evaluates.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PulseKind {
    /// Composite transmit/receive response `P_rc`.
    RaisedCosine,
    /// Receive filter `P_rrc`, unit energy.
    RootRaisedCosine,
}

/// Raised-cosine pulse family sampled on the delay grid.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PulseShape {
    pub rolloff: f64,
    /// One-sided truncation length in samples.
    pub span_taps: usize,
    /// Symbol interval `T_s` in seconds.
    pub symbol_interval: f64,
    pub kind: PulseKind,
}

impl PulseShape {
    pub fn raised_cosine(rolloff: f64, span_taps: usize, symbol_interval: f64) -> Self {
        PulseShape { rolloff, span_taps, symbol_interval, kind: PulseKind::RaisedCosine }
    }

    /// The matching receive filter.
    pub fn receive_filter(&self) -> Self {
        PulseShape { kind: PulseKind::RootRaisedCosine, ..*self }
    }

    /// Pulse value at `t` seconds.
    pub fn sample(&self, t: f64) -> f64 {
        let x = t / self.symbol_interval;
        match self.kind {
            PulseKind::RaisedCosine => self.rc_normalized(x),
            PulseKind::RootRaisedCosine => self.rrc_normalized(x) / self.symbol_interval.sqrt(),
        }
    }

    /// Raised cosine at `x = t / T_s`, zero beyond the truncation span.
    pub fn rc_normalized(&self, x: f64) -> f64 {
        if x.abs() > self.span_taps as f64 + 1e-9 {
            return 0.0;
        }
        let nearest = x.round();
        if (x - nearest).abs() < 1e-12 {
            // Nyquist zero crossings are exact.
            return if nearest == 0.0 { 1.0 } else { 0.0 };
        }
        let b = self.rolloff;
        let sinc = (PI * x).sin() / (PI * x);
        let denom = 1.0 - (2.0 * b * x).powi(2);
        if denom.abs() < 1e-10 {
            // Removable singularity at |x| = 1 / (2 rolloff).
            return PI / 4.0 * sinc;
        }
        sinc * (PI * b * x).cos() / denom
    }

    /// Root raised cosine at `x = t / T_s`, with unit energy in `x`.
    fn rrc_normalized(&self, x: f64) -> f64 {
        if x.abs() > self.span_taps as f64 + 1e-9 {
            return 0.0;
        }
        let b = self.rolloff;
        if x.abs() < 1e-12 {
            return 1.0 + b * (4.0 / PI - 1.0);
        }
        if (x.abs() - 1.0 / (4.0 * b)).abs() < 1e-10 {
            let a = PI / (4.0 * b);
            return b * FRAC_1_SQRT_2 * ((1.0 + 2.0 / PI) * a.sin() + (1.0 - 2.0 / PI) * a.cos());
        }
        let num = (PI * x * (1.0 - b)).sin() + 4.0 * b * x * (PI * x * (1.0 + b)).cos();
        num / (PI * x * (1.0 - (4.0 * b * x).powi(2)))
    }

    /// Receive filter taps at integer sample offsets `-span..=span`,
    /// renormalized to unit energy.
    pub fn rrc_taps(&self) -> Vec<f64> {
        let span = self.span_taps as i64;
        let mut taps: Vec<f64> = (-span..=span).map(|k| self.rrc_normalized(k as f64)).collect();
        let e: f64 = taps.iter().map(|t| t * t).sum::<f64>().sqrt();
        taps.iter_mut().for_each(|t| *t /= e);
        taps
    }
}

/// Channel tap count `P = ceil(tau_max / T_s) + span + 1`.
pub fn tap_count(pulse: &PulseShape, tau_max: f64) -> usize {
    let d = tau_max / pulse.symbol_interval;
    // Guard against ceil(2.0000000001) when tau_max is a multiple of T_s.
    let d = if (d - d.round()).abs() < 1e-9 { d.round() } else { d.ceil() };
    d.max(0.0) as usize + pulse.span_taps + 1
}

/// One propagation path.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Path {
    pub gain: Complex64,
    /// Delay in seconds.
    pub delay: f64,
    /// Doppler shift in Hz.
    pub doppler: f64,
}

/// Ground-truth (or estimated) channel: paths plus the composite pulse.
#[derive(Clone, Debug, PartialEq)]
pub struct PathSet {
    pub paths: Vec<Path>,
    pub pulse: PulseShape,
    /// Channel tap count `P`.
    pub taps: usize,
}

impl PathSet {
    /// Builds a path set whose tap span covers `tau_max`.
    pub fn new(paths: Vec<Path>, pulse: PulseShape, tau_max: f64) -> Self {
        PathSet { paths, pulse, taps: tap_count(&pulse, tau_max) }
    }

    pub fn len(&self) -> usize {
        self.paths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.paths.is_empty()
    }

    /// The cyclic prefix length that exactly covers the tap span.
    pub fn min_cp(&self) -> usize {
        self.taps.saturating_sub(1)
    }

    /// One path per line: `re(h) im(h) delay_s doppler_hz`.
    pub fn to_text(&self) -> String {
        let mut out = String::from("# re(h) im(h) delay_s doppler_hz\n");
        for p in &self.paths {
            let _ = writeln!(out, "{} {} {} {}", p.gain.re, p.gain.im, p.delay, p.doppler);
        }
        out
    }

    /// Parses [`PathSet::to_text`] output. Blank lines and `#` comments are
    /// skipped.
    pub fn from_text(text: &str, pulse: PulseShape, taps: usize) -> Result<Self> {
        let mut paths = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let vals: Vec<f64> = line
                .split_whitespace()
                .map(|t| t.parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::Parse(format!("line {}: {e}", lineno + 1)))?;
            if vals.len() != 4 {
                return Err(Error::Parse(format!(
                    "line {}: expected 4 fields, found {}",
                    lineno + 1,
                    vals.len()
                )));
            }
            paths.push(Path { gain: Complex64::new(vals[0], vals[1]), delay: vals[2], doppler: vals[3] });
        }
        Ok(PathSet { paths, pulse, taps })
    }
}

/// Statistical description of the random channel.
#[derive(Clone, Debug, PartialEq)]
pub struct ChannelModel {
    /// Number of paths `L`.
    pub paths: usize,
    pub velocity_kmph: f64,
    /// Maximum delay in units of `T_s`.
    pub max_delay_samples: f64,
    pub rolloff: f64,
    pub span_taps: usize,
}

impl Default for ChannelModel {
    fn default() -> Self {
        ChannelModel { paths: 4, velocity_kmph: 300.0, max_delay_samples: 8.0, rolloff: 0.4, span_taps: 10 }
    }
}

impl ChannelModel {
    pub fn pulse(&self, cfg: &FrameConfig) -> PulseShape {
        PulseShape::raised_cosine(self.rolloff, self.span_taps, cfg.sample_interval())
    }

    /// `nu_max = v f_c / c`.
    pub fn max_doppler(&self, cfg: &FrameConfig) -> f64 {
        self.velocity_kmph / 3.6 * cfg.carrier_hz / SPEED_OF_LIGHT
    }

    pub fn max_delay(&self, cfg: &FrameConfig) -> f64 {
        self.max_delay_samples * cfg.sample_interval()
    }

    /// Draws one realization: `tau_1 = 0`, the others uniform on
    /// `(0, tau_max]`; `nu_i = nu_max cos(theta_i)` with `theta_i` uniform on
    /// `[-pi, pi]`; gains i.i.d. `CN(0, 1/L)`.
    pub fn gen_paths<R: Rng + ?Sized>(&self, cfg: &FrameConfig, rng: &mut R) -> Result<PathSet> {
        if self.paths == 0 {
            return Err(Error::domain("a channel needs at least one path"));
        }
        let nu_max = self.max_doppler(cfg);
        let tau_max = self.max_delay(cfg);
        let std = (0.5 / self.paths as f64).sqrt();
        let paths = (0..self.paths)
            .map(|i| {
                let delay = if i == 0 { 0.0 } else { tau_max * (1.0 - rng.random::<f64>()) };
                let theta = rng.random_range(-PI..=PI);
                let re: f64 = StandardNormal.sample(rng);
                let im: f64 = StandardNormal.sample(rng);
                Path { gain: Complex64::new(re, im) * std, delay, doppler: nu_max * theta.cos() }
            })
            .collect();
        Ok(PathSet::new(paths, self.pulse(cfg), tau_max))
    }
}

/// Integer Doppler tap plus fractional offset, `nu N T = k + beta`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DopplerDecomposition {
    pub k_nu: i64,
    /// In `(-0.5, 0.5]`.
    pub beta_nu: f64,
}

pub fn doppler_split(nu: f64, cfg: &FrameConfig) -> DopplerDecomposition {
    let x = nu * cfg.n as f64 * cfg.slot;
    let k = (x - 0.5).ceil();
    DopplerDecomposition { k_nu: k as i64, beta_nu: x - k }
}

/// Doppler spreading kernel `sum_{n<N} e^{j 2 pi n (q + beta) / N}`.
///
/// Evaluated as a Dirichlet ratio with an explicit phase so the removable
/// singularity at `q + beta = 0 (mod N)` gives `N`; integer Dopplers give
/// exact zeros away from `q = 0`.
pub fn theta(q: usize, beta: f64, n: usize) -> Complex64 {
    let nf = n as f64;
    if beta == 0.0 {
        return if q % n == 0 { Complex64::new(nf, 0.0) } else { ZERO };
    }
    let a = q as f64 + beta;
    // sin(pi a) = (-1)^q sin(pi beta), exact in q.
    let num = if q % 2 == 0 { (PI * beta).sin() } else { -(PI * beta).sin() };
    let den = (PI * a / nf).sin();
    let mag = if den.abs() < 1e-300 { nf } else { num / den };
    Complex64::from_polar(mag, PI * a * (1.0 - 1.0 / nf))
}

/// Per-path quantities shared by the delay-Doppler builders.
struct PathKernel {
    gain: Complex64,
    k_nu: i64,
    /// Doppler in cycles per delay sample, `(k_nu + beta_nu) / (M N)`.
    nu_ts: f64,
    /// `P_rc(p T_s - tau)` for `p < P`.
    prc: Vec<f64>,
    /// `theta(q, beta) / N` for `q < N`.
    theta_n: Vec<Complex64>,
}

impl PathKernel {
    fn new(path: &Path, set: &PathSet, cfg: &FrameConfig) -> Self {
        let d = doppler_split(path.doppler, cfg);
        let tau = path.delay / set.pulse.symbol_interval;
        PathKernel {
            gain: path.gain,
            k_nu: d.k_nu,
            nu_ts: (d.k_nu as f64 + d.beta_nu) / cfg.mn() as f64,
            prc: (0..set.taps).map(|p| set.pulse.rc_normalized(p as f64 - tau)).collect(),
            theta_n: (0..cfg.n).map(|q| theta(q, d.beta_nu, cfg.n) / cfg.n as f64).collect(),
        }
    }

    /// Calls `emit(col, coef)` for every `(p, q)` term of output `(l, k)`,
    /// where `coef` is the unit-gain kernel `P_rc * gamma` and `col` the
    /// vectorized input index.
    fn for_each_term(&self, l: usize, k: usize, cfg: &FrameConfig, mut emit: impl FnMut(usize, Complex64)) {
        let (m, n) = (cfg.m as i64, cfg.n as i64);
        for (p, &prc) in self.prc.iter().enumerate() {
            if prc == 0.0 {
                continue;
            }
            let shift = l as i64 - p as i64;
            let src_l = shift.rem_euclid(m) as usize;
            // Number of frame wraps of the delayed sample; each contributes
            // one phi factor.
            let wraps = (src_l as i64 - shift) / m;
            let xi = Complex64::from_polar(prc, 2.0 * PI * shift as f64 * self.nu_ts);
            for (q, &th) in self.theta_n.iter().enumerate() {
                if th == ZERO {
                    continue;
                }
                let src_k = (k as i64 - self.k_nu + q as i64).rem_euclid(n);
                let mut c = xi * th;
                if wraps > 0 {
                    c *= Complex64::from_polar(1.0, -2.0 * PI * (wraps * src_k) as f64 / n as f64);
                }
                emit(src_l + src_k as usize * cfg.m, c);
            }
        }
    }
}

/// Passes `s` (with cyclic prefix) through the channel and strips the
/// prefix. Time index 0 is the first sample after the prefix. With `snr =
/// Some(gamma)`, white noise of variance `1 / gamma` is drawn and shaped by
/// the unit-energy receive filter.
pub fn apply_time_domain<R: Rng + ?Sized>(
    s: &TimeSignal,
    paths: &PathSet,
    snr: Option<f64>,
    rng: &mut R,
) -> Result<TimeSignal> {
    if s.cp_len < paths.min_cp() {
        return Err(Error::config(format!(
            "cyclic prefix of {} samples is shorter than the {}-tap channel span",
            s.cp_len,
            paths.taps - 1
        )));
    }
    let len = s.body().len();
    let tau_scale = 1.0 / paths.pulse.symbol_interval;
    let kernels: Vec<(Complex64, f64, Vec<f64>)> = paths
        .paths
        .iter()
        .map(|p| {
            let tau = p.delay * tau_scale;
            let prc = (0..paths.taps).map(|tap| paths.pulse.rc_normalized(tap as f64 - tau)).collect();
            (p.gain, p.doppler * paths.pulse.symbol_interval, prc)
        })
        .collect();
    let mut out = vec![ZERO; len];
    for (u, r) in out.iter_mut().enumerate() {
        let mut acc = ZERO;
        for (gain, nu_ts, prc) in &kernels {
            for (p, &g) in prc.iter().enumerate() {
                if g == 0.0 {
                    continue;
                }
                let h = gain * Complex64::from_polar(g, 2.0 * PI * nu_ts * (u as f64 - p as f64));
                acc += h * s.samples[u + s.cp_len - p];
            }
        }
        *r = acc;
    }
    if let Some(gamma) = snr {
        let noise = colored_noise(len, noise_variance(gamma), &paths.pulse.receive_filter(), rng);
        out.iter_mut().zip(noise).for_each(|(r, z)| *r += z);
    }
    Ok(TimeSignal::new(out))
}

/// Noise variance `N_0 = 1 / gamma` for a linear SNR.
pub fn noise_variance(snr: f64) -> f64 {
    1.0 / snr
}

/// `len` samples of `CN(0, variance)` noise filtered by the receive pulse.
/// The filter is renormalized to unit energy, so the output variance is
/// `variance`.
pub fn colored_noise<R: Rng + ?Sized>(
    len: usize,
    variance: f64,
    rrc: &PulseShape,
    rng: &mut R,
) -> Vec<Complex64> {
    let taps = rrc.rrc_taps();
    let span = rrc.span_taps;
    let std = (variance / 2.0).sqrt();
    let white: Vec<Complex64> = (0..len + 2 * span)
        .map(|_| {
            let re: f64 = StandardNormal.sample(rng);
            let im: f64 = StandardNormal.sample(rng);
            Complex64::new(re, im) * std
        })
        .collect();
    (0..len)
        .map(|u| taps.iter().enumerate().map(|(j, &g)| white[u + 2 * span - j] * g).sum())
        .collect()
}

/// Sparse delay-Doppler channel matrix `y = H x (+ z)`.
#[derive(Clone, Debug, PartialEq)]
pub struct EffectiveChannel {
    mn: usize,
    /// `rows[d]` = `(c, H[d, c])` for `c` in `I(d)`, ascending `c`.
    rows: Vec<Vec<(usize, Complex64)>>,
    /// `cols[c]` = `(d, slot)` with `rows[d][slot].0 == c`, ascending `d`.
    cols: Vec<Vec<(usize, usize)>>,
    z: usize,
    /// Noise variance the detectors assume.
    pub sigma2: f64,
}

impl EffectiveChannel {
    fn from_dense_rows(mn: usize, rows: Vec<Vec<(usize, Complex64)>>) -> Self {
        let mut cols = vec![Vec::new(); mn];
        for (d, row) in rows.iter().enumerate() {
            for (slot, &(c, _)) in row.iter().enumerate() {
                cols[c].push((d, slot));
            }
        }
        let z = rows.iter().map(Vec::len).chain(cols.iter().map(Vec::len)).max().unwrap_or(0);
        EffectiveChannel { mn, rows, cols, z, sigma2: 0.0 }
    }

    pub fn with_noise_variance(mut self, sigma2: f64) -> Self {
        self.sigma2 = sigma2;
        self
    }

    /// Frame size `M N`.
    pub fn dim(&self) -> usize {
        self.mn
    }

    /// `I(d)` with the matrix entries.
    pub fn row(&self, d: usize) -> &[(usize, Complex64)] {
        &self.rows[d]
    }

    /// `J(c)` as `(d, slot in row d)`.
    pub fn col(&self, c: usize) -> &[(usize, usize)] {
        &self.cols[c]
    }

    /// Largest row or column degree.
    pub fn z(&self) -> usize {
        self.z
    }

    pub fn nnz(&self) -> usize {
        self.rows.iter().map(Vec::len).sum()
    }

    pub fn get(&self, d: usize, c: usize) -> Complex64 {
        self.rows[d]
            .binary_search_by_key(&c, |&(cc, _)| cc)
            .map(|i| self.rows[d][i].1)
            .unwrap_or(ZERO)
    }

    pub fn apply(&self, x: &[Complex64]) -> Vec<Complex64> {
        assert_eq!(x.len(), self.mn);
        self.rows.iter().map(|row| row.iter().map(|&(c, h)| h * x[c]).sum()).collect()
    }

    pub fn to_dense(&self) -> DMatrix<Complex64> {
        let mut h = DMatrix::zeros(self.mn, self.mn);
        for (d, row) in self.rows.iter().enumerate() {
            for &(c, v) in row {
                h[(d, c)] = v;
            }
        }
        h
    }

    /// Column `c` as a dense vector.
    pub fn dense_col(&self, c: usize) -> Vec<Complex64> {
        let mut v = vec![ZERO; self.mn];
        for &(d, slot) in &self.cols[c] {
            v[d] = self.rows[d][slot].1;
        }
        v
    }
}

/// Assembles the delay-Doppler channel matrix. Each row keeps its
/// largest-magnitude entries until at least `1 - prune_eps` of the row
/// energy is retained; `prune_eps = 0` keeps every nonzero entry.
pub fn build_effective(paths: &PathSet, cfg: &FrameConfig, prune_eps: f64) -> EffectiveChannel {
    let mn = cfg.mn();
    let kernels: Vec<PathKernel> = paths.paths.iter().map(|p| PathKernel::new(p, paths, cfg)).collect();
    let mut dense = vec![ZERO; mn];
    let mut rows = Vec::with_capacity(mn);
    for k in 0..cfg.n {
        for l in 0..cfg.m {
            dense.iter_mut().for_each(|z| *z = ZERO);
            for kern in &kernels {
                let g = kern.gain;
                kern.for_each_term(l, k, cfg, |col, c| dense[col] += g * c);
            }
            let mut row: Vec<(usize, Complex64)> =
                dense.iter().enumerate().filter(|(_, v)| **v != ZERO).map(|(c, &v)| (c, v)).collect();
            if prune_eps > 0.0 {
                row = prune_row(row, prune_eps);
            }
            rows.push(row);
        }
    }
    EffectiveChannel::from_dense_rows(mn, rows)
}

fn prune_row(mut row: Vec<(usize, Complex64)>, eps: f64) -> Vec<(usize, Complex64)> {
    let total: f64 = row.iter().map(|(_, v)| v.norm_sqr()).sum();
    row.sort_by(|a, b| b.1.norm_sqr().total_cmp(&a.1.norm_sqr()).then(a.0.cmp(&b.0)));
    let target = (1.0 - eps) * total;
    let mut kept = 0.0;
    let mut keep = row.len();
    for (i, (_, v)) in row.iter().enumerate() {
        kept += v.norm_sqr();
        if kept >= target {
            keep = i + 1;
            break;
        }
    }
    row.truncate(keep);
    row.sort_by_key(|&(c, _)| c);
    row
}

/// Unit-gain delay-Doppler response of each path separately; row `i` of
/// `Phi(X)` is `unit_path_channels(..)[i].apply(x)`.
pub fn unit_path_channels(paths: &PathSet, cfg: &FrameConfig) -> Vec<EffectiveChannel> {
    paths
        .paths
        .iter()
        .map(|p| {
            let single = PathSet {
                paths: vec![Path { gain: Complex64::new(1.0, 0.0), ..*p }],
                pulse: paths.pulse,
                taps: paths.taps,
            };
            build_effective(&single, cfg, 0.0)
        })
        .collect()
}

/// Signal matrix `Phi(X)` (`L x MN`) with `h Phi(X) = (H x)^T`, evaluated
/// column by column from the delay-Doppler kernel.
pub fn build_phi(x: &DelayDopplerGrid, paths: &PathSet, cfg: &FrameConfig) -> DMatrix<Complex64> {
    let data = x.as_slice();
    let mut phi = DMatrix::zeros(paths.len(), cfg.mn());
    for (i, path) in paths.paths.iter().enumerate() {
        let kern = PathKernel::new(path, paths, cfg);
        for k in 0..cfg.n {
            for l in 0..cfg.m {
                let mut acc = ZERO;
                kern.for_each_term(l, k, cfg, |col, c| acc += c * data[col]);
                phi[(i, cfg.unit_index(l, k))] = acc;
            }
        }
    }
    phi
}

/// Channel estimate with bounded errors: each gain moves uniformly within
/// a disc of radius `eps |h|`, each delay and Doppler uniformly within
/// `+-eps |value|`.
pub fn perturb_csi<R: Rng + ?Sized>(paths: &PathSet, eps: f64, rng: &mut R) -> Result<PathSet> {
    if !(eps >= 0.0) {
        return Err(Error::domain(format!("CSI error radius must be nonnegative, got {eps}")));
    }
    let mut out = paths.clone();
    if eps == 0.0 {
        return Ok(out);
    }
    for p in &mut out.paths {
        let r = eps * p.gain.norm() * rng.random::<f64>().sqrt();
        let phase = rng.random_range(-PI..PI);
        p.gain += Complex64::from_polar(r, phase);
        p.delay += eps * p.delay.abs() * rng.random_range(-1.0..=1.0);
        p.doppler += eps * p.doppler.abs() * rng.random_range(-1.0..=1.0);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frame::{Modulation, Scheme};
    use crate::modem::{add_cp, Modem};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn cfg(m: usize, n: usize) -> FrameConfig {
        FrameConfig::new(m, n, m, n, 1, Scheme::Deim, Modulation::Qpsk, 15e3, 4e9).unwrap()
    }

    fn single(cfg: &FrameConfig, gain: Complex64, delay: f64, doppler: f64) -> PathSet {
        let pulse = PulseShape::raised_cosine(0.4, 10, cfg.sample_interval());
        PathSet::new(vec![Path { gain, delay, doppler }], pulse, 8.0 * cfg.sample_interval())
    }

    fn random_grid(m: usize, n: usize, rng: &mut impl Rng) -> DelayDopplerGrid {
        let v = (0..m * n)
            .map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect();
        DelayDopplerGrid::devectorize(m, n, v).unwrap()
    }

    fn physical(x: &DelayDopplerGrid, paths: &PathSet, cfg: &FrameConfig) -> Vec<Complex64> {
        let modem = Modem::new(cfg);
        let s = add_cp(&modem.modulate(x), paths.min_cp());
        let r = apply_time_domain(&s, paths, None, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        modem.demodulate(&r).unwrap().into_vec()
    }

    fn rel_err(a: &[Complex64], b: &[Complex64]) -> f64 {
        let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).norm_sqr()).sum();
        let den: f64 = b.iter().map(|y| y.norm_sqr()).sum();
        (num / den).sqrt()
    }

    #[test]
    fn doppler_split_examples() {
        let c = cfg(4, 4);
        let nt = c.n as f64 * c.slot;
        assert_eq!(doppler_split(0.0, &c), DopplerDecomposition { k_nu: 0, beta_nu: 0.0 });
        let d = doppler_split(3.5 / nt, &c);
        assert_eq!(d.k_nu, 3);
        assert!((d.beta_nu - 0.5).abs() < 1e-12);
        let d = doppler_split(-2.7 / nt, &c);
        assert_eq!(d.k_nu, -3);
        assert!((d.beta_nu - 0.3).abs() < 1e-12);
        let d = doppler_split(-2.5 / nt, &c);
        assert_eq!(d.k_nu, -3);
        assert!((d.beta_nu - 0.5).abs() < 1e-12);
    }

    #[test]
    fn max_doppler_at_300_kmph() {
        let model = ChannelModel::default();
        assert!((model.max_doppler(&cfg(4, 4)) - 1111.111_111).abs() < 1e-3);
    }

    #[test]
    fn raised_cosine_values() {
        let p = PulseShape::raised_cosine(0.4, 10, 1e-5);
        assert_eq!(p.sample(0.0), 1.0);
        for m in [-3i32, -1, 1, 2, 7] {
            assert_eq!(p.sample(m as f64 * 1e-5), 0.0);
        }
        // Singularity at t = T_s / (2 rolloff): compare with the formula on both sides.
        let ts = 1e-5;
        let t0 = ts / 0.8;
        let at = p.sample(t0);
        let raw = |t: f64| {
            let x = t / ts;
            (PI * x).sin() / (PI * x) * (PI * 0.4 * x).cos() / (1.0 - (0.8 * x).powi(2))
        };
        assert!(at.is_finite());
        assert!((raw(t0 * (1.0 + 1e-6)) - at).abs() < 1e-5);
        assert!((raw(t0 * (1.0 - 1e-6)) - at).abs() < 1e-5);
        assert_eq!(p.sample(10.5 * ts), 0.0);
    }

    #[test]
    fn rrc_has_unit_energy_and_squares_to_rc() {
        let ts = 1.0;
        let p = PulseShape::raised_cosine(0.4, 40, ts).receive_filter();
        // Riemann sum of the continuous energy.
        let step = 1e-3;
        let e: f64 = (-40_000..=40_000).map(|i| p.sample(i as f64 * step).powi(2) * step).sum();
        assert!((e - 1.0).abs() < 1e-3, "energy {e}");
        // Autocorrelation at lag T_s reproduces the RC Nyquist zero.
        let c1: f64 = (-40_000..=39_000).map(|i| p.sample(i as f64 * step) * p.sample(i as f64 * step + 1.0) * step).sum();
        assert!(c1.abs() < 1e-3);
        let taps = PulseShape::raised_cosine(0.4, 10, ts).rrc_taps();
        assert_eq!(taps.len(), 21);
        assert!((taps.iter().map(|t| t * t).sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn tap_count_formula() {
        let p = PulseShape::raised_cosine(0.4, 4, 1e-5);
        assert_eq!(tap_count(&p, 0.0), 5);
        assert_eq!(tap_count(&p, 2e-5), 7);
        assert_eq!(tap_count(&p, 2.5e-5), 8);
        let wider = PulseShape::raised_cosine(0.4, 6, 1e-5);
        assert!(tap_count(&wider, 2.5e-5) >= tap_count(&p, 2.5e-5));
        // Every nonzero tap of an admissible delay lies inside the span.
        let tau_max = 3.3e-5;
        let taps = tap_count(&p, tau_max);
        for i in 0..=100 {
            let tau = tau_max * i as f64 / 100.0;
            for q in taps..taps + 20 {
                assert_eq!(p.sample(q as f64 * 1e-5 - tau), 0.0);
            }
        }
    }

    #[test]
    fn theta_limits_and_parseval() {
        for n in [4usize, 8, 16] {
            assert_eq!(theta(0, 0.0, n), Complex64::new(n as f64, 0.0));
            for q in 1..n {
                assert_eq!(theta(q, 0.0, n), ZERO);
            }
            for beta in [-0.49, -0.3, -1e-9, 1e-9, 0.17, 0.5] {
                let s: f64 = (0..n).map(|q| theta(q, beta, n).norm_sqr()).sum::<f64>() / (n * n) as f64;
                assert!((s - 1.0).abs() < 1e-12, "n={n} beta={beta} sum={s}");
                // Against the defining geometric sum.
                for q in 0..n {
                    let direct: Complex64 = (0..n)
                        .map(|t| Complex64::from_polar(1.0, 2.0 * PI * t as f64 * (q as f64 + beta) / n as f64))
                        .sum();
                    assert!((theta(q, beta, n) - direct).norm() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn identity_channel() {
        let c = cfg(4, 4);
        let paths = single(&c, Complex64::new(1.0, 0.0), 0.0, 0.0);
        let h = build_effective(&paths, &c, 0.0);
        assert_eq!(h.z(), 1);
        for d in 0..16 {
            assert_eq!(h.row(d), &[(d, Complex64::new(1.0, 0.0))]);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let s = TimeSignal::new((0..16).map(|_| Complex64::new(rng.random(), rng.random())).collect());
        let r = apply_time_domain(&add_cp(&s, paths.min_cp()), &paths, None, &mut rng).unwrap();
        assert_eq!(r.samples, s.samples);
    }

    #[test]
    fn on_grid_delay_is_a_cyclic_shift() {
        let c = cfg(4, 4);
        let ts = c.sample_interval();
        let paths = single(&c, Complex64::new(1.0, 0.0), 2.0 * ts, 0.0);
        let nonzero: Vec<usize> = (0..paths.taps)
            .filter(|&p| paths.pulse.sample(p as f64 * ts - 2.0 * ts) != 0.0)
            .collect();
        assert_eq!(nonzero, vec![2]);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let s = TimeSignal::new((0..16).map(|_| Complex64::new(rng.random(), rng.random())).collect());
        let r = apply_time_domain(&add_cp(&s, paths.min_cp()), &paths, None, &mut rng).unwrap();
        for u in 0..16 {
            assert!((r.samples[u] - s.samples[(u + 14) % 16]).norm() < 1e-15);
        }
    }

    #[test]
    fn integer_doppler_has_no_spreading() {
        let c = cfg(8, 8);
        let nt = c.n as f64 * c.slot;
        let paths = single(&c, Complex64::new(0.6, 0.8), 0.0, 2.0 / nt);
        let h = build_effective(&paths, &c, 0.0);
        for k in 0..8 {
            for l in 0..8 {
                let row = h.row(c.unit_index(l, k));
                assert_eq!(row.len(), 1);
                assert_eq!(row[0].0, c.unit_index(l, (k + 6) % 8));
            }
        }
    }

    #[test]
    fn short_prefix_rejected() {
        let c = cfg(4, 4);
        let paths = single(&c, Complex64::new(1.0, 0.0), 0.0, 0.0);
        let s = TimeSignal::new(vec![ZERO; 16]);
        let short = add_cp(&s, paths.min_cp() - 1);
        assert!(apply_time_domain(&short, &paths, None, &mut ChaCha8Rng::seed_from_u64(0)).is_err());
    }

    #[test]
    fn effective_matrix_matches_physical_chain() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for (m, n, l) in [(4, 4, 4), (8, 4, 3), (4, 8, 5), (16, 8, 2), (8, 16, 4)] {
            let c = cfg(m, n);
            let model = ChannelModel { paths: l, velocity_kmph: 900.0, ..Default::default() };
            let paths = model.gen_paths(&c, &mut rng).unwrap();
            let x = random_grid(m, n, &mut rng);
            let h = build_effective(&paths, &c, 0.0);
            let y = physical(&x, &paths, &c);
            assert!(rel_err(&h.apply(x.as_slice()), &y) < 1e-10);
        }
    }

    #[test]
    fn phi_is_consistent_with_h() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let c = cfg(8, 4);
        let paths = ChannelModel::default().gen_paths(&c, &mut rng).unwrap();
        let x = random_grid(8, 4, &mut rng);
        let phi = build_phi(&x, &paths, &c);
        let hx = build_effective(&paths, &c, 0.0).apply(x.as_slice());
        let h_row = nalgebra::RowDVector::from_iterator(paths.len(), paths.paths.iter().map(|p| p.gain));
        let lhs = h_row * &phi;
        let got: Vec<Complex64> = lhs.iter().copied().collect();
        assert!(rel_err(&got, &hx) < 1e-10);
        // Per-path unit channels reproduce each row.
        for (i, hi) in unit_path_channels(&paths, &c).iter().enumerate() {
            let row: Vec<Complex64> = phi.row(i).iter().copied().collect();
            assert!(rel_err(&hi.apply(x.as_slice()), &row) < 1e-12);
        }
        assert!(build_phi(&DelayDopplerGrid::zeros(8, 4), &paths, &c).iter().all(|z| *z == ZERO));
    }

    #[test]
    fn phi_of_identity_channel_is_x() {
        let c = cfg(4, 4);
        let paths = single(&c, Complex64::new(1.0, 0.0), 0.0, 0.0);
        let x = random_grid(4, 4, &mut ChaCha8Rng::seed_from_u64(9));
        let phi = build_phi(&x, &paths, &c);
        for rho in 0..16 {
            assert!((phi[(0, rho)] - x.as_slice()[rho]).norm() < 1e-15);
        }
    }

    #[test]
    fn pruning_keeps_requested_energy() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let c = cfg(16, 8);
        let paths = ChannelModel::default().gen_paths(&c, &mut rng).unwrap();
        let full = build_effective(&paths, &c, 0.0);
        let eps = 1e-3;
        let pruned = build_effective(&paths, &c, eps);
        assert!(pruned.z() <= full.z());
        for d in 0..c.mn() {
            let e_full: f64 = full.row(d).iter().map(|(_, v)| v.norm_sqr()).sum();
            let e_kept: f64 = pruned.row(d).iter().map(|(_, v)| v.norm_sqr()).sum();
            assert!(e_kept >= (1.0 - eps) * e_full - 1e-15);
            assert!(pruned.row(d).len() <= pruned.z());
        }
        for cidx in 0..c.mn() {
            assert!(pruned.col(cidx).len() <= pruned.z());
        }
        // Output error is bounded by the discarded row energy.
        let x = random_grid(16, 8, &mut rng);
        let err = rel_err(&pruned.apply(x.as_slice()), &full.apply(x.as_slice()));
        assert!(err < (eps * c.mn() as f64).sqrt(), "err {err}");
    }

    #[test]
    fn adjacency_is_symmetric() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let c = cfg(8, 4);
        let paths = ChannelModel::default().gen_paths(&c, &mut rng).unwrap();
        let h = build_effective(&paths, &c, 1e-4);
        for d in 0..c.mn() {
            for (slot, &(cc, v)) in h.row(d).iter().enumerate() {
                assert!(h.col(cc).contains(&(d, slot)));
                assert_eq!(h.get(d, cc), v);
            }
        }
        let dense = h.to_dense();
        for cc in 0..c.mn() {
            let col = h.dense_col(cc);
            for d in 0..c.mn() {
                assert_eq!(col[d], dense[(d, cc)]);
            }
        }
    }

    #[test]
    fn generated_paths_respect_model() {
        let c = cfg(4, 4);
        let model = ChannelModel::default();
        let nu_max = model.max_doppler(&c);
        let tau_max = model.max_delay(&c);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..200 {
            let ps = model.gen_paths(&c, &mut rng).unwrap();
            assert_eq!(ps.len(), 4);
            assert_eq!(ps.paths[0].delay, 0.0);
            for p in &ps.paths {
                assert!(p.delay >= 0.0 && p.delay <= tau_max);
                assert!(p.doppler.abs() <= nu_max * (1.0 + 1e-12));
            }
        }
        let still = ChannelModel { velocity_kmph: 0.0, ..model.clone() };
        assert!(still.gen_paths(&c, &mut rng).unwrap().paths.iter().all(|p| p.doppler == 0.0));
        let a = model.gen_paths(&c, &mut ChaCha8Rng::seed_from_u64(77)).unwrap();
        let b = model.gen_paths(&c, &mut ChaCha8Rng::seed_from_u64(77)).unwrap();
        assert_eq!(a.to_text(), b.to_text());
        assert!(ChannelModel { paths: 0, ..model }.gen_paths(&c, &mut rng).is_err());
    }

    #[test]
    fn gains_have_variance_one_over_l() {
        let c = cfg(4, 4);
        let model = ChannelModel { paths: 5, ..Default::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let mut acc = 0.0;
        let draws = 20_000;
        for _ in 0..draws {
            acc += model.gen_paths(&c, &mut rng).unwrap().paths.iter().map(|p| p.gain.norm_sqr()).sum::<f64>();
        }
        let mean_total = acc / draws as f64;
        assert!((mean_total - 1.0).abs() < 0.02, "{mean_total}");
    }

    #[test]
    fn noise_variance_after_filtering() {
        let pulse = PulseShape::raised_cosine(0.4, 10, 1.0).receive_filter();
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let z = colored_noise(200_000, 0.25, &pulse, &mut rng);
        let v = z.iter().map(|x| x.norm_sqr()).sum::<f64>() / z.len() as f64;
        assert!((v - 0.25).abs() < 0.005, "{v}");
    }

    #[test]
    fn text_roundtrip() {
        let c = cfg(4, 4);
        let ps = ChannelModel::default().gen_paths(&c, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        let back = PathSet::from_text(&ps.to_text(), ps.pulse, ps.taps).unwrap();
        assert_eq!(back, ps);
        assert!(PathSet::from_text("1 2 3", ps.pulse, ps.taps).is_err());
        assert!(PathSet::from_text("1 2 x 4", ps.pulse, ps.taps).is_err());
    }

    #[test]
    fn csi_perturbation_bounds() {
        let c = cfg(4, 4);
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let model = ChannelModel::default();
        let ps = model.gen_paths(&c, &mut rng).unwrap();
        assert_eq!(perturb_csi(&ps, 0.0, &mut rng).unwrap(), ps);
        assert!(perturb_csi(&ps, -0.1, &mut rng).is_err());
        for i in 0..10_000 {
            let eps = [0.025, 0.05, 0.1, 0.5][i % 4];
            let est = perturb_csi(&ps, eps, &mut rng).unwrap();
            for (a, b) in ps.paths.iter().zip(&est.paths) {
                assert!((b.gain - a.gain).norm() <= eps * a.gain.norm() * (1.0 + 1e-12));
                assert!((b.delay - a.delay).abs() <= eps * a.delay.abs() * (1.0 + 1e-12));
                assert!((b.doppler - a.doppler).abs() <= eps * a.doppler.abs() * (1.0 + 1e-12));
            }
        }
        let unit = PathSet { paths: vec![Path { gain: Complex64::new(1.0, 0.0), delay: 0.0, doppler: 0.0 }], ..ps };
        let mut max_dev: f64 = 0.0;
        for _ in 0..1000 {
            let est = perturb_csi(&unit, 0.1, &mut rng).unwrap();
            max_dev = max_dev.max((est.paths[0].gain - Complex64::new(1.0, 0.0)).norm());
        }
        assert!(max_dev <= 0.1 && max_dev > 0.09);
    }
}
