//! OTFS transmit and receive transforms.
//!
//! Every transform uses unitary DFT scaling, so
//! `sfft(wigner(heisenberg(isfft(X)))) == X` up to rounding and each stage
//! preserves energy. With rectangular pulses the Heisenberg transform is an
//! `M`-point inverse DFT per time slot and the Wigner transform the matching
//! forward DFT.

use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::frame::{DelayDopplerGrid, FrameConfig};

/// Time-frequency matrix, `data[m + n M] = Xbar[m, n]`.
#[derive(Clone, Debug, PartialEq)]
pub struct TimeFrequencyGrid {
    m: usize,
    n: usize,
    data: Vec<Complex64>,
}

impl TimeFrequencyGrid {
    pub fn from_vec(m: usize, n: usize, data: Vec<Complex64>) -> Result<Self> {
        if data.len() != m * n {
            return Err(Error::domain("time-frequency data does not match dimensions"));
        }
        Ok(TimeFrequencyGrid { m, n, data })
    }

    pub fn get(&self, m: usize, n: usize) -> Complex64 {
        self.data[m + n * self.m]
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.data
    }

    pub fn energy(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum()
    }
}

/// Sampled time-domain signal, optionally carrying a cyclic prefix.
#[derive(Clone, Debug, PartialEq)]
pub struct TimeSignal {
    pub samples: Vec<Complex64>,
    pub cp_len: usize,
}

impl TimeSignal {
    pub fn new(samples: Vec<Complex64>) -> Self {
        TimeSignal { samples, cp_len: 0 }
    }

    /// Samples without the prefix.
    pub fn body(&self) -> &[Complex64] {
        &self.samples[self.cp_len..]
    }

    pub fn energy(&self) -> f64 {
        self.body().iter().map(|z| z.norm_sqr()).sum()
    }
}

/// Prepends `cp_len` samples, each a cyclic copy of the signal body. A
/// prefix longer than the body wraps around it repeatedly.
pub fn add_cp(s: &TimeSignal, cp_len: usize) -> TimeSignal {
    let body = s.body();
    let len = body.len();
    let mut samples = Vec::with_capacity(len + cp_len);
    if len > 0 {
        samples.extend((0..cp_len).map(|i| body[(len - cp_len % len + i) % len]));
    }
    samples.extend_from_slice(body);
    TimeSignal { samples, cp_len }
}

/// Drops the cyclic prefix.
pub fn remove_cp(r: &TimeSignal) -> TimeSignal {
    TimeSignal::new(r.body().to_vec())
}

/// Cached FFT plans for one `M x N` frame.
#[derive(Clone)]
pub struct Modem {
    m: usize,
    n: usize,
    fwd_m: Arc<dyn Fft<f64>>,
    inv_m: Arc<dyn Fft<f64>>,
    fwd_n: Arc<dyn Fft<f64>>,
    inv_n: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for Modem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Modem").field("m", &self.m).field("n", &self.n).finish()
    }
}

impl Modem {
    pub fn new(cfg: &FrameConfig) -> Self {
        Modem::with_dims(cfg.m, cfg.n)
    }

    pub fn with_dims(m: usize, n: usize) -> Self {
        let mut planner = FftPlanner::new();
        Modem {
            m,
            n,
            fwd_m: planner.plan_fft_forward(m),
            inv_m: planner.plan_fft_inverse(m),
            fwd_n: planner.plan_fft_forward(n),
            inv_n: planner.plan_fft_inverse(n),
        }
    }

    fn check(&self, m: usize, n: usize) {
        assert!(m == self.m && n == self.n, "grid is {m}x{n}, modem is {}x{}", self.m, self.n);
    }

    /// Unitary transform of every length-`M` column (contiguous runs).
    fn columns(&self, data: &mut [Complex64], plan: &Arc<dyn Fft<f64>>) {
        plan.process(data);
        let scale = 1.0 / (self.m as f64).sqrt();
        data.iter_mut().for_each(|z| *z *= scale);
    }

    /// Unitary transform along the slow axis (stride `M`).
    fn rows(&self, data: &mut [Complex64], plan: &Arc<dyn Fft<f64>>) {
        let (m, n) = (self.m, self.n);
        let mut t = vec![Complex64::new(0.0, 0.0); m * n];
        for k in 0..n {
            for l in 0..m {
                t[k + l * n] = data[l + k * m];
            }
        }
        plan.process(&mut t);
        let scale = 1.0 / (n as f64).sqrt();
        for k in 0..n {
            for l in 0..m {
                data[l + k * m] = t[k + l * n] * scale;
            }
        }
    }

    /// `Xbar = F_M X F_N^H`.
    pub fn isfft(&self, x: &DelayDopplerGrid) -> TimeFrequencyGrid {
        self.check(x.m(), x.n());
        let mut data = x.vectorize();
        self.columns(&mut data, &self.fwd_m);
        self.rows(&mut data, &self.inv_n);
        TimeFrequencyGrid { m: self.m, n: self.n, data }
    }

    /// `Y = F_M^H Ybar F_N`.
    pub fn sfft(&self, y: &TimeFrequencyGrid) -> DelayDopplerGrid {
        self.check(y.m, y.n);
        let mut data = y.data.clone();
        self.columns(&mut data, &self.inv_m);
        self.rows(&mut data, &self.fwd_n);
        DelayDopplerGrid::devectorize(self.m, self.n, data).expect("dimensions match")
    }

    /// Heisenberg transform with a rectangular pulse of one slot:
    /// `s[n M + u] = M^{-1/2} sum_m Xbar[m, n] e^{j 2 pi m u / M}`.
    pub fn heisenberg(&self, xbar: &TimeFrequencyGrid) -> TimeSignal {
        self.check(xbar.m, xbar.n);
        let mut data = xbar.data.clone();
        self.columns(&mut data, &self.inv_m);
        TimeSignal::new(data)
    }

    /// Wigner transform (matched rectangular pulse) of a prefix-free signal.
    pub fn wigner(&self, r: &TimeSignal) -> Result<TimeFrequencyGrid> {
        let body = r.body();
        if body.len() != self.m * self.n {
            return Err(Error::domain(format!(
                "received {} samples, frame needs {}",
                body.len(),
                self.m * self.n
            )));
        }
        let mut data = body.to_vec();
        self.columns(&mut data, &self.fwd_m);
        Ok(TimeFrequencyGrid { m: self.m, n: self.n, data })
    }

    /// ISFFT followed by the Heisenberg transform.
    pub fn modulate(&self, x: &DelayDopplerGrid) -> TimeSignal {
        self.heisenberg(&self.isfft(x))
    }

    /// Wigner transform followed by the SFFT.
    pub fn demodulate(&self, r: &TimeSignal) -> Result<DelayDopplerGrid> {
        Ok(self.sfft(&self.wigner(r)?))
    }
}
