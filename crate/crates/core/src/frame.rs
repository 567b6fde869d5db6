//! Frame geometry: delay-Doppler grid dimensions, subframe tiling, IM block
//! layout and the grid <-> vector mapping every other module relies on.
//!
//! Delay and Doppler indices are 0-based. Subframe indices (`beta`) and
//! global block indices (`f`) are 1-based so the tiling formulas keep their
//! familiar shape.

use std::f64::consts::FRAC_1_SQRT_2;
use std::ops::{Index, IndexMut};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How resource units are grouped and activated inside a subframe.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    /// Delay-dimension blocks: block `b` is delay row `b-1` across all
    /// Doppler bins of the subframe.
    Deim,
    /// Doppler-dimension blocks: block `b` is Doppler column `b-1` across
    /// all delay bins of the subframe.
    Doim,
    /// Unit-wise IM baseline: every resource unit is its own block and
    /// `k_hat` units are activated per subframe.
    Randim,
    /// Plain OTFS: every unit carries a symbol, no index bits.
    Plain,
}

impl Scheme {
    pub fn name(self) -> &'static str {
        match self {
            Scheme::Deim => "deim",
            Scheme::Doim => "doim",
            Scheme::Randim => "randim",
            Scheme::Plain => "plain",
        }
    }
}

impl std::str::FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "deim" => Ok(Scheme::Deim),
            "doim" => Ok(Scheme::Doim),
            "randim" | "random" | "randomim" => Ok(Scheme::Randim),
            "plain" | "otfs" => Ok(Scheme::Plain),
            other => Err(Error::domain(format!("unknown scheme `{other}`"))),
        }
    }
}

impl std::fmt::Display for Scheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Unit-average-power constellation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Modulation {
    /// 0 -> +1, 1 -> -1.
    Bpsk,
    /// Gray map: 00 -> (1+j), 01 -> (1-j), 11 -> (-1-j), 10 -> (-1+j), all / sqrt(2).
    Qpsk,
}

impl Modulation {
    /// Constellation size `M_c`.
    pub fn order(self) -> usize {
        match self {
            Modulation::Bpsk => 2,
            Modulation::Qpsk => 4,
        }
    }

    pub fn bits_per_symbol(self) -> usize {
        match self {
            Modulation::Bpsk => 1,
            Modulation::Qpsk => 2,
        }
    }

    /// Constellation point for a big-endian bit word `word < order()`.
    pub fn point(self, word: usize) -> Complex64 {
        match self {
            Modulation::Bpsk => {
                if word & 1 == 0 {
                    Complex64::new(1.0, 0.0)
                } else {
                    Complex64::new(-1.0, 0.0)
                }
            }
            Modulation::Qpsk => {
                let re = if word & 0b10 == 0 { FRAC_1_SQRT_2 } else { -FRAC_1_SQRT_2 };
                let im = if word & 0b01 == 0 { FRAC_1_SQRT_2 } else { -FRAC_1_SQRT_2 };
                Complex64::new(re, im)
            }
        }
    }

    /// All points, indexed by bit word.
    pub fn points(self) -> Vec<Complex64> {
        (0..self.order()).map(|w| self.point(w)).collect()
    }

    /// Nearest-point hard decision, returning the bit word.
    pub fn decide(self, x: Complex64) -> usize {
        match self {
            Modulation::Bpsk => usize::from(x.re < 0.0),
            Modulation::Qpsk => (usize::from(x.re < 0.0) << 1) | usize::from(x.im < 0.0),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Modulation::Bpsk => "bpsk",
            Modulation::Qpsk => "qpsk",
        }
    }
}

impl std::str::FromStr for Modulation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "bpsk" => Ok(Modulation::Bpsk),
            "qpsk" => Ok(Modulation::Qpsk),
            other => Err(Error::domain(format!("unknown modulation `{other}`"))),
        }
    }
}

/// Static dimensions and IM parameters of one OTFS frame.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameConfig {
    /// Delay bins (subcarriers).
    pub m: usize,
    /// Doppler bins (time slots).
    pub n: usize,
    /// Subcarrier spacing in Hz.
    pub delta_f: f64,
    /// Slot duration in seconds; must equal `1 / delta_f`.
    pub slot: f64,
    pub m_hat: usize,
    pub n_hat: usize,
    /// Active blocks per subframe (active units for [`Scheme::Randim`]).
    pub k_hat: usize,
    pub scheme: Scheme,
    pub modulation: Modulation,
    pub carrier_hz: f64,
}

impl FrameConfig {
    /// Builds and validates a configuration with `slot = 1 / delta_f`.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        m: usize,
        n: usize,
        m_hat: usize,
        n_hat: usize,
        k_hat: usize,
        scheme: Scheme,
        modulation: Modulation,
        delta_f: f64,
        carrier_hz: f64,
    ) -> Result<Self> {
        let cfg = FrameConfig {
            m,
            n,
            delta_f,
            slot: 1.0 / delta_f,
            m_hat,
            n_hat,
            k_hat,
            scheme,
            modulation,
            carrier_hz,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// The 4x4 single-subframe configuration used for ML experiments
    /// (15 kHz spacing, 4 GHz carrier, one active block, QPSK).
    pub fn desk(scheme: Scheme) -> Self {
        let k_hat = if scheme == Scheme::Randim { 2 } else { 1 };
        FrameConfig::new(4, 4, 4, 4, k_hat, scheme, Modulation::Qpsk, 15e3, 4e9)
            .expect("desk configuration is valid")
    }

    pub fn validate(&self) -> Result<()> {
        if self.m == 0 || self.n == 0 || self.m_hat == 0 || self.n_hat == 0 {
            return Err(Error::config("grid and subframe dimensions must be positive"));
        }
        if self.m % self.m_hat != 0 || self.n % self.n_hat != 0 {
            return Err(Error::config(format!(
                "subframe {}x{} does not tile the {}x{} frame",
                self.m_hat, self.n_hat, self.m, self.n
            )));
        }
        if !(self.delta_f > 0.0) || !(self.slot > 0.0) {
            return Err(Error::config("subcarrier spacing and slot duration must be positive"));
        }
        if ((self.slot * self.delta_f) - 1.0).abs() > 1e-9 {
            return Err(Error::config("slot duration must equal 1 / subcarrier spacing"));
        }
        let blocks = self.blocks_per_subframe();
        if self.active_blocks() == 0 || self.active_blocks() > blocks {
            return Err(Error::config(format!(
                "k_hat = {} outside 1..={blocks} for {}",
                self.k_hat, self.scheme
            )));
        }
        Ok(())
    }

    /// `M * N`.
    pub fn mn(&self) -> usize {
        self.m * self.n
    }

    /// `M / M_hat`.
    pub fn m_bar(&self) -> usize {
        self.m / self.m_hat
    }

    /// `N / N_hat`.
    pub fn n_bar(&self) -> usize {
        self.n / self.n_hat
    }

    /// Number of subframes `J`.
    pub fn subframes(&self) -> usize {
        self.m_bar() * self.n_bar()
    }

    /// Delay-domain sample interval `T_s = 1 / (M delta_f)`.
    pub fn sample_interval(&self) -> f64 {
        1.0 / (self.m as f64 * self.delta_f)
    }

    /// Units per subframe, `M_hat * N_hat`.
    pub fn subframe_units(&self) -> usize {
        self.m_hat * self.n_hat
    }

    pub fn blocks_per_subframe(&self) -> usize {
        match self.scheme {
            Scheme::Deim => self.m_hat,
            Scheme::Doim => self.n_hat,
            Scheme::Randim => self.m_hat * self.n_hat,
            Scheme::Plain => 1,
        }
    }

    /// Units per block (`|D(f)|`).
    pub fn units_per_block(&self) -> usize {
        match self.scheme {
            Scheme::Deim => self.n_hat,
            Scheme::Doim => self.m_hat,
            Scheme::Randim => 1,
            Scheme::Plain => self.m_hat * self.n_hat,
        }
    }

    /// Active blocks per subframe; plain OTFS always has its single block on.
    pub fn active_blocks(&self) -> usize {
        match self.scheme {
            Scheme::Plain => 1,
            _ => self.k_hat,
        }
    }

    /// Total number of blocks in the frame.
    pub fn num_blocks(&self) -> usize {
        self.blocks_per_subframe() * self.subframes()
    }

    pub fn block_id(&self, f: usize) -> Result<BlockId> {
        BlockId::from_global(f, self)
    }

    /// `K(beta)`: global indices of the blocks of subframe `beta`.
    pub fn subframe_blocks(&self, beta: usize) -> std::ops::RangeInclusive<usize> {
        let per = self.blocks_per_subframe();
        (beta - 1) * per + 1..=beta * per
    }

    /// Vectorization index `l + k M`.
    pub fn unit_index(&self, l: usize, k: usize) -> usize {
        l + k * self.m
    }

    /// Inverse of [`FrameConfig::unit_index`].
    pub fn unit_coords(&self, rho: usize) -> (usize, usize) {
        (rho % self.m, rho / self.m)
    }
}

/// Subframe `beta = floor(l / M_hat) + (M / M_hat) floor(k / N_hat) + 1`.
pub fn subframe_of(l: usize, k: usize, cfg: &FrameConfig) -> Result<usize> {
    if l >= cfg.m || k >= cfg.n {
        return Err(Error::domain(format!(
            "grid index ({l}, {k}) outside {}x{}",
            cfg.m, cfg.n
        )));
    }
    Ok(l / cfg.m_hat + cfg.m_bar() * (k / cfg.n_hat) + 1)
}

/// Top-left corner `(l, k)` of subframe `beta`.
fn subframe_origin(beta: usize, cfg: &FrameConfig) -> (usize, usize) {
    let idx = beta - 1;
    let l_bar = idx % cfg.m_bar();
    let k_bar = idx / cfg.m_bar();
    (l_bar * cfg.m_hat, k_bar * cfg.n_hat)
}

/// A block addressed both by (subframe, local index) and globally.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct BlockId {
    pub beta: usize,
    pub b: usize,
    pub f: usize,
}

impl BlockId {
    pub fn new(beta: usize, b: usize, cfg: &FrameConfig) -> Result<Self> {
        let per = cfg.blocks_per_subframe();
        if beta == 0 || beta > cfg.subframes() || b == 0 || b > per {
            return Err(Error::domain(format!("block (beta={beta}, b={b}) out of range")));
        }
        Ok(BlockId { beta, b, f: (beta - 1) * per + b })
    }

    pub fn from_global(f: usize, cfg: &FrameConfig) -> Result<Self> {
        let per = cfg.blocks_per_subframe();
        if f == 0 || f > cfg.num_blocks() {
            return Err(Error::domain(format!(
                "block index {f} outside 1..={}",
                cfg.num_blocks()
            )));
        }
        Ok(BlockId { beta: (f - 1) / per + 1, b: (f - 1) % per + 1, f })
    }
}

/// `D(f)`: grid coordinates of the units of block `f`, in scan order
/// (ascending Doppler index for DeIM, ascending delay index for DoIM,
/// vectorization order for plain OTFS).
pub fn block_units(f: usize, cfg: &FrameConfig) -> Result<Vec<(usize, usize)>> {
    let id = BlockId::from_global(f, cfg)?;
    let (l0, k0) = subframe_origin(id.beta, cfg);
    let off = id.b - 1;
    let units = match cfg.scheme {
        Scheme::Deim => (0..cfg.n_hat).map(|kk| (l0 + off, k0 + kk)).collect(),
        Scheme::Doim => (0..cfg.m_hat).map(|ll| (l0 + ll, k0 + off)).collect(),
        Scheme::Randim => vec![(l0 + off % cfg.m_hat, k0 + off / cfg.m_hat)],
        Scheme::Plain => (0..cfg.n_hat)
            .flat_map(|kk| (0..cfg.m_hat).map(move |ll| (l0 + ll, k0 + kk)))
            .collect(),
    };
    Ok(units)
}

/// Vectorized unit indices of every block, `result[f - 1] = D(f)`.
pub fn block_unit_indices(cfg: &FrameConfig) -> Vec<Vec<usize>> {
    (1..=cfg.num_blocks())
        .map(|f| {
            block_units(f, cfg)
                .expect("f in range")
                .into_iter()
                .map(|(l, k)| cfg.unit_index(l, k))
                .collect()
        })
        .collect()
}

/// Complex `M x N` matrix over the delay-Doppler grid. Storage is the
/// vectorized layout, `data[l + k M] = X[l, k]`.
#[derive(Clone, Debug, PartialEq)]
pub struct DelayDopplerGrid {
    m: usize,
    n: usize,
    data: Vec<Complex64>,
}

impl DelayDopplerGrid {
    pub fn zeros(m: usize, n: usize) -> Self {
        DelayDopplerGrid { m, n, data: vec![Complex64::new(0.0, 0.0); m * n] }
    }

    /// Inverse of [`DelayDopplerGrid::vectorize`].
    pub fn devectorize(m: usize, n: usize, x: Vec<Complex64>) -> Result<Self> {
        if x.len() != m * n {
            return Err(Error::domain(format!(
                "vector of length {} cannot fill a {m}x{n} grid",
                x.len()
            )));
        }
        Ok(DelayDopplerGrid { m, n, data: x })
    }

    /// `out[l + k M] = X[l, k]`.
    pub fn vectorize(&self) -> Vec<Complex64> {
        self.data.clone()
    }

    pub fn into_vec(self) -> Vec<Complex64> {
        self.data
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [Complex64] {
        &mut self.data
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn energy(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum()
    }
}

impl Index<(usize, usize)> for DelayDopplerGrid {
    type Output = Complex64;

    fn index(&self, (l, k): (usize, usize)) -> &Complex64 {
        assert!(l < self.m && k < self.n, "grid index out of bounds");
        &self.data[l + k * self.m]
    }
}

impl IndexMut<(usize, usize)> for DelayDopplerGrid {
    fn index_mut(&mut self, (l, k): (usize, usize)) -> &mut Complex64 {
        assert!(l < self.m && k < self.n, "grid index out of bounds");
        &mut self.data[l + k * self.m]
    }
}
