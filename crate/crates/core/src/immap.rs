//! Bit <-> (activation pattern, constellation symbols) mapping.
//!
//! Each subframe consumes `p = p1 + p2` bits: the first `p1` select a
//! combination of active blocks from a look-up table, the remaining `p2`
//! are Gray-mapped onto the active units in scan order (ascending block,
//! then the block's own unit order, see [`crate::frame::block_units`]).

use std::collections::HashMap;

use num_complex::Complex64;
use rand::Rng;

use crate::error::{Error, Result};
use crate::frame::{block_unit_indices, DelayDopplerGrid, FrameConfig};

/// Largest index-bit width a table may be materialized for.
const MAX_INDEX_BITS: u32 = 24;

/// Binomial coefficient, saturating at `u128::MAX`.
pub fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = match acc.checked_mul((n - i) as u128) {
            Some(v) => v / (i as u128 + 1),
            None => return u128::MAX,
        };
    }
    acc
}

fn floor_log2(x: u128) -> u32 {
    debug_assert!(x > 0);
    127 - x.leading_zeros()
}

/// Index-bit word -> block combination. Entry `r` is the `r`-th
/// lexicographic combination of `1..=n_blocks`; combinations beyond the
/// largest power of two are abandoned.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LookupTable {
    n_blocks: usize,
    k_hat: usize,
    p1: usize,
    entries: Vec<Vec<usize>>,
    ranks: HashMap<Vec<usize>, usize>,
}

impl LookupTable {
    pub fn index_bits(&self) -> usize {
        self.p1
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Sorted 1-based block indices of the entry with the given rank.
    pub fn entry(&self, rank: usize) -> &[usize] {
        &self.entries[rank]
    }

    pub fn entries(&self) -> &[Vec<usize>] {
        &self.entries
    }

    /// Reverse look-up of an exact combination.
    pub fn rank_of(&self, blocks: &[usize]) -> Option<usize> {
        self.ranks.get(blocks).copied()
    }

    /// Rank of the entry sharing the most blocks with `blocks`, lowest rank
    /// on ties. Exact matches always win.
    pub fn nearest_rank(&self, blocks: &[usize]) -> usize {
        if let Some(r) = self.rank_of(blocks) {
            return r;
        }
        let mut best = (0usize, 0usize);
        for (rank, entry) in self.entries.iter().enumerate() {
            let overlap = entry.iter().filter(|b| blocks.contains(b)).count();
            if overlap > best.1 {
                best = (rank, overlap);
            }
        }
        best.0
    }

    pub fn n_blocks(&self) -> usize {
        self.n_blocks
    }

    pub fn k_hat(&self) -> usize {
        self.k_hat
    }
}

/// Builds the lexicographically truncated table for `k_hat` of `n_blocks`.
pub fn build_lookup(n_blocks: usize, k_hat: usize) -> Result<LookupTable> {
    if k_hat == 0 || k_hat > n_blocks {
        return Err(Error::domain(format!("cannot choose {k_hat} of {n_blocks} blocks")));
    }
    let p1 = floor_log2(binomial(n_blocks, k_hat));
    if p1 > MAX_INDEX_BITS {
        return Err(Error::config(format!("look-up table with {p1} index bits is too large")));
    }
    let size = 1usize << p1;
    let mut entries = Vec::with_capacity(size);
    let mut comb: Vec<usize> = (1..=k_hat).collect();
    loop {
        entries.push(comb.clone());
        if entries.len() == size {
            break;
        }
        // Advance to the next combination in lexicographic order.
        let mut i = k_hat;
        while i > 0 && comb[i - 1] == n_blocks - k_hat + i {
            i -= 1;
        }
        debug_assert!(i > 0, "ran out of combinations before filling the table");
        comb[i - 1] += 1;
        for j in i..k_hat {
            comb[j] = comb[j - 1] + 1;
        }
    }
    let ranks = entries.iter().cloned().enumerate().map(|(r, e)| (e, r)).collect();
    Ok(LookupTable { n_blocks, k_hat, p1: p1 as usize, entries, ranks })
}

/// Spectral efficiency in bits per delay-Doppler resource unit.
pub fn spectral_efficiency(cfg: &FrameConfig) -> f64 {
    let p1 = floor_log2(binomial(cfg.blocks_per_subframe(), cfg.active_blocks())) as usize;
    let p2 = cfg.active_blocks() * cfg.units_per_block() * cfg.modulation.bits_per_symbol();
    (p1 + p2) as f64 / cfg.subframe_units() as f64
}

/// Information bits of one frame.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct BitPayload(pub Vec<u8>);

impl BitPayload {
    pub fn random<R: Rng + ?Sized>(len: usize, rng: &mut R) -> Self {
        BitPayload((0..len).map(|_| rng.random_range(0..2u8)).collect())
    }

    /// Big-endian expansion of `value` into `len` bits.
    pub fn from_integer(value: u64, len: usize) -> Self {
        BitPayload((0..len).map(|i| ((value >> (len - 1 - i)) & 1) as u8).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn hamming(&self, other: &BitPayload) -> usize {
        self.0.iter().zip(&other.0).filter(|(a, b)| a != b).count()
    }
}

/// Active blocks of every subframe.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct ActivationPattern {
    /// `per_subframe[beta - 1]` holds sorted local block indices `b`.
    pub per_subframe: Vec<Vec<usize>>,
}

impl ActivationPattern {
    /// Global block indices `f`, ascending.
    pub fn global_blocks(&self, cfg: &FrameConfig) -> Vec<usize> {
        let per = cfg.blocks_per_subframe();
        self.per_subframe
            .iter()
            .enumerate()
            .flat_map(|(beta0, bs)| bs.iter().map(move |b| beta0 * per + b))
            .collect()
    }

    /// Vectorized indices of the active units in scan order.
    pub fn active_units(&self, cfg: &FrameConfig, blocks: &[Vec<usize>]) -> Vec<usize> {
        self.global_blocks(cfg)
            .into_iter()
            .flat_map(|f| blocks[f - 1].iter().copied())
            .collect()
    }

    pub fn unit_mask(&self, cfg: &FrameConfig) -> Vec<bool> {
        let blocks = block_unit_indices(cfg);
        let mut mask = vec![false; cfg.mn()];
        for u in self.active_units(cfg, &blocks) {
            mask[u] = true;
        }
        mask
    }
}

/// Frame-level IM mapper bound to one configuration.
#[derive(Clone, Debug)]
pub struct IndexModulator {
    cfg: FrameConfig,
    table: LookupTable,
    blocks: Vec<Vec<usize>>,
    points: Vec<Complex64>,
}

impl IndexModulator {
    pub fn new(cfg: &FrameConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(IndexModulator {
            cfg: cfg.clone(),
            table: build_lookup(cfg.blocks_per_subframe(), cfg.active_blocks())?,
            blocks: block_unit_indices(cfg),
            points: cfg.modulation.points(),
        })
    }

    pub fn config(&self) -> &FrameConfig {
        &self.cfg
    }

    pub fn table(&self) -> &LookupTable {
        &self.table
    }

    /// `result[f - 1]` = vectorized units of block `f`, scan order.
    pub fn block_units(&self) -> &[Vec<usize>] {
        &self.blocks
    }

    /// `p1`.
    pub fn index_bits(&self) -> usize {
        self.table.index_bits()
    }

    /// `p2`.
    pub fn symbol_bits(&self) -> usize {
        self.active_units_per_subframe() * self.cfg.modulation.bits_per_symbol()
    }

    pub fn active_units_per_subframe(&self) -> usize {
        self.cfg.active_blocks() * self.cfg.units_per_block()
    }

    /// `p = p1 + p2`.
    pub fn bits_per_subframe(&self) -> usize {
        self.index_bits() + self.symbol_bits()
    }

    /// `B = (p1 + p2) J`.
    pub fn payload_bits(&self) -> usize {
        self.bits_per_subframe() * self.cfg.subframes()
    }

    /// True for payload positions carrying index bits.
    pub fn is_index_bit(&self, pos: usize) -> bool {
        pos % self.bits_per_subframe() < self.index_bits()
    }

    /// Counts (index, symbol) bit errors between two payloads.
    pub fn count_errors(&self, sent: &BitPayload, got: &BitPayload) -> (usize, usize) {
        let mut idx = 0;
        let mut sym = 0;
        for (pos, (a, b)) in sent.0.iter().zip(&got.0).enumerate() {
            if a != b {
                if self.is_index_bit(pos) {
                    idx += 1;
                } else {
                    sym += 1;
                }
            }
        }
        (idx, sym)
    }

    /// Maps a payload onto the grid; inactive units are exactly zero.
    pub fn map_bits(&self, bits: &BitPayload) -> Result<(DelayDopplerGrid, ActivationPattern)> {
        if bits.len() != self.payload_bits() {
            return Err(Error::domain(format!(
                "payload has {} bits, frame carries {}",
                bits.len(),
                self.payload_bits()
            )));
        }
        let cfg = &self.cfg;
        let bps = cfg.modulation.bits_per_symbol();
        let mut grid = DelayDopplerGrid::zeros(cfg.m, cfg.n);
        let mut per_subframe = Vec::with_capacity(cfg.subframes());
        for (beta0, chunk) in bits.0.chunks(self.bits_per_subframe()).enumerate() {
            let (index_bits, symbol_bits) = chunk.split_at(self.index_bits());
            let rank = bits_to_word(index_bits);
            let combo = self.table.entry(rank).to_vec();
            let mut words = symbol_bits.chunks(bps).map(bits_to_word);
            let x = grid.as_mut_slice();
            for &b in &combo {
                let f = beta0 * cfg.blocks_per_subframe() + b;
                for &u in &self.blocks[f - 1] {
                    x[u] = self.points[words.next().expect("p2 covers every active unit")];
                }
            }
            per_subframe.push(combo);
        }
        Ok((grid, ActivationPattern { per_subframe }))
    }

    /// Inverse of [`IndexModulator::map_bits`] from soft symbol estimates:
    /// each active unit is hard-decided to the nearest constellation point.
    pub fn demap(&self, x_hat: &DelayDopplerGrid, pattern: &ActivationPattern) -> BitPayload {
        let m = self.cfg.modulation;
        let x = x_hat.as_slice();
        self.demap_with(pattern, |u| m.decide(x[u]))
    }

    /// Inverse mapping from per-unit symbol words (`words[u]` is read only
    /// for active units).
    pub fn demap_words(&self, pattern: &ActivationPattern, words: &[usize]) -> BitPayload {
        self.demap_with(pattern, |u| words[u])
    }

    fn demap_with(&self, pattern: &ActivationPattern, word_of: impl Fn(usize) -> usize) -> BitPayload {
        let cfg = &self.cfg;
        let bps = cfg.modulation.bits_per_symbol();
        let mut out = Vec::with_capacity(self.payload_bits());
        for (beta0, detected) in pattern.per_subframe.iter().enumerate() {
            // Off-table patterns fall back to the closest table entry.
            let rank = self.table.nearest_rank(detected);
            push_word(&mut out, rank, self.index_bits());
            let combo = self.table.entry(rank);
            for &b in combo {
                let f = beta0 * cfg.blocks_per_subframe() + b;
                for &u in &self.blocks[f - 1] {
                    push_word(&mut out, word_of(u), bps);
                }
            }
        }
        BitPayload(out)
    }
}

pub(crate) fn bits_to_word(bits: &[u8]) -> usize {
    bits.iter().fold(0usize, |acc, &b| (acc << 1) | b as usize)
}

pub(crate) fn push_word(out: &mut Vec<u8>, word: usize, width: usize) {
    for i in (0..width).rev() {
        out.push(((word >> i) & 1) as u8);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frame::{Modulation, Scheme};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Independent enumeration: all k-subsets of 1..=n sorted lexicographically.
    fn all_combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
        let mut out: Vec<Vec<usize>> = (0u32..1 << n)
            .filter(|m| m.count_ones() as usize == k)
            .map(|m| (0..n).filter(|i| m >> i & 1 == 1).map(|i| i + 1).collect())
            .collect();
        out.sort();
        out
    }

    #[test]
    fn table_matches_published_example() {
        let t = build_lookup(4, 2).unwrap();
        assert_eq!(t.index_bits(), 2);
        assert_eq!(t.entries(), &[vec![1, 2], vec![1, 3], vec![1, 4], vec![2, 3]]);
        assert_eq!(t.rank_of(&[2, 3]), Some(0b11));
    }

    #[test]
    fn table_single_active() {
        let t = build_lookup(4, 1).unwrap();
        assert_eq!(t.index_bits(), 2);
        assert_eq!(t.entries(), &[vec![1], vec![2], vec![3], vec![4]]);
    }

    #[test]
    fn table_truncates_lexicographically() {
        let t = build_lookup(8, 4).unwrap();
        assert_eq!(t.index_bits(), 6);
        let all = all_combinations(8, 4);
        assert_eq!(all.len(), 70);
        assert_eq!(t.entries(), &all[..64]);
        let t = build_lookup(16, 2).unwrap();
        assert_eq!(t.entries(), &all_combinations(16, 2)[..64]);
        assert!(build_lookup(3, 4).is_err());
    }

    #[test]
    fn abandoned_pattern_falls_back_deterministically() {
        let t = build_lookup(4, 2).unwrap();
        // {3,4} overlaps {1,3},{1,4},{2,3} by one block each; lowest rank wins.
        assert_eq!(t.nearest_rank(&[3, 4]), 1);
        // {2,4} overlaps {1,2},{1,4},{2,3}.
        assert_eq!(t.nearest_rank(&[2, 4]), 0);
    }

    #[test]
    fn spectral_efficiency_examples() {
        let mut c = FrameConfig::desk(Scheme::Deim);
        assert!((spectral_efficiency(&c) - 0.625).abs() < 1e-15);
        c.k_hat = 2;
        assert!((spectral_efficiency(&c) - 1.125).abs() < 1e-15);
        let c = FrameConfig::new(8, 4, 8, 4, 4, Scheme::Deim, Modulation::Bpsk, 15e3, 4e9).unwrap();
        assert!((spectral_efficiency(&c) - 0.6875).abs() < 1e-15);
        assert!((spectral_efficiency(&FrameConfig::desk(Scheme::Doim)) - 0.625).abs() < 1e-15);
        assert!((spectral_efficiency(&FrameConfig::desk(Scheme::Randim)) - 0.625).abs() < 1e-15);
    }

    #[test]
    fn map_bits_example() {
        let c = FrameConfig::new(4, 4, 4, 4, 1, Scheme::Deim, Modulation::Bpsk, 15e3, 4e9).unwrap();
        let im = IndexModulator::new(&c).unwrap();
        assert_eq!(im.payload_bits(), 6);
        let (x, pat) = im.map_bits(&BitPayload(vec![0, 0, 1, 1, 1, 1])).unwrap();
        assert_eq!(pat.per_subframe, vec![vec![1]]);
        for k in 0..4 {
            assert_eq!(x[(0, k)], Complex64::new(-1.0, 0.0));
            for l in 1..4 {
                assert_eq!(x[(l, k)], Complex64::new(0.0, 0.0));
            }
        }
        let (x, _) = im.map_bits(&BitPayload(vec![0; 6])).unwrap();
        assert!((0..4).all(|k| x[(0, k)] == Complex64::new(1.0, 0.0)));
        assert!(im.map_bits(&BitPayload(vec![0; 5])).is_err());
    }

    #[test]
    fn demap_reverse_lookup() {
        let mut c = FrameConfig::desk(Scheme::Deim);
        c.k_hat = 2;
        let im = IndexModulator::new(&c).unwrap();
        let words = vec![0usize; c.mn()];
        let bits = im.demap_words(&ActivationPattern { per_subframe: vec![vec![2, 3]] }, &words);
        assert_eq!(&bits.0[..2], &[1, 1]);
        let bits = im.demap_words(&ActivationPattern { per_subframe: vec![vec![3, 4]] }, &words);
        assert_eq!(&bits.0[..2], &[0, 1]);
        assert_eq!(bits.len(), im.payload_bits());
    }

    #[test]
    fn error_split_follows_layout() {
        let im = IndexModulator::new(&FrameConfig::desk(Scheme::Deim)).unwrap();
        let a = BitPayload(vec![0; 10]);
        let mut b = a.clone();
        b.0[1] = 1;
        b.0[5] = 1;
        b.0[9] = 1;
        assert_eq!(im.count_errors(&a, &b), (1, 2));
    }

    #[test]
    fn roundtrip_random_payloads_all_schemes() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let cfgs = [
            FrameConfig::desk(Scheme::Deim),
            FrameConfig::desk(Scheme::Doim),
            FrameConfig::desk(Scheme::Randim),
            FrameConfig::desk(Scheme::Plain),
            FrameConfig::new(16, 8, 4, 4, 1, Scheme::Deim, Modulation::Qpsk, 15e3, 4e9).unwrap(),
            FrameConfig::new(16, 8, 4, 4, 2, Scheme::Doim, Modulation::Bpsk, 15e3, 4e9).unwrap(),
            FrameConfig::new(8, 4, 8, 4, 4, Scheme::Deim, Modulation::Bpsk, 15e3, 4e9).unwrap(),
        ];
        for c in &cfgs {
            let im = IndexModulator::new(c).unwrap();
            let sub_bits = im.bits_per_subframe() as f64;
            assert!((spectral_efficiency(c) * c.subframe_units() as f64 - sub_bits).abs() < 1e-12);
            for _ in 0..10_000 / cfgs.len() {
                let bits = BitPayload::random(im.payload_bits(), &mut rng);
                let (x, pat) = im.map_bits(&bits).unwrap();
                let nz: Vec<_> = x.as_slice().iter().filter(|z| z.norm() > 0.0).collect();
                assert_eq!(nz.len(), im.active_units_per_subframe() * c.subframes());
                assert!(nz.iter().all(|z| (z.norm() - 1.0).abs() < 1e-12));
                let mask = pat.unit_mask(c);
                assert!(x.as_slice().iter().zip(&mask).all(|(z, &on)| on == (z.norm() > 0.0)));
                assert_eq!(im.demap(&x, &pat), bits);
            }
        }
    }

    #[test]
    fn binomial_values() {
        assert_eq!(binomial(4, 2), 6);
        assert_eq!(binomial(8, 4), 70);
        assert_eq!(binomial(16, 2), 120);
        assert_eq!(binomial(3, 5), 0);
        assert_eq!(binomial(64, 32), 1832624140942590534);
    }
}
