//! Exhaustive maximum-likelihood detection for small frames.

use num_complex::Complex64;

use crate::channel::EffectiveChannel;
use crate::error::{Error, Result};
use crate::immap::{ActivationPattern, IndexModulator};

/// Best candidate of an exhaustive search.
#[derive(Clone, Debug, PartialEq)]
pub struct MlDecision {
    pub pattern: ActivationPattern,
    /// Symbol word per unit (meaningful on active units only).
    pub words: Vec<usize>,
    /// `||y - H x||^2` of the winner.
    pub metric: f64,
    pub candidates: u128,
}

/// Number of frames the ML search visits:
/// `(2^p1 M_c^(k_hat * units_per_block))^J`.
pub fn candidate_count(modulator: &IndexModulator) -> u128 {
    let cfg = modulator.config();
    let per_sub = (modulator.table().len() as u128)
        .saturating_mul(pow_sat(cfg.modulation.order() as u128, modulator.active_units_per_subframe()));
    pow_sat(per_sub, cfg.subframes())
}

fn pow_sat(base: u128, exp: usize) -> u128 {
    (0..exp).fold(1u128, |acc, _| acc.saturating_mul(base))
}

struct Search<'a> {
    mn: usize,
    /// `colsym[c][w]` = nonzeros of `H[:, c] * s_w`.
    colsym: Vec<Vec<Vec<(usize, Complex64)>>>,
    /// `units[beta][rank]` = active units of that pattern.
    units: &'a [Vec<Vec<usize>>],
    /// Residual per depth, flat.
    resid: Vec<Complex64>,
    ranks: Vec<usize>,
    words: Vec<usize>,
    best: f64,
    best_ranks: Vec<usize>,
    best_words: Vec<usize>,
}

impl Search<'_> {
    fn subframe(&mut self, beta: usize, depth: usize) {
        if beta == self.units.len() {
            let r = &self.resid[depth * self.mn..(depth + 1) * self.mn];
            let metric: f64 = r.iter().map(|z| z.norm_sqr()).sum();
            if metric < self.best {
                self.best = metric;
                self.best_ranks.copy_from_slice(&self.ranks);
                self.best_words.copy_from_slice(&self.words);
            }
            return;
        }
        for rank in 0..self.units[beta].len() {
            self.ranks[beta] = rank;
            self.unit(beta, rank, 0, depth);
        }
    }

    fn unit(&mut self, beta: usize, rank: usize, i: usize, depth: usize) {
        let units = &self.units[beta][rank];
        if i == units.len() {
            self.subframe(beta + 1, depth);
            return;
        }
        let c = units[i];
        let mn = self.mn;
        for w in 0..self.colsym[c].len() {
            let (head, tail) = self.resid.split_at_mut((depth + 1) * mn);
            let next = &mut tail[..mn];
            next.copy_from_slice(&head[depth * mn..]);
            for &(d, v) in &self.colsym[c][w] {
                next[d] -= v;
            }
            self.words[c] = w;
            self.unit(beta, rank, i + 1, depth + 1);
        }
    }
}

/// Minimizes `||y - H x||^2` over every valid frame. Fails when the search
/// would visit more than `cap` candidates.
pub fn ml_detect(
    y: &[Complex64],
    h: &EffectiveChannel,
    modulator: &IndexModulator,
    cap: u128,
) -> Result<MlDecision> {
    let candidates = candidate_count(modulator);
    if candidates > cap {
        return Err(Error::Infeasible { what: "ML search", count: candidates, cap });
    }
    let cfg = modulator.config();
    let mn = cfg.mn();
    if y.len() != mn || h.dim() != mn {
        return Err(Error::domain(format!("expected {mn} observations, got {}", y.len())));
    }
    let points = cfg.modulation.points();
    let colsym = (0..mn)
        .map(|c| {
            let col: Vec<(usize, Complex64)> = h.col(c).iter().map(|&(d, slot)| (d, h.row(d)[slot].1)).collect();
            points.iter().map(|s| col.iter().map(|&(d, v)| (d, v * s)).collect()).collect()
        })
        .collect();
    let per = cfg.blocks_per_subframe();
    let blocks = modulator.block_units();
    let units: Vec<Vec<Vec<usize>>> = (0..cfg.subframes())
        .map(|beta| {
            modulator
                .table()
                .entries()
                .iter()
                .map(|combo| combo.iter().flat_map(|&b| blocks[beta * per + b - 1].iter().copied()).collect())
                .collect()
        })
        .collect();
    let depth = modulator.active_units_per_subframe() * cfg.subframes();
    let mut resid = vec![Complex64::new(0.0, 0.0); (depth + 1) * mn];
    resid[..mn].copy_from_slice(y);
    let mut s = Search {
        mn,
        colsym,
        units: &units,
        resid,
        ranks: vec![0; cfg.subframes()],
        words: vec![0; mn],
        best: f64::INFINITY,
        best_ranks: vec![0; cfg.subframes()],
        best_words: vec![0; mn],
    };
    s.subframe(0, 0);
    let pattern = ActivationPattern {
        per_subframe: s.best_ranks.iter().map(|&r| modulator.table().entry(r).to_vec()).collect(),
    };
    Ok(MlDecision { pattern, words: s.best_words, metric: s.best, candidates })
}
