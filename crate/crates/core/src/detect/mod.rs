//! Detectors: exhaustive ML, joint symbol/activation message passing
//! (MLJSAPD) and symbol-only message passing with LLR block selection
//! (CMPD).

pub mod ml;
pub mod mp;

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::channel::EffectiveChannel;
use crate::error::{Error, Result};
use crate::frame::FrameConfig;
use crate::immap::{ActivationPattern, BitPayload, IndexModulator};

pub use ml::{candidate_count, ml_detect, MlDecision};
pub use mp::{FactorGraph, MessageState, MpOutcome, MpParams};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DetectorKind {
    Ml,
    Mljsapd,
    Cmpd,
}

impl DetectorKind {
    pub fn name(self) -> &'static str {
        match self {
            DetectorKind::Ml => "ml",
            DetectorKind::Mljsapd => "mljsapd",
            DetectorKind::Cmpd => "cmpd",
        }
    }
}

impl fmt::Display for DetectorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DetectorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ml" => Ok(DetectorKind::Ml),
            "mljsapd" => Ok(DetectorKind::Mljsapd),
            "cmpd" => Ok(DetectorKind::Cmpd),
            other => Err(Error::Parse(format!("unknown detector `{other}`"))),
        }
    }
}

/// Per-unit activity LLR used by CMPD to rank blocks.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LlrForm {
    /// `ln(sum_{x in S} p(x) / p(0))`.
    Sum,
    /// `ln(prod_{x in S} p(x) / p(0))`. At high SNR the wrong symbols of an
    /// active unit lie farther from the observation than zero does, so
    /// their vanishing probabilities drag its score below that of an
    /// inactive unit and this form ranks blocks backwards.
    Product,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DetectorConfig {
    pub kind: DetectorKind,
    /// Message damping factor in `(0, 1]`.
    pub damping: f64,
    /// A posterior counts as converged when its largest mass is at least
    /// `1 - slack`.
    pub slack: f64,
    pub max_iters: usize,
    /// Largest ML search allowed.
    pub ml_cap: u64,
    pub llr: LlrForm,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        DetectorConfig {
            kind: DetectorKind::Mljsapd,
            damping: 0.4,
            slack: 0.1,
            max_iters: 10,
            ml_cap: 1 << 20,
            llr: LlrForm::Sum,
        }
    }
}

impl DetectorConfig {
    pub fn new(kind: DetectorKind) -> Self {
        DetectorConfig { kind, ..Default::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return Err(Error::config(format!("damping must lie in (0, 1], got {}", self.damping)));
        }
        if !(0.0..1.0).contains(&self.slack) {
            return Err(Error::config(format!("convergence slack must lie in [0, 1), got {}", self.slack)));
        }
        if self.max_iters == 0 {
            return Err(Error::config("at least one iteration is required"));
        }
        Ok(())
    }

    fn mp_params(&self) -> MpParams {
        MpParams {
            damping: Some(self.damping),
            slack: self.slack,
            max_iters: self.max_iters,
            joint: self.kind == DetectorKind::Mljsapd,
        }
    }
}

/// Per-iteration real multiplication and exponential counts of the
/// message-passing detectors, itemized by update step.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OpCount {
    pub terms: Vec<(&'static str, u128)>,
    pub exponentials: u128,
}

impl OpCount {
    pub fn real_mults(&self) -> u128 {
        self.terms.iter().map(|t| t.1).sum()
    }

    /// Counts for the joint detector with maximum degree `z`.
    pub fn mljsapd(cfg: &FrameConfig, z: usize) -> Self {
        let (mnz, a) = ((cfg.mn() * z) as u128, cfg.modulation.order() as u128 + 1);
        let z = z as u128;
        let j = cfg.subframes() as u128;
        let blocks = cfg.num_blocks() as u128;
        OpCount {
            terms: vec![
                ("interference mean and variance", 2 * mnz * a),
                ("observation likelihoods", mnz * (4 * a + 1)),
                ("activity beliefs", mnz * a),
                ("damped extrinsic update", mnz * a),
                ("indicator to constraint", 2 * blocks * z),
                ("constraint convolution", blocks * blocks + blocks),
                ("indicator to variable", 2 * j * z),
                ("extrinsic products", mnz * z),
            ],
            exponentials: mnz,
        }
    }

    /// Counts for the symbol-only detector with maximum degree `z`.
    pub fn cmpd(cfg: &FrameConfig, z: usize) -> Self {
        let mn = cfg.mn() as u128;
        let mnz = mn * z as u128;
        let mc = cfg.modulation.order() as u128;
        let z = z as u128;
        OpCount {
            terms: vec![
                ("interference mean and variance", 2 * mnz * (mc + 1)),
                ("observation likelihoods", mnz * (4 * (mc + 1) + 1)),
                ("posteriors", mn * (z + mc + 4)),
                ("activity LLRs", mn * (z + mc + 8)),
            ],
            exponentials: mnz,
        }
    }
}

/// Structured per-frame detector record.
#[derive(Clone, Debug, PartialEq)]
pub struct Diagnostics {
    pub iterations: usize,
    pub eta_trace: Vec<f64>,
    /// Best `eta` reached (the one whose posteriors were used).
    pub final_eta: f64,
    /// Activation score per global block, 0-based.
    pub block_scores: Vec<f64>,
    pub ops: Option<OpCount>,
    /// ML search size.
    pub candidates: u128,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Detection {
    pub bits: BitPayload,
    pub pattern: ActivationPattern,
    /// Decided symbol word per unit (used on active units).
    pub words: Vec<usize>,
    pub diagnostics: Diagnostics,
}

/// Runs the configured detector on one received frame. The noise variance
/// is taken from `h.sigma2`.
pub fn detect(
    y: &[Complex64],
    h: &EffectiveChannel,
    modulator: &IndexModulator,
    dcfg: &DetectorConfig,
) -> Result<Detection> {
    dcfg.validate()?;
    let cfg = modulator.config();
    if y.len() != cfg.mn() || h.dim() != cfg.mn() {
        return Err(Error::domain(format!(
            "frame has {} units, got {} observations and a {}-dimensional channel",
            cfg.mn(),
            y.len(),
            h.dim()
        )));
    }
    match dcfg.kind {
        DetectorKind::Ml => {
            let dec = ml_detect(y, h, modulator, dcfg.ml_cap as u128)?;
            Ok(Detection {
                bits: modulator.demap_words(&dec.pattern, &dec.words),
                pattern: dec.pattern,
                words: dec.words,
                diagnostics: Diagnostics {
                    iterations: 0,
                    eta_trace: Vec::new(),
                    final_eta: 1.0,
                    block_scores: Vec::new(),
                    ops: None,
                    candidates: dec.candidates,
                },
            })
        }
        DetectorKind::Mljsapd | DetectorKind::Cmpd => {
            let graph = FactorGraph::new(h, modulator);
            let out = mp::run(&graph, y, h.sigma2, &dcfg.mp_params());
            let st = &out.state;
            let (scores, ops) = if dcfg.kind == DetectorKind::Mljsapd {
                (st.w.iter().map(|w| w[1]).collect::<Vec<_>>(), OpCount::mljsapd(cfg, h.z()))
            } else {
                let llr = |c: usize| match dcfg.llr {
                    LlrForm::Sum => llr_sum_form(st.best_posterior(c)),
                    LlrForm::Product => llr_product_form(st.best_posterior(c)),
                };
                let scores = modulator
                    .block_units()
                    .iter()
                    .map(|units| units.iter().map(|&c| llr(c)).sum::<f64>() / units.len() as f64)
                    .collect();
                (scores, OpCount::cmpd(cfg, h.z()))
            };
            let pattern = select_active(&scores, modulator);
            let words = (0..cfg.mn()).map(|c| best_symbol(st.best_posterior(c))).collect::<Vec<_>>();
            Ok(Detection {
                bits: modulator.demap_words(&pattern, &words),
                pattern,
                words,
                diagnostics: Diagnostics {
                    iterations: out.iterations,
                    final_eta: st.best_eta,
                    eta_trace: out.eta_trace,
                    block_scores: scores,
                    ops: Some(ops),
                    candidates: 0,
                },
            })
        }
    }
}

/// Takes the `k_hat` highest-scoring blocks of every subframe (ties to the
/// lower block index). A combination missing from the lookup table is
/// replaced by its nearest table entry.
pub fn select_active(scores: &[f64], modulator: &IndexModulator) -> ActivationPattern {
    let cfg = modulator.config();
    let per = cfg.blocks_per_subframe();
    let k = cfg.active_blocks();
    let per_subframe = scores
        .chunks(per)
        .map(|sub| {
            let mut order: Vec<usize> = (0..per).collect();
            order.sort_by(|&a, &b| sub[b].total_cmp(&sub[a]).then(a.cmp(&b)));
            let mut top: Vec<usize> = order[..k].iter().map(|b| b + 1).collect();
            top.sort_unstable();
            let table = modulator.table();
            table.entry(table.nearest_rank(&top)).to_vec()
        })
        .collect();
    ActivationPattern { per_subframe }
}

/// Most probable nonzero symbol word of a pmf over `{0} ∪ S`; ties to the
/// lower word.
pub fn best_symbol(p: &[f64]) -> usize {
    let mut best = 0;
    for w in 1..p.len() - 1 {
        if p[w + 1] > p[best + 1] {
            best = w;
        }
    }
    best
}

fn safe_ln(x: f64) -> f64 {
    x.max(f64::MIN_POSITIVE).ln()
}

/// `ln(sum_{x in S} p(x) / p(0))` for a pmf over `{0} ∪ S`.
pub fn llr_sum_form(p: &[f64]) -> f64 {
    safe_ln(p[1..].iter().sum()) - safe_ln(p[0])
}

/// `ln(prod_{x in S} p(x) / p(0))` for a pmf over `{0} ∪ S`.
pub fn llr_product_form(p: &[f64]) -> f64 {
    p[1..].iter().map(|&v| safe_ln(v)).sum::<f64>() - safe_ln(p[0])
}
