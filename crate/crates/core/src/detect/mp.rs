//! Message passing over the sparse delay-Doppler factor graph.
//!
//! Symbol messages live on the edges of `H` (observation node `d`, variable
//! node `c`) as pmfs over the alphabet `{0} ∪ S`, index 0 being the zero
//! symbol. The joint detector adds one activity indicator per block and one
//! constraint node per subframe enforcing exactly `k_hat` active blocks.

use num_complex::Complex64;

use crate::channel::EffectiveChannel;
use crate::immap::IndexModulator;

const VAR_FLOOR: f64 = 1e-12;

/// Graph topology shared by every frame detected with one channel.
#[derive(Clone, Debug)]
pub struct FactorGraph {
    mn: usize,
    /// `{0} ∪ S`.
    alphabet: Vec<Complex64>,
    /// Edges of observation `d` are `row_start[d]..row_start[d + 1]`.
    row_start: Vec<usize>,
    edge_col: Vec<usize>,
    edge_h: Vec<Complex64>,
    /// `J(c)` as edge ids, ascending `d`.
    col_edges: Vec<Vec<usize>>,
    /// `D(f)`.
    blocks: Vec<Vec<usize>>,
    /// `K(beta)`, 0-based block ids.
    subframes: Vec<Vec<usize>>,
    k_hat: usize,
}

impl FactorGraph {
    pub fn new(h: &EffectiveChannel, modulator: &IndexModulator) -> Self {
        let cfg = modulator.config();
        let mn = h.dim();
        assert_eq!(mn, cfg.mn(), "channel and frame sizes differ");
        let mut row_start = Vec::with_capacity(mn + 1);
        let mut edge_col = Vec::with_capacity(h.nnz());
        let mut edge_h = Vec::with_capacity(h.nnz());
        row_start.push(0);
        for d in 0..mn {
            for &(c, v) in h.row(d) {
                edge_col.push(c);
                edge_h.push(v);
            }
            row_start.push(edge_col.len());
        }
        let col_edges = (0..mn)
            .map(|c| h.col(c).iter().map(|&(d, slot)| row_start[d] + slot).collect())
            .collect();
        let blocks: Vec<Vec<usize>> = modulator.block_units().to_vec();
        debug_assert_eq!(blocks.iter().map(Vec::len).sum::<usize>(), mn, "blocks must tile the frame");
        let per = cfg.blocks_per_subframe();
        let subframes = (0..cfg.subframes()).map(|beta| (beta * per..(beta + 1) * per).collect()).collect();
        let mut alphabet = vec![Complex64::new(0.0, 0.0)];
        alphabet.extend(cfg.modulation.points());
        FactorGraph {
            mn,
            alphabet,
            row_start,
            edge_col,
            edge_h,
            col_edges,
            blocks,
            subframes,
            k_hat: cfg.active_blocks(),
        }
    }

    /// Alphabet size `|S ∪ {0}|`.
    pub fn alphabet_len(&self) -> usize {
        self.alphabet.len()
    }

    pub fn num_edges(&self) -> usize {
        self.edge_col.len()
    }

    pub fn num_blocks(&self) -> usize {
        self.blocks.len()
    }

    /// `I(d)` as variable indices.
    pub fn row(&self, d: usize) -> &[usize] {
        &self.edge_col[self.row_start[d]..self.row_start[d + 1]]
    }

    /// `D(f)` for a 0-based block id.
    pub fn block(&self, f: usize) -> &[usize] {
        &self.blocks[f]
    }

    /// `K(beta)` for a 0-based subframe id.
    pub fn subframe(&self, beta: usize) -> &[usize] {
        &self.subframes[beta]
    }

    pub fn num_subframes(&self) -> usize {
        self.subframes.len()
    }

    pub fn k_hat(&self) -> usize {
        self.k_hat
    }
}

/// Every message of one detector run. Per-edge and per-unit pmfs are
/// stored flat with stride `alphabet_len`.
#[derive(Clone, Debug, PartialEq)]
pub struct MessageState {
    a: usize,
    /// `p_{c,d}` per edge.
    pub p: Vec<f64>,
    /// `ln v_{d,c}` per edge, shifted so the largest entry is 0.
    pub log_v: Vec<f64>,
    /// `q_c`, index 0 inactive, 1 active.
    pub q: Vec<[f64; 2]>,
    pub w: Vec<[f64; 2]>,
    pub psi: Vec<[f64; 2]>,
    pub u: Vec<[f64; 2]>,
    /// `p_c` per unit.
    pub posteriors: Vec<f64>,
    pub eta: f64,
    /// `p_bar_c`, the posteriors of the iteration with the best `eta`.
    pub best_posteriors: Vec<f64>,
    pub best_eta: f64,
}

/// Scalar message-passing parameters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MpParams {
    /// `None` skips the damping step entirely.
    pub damping: Option<f64>,
    pub slack: f64,
    pub max_iters: usize,
    /// Joint activity detection (true) or plain symbol detection.
    pub joint: bool,
}

/// Result of [`run`].
#[derive(Clone, Debug)]
pub struct MpOutcome {
    pub state: MessageState,
    pub iterations: usize,
    pub eta_trace: Vec<f64>,
}

impl MessageState {
    /// Uniform symbol messages and `q_c = [1/2, 1/2]`.
    pub fn new(graph: &FactorGraph) -> Self {
        let a = graph.alphabet_len();
        let e = graph.num_edges();
        let nb = graph.num_blocks();
        let half = [0.5, 0.5];
        MessageState {
            a,
            p: vec![1.0 / a as f64; e * a],
            log_v: vec![0.0; e * a],
            q: vec![half; graph.mn],
            w: vec![half; nb],
            psi: vec![half; nb],
            u: vec![half; graph.mn],
            posteriors: vec![1.0 / a as f64; graph.mn * a],
            eta: 0.0,
            best_posteriors: vec![1.0 / a as f64; graph.mn * a],
            best_eta: f64::NEG_INFINITY,
        }
    }

    pub fn edge_pmf(&self, e: usize) -> &[f64] {
        &self.p[e * self.a..(e + 1) * self.a]
    }

    pub fn posterior(&self, c: usize) -> &[f64] {
        &self.posteriors[c * self.a..(c + 1) * self.a]
    }

    pub fn best_posterior(&self, c: usize) -> &[f64] {
        &self.best_posteriors[c * self.a..(c + 1) * self.a]
    }

    /// Observation to variable: Gaussian approximation of the interference
    /// from every other variable on the row.
    pub fn obs_to_var(&mut self, graph: &FactorGraph, y: &[Complex64], sigma2: f64) {
        let a = self.a;
        let mut means = Vec::new();
        let mut vars = Vec::new();
        for d in 0..graph.mn {
            let (e0, e1) = (graph.row_start[d], graph.row_start[d + 1]);
            means.clear();
            vars.clear();
            for e in e0..e1 {
                let pmf = &self.p[e * a..(e + 1) * a];
                let mut m = Complex64::new(0.0, 0.0);
                let mut s2 = 0.0;
                for (pa, x) in pmf.iter().zip(&graph.alphabet) {
                    m += x * *pa;
                    s2 += pa * x.norm_sqr();
                }
                let h = graph.edge_h[e];
                means.push(h * m);
                vars.push(h.norm_sqr() * (s2 - m.norm_sqr()).max(0.0));
            }
            // Leave-one-out sums via suffix accumulation, so an isolated
            // edge sees exactly zero interference.
            let k = e1 - e0;
            let mut suf_m = vec![Complex64::new(0.0, 0.0); k + 1];
            let mut suf_v = vec![0.0; k + 1];
            for i in (0..k).rev() {
                suf_m[i] = suf_m[i + 1] + means[i];
                suf_v[i] = suf_v[i + 1] + vars[i];
            }
            let mut pre_m = Complex64::new(0.0, 0.0);
            let mut pre_v = 0.0;
            for i in 0..k {
                let e = e0 + i;
                let mu = pre_m + suf_m[i + 1];
                let var = (pre_v + suf_v[i + 1] + sigma2).max(VAR_FLOOR);
                let h = graph.edge_h[e];
                let r = y[d] - mu;
                let lv = &mut self.log_v[e * a..(e + 1) * a];
                for (l, x) in lv.iter_mut().zip(&graph.alphabet) {
                    *l = -(r - h * x).norm_sqr() / var;
                }
                shift_max(lv);
                pre_m += means[i];
                pre_v += vars[i];
            }
        }
    }

    /// Sum of `ln v_{d,c}` over `J(c)`.
    fn total_log_likelihood(&self, graph: &FactorGraph, c: usize, out: &mut [f64]) {
        out.iter_mut().for_each(|x| *x = 0.0);
        for &e in &graph.col_edges[c] {
            for (o, l) in out.iter_mut().zip(&self.log_v[e * self.a..(e + 1) * self.a]) {
                *o += l;
            }
        }
    }

    /// Variable to indicator: activity belief of each unit, damped.
    pub fn var_to_ind(&mut self, graph: &FactorGraph, damping: Option<f64>) {
        let mut l = vec![0.0; self.a];
        for c in 0..graph.mn {
            self.total_log_likelihood(graph, c, &mut l);
            let mut fresh = [l[0], log_sum_exp(&l[1..])];
            normalize_log(&mut fresh);
            self.q[c] = damp2(fresh, self.q[c], damping);
        }
    }

    /// Indicator to constraint: `w_f(b) ∝ prod_{c in D(f)} q_c(b)`.
    pub fn ind_to_constraint(&mut self, graph: &FactorGraph) {
        for (f, units) in graph.blocks.iter().enumerate() {
            let mut lw = [0.0, 0.0];
            for &c in units {
                lw[0] += self.q[c][0].ln();
                lw[1] += self.q[c][1].ln();
            }
            normalize_log(&mut lw);
            self.w[f] = lw;
        }
    }

    /// Constraint to indicator: `psi_f(1) ∝ Omega_f(k_hat - 1)`,
    /// `psi_f(0) ∝ Omega_f(k_hat)`, with `Omega_f` the distribution of the
    /// number of active blocks among the subframe's other blocks.
    pub fn constraint_to_ind(&mut self, graph: &FactorGraph) {
        let k = graph.k_hat;
        for blocks in &graph.subframes {
            for &f in blocks {
                let omega = active_count_pmf(blocks.iter().filter(|&&e| e != f).map(|&e| self.w[e]));
                let at = |i: usize| omega.get(i).copied().unwrap_or(0.0);
                let mut psi = [at(k), if k == 0 { 0.0 } else { at(k - 1) }];
                normalize2(&mut psi);
                self.psi[f] = psi;
            }
        }
    }

    /// Indicator to variable: `u_c(b) ∝ psi_f(b) sum_{e in D(f), e != c} q_e(b)`.
    /// A single-unit block has no other members and passes `psi_f` through.
    pub fn ind_to_var(&mut self, graph: &FactorGraph) {
        for (f, units) in graph.blocks.iter().enumerate() {
            let psi = self.psi[f];
            if units.len() == 1 {
                self.u[units[0]] = psi;
                continue;
            }
            let tot = units.iter().fold([0.0, 0.0], |acc, &c| [acc[0] + self.q[c][0], acc[1] + self.q[c][1]]);
            for &c in units {
                let mut u = [
                    psi[0] * (tot[0] - self.q[c][0]).max(0.0),
                    psi[1] * (tot[1] - self.q[c][1]).max(0.0),
                ];
                normalize2(&mut u);
                self.u[c] = u;
            }
        }
    }

    fn log_prior(&self, c: usize, joint: bool, out: &mut [f64]) {
        if joint {
            let (l0, l1) = (self.u[c][0].ln(), self.u[c][1].ln());
            out[0] = l0;
            out[1..].iter_mut().for_each(|x| *x = l1);
        } else {
            out.iter_mut().for_each(|x| *x = 0.0);
        }
    }

    /// Variable to observation: prior times the extrinsic product over
    /// `J(c) \ {d}`, normalized and damped.
    pub fn var_to_obs(&mut self, graph: &FactorGraph, damping: Option<f64>, joint: bool) {
        let a = self.a;
        let mut prior = vec![0.0; a];
        let mut fresh = vec![0.0; a];
        let mut suffix: Vec<f64> = Vec::new();
        for c in 0..graph.mn {
            self.log_prior(c, joint, &mut prior);
            let edges = &graph.col_edges[c];
            let k = edges.len();
            suffix.clear();
            suffix.resize((k + 1) * a, 0.0);
            for i in (0..k).rev() {
                let e = edges[i];
                for s in 0..a {
                    suffix[i * a + s] = suffix[(i + 1) * a + s] + self.log_v[e * a + s];
                }
            }
            let mut prefix = vec![0.0; a];
            for (i, &e) in edges.iter().enumerate() {
                for s in 0..a {
                    fresh[s] = prior[s] + prefix[s] + suffix[(i + 1) * a + s];
                }
                normalize_log(&mut fresh);
                let old = &mut self.p[e * a..(e + 1) * a];
                damp(&fresh, old, damping);
                for s in 0..a {
                    prefix[s] += self.log_v[e * a + s];
                }
            }
        }
    }

    /// Posteriors `p_c` and the convergence indicator `eta`; keeps the
    /// posteriors as `p_bar` when `eta` strictly improves.
    pub fn update_posteriors(&mut self, graph: &FactorGraph, slack: f64, joint: bool) {
        let a = self.a;
        let mut prior = vec![0.0; a];
        let mut l = vec![0.0; a];
        let mut confident = 0usize;
        for c in 0..graph.mn {
            self.log_prior(c, joint, &mut prior);
            self.total_log_likelihood(graph, c, &mut l);
            for s in 0..a {
                l[s] += prior[s];
            }
            normalize_log(&mut l);
            if l.iter().cloned().fold(0.0, f64::max) >= 1.0 - slack {
                confident += 1;
            }
            self.posteriors[c * a..(c + 1) * a].copy_from_slice(&l);
        }
        self.eta = confident as f64 / graph.mn as f64;
        if self.eta > self.best_eta {
            self.best_eta = self.eta;
            self.best_posteriors.copy_from_slice(&self.posteriors);
        }
    }

    /// One full sweep in schedule order.
    pub fn iterate(&mut self, graph: &FactorGraph, y: &[Complex64], sigma2: f64, params: &MpParams) {
        self.obs_to_var(graph, y, sigma2);
        if params.joint {
            self.var_to_ind(graph, params.damping);
            self.ind_to_constraint(graph);
            self.constraint_to_ind(graph);
            self.ind_to_var(graph);
        }
        self.var_to_obs(graph, params.damping, params.joint);
        self.update_posteriors(graph, params.slack, params.joint);
    }
}

/// Iterates until every posterior is confident or `max_iters` is reached.
pub fn run(graph: &FactorGraph, y: &[Complex64], sigma2: f64, params: &MpParams) -> MpOutcome {
    let mut state = MessageState::new(graph);
    let mut eta_trace = Vec::with_capacity(params.max_iters);
    for _ in 0..params.max_iters {
        state.iterate(graph, y, sigma2, params);
        eta_trace.push(state.eta);
        if state.eta >= 1.0 {
            break;
        }
    }
    MpOutcome { iterations: eta_trace.len(), state, eta_trace }
}

/// Distribution of the number of successes among independent two-point
/// pmfs `[P(0), P(1)]`.
pub fn active_count_pmf(pmfs: impl IntoIterator<Item = [f64; 2]>) -> Vec<f64> {
    let mut omega = vec![1.0];
    for w in pmfs {
        let mut next = vec![0.0; omega.len() + 1];
        for (i, &o) in omega.iter().enumerate() {
            next[i] += o * w[0];
            next[i + 1] += o * w[1];
        }
        omega = next;
    }
    omega
}

fn log_sum_exp(x: &[f64]) -> f64 {
    let m = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + x.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

fn shift_max(x: &mut [f64]) {
    let m = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if m.is_finite() {
        x.iter_mut().for_each(|v| *v -= m);
    }
}

/// Log-weights to a pmf in place; degenerate input becomes uniform.
fn normalize_log(x: &mut [f64]) {
    let m = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        let u = 1.0 / x.len() as f64;
        x.iter_mut().for_each(|v| *v = u);
        return;
    }
    let mut s = 0.0;
    for v in x.iter_mut() {
        *v = (*v - m).exp();
        s += *v;
    }
    x.iter_mut().for_each(|v| *v /= s);
}

fn normalize2(x: &mut [f64; 2]) {
    let s = x[0] + x[1];
    if s > 0.0 && s.is_finite() {
        x[0] /= s;
        x[1] /= s;
    } else {
        *x = [0.5, 0.5];
    }
}

fn damp2(fresh: [f64; 2], old: [f64; 2], damping: Option<f64>) -> [f64; 2] {
    match damping {
        None => fresh,
        Some(dl) => {
            // A convex mix of two pmfs is a pmf; no renormalization, so
            // dl = 1 reproduces the undamped message bit for bit.
            [dl * fresh[0] + (1.0 - dl) * old[0], dl * fresh[1] + (1.0 - dl) * old[1]]
        }
    }
}

fn damp(fresh: &[f64], old: &mut [f64], damping: Option<f64>) {
    match damping {
        None => old.copy_from_slice(fresh),
        Some(dl) => {
            for (o, f) in old.iter_mut().zip(fresh) {
                *o = dl * f + (1.0 - dl) * *o;
            }
        }
    }
}
