//! Attention scorers for the add-edge and node decisions.
//!
//! Each scorer attends over the message vectors of the edges already on the
//! channel, concatenates the attended context with its own features, and
//! feeds the result through a one-hidden-layer tanh network plus a linear
//! skip term. Parameters live in flat vectors so gradients, updates and
//! serialization share one layout.

use crate::allocgraph::generate::{Decision, PolicyInput, AllocationPolicy, CAND_DIM, CAND_EFFICIENCY, CAND_FEASIBLE, CAND_GAIN, CHANNEL_DIM, EDGE_DIM};
use crate::error::{Error, Result};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

pub const PARAMS_VERSION: &str = "leosched-policy/1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScorerShape {
    /// Query input width.
    pub query: usize,
    /// Edge message width.
    pub edge: usize,
    /// Features concatenated in front of the attended context.
    pub prefix: usize,
    pub attn: usize,
    pub hidden: usize,
}

impl ScorerShape {
    pub fn z_dim(&self) -> usize {
        self.prefix + self.attn
    }

    fn offsets(&self) -> [usize; 9] {
        let a = self.attn;
        let h = self.hidden;
        let mut o = [0; 9];
        let sizes = [a * self.query, a * self.edge, a * self.edge, h * self.z_dim(), h, h, 1, self.z_dim()];
        for i in 0..8 {
            o[i + 1] = o[i] + sizes[i];
        }
        o
    }

    pub fn len(&self) -> usize {
        self.offsets()[8]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Block views into a flat scorer parameter vector.
struct View<'a> {
    s: ScorerShape,
    wq: &'a [f64],
    wk: &'a [f64],
    wv: &'a [f64],
    w1: &'a [f64],
    b1: &'a [f64],
    w2: &'a [f64],
    b2: f64,
    lin: &'a [f64],
}

impl<'a> View<'a> {
    fn new(s: ScorerShape, p: &'a [f64]) -> Self {
        let o = s.offsets();
        Self {
            s,
            wq: &p[o[0]..o[1]],
            wk: &p[o[1]..o[2]],
            wv: &p[o[2]..o[3]],
            w1: &p[o[3]..o[4]],
            b1: &p[o[4]..o[5]],
            w2: &p[o[5]..o[6]],
            b2: p[o[6]],
            lin: &p[o[7]..o[8]],
        }
    }
}

fn matvec(w: &[f64], rows: usize, x: &[f64]) -> Vec<f64> {
    let cols = x.len();
    (0..rows).map(|r| w[r * cols..(r + 1) * cols].iter().zip(x).map(|(a, b)| a * b).sum()).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Intermediate values kept for the backward pass.
struct Trace {
    q: Vec<f64>,
    keys: Vec<Vec<f64>>,
    values: Vec<Vec<f64>>,
    weights: Vec<f64>,
    z: Vec<f64>,
    h: Vec<f64>,
}

fn forward(v: &View, query: &[f64], edges: &[[f64; EDGE_DIM]], prefix: &[f64]) -> (f64, Trace) {
    let s = v.s;
    let a = s.attn;
    let q = matvec(v.wq, a, query);
    let keys: Vec<Vec<f64>> = edges.iter().map(|g| matvec(v.wk, a, g)).collect();
    let values: Vec<Vec<f64>> = edges.iter().map(|g| matvec(v.wv, a, g)).collect();
    let scale = 1.0 / (a as f64).sqrt();
    let logits: Vec<f64> = keys.iter().map(|k| dot(&q, k) * scale).collect();
    let weights = softmax(&logits);
    let mut z = prefix.to_vec();
    let mut ctx = vec![0.0; a];
    for (w, val) in weights.iter().zip(&values) {
        for (c, x) in ctx.iter_mut().zip(val) {
            *c += w * x;
        }
    }
    z.extend_from_slice(&ctx);
    let u = matvec(v.w1, s.hidden, &z);
    let h: Vec<f64> = u.iter().zip(v.b1).map(|(u, b)| (u + b).tanh()).collect();
    let out = dot(v.w2, &h) + v.b2 + dot(v.lin, &z);
    (out, Trace { q, keys, values, weights, z, h })
}

/// Accumulate `g · ∂out/∂θ` into `grad`.
fn backward(v: &View, t: &Trace, query: &[f64], edges: &[[f64; EDGE_DIM]], g: f64, grad: &mut [f64]) {
    let s = v.s;
    let (a, h, zd) = (s.attn, s.hidden, s.z_dim());
    let o = s.offsets();
    grad[o[6]] += g;
    for j in 0..h {
        grad[o[5] + j] += g * t.h[j];
    }
    for i in 0..zd {
        grad[o[7] + i] += g * t.z[i];
    }
    let du: Vec<f64> = (0..h).map(|j| g * v.w2[j] * (1.0 - t.h[j] * t.h[j])).collect();
    let mut dz: Vec<f64> = v.lin.iter().map(|l| g * l).collect();
    for j in 0..h {
        grad[o[4] + j] += du[j];
        for i in 0..zd {
            grad[o[3] + j * zd + i] += du[j] * t.z[i];
            dz[i] += v.w1[j * zd + i] * du[j];
        }
    }
    if edges.is_empty() {
        return;
    }
    let dctx = &dz[s.prefix..];
    let dw: Vec<f64> = t.values.iter().map(|val| dot(dctx, val)).collect();
    let mean_dw = dot(&t.weights, &dw);
    let scale = 1.0 / (a as f64).sqrt();
    let mut dq = vec![0.0; a];
    for (i, gi) in edges.iter().enumerate() {
        let w = t.weights[i];
        let ds = w * (dw[i] - mean_dw) * scale;
        for r in 0..a {
            dq[r] += ds * t.keys[i][r];
            let dk = ds * t.q[r];
            let dv = w * dctx[r];
            for c in 0..s.edge {
                grad[o[1] + r * s.edge + c] += dk * gi[c];
                grad[o[2] + r * s.edge + c] += dv * gi[c];
            }
        }
    }
    for r in 0..a {
        for c in 0..s.query {
            grad[o[0] + r * s.query + c] += dq[r] * query[c];
        }
    }
}

pub fn softmax(x: &[f64]) -> Vec<f64> {
    if x.is_empty() {
        return Vec::new();
    }
    let mx = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = x.iter().map(|v| (v - mx).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Mean and max of the candidate features over admissible beams.
fn pooled(input: &PolicyInput) -> Vec<f64> {
    let rows: Vec<&[f64; CAND_DIM]> = input.candidates.iter().zip(&input.admissible).filter(|(_, &a)| a).map(|(c, _)| c).collect();
    let mut out = vec![0.0; 2 * CAND_DIM];
    if rows.is_empty() {
        return out;
    }
    for i in 0..CAND_DIM {
        out[i] = rows.iter().map(|r| r[i]).sum::<f64>() / rows.len() as f64;
        out[CAND_DIM + i] = rows.iter().map(|r| r[i]).fold(f64::NEG_INFINITY, f64::max);
    }
    out
}

fn add_prefix(input: &PolicyInput) -> Vec<f64> {
    let mut p = input.channel_feat.to_vec();
    p.extend(pooled(input));
    p
}

fn node_prefix(input: &PolicyInput, b: usize) -> Vec<f64> {
    let mut p = input.candidates[b].to_vec();
    p.extend_from_slice(&input.channel_feat);
    p
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyParams {
    pub version: String,
    pub add_shape: ScorerShape,
    pub node_shape: ScorerShape,
    /// Add-edge scorer weights.
    pub alpha: Vec<f64>,
    /// Node scorer weights.
    pub eta: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PolicyInit {
    pub hidden: usize,
    pub attn: usize,
    /// Standard deviation of the random weights, divided by √fan-in.
    pub weight_scale: f64,
    /// Skip weight on the best admissible marginal gain (add-edge scorer).
    pub add_gain_weight: f64,
    /// Skip weight on the best admissible gain efficiency, and the
    /// efficiency at which the add-edge logit starts at zero.
    pub add_efficiency_weight: f64,
    pub add_efficiency_pivot: f64,
    /// Skip weights on a candidate's marginal gain and EPFD feasibility.
    pub node_gain_weight: f64,
    pub node_feasible_weight: f64,
}

impl Default for PolicyInit {
    fn default() -> Self {
        Self { hidden: 32, attn: 16, weight_scale: 0.1, add_gain_weight: 2.0, add_efficiency_weight: 20.0, add_efficiency_pivot: 0.5, node_gain_weight: 20.0, node_feasible_weight: 10.0 }
    }
}

impl PolicyParams {
    pub fn shapes(hidden: usize, attn: usize) -> (ScorerShape, ScorerShape) {
        (
            ScorerShape { query: CHANNEL_DIM, edge: EDGE_DIM, prefix: CHANNEL_DIM + 2 * CAND_DIM, attn, hidden },
            ScorerShape { query: CAND_DIM, edge: EDGE_DIM, prefix: CAND_DIM + CHANNEL_DIM, attn, hidden },
        )
    }

    pub fn zeros(hidden: usize, attn: usize) -> Self {
        let (add_shape, node_shape) = Self::shapes(hidden, attn);
        Self { version: PARAMS_VERSION.into(), add_shape, node_shape, alpha: vec![0.0; add_shape.len()], eta: vec![0.0; node_shape.len()] }
    }

    /// Small random weights, with skip terms that start the policy close to
    /// the marginal-gain heuristic.
    pub fn init<R: Rng + ?Sized>(cfg: &PolicyInit, rng: &mut R) -> Self {
        let mut p = Self::zeros(cfg.hidden, cfg.attn);
        fill_random(&p.add_shape, &mut p.alpha, cfg.weight_scale, rng);
        fill_random(&p.node_shape, &mut p.eta, cfg.weight_scale, rng);
        let lin_a = p.add_shape.offsets()[7];
        p.alpha[lin_a + CHANNEL_DIM + CAND_DIM + CAND_GAIN] = cfg.add_gain_weight;
        p.alpha[lin_a + CHANNEL_DIM + CAND_DIM + CAND_EFFICIENCY] = cfg.add_efficiency_weight;
        p.alpha[p.add_shape.offsets()[6]] = -cfg.add_efficiency_weight * cfg.add_efficiency_pivot;
        let lin_n = p.node_shape.offsets()[7];
        p.eta[lin_n + CAND_GAIN] = cfg.node_gain_weight;
        p.eta[lin_n + CAND_FEASIBLE] = cfg.node_feasible_weight;
        p
    }

    pub fn num_params(&self) -> usize {
        self.alpha.len() + self.eta.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != PARAMS_VERSION {
            return Err(Error::Schema(format!("unsupported policy parameter version {:?}", self.version)));
        }
        let (a, n) = Self::shapes(self.add_shape.hidden, self.add_shape.attn);
        if a != self.add_shape || n != self.node_shape || self.alpha.len() != a.len() || self.eta.len() != n.len() {
            return Err(Error::Schema("policy parameter layout does not match its header".into()));
        }
        if !self.alpha.iter().chain(&self.eta).all(|x| x.is_finite()) {
            return Err(Error::NonFinite("policy parameters".into()));
        }
        Ok(())
    }

    /// Flat view `[alpha, eta]`.
    pub fn flat(&self) -> Vec<f64> {
        let mut v = self.alpha.clone();
        v.extend_from_slice(&self.eta);
        v
    }

    pub fn set_flat(&mut self, v: &[f64]) {
        let k = self.alpha.len();
        self.alpha.copy_from_slice(&v[..k]);
        self.eta.copy_from_slice(&v[k..]);
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let p: Self = serde_json::from_str(&text)?;
        p.validate()?;
        Ok(p)
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}

fn fill_random<R: Rng + ?Sized>(s: &ScorerShape, w: &mut [f64], scale: f64, rng: &mut R) {
    let o = s.offsets();
    let fans = [s.query, s.edge, s.edge, s.z_dim(), 0, s.hidden, 0, 0];
    for blk in 0..8 {
        if fans[blk] == 0 {
            continue;
        }
        let nrm = Normal::new(0.0, scale / (fans[blk] as f64).sqrt()).unwrap();
        for x in &mut w[o[blk]..o[blk + 1]] {
            *x = nrm.sample(rng);
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NeuralPolicy {
    pub params: PolicyParams,
}

impl NeuralPolicy {
    pub fn new(params: PolicyParams) -> Self {
        Self { params }
    }

    pub fn add_logit(&self, input: &PolicyInput) -> f64 {
        let v = View::new(self.params.add_shape, &self.params.alpha);
        forward(&v, &input.channel_feat, &input.edges, &add_prefix(input)).0
    }

    /// Raw node scores; masked beams are reported as −∞.
    pub fn node_scores(&self, input: &PolicyInput) -> Vec<f64> {
        let v = View::new(self.params.node_shape, &self.params.eta);
        (0..input.candidates.len())
            .map(|b| if input.admissible[b] { forward(&v, &input.candidates[b], &input.edges, &node_prefix(input, b)).0 } else { f64::NEG_INFINITY })
            .collect()
    }

    /// Log-probability of a recorded decision and its gradient with respect
    /// to the flat parameter vector.
    pub fn log_prob_grad(&self, d: &Decision) -> (f64, Vec<f64>) {
        let na = self.params.alpha.len();
        let mut grad = vec![0.0; self.params.num_params()];
        match d {
            Decision::Add { input, added } => {
                let v = View::new(self.params.add_shape, &self.params.alpha);
                let prefix = add_prefix(input);
                let (o, t) = forward(&v, &input.channel_feat, &input.edges, &prefix);
                let p = sigmoid(o);
                let (lp, g) = if *added { (log_sigmoid(o), 1.0 - p) } else { (log_sigmoid(-o), -p) };
                backward(&v, &t, &input.channel_feat, &input.edges, g, &mut grad[..na]);
                (lp, grad)
            }
            Decision::Node { input, chosen } => {
                let v = View::new(self.params.node_shape, &self.params.eta);
                let idx: Vec<usize> = (0..input.candidates.len()).filter(|&b| input.admissible[b]).collect();
                let runs: Vec<(f64, Trace, Vec<f64>)> = idx
                    .iter()
                    .map(|&b| {
                        let pre = node_prefix(input, b);
                        let (o, t) = forward(&v, &input.candidates[b], &input.edges, &pre);
                        (o, t, pre)
                    })
                    .collect();
                let scores: Vec<f64> = runs.iter().map(|r| r.0).collect();
                let pi = softmax(&scores);
                let k = idx.iter().position(|b| b == chosen).expect("chosen beam must be admissible");
                let lp = pi[k].ln();
                for (j, &b) in idx.iter().enumerate() {
                    let g = if j == k { 1.0 - pi[j] } else { -pi[j] };
                    backward(&v, &runs[j].1, &input.candidates[b], &input.edges, g, &mut grad[na..]);
                }
                (lp, grad)
            }
        }
    }

    pub fn log_prob(&self, d: &Decision) -> f64 {
        match d {
            Decision::Add { input, added } => {
                let o = self.add_logit(input);
                if *added {
                    log_sigmoid(o)
                } else {
                    log_sigmoid(-o)
                }
            }
            Decision::Node { input, chosen } => {
                let s = self.node_scores(input);
                let mx = s.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let lse = mx + s.iter().filter(|x| x.is_finite()).map(|x| (x - mx).exp()).sum::<f64>().ln();
                s[*chosen] - lse
            }
        }
    }
}

fn log_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        -(-x).exp().ln_1p()
    } else {
        x - x.exp().ln_1p()
    }
}

impl AllocationPolicy for NeuralPolicy {
    fn add_edge_probability(&self, input: &PolicyInput) -> Result<f64> {
        input.check_finite()?;
        let p = sigmoid(self.add_logit(input));
        if p.is_finite() {
            Ok(p)
        } else {
            Err(Error::NonFinite("add-edge score".into()))
        }
    }

    fn node_distribution(&self, input: &PolicyInput) -> Result<Vec<f64>> {
        input.check_finite()?;
        let s = self.node_scores(input);
        let idx: Vec<usize> = (0..s.len()).filter(|&b| input.admissible[b]).collect();
        if idx.is_empty() {
            return Err(Error::domain("node distribution requested with no admissible beam"));
        }
        let pi = softmax(&idx.iter().map(|&b| s[b]).collect::<Vec<_>>());
        let mut out = vec![0.0; s.len()];
        for (&b, p) in idx.iter().zip(pi) {
            out[b] = p;
        }
        if out.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("node scores".into()));
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    pub(crate) fn random_input<R: Rng>(rng: &mut R, nb: usize, ne: usize) -> PolicyInput {
        let mut f = || rng.gen_range(-1.0..1.0);
        let channel_feat = std::array::from_fn(|_| f());
        let edges = (0..ne).map(|_| std::array::from_fn(|_| f())).collect();
        let candidates = (0..nb).map(|_| std::array::from_fn(|_| f())).collect();
        let mut admissible: Vec<bool> = (0..nb).map(|_| rng.gen_bool(0.7)).collect();
        admissible[rng.gen_range(0..nb)] = true;
        PolicyInput { channel: 0, channel_feat, edges, candidates, admissible, gains_bps: vec![0.0; nb], own_gains_bps: vec![0.0; nb] }
    }

    #[test]
    fn zero_parameters_give_half_and_uniform() {
        let pol = NeuralPolicy::new(PolicyParams::zeros(32, 16));
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let inp = random_input(&mut rng, 6, 3);
        assert_eq!(pol.add_edge_probability(&inp).unwrap(), 0.5);
        let d = pol.node_distribution(&inp).unwrap();
        let k = inp.admissible_count() as f64;
        for (p, &a) in d.iter().zip(&inp.admissible) {
            assert_eq!(*p, if a { 1.0 / k } else { 0.0 });
        }
    }

    #[test]
    fn single_admissible_beam_gets_everything() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let pol = NeuralPolicy::new(PolicyParams::init(&PolicyInit::default(), &mut rng));
        let mut inp = random_input(&mut rng, 5, 2);
        inp.admissible = vec![false, false, true, false, false];
        assert_eq!(pol.node_distribution(&inp).unwrap(), vec![0.0, 0.0, 1.0, 0.0, 0.0]);
    }

    #[test]
    fn outputs_invariant_to_edge_and_beam_order() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let pol = NeuralPolicy::new(PolicyParams::init(&PolicyInit::default(), &mut rng));
        let inp = random_input(&mut rng, 6, 4);
        let mut perm = inp.clone();
        perm.edges.reverse();
        perm.candidates.reverse();
        perm.admissible.reverse();
        let a = pol.add_edge_probability(&inp).unwrap();
        let b = pol.add_edge_probability(&perm).unwrap();
        assert!((a - b).abs() < 1e-12);
        let mut d2 = pol.node_distribution(&perm).unwrap();
        d2.reverse();
        for (x, y) in pol.node_distribution(&inp).unwrap().iter().zip(&d2) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn add_probability_strictly_inside_unit_interval() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let pol = NeuralPolicy::new(PolicyParams::init(&PolicyInit::default(), &mut rng));
        for _ in 0..100 {
            let ne = rng.gen_range(0..4);
            let inp = random_input(&mut rng, 4, ne);
            let p = pol.add_edge_probability(&inp).unwrap();
            assert!(p > 0.0 && p < 1.0);
        }
    }

    #[test]
    fn non_finite_input_is_rejected() {
        let pol = NeuralPolicy::new(PolicyParams::zeros(8, 4));
        let mut inp = random_input(&mut ChaCha8Rng::seed_from_u64(5), 3, 1);
        inp.edges[0][2] = f64::NAN;
        assert!(pol.add_edge_probability(&inp).is_err());
        assert!(pol.node_distribution(&inp).is_err());
    }

    #[test]
    fn params_round_trip_bit_exactly() {
        let p = PolicyParams::init(&PolicyInit::default(), &mut ChaCha8Rng::seed_from_u64(6));
        let text = serde_json::to_string(&p).unwrap();
        let q: PolicyParams = serde_json::from_str(&text).unwrap();
        assert!(p.flat().iter().zip(q.flat()).all(|(a, b)| a.to_bits() == b.to_bits()));
        q.validate().unwrap();
    }

    #[test]
    fn log_prob_matches_gradient_pass() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let pol = NeuralPolicy::new(PolicyParams::init(&PolicyInit::default(), &mut rng));
        let inp = random_input(&mut rng, 5, 3);
        let chosen = inp.admissible.iter().position(|&a| a).unwrap();
        for d in [Decision::Add { input: inp.clone(), added: true }, Decision::Node { input: inp, chosen }] {
            assert!((pol.log_prob(&d) - pol.log_prob_grad(&d).0).abs() < 1e-12);
        }
    }
}
