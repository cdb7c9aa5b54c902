//! Diagonal Gaussian heads, the mode-mixture prior, sampling and KL terms.
//!
//! Graph-building versions carry a `_node` suffix; the plain versions work on
//! arrays and are what inference and the tests use.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::model::{HeadIds, ModelParams};
use crate::numcore::{self, Array, Graph, NodeId};

pub const LOG_VAR_MIN: f64 = -10.0;
pub const LOG_VAR_MAX: f64 = 10.0;

#[derive(Clone, Debug, PartialEq)]
pub struct GaussianParams {
    pub mu: Array,
    pub log_var: Array,
}

impl GaussianParams {
    /// Clamps `log_var` into `[-10, 10]`.
    pub fn new(mu: Vec<f64>, log_var: Vec<f64>) -> Result<Self> {
        if mu.len() != log_var.len() {
            return Err(Error::dim("GaussianParams", format!("mu {} vs log_var {}", mu.len(), log_var.len())));
        }
        let n = mu.len();
        let lv = log_var.into_iter().map(|v| v.clamp(LOG_VAR_MIN, LOG_VAR_MAX)).collect();
        Ok(GaussianParams { mu: Array::new(alloc::vec![n], mu)?, log_var: Array::new(alloc::vec![n], lv)? })
    }

    pub fn standard(d: usize) -> Self {
        GaussianParams { mu: Array::zeros(&[d]), log_var: Array::zeros(&[d]) }
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    pub fn variance(&self) -> Vec<f64> {
        self.log_var.data().iter().map(|&v| libm::exp(v)).collect()
    }

    pub fn sigma(&self) -> Vec<f64> {
        self.log_var.data().iter().map(|&v| libm::exp(0.5 * v)).collect()
    }
}

/// `β = 1 - sigmoid(n)`, evaluated as `sigmoid(-n)` so it stays positive for
/// large counts.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd)]
pub struct PriorWeight {
    pub beta: f64,
}

pub fn prior_weight(n: i64) -> Result<PriorWeight> {
    if n < 0 {
        return Err(Error::invalid("practice count", format!("{n} is negative")));
    }
    Ok(PriorWeight { beta: numcore::sigmoid(-(n as f64)) })
}

impl PriorWeight {
    pub fn from_count(n: u64) -> Self {
        PriorWeight { beta: numcore::sigmoid(-(n as f64)) }
    }
}

/// Mean and clamped log-variance nodes of a Gaussian on a graph.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct GaussianNodes {
    pub mu: NodeId,
    pub log_var: NodeId,
}

impl GaussianNodes {
    pub fn to_params(self, g: &Graph<'_>) -> Result<GaussianParams> {
        GaussianParams::new(g.value(self.mu).to_vec(), g.value(self.log_var).to_vec())
    }
}

pub fn head_node(g: &mut Graph<'_>, x: NodeId, head: &HeadIds) -> Result<GaussianNodes> {
    let wm = g.param(head.mu_weight);
    let bm = g.param(head.mu_bias);
    let wv = g.param(head.log_var_weight);
    let bv = g.param(head.log_var_bias);
    let mu = g.linear(x, wm, bm)?;
    let raw = g.linear(x, wv, bv)?;
    let log_var = g.clamp(raw, LOG_VAR_MIN, LOG_VAR_MAX);
    Ok(GaussianNodes { mu, log_var })
}

pub fn standard_node(g: &mut Graph<'_>, d: usize) -> GaussianNodes {
    let z = g.input(alloc::vec![0.0; d]);
    GaussianNodes { mu: z, log_var: z }
}

/// Moment-matched mixture: `μ = Σ p_i μ_i`, `σ² = Σ p_i σ²_i`.
pub fn mixture_node(g: &mut Graph<'_>, p: NodeId, parts: &[GaussianNodes]) -> Result<GaussianNodes> {
    if parts.len() != g.node_len(p) {
        return Err(Error::dim("mixture_prior", format!("{} weights, {} components", g.node_len(p), parts.len())));
    }
    let mus: Vec<NodeId> = parts.iter().map(|c| c.mu).collect();
    let vars: Vec<NodeId> = parts.iter().map(|c| g.exp(c.log_var)).collect();
    let mu = g.weighted_sum(p, &mus)?;
    let var = g.weighted_sum(p, &vars)?;
    let lv = g.ln(var)?;
    Ok(GaussianNodes { mu, log_var: lv })
}

/// `μ + exp(log_var / 2) ⊙ ε` with `ε` held constant.
pub fn reparameterize_node(g: &mut Graph<'_>, q: GaussianNodes, noise: Vec<f64>) -> Result<NodeId> {
    if noise.len() != g.node_len(q.mu) {
        return Err(Error::dim("reparameterize", format!("noise {} vs d {}", noise.len(), g.node_len(q.mu))));
    }
    let half = g.scale(q.log_var, 0.5);
    let sigma = g.exp(half);
    let eps = g.input(noise);
    let step = g.mul(sigma, eps)?;
    g.add(q.mu, step)
}

/// `KL(q ‖ p)` for diagonal Gaussians.
pub fn kl_node(g: &mut Graph<'_>, q: GaussianNodes, p: GaussianNodes) -> Result<NodeId> {
    if g.node_len(q.mu) != g.node_len(p.mu) {
        return Err(Error::dim("kl_diag", format!("{} vs {}", g.node_len(q.mu), g.node_len(p.mu))));
    }
    let var_q = g.exp(q.log_var);
    let neg = g.scale(p.log_var, -1.0);
    let inv_p = g.exp(neg);
    let diff = g.sub(q.mu, p.mu)?;
    let sq = g.mul(diff, diff)?;
    let num = g.add(var_q, sq)?;
    let ratio = g.mul(num, inv_p)?;
    let log_ratio = g.sub(p.log_var, q.log_var)?;
    let t = g.add(log_ratio, ratio)?;
    let t = g.add_const(t, -1.0);
    let s = g.sum(t);
    Ok(g.scale(s, 0.5))
}

/// `KL(q ‖ N(0, I)) = ½ Σ (σ² + μ² - 1 - log σ²)`.
pub fn kl_std_node(g: &mut Graph<'_>, q: GaussianNodes) -> Result<NodeId> {
    let var = g.exp(q.log_var);
    let sq = g.mul(q.mu, q.mu)?;
    let t = g.add(var, sq)?;
    let t = g.sub(t, q.log_var)?;
    let t = g.add_const(t, -1.0);
    let s = g.sum(t);
    Ok(g.scale(s, 0.5))
}

pub fn gaussian_head(model: &ModelParams, head: &HeadIds, embedding: &[f64]) -> Result<GaussianParams> {
    let mut g = Graph::new(&model.store);
    let x = g.input(embedding.to_vec());
    head_node(&mut g, x, head)?.to_params(&g)
}

pub fn mixture_prior(p: &[f64], parts: &[GaussianParams]) -> Result<GaussianParams> {
    if p.len() != parts.len() || parts.is_empty() {
        return Err(Error::dim("mixture_prior", format!("{} weights, {} components", p.len(), parts.len())));
    }
    let d = parts[0].dim();
    if parts.iter().any(|c| c.dim() != d) {
        return Err(Error::dim("mixture_prior", "components differ in dimension"));
    }
    let mut mu = alloc::vec![0.0; d];
    let mut var = alloc::vec![0.0; d];
    for (w, c) in p.iter().zip(parts) {
        for i in 0..d {
            mu[i] += w * c.mu.data()[i];
            var[i] += w * libm::exp(c.log_var.data()[i]);
        }
    }
    GaussianParams::new(mu, var.into_iter().map(libm::log).collect())
}

pub fn reparameterize(q: &GaussianParams, noise: &[f64]) -> Result<Vec<f64>> {
    if noise.len() != q.dim() {
        return Err(Error::dim("reparameterize", format!("noise {} vs d {}", noise.len(), q.dim())));
    }
    Ok(q.mu.data().iter().zip(q.sigma()).zip(noise).map(|((m, s), e)| m + s * e).collect())
}

pub fn kl_diag(q: &GaussianParams, p: &GaussianParams) -> Result<f64> {
    if q.dim() != p.dim() {
        return Err(Error::dim("kl_diag", format!("{} vs {}", q.dim(), p.dim())));
    }
    let mut total = 0.0;
    for i in 0..q.dim() {
        let (mq, lq) = (q.mu.data()[i], q.log_var.data()[i]);
        let (mp, lp) = (p.mu.data()[i], p.log_var.data()[i]);
        total += 0.5 * (lp - lq + (libm::exp(lq) + (mq - mp) * (mq - mp)) * libm::exp(-lp) - 1.0);
    }
    Ok(total)
}

pub fn kl_std_normal(q: &GaussianParams) -> f64 {
    kl_diag(q, &GaussianParams::standard(q.dim())).expect("same dimension")
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn gp(mu: &[f64], var: &[f64]) -> GaussianParams {
        GaussianParams::new(mu.to_vec(), var.iter().map(|v| libm::log(*v)).collect()).unwrap()
    }

    #[test]
    fn prior_weight_values() {
        assert_eq!(prior_weight(0).unwrap().beta, 0.5);
        assert!((prior_weight(1).unwrap().beta - 0.2689414213699951).abs() < 1e-15);
        let b = prior_weight(100).unwrap().beta;
        assert!(b > 0.0 && b < 1e-40);
        assert!(matches!(prior_weight(-1), Err(Error::Validation { .. })));
        for n in 0..60 {
            assert!(prior_weight(n + 1).unwrap().beta < prior_weight(n).unwrap().beta);
        }
    }

    #[test]
    fn kl_values() {
        let p = gp(&[0.3, -1.0], &[0.5, 2.0]);
        assert_eq!(kl_diag(&p, &p).unwrap(), 0.0);
        assert!((kl_diag(&gp(&[1.0], &[1.0]), &gp(&[0.0], &[1.0])).unwrap() - 0.5).abs() < 1e-15);
        let want = 0.5 * (4.0 - libm::log(4.0) - 1.0);
        assert!((kl_diag(&gp(&[0.0], &[4.0]), &gp(&[0.0], &[1.0])).unwrap() - want).abs() < 1e-12);
        assert!((want - 0.8069).abs() < 1e-4);
        assert!(kl_diag(&p, &gp(&[0.0], &[1.0])).is_err());
    }

    fn log_density(x: f64, mu: f64, var: f64) -> f64 {
        -0.5 * (libm::log(2.0 * core::f64::consts::PI * var) + (x - mu) * (x - mu) / var)
    }

    #[test]
    fn kl_matches_monte_carlo() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let check = |rng: &mut ChaCha8Rng, mq: f64, vq: f64, mp: f64, vp: f64, n: usize| {
            let exact = kl_diag(&gp(&[mq], &[vq]), &gp(&[mp], &[vp])).unwrap();
            let (mut s, mut s2) = (0.0, 0.0);
            for _ in 0..n {
                let e: f64 = rng.sample(StandardNormal);
                let x = mq + libm::sqrt(vq) * e;
                let v = log_density(x, mq, vq) - log_density(x, mp, vp);
                s += v;
                s2 += v * v;
            }
            let mean = s / n as f64;
            let se = libm::sqrt((s2 / n as f64 - mean * mean) / n as f64);
            assert!((mean - exact).abs() < 3.0 * se + 1e-12, "{exact} vs {mean} ± {se}");
        };
        check(&mut rng, 0.0, 4.0, 0.0, 1.0, 1_000_000);
        for _ in 0..8 {
            let mq = rng.random_range(-2.0..2.0);
            let vq = rng.random_range(0.2..3.0);
            let mp = rng.random_range(-2.0..2.0);
            let vp = rng.random_range(0.2..3.0);
            check(&mut rng, mq, vq, mp, vp, 100_000);
        }
    }

    #[test]
    fn mixture_cases() {
        let a = gp(&[0.0], &[1.0]);
        let b = gp(&[2.0], &[3.0]);
        let m = mixture_prior(&[0.5, 0.5], &[a.clone(), b.clone()]).unwrap();
        assert!((m.mu.data()[0] - 1.0).abs() < 1e-15);
        assert!((m.variance()[0] - 2.0).abs() < 1e-12);
        let sel = mixture_prior(&[0.0, 1.0], &[a.clone(), b.clone()]).unwrap();
        assert_eq!(sel.mu, b.mu);
        assert!((sel.log_var.data()[0] - b.log_var.data()[0]).abs() < 1e-15);
        let same = mixture_prior(&[0.2, 0.8], &[b.clone(), b.clone()]).unwrap();
        assert!((same.variance()[0] - 3.0).abs() < 1e-12);
        assert!(matches!(mixture_prior(&[1.0], &[a, b]), Err(Error::Dimension { .. })));
    }

    #[test]
    fn reparameterize_cases() {
        let q = gp(&[0.4, -0.2], &[2.0, 0.5]);
        assert_eq!(reparameterize(&q, &[0.0, 0.0]).unwrap(), q.mu.data());
        let tight = GaussianParams::new(vec![0.4], vec![-1e9]).unwrap();
        assert_eq!(tight.log_var.data()[0], LOG_VAR_MIN);
        assert!((reparameterize(&tight, &[3.0]).unwrap()[0] - 0.4).abs() < 0.03);
        let std = GaussianParams::standard(2);
        assert_eq!(reparameterize(&std, &[0.7, -1.1]).unwrap(), vec![0.7, -1.1]);
        assert!(reparameterize(&q, &[1.0]).is_err());
    }

    #[test]
    fn graph_versions_agree() {
        let store = crate::numcore::ParamStore::new();
        let mut g = Graph::new(&store);
        let q = GaussianNodes { mu: g.input(vec![0.5, -1.0]), log_var: g.input(vec![0.2, -0.7]) };
        let p = GaussianNodes { mu: g.input(vec![0.1, 0.3]), log_var: g.input(vec![-0.4, 1.1]) };
        let (qp, pp) = (q.to_params(&g).unwrap(), p.to_params(&g).unwrap());
        let k = kl_node(&mut g, q, p).unwrap();
        assert!((g.scalar(k) - kl_diag(&qp, &pp).unwrap()).abs() < 1e-14);
        let ks = kl_std_node(&mut g, q).unwrap();
        assert!((g.scalar(ks) - kl_std_normal(&qp)).abs() < 1e-14);
        let w = g.input(vec![0.3, 0.7]);
        let m = mixture_node(&mut g, w, &[q, p]).unwrap().to_params(&g).unwrap();
        let want = mixture_prior(&[0.3, 0.7], &[qp.clone(), pp]).unwrap();
        assert!(m.mu.data().iter().zip(want.mu.data()).all(|(a, b)| (a - b).abs() < 1e-14));
        assert!(m.log_var.data().iter().zip(want.log_var.data()).all(|(a, b)| (a - b).abs() < 1e-14));
        let e = reparameterize_node(&mut g, q, vec![0.5, 2.0]).unwrap();
        let want = reparameterize(&qp, &[0.5, 2.0]).unwrap();
        assert!(g.value(e).iter().zip(&want).all(|(a, b)| (a - b).abs() < 1e-14));
    }
}
