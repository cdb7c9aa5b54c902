//! Dynamic routing of an encoded sequence onto K cognition-mode capsules.
//!
//! Per call the routing logits start at zero and, for `r` iterations,
//!
//! ```text
//! w     = softmax(b)
//! s_j   = w_j · S_j h
//! m_j   = squash(s_j)
//! b_j  += m_jᵀ · S_j h
//! ```
//!
//! after which the membership of capsule `j` is `|m_j| / Σ_k |m_k|`.
//! Gradients flow through every iteration, logit updates included.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::numcore::{self, Array, Graph, NodeId, ParamStore};

pub const DEFAULT_ROUTING_ITERS: usize = 3;
pub const DEFAULT_CAPSULES: usize = 30;

/// How capsule output norms become membership probabilities.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Membership {
    /// `|m_j| / Σ_k |m_k|`; uniform when every norm is zero.
    #[default]
    NormRatio,
    /// `softmax(|m|)`.
    Softmax,
}

impl Membership {
    pub fn as_str(self) -> &'static str {
        match self {
            Membership::NormRatio => "norm",
            Membership::Softmax => "softmax",
        }
    }
}

impl core::str::FromStr for Membership {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "norm" => Ok(Membership::NormRatio),
            "softmax" => Ok(Membership::Softmax),
            other => Err(Error::invalid("membership rule", format!("`{other}` (expected norm|softmax)"))),
        }
    }
}

/// Graph nodes produced by one routing call.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Routing {
    pub modes: Vec<NodeId>,
    pub membership: NodeId,
}

/// Routes `h` through the bilinear maps `bilinear[j]` (each `d × d`).
pub fn route(
    g: &mut Graph<'_>,
    h: NodeId,
    bilinear: &[NodeId],
    iters: usize,
    rule: Membership,
) -> Result<Routing> {
    let k = bilinear.len();
    if k == 0 {
        return Err(Error::invalid("capsule count", "K must be at least 1"));
    }
    if iters == 0 {
        return Err(Error::invalid("routing iterations", "r must be at least 1"));
    }
    let d = g.node_len(h);
    let votes = bilinear
        .iter()
        .map(|&s| g.matvec(s, h, d, d))
        .collect::<Result<Vec<_>>>()?;

    let mut logits = g.input(vec![0.0; k]);
    let mut modes = Vec::new();
    for it in 0..iters {
        let w = g.softmax(logits)?;
        modes.clear();
        let mut agreement = Vec::with_capacity(k);
        for (j, &u) in votes.iter().enumerate() {
            let wj = g.slice(w, j, 1)?;
            let s = g.scale_by(u, wj)?;
            let m = g.squash(s);
            modes.push(m);
            if it + 1 < iters {
                agreement.push(g.dot(m, u)?);
            }
        }
        // the final logit update cannot influence any output
        if it + 1 < iters {
            let delta = g.concat(&agreement);
            logits = g.add(logits, delta)?;
        }
    }

    let norms: Vec<NodeId> = modes.iter().map(|&m| g.norm(m)).collect();
    let norms = g.concat(&norms);
    let membership = match rule {
        Membership::NormRatio => g.normalize_sum(norms)?,
        Membership::Softmax => g.softmax(norms)?,
    };
    Ok(Routing { modes, membership })
}

/// `M = Σ_j p_j · m_j`.
pub fn mode_pool_node(g: &mut Graph<'_>, routing: &Routing) -> Result<NodeId> {
    g.weighted_sum(routing.membership, &routing.modes)
}

/// Probability-weighted sum of capsule vectors.
pub fn mode_pool(modes: &[Vec<f64>], p: &[f64]) -> Result<Vec<f64>> {
    if modes.len() != p.len() || modes.is_empty() {
        return Err(Error::dim("mode_pool", format!("{} capsules, {} probabilities", modes.len(), p.len())));
    }
    let d = modes[0].len();
    let mut out = vec![0.0; d];
    for (m, &w) in modes.iter().zip(p) {
        if m.len() != d {
            return Err(Error::dim("mode_pool", "capsule vectors differ in length"));
        }
        out.iter_mut().zip(m).for_each(|(o, v)| *o += w * v);
    }
    Ok(out)
}

pub fn squash(s: &[f64]) -> Vec<f64> {
    numcore::squash(s)
}

/// Capsule matrices together with the outputs of the latest routing call.
#[derive(Clone, Debug, PartialEq)]
pub struct CapsuleBank {
    /// Shape `[K, d, d]`.
    pub bilinear: Array,
    pub logits: Vec<f64>,
    pub modes: Vec<Vec<f64>>,
    pub membership: Vec<f64>,
}

impl CapsuleBank {
    pub fn new(bilinear: Array) -> Result<Self> {
        match bilinear.shape() {
            [k, a, b] if *k > 0 && a == b => {}
            s => return Err(Error::dim("CapsuleBank", format!("expected [K, d, d], got {s:?}"))),
        }
        Ok(CapsuleBank { bilinear, logits: Vec::new(), modes: Vec::new(), membership: Vec::new() })
    }

    pub fn capsules(&self) -> usize {
        self.bilinear.shape()[0]
    }

    pub fn width(&self) -> usize {
        self.bilinear.shape()[1]
    }

    /// Runs routing on `h`, replacing the stored outputs. The logits are
    /// reset to zero first, so no state carries over between calls.
    pub fn route(&mut self, h: &[f64], iters: usize, rule: Membership) -> Result<()> {
        let d = self.width();
        if h.len() != d {
            return Err(Error::dim("route", format!("h has length {}, capsules expect {d}", h.len())));
        }
        self.logits = vec![0.0; self.capsules()];
        let empty = ParamStore::new();
        let mut g = Graph::new(&empty);
        let hn = g.input(h.to_vec());
        let blocks: Vec<NodeId> = (0..self.capsules())
            .map(|j| g.input(self.bilinear.row(j).to_vec()))
            .collect();
        let r = route(&mut g, hn, &blocks, iters, rule)?;
        self.modes = r.modes.iter().map(|&m| g.value(m).to_vec()).collect();
        self.membership = g.value(r.membership).to_vec();
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn squash_cases() {
        assert_eq!(squash(&[0.0, 0.0, 0.0]), vec![0.0; 3]);
        let u = squash(&[0.6, 0.8]);
        assert!((numcore::l2(&u) - 0.5).abs() < 1e-15);
        assert!((u[0] / u[1] - 0.75).abs() < 1e-15);
        let v = squash(&[3.0, 0.0]);
        assert!((v[0] - 0.9).abs() < 1e-15 && v[1] == 0.0);
    }

    #[test]
    fn mode_pool_cases() {
        let m = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        assert_eq!(mode_pool(&m, &[0.0, 1.0]).unwrap(), vec![0.0, 1.0]);
        assert_eq!(mode_pool(&m, &[0.25, 0.75]).unwrap(), vec![0.25, 0.75]);
        let same = vec![vec![0.3, -0.2]; 3];
        let pooled = mode_pool(&same, &[0.2, 0.5, 0.3]).unwrap();
        assert!((pooled[0] - 0.3).abs() < 1e-15 && (pooled[1] + 0.2).abs() < 1e-15);
        assert!(matches!(mode_pool(&m, &[1.0]), Err(Error::Dimension { .. })));
    }

    fn bank(k: usize, d: usize, f: impl Fn(usize) -> f64) -> CapsuleBank {
        CapsuleBank::new(Array::new(vec![k, d, d], (0..k * d * d).map(f).collect()).unwrap()).unwrap()
    }

    #[test]
    fn single_capsule_has_probability_one() {
        let mut b = bank(1, 3, |i| 0.1 * i as f64 - 0.3);
        for r in 1..4 {
            b.route(&[0.5, -1.0, 2.0], r, Membership::NormRatio).unwrap();
            assert_eq!(b.membership, vec![1.0]);
        }
    }

    #[test]
    fn identical_capsules_route_uniformly() {
        let d = 3;
        let mut b = bank(4, d, |i| 0.07 * (i % (d * d)) as f64 - 0.2);
        b.route(&[0.4, 0.1, -0.9], 3, Membership::NormRatio).unwrap();
        for p in &b.membership {
            assert!((p - 0.25).abs() < 1e-15);
        }
        for m in &b.modes[1..] {
            assert_eq!(m, &b.modes[0]);
        }
    }

    #[test]
    fn zero_h_gives_uniform_membership() {
        let mut b = bank(3, 2, |i| i as f64);
        b.route(&[0.0, 0.0], 2, Membership::NormRatio).unwrap();
        assert_eq!(b.membership, vec![1.0 / 3.0; 3]);
    }

    #[test]
    fn rejects_bad_arguments() {
        let empty = ParamStore::new();
        let mut g = Graph::new(&empty);
        let h = g.input(vec![1.0, 2.0]);
        assert!(matches!(route(&mut g, h, &[], 3, Membership::NormRatio), Err(Error::Validation { .. })));
        let s = g.input(vec![1.0; 4]);
        assert!(matches!(route(&mut g, h, &[s], 0, Membership::NormRatio), Err(Error::Validation { .. })));
        let mut b = bank(2, 2, |i| i as f64);
        assert!(b.route(&[1.0], 1, Membership::NormRatio).is_err());
    }

    #[test]
    fn routing_is_stateless_across_calls() {
        let mut b = bank(3, 2, |i| 0.3 * libm::sin(i as f64));
        b.route(&[1.0, -0.5], 3, Membership::NormRatio).unwrap();
        let first = (b.modes.clone(), b.membership.clone());
        b.route(&[-2.0, 0.7], 3, Membership::NormRatio).unwrap();
        b.route(&[1.0, -0.5], 3, Membership::NormRatio).unwrap();
        assert_eq!((b.modes.clone(), b.membership.clone()), first);
    }
}
