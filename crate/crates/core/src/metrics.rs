//! ACC, AUC, relative improvement and grouped reports.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};

pub const ACC_THRESHOLD: f64 = 0.5;

fn check_inputs(preds: &[f64], labels: &[bool]) -> Result<()> {
    if preds.len() != labels.len() {
        return Err(Error::dim("metrics", format!("{} predictions, {} labels", preds.len(), labels.len())));
    }
    if preds.is_empty() {
        return Err(Error::invalid("metrics input", "no records"));
    }
    if preds.iter().any(|p| p.is_nan()) {
        return Err(Error::NonFinite { context: "prediction".into() });
    }
    Ok(())
}

/// Fraction of records with `(pred >= 0.5) == label`.
pub fn accuracy(preds: &[f64], labels: &[bool]) -> Result<f64> {
    check_inputs(preds, labels)?;
    let hits = preds.iter().zip(labels).filter(|(p, l)| (**p >= ACC_THRESHOLD) == **l).count();
    Ok(hits as f64 / preds.len() as f64)
}

/// Rank AUC with averaged ranks for ties.
pub fn auc(preds: &[f64], labels: &[bool]) -> Result<f64> {
    check_inputs(preds, labels)?;
    let n_pos = labels.iter().filter(|&&l| l).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::UndefinedAuc { n: labels.len() });
    }
    let mut order: Vec<usize> = (0..preds.len()).collect();
    order.sort_by(|&a, &b| preds[a].total_cmp(&preds[b]));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && preds[order[j + 1]] == preds[order[i]] {
            j += 1;
        }
        // 1-based ranks i+1..=j+1
        let avg = (i + j + 2) as f64 / 2.0;
        rank_sum += avg * order[i..=j].iter().filter(|&&k| labels[k]).count() as f64;
        i = j + 1;
    }
    let np = n_pos as f64;
    Ok((rank_sum - np * (np + 1.0) / 2.0) / (np * n_neg as f64))
}

/// Relative AUC improvement in percent, measured from chance level.
pub fn real_impr(target_auc: f64, base_auc: f64) -> Result<f64> {
    if base_auc.is_nan() || base_auc <= 0.5 || !target_auc.is_finite() || base_auc > 1.0 {
        return Err(Error::invalid("base AUC", format!("{base_auc} must lie in (0.5, 1]")));
    }
    Ok(((target_auc - 0.5) / (base_auc - 0.5) - 1.0) * 100.0)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Group {
    Overall,
    Frequent,
    Infrequent,
}

impl Group {
    pub const ALL: [Group; 3] = [Group::Overall, Group::Frequent, Group::Infrequent];

    pub fn name(self) -> &'static str {
        match self {
            Group::Overall => "overall",
            Group::Frequent => "frequent",
            Group::Infrequent => "infrequent",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MetricsReport {
    pub group: Group,
    pub n_records: usize,
    pub acc: f64,
    /// `None` when the group holds a single class.
    pub auc: Option<f64>,
    pub real_impr: Option<f64>,
}

impl MetricsReport {
    pub fn compute(group: Group, preds: &[f64], labels: &[bool]) -> Result<Self> {
        let acc = accuracy(preds, labels)?;
        let auc = match auc(preds, labels) {
            Ok(a) => Some(a),
            Err(Error::UndefinedAuc { .. }) => None,
            Err(e) => return Err(e),
        };
        Ok(MetricsReport { group, n_records: preds.len(), acc, auc, real_impr: None })
    }

    pub fn with_base(mut self, base_auc: f64) -> Result<Self> {
        self.real_impr = match self.auc {
            Some(a) => Some(real_impr(a, base_auc)?),
            None => None,
        };
        Ok(self)
    }
}

/// A scored record: the student it belongs to, the prediction and the label.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Scored {
    pub student: u32,
    pub pred: f64,
    pub label: bool,
}

/// Overall report followed by the frequent and infrequent bands.
pub fn group_report(
    scored: &[Scored],
    frequent: &BTreeSet<u32>,
    infrequent: &BTreeSet<u32>,
) -> Result<Vec<MetricsReport>> {
    if scored.is_empty() {
        return Err(Error::invalid("test set", "no records to evaluate"));
    }
    let mut out = Vec::with_capacity(3);
    for group in Group::ALL {
        let keep = |s: &Scored| match group {
            Group::Overall => true,
            Group::Frequent => frequent.contains(&s.student),
            Group::Infrequent => infrequent.contains(&s.student),
        };
        let (preds, labels): (Vec<f64>, Vec<bool>) =
            scored.iter().filter(|s| keep(s)).map(|s| (s.pred, s.label)).unzip();
        if preds.is_empty() {
            continue;
        }
        out.push(MetricsReport::compute(group, &preds, &labels)?);
    }
    Ok(out)
}
