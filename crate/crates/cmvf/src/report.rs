//! Text tables and `group.metric=value` files.

use std::fmt::Write as _;

use cmvf_core::metrics::MetricsReport;
use cmvf_core::trainer::EpochRecord;

fn fmt_opt(v: Option<f64>, digits: usize) -> String {
    v.map_or_else(|| "undefined".to_string(), |x| format!("{x:.digits$}"))
}

/// `group.metric=value` lines for each report, optionally under a prefix.
pub fn kv_lines(prefix: &str, reports: &[MetricsReport]) -> Vec<String> {
    let mut out = Vec::new();
    for r in reports {
        let g = format!("{prefix}{}", r.group.name());
        out.push(format!("{g}.n_records={}", r.n_records));
        out.push(format!("{g}.acc={:.6}", r.acc));
        out.push(format!("{g}.auc={}", fmt_opt(r.auc, 6)));
        if r.real_impr.is_some() || r.auc.is_none() {
            out.push(format!("{g}.real_impr={}", fmt_opt(r.real_impr, 1)));
        }
    }
    out
}

pub fn table(reports: &[MetricsReport]) -> String {
    let mut s = String::new();
    let impr = reports.iter().any(|r| r.real_impr.is_some());
    write!(s, "{:<12} {:>9} {:>8} {:>8}", "group", "records", "ACC", "AUC").unwrap();
    if impr {
        write!(s, " {:>10}", "RealImpr").unwrap();
    }
    s.push('\n');
    for r in reports {
        write!(s, "{:<12} {:>9} {:>8.4} {:>8}", r.group.name(), r.n_records, r.acc, fmt_opt(r.auc, 4)).unwrap();
        if impr {
            let v = r.real_impr.map_or("undefined".to_string(), |x| format!("{x:.1}%"));
            write!(s, " {v:>10}").unwrap();
        }
        s.push('\n');
    }
    s
}

/// Variant rows with ACC and AUC per group.
pub fn ablation_table(rows: &[(String, Vec<MetricsReport>)]) -> String {
    let mut s = String::new();
    let groups: Vec<&str> = rows
        .first()
        .map(|r| r.1.iter().map(|m| m.group.name()).collect())
        .unwrap_or_default();
    write!(s, "{:<12}", "variant").unwrap();
    for g in &groups {
        write!(s, " {:>17} {:>17}", format!("{g}.ACC"), format!("{g}.AUC")).unwrap();
    }
    s.push('\n');
    for (name, reports) in rows {
        write!(s, "{name:<12}").unwrap();
        for r in reports {
            write!(s, " {:>17.4} {:>17}", r.acc, fmt_opt(r.auc, 4)).unwrap();
        }
        s.push('\n');
    }
    s
}

pub fn history_csv(history: &[EpochRecord]) -> String {
    let mut s = String::from(
        "epoch,loss,reconstruction,kl_student_mode,kl_question_concept,kl_std_normal,valid_auc,valid_acc\n",
    );
    for h in history {
        let l = &h.loss;
        let auc = h.valid_auc.map_or(String::new(), |a| format!("{a:?}"));
        writeln!(
            s,
            "{},{:?},{:?},{:?},{:?},{:?},{auc},{:?}",
            h.epoch, l.total, l.reconstruction, l.kl_student_mode, l.kl_question_concept, l.kl_std_normal, h.valid_acc
        )
        .unwrap();
    }
    s
}

/// Parses `key=value` lines back into pairs.
pub fn parse_kv(text: &str) -> Vec<(String, String)> {
    text.lines()
        .filter_map(|l| l.split_once('='))
        .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
        .collect()
}
