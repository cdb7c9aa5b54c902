//! Binary checkpoint container.
//!
//! ```text
//! magic     8 bytes   "CMVFCKPT"
//! version   u32 LE
//! length    u64 LE    manifest length in bytes
//! manifest  UTF-8     tab-separated lines, see below
//! payload   f64 LE    arrays back to back
//! crc32     u32 LE    over every preceding byte
//! ```
//!
//! Manifest lines are `config KEY VALUE`, `dims ...`, `epoch N`,
//! `best_epoch N`, `step_count N`, `history ...`, `student|question|concept RAW`
//! (in dense-index order) and `array NAME BYTE_OFFSET SHAPE`. Array names are
//! the parameter name behind one of the prefixes `param/`, `best/`,
//! `adam.m/` and `adam.v/`.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::sync::Arc;

use cmvf_core::data::{IdMap, IdMaps};
use cmvf_core::numcore::{Array, ParamStore};
use cmvf_core::objective::LossBreakdown;
use cmvf_core::optim::AdamState;
use cmvf_core::trainer::EpochRecord;
use cmvf_core::{Checkpoint, ModelDims, TrainConfig};

use crate::error::CliError;

pub const MAGIC: &[u8; 8] = b"CMVFCKPT";
pub const FORMAT_VERSION: u32 = 1;

const PREFIXES: [&str; 4] = ["param/", "best/", "adam.m/", "adam.v/"];

fn bad(msg: impl Into<String>) -> CliError {
    CliError::Checkpoint(msg.into())
}

fn check_raw(kind: &str, raw: &str) -> Result<(), CliError> {
    if raw.contains(['\t', '\n', '\r']) {
        return Err(bad(format!("{kind} id {raw:?} contains a tab or newline")));
    }
    Ok(())
}

pub fn encode(c: &Checkpoint) -> Result<Vec<u8>, CliError> {
    let mut m = String::new();
    for (k, v) in c.config.entries() {
        writeln!(m, "config\t{k}\t{v}").unwrap();
    }
    let d = &c.dims;
    writeln!(m, "dims\t{}\t{}\t{}\t{}\t{}", d.d, d.capsules, d.students, d.questions, d.concepts).unwrap();
    writeln!(m, "epoch\t{}", c.epoch).unwrap();
    writeln!(m, "best_epoch\t{}", c.best_epoch).unwrap();
    writeln!(m, "step_count\t{}", c.optimizer.step_count).unwrap();
    for h in &c.history {
        let l = &h.loss;
        let auc = h.valid_auc.map_or("none".to_string(), |a| format!("{a:?}"));
        writeln!(
            m,
            "history\t{}\t{:?}\t{:?}\t{:?}\t{:?}\t{:?}\t{auc}\t{:?}",
            h.epoch, l.total, l.reconstruction, l.kl_student_mode, l.kl_question_concept, l.kl_std_normal, h.valid_acc
        )
        .unwrap();
    }
    for (kind, map) in [("student", &c.ids.students), ("question", &c.ids.questions), ("concept", &c.ids.concepts)] {
        for i in 0..map.len() {
            let raw = map.raw(i as u32);
            check_raw(kind, raw)?;
            writeln!(m, "{kind}\t{raw}").unwrap();
        }
    }

    if !c.params.same_layout(&c.best_params) || !c.optimizer.matches(&c.params) {
        return Err(bad("parameter sets disagree in layout"));
    }
    let mut payload: Vec<u8> = Vec::new();
    let mut put = |m: &mut String, name: String, shape: &[usize], values: &[f64]| {
        let dims: Vec<String> = shape.iter().map(|s| s.to_string()).collect();
        writeln!(m, "array\t{name}\t{}\t{}", payload.len(), dims.join(",")).unwrap();
        for v in values {
            payload.extend_from_slice(&v.to_le_bytes());
        }
    };
    for (i, (name, a)) in c.params.iter().enumerate() {
        put(&mut m, format!("param/{name}"), a.shape(), a.data());
        put(&mut m, format!("best/{name}"), a.shape(), c.best_params.iter().nth(i).unwrap().1.data());
        put(&mut m, format!("adam.m/{name}"), a.shape(), &c.optimizer.first_moment[i]);
        put(&mut m, format!("adam.v/{name}"), a.shape(), &c.optimizer.second_moment[i]);
    }

    let mut out = Vec::with_capacity(24 + m.len() + payload.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(m.len() as u64).to_le_bytes());
    out.extend_from_slice(m.as_bytes());
    out.extend_from_slice(&payload);
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    Ok(out)
}

fn num<T: std::str::FromStr>(s: &str, what: &str) -> Result<T, CliError> {
    s.parse().map_err(|_| bad(format!("malformed {what} `{s}`")))
}

pub fn decode(bytes: &[u8]) -> Result<Checkpoint, CliError> {
    if bytes.len() < 8 || &bytes[..8] != MAGIC {
        return Err(bad("not a checkpoint file (bad magic)"));
    }
    if bytes.len() < 24 {
        return Err(bad("integrity error: file truncated in header"));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    if version != FORMAT_VERSION {
        return Err(bad(format!(
            "format version {version} is not supported (this build reads version {FORMAT_VERSION})"
        )));
    }
    let body = bytes.len() - 4;
    let stored = u32::from_le_bytes(bytes[body..].try_into().unwrap());
    if crc32fast::hash(&bytes[..body]) != stored {
        return Err(bad("integrity error: checksum mismatch (file truncated or corrupted)"));
    }
    let mlen = u64::from_le_bytes(bytes[12..20].try_into().unwrap()) as usize;
    if 20 + mlen > body {
        return Err(bad("integrity error: manifest runs past the end of the file"));
    }
    let manifest = std::str::from_utf8(&bytes[20..20 + mlen]).map_err(|_| bad("manifest is not UTF-8"))?;
    let payload = &bytes[20 + mlen..body];

    let mut config = TrainConfig::default();
    let mut dims = None;
    let (mut epoch, mut best_epoch, mut step_count) = (0, 0, 0);
    let mut history = Vec::new();
    let mut ids = IdMaps::default();
    let mut arrays: [ParamStore; 4] = Default::default();
    for line in manifest.lines() {
        let f: Vec<&str> = line.split('\t').collect();
        match f.as_slice() {
            ["config", k, v] => config.set(k, v)?,
            ["dims", d, k, s, q, c] => {
                dims = Some(ModelDims {
                    d: num(d, "dims")?,
                    capsules: num(k, "dims")?,
                    students: num(s, "dims")?,
                    questions: num(q, "dims")?,
                    concepts: num(c, "dims")?,
                })
            }
            ["epoch", n] => epoch = num(n, "epoch")?,
            ["best_epoch", n] => best_epoch = num(n, "best_epoch")?,
            ["step_count", n] => step_count = num(n, "step_count")?,
            ["history", e, t, r, um, qc, sn, auc, acc] => history.push(EpochRecord {
                epoch: num(e, "history")?,
                loss: LossBreakdown {
                    total: num(t, "history")?,
                    reconstruction: num(r, "history")?,
                    kl_student_mode: num(um, "history")?,
                    kl_question_concept: num(qc, "history")?,
                    kl_std_normal: num(sn, "history")?,
                },
                valid_auc: if *auc == "none" { None } else { Some(num(auc, "history")?) },
                valid_acc: num(acc, "history")?,
            }),
            ["student", raw] => intern_new(&mut ids.students, raw)?,
            ["question", raw] => intern_new(&mut ids.questions, raw)?,
            ["concept", raw] => intern_new(&mut ids.concepts, raw)?,
            ["array", name, offset, shape] => {
                let shape: Vec<usize> = if shape.is_empty() {
                    Vec::new()
                } else {
                    shape.split(',').map(|s| num(s, "shape")).collect::<Result<_, _>>()?
                };
                let offset: usize = num(offset, "offset")?;
                let n: usize = shape.iter().product();
                let end = offset
                    .checked_add(n * 8)
                    .filter(|&e| e <= payload.len())
                    .ok_or_else(|| bad(format!("integrity error: array `{name}` runs past the payload")))?;
                let data: Vec<f64> = payload[offset..end]
                    .chunks_exact(8)
                    .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
                    .collect();
                let slot = PREFIXES
                    .iter()
                    .position(|p| name.starts_with(p))
                    .ok_or_else(|| bad(format!("unknown array `{name}`")))?;
                let pname = &name[PREFIXES[slot].len()..];
                let arr = Array::new(shape, data).map_err(|e| bad(format!("array `{name}`: {e}")))?;
                arrays[slot].insert(pname, arr)?;
            }
            _ => return Err(bad(format!("unrecognised manifest line `{line}`"))),
        }
    }
    let dims = dims.ok_or_else(|| bad("manifest has no dims line"))?;
    let [params, best_params, m, v] = arrays;
    if !params.same_layout(&best_params) || !params.same_layout(&m) || !params.same_layout(&v) {
        return Err(bad("parameter sets disagree in layout"));
    }
    let optimizer = AdamState {
        first_moment: m.iter().map(|(_, a)| a.data().to_vec()).collect(),
        second_moment: v.iter().map(|(_, a)| a.data().to_vec()).collect(),
        step_count,
    };
    Ok(Checkpoint {
        config,
        dims,
        ids: Arc::new(ids),
        epoch,
        params,
        optimizer,
        best_epoch,
        best_params,
        history,
    })
}

fn intern_new(map: &mut IdMap, raw: &str) -> Result<(), CliError> {
    let before = map.len();
    map.intern(raw);
    if map.len() == before {
        return Err(bad(format!("duplicate id `{raw}` in manifest")));
    }
    Ok(())
}

pub fn save(c: &Checkpoint, path: &Path) -> Result<(), CliError> {
    let bytes = encode(c)?;
    fs::write(path, bytes).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

pub fn load(path: &Path) -> Result<Checkpoint, CliError> {
    let bytes = fs::read(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    decode(&bytes)
}
