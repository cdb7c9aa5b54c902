//! Synthetic practice logs with a known latent response model.
//!
//! Each student belongs to one of a few latent learning modes; a mode fixes
//! an ability centre and a learning gain. Responses are Bernoulli draws of
//!
//! ```text
//! sigmoid(ability_u - difficulty_q + gain_u * progress_t),  progress_t = 1 - exp(-t / 20)
//! ```
//!
//! and sequence lengths follow a power law `P(L) ∝ L^-a` on
//! `[min_len, max_len]`, which yields the long-tailed activity profile of
//! real tutoring logs.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::{Dataset, RawEvent, MIN_SEQUENCE_LEN};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct SynthConfig {
    pub students: usize,
    pub questions: usize,
    pub concepts: usize,
    pub max_concepts_per_question: usize,
    pub min_len: usize,
    pub max_len: usize,
    /// Power-law exponent of the sequence-length distribution.
    pub length_exponent: f64,
    pub modes: usize,
    /// Spread of the per-mode ability centres.
    pub mode_spread: f64,
    /// Within-mode spread of individual ability.
    pub ability_sd: f64,
    /// Constant added to every ability.
    pub ability_offset: f64,
    pub difficulty_sd: f64,
    /// Upper end of the per-mode learning gain, drawn uniformly in `[0, max]`.
    pub max_learning_gain: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            students: 200,
            questions: 300,
            concepts: 30,
            max_concepts_per_question: 3,
            min_len: 3,
            max_len: 200,
            length_exponent: 1.5,
            modes: 4,
            mode_spread: 1.5,
            ability_sd: 0.7,
            ability_offset: 0.0,
            difficulty_sd: 1.5,
            max_learning_gain: 1.5,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("students", self.students),
            ("questions", self.questions),
            ("concepts", self.concepts),
            ("max_concepts_per_question", self.max_concepts_per_question),
            ("modes", self.modes),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(Error::invalid("generator config", format!("`{name}` must be positive")));
        }
        if self.max_concepts_per_question > self.concepts {
            return Err(Error::invalid(
                "generator config",
                "max_concepts_per_question exceeds the concept count",
            ));
        }
        if self.min_len < MIN_SEQUENCE_LEN || self.max_len < self.min_len {
            return Err(Error::invalid(
                "generator config",
                format!("need {MIN_SEQUENCE_LEN} <= min_len <= max_len"),
            ));
        }
        let reals = [
            self.length_exponent,
            self.mode_spread,
            self.ability_sd,
            self.ability_offset,
            self.difficulty_sd,
            self.max_learning_gain,
        ];
        if reals.iter().any(|v| !v.is_finite())
            || self.mode_spread < 0.0
            || self.ability_sd < 0.0
            || self.difficulty_sd < 0.0
            || self.max_learning_gain < 0.0
        {
            return Err(Error::invalid("generator config", "spreads must be finite and >= 0"));
        }
        Ok(())
    }

    pub const KEYS: [&'static str; 13] = [
        "students",
        "questions",
        "concepts",
        "max_concepts_per_question",
        "min_len",
        "max_len",
        "length_exponent",
        "modes",
        "mode_spread",
        "ability_sd",
        "ability_offset",
        "difficulty_sd",
        "max_learning_gain",
    ];

    /// Sets one field from its textual form.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn parse<T: core::str::FromStr>(key: &str, v: &str) -> Result<T> {
            v.trim()
                .parse()
                .map_err(|_| Error::invalid("config value", format!("`{key}` cannot be `{v}`")))
        }
        match key {
            "students" => self.students = parse(key, value)?,
            "questions" => self.questions = parse(key, value)?,
            "concepts" => self.concepts = parse(key, value)?,
            "max_concepts_per_question" => self.max_concepts_per_question = parse(key, value)?,
            "min_len" => self.min_len = parse(key, value)?,
            "max_len" => self.max_len = parse(key, value)?,
            "length_exponent" => self.length_exponent = parse(key, value)?,
            "modes" => self.modes = parse(key, value)?,
            "mode_spread" => self.mode_spread = parse(key, value)?,
            "ability_sd" => self.ability_sd = parse(key, value)?,
            "ability_offset" => self.ability_offset = parse(key, value)?,
            "difficulty_sd" => self.difficulty_sd = parse(key, value)?,
            "max_learning_gain" => self.max_learning_gain = parse(key, value)?,
            _ => return Err(Error::invalid("config key", format!("unknown `{key}`"))),
        }
        Ok(())
    }

    pub fn entries(&self) -> Vec<(&'static str, String)> {
        alloc::vec![
            ("students", self.students.to_string()),
            ("questions", self.questions.to_string()),
            ("concepts", self.concepts.to_string()),
            ("max_concepts_per_question", self.max_concepts_per_question.to_string()),
            ("min_len", self.min_len.to_string()),
            ("max_len", self.max_len.to_string()),
            ("length_exponent", format!("{:?}", self.length_exponent)),
            ("modes", self.modes.to_string()),
            ("mode_spread", format!("{:?}", self.mode_spread)),
            ("ability_sd", format!("{:?}", self.ability_sd)),
            ("ability_offset", format!("{:?}", self.ability_offset)),
            ("difficulty_sd", format!("{:?}", self.difficulty_sd)),
            ("max_learning_gain", format!("{:?}", self.max_learning_gain)),
        ]
    }

    /// Length distribution `P(L)` for `L` in `min_len..=max_len`.
    pub fn length_pmf(&self) -> Vec<f64> {
        let w: Vec<f64> = (self.min_len..=self.max_len)
            .map(|l| libm::pow(l as f64, -self.length_exponent))
            .collect();
        let total: f64 = w.iter().sum();
        w.into_iter().map(|x| x / total).collect()
    }
}

/// Generator ground truth, indexed by the generator's own entity numbers
/// (raw ids `s{i}`, `q{j}`, `c{k}`).
#[derive(Clone, Debug, PartialEq)]
pub struct LatentTruth {
    pub student_mode: Vec<usize>,
    pub ability: Vec<f64>,
    pub gain: Vec<f64>,
    pub difficulty: Vec<f64>,
    pub question_concepts: Vec<Vec<usize>>,
    pub lengths: Vec<usize>,
}

pub fn progress(t: usize) -> f64 {
    1.0 - libm::exp(-(t as f64) / 20.0)
}

pub fn synthesize(config: &SynthConfig, seed: u64) -> Result<(Dataset, LatentTruth)> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = |rng: &mut ChaCha8Rng| -> f64 { rng.sample(StandardNormal) };

    let mode_centre: Vec<f64> = (0..config.modes).map(|_| config.mode_spread * normal(&mut rng)).collect();
    let mode_gain: Vec<f64> = (0..config.modes)
        .map(|_| rng.random_range(0.0..=1.0) * config.max_learning_gain)
        .collect();

    let concept_difficulty: Vec<f64> =
        (0..config.concepts).map(|_| config.difficulty_sd * normal(&mut rng)).collect();
    let mut question_concepts = Vec::with_capacity(config.questions);
    let mut difficulty = Vec::with_capacity(config.questions);
    for _ in 0..config.questions {
        let k = rng.random_range(1..=config.max_concepts_per_question);
        let mut cs: Vec<usize> = Vec::with_capacity(k);
        while cs.len() < k {
            let c = rng.random_range(0..config.concepts);
            if !cs.contains(&c) {
                cs.push(c);
            }
        }
        cs.sort_unstable();
        let base = cs.iter().map(|&c| concept_difficulty[c]).sum::<f64>() / k as f64;
        difficulty.push(base + 0.5 * config.difficulty_sd * normal(&mut rng));
        question_concepts.push(cs);
    }

    let pmf = config.length_pmf();
    let mut student_mode = Vec::with_capacity(config.students);
    let mut ability = Vec::with_capacity(config.students);
    let mut gain = Vec::with_capacity(config.students);
    let mut lengths = Vec::with_capacity(config.students);
    let mut raw = Vec::new();
    for s in 0..config.students {
        let mode = rng.random_range(0..config.modes);
        let a = config.ability_offset + mode_centre[mode] + config.ability_sd * normal(&mut rng);
        let u: f64 = rng.random_range(0.0..1.0);
        let mut acc = 0.0;
        let mut len = config.max_len;
        for (i, p) in pmf.iter().enumerate() {
            acc += p;
            if u < acc {
                len = config.min_len + i;
                break;
            }
        }
        for t in 0..len {
            let q = rng.random_range(0..config.questions);
            let logit = a - difficulty[q] + mode_gain[mode] * progress(t);
            let correct = rng.random_range(0.0..1.0) < crate::numcore::sigmoid(logit);
            raw.push(RawEvent {
                student: format!("s{s}"),
                question: format!("q{q}"),
                concepts: question_concepts[q].iter().map(|c| format!("c{c}")).collect(),
                correct,
                order_index: t as u64,
            });
        }
        student_mode.push(mode);
        ability.push(a);
        gain.push(mode_gain[mode]);
        lengths.push(len);
    }

    let dataset = Dataset::from_raw(raw)?;
    Ok((dataset, LatentTruth { student_mode, ability, gain, difficulty, question_concepts, lengths }))
}
