//! Minibatch training with Adam, validation-based early stopping and
//! resumable checkpoints.

use alloc::boxed::Box;
use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::capsules::{Membership, DEFAULT_CAPSULES, DEFAULT_ROUTING_ITERS};
use crate::data::{frequency_stats, Dataset, FrequencyStats, IdMaps, StudentSequence};
use crate::encoder::SequenceEncoder;
use crate::error::{Error, Result};
use crate::metrics::{self, Scored};
use crate::model::{ModelDims, ModelParams};
use crate::numcore::{Graph, Gradients, ParamId, ParamStore};
use crate::objective::{
    self, LossBreakdown, ObjectiveConfig, RecordItem, RecordNoise, StudentBatch, Variant,
};
use crate::optim::AdamState;
use crate::variational::PriorWeight;

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub d: usize,
    pub capsules: usize,
    pub routing_iters: usize,
    pub alpha: f64,
    pub samples: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub max_epochs: usize,
    pub patience: usize,
    pub seed: u64,
    pub variant: Variant,
    pub membership: Membership,
    /// Share of each student's training events held out for early stopping.
    pub valid_fraction: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            d: 64,
            capsules: DEFAULT_CAPSULES,
            routing_iters: DEFAULT_ROUTING_ITERS,
            alpha: 0.5,
            samples: 1,
            batch_size: 2048,
            learning_rate: 1e-3,
            max_epochs: 30,
            patience: 5,
            seed: 7,
            variant: Variant::Full,
            membership: Membership::NormRatio,
            valid_fraction: 0.1,
        }
    }
}

/// Learning rates offered for grid search.
pub const LEARNING_RATE_GRID: [f64; 6] = [1e-5, 1e-4, 5e-4, 1e-3, 5e-3, 1e-2];

impl TrainConfig {
    pub const KEYS: [&'static str; 13] = [
        "d",
        "capsules",
        "routing_iters",
        "alpha",
        "samples",
        "batch_size",
        "learning_rate",
        "max_epochs",
        "patience",
        "seed",
        "variant",
        "membership",
        "valid_fraction",
    ];

    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("d", self.d),
            ("capsules", self.capsules),
            ("routing_iters", self.routing_iters),
            ("samples", self.samples),
            ("batch_size", self.batch_size),
            ("max_epochs", self.max_epochs),
            ("patience", self.patience),
        ];
        if let Some((k, _)) = counts.iter().find(|(_, v)| *v == 0) {
            return Err(Error::invalid("training config", format!("`{k}` must be positive")));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::invalid("training config", format!("`alpha` = {} is outside [0, 1]", self.alpha)));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid("training config", "`learning_rate` must be positive"));
        }
        if !(0.0..1.0).contains(&self.valid_fraction) {
            return Err(Error::invalid("training config", "`valid_fraction` must lie in [0, 1)"));
        }
        Ok(())
    }

    pub fn objective(&self) -> ObjectiveConfig {
        ObjectiveConfig {
            variant: self.variant,
            alpha: self.alpha,
            samples: self.samples,
            routing_iters: self.routing_iters,
            membership: self.membership,
        }
    }

    /// Sets one field from its textual form.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn parse<T: core::str::FromStr>(key: &str, v: &str) -> Result<T> {
            v.trim()
                .parse()
                .map_err(|_| Error::invalid("config value", format!("`{key}` cannot be `{v}`")))
        }
        match key {
            "d" => self.d = parse(key, value)?,
            "capsules" => self.capsules = parse(key, value)?,
            "routing_iters" => self.routing_iters = parse(key, value)?,
            "alpha" => self.alpha = parse(key, value)?,
            "samples" => self.samples = parse(key, value)?,
            "batch_size" => self.batch_size = parse(key, value)?,
            "learning_rate" => self.learning_rate = parse(key, value)?,
            "max_epochs" => self.max_epochs = parse(key, value)?,
            "patience" => self.patience = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "variant" => self.variant = value.trim().parse()?,
            "membership" => self.membership = value.trim().parse()?,
            "valid_fraction" => self.valid_fraction = parse(key, value)?,
            _ => return Err(Error::invalid("config key", format!("unknown `{key}`"))),
        }
        Ok(())
    }

    /// Every field as `(key, value)` text; floats round-trip exactly.
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        vec![
            ("d", self.d.to_string()),
            ("capsules", self.capsules.to_string()),
            ("routing_iters", self.routing_iters.to_string()),
            ("alpha", format!("{:?}", self.alpha)),
            ("samples", self.samples.to_string()),
            ("batch_size", self.batch_size.to_string()),
            ("learning_rate", format!("{:?}", self.learning_rate)),
            ("max_epochs", self.max_epochs.to_string()),
            ("patience", self.patience.to_string()),
            ("seed", self.seed.to_string()),
            ("variant", self.variant.tag().to_string()),
            ("membership", self.membership.as_str().to_string()),
            ("valid_fraction", format!("{:?}", self.valid_fraction)),
        ]
    }
}

/// One row of the training history.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    /// Record-weighted means over the epoch.
    pub loss: LossBreakdown,
    pub valid_auc: Option<f64>,
    pub valid_acc: f64,
}

/// Complete training state after `epoch` epochs.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub config: TrainConfig,
    pub dims: ModelDims,
    pub ids: Arc<IdMaps>,
    pub epoch: usize,
    pub params: ParamStore,
    pub optimizer: AdamState,
    pub best_epoch: usize,
    pub best_params: ParamStore,
    pub history: Vec<EpochRecord>,
}

impl Checkpoint {
    /// Parameters of the best validation epoch.
    pub fn best_model(&self) -> Result<ModelParams> {
        ModelParams::from_store(self.dims, self.best_params.clone())
    }

    pub fn last_model(&self) -> Result<ModelParams> {
        ModelParams::from_store(self.dims, self.params.clone())
    }

    pub fn best_auc(&self) -> Option<f64> {
        self.history.get(self.best_epoch.checked_sub(1)?)?.valid_auc
    }

    /// True once `max_epochs` ran or validation AUC stalled for `patience`
    /// epochs.
    pub fn finished(&self) -> bool {
        self.epoch >= self.config.max_epochs
            || (self.best_epoch > 0 && self.epoch - self.best_epoch >= self.config.patience)
    }
}

/// Training aborted on a non-finite value; `last_good` is the state at the
/// end of the previous epoch.
#[derive(Debug)]
pub struct Diverged {
    pub error: Error,
    pub last_good: Box<Checkpoint>,
}

/// Prediction target `sequences[seq].events[pos]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct Record {
    pub seq: usize,
    pub pos: usize,
}

/// Events `sequences[i][start[i]..]` are scored with the full preceding
/// history as context.
pub fn score_tails(
    model: &ModelParams,
    encoder: &dyn SequenceEncoder,
    cfg: &ObjectiveConfig,
    sequences: &[StudentSequence],
    start: &[usize],
) -> Result<Vec<Scored>> {
    if sequences.len() != start.len() {
        return Err(Error::dim("score_tails", "one start offset per sequence"));
    }
    let mut out = Vec::new();
    for (s, &from) in sequences.iter().zip(start) {
        let positions: Vec<usize> = (from..s.len()).collect();
        let preds = objective::predict_positions(model, encoder, cfg, &s.events, &positions)?;
        out.extend(positions.iter().zip(preds).map(|(&p, pred)| Scored {
            student: s.student,
            pred,
            label: s.events[p].correct,
        }));
    }
    Ok(out)
}

/// Scores a held-out split: each test event is predicted from the student's
/// training history plus any earlier test events.
pub fn score_split(
    model: &ModelParams,
    encoder: &dyn SequenceEncoder,
    cfg: &ObjectiveConfig,
    train: &Dataset,
    test: &Dataset,
) -> Result<Vec<Scored>> {
    let full = train.concat(test)?;
    let start: Vec<usize> = full
        .sequences
        .iter()
        .map(|s| train.sequence_of(s.student).map_or(0, |t| t.len()))
        .collect();
    score_tails(model, encoder, cfg, &full.sequences, &start)
}

pub struct Trainer<'a> {
    config: TrainConfig,
    encoder: &'a dyn SequenceEncoder,
    train: &'a Dataset,
    fit_len: Vec<usize>,
    stats: FrequencyStats,
    dims: ModelDims,
}

impl<'a> Trainer<'a> {
    /// Carves the validation tail of every training sequence and counts
    /// practice frequencies on the remaining fit portion.
    pub fn new(train: &'a Dataset, config: TrainConfig, encoder: &'a dyn SequenceEncoder) -> Result<Self> {
        config.validate()?;
        let fit_len: Vec<usize> = train
            .sequences
            .iter()
            .map(|s| s.len() - libm::floor(config.valid_fraction * s.len() as f64) as usize)
            .collect();
        let fit = Dataset {
            sequences: train
                .sequences
                .iter()
                .zip(&fit_len)
                .map(|(s, &n)| StudentSequence { student: s.student, events: s.events[..n].to_vec() })
                .collect(),
            ids: train.ids.clone(),
        };
        if fit.event_count() == 0 {
            return Err(Error::Empty("training split"));
        }
        if train.event_count() == fit.event_count() && config.valid_fraction > 0.0 {
            return Err(Error::Empty("validation split (sequences too short)"));
        }
        let dims = ModelDims {
            d: config.d,
            capsules: config.capsules,
            students: train.student_count(),
            questions: train.question_count(),
            concepts: train.concept_count(),
        };
        Ok(Trainer { stats: frequency_stats(&fit), config, encoder, train, fit_len, dims })
    }

    pub fn dims(&self) -> ModelDims {
        self.dims
    }

    pub fn stats(&self) -> &FrequencyStats {
        &self.stats
    }

    /// Fresh state: initialized parameters, zero epochs.
    pub fn start(&self) -> Result<Checkpoint> {
        let model = ModelParams::init(self.dims, &self.encoder.param_specs(&self.dims), self.config.seed)?;
        Ok(Checkpoint {
            config: self.config.clone(),
            dims: self.dims,
            ids: self.train.ids.clone(),
            epoch: 0,
            optimizer: AdamState::new(&model.store),
            best_epoch: 0,
            best_params: model.store.clone(),
            params: model.store,
            history: Vec::new(),
        })
    }

    pub fn fit_records(&self) -> Vec<Record> {
        self.fit_len
            .iter()
            .enumerate()
            .flat_map(|(seq, &n)| (0..n).map(move |pos| Record { seq, pos }))
            .collect()
    }

    /// Scores the validation tails with `model`.
    pub fn validate(&self, model: &ModelParams) -> Result<Vec<Scored>> {
        score_tails(model, self.encoder, &self.config.objective(), &self.train.sequences, &self.fit_len)
    }

    /// Runs epochs until the state is finished or, when given, `stop_after`
    /// epochs have completed in total. `on_epoch` sees each new history row.
    pub fn run(
        &self,
        mut state: Checkpoint,
        stop_after: Option<usize>,
        on_epoch: &mut dyn FnMut(&EpochRecord),
    ) -> core::result::Result<Checkpoint, Diverged> {
        if state.config != self.config || state.dims != self.dims || state.ids != self.train.ids {
            let error = Error::invalid("checkpoint", "trained with a different config or dataset");
            return Err(Diverged { error, last_good: Box::new(state) });
        }
        while !state.finished() && stop_after.is_none_or(|n| state.epoch < n) {
            let snapshot = state.clone();
            match self.epoch(&mut state) {
                Ok(row) => on_epoch(&row),
                Err(error) => return Err(Diverged { error, last_good: Box::new(snapshot) }),
            }
        }
        Ok(state)
    }

    /// Convenience wrapper: fresh start, run to completion.
    pub fn train(&self) -> core::result::Result<Checkpoint, Diverged> {
        let state = self.start().map_err(|error| Diverged {
            error,
            last_good: Box::new(Checkpoint {
                config: self.config.clone(),
                dims: self.dims,
                ids: self.train.ids.clone(),
                epoch: 0,
                params: ParamStore::new(),
                optimizer: AdamState::new(&ParamStore::new()),
                best_epoch: 0,
                best_params: ParamStore::new(),
                history: Vec::new(),
            }),
        })?;
        self.run(state, None, &mut |_| {})
    }

    fn rng(&self, epoch: usize, stream: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed);
        rng.set_stream(((epoch as u64 + 1) << 32) | stream);
        rng
    }

    fn epoch(&self, state: &mut Checkpoint) -> Result<EpochRecord> {
        let cfg = self.config.objective();
        let epoch = state.epoch;
        let mut records = self.fit_records();
        records.shuffle(&mut self.rng(epoch, u32::MAX as u64));

        let mut used = BTreeSet::new();
        let mut live = vec![false; state.params.len()];
        let mut sum = LossBreakdown::default();
        let n_total = records.len() as f64;
        for (b, chunk) in records.chunks(self.config.batch_size).enumerate() {
            let mut chunk = chunk.to_vec();
            chunk.sort_unstable();
            let mut rng = self.rng(epoch, b as u64);
            let model = ModelParams::from_store(self.dims, core::mem::take(&mut state.params))?;
            let step = self.batch_gradients(&model, &cfg, &chunk, &mut rng);
            state.params = model.store;
            let (grads, loss, batch_used) = step?;
            if !loss.is_finite() {
                return Err(Error::NonFinite { context: format!("loss in epoch {} batch {b}", epoch + 1) });
            }
            used.extend(batch_used);
            for id in state.params.ids() {
                live[id.index()] |= grads.get(id).iter().any(|&g| g != 0.0);
            }
            state.optimizer.step(&mut state.params, &grads, self.config.learning_rate)?;
            let w = chunk.len() as f64 / n_total;
            sum.reconstruction += w * loss.reconstruction;
            sum.kl_student_mode += w * loss.kl_student_mode;
            sum.kl_question_concept += w * loss.kl_question_concept;
            sum.kl_std_normal += w * loss.kl_std_normal;
            sum.total += w * loss.total;
        }
        let dead: Vec<&str> =
            used.iter().filter(|id| !live[id.index()]).map(|&id| state.params.name(id)).collect();
        if !dead.is_empty() {
            return Err(Error::invalid("gradient coverage", format!("no gradient reached {}", dead.join(", "))));
        }

        let model = ModelParams::from_store(self.dims, state.params.clone())?;
        let scored = self.validate(&model)?;
        let (preds, labels): (Vec<f64>, Vec<bool>) = scored.iter().map(|s| (s.pred, s.label)).unzip();
        let valid_acc = metrics::accuracy(&preds, &labels)?;
        let valid_auc = match metrics::auc(&preds, &labels) {
            Ok(a) => Some(a),
            Err(Error::UndefinedAuc { .. }) => None,
            Err(e) => return Err(e),
        };

        state.epoch += 1;
        let row = EpochRecord { epoch: state.epoch, loss: sum, valid_auc, valid_acc };
        let improved = match (valid_auc, state.best_auc()) {
            _ if state.best_epoch == 0 => true,
            (Some(a), Some(b)) => a > b,
            (Some(_), None) => true,
            (None, _) => false,
        };
        state.history.push(row);
        if improved {
            state.best_epoch = state.epoch;
            state.best_params = state.params.clone();
        }
        Ok(row)
    }

    /// Mean-loss gradient over one minibatch, one graph per student.
    fn batch_gradients(
        &self,
        model: &ModelParams,
        cfg: &ObjectiveConfig,
        chunk: &[Record],
        rng: &mut ChaCha8Rng,
    ) -> Result<(Gradients, LossBreakdown, BTreeSet<ParamId>)> {
        let n = chunk.len() as f64;
        let mut grads = Gradients::zeros_like(&model.store);
        let mut loss = LossBreakdown::default();
        let mut used = BTreeSet::new();
        let d = self.dims.d;
        let draws = if cfg.variant.samples_noise() { cfg.samples } else { 0 };
        let mut i = 0;
        while i < chunk.len() {
            let seq = chunk[i].seq;
            let mut items = Vec::new();
            while i < chunk.len() && chunk[i].seq == seq {
                let ev = &self.train.sequences[seq].events[chunk[i].pos];
                items.push(RecordItem {
                    pos: chunk[i].pos,
                    beta_u: PriorWeight::from_count(self.stats.n_u[ev.student as usize]).beta,
                    beta_q: PriorWeight::from_count(self.stats.n_q[ev.question as usize]).beta,
                    noise: RecordNoise::draw(rng, draws, d),
                });
                i += 1;
            }
            let batch = StudentBatch { events: &self.train.sequences[seq].events, items };
            let mut g = Graph::new(&model.store);
            let terms = objective::student_objective(&mut g, model, self.encoder, cfg, &batch)?;
            let totals: Vec<_> = terms.iter().map(|t| t.total).collect();
            let root = g.sum_n(&totals)?;
            g.backward(root, 1.0 / n, &mut grads)?;
            loss.accumulate(&g, &terms, 1.0 / n);
            used.extend(g.used_params());
        }
        Ok((grads, loss, used))
    }
}
