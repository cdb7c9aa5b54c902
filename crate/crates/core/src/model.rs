//! Learnable arrays of the model and their initialization.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::numcore::{Array, ParamId, ParamStore};

/// Vocabulary sizes and widths that fix every parameter shape.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ModelDims {
    pub d: usize,
    pub capsules: usize,
    pub students: usize,
    pub questions: usize,
    pub concepts: usize,
}

/// Two parallel linear maps producing a Gaussian's mean and log-variance.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct HeadIds {
    pub mu_weight: ParamId,
    pub mu_bias: ParamId,
    pub log_var_weight: ParamId,
    pub log_var_bias: ParamId,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PredictorIds {
    pub hidden_weight: ParamId,
    pub hidden_bias: ParamId,
    pub out_weight: ParamId,
    pub out_bias: ParamId,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ModelIds {
    pub student_embedding: ParamId,
    pub question_embedding: ParamId,
    pub concept_embedding: ParamId,
    pub response_embedding: ParamId,
    pub capsules: ParamId,
    pub student_head: HeadIds,
    pub question_head: HeadIds,
    pub concept_head: HeadIds,
    pub mode_head: HeadIds,
    pub predictor: PredictorIds,
}

/// Every learnable array, addressed by name through a [`ParamStore`].
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    pub dims: ModelDims,
    pub store: ParamStore,
    pub ids: ModelIds,
}

/// Name and shape of one parameter array.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParamSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub kind: InitKind,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InitKind {
    /// Uniform in ±sqrt(6 / (fan_in + fan_out)) over the last two axes.
    Xavier,
    Zero,
}

impl ParamSpec {
    pub fn xavier(name: impl Into<String>, shape: Vec<usize>) -> Self {
        ParamSpec { name: name.into(), shape, kind: InitKind::Xavier }
    }

    pub fn zero(name: impl Into<String>, shape: Vec<usize>) -> Self {
        ParamSpec { name: name.into(), shape, kind: InitKind::Zero }
    }
}

fn head_specs(prefix: &str, d: usize) -> [ParamSpec; 4] {
    [
        ParamSpec::xavier(format!("{prefix}.mu.weight"), vec![d, d]),
        ParamSpec::zero(format!("{prefix}.mu.bias"), vec![d]),
        ParamSpec::xavier(format!("{prefix}.log_var.weight"), vec![d, d]),
        ParamSpec::zero(format!("{prefix}.log_var.bias"), vec![d]),
    ]
}

/// Parameters owned by the model outside the sequence encoder.
pub fn model_specs(dims: &ModelDims) -> Vec<ParamSpec> {
    let d = dims.d;
    let mut specs = vec![
        ParamSpec::xavier("embedding.student", vec![dims.students, d]),
        ParamSpec::xavier("embedding.question", vec![dims.questions, d]),
        ParamSpec::xavier("embedding.concept", vec![dims.concepts, d]),
        ParamSpec::xavier("embedding.response", vec![2, d]),
        ParamSpec::xavier("capsules.bilinear", vec![dims.capsules, d, d]),
    ];
    for prefix in ["head.student", "head.question", "head.concept", "head.mode"] {
        specs.extend(head_specs(prefix, d));
    }
    specs.extend([
        ParamSpec::xavier("predictor.hidden.weight", vec![2 * d, 4 * d]),
        ParamSpec::zero("predictor.hidden.bias", vec![2 * d]),
        ParamSpec::xavier("predictor.out.weight", vec![1, 2 * d]),
        ParamSpec::zero("predictor.out.bias", vec![1]),
    ]);
    specs
}

fn xavier_bound(shape: &[usize]) -> f64 {
    let (fan_out, fan_in) = match shape {
        [n] => (*n, 1),
        [.., a, b] => (*a, *b),
        [] => (1, 1),
    };
    libm::sqrt(6.0 / (fan_in + fan_out) as f64)
}

impl ModelParams {
    /// Xavier-uniform weights and embeddings, zero biases. `extra` holds the
    /// encoder's own parameters.
    pub fn init(dims: ModelDims, extra: &[ParamSpec], seed: u64) -> Result<Self> {
        let zero = [
            ("d", dims.d),
            ("capsule count", dims.capsules),
            ("student vocabulary", dims.students),
            ("question vocabulary", dims.questions),
            ("concept vocabulary", dims.concepts),
        ];
        if let Some((what, _)) = zero.iter().find(|(_, v)| *v == 0) {
            return Err(Error::invalid("model dimensions", format!("{what} is zero")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        for spec in model_specs(&dims).iter().chain(extra) {
            let n: usize = spec.shape.iter().product();
            let data = match spec.kind {
                InitKind::Zero => vec![0.0; n],
                InitKind::Xavier => {
                    let b = xavier_bound(&spec.shape);
                    (0..n).map(|_| rng.random_range(-b..b)).collect()
                }
            };
            store.insert(spec.name.clone(), Array::new(spec.shape.clone(), data)?)?;
        }
        Self::from_store(dims, store)
    }

    /// Wraps an existing store (for instance a reloaded checkpoint) after
    /// checking that every model parameter is present with the right shape.
    pub fn from_store(dims: ModelDims, store: ParamStore) -> Result<Self> {
        for spec in model_specs(&dims) {
            let id = store
                .id(&spec.name)
                .ok_or_else(|| Error::invalid("parameter set", format!("missing `{}`", spec.name)))?;
            if store.get(id).shape() != spec.shape.as_slice() {
                return Err(Error::dim(
                    "ModelParams::from_store",
                    format!(
                        "`{}` has shape {:?}, expected {:?}",
                        spec.name,
                        store.get(id).shape(),
                        spec.shape
                    ),
                ));
            }
        }
        let id = |n: &str| store.id(n).expect("checked above");
        let head = |p: &str| HeadIds {
            mu_weight: id(&format!("{p}.mu.weight")),
            mu_bias: id(&format!("{p}.mu.bias")),
            log_var_weight: id(&format!("{p}.log_var.weight")),
            log_var_bias: id(&format!("{p}.log_var.bias")),
        };
        let ids = ModelIds {
            student_embedding: id("embedding.student"),
            question_embedding: id("embedding.question"),
            concept_embedding: id("embedding.concept"),
            response_embedding: id("embedding.response"),
            capsules: id("capsules.bilinear"),
            student_head: head("head.student"),
            question_head: head("head.question"),
            concept_head: head("head.concept"),
            mode_head: head("head.mode"),
            predictor: PredictorIds {
                hidden_weight: id("predictor.hidden.weight"),
                hidden_bias: id("predictor.hidden.bias"),
                out_weight: id("predictor.out.weight"),
                out_bias: id("predictor.out.bias"),
            },
        };
        Ok(ModelParams { dims, store, ids })
    }

    pub fn param(&self, name: &str) -> Result<ParamId> {
        self.store
            .id(name)
            .ok_or_else(|| Error::invalid("parameter name", format!("unknown `{name}`")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dims() -> ModelDims {
        ModelDims { d: 64, capsules: 3, students: 10, questions: 12, concepts: 4 }
    }

    #[test]
    fn same_seed_same_parameters() {
        let a = ModelParams::init(dims(), &[], 9).unwrap();
        let b = ModelParams::init(dims(), &[], 9).unwrap();
        assert_eq!(a, b);
        for ((_, x), (_, y)) in a.store.iter().zip(b.store.iter()) {
            assert!(x.data().iter().zip(y.data()).all(|(p, q)| p.to_bits() == q.to_bits()));
        }
        assert_ne!(a, ModelParams::init(dims(), &[], 10).unwrap());
    }

    #[test]
    fn xavier_variance() {
        let p = ModelParams::init(dims(), &[], 1).unwrap();
        let w = p.store.get(p.ids.student_head.mu_weight).data();
        assert_eq!(w.len(), 64 * 64);
        let mean = w.iter().sum::<f64>() / w.len() as f64;
        let var = w.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (w.len() - 1) as f64;
        let target = 2.0 / 128.0;
        assert!((var - target).abs() < 0.2 * target, "var {var} vs {target}");
    }

    #[test]
    fn biases_are_zero() {
        let p = ModelParams::init(dims(), &[], 1).unwrap();
        for (name, a) in p.store.iter() {
            if name.ends_with("bias") {
                assert!(a.data().iter().all(|&v| v == 0.0), "{name}");
            }
        }
    }

    #[test]
    fn zero_vocabulary_is_rejected() {
        let d = ModelDims { questions: 0, ..dims() };
        assert!(matches!(ModelParams::init(d, &[], 1), Err(Error::Validation { .. })));
    }
}
