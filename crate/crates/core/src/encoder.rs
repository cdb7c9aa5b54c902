//! Sequence encoders that summarise a practice prefix into the vector `h`
//! consumed by capsule routing.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::data::InteractionEvent;
use crate::error::{Error, Result};
use crate::model::{ModelDims, ModelParams, ParamSpec};
use crate::numcore::{Array, Graph, NodeId};

/// Backbone interface. An encoder declares its own parameters (registered
/// at model initialization, names prefixed `encoder.`) and maps every prefix
/// of a sequence to a `d`-vector.
pub trait SequenceEncoder {
    fn name(&self) -> &'static str;

    fn param_specs(&self, dims: &ModelDims) -> Vec<ParamSpec>;

    /// Returns `upto + 1` nodes: entry `t` encodes `events[..t]`, so entry
    /// `t` never depends on `events[t..]`.
    fn encode_prefixes(
        &self,
        g: &mut Graph<'_>,
        model: &ModelParams,
        events: &[InteractionEvent],
        upto: usize,
    ) -> Result<Vec<NodeId>>;
}

/// Recurrent carry of the gated encoder.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EncoderState {
    pub hidden: NodeId,
    pub cell: NodeId,
}

/// Per-step input: mean concept embedding of the event and the embedding
/// of its response.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct StepInput {
    pub concept_embedding: NodeId,
    pub response_embedding: NodeId,
}

/// Mean of the embeddings of `concepts`.
pub fn concept_mean(g: &mut Graph<'_>, model: &ModelParams, concepts: &[u32]) -> Result<NodeId> {
    if concepts.is_empty() {
        return Err(Error::invalid("event", "empty concept set"));
    }
    let rows = concepts
        .iter()
        .map(|&c| g.param_row(model.ids.concept_embedding, c as usize))
        .collect::<Result<Vec<_>>>()?;
    if rows.len() == 1 {
        return Ok(rows[0]);
    }
    g.mean(&rows)
}

pub fn step_input(g: &mut Graph<'_>, model: &ModelParams, event: &InteractionEvent) -> Result<StepInput> {
    Ok(StepInput {
        concept_embedding: concept_mean(g, model, &event.concepts)?,
        response_embedding: g.param_row(model.ids.response_embedding, event.correct as usize)?,
    })
}

/// DKT-style LSTM backbone over `concept ⊕ response` inputs.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct LstmEncoder;

pub const LSTM_INPUT_WEIGHT: &str = "encoder.lstm.input_weight";
pub const LSTM_HIDDEN_WEIGHT: &str = "encoder.lstm.hidden_weight";
pub const LSTM_BIAS: &str = "encoder.lstm.bias";

impl LstmEncoder {
    pub fn zero_state(&self, g: &mut Graph<'_>, d: usize) -> EncoderState {
        let z = g.input(vec![0.0; d]);
        EncoderState { hidden: z, cell: z }
    }

    /// One gated update: input, forget and output gates plus a tanh
    /// candidate, all from `W_x·[c ⊕ r] + W_h·h + b`.
    pub fn encode_step(
        &self,
        g: &mut Graph<'_>,
        model: &ModelParams,
        state: EncoderState,
        input: StepInput,
    ) -> Result<EncoderState> {
        let d = model.dims.d;
        if g.node_len(state.hidden) != d || g.node_len(state.cell) != d {
            return Err(Error::dim("encode_step", format!("state width differs from d = {d}")));
        }
        let wx = g.param(model.param(LSTM_INPUT_WEIGHT)?);
        let wh = g.param(model.param(LSTM_HIDDEN_WEIGHT)?);
        let b = g.param(model.param(LSTM_BIAS)?);

        let x = g.concat(&[input.concept_embedding, input.response_embedding]);
        if g.node_len(x) != 2 * d {
            return Err(Error::dim("encode_step", format!("input width {} != 2d", g.node_len(x))));
        }
        let zx = g.matvec(wx, x, 4 * d, 2 * d)?;
        let zh = g.matvec(wh, state.hidden, 4 * d, d)?;
        let z = g.add(zx, zh)?;
        let z = g.add(z, b)?;

        let zi = g.slice(z, 0, d)?;
        let zf = g.slice(z, d, d)?;
        let zo = g.slice(z, 2 * d, d)?;
        let zg = g.slice(z, 3 * d, d)?;
        let i = g.sigmoid(zi);
        let f = g.sigmoid(zf);
        let o = g.sigmoid(zo);
        let cand = g.tanh(zg);

        let keep = g.mul(f, state.cell)?;
        let write = g.mul(i, cand)?;
        let cell = g.add(keep, write)?;
        let tc = g.tanh(cell);
        let hidden = g.mul(o, tc)?;
        Ok(EncoderState { hidden, cell })
    }
}

impl SequenceEncoder for LstmEncoder {
    fn name(&self) -> &'static str {
        "lstm"
    }

    fn param_specs(&self, dims: &ModelDims) -> Vec<ParamSpec> {
        let d = dims.d;
        vec![
            ParamSpec::xavier(LSTM_INPUT_WEIGHT, vec![4 * d, 2 * d]),
            ParamSpec::xavier(LSTM_HIDDEN_WEIGHT, vec![4 * d, d]),
            ParamSpec::zero(LSTM_BIAS, vec![4 * d]),
        ]
    }

    fn encode_prefixes(
        &self,
        g: &mut Graph<'_>,
        model: &ModelParams,
        events: &[InteractionEvent],
        upto: usize,
    ) -> Result<Vec<NodeId>> {
        if upto > events.len() {
            return Err(Error::dim(
                "encode_prefixes",
                format!("prefix {upto} longer than sequence {}", events.len()),
            ));
        }
        let mut state = self.zero_state(g, model.dims.d);
        let mut out = Vec::with_capacity(upto + 1);
        out.push(state.hidden);
        for e in &events[..upto] {
            let input = step_input(g, model, e)?;
            state = self.encode_step(g, model, state, input)?;
            out.push(state.hidden);
        }
        Ok(out)
    }
}

/// `h = f_e(prefix)` as a plain array; the empty prefix gives the zero vector.
pub fn encode_sequence(
    encoder: &dyn SequenceEncoder,
    model: &ModelParams,
    prefix: &[InteractionEvent],
) -> Result<Array> {
    let mut g = Graph::new(&model.store);
    let hs = encoder.encode_prefixes(&mut g, model, prefix, prefix.len())?;
    Ok(g.array(*hs.last().expect("at least the empty prefix")))
}
