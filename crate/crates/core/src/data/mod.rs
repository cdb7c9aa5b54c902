//! Practice-log datasets and the evaluation protocol around them.

mod protocol;
mod synth;
mod types;

pub use protocol::{
    frequency_stats, group_students, split_per_student, FrequencyStats, StudentGroups,
    GROUP_FRACTION, TRAIN_RATIO,
};
pub use synth::{progress, synthesize, LatentTruth, SynthConfig};
pub use types::{
    Dataset, IdMap, IdMaps, InteractionEvent, RawEvent, StudentSequence, MAX_SEQUENCE_LEN,
    MIN_SEQUENCE_LEN,
};
