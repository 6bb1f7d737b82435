//! Learning structured objects through their serializations.
//!
//! An instance (set, tree, series, record) is mapped to one of its many serializations.
//! A sequence model is trained on those serializations. Densities are recovered on the
//! original objects by summing, or importance sampling, over the serializations of each
//! instance.
//!
//! With the default `parallel` feature, batch work (corpus sampling, per-sequence
//! forward and backward passes, recovery draws, constraint replay) runs on the rayon
//! pool. Without it the same code runs sequentially and produces identical results.

pub mod backend;
pub mod constraints;
pub mod datagen;
pub mod density;
pub mod error;
pub mod lexicon;
pub mod measure;
pub mod par;
pub mod rng;
pub mod sampler;
pub mod seqmodel;
pub mod state;
pub mod structures;

pub use backend::{canonical_serialization, Cursor, StructureBackend};
pub use constraints::{build_constraint_matrix, Constraint, ConstraintMatrix};
pub use density::{
    build_tabular_oracle, frac_prob, property_normalizer, pushforward_prob, recover_density, Property,
    PropertyView, RecoveryEstimate, SequenceScorer, TabularSeqModel,
};
pub use error::{Error, Result};
pub use lexicon::{Alphabet, LexiconElement, Serialization, Symbol, EOS};
pub use measure::{MeasureMode, SamplingMeasure, WeightTable};
pub use sampler::{path_log_prob, sample_from_fiber, sample_serialization, SamplerConfig, SamplerMode};
pub use seqmodel::{ModelDims, SeqModel, TrainConfig};
pub use state::{BackendTag, StateKey};
pub use structures::{BackendSpec, LabeledInstance, StructureInstance, Target};
