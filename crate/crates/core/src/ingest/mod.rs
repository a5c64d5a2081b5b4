//! Tabular cohort ingestion: schema validation, encoding, splits and a
//! synthetic biased-cohort generator.

mod cohort;
mod schema;
mod split;
mod synth;

pub use cohort::{
    bin_index, load_csv, Cohort, RawTable, SensitiveAttribute, Split, Standardization, ENCODED_CSV,
    ENCODED_SIDECAR, RAW_CSV, SCHEMA_JSON,
};
pub use schema::{ColumnKind, ColumnSpec, FeatureSchema, DEFAULT_AGE_BINS};
pub use split::{stratified_split, SplitRatios};
pub use synth::{
    generate_synthetic, outcome_probabilities, rotate_pairs, SynthSpec, SyntheticCohort, AGE_BINS,
    SEX_VOCABULARY, STREAM_SYNTH,
};
