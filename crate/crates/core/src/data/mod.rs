//! Self-play generation, deep-search relabelling and predictor datasets.

mod codec;
mod datasets;
mod labeled;
mod records;

pub use datasets::{build_state_un_dataset, prune, prune_and_balance, BalanceConfig, BalanceReport, MctsUnRow, StateUnRow};
pub use labeled::{
    relabel, DatasetHeader, DatasetManifest, LabeledDataset, LabeledState, RelabelConfig, TraceEntry, DATASET_MAGIC,
    DATASET_VERSION, FEATURE_SCHEMA,
};
pub use records::{
    generate_selfplay, read_records, record_policy, write_records, GameRecord, SelfplayConfig, RECORDS_MAGIC,
    RECORDS_VERSION,
};
