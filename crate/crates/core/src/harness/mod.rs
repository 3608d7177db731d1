//! Dataset ingestion, toy-scale training, rate-distortion sweeps and
//! operating-point selection.

pub mod corpus;
pub mod select;
pub mod sweep;
pub mod synth;
pub mod train;

pub use corpus::{load_corpus, read_pnm, write_pnm, Corpus};
pub use select::{pareto_front, select_config_for_budget};
pub use sweep::{rd_sweep, RdPoint, SweepGrid, SweepResult};
pub use train::{train, TrainConfig, TrainLog};
