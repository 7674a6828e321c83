//! Core of the `sysrank` evaluation harness.
//!
//! The crate covers the three stages of a comparative evaluation:
//!
//! - [`runner`] builds each contestant's container image, executes it against
//!   the staged source side of a test set and records the wall-clock time.
//! - [`corpus`], [`metrics`] and [`significance`] load references and
//!   hypotheses, score them at corpus and segment level, and group systems
//!   into clusters whose adjacent differences are not statistically
//!   significant under a paired approximate randomization test.
//! - [`results`] persists everything into a canonical results file and
//!   renders the CSV / LaTeX / JSON / HTML tables served to the dashboard.

#![forbid(unsafe_code)]

pub mod corpus;
pub mod metrics;
pub mod results;
pub mod runner;
pub mod significance;

pub use corpus::{Corpus, CorpusError, HypothesisSet, Segment, Task};
pub use metrics::{Direction, MetricError, MetricId, MetricReport, SegmentStats};
pub use results::{evaluate, EvalOptions, EvalSystem, ExportFormat, ResultsError, ResultsFile, SystemResult};
pub use runner::{RunManifest, RunRecord, Runner, RunnerConfig, RunnerError, StagedInput, SystemEntry};
pub use significance::{ArtConfig, ClusterRanking, SignificanceError};
