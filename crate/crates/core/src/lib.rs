//! Log analytics: consolidate a dump of log files, mine templates, label one
//! representative per template and broadcast the labels, then build summary,
//! diagnosis, temporal and causal views.

pub mod bench;
pub mod broadcast;
pub mod causal;
pub mod config;
pub mod ingest;
pub mod labeler;
pub mod pipeline;
pub mod reports;
mod scalar;
pub mod stats;
pub mod templatizer;

pub use scalar::Scalar;

pub use config::{ConfigError, RunConfig};
pub use ingest::{LogRecord, MasterStream};
pub use labeler::{FaultCategory, GoldenSignal, LabelSet, Labeler};
pub use pipeline::{analyze, Analysis, PipelineError};
pub use reports::ReportBundle;
pub use templatizer::{LogTemplate, TemplateStore};

pub type CausalGraph = causal::CausalGraph<f64>;
pub type CausalEdge = causal::CausalEdge<f64>;
pub type GrangerResult = causal::GrangerResult<f64>;
