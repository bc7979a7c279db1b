//! Sources of annotated image sets.

mod adapter;
mod recorded;
mod request;
mod synthetic;
mod templates;

pub use adapter::{effective_timeout, HttpAdapter, SubprocessAdapter, DEFAULT_TIMEOUT, TIMEOUT_ENV};
pub use recorded::{load_recorded_corpus, parse_sets, CorpusWarning, RecordedCorpus, RecordedProvider};
pub use request::{derive_seed, GenerationMode, GenerationRequest, ImageSetProvider};
pub use synthetic::{JointEntry, SyntheticModel, SyntheticProvider};
pub use templates::{compose_for, compose_prompt, render_template, template_counterfactuals, AxisCounterfactuals};
