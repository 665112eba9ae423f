//! Breakpoint detection in ordered sequences of censored, possibly
//! left-truncated survival times.
//!
//! Subjects are ordered by a covariate (e.g. calendar year of diagnosis) and
//! the sequence is split into `K` contiguous segments, each with its own
//! baseline hazard and regression vector. The unknown segmentation is a
//! hidden monotone Markov chain; parameters are fitted by EM, with the E-step
//! computed exactly by forward-backward recursions.

pub mod baseline;
pub mod data;
pub mod em;
pub mod error;
pub mod hmm;
pub mod inference;
pub mod numeric;
pub mod prior;
pub mod selection;
pub mod simulation;

pub use baseline::{BaselineFamily, FamilyKind, Kernel, ThetaParams};
pub use data::{load_dataset, Dataset, EntryMode, Schema, SurvivalRecord};
pub use em::{fit, fit_from_weights, init_weights, FitConfig, FitResult};
pub use error::{Error, Result};
pub use hmm::{EmissionTable, MapBreakpoint, PosteriorTables};
pub use prior::{build_prior, PriorSpec, SegmentationPrior};
pub use selection::{sweep, SweepTable};
