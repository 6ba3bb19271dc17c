//! Second-order (Dirichlet/evidential) and learned-confidence uncertainty
//! estimation for classifiers, together with the misclassification / OOD /
//! selective-classification evaluation stack and a deterministic 2-D
//! synthetic benchmark.
//!
//! Everything is double precision and every random draw flows through a
//! fixed seeded generator, so datasets, training runs and reports are
//! reproducible bit for bit.

pub mod data;
pub mod dirichlet;
pub mod error;
pub mod head;
pub mod measures;
pub mod metrics;
pub mod net;
pub mod rng;
pub mod special;

pub use data::{Dataset, MixtureConfig, RingConfig};
pub use dirichlet::{DirichletParams, Opinion};
pub use error::{Error, Result};
pub use head::{ConfidenceHead, HeadLoss, HeadSpec, TargetKind};
pub use measures::{MahalanobisModel, Measure, ProbVector};
pub use metrics::{EvalReport, ScoredSet, SelectiveSet, Task};
pub use net::{Network, NetworkSpec, Objective, Optimizer, TrainConfig};
