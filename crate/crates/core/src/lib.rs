//! Exponential Hawkes-P point processes.
//!
//! * [`model`]: parameters, event sequences, intensity and compensator
//! * [`mean_intensity`]: average intensity of the finite-past process and expected counts
//! * [`simulate`]: thinning simulation with deterministic seeding
//! * [`inference`]: exact log-likelihood, gradient and multistart maximum likelihood
//! * [`selection`]: AIC, AICc, BIC, HQ and order selection
//! * [`harness`]: Monte-Carlo experiments and report files
//! * [`diagnostics`]: time-change residuals and KS tests

pub mod diagnostics;
pub mod error;
pub mod harness;
pub mod inference;
pub mod io;
pub mod mean_intensity;
pub mod model;
pub mod optim;
pub mod selection;
pub mod simulate;

pub use error::{HawkesError, Result};
pub use inference::{fit, log_likelihood, FitOptions, FitResult};
pub use model::{EventSequence, HawkesModel, KernelTerm};
pub use selection::{select_order, Criterion, SelectionResult};
