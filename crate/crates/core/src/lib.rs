//! Private running sums under continual observation in the concurrent
//! shuffle model, and a shuffle-private LinUCB built on them.
//!
//! The pieces, bottom-up:
//!
//! * [`privacy`]: budget splitting and per-user participation audits.
//! * [`mechanisms`]: shuffle summation mechanisms (randomized-response
//!   blanket, fixed-point vector, Gaussian oracle).
//! * [`plan`]: batch trees for `k` shufflers and the estimate cover `vstar`.
//! * [`runtime`]: shuffler slots and the per-time activate/submit/execute loop.
//! * [`estimator`]: the server that publishes a running sum at every time.
//! * [`bandit`]: LinUCB whose Gram matrix and reward vector are private sums.
//! * [`hard_inputs`]: adversarial streams from the lower-bound family.
//! * [`harness`]: sweep configs, CSV output, scaling fits and the CLI.

pub mod bandit;
pub mod error;
pub mod estimator;
pub mod hard_inputs;
pub mod harness;
pub mod mechanisms;
pub mod plan;
pub mod privacy;
pub mod rng;
pub mod runtime;
pub mod transcript;

pub use error::{Error, Result};
pub use estimator::{process_stream, process_vector_stream, MechanismConfig, RunningEstimate, StreamOptions};
pub use mechanisms::{MechanismKind, MechanismSpec, SumEstimate};
pub use plan::TreePlan;
pub use privacy::{split_budget, PrivacyParams};
