//! Desk-scale model of the PEFL privacy-enhanced federated-learning pipeline
//! (SecMed, SecPear, SecAgg over additively homomorphic encryption) together
//! with the cloud-platform attacks that recover every user's gradient matrix
//! from the views the protocols leak.
//!
//! The crate is organized around what each entity can see:
//!
//! - [`fixed`] / [`stats`]: exact fixed-point gradients and the integer/float
//!   statistics shared by the protocols and the verification oracles.
//! - [`he`]: additively homomorphic encryption with a transparent backend for
//!   fast deterministic testing and a Paillier backend over big integers.
//! - [`pipeline`]: one full round across the four entities, recording the
//!   cloud platform's decrypted views verbatim.
//! - [`attacks`]: cloud-side attacks that operate on those views only.
//! - [`verify`]: the only bridge back to ground truth, used to grade reports.
//! - [`scenario`]: population generators, end-to-end trials, and the
//!   distinct-pad "fix" variants that destroy protocol correctness.
//! - [`report`]: the serialized report schema consumed by the CLI.

pub mod attacks;
pub mod error;
pub mod fixed;
pub mod he;
pub mod pipeline;
pub mod report;
pub mod scenario;
pub mod stats;
pub mod verify;

pub use error::{AttackError, HeError, NumericError, PipelineError};
pub use fixed::{decode_fixed, encode_fixed, median_int, FixedPoint};
pub use he::{decrypt, encrypt, keygen, BackendKind, Ciphertext, KeyPair};
pub use pipeline::{run_round, simulate_views, CloudViews, GradientMatrix, PadSet, RoundResult};
pub use stats::{cov_and_sigma, pearson, StatVector};
