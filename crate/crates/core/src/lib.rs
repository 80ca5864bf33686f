//! Symbolic regression through a generative latent space.
//!
//! The crate reparameterizes the discrete space of closed-form expressions
//! into a continuous latent space learned by a dual-branch conditional VAE,
//! then finds equations for observed data by coarse localization (the prior
//! encoder) followed by fine search (a diagonal, top-k CMA-ES over the
//! latent space with BFGS constant refinement).
//!
//! Module map:
//!
//! - [`expr`] — expression trees, prefix linearization, evaluation, metrics
//! - [`token`] — the token vocabulary and edit distance
//! - [`encoding`] — base-10 float tokenization and padded id encoding
//! - [`datagen`] — synthetic corpora and paired numeric datasets
//! - [`tensor`] — the reverse-mode differentiation core
//! - [`model`] — the dual-branch CVAE, its losses, schedules and training
//! - [`optim`] — diagonal top-k CMA-ES, BFGS constant fitting, fitness
//! - [`pipeline`] — end-to-end search and the evaluation protocols

pub mod datagen;
pub mod encoding;
pub mod expr;
pub mod model;
pub mod optim;
pub mod pipeline;
pub mod rng;
pub mod tensor;
pub mod token;

pub use expr::{BinaryOp, Expr, ExprError, UnaryOp};
pub use token::{Token, TokenSeq, Vocab};
