//! Online control of an unknown linear dynamical system under adversarial
//! convex costs.
//!
//! The crate contains two learners and everything they are built from:
//!
//! * [`controller::Controller`] plays a disturbance-action policy chosen by a
//!   bank of online-gradient-descent experts, each minimizing one convex piece
//!   of an optimistic (lower-confidence-bound) surrogate cost, with a
//!   low-switching perturbed-leader meta-algorithm on top.
//! * [`hlt::HltLearner`] solves online convex optimization when the loss is
//!   observed only through an unknown linear map, using the same optimism
//!   construction with multiplicative weights as the meta-algorithm.
//!
//! Supporting modules: [`system`] (simulated plant, strong-stability
//! certificates, the stabilizing-controller wrapper), [`dap`] (bounded-memory
//! policy representations), [`estimation`] (ridge estimators and determinant
//! epochs), [`oco`] (OGD, Hedge, BFPL), [`costs`] (cost oracles and
//! generators) and [`harness`] (seeded experiments, comparators and regret).
//!
//! A longer walk through the concepts lives in the `book/` directory of the
//! repository; its code listings are compiled as doc-tests of this crate.

pub mod controller;
pub mod costs;
pub mod dap;
pub mod error;
pub mod estimation;
pub mod harness;
pub mod hlt;
pub mod linalg;
pub mod oco;
pub mod rng;
pub mod system;

pub use error::{Error, Result};

/// Dense column vector used throughout.
pub type Vector = nalgebra::DVector<f64>;
/// Dense matrix used throughout.
pub type Matrix = nalgebra::DMatrix<f64>;

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/system.md")]
    mod system {}
    #[doc = include_str!("../../../book/src/dap.md")]
    mod dap {}
    #[doc = include_str!("../../../book/src/estimation.md")]
    mod estimation {}
    #[doc = include_str!("../../../book/src/oco.md")]
    mod oco {}
    #[doc = include_str!("../../../book/src/controller.md")]
    mod controller {}
    #[doc = include_str!("../../../book/src/hlt.md")]
    mod hlt {}
    #[doc = include_str!("../../../book/src/costs.md")]
    mod costs {}
    #[doc = include_str!("../../../book/src/harness.md")]
    mod harness {}
}
