//! Speaker age estimation from phone-duration statistics.
//!
//! The pipeline reads phone-level forced alignments ([`align`]), pools each
//! speaker's phone durations into categories ([`phone`]), summarizes every
//! category by eight distribution descriptors ([`functionals`]) and regresses
//! age with a two-layer stack of per-category estimators ([`stacking`]).
//! [`eval`] runs leave-one-speaker-out evaluation, [`importance`] ranks
//! categories by the meta estimator's impurity decrease and [`synth`]
//! generates corpora with age-dependent durations for testing.

pub mod align;
pub mod error;
pub mod eval;
pub mod functionals;
pub mod importance;
pub mod learners;
pub mod phone;
pub mod rng;
pub mod stacking;
pub mod synth;

pub use error::{Error, Result};
