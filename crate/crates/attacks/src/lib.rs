//! The adversary. Everything here reaches the provider only through
//! [`sbpm_provider::ProviderApi`], wrapped in a [`Client`] that keeps an exact
//! call ledger.
//!
//! - [`difference`]: membership and attribute inference from the change in
//!   the identical-match share when one record is added;
//! - [`distance`]: padding records and exact per-record distance extraction
//!   from aggregate scores;
//! - [`locator`], [`reconsyn`]: locating outlier regions, then SampleAttack
//!   and SearchAttack;
//! - [`evaluate`]: harness-side scoring against the hidden train data.

mod client;
pub mod difference;
pub mod distance;
mod error;
pub mod evaluate;
mod history;
pub mod locator;
pub mod reconsyn;

pub use client::{CallLedger, Client};
pub use error::{AttackError, Result};
pub use history::{History, HistoryEntry};
