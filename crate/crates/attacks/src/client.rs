use std::cell::Cell;

use serde::{Deserialize, Serialize};

use sbpm_core::tabular::Dataset;
use sbpm_provider::{MetricsResponse, ProviderApi};

use crate::{AttackError, Result};

/// Successful provider calls made by an attack.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CallLedger {
    pub sample: u64,
    pub metrics: u64,
}

impl CallLedger {
    pub fn total(&self) -> u64 {
        self.sample + self.metrics
    }
}

/// The adversary's only handle on the provider. Counts calls and enforces an
/// optional budget on their total.
pub struct Client<'a> {
    api: &'a dyn ProviderApi,
    budget: Option<u64>,
    ledger: Cell<CallLedger>,
}

impl<'a> Client<'a> {
    pub fn new(api: &'a dyn ProviderApi, budget: Option<u64>) -> Self {
        Client {
            api,
            budget,
            ledger: Cell::new(CallLedger::default()),
        }
    }

    pub fn ledger(&self) -> CallLedger {
        self.ledger.get()
    }

    fn admit(&self) -> Result<()> {
        match self.budget {
            Some(b) if self.ledger.get().total() >= b => Err(AttackError::BudgetExhausted(b)),
            _ => Ok(()),
        }
    }

    pub fn sample(&self, n: usize, seed: Option<u64>) -> Result<Dataset> {
        self.admit()?;
        let out = self.api.sample(n, seed)?;
        let mut l = self.ledger.get();
        l.sample += 1;
        self.ledger.set(l);
        Ok(out)
    }

    pub fn metrics(&self, synth: &Dataset) -> Result<MetricsResponse> {
        self.admit()?;
        let out = self.api.metrics(synth)?;
        let mut l = self.ledger.get();
        l.metrics += 1;
        self.ledger.set(l);
        Ok(out)
    }
}

/// Number of exact train matches among `rows` rows, read off a visible IMS share.
pub(crate) fn match_count(share: f64, rows: usize) -> u64 {
    (share * rows as f64).round() as u64
}
