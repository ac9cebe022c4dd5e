use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CostError {
    #[error("model {0:?} has no entry in the price table")]
    UnknownModel(String),
}

/// Currency units per 1K tokens.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelPrice {
    pub prompt: f64,
    pub completion: f64,
}

pub type PriceTable = BTreeMap<String, ModelPrice>;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ModelTotals {
    pub calls: u64,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    pub cost: f64,
}

/// Running per-model token and cost totals.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CostLedger {
    pub models: BTreeMap<String, ModelTotals>,
}

impl CostLedger {
    pub fn record_cost(
        &mut self,
        model: &str,
        prompt_tokens: u64,
        completion_tokens: u64,
        prices: &PriceTable,
    ) -> Result<(), CostError> {
        let price = prices
            .get(model)
            .ok_or_else(|| CostError::UnknownModel(model.to_string()))?;
        if prompt_tokens == 0 && completion_tokens == 0 {
            return Ok(());
        }
        let totals = self.models.entry(model.to_string()).or_default();
        totals.calls += 1;
        totals.prompt_tokens += prompt_tokens;
        totals.completion_tokens += completion_tokens;
        totals.cost += prompt_tokens as f64 * price.prompt / 1000.0
            + completion_tokens as f64 * price.completion / 1000.0;
        Ok(())
    }

    pub fn total_cost(&self) -> f64 {
        self.models.values().map(|t| t.cost).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn prices() -> PriceTable {
        PriceTable::from([("gpt-4".to_string(), ModelPrice { prompt: 0.03, completion: 0.06 })])
    }

    #[test]
    fn cost_examples() {
        let mut ledger = CostLedger::default();
        ledger.record_cost("gpt-4", 1000, 1000, &prices()).unwrap();
        assert!((ledger.total_cost() - 0.09).abs() < 1e-12);

        let before = ledger.clone();
        ledger.record_cost("gpt-4", 0, 0, &prices()).unwrap();
        assert_eq!(ledger, before);

        assert_eq!(
            ledger.record_cost("claude", 1, 1, &prices()),
            Err(CostError::UnknownModel("claude".into()))
        );
        assert_eq!(ledger, before);
    }

    #[test]
    fn totals_are_monotone() {
        let mut ledger = CostLedger::default();
        let mut last = 0.0;
        for i in 0..20u64 {
            ledger.record_cost("gpt-4", i * 7, i * 3, &prices()).unwrap();
            assert!(ledger.total_cost() >= last);
            last = ledger.total_cost();
        }
    }
}
