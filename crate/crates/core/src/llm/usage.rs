use super::Stage;
use serde::Serialize;
use std::collections::BTreeMap;

/// Tokens spent by one provider call.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TokenUsage {
    pub request_id: String,
    pub input_tokens: u64,
    pub output_tokens: u64,
    pub stage: Stage,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct UsageTotals {
    pub request_id: String,
    pub input_tokens: u64,
    pub output_tokens: u64,
    pub calls: u64,
}

/// Per-request token totals, kept in arrival order.
#[derive(Debug, Clone, Default)]
pub struct UsageLedger {
    order: Vec<String>,
    totals: BTreeMap<String, UsageTotals>,
}

impl UsageLedger {
    pub fn new() -> Self {
        Self::default()
    }

    /// Sums the calls of one request into its entry.
    pub fn account_usage(&mut self, request_id: &str, calls: &[TokenUsage]) -> UsageTotals {
        let entry = self.totals.entry(request_id.to_string()).or_insert_with(|| {
            self.order.push(request_id.to_string());
            UsageTotals { request_id: request_id.to_string(), ..Default::default() }
        });
        for call in calls {
            entry.input_tokens += call.input_tokens;
            entry.output_tokens += call.output_tokens;
            entry.calls += 1;
        }
        entry.clone()
    }

    pub fn totals(&self, request_id: &str) -> Option<&UsageTotals> {
        self.totals.get(request_id)
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    pub fn entries(&self) -> impl Iterator<Item = &UsageTotals> {
        self.order.iter().map(|id| &self.totals[id])
    }

    /// Mean input and output tokens over the last `window` requests (all
    /// requests when `None`).
    pub fn rolling_average(&self, window: Option<usize>) -> (f64, f64) {
        let skip = window.map_or(0, |w| self.order.len().saturating_sub(w));
        let recent: Vec<&UsageTotals> = self.order.iter().skip(skip).map(|id| &self.totals[id]).collect();
        if recent.is_empty() {
            return (0.0, 0.0);
        }
        let n = recent.len() as f64;
        let input: u64 = recent.iter().map(|t| t.input_tokens).sum();
        let output: u64 = recent.iter().map(|t| t.output_tokens).sum();
        (input as f64 / n, output as f64 / n)
    }

    /// One JSON object per request, newline separated.
    pub fn to_json_lines(&self) -> String {
        self.entries().map(|t| crate::canonical::to_string(t) + "\n").collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn call(input: u64, output: u64, stage: Stage) -> TokenUsage {
        TokenUsage { request_id: "r1".into(), input_tokens: input, output_tokens: output, stage }
    }

    #[test]
    fn two_calls_sum() {
        let mut ledger = UsageLedger::new();
        let totals = ledger.account_usage("r1", &[call(3000, 60, Stage::Initial), call(200, 20, Stage::Refined)]);
        assert_eq!((totals.input_tokens, totals.output_tokens, totals.calls), (3200, 80, 2));
    }

    #[test]
    fn zero_calls() {
        let mut ledger = UsageLedger::new();
        let totals = ledger.account_usage("r0", &[]);
        assert_eq!((totals.input_tokens, totals.output_tokens), (0, 0));
        assert_eq!(UsageLedger::new().rolling_average(None), (0.0, 0.0));
    }

    #[test]
    fn rolling_average_of_identical_requests() {
        let mut ledger = UsageLedger::new();
        for i in 0..7 {
            ledger.account_usage(&format!("r{i}"), &[call(3000, 60, Stage::Initial), call(200, 20, Stage::Refined)]);
        }
        assert_eq!(ledger.rolling_average(None), (3200.0, 80.0));
        assert_eq!(ledger.rolling_average(Some(3)), (3200.0, 80.0));
    }
}
