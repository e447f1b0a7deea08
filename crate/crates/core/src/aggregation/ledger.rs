use serde::{Deserialize, Serialize};

use super::Algorithm;

/// Which part of a round an exchange belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum Phase {
    Main,
    /// Retraining above a grown layer; layers up to `layer` are frozen.
    LayerWise {
        layer: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundEvent {
    pub round: usize,
    pub algorithm: Algorithm,
    pub phase: Phase,
    /// Layer inspected or grown, if any.
    pub layer: Option<usize>,
    pub clients: usize,
    pub units_added: usize,
    pub bytes_up: u64,
    pub bytes_down: u64,
}

/// Bytes exchanged and growth in one round.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct CommLedger {
    pub round: usize,
    pub bytes_up: u64,
    pub bytes_down: u64,
    pub sub_rounds: usize,
    /// Units appended to each parameterized layer.
    pub units_added: Vec<usize>,
    /// Divergent units dropped by the per-layer cap.
    pub capped: usize,
    pub events: Vec<RoundEvent>,
}

impl CommLedger {
    pub fn new(round: usize, layers: usize) -> Self {
        Self {
            round,
            units_added: vec![0; layers],
            ..Default::default()
        }
    }

    pub fn record(&mut self, event: RoundEvent) {
        self.bytes_up += event.bytes_up;
        self.bytes_down += event.bytes_down;
        if matches!(event.phase, Phase::LayerWise { .. }) {
            self.sub_rounds += 1;
        }
        self.events.push(event);
    }

    pub fn total_units(&self) -> usize {
        self.units_added.iter().sum()
    }

    pub fn total_bytes(&self) -> u64 {
        self.bytes_up + self.bytes_down
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct LedgerSummary {
    pub rounds: usize,
    pub bytes_up: u64,
    pub bytes_down: u64,
    pub sub_rounds: usize,
    pub units_added: Vec<usize>,
    pub capped: usize,
    /// `(round, units added that round)` for every round with growth.
    pub growth: Vec<(usize, usize)>,
}

impl LedgerSummary {
    pub fn total_bytes(&self) -> u64 {
        self.bytes_up + self.bytes_down
    }

    /// This run's traffic relative to `baseline`; `None` if the baseline
    /// moved no bytes.
    pub fn cost_ratio(&self, baseline: &LedgerSummary) -> Option<f64> {
        (baseline.total_bytes() > 0)
            .then(|| self.total_bytes() as f64 / baseline.total_bytes() as f64)
    }
}

pub fn ledger_totals<'a>(ledgers: impl IntoIterator<Item = &'a CommLedger>) -> LedgerSummary {
    let mut s = LedgerSummary::default();
    for l in ledgers {
        s.rounds += 1;
        s.bytes_up += l.bytes_up;
        s.bytes_down += l.bytes_down;
        s.sub_rounds += l.sub_rounds;
        s.capped += l.capped;
        if s.units_added.len() < l.units_added.len() {
            s.units_added.resize(l.units_added.len(), 0);
        }
        for (acc, &u) in s.units_added.iter_mut().zip(&l.units_added) {
            *acc += u;
        }
        if l.total_units() > 0 {
            s.growth.push((l.round, l.total_units()));
        }
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_is_zero() {
        assert_eq!(ledger_totals(&[]), LedgerSummary::default());
    }

    #[test]
    fn additive() {
        let mut a = CommLedger::new(1, 2);
        a.bytes_up = 10;
        a.bytes_down = 5;
        let mut b = CommLedger::new(2, 2);
        b.bytes_up = 1;
        b.units_added[0] = 2;
        b.sub_rounds = 1;
        let s = ledger_totals([&a, &b]);
        assert_eq!((s.bytes_up, s.bytes_down, s.sub_rounds), (11, 5, 1));
        assert_eq!(s.growth, vec![(2, 2)]);
        assert_eq!(s.cost_ratio(&ledger_totals([&a])), Some(16.0 / 15.0));
    }
}
