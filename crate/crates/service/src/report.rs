//! Admin reporting over the check-in log.

use std::collections::BTreeMap;

use journeys_core::journeys::TransitMode;
use journeys_core::store::State;
use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ModeShare {
    pub mode: TransitMode,
    pub count: u64,
    /// Rounded to the nearest whole percent, halves up.
    pub percent: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ModeShareReport {
    pub total: u64,
    /// Most used first; equal counts in mode order.
    pub modes: Vec<ModeShare>,
}

pub fn mode_share_report(state: &State) -> ModeShareReport {
    mode_share_from_counts(state.checkins().fold(BTreeMap::new(), |mut acc, c| {
        *acc.entry(c.mode).or_insert(0u64) += 1;
        acc
    }))
}

pub fn mode_share_from_counts(counts: BTreeMap<TransitMode, u64>) -> ModeShareReport {
    let total: u64 = counts.values().sum();
    let mut modes: Vec<ModeShare> = counts
        .into_iter()
        .filter(|(_, n)| *n > 0)
        .map(|(mode, count)| ModeShare {
            mode,
            count,
            // Integer form of round(100 * count / total).
            percent: (200 * count + total) / (2 * total),
        })
        .collect();
    modes.sort_by(|a, b| b.count.cmp(&a.count).then(a.mode.cmp(&b.mode)));
    ModeShareReport { total, modes }
}

impl ModeShareReport {
    pub fn to_table(&self) -> String {
        let mut out = format!("{:<12} {:>8} {:>7}\n", "mode", "count", "share");
        for m in &self.modes {
            out.push_str(&format!("{:<12} {:>8} {:>6}%\n", m.mode.name(), m.count, m.percent));
        }
        out.push_str(&format!("{:<12} {:>8}\n", "total", self.total));
        out
    }
}
