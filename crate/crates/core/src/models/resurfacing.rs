//! Nonparametric tables for recommending items the user already knows.
//!
//! A user's recent history with an item is projected onto a 28-day activity
//! bitmap and then onto an 11 × 11 grid of activity ratios: the share of
//! active days in the older two weeks and in the most recent two weeks, each
//! rounded to the nearest 10%. Each grid cell stores empirical means of
//!
//! * `P(a, z)`: listening through the promotion when the item is promoted,
//! * `p_norec`: listening on days the item is not promoted,
//! * `v`: active days with the item over the next 59 days,
//!
//! and `p_rec = P(a, z) + (1 - P(a, z)) · p_norec`.

use crate::domain::{consumption, ItemId, Trajectory};

/// Days of history the projection reads.
pub const HISTORY_DAYS: usize = 28;
/// Cells per grid axis (0%, 10%, ..., 100%).
pub const GRID: usize = 11;
/// Days over which the value `v` counts active days, starting today.
pub const VALUE_DAYS: usize = 59;

const HALF: usize = HISTORY_DAYS / 2;
const MASK: u32 = (1 << HISTORY_DAYS) - 1;

/// Activity with one item over the last 28 days; bit `i` is set when the
/// user was active with the item `i + 1` days ago.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct ActivityHistory(pub u32);

impl ActivityHistory {
    /// History after one more day with the given activity.
    pub fn push(self, active: bool) -> Self {
        ActivityHistory(((self.0 << 1) | active as u32) & MASK)
    }

    /// States after a listen and after no listen today.
    pub fn successors(self) -> (Self, Self) {
        (self.push(true), self.push(false))
    }

    /// `(older-two-weeks cell, recent-two-weeks cell)`.
    pub fn cell(self) -> (usize, usize) {
        let recent = (self.0 & ((1 << HALF) - 1)).count_ones() as f64;
        let older = (self.0 >> HALF).count_ones() as f64;
        let bin = |c: f64| (10.0 * c / HALF as f64).round() as usize;
        (bin(older), bin(recent))
    }
}

/// Running sums for one grid cell.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CellStats {
    pub rec_days: u64,
    pub rec_hits: u64,
    pub norec_days: u64,
    pub norec_hits: u64,
    pub value_days: u64,
    pub value_sum: f64,
}

/// Per-cell estimates for one item.
#[derive(Debug, Clone, PartialEq)]
pub struct ResurfacingTables {
    pub item: ItemId,
    pub cells: Vec<CellStats>,
}

fn ratio(num: f64, den: u64) -> Option<f64> {
    (den > 0).then(|| num / den as f64)
}

impl ResurfacingTables {
    pub fn empty(item: ItemId) -> Self {
        Self {
            item,
            cells: vec![CellStats::default(); GRID * GRID],
        }
    }

    pub fn stats(&self, i: usize, j: usize) -> &CellStats {
        &self.cells[i * GRID + j]
    }

    /// Probability of listening through the promotion, `P(a, z)`.
    pub fn p_star(&self, i: usize, j: usize) -> Option<f64> {
        let c = self.stats(i, j);
        ratio(c.rec_hits as f64, c.rec_days)
    }

    pub fn p_norec(&self, i: usize, j: usize) -> Option<f64> {
        let c = self.stats(i, j);
        ratio(c.norec_hits as f64, c.norec_days)
    }

    /// `P(a, z) + (1 - P(a, z)) · p_norec`.
    pub fn p_rec(&self, i: usize, j: usize) -> Option<f64> {
        let p = self.p_star(i, j)?;
        let q = self.p_norec(i, j)?;
        Some(p + (1.0 - p) * q)
    }

    pub fn v(&self, i: usize, j: usize) -> Option<f64> {
        let c = self.stats(i, j);
        ratio(c.value_sum, c.value_days)
    }
}

/// Builds the tables for item `a` from logged trajectories.
///
/// A (user, day) pair qualifies once the user has 28 days of history and has
/// listened to `a` at least once before that day. Promotion statistics use
/// every qualifying day; the value statistic additionally needs 59 observed
/// days starting that day.
pub fn build_resurfacing_tables(trajectories: &[Trajectory], a: ItemId) -> ResurfacingTables {
    let mut tables = ResurfacingTables::empty(a);
    for traj in trajectories {
        let active: Vec<bool> = traj.days.iter().map(|d| consumption(d, a) > 0.0).collect();
        let mut history = ActivityHistory::default();
        let mut familiar = false;
        for (t, day) in traj.days.iter().enumerate() {
            if t >= HISTORY_DAYS && familiar {
                let (i, j) = history.cell();
                let cell = &mut tables.cells[i * GRID + j];
                if day.star() == Some(a) {
                    cell.rec_days += 1;
                    if day.engagements[0] > 0.0 {
                        cell.rec_hits += 1;
                    }
                } else {
                    cell.norec_days += 1;
                    if active[t] {
                        cell.norec_hits += 1;
                    }
                }
                if t + VALUE_DAYS <= active.len() {
                    cell.value_days += 1;
                    cell.value_sum += active[t..t + VALUE_DAYS].iter().filter(|&&x| x).count() as f64;
                }
            }
            familiar |= active[t];
            history = history.push(active[t]);
        }
    }
    tables
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::DayOutcome;

    #[test]
    fn history_cells() {
        assert_eq!(ActivityHistory(0).cell(), (0, 0));
        assert_eq!(ActivityHistory(MASK).cell(), (10, 10));
        // Active 3 of the last 14 days: 21.4% -> cell 2.
        assert_eq!(ActivityHistory(0b111).cell(), (0, 2));
        let h = ActivityHistory(1 << 13);
        assert_eq!(h.cell(), (0, 1));
        assert_eq!(h.push(false).cell(), (1, 0));
        let (p, m) = ActivityHistory(0).successors();
        assert_eq!(p, ActivityHistory(1));
        assert_eq!(m, ActivityHistory(0));
    }

    #[test]
    fn derived_probabilities() {
        let mut t = ResurfacingTables::empty(ItemId(0));
        t.cells[0] = CellStats {
            rec_days: 10,
            rec_hits: 0,
            norec_days: 10,
            norec_hits: 3,
            ..CellStats::default()
        };
        assert_eq!(t.p_rec(0, 0), t.p_norec(0, 0));
        t.cells[0].rec_hits = 10;
        assert_eq!(t.p_rec(0, 0), Some(1.0));
        assert_eq!(t.p_rec(5, 5), None);
        assert_eq!(t.v(0, 0), None);
    }

    #[test]
    fn tables_from_hand_built_log() {
        // Item 3 listened every other day for 40 days; promoted on day 30.
        let days: Vec<DayOutcome> = (0..100)
            .map(|t| {
                let star = if t == 30 { ItemId(3) } else { ItemId(1) };
                let y = if t % 2 == 0 && t < 40 { 100.0 } else { 0.0 };
                DayOutcome {
                    actions: vec![star, ItemId(3)],
                    engagements: vec![if t == 30 { y } else { 0.0 }, if t == 30 { 0.0 } else { y }],
                }
            })
            .collect();
        let traj = Trajectory {
            user_id: 0,
            start: 0,
            end: 99,
            taste: vec![1.0],
            days,
            latent_type_id: 0,
        };
        let tables = build_resurfacing_tables(&[traj], ItemId(3));
        // Days 28..40 have 7 of 14 active days in both halves.
        assert_eq!(tables.p_star(5, 5), Some(1.0));
        let c = tables.stats(5, 5);
        assert_eq!(c.rec_days, 1);
        assert!(c.norec_days > 0);
        let total: u64 = tables.cells.iter().map(|c| c.rec_days + c.norec_days).sum();
        assert_eq!(total, 72);
    }
}
