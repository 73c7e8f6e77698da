//! Forward auction with ε-scaling for the capacitated assignment problem.
//!
//! Jobs are rows, resources are columns, and column `r` accepts up to
//! `capacities[r]` jobs. The solver expands every column into unit slots,
//! squares the matrix with virtual rows or virtual slots, converts costs to
//! integer benefits and runs Gauss-Seidel bidding at decreasing ε until ε
//! drops below `1/(n+1)` in integer-cost units, at which point the matching
//! is optimal for the integerized costs.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub mod oracle;

/// ε is divided by this factor between scaling phases.
pub const EPSILON_REDUCTION: i64 = 4;
pub const DEFAULT_PRECISION: u32 = 1000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AuctionError {
    #[error("cost at ({row}, {col}) is {value}; costs must be finite and non-negative")]
    InvalidCost { row: usize, col: usize, value: f64 },
    #[error("row {row} has {len} entries, expected {expected}")]
    Ragged { row: usize, len: usize, expected: usize },
    #[error("scaled costs overflow the integer range (max scaled cost {max_cost} at size {size})")]
    ScaleOverflow { max_cost: f64, size: usize },
    #[error("precision must be positive")]
    ZeroPrecision,
    #[error("brute-force oracle limited to {limit} padded slots, instance needs {size}")]
    TooLarge { size: usize, limit: usize },
}

/// Rows are jobs, columns are resources with a per-column capacity.
#[derive(Debug, Clone, PartialEq)]
pub struct AssignmentInstance {
    rows: usize,
    cols: usize,
    costs: Vec<f64>,
    capacities: Vec<usize>,
    allowed: Option<Vec<bool>>,
}

impl AssignmentInstance {
    pub fn new(costs: Vec<Vec<f64>>, capacities: Vec<usize>) -> Result<Self, AuctionError> {
        let cols = capacities.len();
        let rows = costs.len();
        let mut flat = Vec::with_capacity(rows * cols);
        for (row, line) in costs.into_iter().enumerate() {
            if line.len() != cols {
                return Err(AuctionError::Ragged {
                    row,
                    len: line.len(),
                    expected: cols,
                });
            }
            for (col, value) in line.into_iter().enumerate() {
                if !(value.is_finite() && value >= 0.0) {
                    return Err(AuctionError::InvalidCost { row, col, value });
                }
                flat.push(value);
            }
        }
        Ok(Self {
            rows,
            cols,
            costs: flat,
            capacities,
            allowed: None,
        })
    }

    /// Restricts which (row, column) arcs may be used.
    pub fn with_mask(mut self, mask: Vec<Vec<bool>>) -> Result<Self, AuctionError> {
        let mut flat = Vec::with_capacity(self.rows * self.cols);
        if mask.len() != self.rows {
            return Err(AuctionError::Ragged {
                row: mask.len(),
                len: mask.len(),
                expected: self.rows,
            });
        }
        for (row, line) in mask.into_iter().enumerate() {
            if line.len() != self.cols {
                return Err(AuctionError::Ragged {
                    row,
                    len: line.len(),
                    expected: self.cols,
                });
            }
            flat.extend(line);
        }
        self.allowed = Some(flat);
        Ok(self)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn capacities(&self) -> &[usize] {
        &self.capacities
    }

    #[inline]
    pub fn cost(&self, row: usize, col: usize) -> f64 {
        self.costs[row * self.cols + col]
    }

    #[inline]
    pub fn allowed(&self, row: usize, col: usize) -> bool {
        self.allowed
            .as_ref()
            .is_none_or(|m| m[row * self.cols + col])
    }

    fn max_cost(&self) -> f64 {
        self.costs.iter().copied().fold(0.0, f64::max)
    }

    /// Rows that can appear in some optimal assignment.
    ///
    /// With `k` slots in total, any optimum can be rewritten so that each
    /// column only holds rows among its `k` cheapest allowed rows (ties by
    /// index): a row outside that set can always trade places with an
    /// unassigned row inside it without raising the cost. Solving on the
    /// union of these sets therefore loses nothing. Returned sorted.
    pub fn candidate_rows(&self) -> Vec<usize> {
        let k: usize = self.capacities.iter().map(|&c| c.min(self.rows)).sum();
        if self.rows <= k {
            return (0..self.rows).collect();
        }
        let mut keep = vec![false; self.rows];
        let mut col_rows: Vec<usize> = Vec::with_capacity(self.rows);
        for col in 0..self.cols {
            if self.capacities[col] == 0 {
                continue;
            }
            col_rows.clear();
            col_rows.extend((0..self.rows).filter(|&r| self.allowed(r, col)));
            let key = |&r: &usize| (self.cost(r, col), r);
            if col_rows.len() > k {
                col_rows.select_nth_unstable_by(k - 1, |a, b| key(a).partial_cmp(&key(b)).expect("finite costs"));
                col_rows.truncate(k);
            }
            for &r in &col_rows {
                keep[r] = true;
            }
        }
        (0..self.rows).filter(|&r| keep[r]).collect()
    }

    /// The sub-instance made of `rows`, in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> Self {
        let mut costs = Vec::with_capacity(rows.len() * self.cols);
        let mut allowed = self.allowed.as_ref().map(|_| Vec::with_capacity(rows.len() * self.cols));
        for &r in rows {
            costs.extend_from_slice(&self.costs[r * self.cols..(r + 1) * self.cols]);
            if let (Some(out), Some(m)) = (allowed.as_mut(), self.allowed.as_ref()) {
                out.extend_from_slice(&m[r * self.cols..(r + 1) * self.cols]);
            }
        }
        Self {
            rows: rows.len(),
            cols: self.cols,
            costs,
            capacities: self.capacities.clone(),
            allowed,
        }
    }

    /// Copy with every capacity clipped to the number of rows.
    fn clipped(&self) -> Self {
        let mut out = self.clone();
        for c in &mut out.capacities {
            *c = (*c).min(self.rows);
        }
        out
    }
}

/// Cost of a padded slot pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SlotCost {
    Real(f64),
    /// Arc excluded by the mask; priced prohibitively during solve.
    Forbidden,
}

/// Square unit-slot expansion of an [`AssignmentInstance`].
#[derive(Debug, Clone, PartialEq)]
pub struct PaddedInstance {
    pub size: usize,
    /// Original row for each padded row, `None` for virtual jobs.
    pub row_job: Vec<Option<usize>>,
    /// Original column for each slot, `None` for virtual slots.
    pub slot_column: Vec<Option<usize>>,
    costs: Vec<SlotCost>,
}

impl PaddedInstance {
    pub fn real_rows(&self) -> usize {
        self.row_job.iter().filter(|r| r.is_some()).count()
    }

    pub fn real_slots(&self) -> usize {
        self.slot_column.iter().filter(|c| c.is_some()).count()
    }

    #[inline]
    pub fn cost(&self, row: usize, slot: usize) -> SlotCost {
        self.costs[row * self.size + slot]
    }
}

/// Expands each column into unit slots and squares the matrix.
///
/// Missing rows become virtual jobs costing 0 on every slot; missing slots
/// become virtual slots costing `max real cost + 1` for every real job.
pub fn pad_and_expand(inst: &AssignmentInstance) -> PaddedInstance {
    let mut slot_column: Vec<Option<usize>> = inst
        .capacities
        .iter()
        .enumerate()
        .flat_map(|(c, &cap)| std::iter::repeat_n(Some(c), cap))
        .collect();
    let real_slots = slot_column.len();
    let size = real_slots.max(inst.rows);
    slot_column.resize(size, None);
    let mut row_job: Vec<Option<usize>> = (0..inst.rows).map(Some).collect();
    row_job.resize(size, None);

    let virtual_cost = inst.max_cost() + 1.0;
    let mut costs = Vec::with_capacity(size * size);
    for row in &row_job {
        for slot in &slot_column {
            costs.push(match (row, slot) {
                (None, _) => SlotCost::Real(0.0),
                (Some(_), None) => SlotCost::Real(virtual_cost),
                (Some(j), Some(c)) if inst.allowed(*j, *c) => SlotCost::Real(inst.cost(*j, *c)),
                (Some(_), Some(_)) => SlotCost::Forbidden,
            });
        }
    }
    PaddedInstance {
        size,
        row_job,
        slot_column,
        costs,
    }
}

/// Dense square integer benefit matrix (negated, scaled costs).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BenefitMatrix {
    pub size: usize,
    pub values: Vec<i64>,
}

impl BenefitMatrix {
    #[inline]
    pub fn get(&self, row: usize, col: usize) -> i64 {
        self.values[row * self.size + col]
    }

    fn row(&self, row: usize) -> &[i64] {
        &self.values[row * self.size..(row + 1) * self.size]
    }
}

/// A matched pair that violates ε-complementary slackness.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CsViolation {
    pub row: usize,
    pub slot: usize,
    /// How far the pair's value falls below the row's best value minus ε.
    pub shortfall: i64,
}

/// Lists every matched pair `(i, j)` with `b_ij - p_j < max_k (b_ik - p_k) - ε`.
pub fn check_eps_cs(
    benefits: &BenefitMatrix,
    assignment: &[Option<usize>],
    prices: &[i64],
    eps: i64,
) -> Vec<CsViolation> {
    let mut out = Vec::new();
    for (row, slot) in assignment.iter().enumerate() {
        let Some(slot) = *slot else { continue };
        let best = benefits
            .row(row)
            .iter()
            .zip(prices)
            .map(|(b, p)| b - p)
            .max()
            .unwrap_or(i64::MIN);
        let value = benefits.get(row, slot) - prices[slot];
        if value < best - eps {
            out.push(CsViolation {
                row,
                slot,
                shortfall: best - eps - value,
            });
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SolverConfig {
    /// Costs are multiplied by this and rounded before solving.
    pub precision: u32,
    /// Run [`check_eps_cs`] after every assignment step and count violations.
    pub verify_eps_cs: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            precision: DEFAULT_PRECISION,
            verify_eps_cs: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuctionResult {
    /// Column per original row; `None` when left unassigned.
    pub matching: Vec<Option<usize>>,
    /// Final price of each unit slot, in cost units.
    pub prices: Vec<f64>,
    /// Column owning each slot in `prices`, `None` for virtual slots.
    pub slot_columns: Vec<Option<usize>>,
    /// ε of the last scaling phase, in cost units.
    pub final_epsilon: f64,
    /// Number of bids placed across all phases.
    pub iterations: u64,
    pub phases: u32,
    /// Total original cost of the matched real pairs.
    pub objective: f64,
    pub cs_checks: u64,
    pub cs_violations: u64,
}

impl AuctionResult {
    fn empty(rows: usize) -> Self {
        Self {
            matching: vec![None; rows],
            prices: Vec::new(),
            slot_columns: Vec::new(),
            final_epsilon: 0.0,
            iterations: 0,
            phases: 0,
            objective: 0.0,
            cs_checks: 0,
            cs_violations: 0,
        }
    }

    pub fn assigned(&self) -> usize {
        self.matching.iter().filter(|m| m.is_some()).count()
    }
}

/// Integer state of a finished auction, for inspection and tests.
#[derive(Debug, Clone, PartialEq)]
pub struct AuctionTrace {
    pub padded: PaddedInstance,
    pub benefits: BenefitMatrix,
    /// Slot per padded row.
    pub assignment: Vec<Option<usize>>,
    pub prices: Vec<i64>,
    pub epsilon: i64,
}

pub fn solve(inst: &AssignmentInstance, precision: u32) -> Result<AuctionResult, AuctionError> {
    solve_with(
        inst,
        &SolverConfig {
            precision,
            ..Default::default()
        },
    )
}

/// [`solve`] on the [`candidate_rows`](AssignmentInstance::candidate_rows)
/// sub-instance. The matching is reported against the original rows; the
/// remaining fields describe the sub-instance.
pub fn solve_pruned(inst: &AssignmentInstance, precision: u32) -> Result<AuctionResult, AuctionError> {
    let rows = inst.candidate_rows();
    if rows.len() == inst.rows() {
        return solve(inst, precision);
    }
    let mut res = solve(&inst.select_rows(&rows), precision)?;
    let mut matching = vec![None; inst.rows()];
    for (sub, col) in res.matching.iter().enumerate() {
        matching[rows[sub]] = *col;
    }
    res.matching = matching;
    Ok(res)
}

pub fn solve_with(inst: &AssignmentInstance, cfg: &SolverConfig) -> Result<AuctionResult, AuctionError> {
    solve_traced(inst, cfg).map(|(res, _)| res)
}

/// Integerizes padded costs into benefits scaled by `size + 1`, so that the
/// terminal ε of 1 equals `1/(size+1)` integer-cost units.
fn benefits(padded: &PaddedInstance, precision: u32) -> Result<BenefitMatrix, AuctionError> {
    let n = padded.size;
    let scale = (n as i64) + 1;
    let precision = f64::from(precision);
    // prices stay within a small multiple of the benefit range
    let limit = (i64::MAX / 8 / scale / scale) as f64;
    let mut max_int = 0i64;
    let mut ints = Vec::with_capacity(n * n);
    for c in &padded.costs {
        let v = match c {
            SlotCost::Real(x) => {
                let scaled = (x * precision).round();
                if scaled > limit {
                    return Err(AuctionError::ScaleOverflow {
                        max_cost: scaled,
                        size: n,
                    });
                }
                let v = scaled as i64;
                max_int = max_int.max(v);
                Some(v)
            }
            SlotCost::Forbidden => None,
        };
        ints.push(v);
    }
    // cheaper to use every other arc than a single forbidden one
    let forbidden = (n as f64) * (max_int as f64 + 1.0) + 1.0;
    if ints.iter().any(Option::is_none) && forbidden > limit {
        return Err(AuctionError::ScaleOverflow {
            max_cost: forbidden,
            size: n,
        });
    }
    let forbidden = forbidden as i64;
    Ok(BenefitMatrix {
        size: n,
        values: ints
            .into_iter()
            .map(|v| -v.unwrap_or(forbidden) * scale)
            .collect(),
    })
}

/// Runs the auction and also returns the final integer state.
pub fn solve_traced(
    inst: &AssignmentInstance,
    cfg: &SolverConfig,
) -> Result<(AuctionResult, AuctionTrace), AuctionError> {
    if cfg.precision == 0 {
        return Err(AuctionError::ZeroPrecision);
    }
    // a column can never hold more jobs than exist
    let padded = pad_and_expand(&inst.clipped());
    let bm = benefits(&padded, cfg.precision)?;
    let n = padded.size;

    let mut prices = vec![0i64; n];
    let mut assignment: Vec<Option<usize>> = vec![None; n];
    let mut owner: Vec<Option<usize>> = vec![None; n];
    let mut result = AuctionResult::empty(inst.rows);

    let max_abs = bm.values.iter().map(|b| b.abs()).max().unwrap_or(0);
    let mut eps = (max_abs / 2).max(1);
    if n > 0 {
        loop {
            result.phases += 1;
            assignment.fill(None);
            owner.fill(None);
            let mut unassigned: BinaryHeap<Reverse<usize>> = (0..n).map(Reverse).collect();

            while let Some(Reverse(row)) = unassigned.pop() {
                let (best, best_value, second_value) = best_two(bm.row(row), &prices);
                let increment = match second_value {
                    Some(second) => best_value - second + eps,
                    None => eps,
                };
                prices[best] += increment;
                if let Some(prev) = owner[best].replace(row) {
                    assignment[prev] = None;
                    unassigned.push(Reverse(prev));
                }
                assignment[row] = Some(best);
                result.iterations += 1;

                if cfg.verify_eps_cs {
                    result.cs_checks += 1;
                    result.cs_violations += check_eps_cs(&bm, &assignment, &prices, eps).len() as u64;
                }
            }

            if eps == 1 {
                break;
            }
            eps = (eps / EPSILON_REDUCTION).max(1);
        }
    }

    let unit = f64::from(cfg.precision) * ((n as f64) + 1.0);
    for (row, slot) in assignment.iter().enumerate() {
        let (Some(job), Some(slot)) = (padded.row_job[row], *slot) else {
            continue;
        };
        if let Some(col) = padded.slot_column[slot] {
            if inst.allowed(job, col) {
                result.matching[job] = Some(col);
                result.objective += inst.cost(job, col);
            }
        }
    }
    result.prices = prices.iter().map(|&p| p as f64 / unit).collect();
    result.slot_columns = padded.slot_column.clone();
    result.final_epsilon = if n > 0 { eps as f64 / unit } else { 0.0 };

    let trace = AuctionTrace {
        padded,
        benefits: bm,
        assignment,
        prices,
        epsilon: eps,
    };
    Ok((result, trace))
}

/// Best slot (lowest index on ties), its value, and the second-best value.
#[inline]
fn best_two(row: &[i64], prices: &[i64]) -> (usize, i64, Option<i64>) {
    let mut best = 0;
    let mut best_value = i64::MIN;
    let mut second: Option<i64> = None;
    for (j, (b, p)) in row.iter().zip(prices).enumerate() {
        let v = b - p;
        if v > best_value {
            if j > 0 {
                second = Some(second.map_or(best_value, |s| s.max(best_value)));
            }
            best = j;
            best_value = v;
        } else {
            second = Some(second.map_or(v, |s| s.max(v)));
        }
    }
    (best, best_value, second)
}
