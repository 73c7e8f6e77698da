//! Exact reference solvers used to check the auction.
//!
//! Neither solver shares code with the auction path beyond reading the
//! instance: the brute-force search works on the capacitated instance
//! directly and the Hungarian method works on the padded square matrix.

use super::{pad_and_expand, AssignmentInstance, AuctionError, SlotCost};

/// Largest padded size the brute-force search accepts.
pub const BRUTE_FORCE_LIMIT: usize = 10;

#[derive(Debug, Clone, PartialEq)]
pub struct OracleSolution {
    pub matching: Vec<Option<usize>>,
    pub objective: f64,
}

impl OracleSolution {
    pub fn assigned(&self) -> usize {
        self.matching.iter().filter(|m| m.is_some()).count()
    }
}

fn padded_size(inst: &AssignmentInstance) -> usize {
    let slots: usize = inst.capacities().iter().map(|&c| c.min(inst.rows())).sum();
    slots.max(inst.rows())
}

/// Exact optimum: brute force when small enough, Hungarian otherwise.
pub fn oracle_solve(inst: &AssignmentInstance) -> Result<OracleSolution, AuctionError> {
    if padded_size(inst) <= BRUTE_FORCE_LIMIT {
        brute_force(inst)
    } else {
        Ok(hungarian(inst))
    }
}

/// Enumerates every feasible assignment with the largest number of matched
/// jobs and returns the cheapest (lexicographically first on ties).
pub fn brute_force(inst: &AssignmentInstance) -> Result<OracleSolution, AuctionError> {
    let size = padded_size(inst);
    if size > BRUTE_FORCE_LIMIT {
        return Err(AuctionError::TooLarge {
            size,
            limit: BRUTE_FORCE_LIMIT,
        });
    }
    struct Search<'a> {
        inst: &'a AssignmentInstance,
        remaining: Vec<usize>,
        current: Vec<Option<usize>>,
        best: Option<(usize, f64, Vec<Option<usize>>)>,
    }
    impl Search<'_> {
        fn go(&mut self, row: usize, matched: usize, cost: f64) {
            if row == self.inst.rows() {
                let better = match &self.best {
                    None => true,
                    Some((m, c, _)) => matched > *m || (matched == *m && cost < *c),
                };
                if better {
                    self.best = Some((matched, cost, self.current.clone()));
                }
                return;
            }
            if let Some((m, _, _)) = &self.best {
                let left = self.inst.rows() - row;
                let room: usize = self.remaining.iter().sum();
                if matched + left.min(room) < *m {
                    return;
                }
            }
            for col in 0..self.inst.cols() {
                if self.remaining[col] > 0 && self.inst.allowed(row, col) {
                    self.remaining[col] -= 1;
                    self.current[row] = Some(col);
                    self.go(row + 1, matched + 1, cost + self.inst.cost(row, col));
                    self.current[row] = None;
                    self.remaining[col] += 1;
                }
            }
            self.go(row + 1, matched, cost);
        }
    }
    let mut s = Search {
        inst,
        remaining: inst.capacities().to_vec(),
        current: vec![None; inst.rows()],
        best: None,
    };
    s.go(0, 0, 0.0);
    let (_, objective, matching) = s.best.expect("the empty assignment is always feasible");
    Ok(OracleSolution {
        matching,
        objective,
    })
}

/// Hungarian method (shortest augmenting paths with potentials) on the padded matrix.
pub fn hungarian(inst: &AssignmentInstance) -> OracleSolution {
    let padded = pad_and_expand(&inst.clipped());
    let n = padded.size;
    let mut matching = vec![None; inst.rows()];
    if n == 0 {
        return OracleSolution {
            matching,
            objective: 0.0,
        };
    }
    let max_real = (0..n * n)
        .filter_map(|k| match padded.cost(k / n, k % n) {
            SlotCost::Real(c) => Some(c),
            SlotCost::Forbidden => None,
        })
        .fold(0.0, f64::max);
    let forbidden = (n as f64) * (max_real + 1.0) + 1.0;
    let a = |i: usize, j: usize| match padded.cost(i, j) {
        SlotCost::Real(c) => c,
        SlotCost::Forbidden => forbidden,
    };

    // 1-based arrays; column 0 is the sentinel.
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
                    let cur = a(i0 - 1, j - 1) - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    let mut objective = 0.0;
    for (slot, &pj) in p.iter().enumerate().skip(1) {
        let row = pj - 1;
        if let (Some(job), Some(col)) = (padded.row_job[row], padded.slot_column[slot - 1]) {
            if inst.allowed(job, col) {
                matching[job] = Some(col);
                objective += inst.cost(job, col);
            }
        }
    }
    OracleSolution {
        matching,
        objective,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn inst(costs: Vec<Vec<f64>>, caps: Vec<usize>) -> AssignmentInstance {
        AssignmentInstance::new(costs, caps).unwrap()
    }

    #[test]
    fn two_permutations() {
        let i = inst(vec![vec![1.0, 2.0], vec![2.0, 1.0]], vec![1, 1]);
        assert_eq!(brute_force(&i).unwrap().objective, 2.0);
        assert_eq!(hungarian(&i).objective, 2.0);
    }

    #[test]
    fn all_equal_costs() {
        let i = inst(vec![vec![4.0; 3]; 3], vec![1, 1, 1]);
        let s = brute_force(&i).unwrap();
        assert_eq!((s.objective, s.assigned()), (12.0, 3));
        assert_eq!(hungarian(&i).objective, 12.0);
    }

    #[test]
    fn diagonal_dominant() {
        let mut costs = vec![vec![50.0; 4]; 4];
        for (k, row) in costs.iter_mut().enumerate() {
            row[k] = k as f64 + 1.0;
        }
        let i = inst(costs, vec![1; 4]);
        let s = brute_force(&i).unwrap();
        assert_eq!(s.matching, vec![Some(0), Some(1), Some(2), Some(3)]);
        assert_eq!(hungarian(&i).matching, s.matching);
    }

    #[test]
    fn respects_size_cap() {
        let i = inst(vec![vec![1.0]; 11], vec![11]);
        assert!(matches!(brute_force(&i), Err(AuctionError::TooLarge { .. })));
        assert_eq!(oracle_solve(&i).unwrap().objective, 11.0);
    }
}
