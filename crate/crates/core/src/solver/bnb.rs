//! Branch and bound over an [`IntegerProgram`]: depth-first until the first
//! incumbent, then best-bound.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use super::model::IntegerProgram;
use super::simplex::{solve_lp, LpOutcome};

const INT_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum BbStatus {
    Optimal,
    /// Node budget exhausted with an incumbent.
    BestEffort,
    /// Tree exhausted without a feasible point.
    Infeasible,
    /// Node budget exhausted before any feasible point was found.
    NoIncumbent,
}

#[derive(Debug, Clone)]
pub(crate) struct BbResult {
    pub status: BbStatus,
    pub x: Option<Vec<i64>>,
    pub objective: Option<i64>,
    /// Lower bound on the optimum over unexplored nodes.
    pub bound: f64,
    pub nodes: usize,
}

struct Node {
    lower: Vec<i64>,
    upper: Vec<i64>,
    bound: f64,
}

/// A node ordered for a min-heap on its bound, newest first among ties.
struct Ranked {
    seq: usize,
    node: Node,
}

impl PartialEq for Ranked {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Ranked {}

impl PartialOrd for Ranked {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Ranked {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .node
            .bound
            .total_cmp(&self.node.bound)
            .then(self.seq.cmp(&other.seq))
    }
}

/// Depth-first until an incumbent exists, best-bound afterwards.
struct Frontier {
    stack: Vec<Node>,
    heap: BinaryHeap<Ranked>,
    seq: usize,
    best_first: bool,
}

impl Frontier {
    fn new(root: Node) -> Self {
        Self {
            stack: vec![root],
            heap: BinaryHeap::new(),
            seq: 0,
            best_first: false,
        }
    }

    fn switch_to_best_first(&mut self) {
        if !self.best_first {
            self.best_first = true;
            for node in std::mem::take(&mut self.stack) {
                self.push(node);
            }
        }
    }

    fn push(&mut self, node: Node) {
        if self.best_first {
            self.seq += 1;
            self.heap.push(Ranked { seq: self.seq, node });
        } else {
            self.stack.push(node);
        }
    }

    fn pop(&mut self) -> Option<Node> {
        if self.best_first {
            self.heap.pop().map(|r| r.node)
        } else {
            self.stack.pop()
        }
    }

    fn is_empty(&self) -> bool {
        self.stack.is_empty() && self.heap.is_empty()
    }

    fn bounds(&self) -> impl Iterator<Item = f64> + '_ {
        self.stack
            .iter()
            .map(|n| n.bound)
            .chain(self.heap.iter().map(|r| r.node.bound))
    }
}

/// Minimizes `ip`, seeded with any of `starts` that are feasible once their
/// aggregate variables are filled in.
///
/// Branches on the most fractional variable of the highest priority class
/// (lowest index on ties). An
/// integral relaxation optimum that fails the exact row check is split
/// three ways on its first unfixed variable.
pub(crate) fn branch_and_bound(ip: &IntegerProgram, starts: &[Vec<i64>], max_nodes: usize) -> BbResult {
    let n = ip.n_vars();
    let mut best: Option<(i64, Vec<i64>)> = None;
    for x in starts {
        let x = ip.complete(x);
        if ip.is_feasible(&x) {
            let v = ip.value(&x);
            if best.as_ref().is_none_or(|(b, _)| v < *b) {
                best = Some((v, x));
            }
        }
    }

    let cost: Vec<f64> = ip.objective.iter().map(|&c| c as f64).collect();
    let rows: Vec<(Vec<f64>, f64)> = ip
        .rows
        .iter()
        .map(|r| {
            let mut a = vec![0.0; n];
            for &(v, c) in &r.coefs {
                a[v] += c as f64;
            }
            (a, r.rhs as f64)
        })
        .collect();

    let mut stack = Frontier::new(Node {
        lower: ip.lower.clone(),
        upper: ip.upper.clone(),
        bound: f64::NEG_INFINITY,
    });
    if best.is_some() {
        stack.switch_to_best_first();
    }
    let mut nodes = 0;
    let mut incomplete = false;
    let prunable = |bound: f64, best: &Option<(i64, Vec<i64>)>| {
        best.as_ref()
            .is_some_and(|(b, _)| (bound - INT_TOL).ceil() >= *b as f64)
    };

    while let Some(node) = stack.pop() {
        if prunable(node.bound, &best) {
            continue;
        }
        if nodes >= max_nodes {
            stack.push(node);
            break;
        }
        nodes += 1;
        let lo: Vec<f64> = node.lower.iter().map(|&v| v as f64).collect();
        let hi: Vec<f64> = node.upper.iter().map(|&v| v as f64).collect();
        let (x, value) = match solve_lp(&cost, &rows, &lo, &hi) {
            LpOutcome::Optimal { x, value } => (x, value + ip.objective_constant as f64),
            LpOutcome::Infeasible => continue,
            LpOutcome::Unbounded | LpOutcome::Stalled => {
                incomplete = true;
                continue;
            }
        };
        if prunable(value, &best) {
            continue;
        }

        let mut branch: Option<(usize, f64)> = None;
        for (j, &v) in x.iter().enumerate() {
            let dist = (v - v.round()).abs();
            if dist <= INT_TOL {
                continue;
            }
            let better = match branch {
                None => true,
                Some((k, d)) => {
                    ip.priority[j] > ip.priority[k] || (ip.priority[j] == ip.priority[k] && dist > d + 1e-12)
                }
            };
            if better {
                branch = Some((j, dist));
            }
        }

        match branch {
            Some((j, _)) => {
                let v = x[j];
                let mut down = Node {
                    lower: node.lower.clone(),
                    upper: node.upper.clone(),
                    bound: value,
                };
                down.upper[j] = v.floor() as i64;
                let mut up = Node {
                    lower: node.lower,
                    upper: node.upper,
                    bound: value,
                };
                up.lower[j] = v.ceil() as i64;
                if v - v.floor() < 0.5 {
                    stack.push(up);
                    stack.push(down);
                } else {
                    stack.push(down);
                    stack.push(up);
                }
            }
            None => {
                let xi: Vec<i64> = x
                    .iter()
                    .zip(node.lower.iter().zip(&node.upper))
                    .map(|(v, (&l, &u))| (v.round() as i64).clamp(l, u))
                    .collect();
                if ip.is_feasible(&xi) {
                    let v = ip.value(&xi);
                    if best.as_ref().is_none_or(|(b, _)| v < *b) {
                        best = Some((v, xi));
                    }
                    stack.switch_to_best_first();
                    continue;
                }
                let Some(j) = (0..n).find(|&j| node.lower[j] < node.upper[j]) else {
                    continue;
                };
                let k = xi[j];
                for (l, u) in [(k + 1, node.upper[j]), (k, k), (node.lower[j], k - 1)] {
                    if l <= u {
                        let mut child = Node {
                            lower: node.lower.clone(),
                            upper: node.upper.clone(),
                            bound: value,
                        };
                        child.lower[j] = l;
                        child.upper[j] = u;
                        stack.push(child);
                    }
                }
            }
        }
    }

    let open_bound = stack.bounds().fold(f64::INFINITY, f64::min);
    let exhausted = stack.is_empty() && !incomplete;
    match best {
        Some((v, x)) => BbResult {
            status: if exhausted {
                BbStatus::Optimal
            } else {
                BbStatus::BestEffort
            },
            bound: if exhausted { v as f64 } else { open_bound.min(v as f64) },
            objective: Some(v),
            x: Some(x),
            nodes,
        },
        None => BbResult {
            status: if exhausted {
                BbStatus::Infeasible
            } else {
                BbStatus::NoIncumbent
            },
            x: None,
            objective: None,
            bound: open_bound,
            nodes,
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exact::int;
    use crate::solver::model::{IntRow, LinExpr};

    fn knapsack() -> IntegerProgram {
        // max 5a + 4b + 3c st 2a + 3b + c <= 5, 4a + b + 2c <= 11, 3a + 4b + 2c <= 8
        let mut ip = IntegerProgram::new(3);
        let mut obj = LinExpr::new();
        for (v, c) in [(0, -5), (1, -4), (2, -3)] {
            obj.add_var(v, &int(c));
        }
        ip.set_objective(&obj);
        for (coefs, rhs) in [([2, 3, 1], 5), ([4, 1, 2], 11), ([3, 4, 2], 8)] {
            let mut e = LinExpr::new();
            for (v, c) in coefs.iter().enumerate() {
                e.add_var(v, &int(*c));
            }
            ip.push(IntRow::at_most(&e, &int(rhs), None));
        }
        ip.upper = vec![10; 3];
        ip
    }

    fn brute(ip: &IntegerProgram) -> Option<i64> {
        let mut best = None;
        for a in 0..=10 {
            for b in 0..=10 {
                for c in 0..=10 {
                    let x = [a, b, c];
                    if ip.is_feasible(&x) {
                        let v = ip.value(&x);
                        best = Some(best.map_or(v, |bv: i64| bv.min(v)));
                    }
                }
            }
        }
        best
    }

    #[test]
    fn matches_enumeration_on_small_program() {
        let ip = knapsack();
        let r = branch_and_bound(&ip, &[], 10_000);
        assert_eq!(r.status, BbStatus::Optimal);
        assert_eq!(r.objective, brute(&ip));
    }

    #[test]
    fn proves_infeasibility() {
        let mut ip = IntegerProgram::new(1);
        ip.upper = vec![10];
        // 2x = 1 has no integer solution: 2x <= 1 and -2x <= -1
        ip.rows.push(IntRow {
            coefs: vec![(0, 2)],
            rhs: 1,
            family: None,
        });
        ip.rows.push(IntRow {
            coefs: vec![(0, -2)],
            rhs: -1,
            family: None,
        });
        let r = branch_and_bound(&ip, &[], 1000);
        assert_eq!(r.status, BbStatus::Infeasible);
    }

    #[test]
    fn node_cap_returns_incumbent() {
        let ip = knapsack();
        let r = branch_and_bound(&ip, &[vec![0, 0, 0]], 1);
        assert!(matches!(r.status, BbStatus::BestEffort | BbStatus::Optimal));
        assert!(r.objective.is_some());
        assert!(r.bound <= r.objective.unwrap() as f64);
    }

    #[test]
    fn node_cap_without_incumbent() {
        let ip = knapsack();
        let r = branch_and_bound(&ip, &[], 0);
        assert_eq!(r.status, BbStatus::NoIncumbent);
    }
}
