//! Non-dominated sorting over per-method metric ranks.

use serde::{Deserialize, Serialize};

/// Pareto fronts over methods: `fronts[0]` is the optimal front (indices
/// into the input rows), `front_of[i]` is the 1-based front of method i.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParetoReport {
    pub methods: Vec<String>,
    pub fronts: Vec<Vec<usize>>,
    pub front_of: Vec<usize>,
}

/// a dominates b iff a ≤ b on every metric and a < b on at least one
/// (ranks: lower is better).
fn dominates(a: &[f64], b: &[f64]) -> bool {
    let mut strictly = false;
    for (x, y) in a.iter().zip(b) {
        if x > y {
            return false;
        }
        if x < y {
            strictly = true;
        }
    }
    strictly
}

/// Iterative non-dominated sorting: front 1 is the non-dominated set,
/// removed and repeated.
pub fn pareto_rank(rows: &[(String, Vec<f64>)]) -> ParetoReport {
    let n = rows.len();
    if n > 0 {
        let width = rows[0].1.len();
        assert!(width > 0, "need at least one metric");
        assert!(
            rows.iter().all(|(_, m)| m.len() == width),
            "inconsistent metric count"
        );
        assert!(
            rows.iter().all(|(_, m)| m.iter().all(|v| v.is_finite())),
            "ranks must be finite"
        );
    }
    let mut front_of = vec![0usize; n];
    let mut fronts = Vec::new();
    let mut remaining: Vec<usize> = (0..n).collect();
    let mut front_idx = 0usize;
    while !remaining.is_empty() {
        front_idx += 1;
        let front: Vec<usize> = remaining
            .iter()
            .copied()
            .filter(|&i| {
                !remaining
                    .iter()
                    .any(|&j| j != i && dominates(&rows[j].1, &rows[i].1))
            })
            .collect();
        assert!(!front.is_empty(), "dominance cycle is impossible");
        for &i in &front {
            front_of[i] = front_idx;
        }
        remaining.retain(|i| !front.contains(i));
        fronts.push(front);
    }
    ParetoReport {
        methods: rows.iter().map(|(m, _)| m.clone()).collect(),
        fronts,
        front_of,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn row(name: &str, m: &[f64]) -> (String, Vec<f64>) {
        (name.to_string(), m.to_vec())
    }

    #[test]
    fn single_method_is_front_one() {
        let r = pareto_rank(&[row("only", &[3.0, 1.0])]);
        assert_eq!(r.fronts, vec![vec![0]]);
        assert_eq!(r.front_of, vec![1]);
    }

    #[test]
    fn dominated_method_drops_a_front() {
        let r = pareto_rank(&[row("a", &[1.0, 1.0]), row("b", &[2.0, 2.0])]);
        assert_eq!(r.front_of, vec![1, 2]);
        // Incomparable pair shares the front.
        let r = pareto_rank(&[row("a", &[1.0, 2.0]), row("b", &[2.0, 1.0])]);
        assert_eq!(r.front_of, vec![1, 1]);
    }

    /// Brute-force oracle: front index = 1 + max front of dominators.
    fn brute_force_fronts(rows: &[(String, Vec<f64>)]) -> Vec<usize> {
        let n = rows.len();
        let mut front = vec![0usize; n];
        let mut assigned = 0;
        let mut level = 0;
        while assigned < n {
            level += 1;
            let unassigned: Vec<usize> = (0..n).filter(|&i| front[i] == 0).collect();
            for &i in &unassigned {
                let dominated = unassigned
                    .iter()
                    .any(|&j| j != i && dominates(&rows[j].1, &rows[i].1));
                if !dominated {
                    front[i] = level;
                    assigned += 1;
                }
            }
        }
        front
    }

    #[test]
    fn random_instances_match_brute_force() {
        let mut rng = crate::rng::stream(1, "pareto");
        for _ in 0..200 {
            let n = rng.random_range(1..=12);
            let rows: Vec<(String, Vec<f64>)> = (0..n)
                .map(|i| {
                    (
                        format!("m{i}"),
                        (0..3).map(|_| rng.random_range(1..=6) as f64).collect(),
                    )
                })
                .collect();
            let got = pareto_rank(&rows);
            assert_eq!(got.front_of, brute_force_fronts(&rows));
            // Front-1 members are dominated by nobody.
            for &i in &got.fronts[0] {
                for j in 0..n {
                    assert!(!dominates(&rows[j].1, &rows[i].1) || i == j);
                }
            }
        }
    }
}
