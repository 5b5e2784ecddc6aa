//! Brute-force reference solver, independent of the production code paths.
//!
//! Instead of the linear desirability recursion, this solver attacks the
//! control problem head on: at every backward step it minimizes the
//! one-step objective
//!
//! ```text
//! phi_t(s) = -U_t(s) + min_P [ gamma * KL(P || passive_s) + E_P[ phi_{t+1} ] ]
//! ```
//!
//! by exhaustive search over a simplex grid of the controlled distribution
//! `P`, restricted to the support of the passive row. Values carry an
//! O(1/resolution) discretization error; the argument of the minimum is the
//! oracle policy. Deliberately slow and simple, usable only on tiny
//! instances.

pub struct OracleSolution {
    /// Value per time step and state.
    pub phi: Vec<Vec<f64>>,
    /// Minimizing distribution per step and source state, `[t][from][to]`.
    pub policy: Vec<Vec<Vec<f64>>>,
}

/// Grid-search cost minimization over distributions on a support of size
/// `w.len()`: each candidate assigns counts summing to `resolution`, and
/// costs `gamma * sum p ln p + sum p * w` with `p = count / resolution`.
/// Returns the minimal cost and the counts achieving it.
fn minimize_on_grid(
    plogp: &[f64],
    gamma: f64,
    w: &[f64],
    resolution: usize,
) -> Result<(f64, Vec<usize>), String> {
    let r = resolution;
    let rf = r as f64;
    match w.len() {
        1 => Ok((gamma * plogp[r] + w[0], vec![r])),
        2 => {
            let a: Vec<f64> = (0..=r)
                .map(|i| gamma * plogp[i] + i as f64 / rf * w[0])
                .collect();
            let b: Vec<f64> = (0..=r)
                .map(|j| gamma * plogp[j] + j as f64 / rf * w[1])
                .collect();
            let mut best = (f64::INFINITY, 0);
            for i in 0..=r {
                let cost = a[i] + b[r - i];
                if cost < best.0 {
                    best = (cost, i);
                }
            }
            Ok((best.0, vec![best.1, r - best.1]))
        }
        3 => {
            let a: Vec<f64> = (0..=r)
                .map(|i| gamma * plogp[i] + i as f64 / rf * w[0])
                .collect();
            let b: Vec<f64> = (0..=r)
                .map(|j| gamma * plogp[j] + j as f64 / rf * w[1])
                .collect();
            let c: Vec<f64> = (0..=r)
                .map(|k| gamma * plogp[k] + k as f64 / rf * w[2])
                .collect();
            let mut best = (f64::INFINITY, 0, 0);
            for i in 0..=r {
                let ai = a[i];
                for j in 0..=r - i {
                    let cost = ai + b[j] + c[r - i - j];
                    if cost < best.0 {
                        best = (cost, i, j);
                    }
                }
            }
            Ok((best.0, vec![best.1, best.2, r - best.1 - best.2]))
        }
        k => Err(format!(
            "oracle grid search supports at most 3-wide rows, got {k}"
        )),
    }
}

/// Solves a dispatch instance by exhaustive grid search.
///
/// `passive` is a row-stochastic matrix as nested rows, `utility` one row
/// per time step (terminal included). Guards keep the search tractable:
/// 2 to 4 states, horizon 2 to 4, per-row support of at most 3, resolution
/// between 10 and 10000.
pub fn bellman_oracle(
    passive: &[Vec<f64>],
    utility: &[Vec<f64>],
    gamma: f64,
    resolution: usize,
) -> Result<OracleSolution, String> {
    let n = passive.len();
    let horizon = utility.len();
    if !(2..=4).contains(&n) {
        return Err(format!("oracle handles 2 to 4 states, got {n}"));
    }
    if !(2..=4).contains(&horizon) {
        return Err(format!("oracle handles horizons 2 to 4, got {horizon}"));
    }
    if !(10..=10_000).contains(&resolution) {
        return Err(format!(
            "oracle resolution must be in [10, 10000], got {resolution}"
        ));
    }
    if !(gamma.is_finite() && gamma > 0.0) {
        return Err(format!("gamma must be positive, got {gamma}"));
    }
    for (i, row) in passive.iter().enumerate() {
        if row.len() != n {
            return Err(format!(
                "passive row {i} has {} entries, expected {n}",
                row.len()
            ));
        }
        let sum: f64 = row.iter().sum();
        if (sum - 1.0).abs() > 1e-9 || row.iter().any(|&p| !(0.0..=1.0).contains(&p)) {
            return Err(format!("passive row {i} is not a distribution"));
        }
    }
    for (t, row) in utility.iter().enumerate() {
        if row.len() != n {
            return Err(format!(
                "utility row {t} has {} entries, expected {n}",
                row.len()
            ));
        }
    }

    let r = resolution;
    let rf = r as f64;
    // p ln p at every grid point, with the 0 ln 0 = 0 convention.
    let plogp: Vec<f64> = (0..=r)
        .map(|i| {
            if i == 0 {
                0.0
            } else {
                let p = i as f64 / rf;
                p * p.ln()
            }
        })
        .collect();

    let mut phi = vec![vec![0.0; n]; horizon];
    for s in 0..n {
        phi[horizon - 1][s] = -utility[horizon - 1][s];
    }
    let mut policy = vec![vec![vec![0.0; n]; n]; horizon - 1];

    for t in (0..horizon - 1).rev() {
        for from in 0..n {
            let support: Vec<usize> = (0..n).filter(|&to| passive[from][to] > 0.0).collect();
            let w: Vec<f64> = support
                .iter()
                .map(|&to| phi[t + 1][to] - gamma * passive[from][to].ln())
                .collect();
            let (best_cost, counts) = minimize_on_grid(&plogp, gamma, &w, r)?;
            phi[t][from] = -utility[t][from] + best_cost;
            for (&to, &count) in support.iter().zip(&counts) {
                policy[t][from][to] = count as f64 / rf;
            }
        }
    }
    Ok(OracleSolution { phi, policy })
}
