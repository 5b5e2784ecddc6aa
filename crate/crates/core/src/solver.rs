//! Exact finite-horizon solver.
//!
//! With control penalized by the KL divergence from the passive dynamics,
//! the exponentiated value `z = exp(-phi / gamma)` obeys a linear backward
//! recursion: starting from `z_T = exp(U_T / gamma)` at the terminal step,
//!
//! ```text
//! z_t(s) = exp(U_t(s) / gamma) * sum_s' passive(s, s') * z_{t+1}(s')
//! ```
//!
//! and the optimal policy is the passive row reweighted by the next step's
//! desirability. Both are computed in log space so long horizons and extreme
//! utilities do not overflow intermediate products.

use crate::error::{Error, Result};
use crate::math::log_sum_exp;
use crate::model::{DesirabilityTable, Policy, TransitionMatrix, UtilitySchedule};
use crate::scalar::Real;

fn check_dims<T: Real>(passive: &TransitionMatrix<T>, utility: &UtilitySchedule<T>) -> Result<()> {
    if passive.n_states() != utility.n_states() {
        return Err(Error::DimensionMismatch(format!(
            "matrix has {} states but utilities have {}",
            passive.n_states(),
            utility.n_states()
        )));
    }
    Ok(())
}

/// Runs the backward desirability recursion over the whole horizon.
///
/// Fails with a numerical error if any resulting `z` is zero, infinite, or
/// NaN once mapped back out of log space (utilities too extreme for the
/// chosen `gamma`).
pub fn backward_z<T: Real>(
    passive: &TransitionMatrix<T>,
    utility: &UtilitySchedule<T>,
    gamma: T,
) -> Result<DesirabilityTable<T>> {
    check_dims(passive, utility)?;
    if !gamma.is_finite() || gamma <= T::zero() {
        return Err(Error::invalid(
            "solver",
            format!("gamma must be positive, got {gamma}"),
        ));
    }
    let horizon = utility.horizon();
    let n = passive.n_states();

    // Log of each passive entry, -inf marking forbidden transitions.
    let log_passive: Vec<Vec<T>> = (0..n)
        .map(|from| {
            passive
                .row(from)
                .iter()
                .map(|&p| {
                    if p > T::zero() {
                        p.ln()
                    } else {
                        T::neg_infinity()
                    }
                })
                .collect()
        })
        .collect();

    let mut log_z = vec![vec![T::zero(); n]; horizon];
    for (s, cell) in log_z[horizon - 1].iter_mut().enumerate() {
        *cell = utility.value(horizon - 1, s) / gamma;
    }
    let mut terms = vec![T::zero(); n];
    for t in (0..horizon - 1).rev() {
        for from in 0..n {
            for to in 0..n {
                terms[to] = log_passive[from][to] + log_z[t + 1][to];
            }
            log_z[t][from] = utility.value(t, from) / gamma + log_sum_exp(&terms);
        }
    }

    let z: Vec<Vec<T>> = log_z
        .into_iter()
        .map(|row| row.into_iter().map(|l| l.exp()).collect())
        .collect();
    DesirabilityTable::try_new(gamma, z)
}

/// Extracts the optimal policy from a solved desirability table.
///
/// Each step `t` reweights the passive rows by `z_{t+1}`:
///
/// ```text
/// policy_t(s, s') = passive(s, s') * z_{t+1}(s') / sum_r passive(s, r) * z_{t+1}(r)
/// ```
///
/// so transitions the passive dynamics forbid stay at exactly zero.
pub fn compute_policy<T: Real>(
    passive: &TransitionMatrix<T>,
    desirability: &DesirabilityTable<T>,
) -> Result<Policy<T>> {
    let n = passive.n_states();
    if n != desirability.n_states() {
        return Err(Error::DimensionMismatch(format!(
            "matrix has {} states but desirability has {}",
            n,
            desirability.n_states()
        )));
    }
    let horizon = desirability.horizon();
    let mut steps = Vec::with_capacity(horizon - 1);
    let mut terms = vec![T::neg_infinity(); n];
    for t in 0..horizon - 1 {
        let mut entries = vec![T::zero(); n * n];
        for from in 0..n {
            let row = passive.row(from);
            for to in 0..n {
                terms[to] = if row[to] > T::zero() {
                    row[to].ln() + desirability.z(t + 1, to).ln()
                } else {
                    T::neg_infinity()
                };
            }
            let denom = log_sum_exp(&terms);
            if !denom.is_finite() {
                return Err(Error::Numerical(format!(
                    "policy row {from} at step {t} has no usable mass (log normalizer {denom})"
                )));
            }
            for to in 0..n {
                if row[to] > T::zero() {
                    entries[from * n + to] = (terms[to] - denom).exp();
                }
            }
        }
        let rows = (0..n)
            .map(|i| entries[i * n..(i + 1) * n].to_vec())
            .collect();
        let matrix = TransitionMatrix::try_from_rows(rows)
            .map_err(|e| Error::Numerical(format!("policy step {t} is not stochastic: {e}")))?;
        steps.push(matrix);
    }
    Policy::try_new(steps)
}

/// Solves a dispatch problem end to end: desirability first, then the policy
/// it induces.
pub fn solve<T: Real>(
    passive: &TransitionMatrix<T>,
    utility: &UtilitySchedule<T>,
    gamma: T,
) -> Result<(DesirabilityTable<T>, Policy<T>)> {
    let desirability = backward_z(passive, utility, gamma)?;
    let policy = compute_policy(passive, &desirability)?;
    Ok((desirability, policy))
}
