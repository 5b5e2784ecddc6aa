//! Ensemble-level consequences of a policy.
//!
//! A policy acts on a population, not an individual load, so dispatch
//! quantities live on occupancy distributions: how much probability mass
//! sits in each power bin at each time. This module pushes an initial
//! occupancy through a policy, converts occupancies to expected aggregate
//! power, and scores a policy by its control objective: accumulated KL
//! divergence from the passive dynamics, weighted by `gamma`, minus the
//! utility collected along the way. Lower is better.

use crate::error::{Error, Result};
use crate::model::{OccupancyTrajectory, Policy, StateSpace, TransitionMatrix, UtilitySchedule};
use crate::scalar::Real;

fn check_initial<T: Real>(initial: &[T], n: usize) -> Result<()> {
    if initial.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "initial occupancy has {} states, expected {n}",
            initial.len()
        )));
    }
    let mut sum = T::zero();
    for &p in initial {
        if !p.is_finite() || p < T::zero() {
            return Err(Error::invalid(
                "initial occupancy",
                format!("invalid probability {p}"),
            ));
        }
        sum += p;
    }
    if (sum - T::one()).abs() > T::ROW_SUM_TOL {
        return Err(Error::invalid(
            "initial occupancy",
            format!("initial occupancy sums to {sum}"),
        ));
    }
    Ok(())
}

/// Pushes an initial occupancy forward through every policy step, returning
/// one distribution per time step of the horizon.
pub fn propagate_occupancy<T: Real>(
    initial: &[T],
    policy: &Policy<T>,
) -> Result<OccupancyTrajectory<T>> {
    let n = policy.n_states();
    check_initial(initial, n)?;
    let mut rows = Vec::with_capacity(policy.horizon());
    rows.push(initial.to_vec());
    for t in 0..policy.n_steps() {
        let current = &rows[t];
        let step = policy.step(t);
        let mut next = vec![T::zero(); n];
        for (from, &mass) in current.iter().enumerate() {
            if mass <= T::zero() {
                continue;
            }
            let row = step.row(from);
            for to in 0..n {
                next[to] += mass * row[to];
            }
        }
        rows.push(next);
    }
    OccupancyTrajectory::try_new(rows)
}

/// Expected aggregate power of one occupancy distribution: each state
/// contributes its rated power weighted by its probability mass.
pub fn expected_power<T: Real>(occupancy: &[T], space: &StateSpace<T>) -> Result<T> {
    if occupancy.len() != space.n_states() {
        return Err(Error::DimensionMismatch(format!(
            "occupancy has {} states but the state space has {}",
            occupancy.len(),
            space.n_states()
        )));
    }
    Ok(occupancy
        .iter()
        .zip(space.rated_power())
        .map(|(&p, &w)| p * w)
        .sum())
}

/// Expected power at every time step of an occupancy trajectory.
pub fn power_profile<T: Real>(
    trajectory: &OccupancyTrajectory<T>,
    space: &StateSpace<T>,
) -> Result<Vec<T>> {
    (0..trajectory.horizon())
        .map(|t| expected_power(trajectory.row(t), space))
        .collect()
}

/// KL divergence of one policy row from the matching passive row, with the
/// convention `0 ln 0 = 0`. A positive policy entry over a forbidden passive
/// transition makes the divergence infinite and is reported as an error.
fn row_kl<T: Real>(t: usize, from: usize, policy_row: &[T], passive_row: &[T]) -> Result<T> {
    let mut kl = T::zero();
    for (to, (&p, &q)) in policy_row.iter().zip(passive_row).enumerate() {
        if p <= T::zero() {
            continue;
        }
        if q <= T::zero() {
            return Err(Error::InfiniteKl {
                t,
                from,
                to,
                prob: p.to_f64().unwrap_or(f64::NAN),
            });
        }
        kl += p * (p / q).ln();
    }
    Ok(kl)
}

/// Scores a policy on the dispatch objective:
///
/// ```text
/// J = sum_t [ gamma * E_rho_t[ KL(policy_t || passive) ] - E_rho_{t+1}[ U_{t+1} ] ]
/// ```
///
/// where the occupancies `rho` are what the policy itself induces from
/// `initial`. The sum runs over every transition step; utility at the start
/// state is sunk cost and does not enter.
pub fn evaluate_objective<T: Real>(
    policy: &Policy<T>,
    passive: &TransitionMatrix<T>,
    utility: &UtilitySchedule<T>,
    gamma: T,
    initial: &[T],
) -> Result<T> {
    let n = passive.n_states();
    if policy.n_states() != n {
        return Err(Error::DimensionMismatch(format!(
            "policy has {} states but the passive matrix has {n}",
            policy.n_states()
        )));
    }
    if utility.n_states() != n {
        return Err(Error::DimensionMismatch(format!(
            "utilities have {} states but the passive matrix has {n}",
            utility.n_states()
        )));
    }
    if utility.horizon() != policy.horizon() {
        return Err(Error::DimensionMismatch(format!(
            "policy spans {} steps but utilities span {}",
            policy.horizon(),
            utility.horizon()
        )));
    }
    if !gamma.is_finite() || gamma <= T::zero() {
        return Err(Error::invalid(
            "objective",
            format!("gamma must be positive, got {gamma}"),
        ));
    }
    let occupancy = propagate_occupancy(initial, policy)?;
    let mut objective = T::zero();
    for t in 0..policy.n_steps() {
        let rho = occupancy.row(t);
        let step = policy.step(t);
        let mut control = T::zero();
        for (from, &mass) in rho.iter().enumerate() {
            if mass <= T::zero() {
                continue;
            }
            control += mass * row_kl(t, from, step.row(from), passive.row(from))?;
        }
        let reward: T = occupancy
            .row(t + 1)
            .iter()
            .zip(utility.row(t + 1))
            .map(|(&p, &u)| p * u)
            .sum();
        objective += gamma * control - reward;
    }
    Ok(objective)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn uniform2() -> TransitionMatrix<f64> {
        TransitionMatrix::try_from_rows(vec![vec![0.5, 0.5], vec![0.5, 0.5]]).unwrap()
    }

    #[test]
    fn occupancy_spreads_under_uniform_dynamics() {
        let policy = Policy::stationary(uniform2(), 3).unwrap();
        let occ = propagate_occupancy(&[1.0, 0.0], &policy).unwrap();
        assert_eq!(occ.row(0), &[1.0, 0.0]);
        assert_eq!(occ.row(1), &[0.5, 0.5]);
        assert_eq!(occ.row(2), &[0.5, 0.5]);
    }

    #[test]
    fn identity_policy_freezes_occupancy() {
        let policy = Policy::stationary(TransitionMatrix::identity(3).unwrap(), 5).unwrap();
        let occ = propagate_occupancy(&[0.2, 0.3, 0.5], &policy).unwrap();
        for t in 0..5 {
            assert_eq!(occ.row(t), &[0.2, 0.3, 0.5]);
        }
    }

    #[test]
    fn expected_power_weights_rated_power_by_occupancy() {
        let space = StateSpace::try_new(vec![0.0, 150.0, 250.0], vec![100.0, 200.0]).unwrap();
        let p = expected_power(&[0.5, 0.5], &space).unwrap();
        assert_relative_eq!(p, 150.0, max_relative = 1e-15);
        let p = expected_power(&[1.0, 0.0], &space).unwrap();
        assert_relative_eq!(p, 100.0, max_relative = 1e-15);
    }

    #[test]
    fn passive_policy_with_zero_utility_scores_zero() {
        let passive =
            TransitionMatrix::try_from_rows(vec![vec![0.7, 0.3], vec![0.2, 0.8]]).unwrap();
        let policy = Policy::stationary(passive.clone(), 6).unwrap();
        let utility = UtilitySchedule::from_fn(6, 2, |_, _| 0.0).unwrap();
        let j = evaluate_objective(&policy, &passive, &utility, 1.5, &[0.5, 0.5]).unwrap();
        assert_relative_eq!(j, 0.0, epsilon = 1e-15);
    }

    #[test]
    fn objective_matches_hand_computation() {
        // One step from state 0: policy (0.25, 0.75) against passive
        // (0.5, 0.5), terminal utility (0, ln 2), gamma 1.
        let passive = uniform2();
        let policy = Policy::try_new(vec![TransitionMatrix::try_from_rows(vec![
            vec![0.25, 0.75],
            vec![0.25, 0.75],
        ])
        .unwrap()])
        .unwrap();
        let utility =
            UtilitySchedule::try_new(vec![vec![0.0, 0.0], vec![0.0, 2.0_f64.ln()]]).unwrap();
        let j = evaluate_objective(&policy, &passive, &utility, 1.0, &[1.0, 0.0]).unwrap();
        let kl = 0.25 * (0.25_f64 / 0.5).ln() + 0.75 * (0.75_f64 / 0.5).ln();
        let expected = kl - 0.75 * 2.0_f64.ln();
        assert_relative_eq!(j, expected, max_relative = 1e-14);

        // The passive dynamics used as a policy collect less utility.
        let lazy = Policy::stationary(passive.clone(), 2).unwrap();
        let j_lazy = evaluate_objective(&lazy, &passive, &utility, 1.0, &[1.0, 0.0]).unwrap();
        assert_relative_eq!(j_lazy, -0.5 * 2.0_f64.ln(), max_relative = 1e-14);
        assert!(j < j_lazy);
    }

    #[test]
    fn zero_policy_mass_skips_the_zero_log_zero_term() {
        let passive = uniform2();
        let policy = Policy::try_new(vec![TransitionMatrix::try_from_rows(vec![
            vec![1.0, 0.0],
            vec![0.0, 1.0],
        ])
        .unwrap()])
        .unwrap();
        let utility = UtilitySchedule::from_fn(2, 2, |_, _| 0.0).unwrap();
        // KL((1, 0) || (0.5, 0.5)) = ln 2 from the positive entry alone.
        let j = evaluate_objective(&policy, &passive, &utility, 1.0, &[1.0, 0.0]).unwrap();
        assert_relative_eq!(j, 2.0_f64.ln(), max_relative = 1e-14);
    }

    #[test]
    fn policy_off_the_passive_support_is_rejected() {
        let passive =
            TransitionMatrix::try_from_rows(vec![vec![1.0, 0.0], vec![0.5, 0.5]]).unwrap();
        let policy = Policy::try_new(vec![TransitionMatrix::try_from_rows(vec![
            vec![0.5, 0.5],
            vec![0.5, 0.5],
        ])
        .unwrap()])
        .unwrap();
        let utility = UtilitySchedule::from_fn(2, 2, |_, _| 0.0).unwrap();
        let err = evaluate_objective(&policy, &passive, &utility, 1.0, &[1.0, 0.0]).unwrap_err();
        assert!(matches!(
            err,
            Error::InfiniteKl {
                t: 0,
                from: 0,
                to: 1,
                ..
            }
        ));
    }

    #[test]
    fn occupancy_mass_outside_simplex_is_rejected() {
        let policy = Policy::stationary(uniform2(), 2).unwrap();
        assert!(propagate_occupancy(&[0.7, 0.7], &policy).is_err());
        assert!(propagate_occupancy(&[1.0], &policy).is_err());
    }
}
