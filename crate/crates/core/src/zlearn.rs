//! Model-free desirability learning from sampled passive trajectories.
//!
//! When only the uncontrolled behaviour of the loads is observable, the
//! desirability can still be learned without ever forming a model: each
//! passively sampled trajectory provides, at every step, an unbiased sample
//! `exp(U_t / gamma) * z_{t+1}(next state)` of the backward recursion's right
//! hand side, and a decaying-step-size average of those samples converges to
//! the exact solution. Trajectories may come from the true passive matrix or
//! from a noisy ensemble of estimates, one member picked per trajectory.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::ingest::NoisyEnsemble;
use crate::math::{sample_index, stream_seed};
use crate::model::UtilitySchedule;
use crate::model::{ControlConfig, DesirabilityTable, Policy, TransitionMatrix};
use crate::scalar::Real;
use crate::solver::compute_policy;

/// Where sampled trajectories come from: the true passive matrix, or a
/// noisy ensemble with one member drawn uniformly per trajectory.
#[derive(Debug, Clone, PartialEq)]
pub enum PassiveSource<T> {
    Clean(TransitionMatrix<T>),
    Ensemble(NoisyEnsemble<T>),
}

/// What kind of source a learning run used, in summary form.
#[derive(Debug, Clone, PartialEq)]
pub enum SourceKind {
    Clean,
    Ensemble { members: usize, sigma: f64 },
}

impl<T: Real> PassiveSource<T> {
    pub fn n_states(&self) -> usize {
        match self {
            PassiveSource::Clean(m) => m.n_states(),
            PassiveSource::Ensemble(e) => e.base().n_states(),
        }
    }

    /// The matrix the learned solution should be compared against: the true
    /// dynamics for a clean source, the shared base for an ensemble.
    pub fn reference_matrix(&self) -> &TransitionMatrix<T> {
        match self {
            PassiveSource::Clean(m) => m,
            PassiveSource::Ensemble(e) => e.base(),
        }
    }

    pub fn kind(&self) -> SourceKind {
        match self {
            PassiveSource::Clean(_) => SourceKind::Clean,
            PassiveSource::Ensemble(e) => SourceKind::Ensemble {
                members: e.len(),
                sigma: e.sigma(),
            },
        }
    }

    /// Samples one state trajectory of `horizon` steps. For an ensemble the
    /// member is drawn uniformly first and used for the whole trajectory.
    pub fn sample_trajectory<R: rand::Rng + ?Sized>(
        &self,
        horizon: usize,
        initial: usize,
        rng: &mut R,
    ) -> Vec<usize> {
        let matrix = match self {
            PassiveSource::Clean(m) => m,
            PassiveSource::Ensemble(e) => {
                let pick = rng.random_range(0..e.len());
                &e.members()[pick]
            }
        };
        sample_chain(matrix, initial, horizon, rng)
    }
}

/// Rolls a Markov chain forward, returning `horizon` states starting (and
/// including) `start`.
pub fn sample_chain<T: Real, R: rand::Rng + ?Sized>(
    matrix: &TransitionMatrix<T>,
    start: usize,
    horizon: usize,
    rng: &mut R,
) -> Vec<usize> {
    let mut states = Vec::with_capacity(horizon);
    let mut current = start;
    states.push(current);
    for _ in 1..horizon {
        current = sample_index(matrix.row(current), rng);
        states.push(current);
    }
    states
}

/// One stochastic-approximation update of a desirability estimate:
/// blends the old estimate with the sampled backup
/// `exp(utility / gamma) * z_next_observed` at step size `eta`.
pub fn z_update<T: Real>(z_prev: T, z_next_observed: T, utility: T, gamma: T, eta: T) -> T {
    (T::one() - eta) * z_prev + eta * (utility / gamma).exp() * z_next_observed
}

/// Result of a learning run.
#[derive(Debug, Clone, PartialEq)]
pub struct LearningRun<T> {
    /// Learned desirability over the full horizon; the terminal row is exact.
    pub z_hat: DesirabilityTable<T>,
    /// Trajectories consumed.
    pub iterations: u64,
    /// Whether the run stopped on the convergence threshold rather than the
    /// iteration cap.
    pub converged: bool,
    /// Per-iteration relative value error against the reference, one entry
    /// per non-terminal time step; empty when no reference was given.
    pub error_history: Vec<Vec<T>>,
    /// Per-iteration largest single-entry change of the estimate.
    pub delta_history: Vec<T>,
    pub config: ControlConfig<T>,
    pub source: SourceKind,
}

impl<T: Real> LearningRun<T> {
    /// First iteration (1-based) whose worst per-step error drops to
    /// `threshold` or below; `None` if it never does or no reference was set.
    pub fn iterations_to_error(&self, threshold: T) -> Option<u64> {
        for (i, errs) in self.error_history.iter().enumerate() {
            let worst = errs
                .iter()
                .copied()
                .fold(T::zero(), |a, b| if b > a { b } else { a });
            if worst <= threshold {
                return Some(i as u64 + 1);
            }
        }
        None
    }

    /// Policy induced by the learned desirability under the given passive
    /// dynamics.
    pub fn induced_policy(&self, passive: &TransitionMatrix<T>) -> Result<Policy<T>> {
        compute_policy(passive, &self.z_hat)
    }
}

/// Relative L1 error of estimated values against reference values for one
/// time slice: `sum_s |ref(s) - est(s)| / sum_s ref(s)`.
///
/// Fails when the reference mass is not positive, since the ratio would be
/// meaningless or divide by zero.
pub fn value_error<T: Real>(reference_phi: &[T], estimated_phi: &[T]) -> Result<T> {
    if reference_phi.len() != estimated_phi.len() {
        return Err(Error::DimensionMismatch(format!(
            "reference has {} states but estimate has {}",
            reference_phi.len(),
            estimated_phi.len()
        )));
    }
    let denom: T = reference_phi.iter().copied().sum();
    let denom_f = denom.to_f64().unwrap_or(f64::NAN);
    // NaN must fail this gate too, so the comparison stays affirmative.
    if denom_f.is_nan() || denom_f <= 0.0 {
        return Err(Error::NonPositiveDenominator(denom_f));
    }
    let num: T = reference_phi
        .iter()
        .zip(estimated_phi)
        .map(|(&r, &e)| (r - e).abs())
        .sum();
    Ok(num / denom)
}

/// Root-mean-square difference between two policies over all steps and
/// entries, a scalar summary of how far a learned policy is from an exact
/// one.
pub fn policy_rms_diff<T: Real>(a: &Policy<T>, b: &Policy<T>) -> Result<T> {
    if a.n_steps() != b.n_steps() || a.n_states() != b.n_states() {
        return Err(Error::DimensionMismatch(format!(
            "policies differ in shape: {} steps x {} states vs {} steps x {} states",
            a.n_steps(),
            a.n_states(),
            b.n_steps(),
            b.n_states()
        )));
    }
    let n = a.n_states();
    let mut sum_sq = T::zero();
    for t in 0..a.n_steps() {
        for from in 0..n {
            for to in 0..n {
                let d = a.step(t).entry(from, to) - b.step(t).entry(from, to);
                sum_sq += d * d;
            }
        }
    }
    let count = T::cast_usize(a.n_steps() * n * n);
    Ok((sum_sq / count).sqrt())
}

/// Learns the desirability from sampled passive trajectories.
///
/// Estimates start at one everywhere; the terminal row is pinned to its
/// exact value `exp(U_T / gamma)`. Iteration `k` (from 1) samples one full
/// trajectory, then updates every non-terminal step backward in time using
/// the estimate as it stood before this iteration's writes, at step size
/// `eta(k)`. The run stops when the largest single-entry change falls to
/// `convergence_eps` or below, or at `max_iterations`.
///
/// With a `reference` solution given, the per-step relative value error is
/// recorded after every iteration.
pub fn run_zlearning<T: Real>(
    source: &PassiveSource<T>,
    utility: &UtilitySchedule<T>,
    config: &ControlConfig<T>,
    reference: Option<&DesirabilityTable<T>>,
) -> Result<LearningRun<T>> {
    let n = source.n_states();
    config.validate(n)?;
    if utility.n_states() != n {
        return Err(Error::DimensionMismatch(format!(
            "matrix has {n} states but utilities have {}",
            utility.n_states()
        )));
    }
    if utility.horizon() != config.horizon_length {
        return Err(Error::DimensionMismatch(format!(
            "config horizon is {} but utilities span {}",
            config.horizon_length,
            utility.horizon()
        )));
    }
    let horizon = config.horizon_length;
    let gamma = config.gamma;

    // Reference values and their per-slice mass, checked before learning so
    // a degenerate reference fails fast instead of at the first iteration.
    let reference_phi: Option<Vec<Vec<T>>> = match reference {
        Some(table) => {
            if table.horizon() != horizon || table.n_states() != n {
                return Err(Error::DimensionMismatch(format!(
                    "reference is {} steps x {} states, expected {} x {}",
                    table.horizon(),
                    table.n_states(),
                    horizon,
                    n
                )));
            }
            let phi: Vec<Vec<T>> = (0..horizon)
                .map(|t| (0..n).map(|s| table.phi(t, s)).collect())
                .collect();
            for row in phi.iter().take(horizon - 1) {
                let denom: T = row.iter().copied().sum();
                let denom_f = denom.to_f64().unwrap_or(f64::NAN);
                if denom_f.is_nan() || denom_f <= 0.0 {
                    return Err(Error::NonPositiveDenominator(denom_f));
                }
            }
            Some(phi)
        }
        None => None,
    };

    let mut z_hat = vec![vec![T::one(); n]; horizon];
    for (s, cell) in z_hat[horizon - 1].iter_mut().enumerate() {
        let z = (utility.value(horizon - 1, s) / gamma).exp();
        if !z.is_finite() || z <= T::zero() {
            return Err(Error::Numerical(format!(
                "terminal desirability of state {s} is {z}; utility too extreme for gamma {gamma}"
            )));
        }
        *cell = z;
    }
    for t in 0..horizon - 1 {
        for s in 0..n {
            if !(utility.value(t, s) / gamma).exp().is_finite() {
                return Err(Error::Numerical(format!(
                    "utility at time {t}, state {s} overflows exp(U / gamma)"
                )));
            }
        }
    }

    let uniform = vec![T::cast(1.0 / n as f64); n];
    let initial_dist = config.initial_state_dist.as_deref().unwrap_or(&uniform);
    let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(config.rng_seed, 0));

    let mut error_history = Vec::new();
    let mut delta_history = Vec::new();
    let mut converged = false;
    let mut iterations = 0u64;
    // Next-step values observed this iteration, gathered before any write so
    // every update reads the estimate from the previous iteration.
    let mut observed_next = vec![T::zero(); horizon];

    for k in 1..=config.max_iterations {
        let start = sample_index(initial_dist, &mut rng);
        let trajectory = source.sample_trajectory(horizon, start, &mut rng);
        for t in 0..horizon - 1 {
            observed_next[t] = z_hat[t + 1][trajectory[t + 1]];
        }
        let eta = config.learning_rate.eta(k);
        let mut max_delta = T::zero();
        for t in (0..horizon - 1).rev() {
            let s = trajectory[t];
            let old = z_hat[t][s];
            let new = z_update(old, observed_next[t], utility.value(t, s), gamma, eta);
            if !new.is_finite() || new <= T::zero() {
                return Err(Error::Numerical(format!(
                    "desirability estimate at time {t}, state {s} became {new} at iteration {k}"
                )));
            }
            z_hat[t][s] = new;
            let delta = (new - old).abs();
            if delta > max_delta {
                max_delta = delta;
            }
        }
        iterations = k;
        delta_history.push(max_delta);
        if let Some(phi_ref) = &reference_phi {
            let mut errs = Vec::with_capacity(horizon - 1);
            for t in 0..horizon - 1 {
                let est: Vec<T> = z_hat[t]
                    .iter()
                    .map(|&z| crate::model::phi_from_z(z, gamma))
                    .collect();
                errs.push(value_error(&phi_ref[t], &est)?);
            }
            error_history.push(errs);
        }
        if max_delta <= config.convergence_eps {
            converged = true;
            break;
        }
    }

    let z_hat = DesirabilityTable::try_new(gamma, z_hat)?;
    Ok(LearningRun {
        z_hat,
        iterations,
        converged,
        error_history,
        delta_history,
        config: config.clone(),
        source: source.kind(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver::backward_z;
    use approx::assert_relative_eq;

    fn uniform2() -> TransitionMatrix<f64> {
        TransitionMatrix::try_from_rows(vec![vec![0.5, 0.5], vec![0.5, 0.5]]).unwrap()
    }

    #[test]
    fn single_update_blends_at_the_step_size() {
        // Halfway between old estimate 1 and backup exp(0) * 3 = 3.
        let updated = z_update(1.0, 3.0, 0.0, 1.0, 0.5);
        assert_relative_eq!(updated, 2.0, max_relative = 1e-15);
        // Utility enters through exp(U / gamma).
        let updated = z_update(1.0, 1.0, 2.0_f64.ln(), 1.0, 1.0);
        assert_relative_eq!(updated, 2.0, max_relative = 1e-15);
    }

    #[test]
    fn chains_start_where_told_and_respect_support() {
        let matrix = TransitionMatrix::try_from_rows(vec![
            vec![0.0, 1.0, 0.0],
            vec![0.0, 0.0, 1.0],
            vec![1.0, 0.0, 0.0],
        ])
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let path = sample_chain(&matrix, 0, 7, &mut rng);
        assert_eq!(path, vec![0, 1, 2, 0, 1, 2, 0]);
    }

    #[test]
    fn sampled_transitions_only_use_support() {
        let matrix = TransitionMatrix::try_from_rows(vec![
            vec![0.5, 0.5, 0.0],
            vec![0.0, 0.5, 0.5],
            vec![0.5, 0.0, 0.5],
        ])
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..200 {
            let path = sample_chain(&matrix, 0, 10, &mut rng);
            for w in path.windows(2) {
                assert!(
                    matrix.entry(w[0], w[1]) > 0.0,
                    "sampled forbidden move {w:?}"
                );
            }
        }
    }

    #[test]
    fn zero_utility_estimates_stay_at_one() {
        // z = 1 everywhere is the exact solution and also the initializer, so
        // every update blends 1 with exp(0) * 1: a fixed point.
        let utility = UtilitySchedule::from_fn(5, 2, |_, _| 0.0).unwrap();
        let mut config = ControlConfig::new(1.0, 5);
        config.max_iterations = 200;
        let run =
            run_zlearning(&PassiveSource::Clean(uniform2()), &utility, &config, None).unwrap();
        for t in 0..5 {
            for s in 0..2 {
                assert_relative_eq!(run.z_hat.z(t, s), 1.0, max_relative = 1e-14);
            }
        }
        // Every update changes nothing, so the first iteration already meets
        // a zero threshold.
        assert!(run.converged);
        assert_eq!(run.iterations, 1);
    }

    #[test]
    fn learning_approaches_the_exact_solution() {
        // Strictly negative utilities keep every reference value slice at
        // positive total mass, which the relative error requires.
        let passive =
            TransitionMatrix::try_from_rows(vec![vec![0.7, 0.3], vec![0.4, 0.6]]).unwrap();
        let utility = UtilitySchedule::from_fn(4, 2, |t, s| -0.1 - 0.2 * (t + s) as f64).unwrap();
        let exact = backward_z(&passive, &utility, 1.0).unwrap();
        let mut config = ControlConfig::new(1.0, 4);
        config.max_iterations = 40_000;
        config.rng_seed = 123;
        let run = run_zlearning(
            &PassiveSource::Clean(passive),
            &utility,
            &config,
            Some(&exact),
        )
        .unwrap();
        assert!(!run.converged);
        assert_eq!(run.iterations, 40_000);
        assert_eq!(run.error_history.len(), 40_000);
        for t in 0..3 {
            for s in 0..2 {
                assert_relative_eq!(run.z_hat.z(t, s), exact.z(t, s), max_relative = 0.05);
            }
        }
        // Error shrinks by an order of magnitude from start to finish.
        let worst = |errs: &Vec<f64>| errs.iter().copied().fold(0.0_f64, f64::max);
        assert!(
            worst(&run.error_history[run.error_history.len() - 1])
                < 0.5 * worst(&run.error_history[10])
        );
    }

    #[test]
    fn ensemble_and_clean_sources_share_the_terminal_row() {
        let base = TransitionMatrix::try_from_rows(vec![vec![0.6, 0.4], vec![0.3, 0.7]]).unwrap();
        let ensemble = crate::ingest::perturb_ensemble(&base, 5, 0.02, 9).unwrap();
        let utility = UtilitySchedule::from_fn(3, 2, |_, s| s as f64 * 0.5).unwrap();
        let mut config = ControlConfig::new(1.0, 3);
        config.max_iterations = 50;
        let run =
            run_zlearning(&PassiveSource::Ensemble(ensemble), &utility, &config, None).unwrap();
        assert_eq!(
            run.source,
            SourceKind::Ensemble {
                members: 5,
                sigma: 0.02
            }
        );
        assert_relative_eq!(run.z_hat.z(2, 0), 1.0, max_relative = 1e-14);
        assert_relative_eq!(run.z_hat.z(2, 1), 0.5_f64.exp(), max_relative = 1e-14);
    }

    #[test]
    fn relative_value_error_matches_hand_computation() {
        let err = value_error(&[1.0, 3.0], &[2.0, 3.0]).unwrap();
        assert_relative_eq!(err, 0.25, max_relative = 1e-15);
        assert!(matches!(
            value_error(&[0.0, 0.0], &[1.0, 1.0]),
            Err(Error::NonPositiveDenominator(_))
        ));
        assert!(matches!(
            value_error(&[1.0, -2.0], &[1.0, 1.0]),
            Err(Error::NonPositiveDenominator(_))
        ));
    }

    #[test]
    fn policy_rms_diff_is_zero_only_for_identical_policies() {
        let m = uniform2();
        let a = Policy::stationary(m.clone(), 3).unwrap();
        assert_eq!(policy_rms_diff(&a, &a).unwrap(), 0.0);
        let shifted =
            TransitionMatrix::try_from_rows(vec![vec![0.6, 0.4], vec![0.5, 0.5]]).unwrap();
        let b = Policy::stationary(shifted, 3).unwrap();
        let d = policy_rms_diff(&a, &b).unwrap();
        // Two entries differ by 0.1 in each of the 2 steps, 8 entries total:
        // sqrt(0.04 / 8).
        assert_relative_eq!(d, (0.04_f64 / 8.0).sqrt(), max_relative = 1e-12);
    }

    #[test]
    fn fixed_seed_reproduces_the_run() {
        let passive =
            TransitionMatrix::try_from_rows(vec![vec![0.7, 0.3], vec![0.4, 0.6]]).unwrap();
        let utility = UtilitySchedule::from_fn(4, 2, |_, s| s as f64 * 0.3).unwrap();
        let mut config = ControlConfig::new(1.0, 4);
        config.max_iterations = 500;
        config.rng_seed = 77;
        let a = run_zlearning(
            &PassiveSource::Clean(passive.clone()),
            &utility,
            &config,
            None,
        )
        .unwrap();
        let b = run_zlearning(
            &PassiveSource::Clean(passive.clone()),
            &utility,
            &config,
            None,
        )
        .unwrap();
        assert_eq!(a.z_hat, b.z_hat);
        config.rng_seed = 78;
        let c = run_zlearning(&PassiveSource::Clean(passive), &utility, &config, None).unwrap();
        assert_ne!(a.z_hat, c.z_hat);
    }

    #[test]
    fn iteration_cap_of_zero_returns_the_initializer() {
        let utility = UtilitySchedule::from_fn(3, 2, |_, s| s as f64).unwrap();
        let mut config = ControlConfig::new(1.0, 3);
        config.max_iterations = 0;
        let run =
            run_zlearning(&PassiveSource::Clean(uniform2()), &utility, &config, None).unwrap();
        assert_eq!(run.iterations, 0);
        assert!(!run.converged);
        assert!(run.delta_history.is_empty());
        assert_relative_eq!(run.z_hat.z(0, 0), 1.0);
        assert_relative_eq!(run.z_hat.z(2, 1), 1.0_f64.exp());
    }
}
