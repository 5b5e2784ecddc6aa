//! Domain types for finite-state load ensembles under KL-regularized control.
//!
//! A load population is abstracted as a finite-state Markov chain over power
//! bins. Uncontrolled behaviour is a row-stochastic passive transition matrix;
//! a controller reshapes it into a time-indexed policy. Preferences over
//! states are utilities `U_t`, and the solved representation is the
//! desirability `z_t = exp(-phi_t / gamma)` where `phi_t` is the value
//! (expected cost-to-go) of a state at time `t`.

use crate::error::{Error, MatrixViolation, Result};
use crate::scalar::Real;

/// Discretization of a continuous power range into `n` bins.
///
/// Invariants: `n >= 2`, `bin_edges` has `n + 1` strictly increasing finite
/// entries, and `rated_power[i]` lies inside bin `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct StateSpace<T> {
    bin_edges: Vec<T>,
    rated_power: Vec<T>,
}

impl<T: Real> StateSpace<T> {
    pub fn try_new(bin_edges: Vec<T>, rated_power: Vec<T>) -> Result<Self> {
        if bin_edges.len() < 3 {
            return Err(Error::invalid(
                "state space",
                format!(
                    "needs at least 2 bins, got {}",
                    bin_edges.len().saturating_sub(1)
                ),
            ));
        }
        if rated_power.len() + 1 != bin_edges.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} bin edges require {} rated powers, got {}",
                bin_edges.len(),
                bin_edges.len() - 1,
                rated_power.len()
            )));
        }
        for edge in &bin_edges {
            if !edge.is_finite() {
                return Err(Error::invalid(
                    "state space",
                    format!("non-finite bin edge {edge}"),
                ));
            }
        }
        for w in bin_edges.windows(2) {
            if w[1] <= w[0] {
                return Err(Error::invalid(
                    "state space",
                    format!(
                        "bin edges must be strictly increasing, got {} then {}",
                        w[0], w[1]
                    ),
                ));
            }
        }
        for (i, &p) in rated_power.iter().enumerate() {
            if !p.is_finite() || p < bin_edges[i] || p > bin_edges[i + 1] {
                return Err(Error::invalid(
                    "state space",
                    format!(
                        "rated power {p} of state {i} outside its bin [{}, {}]",
                        bin_edges[i],
                        bin_edges[i + 1]
                    ),
                ));
            }
        }
        Ok(Self {
            bin_edges,
            rated_power,
        })
    }

    /// Splits `[lo, hi]` into `n` equal-width bins rated at their midpoints.
    pub fn equal_width(lo: T, hi: T, n: usize) -> Result<Self> {
        if !lo.is_finite() || !hi.is_finite() || hi <= lo {
            return Err(Error::invalid(
                "state space",
                format!("power range [{lo}, {hi}] must be finite and increasing"),
            ));
        }
        if n < 2 {
            return Err(Error::invalid(
                "state space",
                format!("needs at least 2 bins, got {n}"),
            ));
        }
        let width = (hi - lo) / T::cast_usize(n);
        let edges: Vec<T> = (0..=n)
            .map(|i| {
                if i == n {
                    hi
                } else {
                    lo + width * T::cast_usize(i)
                }
            })
            .collect();
        let rated: Vec<T> = (0..n)
            .map(|i| (edges[i] + edges[i + 1]) / T::cast(2.0))
            .collect();
        Self::try_new(edges, rated)
    }

    pub fn n_states(&self) -> usize {
        self.rated_power.len()
    }

    pub fn bin_edges(&self) -> &[T] {
        &self.bin_edges
    }

    pub fn rated_power(&self) -> &[T] {
        &self.rated_power
    }

    /// Maps a power reading to its bin. Readings below the first edge clamp
    /// to state 0; the top edge and anything above it map to the last state.
    pub fn bin_index(&self, power: T) -> usize {
        let n = self.n_states();
        let below_or_at = self.bin_edges.partition_point(|&e| e <= power);
        below_or_at.saturating_sub(1).min(n - 1)
    }
}

/// Row-stochastic transition matrix stored row-major by source state:
/// `entry(from, to)` is the probability of moving `from -> to` in one step.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionMatrix<T> {
    n: usize,
    entries: Vec<T>,
}

impl<T: Real> TransitionMatrix<T> {
    /// Checks raw rows for the stochastic-matrix invariants and reports the
    /// first violation: ragged shape, an entry outside `[0, 1]`, or a row sum
    /// off one by more than the scalar's tolerance.
    pub fn validate_rows(rows: &[Vec<T>]) -> std::result::Result<(), MatrixViolation> {
        let n = rows.len();
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(MatrixViolation::RaggedRow {
                    rows: n,
                    row: i,
                    cols: row.len(),
                });
            }
        }
        for (i, row) in rows.iter().enumerate() {
            for (j, &p) in row.iter().enumerate() {
                if !p.is_finite() || p < T::zero() || p > T::one() {
                    return Err(MatrixViolation::EntryOutOfRange {
                        row: i,
                        col: j,
                        value: p.to_f64().unwrap_or(f64::NAN),
                    });
                }
            }
            let sum: T = row.iter().copied().sum();
            if (sum - T::one()).abs() > T::ROW_SUM_TOL {
                return Err(MatrixViolation::RowSum {
                    row: i,
                    sum: sum.to_f64().unwrap_or(f64::NAN),
                });
            }
        }
        Ok(())
    }

    pub fn try_from_rows(rows: Vec<Vec<T>>) -> Result<Self> {
        if rows.len() < 2 {
            return Err(Error::invalid(
                "transition matrix",
                format!("needs at least 2 states, got {}", rows.len()),
            ));
        }
        Self::validate_rows(&rows)?;
        let n = rows.len();
        let entries = rows.into_iter().flatten().collect();
        Ok(Self { n, entries })
    }

    pub fn identity(n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::invalid(
                "transition matrix",
                format!("needs at least 2 states, got {n}"),
            ));
        }
        let mut entries = vec![T::zero(); n * n];
        for i in 0..n {
            entries[i * n + i] = T::one();
        }
        Ok(Self { n, entries })
    }

    pub fn n_states(&self) -> usize {
        self.n
    }

    pub fn row(&self, from: usize) -> &[T] {
        &self.entries[from * self.n..(from + 1) * self.n]
    }

    pub fn entry(&self, from: usize, to: usize) -> T {
        self.entries[from * self.n + to]
    }

    pub fn to_rows(&self) -> Vec<Vec<T>> {
        (0..self.n).map(|i| self.row(i).to_vec()).collect()
    }

    /// True when every positive entry of `other` is also positive here, so
    /// anything `other` can do has nonzero probability under `self`.
    pub fn supports(&self, other: &Self) -> bool {
        self.n == other.n
            && self
                .entries
                .iter()
                .zip(&other.entries)
                .all(|(&base, &p)| p <= T::zero() || base > T::zero())
    }
}

/// State utilities for each time step `t = 0 .. horizon - 1`, terminal step
/// included. Higher utility means a more desirable state.
#[derive(Debug, Clone, PartialEq)]
pub struct UtilitySchedule<T> {
    n: usize,
    values: Vec<Vec<T>>,
}

impl<T: Real> UtilitySchedule<T> {
    pub fn try_new(values: Vec<Vec<T>>) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::invalid(
                "utility schedule",
                format!("horizon must be at least 2 steps, got {}", values.len()),
            ));
        }
        let n = values[0].len();
        if n == 0 {
            return Err(Error::invalid(
                "utility schedule",
                "empty utility row".to_string(),
            ));
        }
        for (t, row) in values.iter().enumerate() {
            if row.len() != n {
                return Err(Error::DimensionMismatch(format!(
                    "utility row {t} has {} states, expected {n}",
                    row.len()
                )));
            }
            for (s, &u) in row.iter().enumerate() {
                if !u.is_finite() {
                    return Err(Error::invalid(
                        "utility schedule",
                        format!("non-finite utility {u} at time {t}, state {s}"),
                    ));
                }
            }
        }
        Ok(Self { n, values })
    }

    pub fn from_fn(horizon: usize, n_states: usize, f: impl Fn(usize, usize) -> T) -> Result<Self> {
        let values = (0..horizon)
            .map(|t| (0..n_states).map(|s| f(t, s)).collect())
            .collect();
        Self::try_new(values)
    }

    pub fn horizon(&self) -> usize {
        self.values.len()
    }

    pub fn n_states(&self) -> usize {
        self.n
    }

    pub fn value(&self, t: usize, state: usize) -> T {
        self.values[t][state]
    }

    pub fn row(&self, t: usize) -> &[T] {
        &self.values[t]
    }

    pub fn to_rows(&self) -> Vec<Vec<T>> {
        self.values.clone()
    }
}

/// Converts a desirability into the value it encodes: `phi = -gamma ln z`.
pub fn phi_from_z<T: Real>(z: T, gamma: T) -> T {
    -gamma * z.ln()
}

/// Converts a value into its desirability: `z = exp(-phi / gamma)`.
pub fn z_from_phi<T: Real>(phi: T, gamma: T) -> T {
    (-phi / gamma).exp()
}

/// Desirability `z_t` for every time step and state, together with the
/// temperature `gamma` that ties it to values.
///
/// Invariants: `gamma > 0`, every `z` finite and strictly positive, at least
/// two time steps, rectangular shape.
#[derive(Debug, Clone, PartialEq)]
pub struct DesirabilityTable<T> {
    gamma: T,
    n: usize,
    z: Vec<Vec<T>>,
}

impl<T: Real> DesirabilityTable<T> {
    pub fn try_new(gamma: T, z: Vec<Vec<T>>) -> Result<Self> {
        if !gamma.is_finite() || gamma <= T::zero() {
            return Err(Error::invalid(
                "desirability table",
                format!("gamma must be positive, got {gamma}"),
            ));
        }
        if z.len() < 2 {
            return Err(Error::invalid(
                "desirability table",
                format!("horizon must be at least 2 steps, got {}", z.len()),
            ));
        }
        let n = z[0].len();
        if n == 0 {
            return Err(Error::invalid(
                "desirability table",
                "empty desirability row".to_string(),
            ));
        }
        for (t, row) in z.iter().enumerate() {
            if row.len() != n {
                return Err(Error::DimensionMismatch(format!(
                    "desirability row {t} has {} states, expected {n}",
                    row.len()
                )));
            }
            for (s, &v) in row.iter().enumerate() {
                if !v.is_finite() || v <= T::zero() {
                    return Err(Error::Numerical(format!(
                        "desirability at time {t}, state {s} is {v}; must be finite and positive"
                    )));
                }
            }
        }
        Ok(Self { gamma, n, z })
    }

    pub fn gamma(&self) -> T {
        self.gamma
    }

    pub fn horizon(&self) -> usize {
        self.z.len()
    }

    pub fn n_states(&self) -> usize {
        self.n
    }

    pub fn z(&self, t: usize, state: usize) -> T {
        self.z[t][state]
    }

    pub fn row(&self, t: usize) -> &[T] {
        &self.z[t]
    }

    pub fn to_rows(&self) -> Vec<Vec<T>> {
        self.z.clone()
    }

    pub fn phi(&self, t: usize, state: usize) -> T {
        phi_from_z(self.z[t][state], self.gamma)
    }

    pub fn to_value_table(&self) -> ValueTable<T> {
        let phi = self
            .z
            .iter()
            .map(|row| row.iter().map(|&z| phi_from_z(z, self.gamma)).collect())
            .collect();
        ValueTable { n: self.n, phi }
    }
}

/// Value (expected cost-to-go) `phi_t` per time step and state.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueTable<T> {
    n: usize,
    phi: Vec<Vec<T>>,
}

impl<T: Real> ValueTable<T> {
    pub fn try_new(phi: Vec<Vec<T>>) -> Result<Self> {
        if phi.len() < 2 {
            return Err(Error::invalid(
                "value table",
                format!("horizon must be at least 2 steps, got {}", phi.len()),
            ));
        }
        let n = phi[0].len();
        if n == 0 {
            return Err(Error::invalid("value table", "empty value row".to_string()));
        }
        for (t, row) in phi.iter().enumerate() {
            if row.len() != n {
                return Err(Error::DimensionMismatch(format!(
                    "value row {t} has {} states, expected {n}",
                    row.len()
                )));
            }
            for (s, &v) in row.iter().enumerate() {
                if !v.is_finite() {
                    return Err(Error::invalid(
                        "value table",
                        format!("non-finite value {v} at time {t}, state {s}"),
                    ));
                }
            }
        }
        Ok(Self { n, phi })
    }

    pub fn horizon(&self) -> usize {
        self.phi.len()
    }

    pub fn n_states(&self) -> usize {
        self.n
    }

    pub fn phi(&self, t: usize, state: usize) -> T {
        self.phi[t][state]
    }

    pub fn row(&self, t: usize) -> &[T] {
        &self.phi[t]
    }

    pub fn to_rows(&self) -> Vec<Vec<T>> {
        self.phi.clone()
    }

    pub fn to_desirability(&self, gamma: T) -> Result<DesirabilityTable<T>> {
        let z = self
            .phi
            .iter()
            .map(|row| row.iter().map(|&p| z_from_phi(p, gamma)).collect())
            .collect();
        DesirabilityTable::try_new(gamma, z)
    }
}

/// Time-indexed control policy: one transition matrix per step, so a policy
/// spanning a horizon of `H` steps holds `H - 1` matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct Policy<T> {
    steps: Vec<TransitionMatrix<T>>,
}

impl<T: Real> Policy<T> {
    pub fn try_new(steps: Vec<TransitionMatrix<T>>) -> Result<Self> {
        if steps.is_empty() {
            return Err(Error::invalid(
                "policy",
                "needs at least one step".to_string(),
            ));
        }
        let n = steps[0].n_states();
        for (t, m) in steps.iter().enumerate() {
            if m.n_states() != n {
                return Err(Error::DimensionMismatch(format!(
                    "policy step {t} has {} states, expected {n}",
                    m.n_states()
                )));
            }
        }
        Ok(Self { steps })
    }

    /// Repeats one matrix over a whole horizon, e.g. to treat the passive
    /// dynamics themselves as a (do-nothing) policy.
    pub fn stationary(matrix: TransitionMatrix<T>, horizon: usize) -> Result<Self> {
        if horizon < 2 {
            return Err(Error::invalid(
                "policy",
                format!("horizon must be at least 2 steps, got {horizon}"),
            ));
        }
        Ok(Self {
            steps: vec![matrix; horizon - 1],
        })
    }

    pub fn n_steps(&self) -> usize {
        self.steps.len()
    }

    pub fn horizon(&self) -> usize {
        self.steps.len() + 1
    }

    pub fn n_states(&self) -> usize {
        self.steps[0].n_states()
    }

    pub fn step(&self, t: usize) -> &TransitionMatrix<T> {
        &self.steps[t]
    }

    pub fn steps(&self) -> &[TransitionMatrix<T>] {
        &self.steps
    }

    /// True when every transition the policy uses is possible under the
    /// passive dynamics, which keeps its control cost finite.
    pub fn is_supported_by(&self, passive: &TransitionMatrix<T>) -> bool {
        self.steps.iter().all(|m| passive.supports(m))
    }
}

/// State occupancy distribution for each time step of a horizon.
///
/// Invariant: every row is a probability vector (nonnegative, sums to one
/// within the scalar's tolerance).
#[derive(Debug, Clone, PartialEq)]
pub struct OccupancyTrajectory<T> {
    n: usize,
    rows: Vec<Vec<T>>,
}

impl<T: Real> OccupancyTrajectory<T> {
    pub fn try_new(rows: Vec<Vec<T>>) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::invalid(
                "occupancy trajectory",
                "no rows".to_string(),
            ));
        }
        let n = rows[0].len();
        if n == 0 {
            return Err(Error::invalid(
                "occupancy trajectory",
                "empty occupancy row".to_string(),
            ));
        }
        for (t, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(Error::DimensionMismatch(format!(
                    "occupancy row {t} has {} states, expected {n}",
                    row.len()
                )));
            }
            let mut sum = T::zero();
            for &p in row {
                if !p.is_finite() || p < T::zero() {
                    return Err(Error::invalid(
                        "occupancy trajectory",
                        format!("occupancy row {t} has invalid probability {p}"),
                    ));
                }
                sum += p;
            }
            if (sum - T::one()).abs() > T::ROW_SUM_TOL {
                return Err(Error::invalid(
                    "occupancy trajectory",
                    format!("occupancy row {t} sums to {sum}"),
                ));
            }
        }
        Ok(Self { n, rows })
    }

    pub fn horizon(&self) -> usize {
        self.rows.len()
    }

    pub fn n_states(&self) -> usize {
        self.n
    }

    pub fn row(&self, t: usize) -> &[T] {
        &self.rows[t]
    }

    pub fn to_rows(&self) -> Vec<Vec<T>> {
        self.rows.clone()
    }
}

/// Step-size schedule for stochastic approximation updates.
///
/// The harmonic form `scale / (scale + k)` satisfies the usual convergence
/// conditions: the step sizes sum to infinity while their squares sum to a
/// finite value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LearningRate<T> {
    Harmonic { scale: T },
}

impl<T: Real> LearningRate<T> {
    pub fn validate(&self) -> Result<()> {
        match self {
            LearningRate::Harmonic { scale } => {
                if !scale.is_finite() || *scale <= T::zero() {
                    return Err(Error::invalid(
                        "learning rate",
                        format!("harmonic scale must be positive, got {scale}"),
                    ));
                }
            }
        }
        Ok(())
    }

    /// Step size for iteration `k`, counted from 1.
    pub fn eta(&self, k: u64) -> T {
        match self {
            LearningRate::Harmonic { scale } => {
                let k = T::cast(k as f64);
                *scale / (*scale + k)
            }
        }
    }
}

impl<T: Real> Default for LearningRate<T> {
    fn default() -> Self {
        LearningRate::Harmonic {
            scale: T::cast(1000.0),
        }
    }
}

/// Everything a solve or learning run needs besides the dynamics and
/// utilities themselves.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlConfig<T> {
    /// Temperature weighting the control cost against utility.
    pub gamma: T,
    /// Number of time steps including the terminal one.
    pub horizon_length: usize,
    /// Learning stops once the largest single-entry update falls below this.
    pub convergence_eps: T,
    pub learning_rate: LearningRate<T>,
    /// Upper bound on learning iterations (trajectories).
    pub max_iterations: u64,
    pub rng_seed: u64,
    /// Start-state distribution for sampled trajectories; uniform if absent.
    pub initial_state_dist: Option<Vec<T>>,
}

impl<T: Real> ControlConfig<T> {
    pub fn new(gamma: T, horizon_length: usize) -> Self {
        Self {
            gamma,
            horizon_length,
            convergence_eps: T::zero(),
            learning_rate: LearningRate::default(),
            max_iterations: 10_000,
            rng_seed: 0,
            initial_state_dist: None,
        }
    }

    pub fn validate(&self, n_states: usize) -> Result<()> {
        if !self.gamma.is_finite() || self.gamma <= T::zero() {
            return Err(Error::invalid(
                "config",
                format!("gamma must be positive, got {}", self.gamma),
            ));
        }
        if self.horizon_length < 2 {
            return Err(Error::invalid(
                "config",
                format!(
                    "horizon must be at least 2 steps, got {}",
                    self.horizon_length
                ),
            ));
        }
        if !self.convergence_eps.is_finite() || self.convergence_eps < T::zero() {
            return Err(Error::invalid(
                "config",
                format!(
                    "convergence threshold must be nonnegative, got {}",
                    self.convergence_eps
                ),
            ));
        }
        self.learning_rate.validate()?;
        if let Some(dist) = &self.initial_state_dist {
            if dist.len() != n_states {
                return Err(Error::DimensionMismatch(format!(
                    "initial distribution has {} states, expected {n_states}",
                    dist.len()
                )));
            }
            let mut sum = T::zero();
            for &p in dist {
                if !p.is_finite() || p < T::zero() {
                    return Err(Error::invalid(
                        "config",
                        format!("initial distribution has invalid probability {p}"),
                    ));
                }
                sum += p;
            }
            if (sum - T::one()).abs() > T::ROW_SUM_TOL {
                return Err(Error::invalid(
                    "config",
                    format!("initial distribution sums to {sum}"),
                ));
            }
        }
        Ok(())
    }
}
