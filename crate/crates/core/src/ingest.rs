//! From raw power traces to Markov models.
//!
//! The passive dynamics of a load population are not given analytically; they
//! are estimated from what the loads do when left alone. This module carries
//! a measured (or synthesized) power trace through discretization into state
//! sequences and counts transitions into a row-stochastic matrix. It also
//! builds noisy matrix ensembles that stand in for the estimation error of
//! individual aggregators.

use chrono::NaiveDateTime;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::math::stream_seed;
use crate::model::{StateSpace, TransitionMatrix};
use crate::scalar::Real;

/// Time-stamped aggregate power readings, optionally tagged with the season
/// they were recorded in.
///
/// Invariants: nonempty, timestamps strictly increasing, readings finite and
/// nonnegative.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerTrace<T> {
    timestamps: Vec<NaiveDateTime>,
    power_kw: Vec<T>,
    season: Option<String>,
}

impl<T: Real> PowerTrace<T> {
    pub fn try_new(
        timestamps: Vec<NaiveDateTime>,
        power_kw: Vec<T>,
        season: Option<String>,
    ) -> Result<Self> {
        if timestamps.is_empty() {
            return Err(Error::EmptyTrace);
        }
        if timestamps.len() != power_kw.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} timestamps but {} power readings",
                timestamps.len(),
                power_kw.len()
            )));
        }
        for w in timestamps.windows(2) {
            if w[1] <= w[0] {
                return Err(Error::invalid(
                    "power trace",
                    format!(
                        "timestamps must be strictly increasing, got {} then {}",
                        w[0], w[1]
                    ),
                ));
            }
        }
        for (i, &p) in power_kw.iter().enumerate() {
            if !p.is_finite() || p < T::zero() {
                return Err(Error::invalid(
                    "power trace",
                    format!("reading {i} is {p}; power must be finite and nonnegative"),
                ));
            }
        }
        Ok(Self {
            timestamps,
            power_kw,
            season,
        })
    }

    pub fn len(&self) -> usize {
        self.power_kw.len()
    }

    pub fn is_empty(&self) -> bool {
        self.power_kw.is_empty()
    }

    pub fn timestamps(&self) -> &[NaiveDateTime] {
        &self.timestamps
    }

    pub fn power_kw(&self) -> &[T] {
        &self.power_kw
    }

    pub fn season(&self) -> Option<&str> {
        self.season.as_deref()
    }

    /// Keeps only readings with `from <= timestamp <= to`.
    pub fn filter_date_range(&self, from: NaiveDateTime, to: NaiveDateTime) -> Result<Self> {
        if to < from {
            return Err(Error::invalid(
                "date range",
                format!("range end {to} is before start {from}"),
            ));
        }
        let mut timestamps = Vec::new();
        let mut power = Vec::new();
        for (ts, &p) in self.timestamps.iter().zip(&self.power_kw) {
            if *ts >= from && *ts <= to {
                timestamps.push(*ts);
                power.push(p);
            }
        }
        Self::try_new(timestamps, power, self.season.clone())
    }
}

/// Sums independently jittered copies of a base trace, one per house.
///
/// House `h` draws its own generator from `(seed, h)` and scales every base
/// reading by `1 + noise_frac * u` with `u` uniform on `[-1, 1]`, clamped at
/// zero. The result is an aggregate neighborhood trace on the same
/// timestamps.
pub fn synthesize_neighborhood<T: Real>(
    base: &PowerTrace<T>,
    n_houses: usize,
    noise_frac: f64,
    seed: u64,
) -> Result<PowerTrace<T>> {
    if n_houses == 0 {
        return Err(Error::invalid(
            "synthesis",
            "needs at least one house".to_string(),
        ));
    }
    if !(0.0..=1.0).contains(&noise_frac) {
        return Err(Error::invalid(
            "synthesis",
            format!("noise fraction must be in [0, 1], got {noise_frac}"),
        ));
    }
    let mut total = vec![0.0_f64; base.len()];
    for house in 0..n_houses {
        let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(seed, house as u64));
        for (slot, &p) in total.iter_mut().zip(base.power_kw()) {
            let u = 2.0 * rand::Rng::random::<f64>(&mut rng) - 1.0;
            let factor = (1.0 + noise_frac * u).max(0.0);
            *slot += p.to_f64().unwrap_or(0.0) * factor;
        }
    }
    let power = total.into_iter().map(T::cast).collect();
    PowerTrace::try_new(
        base.timestamps().to_vec(),
        power,
        base.season().map(str::to_owned),
    )
}

/// Bins a trace into state indices over `n_states` equal-width bins spanning
/// the trace's own min..max range.
///
/// Returns the state sequence together with the space that defines it. A
/// constant trace has no width to bin and is rejected.
pub fn discretize<T: Real>(
    trace: &PowerTrace<T>,
    n_states: usize,
) -> Result<(Vec<usize>, StateSpace<T>)> {
    if trace.is_empty() {
        return Err(Error::EmptyTrace);
    }
    let mut lo = T::infinity();
    let mut hi = T::neg_infinity();
    for &p in trace.power_kw() {
        if p < lo {
            lo = p;
        }
        if p > hi {
            hi = p;
        }
    }
    if hi <= lo {
        return Err(Error::ConstantTrace);
    }
    let space = StateSpace::equal_width(lo, hi, n_states)?;
    let states = trace
        .power_kw()
        .iter()
        .map(|&p| space.bin_index(p))
        .collect();
    Ok((states, space))
}

/// Estimates a row-stochastic transition matrix from a state sequence by
/// counting consecutive pairs.
///
/// `smoothing` is an additive pseudo-count applied to every target of a row
/// that was visited at least once; rows of states the sequence never leaves
/// from become self-loops, so the matrix stays well defined without
/// inventing transitions for unseen states.
pub fn estimate_matrix<T: Real>(
    states: &[usize],
    n_states: usize,
    smoothing: T,
) -> Result<TransitionMatrix<T>> {
    if n_states < 2 {
        return Err(Error::invalid(
            "estimation",
            format!("needs at least 2 states, got {n_states}"),
        ));
    }
    if states.len() < 2 {
        return Err(Error::invalid(
            "estimation",
            format!(
                "needs at least 2 observations to count a transition, got {}",
                states.len()
            ),
        ));
    }
    if !smoothing.is_finite() || smoothing < T::zero() {
        return Err(Error::invalid(
            "estimation",
            format!("smoothing must be nonnegative, got {smoothing}"),
        ));
    }
    for (i, &s) in states.iter().enumerate() {
        if s >= n_states {
            return Err(Error::invalid(
                "estimation",
                format!("state {s} at position {i} is out of range for {n_states} states"),
            ));
        }
    }
    let mut counts = vec![0u64; n_states * n_states];
    for w in states.windows(2) {
        counts[w[0] * n_states + w[1]] += 1;
    }
    let mut entries = vec![T::zero(); n_states * n_states];
    for from in 0..n_states {
        let row = &counts[from * n_states..(from + 1) * n_states];
        let total: u64 = row.iter().sum();
        if total == 0 {
            entries[from * n_states + from] = T::one();
            continue;
        }
        let denom = T::cast(total as f64) + smoothing * T::cast_usize(n_states);
        for to in 0..n_states {
            entries[from * n_states + to] = (T::cast(row[to] as f64) + smoothing) / denom;
        }
    }
    // Exact by construction up to rounding; surface anything worse.
    TransitionMatrix::try_from_rows(
        (0..n_states)
            .map(|i| entries[i * n_states..(i + 1) * n_states].to_vec())
            .collect(),
    )
}

/// A base passive matrix together with independently perturbed copies, as
/// seen by aggregators that each estimated the dynamics from noisy data.
///
/// Invariants: at least one member, every member shaped like the base and
/// supported by it (no transitions the base forbids), and the member mean
/// close to the base: within `3 sigma / sqrt(N)` per entry.
#[derive(Debug, Clone, PartialEq)]
pub struct NoisyEnsemble<T> {
    base: TransitionMatrix<T>,
    members: Vec<TransitionMatrix<T>>,
    sigma: f64,
    rng_seed: u64,
}

impl<T: Real> NoisyEnsemble<T> {
    pub fn try_new(
        base: TransitionMatrix<T>,
        members: Vec<TransitionMatrix<T>>,
        sigma: f64,
        rng_seed: u64,
    ) -> Result<Self> {
        if members.is_empty() {
            return Err(Error::invalid(
                "ensemble",
                "needs at least one member".to_string(),
            ));
        }
        if !sigma.is_finite() || sigma < 0.0 {
            return Err(Error::invalid(
                "ensemble",
                format!("noise scale must be nonnegative, got {sigma}"),
            ));
        }
        let n = base.n_states();
        for (i, m) in members.iter().enumerate() {
            if m.n_states() != n {
                return Err(Error::DimensionMismatch(format!(
                    "ensemble member {i} has {} states, expected {n}",
                    m.n_states()
                )));
            }
            if !base.supports(m) {
                return Err(Error::invalid(
                    "ensemble",
                    format!("member {i} uses a transition the base matrix forbids"),
                ));
            }
        }
        // Averaging N independent perturbations of scale sigma leaves a
        // residual of order sigma / sqrt(N) per entry; 3x that is the gate.
        let tol = 3.0 * sigma / (members.len() as f64).sqrt() + 1e-12;
        let inv_n = 1.0 / members.len() as f64;
        for from in 0..n {
            for to in 0..n {
                let mean: f64 = members
                    .iter()
                    .map(|m| m.entry(from, to).to_f64().unwrap_or(f64::NAN))
                    .sum::<f64>()
                    * inv_n;
                let b = base.entry(from, to).to_f64().unwrap_or(f64::NAN);
                let deviation = (mean - b).abs();
                // A NaN deviation must fail the gate as well.
                if deviation.is_nan() || deviation > tol {
                    return Err(Error::invalid(
                        "ensemble",
                        format!(
                            "member mean at ({from}, {to}) is {mean}, further than {tol} from base {b}"
                        ),
                    ));
                }
            }
        }
        Ok(Self {
            base,
            members,
            sigma,
            rng_seed,
        })
    }

    pub fn base(&self) -> &TransitionMatrix<T> {
        &self.base
    }

    pub fn members(&self) -> &[TransitionMatrix<T>] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn rng_seed(&self) -> u64 {
        self.rng_seed
    }
}

/// Builds `n_members` noisy copies of a base matrix.
///
/// Per member and row, Gaussian noise of scale `sigma` is added to the
/// entries in the row's support and recentred to sum to zero, so the row
/// still sums to one before clipping; entries are then clipped to `[0, 1]`
/// and the row renormalized. Zero entries stay zero, and rows whose support
/// is a single state cannot absorb noise and pass through unchanged. With
/// `sigma = 0` every member is an exact copy of the base.
pub fn perturb_ensemble<T: Real>(
    base: &TransitionMatrix<T>,
    n_members: usize,
    sigma: f64,
    seed: u64,
) -> Result<NoisyEnsemble<T>> {
    if n_members == 0 {
        return Err(Error::invalid(
            "ensemble",
            "needs at least one member".to_string(),
        ));
    }
    if !sigma.is_finite() || sigma < 0.0 {
        return Err(Error::invalid(
            "ensemble",
            format!("noise scale must be nonnegative, got {sigma}"),
        ));
    }
    let n = base.n_states();
    let mut members = Vec::with_capacity(n_members);
    if sigma == 0.0 {
        members = vec![base.clone(); n_members];
        return NoisyEnsemble::try_new(base.clone(), members, sigma, seed);
    }
    let normal = Normal::new(0.0, sigma).expect("positive finite sigma");
    for member in 0..n_members {
        let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(seed, member as u64));
        let mut entries = vec![T::zero(); n * n];
        for from in 0..n {
            let row = base.row(from);
            let support: Vec<usize> = (0..n).filter(|&to| row[to] > T::zero()).collect();
            if support.len() < 2 {
                entries[from * n..(from + 1) * n].copy_from_slice(row);
                continue;
            }
            let mut noise: Vec<f64> = support.iter().map(|_| normal.sample(&mut rng)).collect();
            let mean = noise.iter().sum::<f64>() / noise.len() as f64;
            for d in &mut noise {
                *d -= mean;
            }
            let mut perturbed: Vec<f64> = support
                .iter()
                .zip(&noise)
                .map(|(&to, d)| (row[to].to_f64().unwrap_or(0.0) + d).clamp(0.0, 1.0))
                .collect();
            let total: f64 = perturbed.iter().sum();
            if total <= 0.0 {
                // Clipping erased the whole row; fall back to the base row.
                entries[from * n..(from + 1) * n].copy_from_slice(row);
                continue;
            }
            for p in &mut perturbed {
                *p /= total;
            }
            for (&to, &p) in support.iter().zip(&perturbed) {
                entries[from * n + to] = T::cast(p);
            }
        }
        let rows = (0..n)
            .map(|i| entries[i * n..(i + 1) * n].to_vec())
            .collect();
        members.push(TransitionMatrix::try_from_rows(rows).map_err(|e| {
            Error::Numerical(format!("perturbed member {member} is not stochastic: {e}"))
        })?);
    }
    NoisyEnsemble::try_new(base.clone(), members, sigma, seed)
}
