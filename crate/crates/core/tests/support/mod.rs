//! Shared fixtures and random-instance generators for the acceptance suite.

// Every test binary compiles this module separately and uses its own
// slice of it.
#![allow(dead_code)]

pub mod oracle;

use chrono::{NaiveDate, NaiveDateTime};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use zdispatch_core::ingest::{discretize, estimate_matrix, synthesize_neighborhood, PowerTrace};
use zdispatch_core::model::{StateSpace, TransitionMatrix, UtilitySchedule};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random row-stochastic matrix with full support: every entry at least
/// 0.2 before normalization, so no row is close to degenerate.
pub fn random_dense_matrix(n: usize, rng: &mut ChaCha8Rng) -> TransitionMatrix<f64> {
    let rows = (0..n)
        .map(|_| {
            let raw: Vec<f64> = (0..n).map(|_| 0.2 + rng.random::<f64>()).collect();
            let sum: f64 = raw.iter().sum();
            raw.into_iter().map(|x| x / sum).collect()
        })
        .collect();
    TransitionMatrix::try_from_rows(rows).unwrap()
}

/// Random utilities drawn uniformly from `[lo, hi]`.
pub fn random_utility(
    horizon: usize,
    n: usize,
    lo: f64,
    hi: f64,
    rng: &mut ChaCha8Rng,
) -> UtilitySchedule<f64> {
    let values = (0..horizon)
        .map(|_| (0..n).map(|_| rng.random_range(lo..hi)).collect())
        .collect();
    UtilitySchedule::try_new(values).unwrap()
}

/// Random point on the probability simplex (normalized exponential draws).
pub fn random_simplex(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let raw: Vec<f64> = (0..n)
        .map(|_| -rng.random::<f64>().max(1e-12).ln())
        .collect();
    let sum: f64 = raw.iter().sum();
    raw.into_iter().map(|x| x / sum).collect()
}

/// Fixed 4-state, 5-step learning instance. Utilities are strictly negative
/// so every value slice has positive total mass and relative value errors
/// are well defined.
pub fn four_state_instance() -> (TransitionMatrix<f64>, UtilitySchedule<f64>, f64) {
    let matrix = TransitionMatrix::try_from_rows(vec![
        vec![0.6, 0.3, 0.1, 0.0],
        vec![0.2, 0.5, 0.2, 0.1],
        vec![0.1, 0.2, 0.5, 0.2],
        vec![0.0, 0.1, 0.3, 0.6],
    ])
    .unwrap();
    let utility =
        UtilitySchedule::from_fn(5, 4, |t, s| -0.15 * (s + 1) as f64 - 0.05 * t as f64).unwrap();
    (matrix, utility, 1.0)
}

fn quarter_hour_stamps(days: usize) -> Vec<NaiveDateTime> {
    let start = NaiveDate::from_ymd_opt(2021, 6, 1)
        .unwrap()
        .and_hms_opt(0, 0, 0)
        .unwrap();
    (0..days * 96)
        .map(|i| start + chrono::Duration::minutes(15 * i as i64))
        .collect()
}

/// One household's uncontrolled consumption: a daily sinusoid with a faster
/// harmonic, between roughly 0.2 and 2.3 kW, sampled every 15 minutes.
pub fn household_base_trace(days: usize) -> PowerTrace<f64> {
    let stamps = quarter_hour_stamps(days);
    let power = (0..stamps.len())
        .map(|i| {
            let day_frac = (i % 96) as f64 / 96.0;
            let daily = (2.0 * std::f64::consts::PI * day_frac).sin();
            let fast = (6.0 * std::f64::consts::PI * day_frac).sin();
            1.25 + 0.9 * daily + 0.15 * fast
        })
        .collect();
    PowerTrace::try_new(stamps, power, Some("summer".to_string())).unwrap()
}

/// A 12-state dispatch instance derived end to end from synthetic data: a
/// 100-house neighborhood with 20% per-house noise, discretized to 12 power
/// bins, passive dynamics estimated with light smoothing, and a 10-step
/// price-shaped utility (negative: consumption costs more when the price
/// peaks).
pub struct SyntheticNeighborhood {
    pub matrix: TransitionMatrix<f64>,
    pub space: StateSpace<f64>,
    pub utility: UtilitySchedule<f64>,
    pub gamma: f64,
}

pub fn synthetic_neighborhood() -> SyntheticNeighborhood {
    let base = household_base_trace(14);
    let aggregate = synthesize_neighborhood(&base, 100, 0.2, 2021).unwrap();
    let (states, space) = discretize(&aggregate, 12).unwrap();
    let matrix = estimate_matrix(&states, 12, 0.1).unwrap();
    let peak = space.rated_power().last().copied().unwrap();
    let price = [0.2, 0.3, 0.5, 0.9, 1.0, 0.9, 0.6, 0.4, 0.3, 0.2];
    let utility =
        UtilitySchedule::from_fn(10, 12, |t, s| -price[t] * space.rated_power()[s] / peak).unwrap();
    SyntheticNeighborhood {
        matrix,
        space,
        utility,
        gamma: 1.0,
    }
}
