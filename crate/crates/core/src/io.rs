//! On-disk formats: versioned JSON documents and plain CSV tables.
//!
//! JSON carries structured artifacts (matrices, policies, learning runs)
//! with an explicit `schema_version` so stale files fail loudly instead of
//! deserializing into nonsense. CSV carries tabular data people plot or
//! edit by hand: traces, utilities, solved values, learning error curves,
//! dispatch schedules. Time steps are 1-based in every CSV; state indices
//! are 0-based everywhere. All files use `f64`.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use chrono::NaiveDateTime;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::PowerTrace;
use crate::model::{
    DesirabilityTable, OccupancyTrajectory, Policy, StateSpace, TransitionMatrix, UtilitySchedule,
};
use crate::zlearn::{LearningRun, SourceKind};

/// Version written into (and required from) every JSON document.
pub const SCHEMA_VERSION: u32 = 1;

const TIMESTAMP_FORMATS: [&str; 2] = ["%Y-%m-%dT%H:%M:%S", "%Y-%m-%d %H:%M:%S"];

fn check_version(what: &'static str, found: u32) -> Result<()> {
    if found != SCHEMA_VERSION {
        return Err(Error::SchemaVersion {
            what,
            found,
            expected: SCHEMA_VERSION,
        });
    }
    Ok(())
}

fn to_pretty_json<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

/// Passive transition matrix plus the discretization it was estimated on.
///
/// `bin_edges` and `rated_power` are absent for matrices written by hand or
/// by tools that never saw physical power readings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatrixDocument {
    pub schema_version: u32,
    pub n_states: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub season: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bin_edges: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rated_power_kw: Option<Vec<f64>>,
    pub rows: Vec<Vec<f64>>,
}

impl MatrixDocument {
    pub fn new(
        matrix: &TransitionMatrix<f64>,
        space: Option<&StateSpace<f64>>,
        season: Option<String>,
    ) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            n_states: matrix.n_states(),
            season,
            bin_edges: space.map(|s| s.bin_edges().to_vec()),
            rated_power_kw: space.map(|s| s.rated_power().to_vec()),
            rows: matrix.to_rows(),
        }
    }

    pub fn to_matrix(&self) -> Result<TransitionMatrix<f64>> {
        check_version("matrix document", self.schema_version)?;
        if self.rows.len() != self.n_states {
            return Err(Error::invalid(
                "matrix document",
                format!(
                    "declares {} states but has {} rows",
                    self.n_states,
                    self.rows.len()
                ),
            ));
        }
        TransitionMatrix::try_from_rows(self.rows.clone())
    }

    /// The state space, if the document carries one. Both geometry fields
    /// must be present together.
    pub fn to_state_space(&self) -> Result<Option<StateSpace<f64>>> {
        check_version("matrix document", self.schema_version)?;
        match (&self.bin_edges, &self.rated_power_kw) {
            (Some(edges), Some(rated)) => {
                Ok(Some(StateSpace::try_new(edges.clone(), rated.clone())?))
            }
            (None, None) => Ok(None),
            _ => Err(Error::invalid(
                "matrix document",
                "bin_edges and rated_power_kw must be present together".to_string(),
            )),
        }
    }
}

/// Time-indexed policy: one row-stochastic matrix per transition step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicyDocument {
    pub schema_version: u32,
    pub n_states: usize,
    pub horizon_length: usize,
    pub steps: Vec<Vec<Vec<f64>>>,
}

impl PolicyDocument {
    pub fn new(policy: &Policy<f64>) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            n_states: policy.n_states(),
            horizon_length: policy.horizon(),
            steps: policy
                .steps()
                .iter()
                .map(TransitionMatrix::to_rows)
                .collect(),
        }
    }

    pub fn to_policy(&self) -> Result<Policy<f64>> {
        check_version("policy document", self.schema_version)?;
        if self.steps.len() + 1 != self.horizon_length {
            return Err(Error::invalid(
                "policy document",
                format!(
                    "declares a horizon of {} steps but has {} matrices",
                    self.horizon_length,
                    self.steps.len()
                ),
            ));
        }
        let steps = self
            .steps
            .iter()
            .map(|rows| TransitionMatrix::try_from_rows(rows.clone()))
            .collect::<Result<Vec<_>>>()?;
        let policy = Policy::try_new(steps)?;
        if policy.n_states() != self.n_states {
            return Err(Error::invalid(
                "policy document",
                format!(
                    "declares {} states but its matrices have {}",
                    self.n_states,
                    policy.n_states()
                ),
            ));
        }
        Ok(policy)
    }
}

/// How learning trajectories were generated, in a run summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SourceDocument {
    Clean,
    Ensemble { members: usize, sigma: f64 },
}

impl From<&SourceKind> for SourceDocument {
    fn from(kind: &SourceKind) -> Self {
        match kind {
            SourceKind::Clean => SourceDocument::Clean,
            SourceKind::Ensemble { members, sigma } => SourceDocument::Ensemble {
                members: *members,
                sigma: *sigma,
            },
        }
    }
}

/// Summary of a learning run: configuration, stopping state, the learned
/// desirability, and the final per-step relative value error when a
/// reference solution was available.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunDocument {
    pub schema_version: u32,
    pub gamma: f64,
    pub horizon_length: usize,
    pub n_states: usize,
    pub rng_seed: u64,
    pub iterations: u64,
    pub converged: bool,
    pub source: SourceDocument,
    pub z: Vec<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub final_error: Option<Vec<f64>>,
}

impl RunDocument {
    pub fn new(run: &LearningRun<f64>) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            gamma: run.z_hat.gamma(),
            horizon_length: run.z_hat.horizon(),
            n_states: run.z_hat.n_states(),
            rng_seed: run.config.rng_seed,
            iterations: run.iterations,
            converged: run.converged,
            source: SourceDocument::from(&run.source),
            z: run.z_hat.to_rows(),
            final_error: run.error_history.last().cloned(),
        }
    }

    pub fn to_desirability(&self) -> Result<DesirabilityTable<f64>> {
        check_version("run document", self.schema_version)?;
        DesirabilityTable::try_new(self.gamma, self.z.clone())
    }
}

/// Serializes any of the JSON documents with a stable field order and a
/// trailing newline, so an unchanged load-save cycle is byte-identical.
pub fn write_json<W: Write, T: Serialize>(mut writer: W, document: &T) -> Result<()> {
    writer.write_all(to_pretty_json(document)?.as_bytes())?;
    Ok(())
}

pub fn read_matrix_document<R: Read>(reader: R) -> Result<MatrixDocument> {
    let doc: MatrixDocument = serde_json::from_reader(reader)?;
    check_version("matrix document", doc.schema_version)?;
    Ok(doc)
}

pub fn read_policy_document<R: Read>(reader: R) -> Result<PolicyDocument> {
    let doc: PolicyDocument = serde_json::from_reader(reader)?;
    check_version("policy document", doc.schema_version)?;
    Ok(doc)
}

pub fn read_run_document<R: Read>(reader: R) -> Result<RunDocument> {
    let doc: RunDocument = serde_json::from_reader(reader)?;
    check_version("run document", doc.schema_version)?;
    Ok(doc)
}

pub fn load_matrix_document(path: &Path) -> Result<MatrixDocument> {
    read_matrix_document(BufReader::new(File::open(path)?))
}

pub fn load_policy_document(path: &Path) -> Result<PolicyDocument> {
    read_policy_document(BufReader::new(File::open(path)?))
}

pub fn load_run_document(path: &Path) -> Result<RunDocument> {
    read_run_document(BufReader::new(File::open(path)?))
}

pub fn save_json<T: Serialize>(path: &Path, document: &T) -> Result<()> {
    write_json(BufWriter::new(File::create(path)?), document)
}

fn parse_timestamp(s: &str) -> Result<NaiveDateTime> {
    for fmt in TIMESTAMP_FORMATS {
        if let Ok(ts) = NaiveDateTime::parse_from_str(s, fmt) {
            return Ok(ts);
        }
    }
    Err(Error::Parse(format!(
        "timestamp {s:?} matches neither {:?} nor {:?}",
        TIMESTAMP_FORMATS[0], TIMESTAMP_FORMATS[1]
    )))
}

fn parse_field<T: std::str::FromStr>(
    record_kind: &str,
    line: usize,
    name: &str,
    raw: &str,
) -> Result<T> {
    raw.trim().parse().map_err(|_| {
        Error::Parse(format!(
            "{record_kind} record {line}: cannot parse {name} from {raw:?}"
        ))
    })
}

fn expect_header(kind: &str, found: &csv::StringRecord, expected: &[&str]) -> Result<()> {
    let found: Vec<&str> = found.iter().map(str::trim).collect();
    if found != expected {
        return Err(Error::Parse(format!(
            "{kind} header is {found:?}, expected {expected:?}"
        )));
    }
    Ok(())
}

/// Reads a power trace from `timestamp,power_kw` CSV.
pub fn read_trace<R: Read>(reader: R, season: Option<String>) -> Result<PowerTrace<f64>> {
    let mut csv = csv::Reader::from_reader(reader);
    expect_header("trace", csv.headers()?, &["timestamp", "power_kw"])?;
    let mut timestamps = Vec::new();
    let mut power = Vec::new();
    for (i, record) in csv.records().enumerate() {
        let record = record?;
        if record.len() != 2 {
            return Err(Error::Parse(format!(
                "trace record {} has {} fields",
                i + 1,
                record.len()
            )));
        }
        timestamps.push(parse_timestamp(record[0].trim())?);
        power.push(parse_field("trace", i + 1, "power_kw", &record[1])?);
    }
    PowerTrace::try_new(timestamps, power, season)
}

/// Writes a power trace as `timestamp,power_kw` CSV with ISO timestamps.
pub fn write_trace<W: Write>(writer: W, trace: &PowerTrace<f64>) -> Result<()> {
    let mut csv = csv::Writer::from_writer(writer);
    csv.write_record(["timestamp", "power_kw"])?;
    for (ts, p) in trace.timestamps().iter().zip(trace.power_kw()) {
        csv.write_record([ts.format(TIMESTAMP_FORMATS[0]).to_string(), p.to_string()])?;
    }
    csv.flush()?;
    Ok(())
}

/// Reads a utility schedule from wide CSV: `t,u_0,...,u_{n-1}` with `t`
/// counted from 1 and rows in order.
pub fn read_utility<R: Read>(reader: R) -> Result<UtilitySchedule<f64>> {
    let mut csv = csv::Reader::from_reader(reader);
    let headers = csv.headers()?.clone();
    if headers.len() < 2 || headers.get(0).map(str::trim) != Some("t") {
        return Err(Error::Parse(format!(
            "utility header must be t,u_0,...; got {headers:?}"
        )));
    }
    let n = headers.len() - 1;
    for (s, name) in headers.iter().skip(1).enumerate() {
        let expected = format!("u_{s}");
        if name.trim() != expected {
            return Err(Error::Parse(format!(
                "utility header column {} is {name:?}, expected {expected:?}",
                s + 1
            )));
        }
    }
    let mut values = Vec::new();
    for (i, record) in csv.records().enumerate() {
        let record = record?;
        if record.len() != n + 1 {
            return Err(Error::Parse(format!(
                "utility record {} has {} fields, expected {}",
                i + 1,
                record.len(),
                n + 1
            )));
        }
        let t: usize = parse_field("utility", i + 1, "t", &record[0])?;
        if t != i + 1 {
            return Err(Error::Parse(format!(
                "utility record {} has t = {t}; steps must count from 1 in order",
                i + 1
            )));
        }
        let row = (0..n)
            .map(|s| parse_field("utility", i + 1, &format!("u_{s}"), &record[s + 1]))
            .collect::<Result<Vec<f64>>>()?;
        values.push(row);
    }
    UtilitySchedule::try_new(values)
}

/// Writes a utility schedule as wide CSV, `t` counted from 1.
pub fn write_utility<W: Write>(writer: W, utility: &UtilitySchedule<f64>) -> Result<()> {
    let mut csv = csv::Writer::from_writer(writer);
    let mut header = vec!["t".to_string()];
    header.extend((0..utility.n_states()).map(|s| format!("u_{s}")));
    csv.write_record(&header)?;
    for t in 0..utility.horizon() {
        let mut record = vec![(t + 1).to_string()];
        record.extend(utility.row(t).iter().map(f64::to_string));
        csv.write_record(&record)?;
    }
    csv.flush()?;
    Ok(())
}

/// Writes solved values in long form: `t,state,z,phi`, every combination of
/// 1-based time step and 0-based state.
pub fn write_values<W: Write>(writer: W, table: &DesirabilityTable<f64>) -> Result<()> {
    let mut csv = csv::Writer::from_writer(writer);
    csv.write_record(["t", "state", "z", "phi"])?;
    for t in 0..table.horizon() {
        for s in 0..table.n_states() {
            csv.write_record([
                (t + 1).to_string(),
                s.to_string(),
                table.z(t, s).to_string(),
                table.phi(t, s).to_string(),
            ])?;
        }
    }
    csv.flush()?;
    Ok(())
}

/// Reads solved values back, checking that every `(t, state)` cell is
/// present exactly once in row-major order and that the `phi` column agrees
/// with `-gamma ln z` for the given `gamma`.
pub fn read_values<R: Read>(reader: R, gamma: f64) -> Result<DesirabilityTable<f64>> {
    let mut csv = csv::Reader::from_reader(reader);
    expect_header("values", csv.headers()?, &["t", "state", "z", "phi"])?;
    let mut cells: Vec<(usize, usize, f64, f64)> = Vec::new();
    for (i, record) in csv.records().enumerate() {
        let record = record?;
        if record.len() != 4 {
            return Err(Error::Parse(format!(
                "values record {} has {} fields",
                i + 1,
                record.len()
            )));
        }
        let t: usize = parse_field("values", i + 1, "t", &record[0])?;
        let s: usize = parse_field("values", i + 1, "state", &record[1])?;
        let z: f64 = parse_field("values", i + 1, "z", &record[2])?;
        let phi: f64 = parse_field("values", i + 1, "phi", &record[3])?;
        if t == 0 {
            return Err(Error::Parse(format!(
                "values record {} has t = 0; steps count from 1",
                i + 1
            )));
        }
        cells.push((t - 1, s, z, phi));
    }
    if cells.is_empty() {
        return Err(Error::Parse("values file has no records".to_string()));
    }
    let horizon = cells.iter().map(|c| c.0).max().unwrap() + 1;
    let n = cells.iter().map(|c| c.1).max().unwrap() + 1;
    if cells.len() != horizon * n {
        return Err(Error::Parse(format!(
            "values file has {} records; a {horizon} x {n} grid needs {}",
            cells.len(),
            horizon * n
        )));
    }
    let mut z = vec![vec![f64::NAN; n]; horizon];
    for (i, (t, s, zv, phi)) in cells.into_iter().enumerate() {
        if (t, s) != (i / n, i % n) {
            return Err(Error::Parse(format!(
                "values record {} is (t = {}, state = {s}); expected row-major order",
                i + 1,
                t + 1
            )));
        }
        let recomputed = -gamma * zv.ln();
        if (phi - recomputed).abs() > 1e-9 * phi.abs().max(1.0) {
            return Err(Error::invalid(
                "values file",
                format!(
                    "record {}: phi = {phi} disagrees with -gamma ln z = {recomputed} for gamma = {gamma}",
                    i + 1
                ),
            ));
        }
        z[t][s] = zv;
    }
    DesirabilityTable::try_new(gamma, z)
}

/// Writes a learning error curve: one record per iteration with the largest
/// single-entry update and, when a reference was available, the relative
/// value error of each non-terminal step (`err_t1` is the first step).
pub fn write_error_curve<W: Write>(writer: W, run: &LearningRun<f64>) -> Result<()> {
    let mut csv = csv::Writer::from_writer(writer);
    let n_err = run.error_history.first().map_or(0, Vec::len);
    let mut header = vec!["iteration".to_string(), "max_delta".to_string()];
    header.extend((1..=n_err).map(|t| format!("err_t{t}")));
    csv.write_record(&header)?;
    for (i, delta) in run.delta_history.iter().enumerate() {
        let mut record = vec![(i + 1).to_string(), delta.to_string()];
        if let Some(errs) = run.error_history.get(i) {
            record.extend(errs.iter().map(f64::to_string));
        }
        csv.write_record(&record)?;
    }
    csv.flush()?;
    Ok(())
}

/// Writes a dispatch schedule: per 1-based time step, the expected aggregate
/// power and the full occupancy distribution.
pub fn write_dispatch<W: Write>(
    writer: W,
    trajectory: &OccupancyTrajectory<f64>,
    power: &[f64],
) -> Result<()> {
    if power.len() != trajectory.horizon() {
        return Err(Error::DimensionMismatch(format!(
            "{} power values for {} time steps",
            power.len(),
            trajectory.horizon()
        )));
    }
    let mut csv = csv::Writer::from_writer(writer);
    let mut header = vec!["t".to_string(), "expected_power_kw".to_string()];
    header.extend((0..trajectory.n_states()).map(|s| format!("rho_{s}")));
    csv.write_record(&header)?;
    for (t, p) in power.iter().enumerate() {
        let mut record = vec![(t + 1).to_string(), p.to_string()];
        record.extend(trajectory.row(t).iter().map(f64::to_string));
        csv.write_record(&record)?;
    }
    csv.flush()?;
    Ok(())
}

/// Reads an occupancy distribution from `state,rho` CSV; states must be
/// 0..n-1 in order.
pub fn read_occupancy<R: Read>(reader: R) -> Result<Vec<f64>> {
    let mut csv = csv::Reader::from_reader(reader);
    expect_header("occupancy", csv.headers()?, &["state", "rho"])?;
    let mut rho = Vec::new();
    for (i, record) in csv.records().enumerate() {
        let record = record?;
        if record.len() != 2 {
            return Err(Error::Parse(format!(
                "occupancy record {} has {} fields",
                i + 1,
                record.len()
            )));
        }
        let s: usize = parse_field("occupancy", i + 1, "state", &record[0])?;
        if s != i {
            return Err(Error::Parse(format!(
                "occupancy record {} is for state {s}; states must count from 0 in order",
                i + 1
            )));
        }
        rho.push(parse_field("occupancy", i + 1, "rho", &record[1])?);
    }
    if rho.is_empty() {
        return Err(Error::Parse("occupancy file has no records".to_string()));
    }
    Ok(rho)
}

/// Writes an occupancy distribution as `state,rho` CSV.
pub fn write_occupancy<W: Write>(writer: W, rho: &[f64]) -> Result<()> {
    let mut csv = csv::Writer::from_writer(writer);
    csv.write_record(["state", "rho"])?;
    for (s, p) in rho.iter().enumerate() {
        csv.write_record([s.to_string(), p.to_string()])?;
    }
    csv.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Policy;
    use approx::assert_relative_eq;
    use chrono::NaiveDate;

    fn sample_matrix() -> TransitionMatrix<f64> {
        TransitionMatrix::try_from_rows(vec![vec![0.25, 0.75], vec![0.5, 0.5]]).unwrap()
    }

    #[test]
    fn matrix_document_save_load_is_byte_identical() {
        let space = StateSpace::try_new(vec![0.0, 5.0, 10.0], vec![2.5, 7.5]).unwrap();
        let doc = MatrixDocument::new(&sample_matrix(), Some(&space), Some("summer".to_string()));
        let first = to_pretty_json(&doc).unwrap();
        let reloaded = read_matrix_document(first.as_bytes()).unwrap();
        let second = to_pretty_json(&reloaded).unwrap();
        assert_eq!(first, second);
        assert_eq!(reloaded.to_matrix().unwrap(), sample_matrix());
        assert_eq!(reloaded.to_state_space().unwrap().unwrap(), space);
    }

    #[test]
    fn wrong_schema_version_is_rejected() {
        let mut doc = MatrixDocument::new(&sample_matrix(), None, None);
        doc.schema_version = 2;
        let json = to_pretty_json(&doc).unwrap();
        let err = read_matrix_document(json.as_bytes()).unwrap_err();
        assert!(matches!(
            err,
            Error::SchemaVersion {
                found: 2,
                expected: 1,
                ..
            }
        ));
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let json =
            r#"{"schema_version": 1, "n_states": 2, "rows": [[1.0, 0.0], [0.0, 1.0]], "extra": 3}"#;
        assert!(read_matrix_document(json.as_bytes()).is_err());
    }

    #[test]
    fn policy_document_round_trips() {
        let policy = Policy::stationary(sample_matrix(), 4).unwrap();
        let doc = PolicyDocument::new(&policy);
        let json = to_pretty_json(&doc).unwrap();
        let back = read_policy_document(json.as_bytes())
            .unwrap()
            .to_policy()
            .unwrap();
        assert_eq!(back, policy);
    }

    #[test]
    fn trace_csv_round_trips_both_timestamp_formats() {
        let csv = "timestamp,power_kw\n2021-06-01T00:00:00,1.5\n2021-06-01 00:01:00,2.5\n";
        let trace = read_trace(csv.as_bytes(), Some("summer".to_string())).unwrap();
        assert_eq!(trace.len(), 2);
        assert_eq!(trace.power_kw(), &[1.5, 2.5]);
        assert_eq!(
            trace.timestamps()[1],
            NaiveDate::from_ymd_opt(2021, 6, 1)
                .unwrap()
                .and_hms_opt(0, 1, 0)
                .unwrap()
        );
        let mut out = Vec::new();
        write_trace(&mut out, &trace).unwrap();
        let expected = "timestamp,power_kw\n2021-06-01T00:00:00,1.5\n2021-06-01T00:01:00,2.5\n";
        assert_eq!(String::from_utf8(out).unwrap(), expected);
    }

    #[test]
    fn malformed_trace_rows_are_parse_errors() {
        let err = read_trace("timestamp,power_kw\nyesterday,1.0\n".as_bytes(), None).unwrap_err();
        assert!(matches!(err, Error::Parse(_)));
        let err = read_trace("time,power_kw\n".as_bytes(), None).unwrap_err();
        assert!(matches!(err, Error::Parse(_)));
    }

    #[test]
    fn utility_csv_round_trips() {
        let utility = UtilitySchedule::try_new(vec![vec![0.0, 1.5], vec![-2.0, 0.25]]).unwrap();
        let mut out = Vec::new();
        write_utility(&mut out, &utility).unwrap();
        assert_eq!(
            String::from_utf8(out.clone()).unwrap(),
            "t,u_0,u_1\n1,0,1.5\n2,-2,0.25\n"
        );
        let back = read_utility(out.as_slice()).unwrap();
        assert_eq!(back, utility);
    }

    #[test]
    fn utility_rows_must_count_from_one() {
        let err = read_utility("t,u_0,u_1\n2,0,0\n3,0,0\n".as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Parse(_)));
    }

    #[test]
    fn values_csv_round_trips_and_checks_consistency() {
        let table = DesirabilityTable::try_new(2.0, vec![vec![1.0, 2.0], vec![0.5, 4.0]]).unwrap();
        let mut out = Vec::new();
        write_values(&mut out, &table).unwrap();
        let back = read_values(out.as_slice(), 2.0).unwrap();
        for t in 0..2 {
            for s in 0..2 {
                assert_relative_eq!(back.z(t, s), table.z(t, s), max_relative = 1e-12);
            }
        }
        // The same bytes against a different gamma contradict the phi column.
        let err = read_values(out.as_slice(), 1.0).unwrap_err();
        assert!(err.to_string().contains("disagrees"));
    }

    #[test]
    fn dispatch_csv_lists_power_then_occupancy() {
        let occ = OccupancyTrajectory::try_new(vec![vec![1.0, 0.0], vec![0.5, 0.5]]).unwrap();
        let mut out = Vec::new();
        write_dispatch(&mut out, &occ, &[100.0, 150.0]).unwrap();
        assert_eq!(
            String::from_utf8(out).unwrap(),
            "t,expected_power_kw,rho_0,rho_1\n1,100,1,0\n2,150,0.5,0.5\n"
        );
    }

    #[test]
    fn occupancy_csv_round_trips() {
        let rho = [0.25, 0.75];
        let mut out = Vec::new();
        write_occupancy(&mut out, &rho).unwrap();
        assert_eq!(
            String::from_utf8(out.clone()).unwrap(),
            "state,rho\n0,0.25\n1,0.75\n"
        );
        assert_eq!(read_occupancy(out.as_slice()).unwrap(), rho);
    }

    #[test]
    fn error_curve_has_one_row_per_iteration() {
        let passive = sample_matrix();
        let utility = UtilitySchedule::from_fn(3, 2, |_, s| -0.1 * (s + 1) as f64).unwrap();
        let exact = crate::solver::backward_z(&passive, &utility, 1.0).unwrap();
        let mut config = crate::model::ControlConfig::new(1.0, 3);
        config.max_iterations = 5;
        let run = crate::zlearn::run_zlearning(
            &crate::zlearn::PassiveSource::Clean(passive),
            &utility,
            &config,
            Some(&exact),
        )
        .unwrap();
        let mut out = Vec::new();
        write_error_curve(&mut out, &run).unwrap();
        let text = String::from_utf8(out).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 6);
        assert_eq!(lines[0], "iteration,max_delta,err_t1,err_t2");
        assert!(lines[1].starts_with("1,"));
    }
}
