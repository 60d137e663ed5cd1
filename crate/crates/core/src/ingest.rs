//! CSV ingestion and the in-memory cohort shared by every downstream stage.
//!
//! Three inputs, each with a mandatory header row:
//!
//! ```text
//! subject_id,variable,delta_days,value     longitudinal observations
//! subject_id,name,value                    static covariates
//! subject_id,time_days,event               survival outcomes (event is 0 or 1)
//! ```
//!
//! Line numbers in errors are 1-based and count the header as line 1.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::io::{Read, Write};

use thiserror::Error;

use crate::survcore::Outcome;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("missing or wrong header: expected `{expected}`")]
    MissingHeader { expected: &'static str },
    #[error("line {line}: malformed row ({reason})")]
    MalformedRow { line: u64, reason: String },
    #[error("line {line}: value is not finite")]
    NonFiniteValue { line: u64 },
    #[error("duplicate static covariate `{name}` for subject `{subject}`")]
    DuplicateStatic { subject: String, name: String },
    #[error("line {line}: time_days must be positive")]
    NonPositiveTime { line: u64 },
    #[error("line {line}: event flag must be 0 or 1")]
    BadEventFlag { line: u64 },
    #[error("duplicate outcome for subject `{subject}`")]
    DuplicateSubject { subject: String },
    #[error("cohort is empty: no outcomes")]
    EmptyCohort,
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

pub const LONGITUDINAL_HEADER: &str = "subject_id,variable,delta_days,value";
pub const STATIC_HEADER: &str = "subject_id,name,value";
pub const OUTCOME_HEADER: &str = "subject_id,time_days,event";

#[derive(Debug, Clone, PartialEq)]
pub struct LongitudinalObservation {
    pub subject_id: String,
    pub variable: String,
    pub delta_days: i64,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum StaticValue {
    Numeric(f64),
    Categorical(String),
}

impl StaticValue {
    /// Numeric iff the whole string parses as a real; `61.5kg` stays a label.
    pub fn parse(raw: &str) -> StaticValue {
        match raw.parse::<f64>() {
            Ok(v) => StaticValue::Numeric(v),
            Err(_) => StaticValue::Categorical(raw.to_string()),
        }
    }

    pub fn as_numeric(&self) -> Option<f64> {
        match self {
            StaticValue::Numeric(v) => Some(*v),
            StaticValue::Categorical(_) => None,
        }
    }
}

impl fmt::Display for StaticValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StaticValue::Numeric(v) => write!(f, "{v}"),
            StaticValue::Categorical(s) => f.write_str(s),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StaticCovariate {
    pub subject_id: String,
    pub name: String,
    pub value: StaticValue,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SurvivalOutcome {
    pub subject_id: String,
    pub time_days: f64,
    pub event: bool,
}

impl SurvivalOutcome {
    pub fn outcome(&self) -> Outcome {
        Outcome::new(self.time_days, self.event)
    }
}

/// Per-variable series, sorted ascending by day with one value per day.
pub type Series = Vec<(i64, f64)>;

/// Joined subjects, ordered as in the outcomes file. Immutable once assembled.
#[derive(Debug, Clone, PartialEq)]
pub struct Cohort {
    subjects: Vec<String>,
    outcomes: Vec<SurvivalOutcome>,
    statics: Vec<BTreeMap<String, StaticValue>>,
    longitudinal: Vec<BTreeMap<String, Series>>,
}

/// What assembly discarded on the way.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AssemblyReport {
    /// Subjects seen in statics or longitudinal data without an outcome.
    pub dropped_subjects: usize,
    /// Longitudinal rows superseded by a later row with the same key.
    pub superseded_observations: usize,
}

impl Cohort {
    pub fn len(&self) -> usize {
        self.subjects.len()
    }

    pub fn is_empty(&self) -> bool {
        self.subjects.is_empty()
    }

    pub fn subjects(&self) -> &[String] {
        &self.subjects
    }

    pub fn survival_outcomes(&self) -> &[SurvivalOutcome] {
        &self.outcomes
    }

    pub fn outcomes(&self) -> Vec<Outcome> {
        self.outcomes.iter().map(SurvivalOutcome::outcome).collect()
    }

    pub fn statics(&self, subject: usize) -> &BTreeMap<String, StaticValue> {
        &self.statics[subject]
    }

    pub fn longitudinal(&self, subject: usize) -> &BTreeMap<String, Series> {
        &self.longitudinal[subject]
    }

    /// All longitudinal variable names, sorted.
    pub fn longitudinal_variables(&self) -> Vec<String> {
        let mut names: Vec<String> = self
            .longitudinal
            .iter()
            .flat_map(|m| m.keys().cloned())
            .collect();
        names.sort();
        names.dedup();
        names
    }

    /// All static covariate names, sorted.
    pub fn static_names(&self) -> Vec<String> {
        let mut names: Vec<String> = self
            .statics
            .iter()
            .flat_map(|m| m.keys().cloned())
            .collect();
        names.sort();
        names.dedup();
        names
    }

    pub fn write_longitudinal<W: Write>(&self, out: W) -> Result<(), IngestError> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(LONGITUDINAL_HEADER.split(','))?;
        for (subject, vars) in self.subjects.iter().zip(&self.longitudinal) {
            for (var, series) in vars {
                for (day, value) in series {
                    w.write_record([
                        subject.as_str(),
                        var,
                        &day.to_string(),
                        &value.to_string(),
                    ])?;
                }
            }
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }

    pub fn write_statics<W: Write>(&self, out: W) -> Result<(), IngestError> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(STATIC_HEADER.split(','))?;
        for (subject, statics) in self.subjects.iter().zip(&self.statics) {
            for (name, value) in statics {
                w.write_record([subject.as_str(), name, &value.to_string()])?;
            }
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }

    pub fn write_outcomes<W: Write>(&self, out: W) -> Result<(), IngestError> {
        write_outcomes(&self.outcomes, out)
    }
}

pub fn write_outcomes<W: Write>(outcomes: &[SurvivalOutcome], out: W) -> Result<(), IngestError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(OUTCOME_HEADER.split(','))?;
    for o in outcomes {
        w.write_record([
            o.subject_id.as_str(),
            &o.time_days.to_string(),
            if o.event { "1" } else { "0" },
        ])?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// Reads a headered CSV, yielding `(line_no, record)` for each data row.
fn read_rows<R: Read>(
    source: R,
    expected: &'static str,
) -> Result<Vec<(u64, csv::StringRecord)>, IngestError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(source);
    let mut records = reader.records();
    let header = match records.next() {
        Some(h) => h?,
        None => return Err(IngestError::MissingHeader { expected }),
    };
    let columns: Vec<&str> = expected.split(',').collect();
    let header_ok = header.len() == columns.len()
        && header
            .iter()
            .zip(&columns)
            .all(|(got, want)| got.trim_start_matches('\u{feff}') == *want);
    if !header_ok {
        return Err(IngestError::MissingHeader { expected });
    }

    let mut rows = Vec::new();
    for record in records {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() == 1 && record[0].is_empty() {
            continue;
        }
        if record.len() != columns.len() {
            return Err(IngestError::MalformedRow {
                line,
                reason: format!("expected {} fields, found {}", columns.len(), record.len()),
            });
        }
        rows.push((line, record));
    }
    Ok(rows)
}

fn non_empty(field: &str, what: &str, line: u64) -> Result<String, IngestError> {
    if field.is_empty() {
        Err(IngestError::MalformedRow {
            line,
            reason: format!("empty {what}"),
        })
    } else {
        Ok(field.to_string())
    }
}

fn parse_real(field: &str, what: &str, line: u64) -> Result<f64, IngestError> {
    let v: f64 = field.parse().map_err(|_| IngestError::MalformedRow {
        line,
        reason: format!("{what} `{field}` is not a number"),
    })?;
    if !v.is_finite() {
        return Err(IngestError::NonFiniteValue { line });
    }
    Ok(v)
}

pub fn parse_longitudinal<R: Read>(source: R) -> Result<Vec<LongitudinalObservation>, IngestError> {
    read_rows(source, LONGITUDINAL_HEADER)?
        .into_iter()
        .map(|(line, r)| {
            let delta_days = r[2].parse::<i64>().map_err(|_| IngestError::MalformedRow {
                line,
                reason: format!("delta_days `{}` is not an integer", &r[2]),
            })?;
            Ok(LongitudinalObservation {
                subject_id: non_empty(&r[0], "subject_id", line)?,
                variable: non_empty(&r[1], "variable", line)?,
                delta_days,
                value: parse_real(&r[3], "value", line)?,
            })
        })
        .collect()
}

pub fn parse_static<R: Read>(source: R) -> Result<Vec<StaticCovariate>, IngestError> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for (line, r) in read_rows(source, STATIC_HEADER)? {
        let subject_id = non_empty(&r[0], "subject_id", line)?;
        let name = non_empty(&r[1], "name", line)?;
        let raw = non_empty(&r[2], "value", line)?;
        let value = StaticValue::parse(&raw);
        if matches!(value, StaticValue::Numeric(v) if !v.is_finite()) {
            return Err(IngestError::NonFiniteValue { line });
        }
        if !seen.insert((subject_id.clone(), name.clone())) {
            return Err(IngestError::DuplicateStatic {
                subject: subject_id,
                name,
            });
        }
        out.push(StaticCovariate {
            subject_id,
            name,
            value,
        });
    }
    Ok(out)
}

pub fn parse_outcomes<R: Read>(source: R) -> Result<Vec<SurvivalOutcome>, IngestError> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for (line, r) in read_rows(source, OUTCOME_HEADER)? {
        let subject_id = non_empty(&r[0], "subject_id", line)?;
        let time_days = parse_real(&r[1], "time_days", line)?;
        if time_days <= 0.0 {
            return Err(IngestError::NonPositiveTime { line });
        }
        let event = match &r[2] {
            "0" => false,
            "1" => true,
            _ => return Err(IngestError::BadEventFlag { line }),
        };
        if !seen.insert(subject_id.clone()) {
            return Err(IngestError::DuplicateSubject {
                subject: subject_id,
            });
        }
        out.push(SurvivalOutcome {
            subject_id,
            time_days,
            event,
        });
    }
    Ok(out)
}

/// Joins the three tables on subject id, keyed and ordered by the outcomes.
///
/// Subjects without an outcome are dropped. Repeated
/// `(subject, variable, delta_days)` rows keep the last one in file order.
pub fn assemble_cohort(
    statics: Vec<StaticCovariate>,
    longitudinal: Vec<LongitudinalObservation>,
    outcomes: Vec<SurvivalOutcome>,
) -> Result<(Cohort, AssemblyReport), IngestError> {
    if outcomes.is_empty() {
        return Err(IngestError::EmptyCohort);
    }
    let index: HashMap<&str, usize> = outcomes
        .iter()
        .enumerate()
        .map(|(i, o)| (o.subject_id.as_str(), i))
        .collect();
    let n = outcomes.len();
    let mut cohort_statics = vec![BTreeMap::new(); n];
    let mut by_day: Vec<BTreeMap<String, BTreeMap<i64, f64>>> = vec![BTreeMap::new(); n];
    let mut orphans: HashSet<String> = HashSet::new();
    let mut report = AssemblyReport::default();

    for s in statics {
        match index.get(s.subject_id.as_str()) {
            Some(&i) => {
                if cohort_statics[i].insert(s.name.clone(), s.value).is_some() {
                    return Err(IngestError::DuplicateStatic {
                        subject: s.subject_id,
                        name: s.name,
                    });
                }
            }
            None => {
                orphans.insert(s.subject_id);
            }
        }
    }
    for obs in longitudinal {
        match index.get(obs.subject_id.as_str()) {
            Some(&i) => {
                let series = by_day[i].entry(obs.variable).or_default();
                if series.insert(obs.delta_days, obs.value).is_some() {
                    report.superseded_observations += 1;
                }
            }
            None => {
                orphans.insert(obs.subject_id);
            }
        }
    }
    report.dropped_subjects = orphans.len();
    if report.dropped_subjects > 0 {
        log::warn!(
            "dropped {} subject(s) without a survival outcome",
            report.dropped_subjects
        );
    }
    if report.superseded_observations > 0 {
        log::info!(
            "{} duplicate longitudinal row(s) superseded by later rows",
            report.superseded_observations
        );
    }

    let longitudinal = by_day
        .into_iter()
        .map(|vars| {
            vars.into_iter()
                .map(|(var, days)| (var, days.into_iter().collect()))
                .collect()
        })
        .collect();
    let cohort = Cohort {
        subjects: outcomes.iter().map(|o| o.subject_id.clone()).collect(),
        outcomes,
        statics: cohort_statics,
        longitudinal,
    };
    Ok((cohort, report))
}
