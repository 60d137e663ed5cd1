//! Synthetic cohorts with exponential proportional-hazards survival and known
//! ground truth.
//!
//! Subject `i` draws everything from stream `i` of a ChaCha generator keyed by
//! the spec seed, so growing `n` appends subjects without touching existing
//! ones.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::{
    assemble_cohort, Cohort, IngestError, LongitudinalObservation, StaticCovariate, StaticValue,
    SurvivalOutcome,
};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid synthetic spec: {0}")]
    BadSpec(String),
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

/// A standard-normal static covariate with its true log-hazard coefficient
/// (0 for noise).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CovariateSpec {
    pub name: String,
    #[serde(default)]
    pub coefficient: f64,
}

impl CovariateSpec {
    pub fn informative(name: impl Into<String>, coefficient: f64) -> Self {
        Self {
            name: name.into(),
            coefficient,
        }
    }

    pub fn noise(name: impl Into<String>) -> Self {
        Self::informative(name, 0.0)
    }
}

/// Categorical static drawn uniformly over `levels`; `effects[k]` is added
/// to the linear predictor for level `k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CategoricalSpec {
    pub name: String,
    pub levels: Vec<String>,
    pub effects: Vec<f64>,
}

/// `coefficient · x[a] · x[b]` added to the linear predictor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InteractionSpec {
    pub first: usize,
    pub second: usize,
    pub coefficient: f64,
}

/// A longitudinal variable whose per-subject decline rate is
/// `slope_mean + risk_weight · η + slope_sd · z`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LongitudinalSpec {
    pub name: String,
    pub base: f64,
    pub slope_mean: f64,
    pub risk_weight: f64,
    #[serde(default)]
    pub slope_sd: f64,
    #[serde(default)]
    pub noise_sd: f64,
    pub min_visits: usize,
    pub max_visits: usize,
    /// Visit days are evenly spaced over `[0, window_days]`, then jittered.
    pub window_days: i64,
    #[serde(default)]
    pub jitter_days: i64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSpec {
    pub n: usize,
    pub covariates: Vec<CovariateSpec>,
    #[serde(default)]
    pub categorical: Option<CategoricalSpec>,
    /// Events per day at η = 0.
    pub baseline_hazard: f64,
    /// Exponential censoring hazard; 0 disables censoring.
    pub censor_rate: f64,
    #[serde(default)]
    pub interaction: Option<InteractionSpec>,
    #[serde(default)]
    pub longitudinal: Vec<LongitudinalSpec>,
    pub seed: u64,
}

impl SynthSpec {
    /// Static covariates only, no censoring structure beyond `censor_rate`.
    pub fn linear(n: usize, coefficients: &[f64], baseline_hazard: f64, censor_rate: f64, seed: u64) -> Self {
        Self {
            n,
            covariates: coefficients
                .iter()
                .enumerate()
                .map(|(j, &b)| CovariateSpec::informative(format!("x{}", j + 1), b))
                .collect(),
            categorical: None,
            baseline_hazard,
            censor_rate,
            interaction: None,
            longitudinal: Vec::new(),
            seed,
        }
    }

    /// A small clinical-looking cohort: three statics, a site label and three
    /// longitudinal scores over the first 92 days.
    pub fn demo(n: usize, seed: u64) -> Self {
        let var = |name: &str, base: f64, slope_mean: f64, risk_weight: f64, noise_sd: f64| LongitudinalSpec {
            name: name.into(),
            base,
            slope_mean,
            risk_weight,
            slope_sd: slope_mean.abs() * 0.25,
            noise_sd,
            min_visits: 1,
            max_visits: 5,
            window_days: 92,
            jitter_days: 7,
        };
        Self {
            n,
            covariates: vec![
                CovariateSpec::informative("Age", 0.3),
                CovariateSpec::informative("onset_delta", -0.4),
                CovariateSpec::noise("height"),
            ],
            categorical: Some(CategoricalSpec {
                name: "onset_site".into(),
                levels: vec!["bulbar".into(), "limb".into()],
                effects: vec![0.3, 0.0],
            }),
            baseline_hazard: 1.0 / 700.0,
            censor_rate: 1.0 / 1500.0,
            interaction: None,
            longitudinal: vec![
                var("alsfrs", 38.0, 0.03, 0.04, 1.0),
                var("fvc", 90.0, 0.1, 0.08, 4.0),
                var("weight", 75.0, 0.01, 0.0, 1.5),
            ],
            seed,
        }
    }

    fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: String| Err(SynthError::BadSpec(m));
        if self.n < 2 {
            return bad(format!("n must be at least 2, got {}", self.n));
        }
        if !(self.baseline_hazard.is_finite() && self.baseline_hazard > 0.0) {
            return bad(format!("baseline_hazard must be positive, got {}", self.baseline_hazard));
        }
        if !(self.censor_rate.is_finite() && self.censor_rate >= 0.0) {
            return bad(format!("censor_rate must be non-negative, got {}", self.censor_rate));
        }
        let mut names: Vec<&str> = self.covariates.iter().map(|c| c.name.as_str()).collect();
        for c in &self.covariates {
            if !c.coefficient.is_finite() {
                return bad(format!("coefficient of {} is not finite", c.name));
            }
        }
        if let Some(cat) = &self.categorical {
            if cat.levels.len() < 2 || cat.effects.len() != cat.levels.len() {
                return bad(format!("{} needs at least two levels and one effect per level", cat.name));
            }
            if cat.effects.iter().any(|e| !e.is_finite()) {
                return bad(format!("effects of {} must be finite", cat.name));
            }
            if cat.levels.iter().any(|l| l.parse::<f64>().is_ok()) {
                return bad(format!("levels of {} must not be numeric", cat.name));
            }
            names.push(&cat.name);
        }
        if let Some(ia) = &self.interaction {
            let p = self.covariates.len();
            if ia.first >= p || ia.second >= p || ia.first == ia.second || !ia.coefficient.is_finite() {
                return bad("interaction must name two distinct covariates with a finite coefficient".into());
            }
        }
        for l in &self.longitudinal {
            let finite = [l.base, l.slope_mean, l.risk_weight, l.slope_sd, l.noise_sd]
                .iter()
                .all(|v| v.is_finite());
            if !finite || l.slope_sd < 0.0 || l.noise_sd < 0.0 {
                return bad(format!("{}: parameters must be finite, spreads non-negative", l.name));
            }
            if l.min_visits == 0 || l.min_visits > l.max_visits {
                return bad(format!("{}: need 1 <= min_visits <= max_visits", l.name));
            }
            if l.window_days < 0 || l.jitter_days < 0 {
                return bad(format!("{}: window and jitter must be non-negative", l.name));
            }
            names.push(&l.name);
        }
        let mut sorted = names.clone();
        sorted.sort_unstable();
        if let Some(w) = sorted.windows(2).find(|w| w[0] == w[1]) {
            return bad(format!("duplicate variable name {}", w[0]));
        }
        if names.iter().any(|n| n.is_empty() || n.contains(',')) {
            return bad("variable names must be non-empty and comma-free".into());
        }
        Ok(())
    }
}

/// What the generator knows and the models must rediscover.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub subject_ids: Vec<String>,
    /// Row-major `n × p` static covariates in spec order.
    pub covariates: Vec<Vec<f64>>,
    pub linear_predictor: Vec<f64>,
    /// Uncensored event times.
    pub event_times: Vec<f64>,
    pub censor_times: Vec<f64>,
    /// Per subject, per longitudinal variable in spec order.
    pub latent_slopes: Vec<Vec<f64>>,
}

impl GroundTruth {
    pub fn censored(&self, i: usize) -> bool {
        self.event_times[i] > self.censor_times[i]
    }

    /// `subject_id,true_linpred,true_time,censored`
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), SynthError> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["subject_id", "true_linpred", "true_time", "censored"])?;
        for i in 0..self.subject_ids.len() {
            w.write_record([
                self.subject_ids[i].as_str(),
                &self.linear_predictor[i].to_string(),
                &self.event_times[i].to_string(),
                if self.censored(i) { "1" } else { "0" },
            ])?;
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }
}

struct Subject {
    x: Vec<f64>,
    level: Option<usize>,
    eta: f64,
    event_time: f64,
    censor_time: f64,
    slopes: Vec<f64>,
    visits: Vec<Vec<(i64, f64)>>,
}

fn subject_rng(seed: u64, i: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(i as u64);
    rng
}

fn draw_subject(spec: &SynthSpec, i: usize) -> Subject {
    let mut rng = subject_rng(spec.seed, i);
    let x: Vec<f64> = spec
        .covariates
        .iter()
        .map(|_| rng.sample(StandardNormal))
        .collect();
    let level = spec.categorical.as_ref().map(|c| rng.gen_range(0..c.levels.len()));

    let mut eta: f64 = spec
        .covariates
        .iter()
        .zip(&x)
        .map(|(c, v)| c.coefficient * v)
        .sum();
    if let (Some(cat), Some(k)) = (&spec.categorical, level) {
        eta += cat.effects[k];
    }
    if let Some(ia) = &spec.interaction {
        eta += ia.coefficient * x[ia.first] * x[ia.second];
    }

    let e1: f64 = Exp1.sample(&mut rng);
    let e2: f64 = Exp1.sample(&mut rng);
    let event_time = e1 / (spec.baseline_hazard * eta.exp());
    let censor_time = if spec.censor_rate > 0.0 {
        e2 / spec.censor_rate
    } else {
        f64::INFINITY
    };

    let mut slopes = Vec::with_capacity(spec.longitudinal.len());
    let mut visits = Vec::with_capacity(spec.longitudinal.len());
    for l in &spec.longitudinal {
        let z: f64 = rng.sample(StandardNormal);
        let slope = l.slope_mean + l.risk_weight * eta + l.slope_sd * z;
        let m = rng.gen_range(l.min_visits..=l.max_visits);
        let mut series = Vec::with_capacity(m);
        for k in 0..m {
            let nominal = if m == 1 {
                0
            } else {
                (k as i64 * l.window_days) / (m as i64 - 1)
            };
            let jitter = if l.jitter_days > 0 {
                rng.gen_range(-l.jitter_days..=l.jitter_days)
            } else {
                0
            };
            let day = (nominal + jitter).clamp(0, l.window_days);
            let noise: f64 = rng.sample(StandardNormal);
            series.push((day, l.base - slope * day as f64 + l.noise_sd * noise));
        }
        slopes.push(slope);
        visits.push(series);
    }
    Subject {
        x,
        level,
        eta,
        event_time,
        censor_time,
        slopes,
        visits,
    }
}

pub fn subject_id(i: usize) -> String {
    format!("s{:05}", i + 1)
}

/// Draws a cohort from `spec` and returns it with its ground truth.
pub fn generate(spec: &SynthSpec) -> Result<(Cohort, GroundTruth), SynthError> {
    spec.validate()?;
    let subjects: Vec<Subject> = (0..spec.n).map(|i| draw_subject(spec, i)).collect();

    let mut statics = Vec::new();
    let mut longitudinal = Vec::new();
    let mut outcomes = Vec::with_capacity(spec.n);
    for (i, s) in subjects.iter().enumerate() {
        let id = subject_id(i);
        for (c, &v) in spec.covariates.iter().zip(&s.x) {
            statics.push(StaticCovariate {
                subject_id: id.clone(),
                name: c.name.clone(),
                value: StaticValue::Numeric(v),
            });
        }
        if let (Some(cat), Some(k)) = (&spec.categorical, s.level) {
            statics.push(StaticCovariate {
                subject_id: id.clone(),
                name: cat.name.clone(),
                value: StaticValue::Categorical(cat.levels[k].clone()),
            });
        }
        for (l, series) in spec.longitudinal.iter().zip(&s.visits) {
            for &(day, value) in series {
                longitudinal.push(LongitudinalObservation {
                    subject_id: id.clone(),
                    variable: l.name.clone(),
                    delta_days: day,
                    value,
                });
            }
        }
        outcomes.push(SurvivalOutcome {
            subject_id: id,
            time_days: s.event_time.min(s.censor_time),
            event: s.event_time <= s.censor_time,
        });
    }
    let (cohort, _) = assemble_cohort(statics, longitudinal, outcomes)?;

    let truth = GroundTruth {
        subject_ids: cohort.subjects().to_vec(),
        covariates: subjects.iter().map(|s| s.x.clone()).collect(),
        linear_predictor: subjects.iter().map(|s| s.eta).collect(),
        event_times: subjects.iter().map(|s| s.event_time).collect(),
        censor_times: subjects.iter().map(|s| s.censor_time).collect(),
        latent_slopes: subjects.into_iter().map(|s| s.slopes).collect(),
    };
    Ok((cohort, truth))
}

pub const STATICS_FILE: &str = "statics.csv";
pub const LONGITUDINAL_FILE: &str = "longitudinal.csv";
pub const OUTCOMES_FILE: &str = "outcomes.csv";
pub const TRUTH_FILE: &str = "truth.csv";

fn create(path: &Path) -> Result<BufWriter<File>, SynthError> {
    File::create(path).map(BufWriter::new).map_err(|source| SynthError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Writes the three ingest CSVs and the ground-truth CSV into `dir`.
pub fn write_files(dir: &Path, cohort: &Cohort, truth: &GroundTruth) -> Result<(), SynthError> {
    std::fs::create_dir_all(dir).map_err(|source| SynthError::Io {
        path: dir.display().to_string(),
        source,
    })?;
    cohort.write_statics(create(&dir.join(STATICS_FILE))?)?;
    cohort.write_longitudinal(create(&dir.join(LONGITUDINAL_FILE))?)?;
    cohort.write_outcomes(create(&dir.join(OUTCOMES_FILE))?)?;
    truth.write_csv(create(&dir.join(TRUTH_FILE))?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn censor_rate_zero_means_all_events() {
        let (cohort, truth) = generate(&SynthSpec::linear(200, &[0.5, -0.5], 0.01, 0.0, 3)).unwrap();
        assert!(cohort.survival_outcomes().iter().all(|o| o.event));
        assert!((0..200).all(|i| !truth.censored(i)));
    }

    #[test]
    fn deterministic_and_prefix_stable() {
        let a = generate(&SynthSpec::demo(30, 9)).unwrap();
        let b = generate(&SynthSpec::demo(30, 9)).unwrap();
        assert_eq!(a, b);
        let c = generate(&SynthSpec::demo(40, 9)).unwrap();
        assert_eq!(&c.1.linear_predictor[..30], &a.1.linear_predictor[..]);
        assert_eq!(&c.0.survival_outcomes()[..30], a.0.survival_outcomes());
        for i in 0..30 {
            assert_eq!(c.0.longitudinal(i), a.0.longitudinal(i));
            assert_eq!(c.0.statics(i), a.0.statics(i));
        }
    }

    #[test]
    fn zero_interaction_is_linear_generator() {
        let linear = SynthSpec::linear(50, &[0.3, 0.2], 0.01, 0.005, 4);
        let mut with = linear.clone();
        with.interaction = Some(InteractionSpec {
            first: 0,
            second: 1,
            coefficient: 0.0,
        });
        assert_eq!(generate(&linear).unwrap(), generate(&with).unwrap());
    }

    #[test]
    fn visits_stay_in_window() {
        let (cohort, _) = generate(&SynthSpec::demo(100, 1)).unwrap();
        for i in 0..cohort.len() {
            for series in cohort.longitudinal(i).values() {
                assert!(!series.is_empty());
                assert!(series.iter().all(|&(d, _)| (0..=92).contains(&d)));
            }
        }
    }

    #[test]
    fn bad_specs() {
        let ok = SynthSpec::linear(10, &[0.1], 0.01, 0.0, 0);
        let mut s = ok.clone();
        s.n = 1;
        assert!(matches!(generate(&s), Err(SynthError::BadSpec(_))));
        let mut s = ok.clone();
        s.baseline_hazard = 0.0;
        assert!(matches!(generate(&s), Err(SynthError::BadSpec(_))));
        let mut s = ok.clone();
        s.covariates[0].coefficient = f64::NAN;
        assert!(matches!(generate(&s), Err(SynthError::BadSpec(_))));
        let mut s = ok;
        s.interaction = Some(InteractionSpec {
            first: 0,
            second: 0,
            coefficient: 1.0,
        });
        assert!(matches!(generate(&s), Err(SynthError::BadSpec(_))));
    }
}
