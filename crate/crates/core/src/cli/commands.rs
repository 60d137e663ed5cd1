use std::collections::HashMap;
use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use super::config::RunConfig;
use super::Command;
use crate::error::{Error, Result};
use crate::features::{build_matrix, prune_correlated, FeatureMatrix, Window};
use crate::ingest::{assemble_cohort, parse_longitudinal, parse_outcomes, parse_static};
use crate::pipeline::{cross_validate, predict_death, train_final, CvOptions, FittedModel};
use crate::selection::{consensus, rank_all, read_selected, BudgetMode};
use crate::survcore::Outcome;
use crate::synthgen::{generate, write_files, SynthSpec};

pub const MATRIX_FULL_FILE: &str = "matrix_full.csv";
pub const MATRIX_FILE: &str = "matrix.csv";
pub const PRUNING_REPORT_FILE: &str = "pruning_report.csv";
pub const CV_REPORT_FILE: &str = "cv_report.csv";
pub const CV_PLOT_FILE: &str = "cv_plot.csv";
pub const RANKINGS_FILE: &str = "rankings.csv";
pub const CONSENSUS_FILE: &str = "consensus.csv";
pub const MODEL_FILE: &str = "model.json";
pub const PREDICTIONS_FILE: &str = "predictions.csv";

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path).map(BufReader::new).map_err(|e| Error::io(path, e))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| Error::io(path, e))
}

fn out_path(config: &RunConfig, file: &str) -> Result<std::path::PathBuf> {
    let dir = config.out_dir();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    Ok(dir.join(file))
}

fn read_matrix(path: &Path) -> Result<FeatureMatrix> {
    FeatureMatrix::read_csv(open(path)?).map_err(|e| Error::in_file(path, e))
}

/// Outcomes for the matrix rows, joined on subject id.
fn outcomes_for(matrix: &FeatureMatrix, path: &Path) -> Result<Vec<Outcome>> {
    let parsed = parse_outcomes(open(path)?).map_err(|e| Error::in_file(path, e))?;
    let by_id: HashMap<&str, Outcome> = parsed
        .iter()
        .map(|o| (o.subject_id.as_str(), o.outcome()))
        .collect();
    matrix
        .subject_ids()
        .iter()
        .map(|id| {
            by_id.get(id.as_str()).copied().ok_or_else(|| {
                Error::Config(format!("subject `{id}` has no outcome in {}", path.display()))
            })
        })
        .collect()
}

pub fn execute(command: &Command, config: &RunConfig) -> Result<()> {
    match command {
        Command::Synth(_) => synth(config),
        Command::Engineer(_) => engineer(config),
        Command::Compare(_) => compare(config),
        Command::Select(_) => select(config),
        Command::Train(_) => train(config),
        Command::Predict(_) => predict(config),
    }?;
    config.write_resolved()
}

fn synth(config: &RunConfig) -> Result<()> {
    let mut spec = match &config.synth_spec {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            toml::from_str::<SynthSpec>(&text).map_err(|e| Error::in_file(path, e))?
        }
        None => SynthSpec::demo(config.n.unwrap_or(super::config::DEFAULT_SYNTH_N), config.seed()),
    };
    if let Some(n) = config.n {
        spec.n = n;
    }
    spec.seed = config.seed();
    let (cohort, truth) = generate(&spec)?;
    write_files(config.out_dir(), &cohort, &truth)?;
    log::info!("wrote {} synthetic subjects", cohort.len());
    Ok(())
}

fn engineer(config: &RunConfig) -> Result<()> {
    let statics_path = config.require(&config.statics, "statics")?;
    let long_path = config.require(&config.longitudinal, "longitudinal")?;
    let outcomes_path = config.require(&config.outcomes, "outcomes")?;
    let statics = parse_static(open(statics_path)?).map_err(|e| Error::in_file(statics_path, e))?;
    let longitudinal = parse_longitudinal(open(long_path)?).map_err(|e| Error::in_file(long_path, e))?;
    let outcomes = parse_outcomes(open(outcomes_path)?).map_err(|e| Error::in_file(outcomes_path, e))?;
    let (cohort, assembly) = assemble_cohort(statics, longitudinal, outcomes)?;
    if assembly.superseded_observations > 0 {
        log::warn!("{} repeated observations superseded", assembly.superseded_observations);
    }

    let window = Window::new(
        config.window_low.unwrap_or_default(),
        config.window_high.unwrap_or_default(),
    )?;
    let min_coverage = config.min_coverage.unwrap_or(super::config::DEFAULT_MIN_COVERAGE);
    let (full, build) = build_matrix(&cohort, window, min_coverage)?;
    full.write_csv(create(&out_path(config, MATRIX_FULL_FILE)?)?)?;

    let threshold = config.prune_threshold.unwrap_or(super::config::DEFAULT_PRUNE_THRESHOLD);
    let (pruned, prune) = prune_correlated(&full, threshold)?;
    pruned.write_csv(create(&out_path(config, MATRIX_FILE)?)?)?;

    let path = out_path(config, PRUNING_REPORT_FILE)?;
    let mut w = csv::Writer::from_writer(create(&path)?);
    let write_err = |e: csv::Error| Error::io(&path, std::io::Error::other(e));
    w.write_record(["column", "reason", "culprit", "value"]).map_err(write_err)?;
    for (name, coverage) in &build.coverage_dropped {
        w.write_record([name.as_str(), "coverage", "", &coverage.to_string()])
            .map_err(write_err)?;
    }
    for name in &prune.constant {
        w.write_record([name.as_str(), "constant", "", ""]).map_err(write_err)?;
    }
    for d in &prune.correlated {
        w.write_record([d.dropped.as_str(), "correlated", &d.culprit, &d.rho.to_string()])
            .map_err(write_err)?;
    }
    w.flush().map_err(|e| Error::io(&path, e))?;
    println!(
        "{} subjects, {} columns engineered, {} kept",
        pruned.n_rows(),
        full.n_cols(),
        pruned.n_cols()
    );
    Ok(())
}

fn compare(config: &RunConfig) -> Result<()> {
    let matrix_path = config.require(&config.matrix, "matrix")?;
    let matrix = read_matrix(matrix_path)?;
    let outcomes = outcomes_for(&matrix, config.require(&config.outcomes, "outcomes")?)?;
    let specs = config
        .models
        .iter()
        .flatten()
        .map(|m| config.spec_for(m))
        .collect::<Result<Vec<_>>>()?;
    let options = CvOptions {
        prune_threshold: config.cv_prune_threshold,
    };
    let k = config.k.unwrap_or(super::config::DEFAULT_K);
    let report = cross_validate(&specs, &matrix, &outcomes, k, config.seed(), &options)?;
    report.write_csv(create(&out_path(config, CV_REPORT_FILE)?)?)?;
    report.write_plot_csv(create(&out_path(config, CV_PLOT_FILE)?)?)?;
    for m in &report.models {
        println!(
            "{:<12} mean {:.4}  min {:.4}  max {:.4}",
            m.spec.tag(),
            m.mean,
            m.min,
            m.max
        );
    }
    let winner = report.winner();
    println!("winner: {} (mean c-index {:.4})", winner.spec.tag(), winner.mean);
    Ok(())
}

fn select(config: &RunConfig) -> Result<()> {
    let matrix = read_matrix(config.require(&config.matrix, "matrix")?)?;
    let outcomes = outcomes_for(&matrix, config.require(&config.outcomes, "outcomes")?)?;
    let selection = config.selection.unwrap_or_default();
    let rankings = rank_all(&matrix, &outcomes, &selection)?;
    let mode = if config.count_source_variables.unwrap_or(false) {
        BudgetMode::SourceVariables
    } else {
        BudgetMode::Columns
    };
    let budget = config.budget.unwrap_or(super::config::DEFAULT_BUDGET);
    let chosen = consensus(&rankings, budget, mode)?;
    chosen.write_rankings_csv(create(&out_path(config, RANKINGS_FILE)?)?)?;
    chosen.write_consensus_csv(create(&out_path(config, CONSENSUS_FILE)?)?)?;
    println!("selected: {}", chosen.selected.join(", "));
    Ok(())
}

fn train(config: &RunConfig) -> Result<()> {
    let mut matrix = read_matrix(config.require(&config.matrix, "matrix")?)?;
    let outcomes = outcomes_for(&matrix, config.require(&config.outcomes, "outcomes")?)?;
    if let Some(path) = &config.features {
        let selected = read_selected(open(path)?).map_err(|e| Error::in_file(path, e))?;
        if selected.is_empty() {
            return Err(Error::Config(format!("{} selects no features", path.display())));
        }
        matrix = matrix
            .select_named(&selected)
            .map_err(|name| Error::Config(format!("selected feature `{name}` is not in the matrix")))?;
    }
    let tag = config.model.as_deref().unwrap_or(super::config::DEFAULT_MODEL);
    let spec = config.spec_for(tag)?;
    let model = train_final(&spec, &matrix, &outcomes, config.seed())?;
    let path = out_path(config, MODEL_FILE)?;
    std::fs::write(&path, model.to_json()?).map_err(|e| Error::io(&path, e))?;
    println!("trained {} on {} subjects, {} features", tag, matrix.n_rows(), matrix.n_cols());
    Ok(())
}

fn predict(config: &RunConfig) -> Result<()> {
    let model_path = config.require(&config.model_file, "model_file")?;
    let text = std::fs::read_to_string(model_path).map_err(|e| Error::io(model_path, e))?;
    let model = FittedModel::from_json(&text).map_err(|e| Error::in_file(model_path, e))?;
    let matrix = read_matrix(config.require(&config.matrix, "matrix")?)?;
    let horizons = config
        .horizons
        .clone()
        .unwrap_or_else(|| super::config::DEFAULT_HORIZONS.to_vec());
    let predictions = predict_death(&model, &matrix, &horizons)?;
    predictions.write_csv(create(&out_path(config, PREDICTIONS_FILE)?)?)?;
    println!("predicted {} subjects at {} horizons", matrix.n_rows(), horizons.len());
    Ok(())
}
