//! The dual-path audit: the same pipeline trained once on the original
//! weights and once on reweighed data, compared through fairness measures and
//! Shapley-based feature importance.

mod importance;
mod plot;
mod report;
mod scenario;

pub use importance::{
    global_impact, importance_summary, ranks, GlobalImpact, GroupMeans, ImportanceError,
    ImportanceSummary,
};
pub use plot::{
    dependence_table, summary_table, write_dependence_csv, write_summary_csv, DependenceRow,
    SummaryRow,
};
pub use report::{
    build_report, explanations_csv, AuditReport, Deltas, ModelArtifact, PathReport,
    SensitiveImportance, SplitSummary, REPORT_SCHEMA_VERSION,
};
pub use scenario::{Evidence, RuleBranch, Scenario, ScenarioCall, ScenarioRule};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{self, DataError, Dataset, DatasetConfig, StandardizationParams};
use crate::fairness::{self, ConsistencyOptions, FairnessError, FairnessReport};
use crate::model::{self, ClassifierSpec, ModelError, TrainedModel};
use crate::reweigh::{self, ReweighError, ReweighWeights};
use crate::shap::{self, ExplainerConfig, Explanation, MethodChoice, ShapError};

#[derive(Debug, Error)]
pub enum AuditError {
    #[error("data stage: {0}")]
    Data(#[from] DataError),
    #[error("reweigh stage: {0}")]
    Reweigh(#[from] ReweighError),
    #[error("train stage: {0}")]
    Model(#[from] ModelError),
    #[error("fairness stage: {0}")]
    Fairness(#[from] FairnessError),
    #[error("explain stage: {0}")]
    Explain(#[from] ShapError),
    #[error("importance stage: {0}")]
    Importance(#[from] ImportanceError),
    #[error("runs are not comparable: {0}")]
    ConfigMismatch(String),
    #[error("unknown feature {0:?}")]
    UnknownFeature(String),
    #[error("model artifact does not match the dataset: {0}")]
    SchemaMismatch(String),
}

/// Explainer options that can be recorded in a report. The background rows
/// themselves are drawn from the training split at run time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplainerSettings {
    pub background_size: usize,
    pub exact_threshold: usize,
    pub permutations: usize,
    pub method: MethodChoice,
    pub seed: u64,
}

impl Default for ExplainerSettings {
    fn default() -> Self {
        Self {
            background_size: 100,
            exact_threshold: 15,
            permutations: 200,
            method: MethodChoice::Auto,
            seed: 42,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditConfig {
    pub dataset: DatasetConfig,
    pub classifier: ClassifierSpec,
    pub explainer: ExplainerSettings,
    pub consistency: ConsistencyOptions,
}

impl AuditConfig {
    /// Defaults everywhere, with every seed set to `seed`.
    pub fn new(mut dataset: DatasetConfig, kind: model::ClassifierKind, seed: u64) -> Self {
        dataset.seed = seed;
        Self {
            dataset,
            classifier: kind.default_spec(seed),
            explainer: ExplainerSettings {
                seed,
                ..Default::default()
            },
            consistency: ConsistencyOptions::default(),
        }
    }
}

/// Encoded, split and standardized data shared by both audit paths.
#[derive(Debug, Clone)]
pub struct PreparedData {
    /// Unstandardized test rows, for plot axes.
    pub test_raw: Dataset,
    pub train: Dataset,
    pub test: Dataset,
    pub standardizer: StandardizationParams,
    pub background: Vec<Vec<f64>>,
}

impl PreparedData {
    pub fn feature_names(&self) -> &[String] {
        &self.train.feature_names
    }

    pub fn sensitive_index(&self) -> usize {
        self.train.sensitive_index
    }
}

/// Rows `0..n` subsampled to at most `size`, seeded.
fn background_indices(n: usize, size: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    if size >= n {
        (0..n).collect()
    } else {
        rand::seq::index::sample(&mut rng, n, size).into_vec()
    }
}

/// Encode, split and standardize; draws the explainer background from the
/// standardized training split.
pub fn prepare(
    dataset: &DatasetConfig,
    explainer: &ExplainerSettings,
) -> Result<PreparedData, AuditError> {
    let table = data::load_dataset(dataset)?;
    let encoded = data::encode(&table, dataset)?;
    let (train_raw, test_raw) = data::split(&encoded, dataset.split_fraction, dataset.seed)?;
    let standardizer = data::fit_standardizer(&train_raw)?;
    let train = data::apply_standardizer(&standardizer, &train_raw);
    let test = data::apply_standardizer(&standardizer, &test_raw);
    if explainer.background_size == 0 {
        return Err(ShapError::EmptyBackground.into());
    }
    let background = background_indices(train.len(), explainer.background_size, explainer.seed)
        .into_iter()
        .map(|i| train.features[i].clone())
        .collect();
    Ok(PreparedData {
        test_raw,
        train,
        test,
        standardizer,
        background,
    })
}

pub fn explainer_config(prepared: &PreparedData, settings: &ExplainerSettings) -> ExplainerConfig {
    ExplainerConfig {
        background: prepared.background.clone(),
        exact_threshold: settings.exact_threshold,
        permutations: settings.permutations,
        seed: settings.seed,
    }
}

/// Everything one path of the audit produced.
#[derive(Debug, Clone)]
pub struct AuditRun {
    pub config: AuditConfig,
    pub reweighed: bool,
    pub weights: Option<ReweighWeights>,
    pub model: TrainedModel,
    pub probabilities: Vec<f64>,
    pub predictions: Vec<u8>,
    pub fairness: FairnessReport,
    pub explanations: Vec<Explanation>,
    pub importance: ImportanceSummary,
}

/// Fairness measures of `model` on the prepared test split.
pub fn evaluate_fairness(
    model: &TrainedModel,
    prepared: &PreparedData,
    options: ConsistencyOptions,
) -> Result<(Vec<f64>, Vec<u8>, FairnessReport), AuditError> {
    let test = &prepared.test;
    let probabilities = model.predict_proba(&test.features)?;
    let predictions: Vec<u8> = probabilities
        .iter()
        .map(|&p| u8::from(p >= model::THRESHOLD))
        .collect();
    let report = fairness::evaluate(
        &predictions,
        &test.target,
        &test.sensitive,
        Some((&test.features, test.sensitive_index)),
        options,
    )?;
    Ok((probabilities, predictions, report))
}

/// Shapley explanations of every test row plus their importance summary.
pub fn explain_test(
    model: &TrainedModel,
    prepared: &PreparedData,
    settings: &ExplainerSettings,
) -> Result<(Vec<Explanation>, ImportanceSummary), AuditError> {
    let config = explainer_config(prepared, settings);
    let explanations =
        shap::explain_batch(model, &prepared.test.features, &config, settings.method)?;
    let importance = importance_summary(&explanations, &prepared.test.sensitive)?;
    Ok((explanations, importance))
}

/// One path over already prepared data.
pub fn run_prepared(
    config: &AuditConfig,
    prepared: &PreparedData,
    with_reweigh: bool,
) -> Result<AuditRun, AuditError> {
    let (train, weights) = if with_reweigh {
        let w = reweigh::compute_weights(&prepared.train)?;
        (
            reweigh::apply_weights(&prepared.train, &w.per_row)?,
            Some(w),
        )
    } else {
        (prepared.train.clone(), None)
    };
    let model = model::train(
        &config.classifier,
        &train.features,
        &train.target,
        &train.weights,
    )?;
    let (probabilities, predictions, fairness) =
        evaluate_fairness(&model, prepared, config.consistency)?;
    let (explanations, importance) = explain_test(&model, prepared, &config.explainer)?;
    Ok(AuditRun {
        config: config.clone(),
        reweighed: with_reweigh,
        weights,
        model,
        probabilities,
        predictions,
        fairness,
        explanations,
        importance,
    })
}

/// encode, split, standardize, optionally reweigh, train, measure, explain.
pub fn run_audit(config: &AuditConfig, with_reweigh: bool) -> Result<AuditRun, AuditError> {
    let prepared = prepare(&config.dataset, &config.explainer)?;
    run_prepared(config, &prepared, with_reweigh)
}

/// Baseline and reweighed paths over the same prepared data, run concurrently.
pub fn run_both(
    config: &AuditConfig,
    prepared: &PreparedData,
) -> Result<(AuditRun, AuditRun), AuditError> {
    let (baseline, reweighed) = rayon::join(
        || run_prepared(config, prepared, false),
        || run_prepared(config, prepared, true),
    );
    Ok((baseline?, reweighed?))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditComparison {
    pub deltas: Deltas,
    pub scenario: ScenarioCall,
}

/// Deltas (reweighed minus baseline) and the scenario call on the reweighed run.
pub fn compare(
    baseline: &AuditRun,
    reweighed: &AuditRun,
    sensitive_index: usize,
    rule: &ScenarioRule,
) -> Result<AuditComparison, AuditError> {
    if baseline.config != reweighed.config {
        return Err(AuditError::ConfigMismatch(
            "dataset, classifier, explainer and consistency settings must match".into(),
        ));
    }
    let deltas = Deltas::between(
        (&baseline.fairness, &baseline.importance),
        (&reweighed.fairness, &reweighed.importance),
        sensitive_index,
    );
    let scenario = rule.classify(
        reweighed.fairness.disparate_impact,
        reweighed.fairness.equal_opportunity,
    );
    Ok(AuditComparison { deltas, scenario })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ClassifierKind;
    use std::io::Write;

    fn synthetic_csv(rows: usize) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "x1,x2,color,group,label").unwrap();
        for i in 0..rows {
            let x1 = ((i * 37) % 101) as f64 / 101.0;
            let x2 = ((i * 53) % 89) as f64 / 89.0;
            let color = ["red", "green", "blue"][i % 3];
            let group = if (i * 7) % 5 < 2 { "b" } else { "a" };
            let bump = if group == "a" { 0.15 } else { -0.1 };
            let label = if x1 + 0.5 * x2 + bump + 0.2 * (((i * 13) % 7) as f64 / 7.0 - 0.5) > 0.8 {
                "yes"
            } else {
                "no"
            };
            writeln!(f, "{x1},{x2},{color},{group},{label}").unwrap();
        }
        f
    }

    fn config(path: &std::path::Path) -> AuditConfig {
        let dataset = DatasetConfig {
            csv_path: path.to_path_buf(),
            target_column: "label".into(),
            favorable_label: "yes".into(),
            sensitive_column: "group".into(),
            privileged_value: Some("a".into()),
            privileged_above: None,
            categorical_columns: vec!["color".into()],
            drop_columns: vec![],
            split_fraction: 0.8,
            seed: 3,
        };
        let mut c = AuditConfig::new(dataset, ClassifierKind::LogisticRegression, 3);
        c.explainer.background_size = 20;
        c
    }

    #[test]
    fn paths_differ_only_in_weights() {
        let f = synthetic_csv(300);
        let cfg = config(f.path());
        let prepared = prepare(&cfg.dataset, &cfg.explainer).unwrap();
        let (base, rw) = run_both(&cfg, &prepared).unwrap();
        assert!(base.weights.is_none());
        let w = rw.weights.as_ref().unwrap();
        assert_eq!(w.per_row.len(), prepared.train.len());
        assert_eq!(base.explanations.len(), prepared.test.len());
        for e in base.explanations.iter().chain(&rw.explanations) {
            assert!(e.additivity_gap().abs() < 1e-9);
        }
        // reweighing the training split equalizes weighted base rates
        let reweighed = reweigh::apply_weights(&prepared.train, &w.per_row).unwrap();
        let rates = reweigh::weighted_favorable_rates(&reweighed);
        assert!((rates[0] - rates[1]).abs() < 1e-12);
    }

    #[test]
    fn compare_same_run_gives_zero_deltas() {
        let f = synthetic_csv(200);
        let cfg = config(f.path());
        let run = run_audit(&cfg, false).unwrap();
        let idx = run.importance.rank.len() - 1;
        let cmp = compare(&run, &run, idx, &ScenarioRule::default()).unwrap();
        assert_eq!(cmp.deltas.equal_opportunity, 0.0);
        assert!(cmp.deltas.global_impact.iter().all(|&d| d == 0.0));
        assert!(cmp.deltas.group_diff.iter().all(|&d| d == 0.0));
        assert!(cmp.deltas.rank.iter().all(|&d| d == 0));
        assert!(matches!(cmp.deltas.disparate_impact, Some(d) if d == 0.0));
    }

    #[test]
    fn compare_rejects_mismatched_configs() {
        let f = synthetic_csv(200);
        let cfg = config(f.path());
        let a = run_audit(&cfg, false).unwrap();
        let mut other = cfg.clone();
        other.consistency.k = 3;
        let b = run_audit(&other, true).unwrap();
        assert!(matches!(
            compare(&a, &b, 0, &ScenarioRule::default()),
            Err(AuditError::ConfigMismatch(_))
        ));
    }

    #[test]
    fn stage_is_named_in_errors() {
        let f = synthetic_csv(50);
        let mut cfg = config(f.path());
        cfg.consistency.k = 1000;
        let err = run_audit(&cfg, false).unwrap_err();
        assert!(err.to_string().starts_with("fairness stage"), "{err}");
    }
}
