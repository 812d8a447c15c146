use std::io::Write;

use serde::{Deserialize, Serialize};

use super::{
    AuditConfig, AuditError, AuditRun, ImportanceSummary, PreparedData, ScenarioCall, ScenarioRule,
};
use crate::data::StandardizationParams;
use crate::fairness::{ConsistencyOptions, FairnessReport};
use crate::model::{ClassifierSpec, TrainedModel, MODEL_FORMAT_VERSION};
use crate::reweigh::CellWeight;
use crate::shap::{Explanation, Method};

pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// Reweighed minus baseline, per measure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Deltas {
    /// `None` when either disparate impact is undefined.
    pub disparate_impact: Option<f64>,
    pub equal_opportunity: f64,
    pub consistency: Option<f64>,
    pub global_impact: Vec<f64>,
    pub group_diff: Vec<f64>,
    /// Positive means the feature moved down the ranking.
    pub rank: Vec<i64>,
    pub sensitive_global_impact: f64,
    pub sensitive_group_diff: f64,
    pub sensitive_rank: i64,
}

fn diff(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| y - x).collect()
}

impl Deltas {
    pub fn between(
        baseline: (&FairnessReport, &ImportanceSummary),
        reweighed: (&FairnessReport, &ImportanceSummary),
        sensitive_index: usize,
    ) -> Self {
        let (bf, bi) = baseline;
        let (rf, ri) = reweighed;
        let rank: Vec<i64> = bi
            .rank
            .iter()
            .zip(&ri.rank)
            .map(|(&a, &b)| b as i64 - a as i64)
            .collect();
        let global_impact = diff(&bi.global_impact, &ri.global_impact);
        let group_diff = diff(&bi.group_diff, &ri.group_diff);
        Deltas {
            disparate_impact: bf
                .disparate_impact
                .value()
                .zip(rf.disparate_impact.value())
                .map(|(a, b)| b - a),
            equal_opportunity: rf.equal_opportunity - bf.equal_opportunity,
            consistency: bf.consistency.zip(rf.consistency).map(|(a, b)| b - a),
            sensitive_global_impact: global_impact[sensitive_index],
            sensitive_group_diff: group_diff[sensitive_index],
            sensitive_rank: rank[sensitive_index],
            global_impact,
            group_diff,
            rank,
        }
    }
}

/// The sensitive feature's row of an [`ImportanceSummary`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitiveImportance {
    pub feature: String,
    pub global_impact: f64,
    pub rank: usize,
    pub group_diff: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathReport {
    pub reweighed: bool,
    pub fairness: FairnessReport,
    pub importance: ImportanceSummary,
    pub sensitive: SensitiveImportance,
    pub explanation_method: Method,
    /// Largest `|fx - phi0 - sum(phi)|` before any sampled adjustment.
    pub max_abs_residual: f64,
}

impl PathReport {
    pub fn from_run(run: &AuditRun, feature_names: &[String], sensitive_index: usize) -> Self {
        let imp = &run.importance;
        PathReport {
            reweighed: run.reweighed,
            fairness: run.fairness.clone(),
            importance: imp.clone(),
            sensitive: SensitiveImportance {
                feature: feature_names[sensitive_index].clone(),
                global_impact: imp.global_impact[sensitive_index],
                rank: imp.rank[sensitive_index],
                group_diff: imp.group_diff[sensitive_index],
            },
            explanation_method: run.explanations.first().map_or(Method::Exact, |e| e.method),
            max_abs_residual: run
                .explanations
                .iter()
                .map(|e| e.residual.abs())
                .fold(0.0, f64::max),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitSummary {
    pub train_rows: usize,
    pub test_rows: usize,
    pub background_rows: usize,
}

/// Contents of `audit_report.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub schema_version: u32,
    pub tool_version: String,
    pub seed: u64,
    pub dataset: crate::data::DatasetConfig,
    pub classifier: ClassifierSpec,
    pub explainer: super::ExplainerSettings,
    pub consistency: ConsistencyOptions,
    pub scenario_rule: ScenarioRule,
    pub split: SplitSummary,
    pub feature_names: Vec<String>,
    pub sensitive_feature: String,
    pub sensitive_index: usize,
    /// Cell weights fitted on the training split, when the reweighed path ran.
    pub reweighing: Option<Vec<CellWeight>>,
    pub baseline: Option<PathReport>,
    pub reweighed: Option<PathReport>,
    pub deltas: Option<Deltas>,
    pub scenario: Option<ScenarioCall>,
}

impl AuditReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }
}

/// Assembles the report from whichever paths ran. The scenario is called on
/// the reweighed path.
pub fn build_report(
    config: &AuditConfig,
    prepared: &PreparedData,
    baseline: Option<&AuditRun>,
    reweighed: Option<&AuditRun>,
    rule: &ScenarioRule,
) -> Result<AuditReport, AuditError> {
    let names = prepared.feature_names();
    let idx = prepared.sensitive_index();
    let (deltas, scenario) = match (baseline, reweighed) {
        (Some(b), Some(r)) => {
            let cmp = super::compare(b, r, idx, rule)?;
            (Some(cmp.deltas), Some(cmp.scenario))
        }
        (None, Some(r)) => (
            None,
            Some(rule.classify(r.fairness.disparate_impact, r.fairness.equal_opportunity)),
        ),
        _ => (None, None),
    };
    Ok(AuditReport {
        schema_version: REPORT_SCHEMA_VERSION,
        tool_version: env!("CARGO_PKG_VERSION").to_owned(),
        seed: config.dataset.seed,
        dataset: config.dataset.clone(),
        classifier: config.classifier.clone(),
        explainer: config.explainer.clone(),
        consistency: config.consistency,
        scenario_rule: *rule,
        split: SplitSummary {
            train_rows: prepared.train.len(),
            test_rows: prepared.test.len(),
            background_rows: prepared.background.len(),
        },
        feature_names: names.to_vec(),
        sensitive_feature: names[idx].clone(),
        sensitive_index: idx,
        reweighing: reweighed
            .and_then(|r| r.weights.as_ref())
            .map(|w| w.cells(prepared.train.group_counts())),
        baseline: baseline.map(|r| PathReport::from_run(r, names, idx)),
        reweighed: reweighed.map(|r| PathReport::from_run(r, names, idx)),
        deltas,
        scenario,
    })
}

/// A trained model together with the preprocessing needed to reuse it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelArtifact {
    pub format_version: u32,
    pub reweighed: bool,
    pub feature_names: Vec<String>,
    pub sensitive_index: usize,
    pub standardization: StandardizationParams,
    pub model: TrainedModel,
}

impl ModelArtifact {
    pub fn new(run: &AuditRun, prepared: &PreparedData) -> Self {
        ModelArtifact {
            format_version: MODEL_FORMAT_VERSION,
            reweighed: run.reweighed,
            feature_names: prepared.feature_names().to_vec(),
            sensitive_index: prepared.sensitive_index(),
            standardization: prepared.standardizer.clone(),
            model: run.model.clone(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("artifact serializes") + "\n"
    }

    pub fn from_json(text: &str) -> Result<Self, AuditError> {
        let artifact: ModelArtifact = serde_json::from_str(text)
            .map_err(|e| AuditError::SchemaMismatch(format!("unreadable model file: {e}")))?;
        if artifact.format_version != MODEL_FORMAT_VERSION {
            return Err(
                crate::model::ModelError::UnsupportedVersion(artifact.format_version).into(),
            );
        }
        Ok(artifact)
    }

    /// The artifact must have been produced from the same encoding and split.
    pub fn check_against(&self, prepared: &PreparedData) -> Result<(), AuditError> {
        if self.feature_names != prepared.feature_names() {
            return Err(AuditError::SchemaMismatch(format!(
                "model has {} features, dataset encodes {}; names differ",
                self.feature_names.len(),
                prepared.feature_names().len()
            )));
        }
        if self.sensitive_index != prepared.sensitive_index() {
            return Err(AuditError::SchemaMismatch(
                "sensitive column position differs".into(),
            ));
        }
        if self.standardization != prepared.standardizer {
            return Err(AuditError::SchemaMismatch(
                "standardization differs; was the model trained with another seed or split?".into(),
            ));
        }
        if self.model.feature_count != self.feature_names.len() {
            return Err(AuditError::SchemaMismatch(
                "model width disagrees with its feature list".into(),
            ));
        }
        Ok(())
    }
}

/// One row per explained instance: `row, <phi per feature>, phi0, fx`.
pub fn explanations_csv<W: Write>(
    out: W,
    feature_names: &[String],
    explanations: &[Explanation],
) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["row".to_owned()];
    header.extend(feature_names.iter().cloned());
    header.push("phi0".into());
    header.push("fx".into());
    w.write_record(&header)?;
    for (i, e) in explanations.iter().enumerate() {
        let mut record = vec![i.to_string()];
        record.extend(e.phi.iter().map(f64::to_string));
        record.push(e.phi0.to_string());
        record.push(e.fx.to_string());
        w.write_record(&record)?;
    }
    w.flush()?;
    Ok(())
}
