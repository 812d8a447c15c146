//! Tables behind dependence and summary plots. Feature values are the
//! encoded, unstandardized test values.

use std::io::Write;

use super::{global_impact, AuditError};
use crate::data::Dataset;
use crate::shap::Explanation;

#[derive(Debug, Clone, PartialEq)]
pub struct DependenceRow {
    pub row: usize,
    pub value: f64,
    pub phi: f64,
    pub color: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub feature: String,
    pub rank: usize,
    pub global_impact: f64,
    pub row: usize,
    pub phi: f64,
    pub value: f64,
}

fn feature(data: &Dataset, name: &str) -> Result<usize, AuditError> {
    data.feature_index(name)
        .ok_or_else(|| AuditError::UnknownFeature(name.to_owned()))
}

fn check_aligned(explanations: &[Explanation], data: &Dataset) -> Result<(), AuditError> {
    if explanations.len() != data.len() {
        return Err(AuditError::SchemaMismatch(format!(
            "{} explanations for {} rows",
            explanations.len(),
            data.len()
        )));
    }
    Ok(())
}

pub fn dependence_table(
    explanations: &[Explanation],
    data: &Dataset,
    name: &str,
    color: Option<&str>,
) -> Result<Vec<DependenceRow>, AuditError> {
    check_aligned(explanations, data)?;
    let j = feature(data, name)?;
    let c = color.map(|c| feature(data, c)).transpose()?;
    Ok(explanations
        .iter()
        .zip(&data.features)
        .enumerate()
        .map(|(row, (e, x))| DependenceRow {
            row,
            value: x[j],
            phi: e.phi[j],
            color: c.map(|c| x[c]),
        })
        .collect())
}

/// Long-format attribution distribution, features in rank order.
pub fn summary_table(
    explanations: &[Explanation],
    data: &Dataset,
) -> Result<Vec<SummaryRow>, AuditError> {
    check_aligned(explanations, data)?;
    let global = global_impact(explanations)?;
    let mut order: Vec<usize> = (0..global.rank.len()).collect();
    order.sort_by_key(|&j| global.rank[j]);
    let mut rows = Vec::with_capacity(order.len() * explanations.len());
    for j in order {
        for (row, (e, x)) in explanations.iter().zip(&data.features).enumerate() {
            rows.push(SummaryRow {
                feature: data.feature_names[j].clone(),
                rank: global.rank[j],
                global_impact: global.global_impact[j],
                row,
                phi: e.phi[j],
                value: x[j],
            });
        }
    }
    Ok(rows)
}

/// Writes labelled dependence tables (one label per audit path).
pub fn write_dependence_csv<W: Write>(
    out: W,
    tables: &[(&str, &[DependenceRow])],
) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["path", "row", "value", "phi", "color"])?;
    for (label, rows) in tables {
        for r in rows.iter() {
            w.write_record([
                label.to_string(),
                r.row.to_string(),
                r.value.to_string(),
                r.phi.to_string(),
                r.color.map(|c| c.to_string()).unwrap_or_default(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_summary_csv<W: Write>(
    out: W,
    tables: &[(&str, &[SummaryRow])],
) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "path",
        "feature",
        "rank",
        "global_impact",
        "row",
        "phi",
        "value",
    ])?;
    for (label, rows) in tables {
        for r in rows.iter() {
            w.write_record([
                label.to_string(),
                r.feature.clone(),
                r.rank.to_string(),
                r.global_impact.to_string(),
                r.row.to_string(),
                r.phi.to_string(),
                r.value.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::audit::importance::tests::explanation;
    use crate::audit::importance_summary;
    use crate::data::EncodingSchema;

    fn data() -> Dataset {
        Dataset {
            features: vec![
                vec![1.0, 5.0, 0.0],
                vec![2.0, 5.0, 1.0],
                vec![3.0, 5.0, 1.0],
            ],
            feature_names: vec!["a".into(), "const".into(), "s".into()],
            target: vec![1, 0, 1],
            sensitive: vec![0, 1, 1],
            weights: vec![1.0; 3],
            sensitive_index: 2,
            schema: EncodingSchema {
                columns: vec![],
                target_column: "y".into(),
                favorable_label: "1".into(),
                unfavorable_label: "0".into(),
                privileged_values: vec![],
                unprivileged_values: vec![],
            },
        }
    }

    fn explanations() -> Vec<Explanation> {
        vec![
            explanation(vec![0.1, 0.0, -0.3]),
            explanation(vec![-0.2, 0.0, 0.2]),
            explanation(vec![0.4, 0.0, 0.1]),
        ]
    }

    #[test]
    fn constant_feature_gives_constant_axis() {
        let t = dependence_table(&explanations(), &data(), "const", Some("a")).unwrap();
        assert!(t.iter().all(|r| r.value == 5.0 && r.phi == 0.0));
        assert_eq!(
            t.iter().map(|r| r.color.unwrap()).collect::<Vec<_>>(),
            [1.0, 2.0, 3.0]
        );
    }

    #[test]
    fn summary_ranks_match_importance() {
        let ex = explanations();
        let rows = summary_table(&ex, &data()).unwrap();
        let imp = importance_summary(&ex, &data().sensitive).unwrap();
        assert_eq!(rows.len(), 9);
        for r in &rows {
            let j = data().feature_index(&r.feature).unwrap();
            assert_eq!(r.rank, imp.rank[j]);
        }
        let firsts: Vec<_> = rows.chunks(3).map(|c| c[0].rank).collect();
        assert_eq!(firsts, [1, 2, 3]);
    }

    #[test]
    fn unknown_feature() {
        assert!(matches!(
            dependence_table(&explanations(), &data(), "nope", None),
            Err(AuditError::UnknownFeature(_))
        ));
    }

    #[test]
    fn csv_layout() {
        let t = dependence_table(&explanations(), &data(), "a", None).unwrap();
        let mut buf = Vec::new();
        write_dependence_csv(&mut buf, &[("baseline", &t)]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().next().unwrap(), "path,row,value,phi,color");
        assert_eq!(text.lines().nth(1).unwrap(), "baseline,0,1,0.1,");
    }
}
