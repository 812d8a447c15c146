use serde::{Deserialize, Serialize};

use crate::fairness::DisparateImpact;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    EqualityBetweenGroups,
    FavorsPrivileged,
    FavorsUnprivileged,
}

/// Tolerances for calling group parity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScenarioRule {
    pub eps_disparate_impact: f64,
    pub eps_equal_opportunity: f64,
}

impl Default for ScenarioRule {
    fn default() -> Self {
        Self {
            eps_disparate_impact: 0.05,
            eps_equal_opportunity: 0.02,
        }
    }
}

/// Which clause of the rule fired.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RuleBranch {
    WithinTolerance,
    BothBelowParity,
    AboveParity,
    /// No strict inequality on either side of parity: EOP <= 0 and DI <= 1
    /// with one of them exactly at parity.
    Residual,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evidence {
    pub disparate_impact: DisparateImpact,
    /// Value the rule compared; infinite ratios compare as +inf and 0/0 as 1.
    pub disparate_impact_compared: f64,
    pub equal_opportunity: f64,
    pub rule: ScenarioRule,
    pub branch: RuleBranch,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioCall {
    pub label: Scenario,
    pub evidence: Evidence,
}

impl ScenarioRule {
    /// Total over every `(DI, EOP)` pair:
    ///
    /// 1. `|EOP| <= eps_eop` and `|DI - 1| <= eps_di`: equality between groups.
    /// 2. `DI < 1` and `EOP < 0`: favors the privileged group.
    /// 3. `DI > 1` or `EOP > 0`: favors the unprivileged group.
    /// 4. Anything left has `EOP <= 0` and `DI <= 1`: favors the privileged group.
    pub fn classify(
        &self,
        disparate_impact: DisparateImpact,
        equal_opportunity: f64,
    ) -> ScenarioCall {
        let di = match disparate_impact {
            DisparateImpact::Defined(v) => v,
            DisparateImpact::Infinite => f64::INFINITY,
            DisparateImpact::Indeterminate => 1.0,
        };
        let eop = equal_opportunity;
        let (label, branch) = if eop.abs() <= self.eps_equal_opportunity
            && (di - 1.0).abs() <= self.eps_disparate_impact
        {
            (Scenario::EqualityBetweenGroups, RuleBranch::WithinTolerance)
        } else if di < 1.0 && eop < 0.0 {
            (Scenario::FavorsPrivileged, RuleBranch::BothBelowParity)
        } else if di > 1.0 || eop > 0.0 {
            (Scenario::FavorsUnprivileged, RuleBranch::AboveParity)
        } else {
            (Scenario::FavorsPrivileged, RuleBranch::Residual)
        };
        ScenarioCall {
            label,
            evidence: Evidence {
                disparate_impact,
                disparate_impact_compared: di,
                equal_opportunity,
                rule: *self,
                branch,
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn call(di: f64, eop: f64) -> Scenario {
        ScenarioRule::default()
            .classify(DisparateImpact::Defined(di), eop)
            .label
    }

    #[test]
    fn named_cases() {
        assert_eq!(call(1.0, 0.0), Scenario::EqualityBetweenGroups);
        assert_eq!(call(0.8, -0.05), Scenario::FavorsPrivileged);
        assert_eq!(call(0.8, 0.04), Scenario::FavorsUnprivileged);
        assert_eq!(call(1.2, 0.04), Scenario::FavorsUnprivileged);
        assert_eq!(call(1.0, -0.1), Scenario::FavorsPrivileged);
        assert_eq!(call(0.7, 0.0), Scenario::FavorsPrivileged);
    }

    #[test]
    fn undefined_ratios() {
        let rule = ScenarioRule::default();
        assert_eq!(
            rule.classify(DisparateImpact::Infinite, -0.1).label,
            Scenario::FavorsUnprivileged
        );
        assert_eq!(
            rule.classify(DisparateImpact::Indeterminate, 0.0).label,
            Scenario::EqualityBetweenGroups
        );
    }

    proptest! {
        #[test]
        fn label_reproducible_from_evidence(di in 0.0f64..3.0, eop in -1.0f64..1.0) {
            let c = ScenarioRule::default().classify(DisparateImpact::Defined(di), eop);
            let again = c.evidence.rule.classify(c.evidence.disparate_impact, c.evidence.equal_opportunity);
            prop_assert_eq!(c, again);
        }
    }
}
