//! Partition of coefficients into shrinkage groups.

use crate::model::VarSpec;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Grouping {
    /// One group for all lag coefficients.
    #[default]
    Global,
    /// One group per (lag, own/cross) pair.
    #[serde(alias = "semi-global-local")]
    SemiGlobal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CoefClass {
    Own,
    Cross,
    Intercept,
    Covariance,
}

/// Groups of coefficient indices. Indices in `ungrouped` carry a fixed prior
/// variance (the intercept).
#[derive(Debug, Clone, PartialEq)]
pub struct GroupIndex {
    pub n: usize,
    pub groups: Vec<Vec<usize>>,
    pub labels: Vec<String>,
    pub ungrouped: Vec<usize>,
    pub class: Vec<CoefClass>,
    /// 1-based lag per coefficient, 0 where not applicable.
    pub lag: Vec<usize>,
}

impl GroupIndex {
    fn classify(spec: &VarSpec) -> (Vec<CoefClass>, Vec<usize>) {
        let k = spec.k();
        let mut class = vec![CoefClass::Intercept; spec.n()];
        let mut lag = vec![0; spec.n()];
        for eq in 0..spec.m {
            for row in 0..k {
                let j = spec.vec_index(row, eq);
                if let Some((r, var)) = spec.row_lag_var(row) {
                    class[j] = if var == eq { CoefClass::Own } else { CoefClass::Cross };
                    lag[j] = r;
                }
            }
        }
        (class, lag)
    }

    fn build(n: usize, class: Vec<CoefClass>, lag: Vec<usize>, keyed: Vec<(String, usize)>) -> Self {
        let mut labels: Vec<String> = Vec::new();
        let mut groups: Vec<Vec<usize>> = Vec::new();
        let mut ungrouped = Vec::new();
        for (j, (key, _)) in keyed.iter().enumerate() {
            if key.is_empty() {
                ungrouped.push(j);
                continue;
            }
            match labels.iter().position(|l| l == key) {
                Some(g) => groups[g].push(j),
                None => {
                    labels.push(key.clone());
                    groups.push(vec![j]);
                }
            }
        }
        // order groups by their sort key for a stable layout
        let mut order: Vec<usize> = (0..labels.len()).collect();
        order.sort_by_key(|&g| keyed[groups[g][0]].1);
        GroupIndex {
            n,
            groups: order.iter().map(|&g| groups[g].clone()).collect(),
            labels: order.iter().map(|&g| labels[g].clone()).collect(),
            ungrouped,
            class,
            lag,
        }
    }

    /// Groups for vec(Phi).
    pub fn for_phi(spec: &VarSpec, grouping: Grouping) -> Self {
        let (class, lag) = Self::classify(spec);
        let keyed = (0..spec.n())
            .map(|j| match (class[j], grouping) {
                (CoefClass::Intercept, _) => (String::new(), 0),
                (_, Grouping::Global) => ("all".to_string(), 0),
                (CoefClass::Own, Grouping::SemiGlobal) => (format!("lag{}_own", lag[j]), 2 * lag[j]),
                (_, Grouping::SemiGlobal) => (format!("lag{}_cross", lag[j]), 2 * lag[j] + 1),
            })
            .collect();
        Self::build(spec.n(), class, lag, keyed)
    }

    /// Own-lag and cross-lag groups across all lags.
    pub fn own_cross(spec: &VarSpec) -> Self {
        let (class, lag) = Self::classify(spec);
        let keyed = (0..spec.n())
            .map(|j| match class[j] {
                CoefClass::Own => ("own".to_string(), 0),
                CoefClass::Cross => ("cross".to_string(), 1),
                _ => (String::new(), 0),
            })
            .collect();
        Self::build(spec.n(), class, lag, keyed)
    }

    /// (lag, own/cross) groups regardless of the prior's grouping, for sparsity summaries.
    pub fn lag_class(spec: &VarSpec) -> Self {
        Self::for_phi(spec, Grouping::SemiGlobal)
    }

    /// A single group holding every free element of the covariance factor.
    pub fn for_l(n_l: usize) -> Self {
        let keyed = (0..n_l).map(|_| ("l".to_string(), 0)).collect();
        Self::build(n_l, vec![CoefClass::Covariance; n_l], vec![0; n_l], keyed)
    }

    /// Group number of each coefficient (None for ungrouped).
    pub fn membership(&self) -> Vec<Option<usize>> {
        let mut out = vec![None; self.n];
        for (g, idx) in self.groups.iter().enumerate() {
            for &j in idx {
                out[j] = Some(g);
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn groups_partition_coefficients() {
        let spec = VarSpec::new(3, 2, true).unwrap();
        for g in [GroupIndex::for_phi(&spec, Grouping::Global), GroupIndex::for_phi(&spec, Grouping::SemiGlobal), GroupIndex::own_cross(&spec)] {
            let mut seen = vec![0; spec.n()];
            for idx in &g.groups {
                for &j in idx {
                    seen[j] += 1;
                }
            }
            for &j in &g.ungrouped {
                seen[j] += 1;
            }
            assert!(seen.iter().all(|&c| c == 1));
            assert_eq!(g.ungrouped.len(), 3);
        }
        let sg = GroupIndex::for_phi(&spec, Grouping::SemiGlobal);
        assert_eq!(sg.labels, vec!["lag1_own", "lag1_cross", "lag2_own", "lag2_cross"]);
        assert_eq!(sg.groups[0].len(), 3);
        assert_eq!(sg.groups[1].len(), 6);
    }

    #[test]
    fn single_series_has_no_cross_group() {
        let spec = VarSpec::new(1, 2, false).unwrap();
        let sg = GroupIndex::for_phi(&spec, Grouping::SemiGlobal);
        assert_eq!(sg.labels, vec!["lag1_own", "lag2_own"]);
    }

    #[test]
    fn own_lag_detection() {
        let spec = VarSpec::new(2, 1, false).unwrap();
        let g = GroupIndex::own_cross(&spec);
        // vec(Phi): (row0,eq0) own, (row1,eq0) cross, (row0,eq1) cross, (row1,eq1) own
        assert_eq!(g.groups[0], vec![0, 3]);
        assert_eq!(g.groups[1], vec![1, 2]);
    }
}
