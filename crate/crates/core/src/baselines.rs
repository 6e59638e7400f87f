//! Covariate-free baselines: Benjamini–Hochberg step-up and Storey's
//! adaptive variant, plus conversion of z-scores to p-values.

use serde::{Deserialize, Serialize};

use crate::densities::normal_cdf;
use crate::discovery::{check_alpha, DiscoverySet};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Sidedness {
    #[default]
    TwoSided,
    Left,
    Right,
}

pub fn z_to_pvalue(z: f64, sidedness: Sidedness) -> f64 {
    let p = match sidedness {
        Sidedness::TwoSided => 2.0 * normal_cdf(-z.abs()),
        Sidedness::Left => normal_cdf(z),
        Sidedness::Right => normal_cdf(-z),
    };
    p.clamp(0.0, 1.0)
}

fn check_pvalues(pvals: &[f64]) -> Result<()> {
    match pvals.iter().position(|p| !(0.0..=1.0).contains(p)) {
        Some(i) => Err(Error::Domain(format!(
            "p-value {} at index {i} outside [0,1]",
            pvals[i]
        ))),
        None => Ok(()),
    }
}

/// Largest p-value threshold accepted by the step-up rule at `level`, or
/// `None` when nothing qualifies. `level` may exceed 1 (Storey's rescaling).
fn step_up_threshold(pvals: &[f64], level: f64) -> Option<f64> {
    let n = pvals.len();
    let mut sorted = pvals.to_vec();
    sorted.sort_by(f64::total_cmp);
    (1..=n)
        .rev()
        .find(|&k| sorted[k - 1] <= k as f64 * level / n as f64)
        .map(|k| sorted[k - 1])
}

fn reject_at_or_below(pvals: &[f64], threshold: Option<f64>) -> Vec<usize> {
    match threshold {
        Some(t) => (0..pvals.len()).filter(|&i| pvals[i] <= t).collect(),
        None => Vec::new(),
    }
}

/// Benjamini–Hochberg linear step-up procedure.
pub fn bh(pvals: &[f64], alpha: f64) -> Result<DiscoverySet> {
    check_pvalues(pvals)?;
    check_alpha(alpha)?;
    let rejected = reject_at_or_below(pvals, step_up_threshold(pvals, alpha));
    Ok(DiscoverySet::new(rejected, pvals.to_vec(), alpha, "bh"))
}

/// Storey's null-proportion estimate `min(1, #{p > λ0} / ((1 − λ0) n))`,
/// clipped below at `1/n`.
pub fn storey_pi0(pvals: &[f64], lambda0: f64) -> Result<f64> {
    if !(lambda0 > 0.0 && lambda0 < 1.0) {
        return Err(Error::Domain(format!("lambda0 must lie in (0,1), got {lambda0}")));
    }
    let n = pvals.len() as f64;
    if pvals.is_empty() {
        return Ok(1.0);
    }
    let above = pvals.iter().filter(|&&p| p > lambda0).count() as f64;
    Ok((above / ((1.0 - lambda0) * n)).min(1.0).max(1.0 / n))
}

/// BH run at the level `alpha / π̂0`.
pub fn storey_bh(pvals: &[f64], alpha: f64, lambda0: f64) -> Result<DiscoverySet> {
    check_pvalues(pvals)?;
    check_alpha(alpha)?;
    let pi0 = storey_pi0(pvals, lambda0)?;
    let rejected = reject_at_or_below(pvals, step_up_threshold(pvals, alpha / pi0));
    Ok(DiscoverySet::new(rejected, pvals.to_vec(), alpha, "sbh"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pvalue_conversion() {
        assert_eq!(z_to_pvalue(0.0, Sidedness::TwoSided), 1.0);
        assert_eq!(z_to_pvalue(0.0, Sidedness::Left), 0.5);
        assert_eq!(z_to_pvalue(0.0, Sidedness::Right), 0.5);
        assert!((z_to_pvalue(1.96, Sidedness::TwoSided) - 0.05).abs() < 1e-4);
        assert!(z_to_pvalue(-3.0, Sidedness::Left) < 0.01);
        assert!(z_to_pvalue(-3.0, Sidedness::Right) > 0.99);
        assert_eq!(z_to_pvalue(40.0, Sidedness::TwoSided), 0.0);
    }

    #[test]
    fn bh_hand_example() {
        let ds = bh(&[0.01, 0.02, 0.2, 0.9], 0.05).unwrap();
        assert_eq!(ds.rejected, vec![0, 1]);
    }

    #[test]
    fn bh_nothing() {
        assert!(bh(&[0.9, 0.8], 0.05).unwrap().is_empty());
    }

    #[test]
    fn bh_everything() {
        let p = vec![1e-9; 100];
        assert_eq!(bh(&p, 0.1).unwrap().len(), 100);
    }

    #[test]
    fn bh_ties_at_threshold() {
        // p_(2) = 0.02 qualifies (≤ 2·0.05/4); the tied third 0.02 is rejected too.
        let ds = bh(&[0.02, 0.5, 0.02, 0.02], 0.05).unwrap();
        assert_eq!(ds.rejected, vec![0, 2, 3]);
    }

    #[test]
    fn bh_domain_errors() {
        assert!(matches!(bh(&[0.1, 1.2], 0.05), Err(Error::Domain(_))));
        assert!(matches!(bh(&[0.1, -0.1], 0.05), Err(Error::Domain(_))));
        assert!(matches!(bh(&[0.1], 1.0), Err(Error::Domain(_))));
        assert!(matches!(bh(&[0.1], 0.0), Err(Error::Domain(_))));
    }

    #[test]
    fn storey_examples() {
        let p = [0.01, 0.2, 0.6, 0.8, 0.9];
        assert_eq!(storey_pi0(&p, 0.5).unwrap(), 1.0);
        assert_eq!(storey_bh(&p, 0.05, 0.5).unwrap().rejected, bh(&p, 0.05).unwrap().rejected);

        let p = [0.001, 0.002, 0.9, 0.9, 0.9, 0.9, 0.9, 0.9, 0.9, 0.9];
        assert_eq!(storey_pi0(&p, 0.5).unwrap(), 1.0);
        assert_eq!(storey_bh(&p, 0.05, 0.5).unwrap().rejected, bh(&p, 0.05).unwrap().rejected);

        let p = [0.6, 0.7, 0.8, 0.95];
        assert_eq!(storey_pi0(&p, 0.5).unwrap(), 1.0);
        assert!(storey_bh(&p, 0.05, 0.5).unwrap().is_empty());
    }

    #[test]
    fn storey_adapts_when_many_small() {
        // Only one of ten p-values exceeds 0.5: π̂0 = 1/5.
        let p = [0.001, 0.01, 0.02, 0.03, 0.04, 0.06, 0.07, 0.08, 0.09, 0.7];
        assert!((storey_pi0(&p, 0.5).unwrap() - 0.2).abs() < 1e-15);
        let ds = storey_bh(&p, 0.05, 0.5).unwrap();
        assert!(ds.len() > bh(&p, 0.05).unwrap().len());
        assert_eq!(ds.alpha, 0.05);
    }

    #[test]
    fn storey_pi0_floor() {
        let p = [0.0, 0.0, 0.1, 0.2];
        assert_eq!(storey_pi0(&p, 0.5).unwrap(), 0.25);
    }
}
