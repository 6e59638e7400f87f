//! Discovery sets and their evaluation against known truth.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Rejected hypotheses together with the per-test scores that ranked them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscoverySet {
    /// Row indices, ascending.
    pub rejected: Vec<usize>,
    /// p-values for the baselines, posteriors for the two-groups model.
    pub scores: Vec<f64>,
    pub alpha: f64,
    pub method: String,
}

impl DiscoverySet {
    pub(crate) fn new(mut rejected: Vec<usize>, scores: Vec<f64>, alpha: f64, method: &str) -> Self {
        rejected.sort_unstable();
        DiscoverySet {
            rejected,
            scores,
            alpha,
            method: method.to_owned(),
        }
    }

    pub fn len(&self) -> usize {
        self.rejected.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rejected.is_empty()
    }

    pub fn n(&self) -> usize {
        self.scores.len()
    }

    /// 0/1 rejection flag per row.
    pub fn flags(&self) -> Vec<bool> {
        let mut flags = vec![false; self.scores.len()];
        for &i in &self.rejected {
            flags[i] = true;
        }
        flags
    }

    /// Writes `id,score,rejected` rows.
    pub fn write_csv<W: Write>(&self, ids: &[String], writer: W) -> Result<()> {
        if ids.len() != self.scores.len() {
            return Err(Error::Shape(format!(
                "{} ids for {} scores",
                ids.len(),
                self.scores.len()
            )));
        }
        let flags = self.flags();
        let mut wtr = csv::Writer::from_writer(writer);
        wtr.write_record(["id", "score", "rejected"])?;
        for ((id, score), flag) in ids.iter().zip(&self.scores).zip(flags) {
            wtr.write_record([
                id.as_str(),
                &crate::data::fmt_f64(*score),
                if flag { "1" } else { "0" },
            ])?;
        }
        wtr.flush().map_err(|e| Error::io("<csv writer>", e))?;
        Ok(())
    }
}

pub(crate) fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("alpha must lie in (0,1), got {alpha}")))
    }
}

/// Realized error and power of a discovery set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub fdp: f64,
    pub power: f64,
    pub discoveries: usize,
    pub true_discoveries: usize,
    pub false_discoveries: usize,
    pub alternatives: usize,
}

/// False discovery proportion and power, with 0/0 read as 0.
pub fn fdp_power(ds: &DiscoverySet, truth: &[u8]) -> Result<Metrics> {
    if truth.len() != ds.n() {
        return Err(Error::Shape(format!(
            "truth has {} entries, discovery set covers {}",
            truth.len(),
            ds.n()
        )));
    }
    let true_discoveries = ds.rejected.iter().filter(|&&i| truth[i] == 1).count();
    let false_discoveries = ds.len() - true_discoveries;
    let alternatives = truth.iter().filter(|&&h| h == 1).count();
    Ok(Metrics {
        fdp: false_discoveries as f64 / ds.len().max(1) as f64,
        power: true_discoveries as f64 / alternatives.max(1) as f64,
        discoveries: ds.len(),
        true_discoveries,
        false_discoveries,
        alternatives,
    })
}
