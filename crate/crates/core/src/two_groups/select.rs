use crate::discovery::{check_alpha, DiscoverySet};
use crate::error::{Error, Result};

/// Rejects the largest prefix of tests, ranked by descending posterior,
/// whose mean posterior null probability stays at or below `alpha`.
///
/// Ties in the posterior keep ascending row order.
pub fn select_discoveries(posteriors: &[f64], alpha: f64) -> Result<DiscoverySet> {
    check_alpha(alpha)?;
    if let Some(i) = posteriors.iter().position(|w| !(0.0..=1.0).contains(w)) {
        return Err(Error::Domain(format!(
            "posterior {} at index {i} outside [0,1]",
            posteriors[i]
        )));
    }
    let mut order: Vec<usize> = (0..posteriors.len()).collect();
    order.sort_by(|&i, &j| posteriors[j].total_cmp(&posteriors[i]));

    let mut null_mass = 0.0;
    let mut m = 0;
    for (rank, &i) in order.iter().enumerate() {
        null_mass += 1.0 - posteriors[i];
        if null_mass / (rank + 1) as f64 <= alpha {
            m = rank + 1;
        }
    }
    order.truncate(m);
    Ok(DiscoverySet::new(order, posteriors.to_vec(), alpha, "neurt"))
}
