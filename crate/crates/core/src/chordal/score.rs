//! Conditional-independence scoring for forward selection: the G² test of
//! a ⟂ b | S with a family-size Bonferroni threshold.

use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{Error, Result};

use super::table::Table;

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreConfig {
    pub alpha: f64,
    /// Largest allowed clique (vertex count) after an accepted edge.
    pub max_clique: usize,
    /// Largest allowed clique table (state-cell count); the memory bound.
    pub max_cells: usize,
}

impl Default for ScoreConfig {
    fn default() -> Self {
        // 8 states per variable at the clique-size cap of 5.
        ScoreConfig { alpha: 0.05, max_clique: 5, max_cells: 8usize.pow(5) }
    }
}

impl ScoreConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::InvalidArgument(format!("alpha {} outside (0, 1)", self.alpha)));
        }
        if self.max_clique < 2 {
            return Err(Error::InvalidArgument("max clique below 2 admits no edges".into()));
        }
        Ok(())
    }
}

/// G² = 2 Σ O ln(O/E) over the {a, b} margins within each stratum of S,
/// E the usual independence expectation r_i c_j / N_s; O = 0 terms drop.
/// df = (|a|-1)(|b|-1) Π|s|. Returns (statistic, df, p).
pub fn g2_score(counts: &Table, a: usize, b: usize) -> Result<(f64, usize, f64)> {
    if counts.cells() == 0 {
        return Err(Error::InvalidArgument("zero-width contingency table".into()));
    }
    let pa = counts
        .vars
        .binary_search(&a)
        .map_err(|_| Error::InvalidArgument(format!("attribute {a} not in table")))?;
    let pb = counts
        .vars
        .binary_search(&b)
        .map_err(|_| Error::InvalidArgument(format!("attribute {b} not in table")))?;
    if pa == pb {
        return Err(Error::InvalidArgument("a and b must differ".into()));
    }
    let (ca, cb) = (counts.cards[pa], counts.cards[pb]);
    let strata: usize = counts
        .cards
        .iter()
        .enumerate()
        .filter(|(p, _)| *p != pa && *p != pb)
        .map(|(_, c)| *c)
        .product();
    let df = (ca - 1) * (cb - 1) * strata;

    // Per stratum: O matrix, row sums, column sums. Walk linearly.
    let mut obs = vec![vec![0.0; ca * cb]; strata];
    let mut digits = vec![0usize; counts.vars.len()];
    for v in &counts.values {
        let mut s = 0;
        for (p, d) in digits.iter().enumerate() {
            if p != pa && p != pb {
                s = s * counts.cards[p] + d;
            }
        }
        obs[s][digits[pa] * cb + digits[pb]] += v;
        // odometer
        for k in (0..digits.len()).rev() {
            digits[k] += 1;
            if digits[k] < counts.cards[k] {
                break;
            }
            digits[k] = 0;
        }
    }

    let mut g2 = 0.0;
    for o in &obs {
        let n_s: f64 = o.iter().sum();
        if n_s == 0.0 {
            continue;
        }
        let rows: Vec<f64> = (0..ca).map(|i| o[i * cb..(i + 1) * cb].iter().sum()).collect();
        let cols: Vec<f64> = (0..cb).map(|j| (0..ca).map(|i| o[i * cb + j]).sum()).collect();
        for i in 0..ca {
            for j in 0..cb {
                let v = o[i * cb + j];
                if v > 0.0 {
                    let e = rows[i] * cols[j] / n_s;
                    g2 += 2.0 * v * (v / e).ln();
                }
            }
        }
    }
    // Tiny negative values from cancellation round to zero.
    if g2 < 0.0 && g2 > -1e-9 {
        g2 = 0.0;
    }

    if df == 0 {
        return Ok((g2, 0, 1.0));
    }
    let p = ChiSquared::new(df as f64)
        .map_err(|e| Error::InvalidArgument(format!("chi-square df {df}: {e}")))?
        .sf(g2);
    Ok((g2, df, p))
}
