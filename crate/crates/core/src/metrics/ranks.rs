//! Friedman rank aggregation with the Nemenyi critical difference.

use crate::error::{Error, Result};

/// Studentized-range q_{0.05} / sqrt(2) for k = 2..=10 (infinite df), the
/// constants behind critical-difference diagrams.
const Q_05: [f64; 9] = [1.960, 2.343, 2.569, 2.728, 2.850, 2.949, 3.031, 3.102, 3.164];

#[derive(Debug, Clone, PartialEq)]
pub struct RankTable {
    pub models: Vec<String>,
    pub datasets: Vec<String>,
    /// scores[model][dataset]; lower is better.
    pub scores: Vec<Vec<f64>>,
    /// ranks[model][dataset]; ties share the average rank.
    pub ranks: Vec<Vec<f64>>,
    pub mean_ranks: Vec<f64>,
    pub friedman_stat: f64,
    /// Nemenyi CD at alpha = 0.05; None for k > 10.
    pub cd: Option<f64>,
}

impl RankTable {
    /// model,mean_rank,friedman_stat,cd rows.
    pub fn csv(&self) -> String {
        let mut out = String::from("model,mean_rank,friedman_stat,cd\n");
        let cd = self.cd.map(|c| c.to_string()).unwrap_or_default();
        for (m, mean) in self.models.iter().zip(&self.mean_ranks) {
            out.push_str(&format!("{m},{mean},{},{}\n", self.friedman_stat, cd));
        }
        out
    }

    /// (model, mean_rank, cd) triples for external CD-diagram plotting.
    pub fn cd_rows(&self) -> String {
        let mut out = String::from("model,mean_rank,cd\n");
        let cd = self.cd.map(|c| c.to_string()).unwrap_or_default();
        for (m, mean) in self.models.iter().zip(&self.mean_ranks) {
            out.push_str(&format!("{m},{mean},{cd}\n"));
        }
        out
    }

    pub fn markdown(&self) -> String {
        let mut out = String::from("| model | mean rank |");
        for d in &self.datasets {
            out.push_str(&format!(" {d} |"));
        }
        out.push('\n');
        out.push_str("|---|---|");
        out.push_str(&"---|".repeat(self.datasets.len()));
        out.push('\n');
        let mut order: Vec<usize> = (0..self.models.len()).collect();
        order.sort_by(|a, b| self.mean_ranks[*a].total_cmp(&self.mean_ranks[*b]));
        for i in order {
            out.push_str(&format!("| {} | {:.3} |", self.models[i], self.mean_ranks[i]));
            for d in 0..self.datasets.len() {
                out.push_str(&format!(" {:.4} |", self.scores[i][d]));
            }
            out.push('\n');
        }
        out.push_str(&format!("\nFriedman chi2 = {:.4}", self.friedman_stat));
        match self.cd {
            Some(cd) => out.push_str(&format!(", Nemenyi CD (alpha=0.05) = {cd:.4}\n")),
            None => out.push_str(", CD unavailable for k > 10\n"),
        }
        out
    }
}

/// CD at alpha = 0.05 for k models over n datasets; None for k outside
/// the tabulated 2..=10.
pub(crate) fn nemenyi_cd(k: usize, n: usize) -> Option<f64> {
    (2..=10).contains(&k).then(|| Q_05[k - 2] * ((k * (k + 1)) as f64 / (6.0 * n as f64)).sqrt())
}

/// Ranks per dataset column with average ties (rank 1 = lowest score).
pub(crate) fn column_ranks(scores: &[Vec<f64>], dataset: usize) -> Vec<f64> {
    let k = scores.len();
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|a, b| scores[*a][dataset].total_cmp(&scores[*b][dataset]));
    let mut ranks = vec![0.0; k];
    let mut pos = 0;
    while pos < k {
        let mut end = pos + 1;
        while end < k && scores[order[end]][dataset] == scores[order[pos]][dataset] {
            end += 1;
        }
        // Positions pos..end hold ranks pos+1..end+1; ties share the mean.
        let avg = (pos + 1 + end) as f64 / 2.0;
        for &model in &order[pos..end] {
            ranks[model] = avg;
        }
        pos = end;
    }
    ranks
}

pub fn friedman_ranks(
    models: &[String],
    datasets: &[String],
    scores: &[Vec<f64>],
) -> Result<RankTable> {
    let k = models.len();
    let n = datasets.len();
    if k < 2 || n < 2 {
        return Err(Error::InvalidArgument(format!(
            "rank aggregation needs k >= 2 models and N >= 2 datasets, got k={k}, N={n}"
        )));
    }
    if scores.len() != k || scores.iter().any(|row| row.len() != n) {
        return Err(Error::InvalidArgument("score matrix shape mismatch".into()));
    }
    if scores.iter().flatten().any(|s| !s.is_finite()) {
        return Err(Error::InvalidArgument("scores must be finite".into()));
    }

    let mut ranks = vec![vec![0.0; n]; k];
    for d in 0..n {
        for (model, r) in column_ranks(scores, d).into_iter().enumerate() {
            ranks[model][d] = r;
        }
    }
    let mean_ranks: Vec<f64> =
        ranks.iter().map(|row| row.iter().sum::<f64>() / n as f64).collect();

    let kf = k as f64;
    let nf = n as f64;
    let sum_sq: f64 = mean_ranks.iter().map(|r| r * r).sum();
    let friedman_stat = 12.0 * nf / (kf * (kf + 1.0)) * (sum_sq - kf * (kf + 1.0).powi(2) / 4.0);

    let cd = nemenyi_cd(k, n);

    Ok(RankTable {
        models: models.to_vec(),
        datasets: datasets.to_vec(),
        scores: scores.to_vec(),
        ranks,
        mean_ranks,
        friedman_stat,
        cd,
    })
}
