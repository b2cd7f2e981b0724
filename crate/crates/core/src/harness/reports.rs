//! Report files written at the end of a run.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::metrics::RankTable;

use super::RunManifest;

pub(crate) const ARTIFACTS: [&str; 5] =
    ["metrics.csv", "ranks.csv", "ranks.md", "cd_data.csv", "manifest.json"];

/// One metrics.csv row: a (dataset, model, rate) cell of the protocol grid.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricRow {
    pub dataset: String,
    pub model: String,
    pub rate: f64,
    pub metric: String,
    pub value: f64,
    pub m: usize,
    pub runtime_s: f64,
}

pub(crate) fn metrics_csv(rows: &[MetricRow]) -> String {
    let mut out = String::from("dataset,model,rate,metric,value,m,runtime_s\n");
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.dataset, r.model, r.rate, r.metric, r.value, r.m, r.runtime_s
        )
        .expect("string write");
    }
    out
}

fn rank_texts(ranks: &[(f64, RankTable)]) -> (String, String, String) {
    let mut rank_csv = String::from("rate,model,mean_rank,friedman_stat,cd\n");
    let mut md = String::from("# Rank tables\n");
    let mut cd_csv = String::from("rate,model,mean_rank,cd\n");
    for (rate, table) in ranks {
        for line in table.csv().lines().skip(1) {
            writeln!(rank_csv, "{rate},{line}").expect("string write");
        }
        for line in table.cd_rows().lines().skip(1) {
            writeln!(cd_csv, "{rate},{line}").expect("string write");
        }
        writeln!(md, "\n## rate {rate}\n").expect("string write");
        md.push_str(&table.markdown());
    }
    (rank_csv, md, cd_csv)
}

fn write_all(out: &Path, files: &[(&str, &str)]) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let mut written = Vec::new();
    for (name, text) in files {
        let path = out.join(name);
        fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        written.push(path);
    }
    Ok(written)
}

/// Writes just ranks.csv, ranks.md, and cd_data.csv under `out`.
pub fn write_rank_reports(ranks: &[(f64, RankTable)], out: &Path) -> Result<Vec<PathBuf>> {
    let (rank_csv, md, cd_csv) = rank_texts(ranks);
    write_all(out, &[("ranks.csv", &rank_csv), ("ranks.md", &md), ("cd_data.csv", &cd_csv)])
}

/// Writes metrics.csv, the rank reports, and manifest.json under `out`;
/// returns the paths written.
pub fn emit_reports(
    rows: &[MetricRow],
    ranks: &[(f64, RankTable)],
    manifest: &RunManifest,
    out: &Path,
) -> Result<Vec<PathBuf>> {
    let metrics = metrics_csv(rows);
    let (rank_csv, md, cd_csv) = rank_texts(ranks);
    let mut manifest_json = serde_json::to_string_pretty(manifest)?;
    manifest_json.push('\n');
    write_all(
        out,
        &[
            ("metrics.csv", &metrics),
            ("ranks.csv", &rank_csv),
            ("ranks.md", &md),
            ("cd_data.csv", &cd_csv),
            ("manifest.json", &manifest_json),
        ],
    )
}
