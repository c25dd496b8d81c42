use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::Serialize;

use super::bench::{BenchConfig, BenchTable, Fit};
use super::plots::{plot_bench, plot_scores, PlotError};
use super::scenario::Scenario;
use super::sim::{ProbeResult, RunStats, SimOutput};
use crate::sigcrypt::hash;

/// Describes one run directory.
#[derive(Clone, Debug, Serialize)]
pub struct Manifest {
    pub scenario: String,
    pub seed: u64,
    pub version: &'static str,
    /// File name to SHA-256 of its contents.
    pub files: BTreeMap<String, String>,
    pub probes: Vec<ProbeResult>,
    pub stats: RunStats,
    pub config: Scenario,
}

/// Writes the event log, scores, chain files, scenario copy, score chart
/// and a manifest into `dir`.
pub fn write_run(out: &SimOutput, scenario: &Scenario, dir: &Path) -> Result<Manifest, PlotError> {
    fs::create_dir_all(dir)?;
    let scores = out.scores_csv();
    let mut files: Vec<(String, Vec<u8>)> = vec![
        ("events.jsonl".into(), out.log.to_jsonl().into_bytes()),
        ("scores.csv".into(), scores.clone().into_bytes()),
        ("scenario.toml".into(), scenario.to_toml().into_bytes()),
        ("scores.svg".into(), plot_scores("scores.csv", &scores)?.into_bytes()),
    ];
    files.extend(out.chain_files().into_iter().map(|(n, b)| (n.to_owned(), b)));

    let digests = write_files(dir, &files)?;
    let manifest = Manifest {
        scenario: scenario.name.clone(),
        seed: scenario.seed,
        version: env!("CARGO_PKG_VERSION"),
        files: digests,
        probes: out.probes.clone(),
        stats: out.stats.clone(),
        config: scenario.clone(),
    };
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    fs::write(dir.join("manifest.json"), text)?;
    Ok(manifest)
}

#[derive(Clone, Debug, Serialize)]
pub struct BenchManifest {
    pub version: &'static str,
    pub seed: u64,
    pub files: BTreeMap<String, String>,
    pub fit: Fit,
    pub config: BenchConfig,
}

/// Writes `bench.csv`, `bench.svg` and a manifest into `dir`.
pub fn write_bench(table: &BenchTable, dir: &Path) -> Result<BenchManifest, PlotError> {
    fs::create_dir_all(dir)?;
    let csv = table.to_csv();
    let files = vec![
        ("bench.svg".to_owned(), plot_bench("bench.csv", &csv)?.into_bytes()),
        ("bench.csv".to_owned(), csv.into_bytes()),
    ];
    let manifest = BenchManifest {
        version: env!("CARGO_PKG_VERSION"),
        seed: table.config.seed,
        files: write_files(dir, &files)?,
        fit: table.log_fit(),
        config: table.config.clone(),
    };
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    fs::write(dir.join("manifest.json"), text)?;
    Ok(manifest)
}

fn write_files(dir: &Path, files: &[(String, Vec<u8>)]) -> Result<BTreeMap<String, String>, PlotError> {
    let mut digests = BTreeMap::new();
    for (name, bytes) in files {
        fs::write(dir.join(name), bytes)?;
        digests.insert(name.clone(), hash(bytes).to_hex());
    }
    Ok(digests)
}
