//! Long-format CSV results and run metadata.

use crate::config::ExperimentConfig;
use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use shaping_core::numeric::{bootstrap_mean_ci, mean};
use std::collections::BTreeMap;
use std::path::Path;

/// One point of one curve. Aggregate rows have no seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub preset: String,
    pub series: String,
    pub seed: Option<u64>,
    pub x: f64,
    pub y: f64,
    pub ci_lo: Option<f64>,
    pub ci_hi: Option<f64>,
}

#[derive(Debug, Default, Clone)]
pub struct Results {
    pub rows: Vec<Row>,
}

const BOOTSTRAP_RESAMPLES: usize = 2000;

impl Results {
    pub fn point(&mut self, preset: &str, series: &str, x: f64, y: f64) {
        self.rows.push(Row { preset: preset.into(), series: series.into(), seed: None, x, y, ci_lo: None, ci_hi: None });
    }

    pub fn point_ci(&mut self, preset: &str, series: &str, x: f64, y: f64, ci: (f64, f64)) {
        self.rows.push(Row {
            preset: preset.into(),
            series: series.into(),
            seed: None,
            x,
            y,
            ci_lo: Some(ci.0),
            ci_hi: Some(ci.1),
        });
    }

    pub fn seeded_ci(&mut self, preset: &str, series: &str, seed: u64, x: f64, y: f64, ci: (f64, f64)) {
        self.rows.push(Row {
            preset: preset.into(),
            series: series.into(),
            seed: Some(seed),
            x,
            y,
            ci_lo: Some(ci.0),
            ci_hi: Some(ci.1),
        });
    }

    /// One row per seed plus the mean with a 95% bootstrap interval.
    pub fn per_seed(&mut self, preset: &str, series: &str, x: f64, values: &[(u64, f64)]) {
        for &(seed, y) in values {
            self.rows.push(Row { preset: preset.into(), series: series.into(), seed: Some(seed), x, y, ci_lo: None, ci_hi: None });
        }
        let ys: Vec<f64> = values.iter().map(|v| v.1).collect();
        let boot_seed = values.iter().fold(x.to_bits(), |a, v| a.rotate_left(7) ^ v.0);
        let ci = bootstrap_mean_ci(&ys, BOOTSTRAP_RESAMPLES, 0.95, boot_seed);
        self.point_ci(preset, series, x, mean(&ys), ci);
    }

    /// Aggregate rows of a series, ordered by x.
    pub fn series(&self, name: &str) -> Vec<&Row> {
        let mut v: Vec<&Row> = self.rows.iter().filter(|r| r.series == name && r.seed.is_none()).collect();
        v.sort_by(|a, b| a.x.total_cmp(&b.x));
        v
    }

    pub fn extend(&mut self, other: Results) {
        self.rows.extend(other.rows);
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
        for r in &self.rows {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let mut r = csv::Reader::from_path(path).with_context(|| format!("opening {}", path.display()))?;
        let headers = r.headers()?.clone();
        let expected = ["preset", "series", "seed", "x", "y", "ci_lo", "ci_hi"];
        if headers.iter().ne(expected) {
            anyhow::bail!("{}: expected columns {:?}, found {:?}", path.display(), expected, headers);
        }
        let rows = r.deserialize().collect::<std::result::Result<Vec<Row>, _>>()?;
        Ok(Self { rows })
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Meta {
    pub preset: String,
    pub tool_version: String,
    pub schema_version: u32,
    pub config: ExperimentConfig,
    pub rows: usize,
    pub series: BTreeMap<String, usize>,
}

pub fn write_meta(path: &Path, preset: &str, cfg: &ExperimentConfig, results: &Results) -> Result<()> {
    let mut series = BTreeMap::new();
    for r in &results.rows {
        *series.entry(r.series.clone()).or_insert(0) += 1;
    }
    let meta = Meta {
        preset: preset.into(),
        tool_version: env!("CARGO_PKG_VERSION").into(),
        schema_version: crate::config::SCHEMA_VERSION,
        config: cfg.clone(),
        rows: results.rows.len(),
        series,
    };
    std::fs::write(path, serde_json::to_string_pretty(&meta)? + "\n")?;
    Ok(())
}
