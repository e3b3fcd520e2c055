//! Regression comparison of two result files.

use crate::output::{Results, Row};
use anyhow::{bail, Result};
use serde::Serialize;
use std::collections::BTreeMap;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    pub abs: f64,
    pub rel: f64,
    /// Accept points whose confidence intervals intersect.
    pub ci_overlap: bool,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self { abs: 1e-9, rel: 0.0, ci_overlap: false }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SeriesReport {
    pub preset: String,
    pub series: String,
    pub points: usize,
    pub max_deviation: f64,
    pub failures: usize,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct CompareReport {
    pub series: Vec<SeriesReport>,
    pub pass: bool,
}

impl CompareReport {
    pub fn failing(&self) -> Vec<&SeriesReport> {
        self.series.iter().filter(|s| !s.pass).collect()
    }
}

type Key = (String, String, Option<u64>, u64);

fn key(r: &Row) -> Key {
    (r.preset.clone(), r.series.clone(), r.seed, r.x.to_bits())
}

fn ci_of(r: &Row) -> Option<(f64, f64)> {
    Some((r.ci_lo?, r.ci_hi?))
}

fn overlaps(b: &Row, r: &Row) -> bool {
    matches!((ci_of(b), ci_of(r)), (Some(cb), Some(cr)) if cb.0 <= cr.1 && cr.0 <= cb.1)
}

/// Compare every row of `run` against `baseline`. Both files must hold the
/// same set of (preset, series, seed, x) keys. In CI-overlap mode a per-seed
/// row without an interval is judged by its seed-aggregate row at the same x.
pub fn compare(baseline: &Results, run: &Results, tol: Tolerances) -> Result<CompareReport> {
    let base: BTreeMap<Key, &Row> = baseline.rows.iter().map(|r| (key(r), r)).collect();
    let new: BTreeMap<Key, &Row> = run.rows.iter().map(|r| (key(r), r)).collect();
    if let Some(k) = base.keys().find(|k| !new.contains_key(*k)) {
        bail!("schema mismatch: series {}/{} x={} missing from run", k.0, k.1, f64::from_bits(k.3));
    }
    if let Some(k) = new.keys().find(|k| !base.contains_key(*k)) {
        bail!("schema mismatch: series {}/{} x={} not in baseline", k.0, k.1, f64::from_bits(k.3));
    }
    let mut reports: BTreeMap<(String, String), SeriesReport> = BTreeMap::new();
    for (k, b) in &base {
        let r = new[k];
        let dev = (r.y - b.y).abs();
        let aggregate = (k.0.clone(), k.1.clone(), None, k.3);
        let within = dev <= tol.abs + tol.rel * b.y.abs()
            || (tol.ci_overlap && overlaps(b, r))
            || (tol.ci_overlap
                && k.2.is_some()
                && ci_of(b).is_none()
                && matches!((base.get(&aggregate), new.get(&aggregate)), (Some(ab), Some(ar)) if overlaps(ab, ar)));
        let e = reports.entry((k.0.clone(), k.1.clone())).or_insert_with(|| SeriesReport {
            preset: k.0.clone(),
            series: k.1.clone(),
            points: 0,
            max_deviation: 0.0,
            failures: 0,
            pass: true,
        });
        e.points += 1;
        e.max_deviation = e.max_deviation.max(dev);
        if !within {
            e.failures += 1;
            e.pass = false;
        }
    }
    let series: Vec<SeriesReport> = reports.into_values().collect();
    let pass = series.iter().all(|s| s.pass);
    Ok(CompareReport { series, pass })
}
