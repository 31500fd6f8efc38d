/*
Copyright 2026 The tdcr Authors

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
*/
//! Run logs: `out/<run-id>/{series.csv, summary.json, config.echo.json}`.

use std::fs;
use std::path::{Path, PathBuf};

use super::config::ScenarioConfig;
use super::metrics::SeriesRow;
use super::runner::ScenarioResult;
use crate::backbone::NUM_INPUTS;
use crate::error::{Error, Result};
use crate::mppi::CostBreakdown;

const FIXED_COLUMNS: usize = 23;

fn header(points: usize) -> Vec<String> {
    let mut h: Vec<String> = [
        "t",
        "ref_x",
        "ref_y",
        "ref_z",
        "tip_x",
        "tip_y",
        "tip_z",
        "tip_error",
        "shape_error",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    h.extend((0..NUM_INPUTS).map(|i| format!("q{i}")));
    h.extend(
        [
            "cost_tip",
            "cost_shape",
            "cost_control",
            "cost_obstacle",
            "cost_terminal",
            "min_clearance",
            "feasible",
        ]
        .iter()
        .map(|s| s.to_string()),
    );
    h.extend((0..3 * points).map(|i| format!("x{i}")));
    h
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn write_series(path: impl AsRef<Path>, series: &[SeriesRow]) -> Result<()> {
    let points = series.first().map_or(0, |r| r.x.len() / 3);
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header(points))?;
    for r in series {
        let mut rec: Vec<String> = Vec::with_capacity(FIXED_COLUMNS + r.x.len());
        rec.push(r.t.to_string());
        rec.extend(r.ref_tip.iter().chain(&r.tip).map(f64::to_string));
        rec.push(r.tip_error.to_string());
        rec.push(opt(r.shape_error));
        rec.extend(r.q.iter().map(f64::to_string));
        let c = &r.cost;
        rec.extend(
            [c.tip, c.shape, c.control, c.obstacle, c.terminal]
                .iter()
                .map(f64::to_string),
        );
        rec.push(opt(r.min_clearance));
        rec.push(if r.feasible { "1" } else { "0" }.into());
        rec.extend(r.x.iter().map(f64::to_string));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_series(path: impl AsRef<Path>) -> Result<Vec<SeriesRow>> {
    let mut r = csv::Reader::from_path(path)?;
    let cols = r.headers()?.len();
    if cols < FIXED_COLUMNS || (cols - FIXED_COLUMNS) % 3 != 0 {
        return Err(Error::Config(format!("unexpected series width {cols}")));
    }
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let f = |i: usize| -> Result<f64> {
            rec[i]
                .parse()
                .map_err(|_| Error::Config(format!("bad number {:?} in column {i}", &rec[i])))
        };
        let o = |i: usize| -> Result<Option<f64>> {
            if rec[i].is_empty() {
                Ok(None)
            } else {
                f(i).map(Some)
            }
        };
        let q: Vec<f64> = (9..9 + NUM_INPUTS).map(f).collect::<Result<_>>()?;
        out.push(SeriesRow {
            t: f(0)?,
            ref_tip: [f(1)?, f(2)?, f(3)?],
            tip: [f(4)?, f(5)?, f(6)?],
            tip_error: f(7)?,
            shape_error: o(8)?,
            q: q.try_into().expect("seven columns"),
            cost: CostBreakdown {
                tip: f(16)?,
                shape: f(17)?,
                control: f(18)?,
                obstacle: f(19)?,
                terminal: f(20)?,
            },
            min_clearance: o(21)?,
            feasible: &rec[22] == "1",
            x: (FIXED_COLUMNS..cols).map(f).collect::<Result<_>>()?,
        });
    }
    Ok(out)
}

/// Writes the three run files and returns the run directory.
pub fn write_run(out_dir: impl AsRef<Path>, config: &ScenarioConfig, result: &ScenarioResult) -> Result<PathBuf> {
    let dir = out_dir.as_ref().join(run_id(config));
    fs::create_dir_all(&dir)?;
    write_series(dir.join("series.csv"), &result.series)?;
    fs::write(dir.join("summary.json"), serde_json::to_string_pretty(&result.summary)?)?;
    fs::write(dir.join("config.echo.json"), serde_json::to_string_pretty(config)?)?;
    Ok(dir)
}

pub fn run_id(config: &ScenarioConfig) -> String {
    format!("{}-seed{}", config.name, config.seed)
}
