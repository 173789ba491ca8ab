/*
Copyright 2026 The isru-teleop Authors

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
//! Monte-Carlo campaigns over scenario configurations and their summary
//! tables.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::mpsc;

use isru_station::{run_trial, ScenarioConfig, StationError, TrialRecord};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error(transparent)]
    Config(#[from] StationError),
    #[error("scenario names must be unique; `{0}` repeats")]
    DuplicateScenario(String),
    #[error("io: {0}")]
    Io(#[from] io::Error),
    #[error("summary for `{scenario}` expects {expected} records, got {got}")]
    RecordCount {
        scenario: String,
        expected: u32,
        got: usize,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub scenario: String,
    pub force_feedback: bool,
    pub delay_s: f64,
    pub trials: u32,
    pub fetch_rate: f64,
    pub assembly_rate: f64,
    pub safety_trips: u32,
    pub mean_duration_s: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SummaryTable {
    pub rows: Vec<SummaryRow>,
}

impl SummaryRow {
    pub fn from_records(config: &ScenarioConfig, records: &[TrialRecord]) -> Result<Self, HarnessError> {
        if records.len() != config.trials as usize {
            return Err(HarnessError::RecordCount {
                scenario: config.name.clone(),
                expected: config.trials,
                got: records.len(),
            });
        }
        let n = records.len() as f64;
        let count = |f: fn(&TrialRecord) -> bool| records.iter().filter(|r| f(r)).count();
        Ok(Self {
            scenario: config.name.clone(),
            force_feedback: config.force_feedback,
            delay_s: config.delay_s,
            trials: config.trials,
            fetch_rate: count(|r| r.fetching_success) as f64 / n,
            assembly_rate: count(|r| r.assembly_success) as f64 / n,
            safety_trips: count(|r| r.safety_tripped) as u32,
            mean_duration_s: records.iter().map(|r| r.duration_s).sum::<f64>() / n,
        })
    }
}

impl SummaryTable {
    pub fn row(&self, scenario: &str) -> Option<&SummaryRow> {
        self.rows.iter().find(|r| r.scenario == scenario)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Campaign {
    pub summary: SummaryTable,
    /// Per scenario, in trial-index order.
    pub records: Vec<Vec<TrialRecord>>,
    /// Record files written, one per scenario.
    pub files: Vec<PathBuf>,
}

/// Record file of `scenario` inside an output directory.
pub fn records_path(dir: &Path, scenario: &str) -> PathBuf {
    dir.join(format!("trials-{scenario}.jsonl"))
}

/// Checks every config before any trial runs.
pub fn validate_all(configs: &[ScenarioConfig]) -> Result<(), HarnessError> {
    let mut seen = std::collections::HashSet::new();
    for (i, c) in configs.iter().enumerate() {
        c.validate().map_err(|e| match e {
            StationError::BadConfig { path, reason } => StationError::BadConfig {
                path: format!("scenario[{i}].{path}"),
                reason,
            },
            other => other,
        })?;
        c.load_env()?;
        c.load_arm()?;
        if !seen.insert(c.name.as_str()) {
            return Err(HarnessError::DuplicateScenario(c.name.clone()));
        }
    }
    Ok(())
}

/// Runs every trial of every scenario. Trials run in parallel; records are
/// written to `out` (when given) in trial-index order as soon as all earlier
/// trials are done.
pub fn run_campaign(configs: &[ScenarioConfig], out: Option<&Path>) -> Result<Campaign, HarnessError> {
    validate_all(configs)?;
    if let Some(dir) = out {
        std::fs::create_dir_all(dir)?;
    }
    let mut summary = SummaryTable::default();
    let mut all = Vec::new();
    let mut files = Vec::new();
    for config in configs {
        let mut sink = match out {
            Some(dir) => {
                let path = records_path(dir, &config.name);
                files.push(path.clone());
                Some(BufWriter::new(File::create(path)?))
            }
            None => None,
        };
        let records = run_scenario(config, |r| {
            if let Some(w) = sink.as_mut() {
                writeln!(w, "{}", r.to_json_line())?;
                w.flush()?;
            }
            Ok(())
        })?;
        summary.rows.push(SummaryRow::from_records(config, &records)?);
        all.push(records);
    }
    Ok(Campaign {
        summary,
        records: all,
        files,
    })
}

/// Runs the trials of one scenario, handing records to `emit` in index order.
pub fn run_scenario(
    config: &ScenarioConfig,
    mut emit: impl FnMut(&TrialRecord) -> Result<(), HarnessError>,
) -> Result<Vec<TrialRecord>, HarnessError> {
    let n = config.trials as u64;
    let (tx, rx) = mpsc::channel::<(u64, Result<TrialRecord, StationError>)>();
    let mut records = Vec::with_capacity(n as usize);
    let mut pending = BTreeMap::new();
    let mut first_error = None;
    std::thread::scope(|scope| {
        scope.spawn(move || {
            (0..n).into_par_iter().for_each_with(tx, |tx, i| {
                let _ = tx.send((i, run_trial(config, i)));
            });
        });
        for (i, result) in rx {
            pending.insert(i, result);
            while let Some(result) = pending.remove(&(records.len() as u64)) {
                match result {
                    Ok(r) => {
                        if first_error.is_none() {
                            if let Err(e) = emit(&r) {
                                first_error = Some(e);
                            }
                        }
                        records.push(r);
                    }
                    Err(e) => {
                        first_error.get_or_insert(HarnessError::Config(e));
                        return;
                    }
                }
            }
        }
    });
    match first_error {
        Some(e) => Err(e),
        None => Ok(records),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum TableFormat {
    Text,
    Csv,
    Json,
}

impl TableFormat {
    pub fn extension(self) -> &'static str {
        match self {
            Self::Text => "txt",
            Self::Csv => "csv",
            Self::Json => "json",
        }
    }
}

pub const CSV_HEADER: &str = "scenario,force_feedback,delay_s,fetch_rate,assembly_rate,safety_trips,mean_duration_s";

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Renders `summary`. CSV and JSON keep full precision.
pub fn render_table(summary: &SummaryTable, format: TableFormat) -> String {
    match format {
        TableFormat::Json => serde_json::to_string_pretty(summary).expect("summary serializes") + "\n",
        TableFormat::Csv => {
            let mut s = String::from(CSV_HEADER);
            s.push('\n');
            for r in &summary.rows {
                let _ = writeln!(
                    s,
                    "{},{},{},{},{},{},{}",
                    csv_field(&r.scenario),
                    r.force_feedback,
                    r.delay_s,
                    r.fetch_rate,
                    r.assembly_rate,
                    r.safety_trips,
                    r.mean_duration_s
                );
            }
            s
        }
        TableFormat::Text => {
            let header = ["Scenario", "Force feedback", "Delay d", "Fetching", "Assembly", "Safety trips", "Mean duration"];
            let rows: Vec<[String; 7]> = summary
                .rows
                .iter()
                .map(|r| {
                    [
                        r.scenario.clone(),
                        if r.force_feedback { "yes" } else { "no" }.to_string(),
                        format!("{:.1} s", r.delay_s),
                        format!("{:.0}%", 100.0 * r.fetch_rate),
                        format!("{:.0}%", 100.0 * r.assembly_rate),
                        r.safety_trips.to_string(),
                        format!("{:.1} s", r.mean_duration_s),
                    ]
                })
                .collect();
            let mut widths = header.map(str::len);
            for row in &rows {
                for (w, cell) in widths.iter_mut().zip(row) {
                    *w = (*w).max(cell.chars().count());
                }
            }
            let line = |cells: &[String]| {
                let parts: Vec<String> = cells
                    .iter()
                    .zip(widths)
                    .enumerate()
                    .map(|(i, (c, w))| if i == 0 { format!("{c:<w$}") } else { format!("{c:>w$}") })
                    .collect();
                parts.join("  ").trim_end().to_string() + "\n"
            };
            let mut s = line(&header.map(String::from));
            s.push_str(&line(&widths.map(|w| "-".repeat(w))));
            for row in &rows {
                s.push_str(&line(row));
            }
            s
        }
    }
}

/// Writes `summary` to `out`.
pub fn emit_table<W: Write>(summary: &SummaryTable, format: TableFormat, out: &mut W) -> Result<(), HarnessError> {
    out.write_all(render_table(summary, format).as_bytes())?;
    out.flush()?;
    Ok(())
}

/// Parses a table written in CSV form.
pub fn parse_csv(text: &str) -> Option<SummaryTable> {
    let mut lines = text.lines();
    if lines.next()? != CSV_HEADER {
        return None;
    }
    let mut rows = Vec::new();
    for l in lines.filter(|l| !l.is_empty()) {
        let f: Vec<&str> = l.rsplitn(7, ',').collect();
        if f.len() != 7 {
            return None;
        }
        let name = f[6].strip_prefix('"').and_then(|n| n.strip_suffix('"'));
        let name = name.map_or_else(|| f[6].to_string(), |n| n.replace("\"\"", "\""));
        rows.push(SummaryRow {
            scenario: name,
            force_feedback: f[5].parse().ok()?,
            delay_s: f[4].parse().ok()?,
            trials: 0,
            fetch_rate: f[3].parse().ok()?,
            assembly_rate: f[2].parse().ok()?,
            safety_trips: f[1].parse().ok()?,
            mean_duration_s: f[0].parse().ok()?,
        });
    }
    Some(SummaryTable { rows })
}
