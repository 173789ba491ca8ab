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
use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use isru_harness::{emit_table, run_campaign, HarnessError, TableFormat};
use isru_link::{CaptureReader, CaptureRecord, CaptureWriter};
use isru_operator::Operator;
use isru_station::{drive, standard_scenarios, trial_seed, ScenarioConfig, ScenarioFile, Server, ServeOptions, Session};

#[derive(Parser)]
#[command(name = "isru", about = "Teleoperation experiment harness")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a Monte-Carlo campaign and print the summary table.
    Run {
        /// Scenario file; the four standard scenarios when omitted.
        #[arg(long)]
        scenarios: Option<PathBuf>,
        /// Trials per scenario (overrides the file).
        #[arg(long)]
        trials: Option<u32>,
        /// Base seed (overrides the file).
        #[arg(long)]
        seed: Option<u64>,
        /// Directory for per-trial records and the summary.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "text")]
        format: TableFormat,
    },
    /// Run a single scripted trial.
    Trial {
        #[arg(long)]
        scenarios: Option<PathBuf>,
        /// Scenario name.
        #[arg(long)]
        scenario: String,
        #[arg(long, default_value_t = 0)]
        index: u64,
        /// Write the link traffic to this capture file.
        #[arg(long)]
        capture: Option<PathBuf>,
        /// Print the session log.
        #[arg(long)]
        log: bool,
    },
    /// Serve an interactive session over the socket protocol.
    Serve {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 7878)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        #[arg(long)]
        seed: Option<u64>,
        /// Write the link traffic to this capture file on exit.
        #[arg(long)]
        capture: Option<PathBuf>,
    },
    /// Print a capture file as JSON lines.
    Replay {
        #[arg(long)]
        capture: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn load_scenarios(path: Option<&Path>) -> Result<Vec<ScenarioConfig>, HarnessError> {
    match path {
        Some(p) => Ok(ScenarioFile::load(p)?.scenarios),
        None => Ok(standard_scenarios(50, 0)),
    }
}

fn write_capture(path: &Path, tick_rate: f64, records: &[CaptureRecord]) -> Result<(), HarnessError> {
    let mut w = CaptureWriter::new(BufWriter::new(File::create(path)?), tick_rate)?;
    for r in records {
        w.record(r.tick, r.direction, &r.message)?;
    }
    w.finish()?.flush()?;
    Ok(())
}

fn run(command: Command) -> Result<(), HarnessError> {
    match command {
        Command::Run {
            scenarios,
            trials,
            seed,
            out,
            format,
        } => {
            let mut configs = load_scenarios(scenarios.as_deref())?;
            for c in &mut configs {
                if let Some(n) = trials {
                    c.trials = n;
                }
                if let Some(s) = seed {
                    c.base_seed = s;
                }
            }
            let campaign = run_campaign(&configs, out.as_deref())?;
            if let Some(dir) = &out {
                let path = dir.join(format!("summary.{}", format.extension()));
                emit_table(&campaign.summary, format, &mut BufWriter::new(File::create(path)?))?;
            }
            emit_table(&campaign.summary, format, &mut io::stdout().lock())
        }
        Command::Trial {
            scenarios,
            scenario,
            index,
            capture,
            log,
        } => {
            let configs = load_scenarios(scenarios.as_deref())?;
            let config = configs
                .iter()
                .find(|c| c.name == scenario)
                .ok_or_else(|| isru_station::StationError::BadConfig {
                    path: "scenario".into(),
                    reason: format!("no scenario named `{scenario}`"),
                })?;
            let seed = trial_seed(config, index);
            let mut session = Session::new(config, seed)?;
            let mut operator = Operator::new(config.operator_for(seed)).map_err(|e| isru_station::StationError::BadConfig {
                path: "operator".into(),
                reason: e.to_string(),
            })?;
            if capture.is_some() {
                session.enable_capture();
            }
            let record = drive(&mut session, &mut operator, index);
            let mut out = io::stdout().lock();
            writeln!(out, "{}", record.to_json_line())?;
            if log {
                for e in session.log() {
                    writeln!(out, "{}", serde_json::to_string(e).expect("log entry serializes"))?;
                }
            }
            if let Some(path) = capture {
                write_capture(&path, config.tick_rate_hz, &session.take_capture())?;
            }
            Ok(())
        }
        Command::Serve {
            config,
            port,
            host,
            seed,
            capture,
        } => {
            let config = ScenarioConfig::load(&config)?;
            let mut session = Session::new(&config, seed.unwrap_or(config.base_seed))?;
            if capture.is_some() {
                session.enable_capture();
            }
            let options = ServeOptions::for_session(&session);
            let server = Server::bind((host.as_str(), port), session, options)?;
            eprintln!("serving on {}", server.local_addr()?);
            let mut session = server.run()?;
            if let Some(path) = capture {
                write_capture(&path, config.tick_rate_hz, &session.take_capture())?;
            }
            Ok(())
        }
        Command::Replay { capture } => {
            let reader = CaptureReader::new(BufReader::new(File::open(&capture)?)).map_err(io::Error::other)?;
            let mut out = BufWriter::new(io::stdout().lock());
            writeln!(out, "{}", serde_json::json!({ "tick_rate_hz": reader.tick_rate() }))?;
            for r in reader.read_all().map_err(io::Error::other)? {
                let line = serde_json::json!({ "tick": r.tick, "direction": r.direction, "message": r.message });
                writeln!(out, "{line}")?;
            }
            out.flush()?;
            Ok(())
        }
    }
}
