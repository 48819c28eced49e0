use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use eyero_core::analysis::{condition_summary, entropy_heatmap_export, session_metric_rows, session_metrics_csv, study_report, Metric};
use eyero_core::event_log::{export_csv, find_logs, replay_file, ReplayedSession, Tables};
use eyero_core::sim::{simulate_study, AgentParams};

use crate::{AnalyzeArgs, ExportArgs, ReplayArgs, SimulateArgs};

pub fn simulate(a: SimulateArgs) -> Result<()> {
    let params = match &a.params {
        Some(p) => AgentParams::load(p)?,
        None => AgentParams::default(),
    };
    let study = simulate_study(a.participants, &params, a.seed)?;
    fs::create_dir_all(&a.out_dir).with_context(|| format!("creating {}", a.out_dir.display()))?;
    study.write_logs(&a.out_dir.join("logs"))?;
    study.tables().write_dir(&a.out_dir)?;
    fs::write(a.out_dir.join("params.toml"), params.to_toml_string())?;
    let sessions = study.sessions().count();
    println!(
        "simulated {} participants, {sessions} sessions (seed {}) into {}",
        a.participants,
        a.seed,
        a.out_dir.display()
    );
    Ok(())
}

fn replay_dir(dir: &Path) -> Result<Vec<ReplayedSession>> {
    let files = if dir.is_file() { vec![dir.to_path_buf()] } else { find_logs(dir)? };
    if files.is_empty() {
        bail!("no session logs under {}", dir.display());
    }
    files
        .iter()
        .map(|f| replay_file(f).with_context(|| format!("reading {}", f.display())))
        .collect()
}

/// Complete sessions from a log directory, checked against their replay.
fn tables_from_logs(dir: &Path) -> Result<Tables> {
    let mut sessions = replay_dir(dir)?;
    sessions.retain(|s| {
        let keep = s.is_complete();
        if !keep {
            log::warn!("skipping unfinished session {}/{}", s.participant, s.session);
        }
        keep
    });
    Ok(export_csv(&sessions)?)
}

fn load_tables(input: &Path) -> Result<Tables> {
    if Tables::is_table_dir(input) {
        Ok(Tables::read_dir(input)?)
    } else {
        tables_from_logs(input)
    }
}

pub fn analyze(a: AnalyzeArgs) -> Result<()> {
    let tables = load_tables(&a.input)?;
    let metrics = if a.metric.is_empty() { Metric::ALL.to_vec() } else { a.metric.clone() };
    let report = study_report(&tables, a.grid, &metrics)?;
    print!("{report}");
    if let Some(dir) = &a.export {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        fs::write(dir.join("report.txt"), &report)?;
        let rows = session_metric_rows(&tables, a.grid)?;
        fs::write(dir.join("session_metrics.csv"), session_metrics_csv(&rows))?;
        match condition_summary(&tables, a.grid) {
            Ok(s) => fs::write(dir.join("condition_summary.csv"), s.to_csv())?,
            Err(e) => log::warn!("condition summary not written: {e}"),
        }
        match entropy_heatmap_export(&tables, a.grid) {
            Ok(h) => fs::write(dir.join("entropy_heatmap.csv"), h.to_csv())?,
            Err(e) => log::warn!("entropy heatmap not written: {e}"),
        }
    }
    Ok(())
}

pub fn replay(a: ReplayArgs) -> Result<()> {
    let sessions = replay_dir(&a.log)?;
    let mut failed = 0;
    for s in &sessions {
        let label = s.start.as_ref().map(|p| p.config.label()).unwrap_or_else(|| "?".into());
        let status = match s.verify() {
            Ok(()) if s.is_complete() => "verified".to_string(),
            Ok(()) => "verified (unfinished)".to_string(),
            Err(e) => {
                failed += 1;
                format!("MISMATCH: {e}")
            }
        };
        println!(
            "{} session {:02} {label}: {} gaze, {} intents, {} trials, {status}",
            s.participant,
            s.session,
            s.gaze.len(),
            s.intents.len(),
            s.outcomes.len()
        );
    }
    if failed > 0 {
        bail!("{failed} of {} sessions failed replay", sessions.len());
    }
    Ok(())
}

pub fn export(a: ExportArgs) -> Result<()> {
    let tables = tables_from_logs(&a.log_dir)?;
    tables.write_dir(&a.out_dir)?;
    println!("{} sessions, {} trials exported to {}", tables.sessions.len(), tables.trials.len(), a.out_dir.display());
    Ok(())
}
