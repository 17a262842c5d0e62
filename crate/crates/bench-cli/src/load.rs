//! Shared history-directory loading for the read-only commands:
//! parse every history file, validate its structure, verify all runs
//! belong to the same instance, and group runs by (solver, start set).

use std::collections::BTreeMap;
use std::path::Path;

use shaper_opt::RunHistory;

use crate::CliError;

/// Runs grouped by "(solver) start-set" label, deterministically ordered.
pub type Groups = BTreeMap<String, Vec<RunHistory>>;

/// The start-set label of a run: its start id minus the trailing run
/// index ("randn-s7-003" -> "randn-s7").
fn set_label(start_id: &str) -> String {
    match start_id.rsplit_once('-') {
        Some((prefix, _)) => prefix.to_string(),
        None => start_id.to_string(),
    }
}

pub fn group_label(h: &RunHistory) -> String {
    format!("{} {}", h.solver, set_label(&h.start_id))
}

pub fn load_histories(dir: &Path) -> Result<Vec<RunHistory>, CliError> {
    let mut files: Vec<_> = std::fs::read_dir(dir)
        .map_err(|e| CliError::Data(format!("cannot read {}: {e}", dir.display())))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.extension().is_some_and(|x| x == "json")
                && p.file_name()
                    .and_then(|n| n.to_str())
                    .is_some_and(|n| n.contains("__"))
        })
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(CliError::Data(format!(
            "{}: no run-history files found",
            dir.display()
        )));
    }

    let mut histories = Vec::with_capacity(files.len());
    let mut hash: Option<String> = None;
    for f in &files {
        let text = std::fs::read_to_string(f)
            .map_err(|e| CliError::Data(format!("{}: {e}", f.display())))?;
        let h = RunHistory::from_json(&text)
            .map_err(|e| CliError::Data(format!("{}: {e}", f.display())))?;
        h.validate()
            .map_err(|e| CliError::Data(format!("{}: {e}", f.display())))?;
        match (&hash, &h.instance_hash) {
            (None, Some(d)) => hash = Some(d.clone()),
            (Some(a), Some(b)) if a != b => {
                return Err(CliError::Data(format!(
                    "{}: instance hash {b} differs from {a}; refusing to mix problems",
                    f.display()
                )));
            }
            _ => {}
        }
        histories.push(h);
    }
    Ok(histories)
}

pub fn group(histories: Vec<RunHistory>) -> Groups {
    let mut groups: Groups = BTreeMap::new();
    for h in histories {
        groups.entry(group_label(&h)).or_default().push(h);
    }
    for runs in groups.values_mut() {
        runs.sort_by(|a, b| a.start_id.cmp(&b.start_id));
    }
    groups
}
