//! The `gen-starts` and `gen-instance` subcommands.

use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use shaper_opt::instance::{generate_starts, paper_instance_file, StartKind};

use crate::CliError;

/// On-disk starting-point set.
#[derive(Debug, Serialize, Deserialize)]
pub struct StartsFile {
    pub kind: StartKind,
    pub dim: usize,
    pub seed: u64,
    pub points: Vec<Vec<f64>>,
}

pub fn cmd_gen_starts(
    kind: &str,
    dim: usize,
    count: usize,
    seed: u64,
    out: &Path,
) -> Result<(), CliError> {
    let kind = StartKind::from_str(kind).map_err(CliError::Usage)?;
    if dim < 2 || count == 0 {
        return Err(CliError::Usage("need dim >= 2 and count >= 1".into()));
    }
    let points: Vec<Vec<f64>> = generate_starts(kind, dim, count, seed)
        .into_iter()
        .map(|x| x.iter().copied().collect())
        .collect();
    let file = StartsFile {
        kind,
        dim,
        seed,
        points,
    };
    let json = serde_json::to_string_pretty(&file).expect("starts serialization cannot fail");
    std::fs::write(out, json).map_err(|e| CliError::Data(format!("{}: {e}", out.display())))?;
    println!("wrote {}", out.display());
    Ok(())
}

pub fn cmd_gen_instance(out: &Path) -> Result<(), CliError> {
    let file = paper_instance_file();
    std::fs::write(out, file.to_json())
        .map_err(|e| CliError::Data(format!("{}: {e}", out.display())))?;
    println!("wrote {}", out.display());
    Ok(())
}
