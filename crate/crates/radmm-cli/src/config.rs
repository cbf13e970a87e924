//! Config loading: TOML file, then `--set` overrides, then seed resolution,
//! then validation. Unknown keys anywhere are errors.

use crate::{CliError, CliResult, CommonArgs};
use radmm::experiments::ExperimentConfig;
use std::env;
use std::fs;

/// The fully-resolved invocation input: effective config plus the raw
/// override strings (echoed into metadata so outputs are self-describing).
pub struct LoadedConfig {
    pub cfg: ExperimentConfig,
    pub overrides: Vec<String>,
}

pub fn load(args: &CommonArgs) -> CliResult<LoadedConfig> {
    let text = fs::read_to_string(&args.config)
        .map_err(|e| CliError::Io(format!("reading {}: {e}", args.config.display())))?;
    let mut value: toml::Value = toml::from_str(&text)
        .map_err(|e| CliError::Validation(format!("parsing {}: {e}", args.config.display())))?;
    for spec in &args.sets {
        apply_override(&mut value, spec)?;
    }
    let mut cfg: ExperimentConfig = value
        .try_into()
        .map_err(|e| CliError::Validation(format!("config: {e}")))?;
    if let Some(seed) = resolve_seed(args)? {
        cfg.seed = seed;
    }
    // TOML integers are signed 64-bit, and the effective config round-trips
    // through TOML for hashing and metadata; keep the seed in that range.
    if cfg.seed > i64::MAX as u64 {
        return Err(CliError::Validation(format!(
            "seed {} does not fit a TOML integer (must be < 2^63)",
            cfg.seed
        )));
    }
    cfg.allow_lossy_alg1 = args.unsafe_lossy_alg1;
    cfg.validate().map_err(|e| CliError::Validation(e.to_string()))?;
    Ok(LoadedConfig { cfg, overrides: args.sets.clone() })
}

/// Seed precedence: `--seed` flag, then `RADMM_SEED`, then the config file.
fn resolve_seed(args: &CommonArgs) -> CliResult<Option<u64>> {
    if let Some(seed) = args.seed {
        return Ok(Some(seed));
    }
    match env::var("RADMM_SEED") {
        Ok(v) => v.trim().parse::<u64>().map(Some).map_err(|_| {
            CliError::Validation(format!("RADMM_SEED must be an unsigned integer, got {v:?}"))
        }),
        Err(env::VarError::NotPresent) => Ok(None),
        Err(e) => Err(CliError::Validation(format!("RADMM_SEED: {e}"))),
    }
}

/// Apply one `key=value` override onto the raw TOML tree. The value is
/// parsed as a TOML literal (so numbers, booleans, arrays, and inline
/// tables work) with a plain-string fallback. Typos in the key surface
/// later as unknown-key errors during typed deserialization.
fn apply_override(root: &mut toml::Value, spec: &str) -> CliResult<()> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| CliError::Validation(format!("--set expects key=value, got {spec:?}")))?;
    let key = key.trim();
    if key.is_empty() {
        return Err(CliError::Validation(format!("--set has an empty key in {spec:?}")));
    }
    let parsed = match format!("v = {raw}").parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").expect("literal `v` key was just parsed"),
        Err(_) => toml::Value::String(raw.to_string()),
    };
    let parts: Vec<&str> = key.split('.').collect();
    let mut cursor = root;
    for part in &parts[..parts.len() - 1] {
        let table = cursor.as_table_mut().ok_or_else(|| {
            CliError::Validation(format!("--set {key}: `{part}` is not a table"))
        })?;
        cursor = table
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
    }
    let last = parts[parts.len() - 1];
    let table = cursor
        .as_table_mut()
        .ok_or_else(|| CliError::Validation(format!("--set {key}: parent is not a table")))?;
    table.insert(last.to_string(), parsed);
    Ok(())
}
