//! Deterministic output management: content-addressed file names, atomic
//! write-then-rename, and the run-metadata file.

use crate::config::LoadedConfig;
use crate::{CliError, CliResult};
use radmm::experiments::ExperimentConfig;
use radmm::rng::mix64;
use std::fs;
use std::path::{Path, PathBuf};

/// Single writer for one output directory.
pub struct OutputWriter {
    dir: PathBuf,
}

impl OutputWriter {
    pub fn new(dir: &Path) -> CliResult<Self> {
        fs::create_dir_all(dir)
            .map_err(|e| CliError::Io(format!("creating {}: {e}", dir.display())))?;
        Ok(OutputWriter { dir: dir.to_path_buf() })
    }

    /// Write atomically: a hidden temp file in the same directory, then a
    /// rename, so a failure can never leave a partial artifact under the
    /// final name.
    pub fn write(&self, name: &str, bytes: &[u8]) -> CliResult<PathBuf> {
        let path = self.dir.join(name);
        let tmp = self.dir.join(format!(".{name}.tmp"));
        fs::write(&tmp, bytes)
            .map_err(|e| CliError::Io(format!("writing {}: {e}", tmp.display())))?;
        fs::rename(&tmp, &path)
            .map_err(|e| CliError::Io(format!("renaming to {}: {e}", path.display())))?;
        println!("wrote {}", path.display());
        Ok(path)
    }
}

/// 16-hex-digit digest of the canonical serialized effective config. Output
/// names embed it, so different configs can never silently overwrite each
/// other's artifacts.
pub fn config_hash(cfg: &ExperimentConfig) -> CliResult<String> {
    let canonical = toml::to_string(cfg)
        .map_err(|e| CliError::Validation(format!("serializing config: {e}")))?;
    let mut h: u64 = 0x243F_6A88_85A3_08D3;
    for &b in canonical.as_bytes() {
        h = mix64(h ^ u64::from(b));
    }
    Ok(format!("{h:016x}"))
}

/// Base metadata table: artifact version, command, config digest, echoed
/// overrides, seed, wall time, and the full effective config. Callers add a
/// command-specific `results` table before writing.
pub fn meta_table(
    command: &str,
    hash: &str,
    loaded: &LoadedConfig,
    wall_seconds: f64,
) -> CliResult<toml::Table> {
    let mut t = toml::Table::new();
    t.insert("artifact_version".into(), env!("CARGO_PKG_VERSION").into());
    t.insert("command".into(), command.into());
    t.insert("config_hash".into(), hash.into());
    t.insert(
        "overrides".into(),
        toml::Value::Array(loaded.overrides.iter().map(|s| s.as_str().into()).collect()),
    );
    t.insert("seed".into(), toml::Value::Integer(loaded.cfg.seed as i64));
    t.insert("unsafe_lossy_alg1".into(), loaded.cfg.allow_lossy_alg1.into());
    t.insert("wall_time_seconds".into(), wall_seconds.into());
    let cfg_value = toml::Value::try_from(&loaded.cfg)
        .map_err(|e| CliError::Validation(format!("serializing config: {e}")))?;
    t.insert("config".into(), cfg_value);
    Ok(t)
}

/// Serialize and atomically write a metadata table.
pub fn write_meta(writer: &OutputWriter, name: &str, table: &toml::Table) -> CliResult<PathBuf> {
    let text = toml::to_string_pretty(table)
        .map_err(|e| CliError::Validation(format!("serializing metadata: {e}")))?;
    writer.write(name, text.as_bytes())
}

/// Full-range u64 rendered losslessly for TOML (whose integers are i64).
pub fn hex_u64(v: u64) -> String {
    format!("{v:#018x}")
}
