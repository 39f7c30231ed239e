//! Config files, flag merging, manifests, and exit-code mapping.
//!
//! A config file is flat `key=value` lines where keys match the long
//! flag names. Flags win over config values; boolean flags turn a
//! feature on in either place. Parse then serialize then parse is the
//! identity on the key-value map.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use sha2::{Digest, Sha256};

/// Usage and input problems exit 2; numerical failures exit 3.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Numeric(String),
}

impl CliError {
    pub fn code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Numeric(_) => 3,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Numeric(m) => m,
        }
    }
}

impl From<potts_oca::Error> for CliError {
    fn from(e: potts_oca::Error) -> CliError {
        match e {
            potts_oca::Error::NonFinite { .. } => CliError::Numeric(e.to_string()),
            _ => CliError::Usage(e.to_string()),
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;

pub fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

/// Parsed config map. Keys are flag names without the leading dashes.
pub fn parse_config(text: &str) -> CliResult<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (line_no, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| usage(format!("config line {}: expected key=value", line_no + 1)))?;
        map.insert(key.trim().to_string(), value.trim().to_string());
    }
    Ok(map)
}

/// Canonical form: sorted `key=value` lines.
pub fn serialize_config(map: &BTreeMap<String, String>) -> String {
    let mut out = String::new();
    for (k, v) in map {
        out.push_str(k);
        out.push('=');
        out.push_str(v);
        out.push('\n');
    }
    out
}

/// Values resolved from a config file with flag overrides. `used`
/// collects the effective key-value pairs for the manifest.
pub struct Resolver {
    map: BTreeMap<String, String>,
    used: BTreeMap<String, String>,
}

impl Resolver {
    /// Loads the config file if given and checks any `command` key
    /// against the invoked subcommand.
    pub fn load(path: Option<&Path>, command: &str) -> CliResult<Resolver> {
        let map = match path {
            None => BTreeMap::new(),
            Some(p) => {
                let text = fs::read_to_string(p)
                    .map_err(|e| usage(format!("cannot read config {}: {e}", p.display())))?;
                parse_config(&text)?
            }
        };
        if let Some(c) = map.get("command") {
            if c != command {
                return Err(usage(format!(
                    "config is for command '{c}', invoked '{command}'"
                )));
            }
        }
        let mut used = BTreeMap::new();
        used.insert("command".to_string(), command.to_string());
        Ok(Resolver { map, used })
    }

    fn record(&mut self, key: &str, value: impl Display) {
        self.used.insert(key.to_string(), value.to_string());
    }

    /// Flag value if present, else config value, else None.
    pub fn opt<T: FromStr + Display>(&mut self, key: &str, flag: Option<T>) -> CliResult<Option<T>>
    where
        T::Err: Display,
    {
        let value = match flag {
            Some(v) => Some(v),
            None => match self.map.get(key) {
                None => None,
                Some(raw) => Some(
                    raw.parse::<T>()
                        .map_err(|e| usage(format!("config {key}={raw}: {e}")))?,
                ),
            },
        };
        if let Some(v) = &value {
            self.record(key, v);
        }
        Ok(value)
    }

    /// Like `opt` but with a default.
    pub fn or<T: FromStr + Display>(
        &mut self,
        key: &str,
        flag: Option<T>,
        default: T,
    ) -> CliResult<T>
    where
        T::Err: Display,
    {
        let v = self.opt(key, flag)?;
        Ok(match v {
            Some(v) => v,
            None => {
                self.record(key, &default);
                default
            }
        })
    }

    /// Required value: flag or config, else a usage error.
    pub fn req<T: FromStr + Display>(&mut self, key: &str, flag: Option<T>) -> CliResult<T>
    where
        T::Err: Display,
    {
        self.opt(key, flag)?
            .ok_or_else(|| usage(format!("missing required --{key}")))
    }

    /// Boolean switch: on if the flag is set or the config says true.
    pub fn switch(&mut self, key: &str, flag: bool) -> CliResult<bool> {
        let value = flag
            || match self.map.get(key) {
                None => false,
                Some(raw) => raw
                    .parse::<bool>()
                    .map_err(|e| usage(format!("config {key}={raw}: {e}")))?,
            };
        self.record(key, value);
        Ok(value)
    }

    /// The effective configuration in canonical file form.
    pub fn effective(&self) -> String {
        serialize_config(&self.used)
    }
}

/// Comma-separated list; a `lo:hi:step` triple expands to a grid.
pub fn parse_f64_list(raw: &str) -> CliResult<Vec<f64>> {
    let raw = raw.trim();
    if let Some((lo, rest)) = raw.split_once(':') {
        let (hi, step) = rest
            .split_once(':')
            .ok_or_else(|| usage(format!("grid '{raw}' must be lo:hi:step")))?;
        let lo: f64 = lo.parse().map_err(|_| usage(format!("bad grid start '{lo}'")))?;
        let hi: f64 = hi.parse().map_err(|_| usage(format!("bad grid end '{hi}'")))?;
        let step: f64 = step
            .parse()
            .map_err(|_| usage(format!("bad grid step '{step}'")))?;
        if !(step > 0.0 && hi >= lo) {
            return Err(usage(format!("grid '{raw}' must ascend with positive step")));
        }
        let count = ((hi - lo) / step).round() as usize + 1;
        return Ok((0..count)
            .map(|i| lo + i as f64 * step)
            .filter(|v| *v <= hi + step * 1e-9)
            .collect());
    }
    raw.split(',')
        .map(|tok| {
            tok.trim()
                .parse::<f64>()
                .map_err(|_| usage(format!("bad number '{tok}' in list")))
        })
        .collect()
}

pub fn parse_usize_list(raw: &str) -> CliResult<Vec<usize>> {
    raw.split(',')
        .map(|tok| {
            tok.trim()
                .parse::<usize>()
                .map_err(|_| usage(format!("bad count '{tok}' in list")))
        })
        .collect()
}

/// Writes `<out>.manifest.json` beside a randomized output: the seed,
/// the effective config and its digest, and the tool version. Content
/// is deterministic, so reruns are byte-identical.
pub fn write_manifest(out: &Path, command: &str, seed: u64, config: &str) -> CliResult<()> {
    let digest = Sha256::digest(config.as_bytes());
    let hex: String = digest.iter().map(|b| format!("{b:02x}")).collect();
    let body = serde_json::json!({
        "command": command,
        "config": config,
        "config_sha256": hex,
        "seed": seed,
        "version": env!("CARGO_PKG_VERSION"),
    });
    let path = manifest_path(out);
    fs::write(&path, format!("{}\n", serde_json::to_string_pretty(&body).unwrap()))
        .map_err(|e| usage(format!("cannot write {}: {e}", path.display())))
}

pub fn manifest_path(out: &Path) -> PathBuf {
    let name = out
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    out.with_file_name(format!("{name}.manifest.json"))
}

/// Writes text to a path, or to stdout when no path is given.
pub fn emit(out: Option<&Path>, text: &str) -> CliResult<()> {
    match out {
        None => {
            print!("{text}");
            Ok(())
        }
        Some(p) => {
            fs::write(p, text).map_err(|e| usage(format!("cannot write {}: {e}", p.display())))
        }
    }
}
