use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Deserialize;

/// Defaults read from a TOML file. Flags and environment variables override
/// every field.
#[derive(Debug, Default, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub pool: Option<PathBuf>,
    pub model: Option<PathBuf>,
    pub grounder: Option<String>,
    pub time_limit: Option<f64>,
    pub mem_limit: Option<String>,
    pub seed: Option<u64>,
    pub verbose: Option<u8>,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(FileConfig::default());
        };
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config file {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("config file {}", path.display()))
    }
}

/// First present value wins.
pub fn pick<T>(choices: impl IntoIterator<Item = Option<T>>) -> Option<T> {
    choices.into_iter().flatten().next()
}

/// Byte count with an optional binary suffix: `512M`, `15G`, `1048576`.
pub fn parse_bytes(s: &str) -> Result<u64> {
    let t = s.trim();
    let (num, shift) = match t.char_indices().last() {
        Some((i, c)) if c.is_ascii_alphabetic() => {
            let shift = match c.to_ascii_uppercase() {
                'K' => 10,
                'M' => 20,
                'G' => 30,
                'T' => 40,
                _ => bail!("unknown size suffix in `{s}`"),
            };
            (&t[..i], shift)
        }
        _ => (t, 0),
    };
    let n: u64 = num
        .trim()
        .parse()
        .with_context(|| format!("invalid size `{s}`"))?;
    if n == 0 {
        bail!("size must be positive");
    }
    n.checked_mul(1u64 << shift)
        .with_context(|| format!("size `{s}` overflows"))
}

/// `ASPFOLIO_SOLVER_<ID>` with the id upper-cased and stripped to
/// alphanumerics, e.g. `clasp*` -> `ASPFOLIO_SOLVER_CLASP`.
pub fn solver_env_var(id: &str) -> String {
    let tail: String = id
        .chars()
        .filter(char::is_ascii_alphanumeric)
        .map(|c| c.to_ascii_uppercase())
        .collect();
    format!("ASPFOLIO_SOLVER_{tail}")
}

pub fn solver_overrides<'a>(ids: impl IntoIterator<Item = &'a str>) -> BTreeMap<String, PathBuf> {
    ids.into_iter()
        .filter_map(|id| {
            let v = std::env::var_os(solver_env_var(id))?;
            Some((id.to_string(), PathBuf::from(v)))
        })
        .collect()
}
