//! Flat key-value configuration files with optional `[section]` headers.
//!
//! Circuit parameters live at the top level under their customary symbol
//! names (t0, gm, r0, rout, cfi, ion, icm, vdd, fclk, ip, in, cl, vth_buff,
//! cal_p, cal_n); the cell goes in `[cell]` and experiment definitions in
//! `[experiment]`. Values are numbers, words, or comma-separated lists;
//! `#` starts a comment.

use std::collections::HashMap;

use thiserror::Error;

use crate::electrochem::RandlesCell;
use crate::fidigota::{trim_output_stage, CircuitParams};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("line {line}: {reason}")]
    Syntax { line: usize, reason: String },
    #[error("missing key '{key}'{}", section_suffix(.section))]
    MissingKey { section: String, key: String },
    #[error("key '{key}': {reason}")]
    BadValue { key: String, reason: String },
    #[error("override '{0}' is not of the form [section.]key=value")]
    BadOverride(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn section_suffix(section: &str) -> String {
    if section.is_empty() {
        String::new()
    } else {
        format!(" in section [{section}]")
    }
}

/// Parsed configuration: ordered key-value pairs per section. The root
/// section has the empty name.
#[derive(Debug, Clone, Default)]
pub struct Config {
    sections: Vec<(String, Vec<(String, String)>)>,
    index: HashMap<(String, String), String>,
}

impl Config {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = Config::default();
        cfg.sections.push((String::new(), Vec::new()));
        let mut current = 0usize;
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(name) = line.strip_prefix('[') {
                let name = name.strip_suffix(']').ok_or_else(|| ConfigError::Syntax {
                    line: idx + 1,
                    reason: "unterminated section header".into(),
                })?;
                let name = name.trim().to_string();
                current = cfg
                    .sections
                    .iter()
                    .position(|(n, _)| *n == name)
                    .unwrap_or_else(|| {
                        cfg.sections.push((name.clone(), Vec::new()));
                        cfg.sections.len() - 1
                    });
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| ConfigError::Syntax {
                line: idx + 1,
                reason: format!("expected 'key = value', got '{line}'"),
            })?;
            let key = key.trim().to_string();
            let value = value.trim().to_string();
            if key.is_empty() {
                return Err(ConfigError::Syntax {
                    line: idx + 1,
                    reason: "empty key".into(),
                });
            }
            let section = cfg.sections[current].0.clone();
            cfg.index.insert((section, key.clone()), value.clone());
            cfg.sections[current].1.push((key, value));
        }
        Ok(cfg)
    }

    pub fn from_file(path: &std::path::Path) -> Result<Self, ConfigError> {
        Ok(Self::parse(&std::fs::read_to_string(path)?)?)
    }

    /// Apply a `[section.]key=value` override, replacing or appending.
    pub fn apply_override(&mut self, spec: &str) -> Result<(), ConfigError> {
        let (path, value) = spec
            .split_once('=')
            .ok_or_else(|| ConfigError::BadOverride(spec.to_string()))?;
        let path = path.trim();
        let value = value.trim().to_string();
        if path.is_empty() {
            return Err(ConfigError::BadOverride(spec.to_string()));
        }
        let (section, key) = match path.split_once('.') {
            Some((s, k)) => (s.trim().to_string(), k.trim().to_string()),
            None => (String::new(), path.to_string()),
        };
        self.index
            .insert((section.clone(), key.clone()), value.clone());
        let sec = match self.sections.iter_mut().find(|(n, _)| *n == section) {
            Some((_, entries)) => entries,
            None => {
                self.sections.push((section, Vec::new()));
                &mut self.sections.last_mut().unwrap().1
            }
        };
        match sec.iter_mut().find(|(k, _)| *k == key) {
            Some(entry) => entry.1 = value,
            None => sec.push((key, value)),
        }
        Ok(())
    }

    pub fn get(&self, section: &str, key: &str) -> Option<&str> {
        self.index
            .get(&(section.to_string(), key.to_string()))
            .map(|s| s.as_str())
    }

    pub fn require(&self, section: &str, key: &str) -> Result<&str, ConfigError> {
        self.get(section, key).ok_or_else(|| ConfigError::MissingKey {
            section: section.to_string(),
            key: key.to_string(),
        })
    }

    pub fn get_f64(&self, section: &str, key: &str) -> Result<Option<f64>, ConfigError> {
        match self.get(section, key) {
            None => Ok(None),
            Some(v) => v
                .parse::<f64>()
                .map(Some)
                .map_err(|e| ConfigError::BadValue {
                    key: qualified(section, key),
                    reason: format!("'{v}' is not a number: {e}"),
                }),
        }
    }

    pub fn require_f64(&self, section: &str, key: &str) -> Result<f64, ConfigError> {
        self.get_f64(section, key)?
            .ok_or_else(|| ConfigError::MissingKey {
                section: section.to_string(),
                key: key.to_string(),
            })
    }

    pub fn get_u64(&self, section: &str, key: &str) -> Result<Option<u64>, ConfigError> {
        match self.get(section, key) {
            None => Ok(None),
            Some(v) => v
                .parse::<u64>()
                .map(Some)
                .map_err(|e| ConfigError::BadValue {
                    key: qualified(section, key),
                    reason: format!("'{v}' is not an integer: {e}"),
                }),
        }
    }

    /// Comma-separated list of numbers.
    pub fn get_f64_list(&self, section: &str, key: &str) -> Result<Option<Vec<f64>>, ConfigError> {
        match self.get(section, key) {
            None => Ok(None),
            Some(v) => {
                let mut out = Vec::new();
                for item in v.split(',') {
                    let item = item.trim();
                    if item.is_empty() {
                        continue;
                    }
                    out.push(item.parse::<f64>().map_err(|e| ConfigError::BadValue {
                        key: qualified(section, key),
                        reason: format!("'{item}' is not a number: {e}"),
                    })?);
                }
                Ok(Some(out))
            }
        }
    }

    /// Serialize the resolved configuration back to the file format.
    pub fn snapshot(&self) -> String {
        let mut out = String::new();
        for (name, entries) in &self.sections {
            if entries.is_empty() {
                continue;
            }
            if !name.is_empty() {
                out.push_str(&format!("[{name}]\n"));
            }
            for (k, v) in entries {
                out.push_str(&format!("{k} = {v}\n"));
            }
        }
        out
    }
}

fn qualified(section: &str, key: &str) -> String {
    if section.is_empty() {
        key.to_string()
    } else {
        format!("{section}.{key}")
    }
}

/// Build circuit parameters from the root section. `vth_buff` defaults to
/// vdd/2 and `cl` to 10 pF; the calibration words `cal_p`/`cal_n` (default 1,
/// the reported baseline) are applied through the output-stage trim map.
pub fn circuit_params(cfg: &Config) -> Result<CircuitParams, ConfigError> {
    let vdd = cfg.require_f64("", "vdd")?;
    let params = CircuitParams {
        vdd,
        fclk: cfg.require_f64("", "fclk")?,
        t0: cfg.require_f64("", "t0")?,
        gm: cfg.require_f64("", "gm")?,
        r0: cfg.require_f64("", "r0")?,
        cfi: cfg.require_f64("", "cfi")?,
        icm: cfg.require_f64("", "icm")?,
        ion: cfg.require_f64("", "ion")?,
        i_p: cfg.require_f64("", "ip")?,
        i_n: cfg.require_f64("", "in")?,
        rout: cfg.require_f64("", "rout")?,
        cl: cfg.get_f64("", "cl")?.unwrap_or(10e-12),
        vth_buff: cfg.get_f64("", "vth_buff")?.unwrap_or(vdd / 2.0),
    };
    let cal_p = cfg.get_u64("", "cal_p")?.unwrap_or(1);
    let cal_n = cfg.get_u64("", "cal_n")?.unwrap_or(1);
    let params = trim_output_stage(&params, cal_p as u32, cal_n as u32).map_err(|e| {
        ConfigError::BadValue {
            key: "cal_p/cal_n".into(),
            reason: e.to_string(),
        }
    })?;
    params.validate().map_err(|e| ConfigError::BadValue {
        key: "circuit parameters".into(),
        reason: e.to_string(),
    })?;
    Ok(params)
}

/// Build the Randles cell from `[cell]`; defaults to the characterized
/// microelectrode when the section is absent.
pub fn cell(cfg: &Config) -> Result<RandlesCell, ConfigError> {
    if cfg.get("cell", "rp").is_none() && cfg.get("cell", "cp").is_none() {
        return Ok(RandlesCell::default_microelectrode());
    }
    RandlesCell::new(
        cfg.require_f64("cell", "rp")?,
        cfg.require_f64("cell", "cp")?,
        cfg.get_f64("cell", "rs")?.unwrap_or(0.0),
    )
    .map_err(|e| ConfigError::BadValue {
        key: "cell".into(),
        reason: e.to_string(),
    })
}
