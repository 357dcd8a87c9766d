use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grpo::{LossConfig, RewardConfig};
use crate::rng;
use crate::students::{DatasetConfig, StudentConfig};
use crate::teacher::TeacherConfig;

pub const CONFIG_SCHEMA_VERSION: u32 = 1;

/// Positive rational `num / den`, written `"8/6"` in config files.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Ratio {
    pub num: u64,
    pub den: u64,
}

impl Ratio {
    pub const fn new(num: u64, den: u64) -> Self {
        Self { num, den }
    }

    /// `round(num * n / den)`, halves rounded up.
    pub fn scale(&self, n: u64) -> u64 {
        (2 * self.num * n + self.den) / (2 * self.den)
    }

    pub fn as_f64(&self) -> f64 {
        self.num as f64 / self.den as f64
    }
}

impl fmt::Display for Ratio {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.num, self.den)
    }
}

impl FromStr for Ratio {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let (n, d) = s.split_once('/').unwrap_or((s, "1"));
        let num = n.trim().parse::<u64>().map_err(|e| format!("bad numerator in `{s}`: {e}"))?;
        let den = d.trim().parse::<u64>().map_err(|e| format!("bad denominator in `{s}`: {e}"))?;
        if num == 0 || den == 0 {
            return Err(format!("ratio `{s}` must be positive"));
        }
        Ok(Self { num, den })
    }
}

impl TryFrom<String> for Ratio {
    type Error = String;
    fn try_from(s: String) -> std::result::Result<Self, String> {
        s.parse()
    }
}

impl From<Ratio> for String {
    fn from(r: Ratio) -> String {
        r.to_string()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Seeds {
    pub student: u64,
    pub teacher: u64,
    pub selection: u64,
}

impl Default for Seeds {
    fn default() -> Self {
        Self::from_base(1)
    }
}

impl Seeds {
    /// Derive all seeds from one base. Values keep to 63 bits so they fit a
    /// TOML integer.
    pub fn from_base(seed: u64) -> Self {
        let derive = |tag| rng::mix(seed, &[tag]) >> 1;
        Self {
            student: derive(rng::domain::ROLLOUT),
            teacher: derive(rng::domain::TEACHER_INIT),
            selection: derive(rng::domain::SELECTION),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub group_size: usize,
    /// Prompts per student update.
    pub batch_size: usize,
    /// Selected prompts in the curriculum arm; one metrics row each.
    pub total_steps: u64,
    /// Baseline steps per curriculum step for compute-normalized comparison.
    pub compute_ratio: Ratio,
    pub eval_every: u64,
    pub ema_alpha: f64,
    pub dataset: DatasetConfig,
    pub student: StudentConfig,
    pub teacher: TeacherConfig,
    pub loss: LossConfig,
    pub reward: RewardConfig,
    pub seeds: Seeds,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            schema_version: CONFIG_SCHEMA_VERSION,
            group_size: 16,
            batch_size: 12,
            total_steps: 2_000,
            compute_ratio: Ratio::new(8, 6),
            eval_every: 200,
            ema_alpha: 0.9,
            dataset: DatasetConfig::default(),
            student: StudentConfig::default(),
            teacher: TeacherConfig::default(),
            loss: LossConfig::default(),
            reward: RewardConfig::default(),
            seeds: Seeds::default(),
        }
    }
}

impl ExperimentConfig {
    /// Set the dataset seed and derive all other seeds from `seed`.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.dataset.seed = seed;
        self.seeds = Seeds::from_base(seed);
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |key: &str, reason: &str| Err(Error::Config { key: key.into(), reason: reason.into() });
        if self.schema_version != CONFIG_SCHEMA_VERSION {
            return bad("schema_version", &format!("expected {CONFIG_SCHEMA_VERSION}"));
        }
        if self.group_size < 2 {
            return bad("group_size", "must be >= 2");
        }
        if self.batch_size == 0 {
            return bad("batch_size", "must be >= 1");
        }
        if self.total_steps == 0 {
            return bad("total_steps", "must be >= 1");
        }
        if self.eval_every == 0 {
            return bad("eval_every", "must be >= 1");
        }
        if self.compute_ratio.num < self.compute_ratio.den {
            return bad("compute_ratio", "must be >= 1");
        }
        if !(self.ema_alpha > 0.0 && self.ema_alpha <= 1.0) {
            return bad("ema_alpha", "must be in (0, 1]");
        }
        if self.dataset.validation_size == 0 {
            return bad("dataset.validation_size", "must be >= 1");
        }
        self.dataset.validate()?;
        self.student.validate()?;
        self.teacher.validate()?;
        self.loss.validate()?;
        self.reward.validate()?;
        if self.dataset.size < self.teacher.candidate_size {
            return bad("dataset.size", "smaller than teacher.candidate_size");
        }
        Ok(())
    }

    fn default_table() -> toml::Table {
        match toml::Value::try_from(ExperimentConfig::default()) {
            Ok(toml::Value::Table(t)) => t,
            _ => unreachable!("default config serializes to a table"),
        }
    }

    /// Parse TOML text, apply `key=value` overrides (dotted keys), validate.
    /// Unknown keys are rejected with their full dotted path.
    pub fn from_toml_str(text: &str, overrides: &[String]) -> Result<Self> {
        let mut table: toml::Table = text.parse().map_err(|e: toml::de::Error| Error::Config {
            key: "<file>".into(),
            reason: e.message().to_string(),
        })?;
        let defaults = Self::default_table();
        check_known(&table, &defaults, "")?;
        for ov in overrides {
            apply_override(&mut table, &defaults, ov)?;
        }
        let cfg: Self = toml::Value::Table(table).try_into().map_err(|e: toml::de::Error| Error::Config {
            key: "<file>".into(),
            reason: e.message().to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path, overrides: &[String]) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text, overrides)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }
}

fn check_known(table: &toml::Table, defaults: &toml::Table, prefix: &str) -> Result<()> {
    for (k, v) in table {
        let path = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
        match defaults.get(k) {
            None => {
                return Err(Error::Config { key: path, reason: "unknown key".into() });
            }
            Some(toml::Value::Table(d)) => match v {
                toml::Value::Table(t) => check_known(t, d, &path)?,
                _ => return Err(Error::Config { key: path, reason: "expected a table".into() }),
            },
            Some(_) => {}
        }
    }
    Ok(())
}

fn apply_override(table: &mut toml::Table, defaults: &toml::Table, ov: &str) -> Result<()> {
    let (key, raw) = ov.split_once('=').ok_or_else(|| Error::Config {
        key: ov.to_string(),
        reason: "override must look like key=value".into(),
    })?;
    let key = key.trim();
    let parts: Vec<&str> = key.split('.').collect();
    let mut def = defaults;
    for (i, part) in parts.iter().enumerate() {
        match def.get(*part) {
            Some(toml::Value::Table(t)) if i + 1 < parts.len() => def = t,
            Some(toml::Value::Table(_)) => {
                return Err(Error::Config { key: key.into(), reason: "cannot override a whole table".into() })
            }
            Some(_) if i + 1 == parts.len() => {}
            _ => return Err(Error::Config { key: key.into(), reason: "unknown key".into() }),
        }
    }
    let raw = raw.trim();
    let value = format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    let mut cur = table;
    for part in &parts[..parts.len() - 1] {
        let entry = cur
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = match entry {
            toml::Value::Table(t) => t,
            _ => return Err(Error::Config { key: key.into(), reason: "parent is not a table".into() }),
        };
    }
    cur.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ratio_rounding() {
        let r = Ratio::new(8, 6);
        assert_eq!(r.scale(6), 8);
        assert_eq!(r.scale(20_100), 26_800);
        assert_eq!(r.scale(3), 4);
        assert_eq!(Ratio::new(1, 1).scale(17), 17);
        assert_eq!("8/6".parse::<Ratio>().unwrap(), r);
        assert!("0/3".parse::<Ratio>().is_err());
    }

    #[test]
    fn default_round_trips_through_toml() {
        let cfg = ExperimentConfig::default();
        let back = ExperimentConfig::from_toml_str(&cfg.to_toml_string(), &[]).unwrap();
        assert_eq!(cfg, back);
    }

    #[test]
    fn overrides_apply_and_unknown_keys_are_named() {
        let cfg = ExperimentConfig::from_toml_str(
            "total_steps = 50\n[teacher]\nepsilon = 0.5\n",
            &["teacher.candidate_size=4".into(), "loss.variant=dapo".into(), "compute_ratio=4/3".into()],
        )
        .unwrap();
        assert_eq!(cfg.total_steps, 50);
        assert_eq!(cfg.teacher.epsilon, 0.5);
        assert_eq!(cfg.teacher.candidate_size, 4);
        assert_eq!(cfg.loss.variant, crate::grpo::LossVariant::Dapo);
        assert_eq!(cfg.compute_ratio, Ratio::new(4, 3));

        let err = ExperimentConfig::from_toml_str("[teacher]\nepsilno = 0.5\n", &[]).unwrap_err();
        assert!(matches!(&err, Error::Config { key, .. } if key == "teacher.epsilno"), "{err}");
        let err = ExperimentConfig::from_toml_str("", &["student.irt.skil=1".into()]).unwrap_err();
        assert!(matches!(&err, Error::Config { key, .. } if key == "student.irt.skil"), "{err}");
        let err = ExperimentConfig::from_toml_str("", &["teacher.epsilon=2.0".into()]).unwrap_err();
        assert!(matches!(&err, Error::Config { key, .. } if key == "teacher.epsilon"), "{err}");
    }
}
