//! `key = value` configuration files.
//!
//! One assignment per line, `#` starts a comment, blank lines are ignored.
//! Keys are case-sensitive; a repeated key keeps its last value.

use std::collections::BTreeMap;

use thiserror::Error;

use super::Problem;

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: expected `key = value`, found {text:?}")]
    Syntax { line: usize, text: String },
    #[error("key {key:?}: cannot parse {value:?} as a number")]
    Number { key: String, value: String },
    #[error("key {key:?} must be positive, got {value}")]
    NotPositive { key: String, value: f64 },
    #[error("age_min {min} must lie below age_max {max}")]
    AgeRange { min: f64, max: f64 },
}

pub fn parse_key_values(text: &str) -> Result<BTreeMap<String, String>, ConfigError> {
    let mut out = BTreeMap::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| ConfigError::Syntax {
            line: idx + 1,
            text: raw.to_string(),
        })?;
        let (k, v) = (k.trim(), v.trim());
        if k.is_empty() || v.is_empty() {
            return Err(ConfigError::Syntax {
                line: idx + 1,
                text: raw.to_string(),
            });
        }
        out.insert(k.to_string(), v.to_string());
    }
    Ok(out)
}

pub(crate) fn number(map: &BTreeMap<String, String>, key: &str) -> Result<Option<f64>, ConfigError> {
    map.get(key)
        .map(|v| {
            v.parse::<f64>().map_err(|_| ConfigError::Number {
                key: key.into(),
                value: v.clone(),
            })
        })
        .transpose()
}

/// Problem-level knobs that a config file or the command line may change.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ProblemOverrides {
    pub gamma: Option<f64>,
    pub a0: Option<f64>,
    pub t_end: Option<f64>,
    pub age_min: Option<f64>,
    pub age_max: Option<f64>,
}

impl ProblemOverrides {
    /// Reads `gamma`, `a0`, `T`, `age_min` and `age_max`; other keys are
    /// left for the caller.
    pub fn from_map(map: &BTreeMap<String, String>) -> Result<Self, ConfigError> {
        Ok(Self {
            gamma: number(map, "gamma")?,
            a0: number(map, "a0")?,
            t_end: number(map, "T")?,
            age_min: number(map, "age_min")?,
            age_max: number(map, "age_max")?,
        })
    }

    /// Values present in `other` win.
    pub fn merged(self, other: ProblemOverrides) -> Self {
        Self {
            gamma: other.gamma.or(self.gamma),
            a0: other.a0.or(self.a0),
            t_end: other.t_end.or(self.t_end),
            age_min: other.age_min.or(self.age_min),
            age_max: other.age_max.or(self.age_max),
        }
    }

    pub fn apply(&self, problem: &mut Problem) -> Result<(), ConfigError> {
        for (key, v) in [("gamma", self.gamma), ("a0", self.a0), ("T", self.t_end)] {
            if let Some(v) = v {
                if !(v > 0.0) {
                    return Err(ConfigError::NotPositive { key: key.into(), value: v });
                }
            }
        }
        if let Some(g) = self.gamma {
            problem.kernel.gamma = g;
        }
        if let Some(a) = self.a0 {
            problem.kernel.a0 = a;
        }
        if let Some(t) = self.t_end {
            problem.t_end = t;
        }
        let min = self.age_min.unwrap_or(problem.age_min);
        let max = self.age_max.unwrap_or(problem.age_max);
        if !(min >= 0.0 && min < max) {
            return Err(ConfigError::AgeRange { min, max });
        }
        problem.age_min = min;
        problem.age_max = max;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::example1_problem;

    #[test]
    fn parses_comments_and_blank_lines() {
        let m = parse_key_values("# header\n\ngamma = 2.5  # trailing\nT=0.5\n").unwrap();
        assert_eq!(m.get("gamma").map(String::as_str), Some("2.5"));
        assert_eq!(m.get("T").map(String::as_str), Some("0.5"));
        assert!(matches!(
            parse_key_values("gamma 2"),
            Err(ConfigError::Syntax { line: 1, .. })
        ));
    }

    #[test]
    fn overrides_apply() {
        let m = parse_key_values("gamma=3\na0=0.2\nage_max=2").unwrap();
        let o = ProblemOverrides::from_map(&m).unwrap();
        let mut p = example1_problem(1.0);
        o.apply(&mut p).unwrap();
        assert_eq!((p.kernel.gamma, p.kernel.a0, p.age_max), (3.0, 0.2, 2.0));
        let bad = ProblemOverrides { gamma: Some(-1.0), ..Default::default() };
        assert!(bad.apply(&mut p).is_err());
        let m = parse_key_values("gamma=abc").unwrap();
        assert!(ProblemOverrides::from_map(&m).is_err());
    }

    #[test]
    fn merge_prefers_other() {
        let a = ProblemOverrides { gamma: Some(1.0), a0: Some(0.1), ..Default::default() };
        let b = ProblemOverrides { gamma: Some(2.0), ..Default::default() };
        let m = a.merged(b);
        assert_eq!((m.gamma, m.a0), (Some(2.0), Some(0.1)));
    }
}
