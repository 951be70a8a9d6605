//! Flat `key=value` run configuration: flags override the file, the file
//! overrides built-in defaults, and unknown keys are rejected.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::PathBuf;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    Int,
    Float,
    Text,
    /// Comma-separated reals.
    FloatList,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KeySpec {
    pub name: &'static str,
    pub kind: Kind,
    /// `None` marks a required key; `Some("")` an optional one left unset.
    pub default: Option<&'static str>,
    pub help: &'static str,
}

impl KeySpec {
    pub const fn new(name: &'static str, kind: Kind, default: Option<&'static str>, help: &'static str) -> Self {
        Self {
            name,
            kind,
            default,
            help,
        }
    }

    pub fn flag(&self) -> String {
        self.name.replace('_', "-")
    }
}

/// Problems with the invocation itself; these map to exit code 2.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

fn check_kind(spec: &KeySpec, value: &str) -> Result<(), UsageError> {
    let ok = value.is_empty()
        || match spec.kind {
            Kind::Int => value.parse::<u64>().is_ok(),
            Kind::Float => value.parse::<f64>().is_ok_and(f64::is_finite),
            Kind::Text => true,
            Kind::FloatList => value
                .split(',')
                .all(|v| v.trim().parse::<f64>().is_ok_and(f64::is_finite)),
        };
    if ok {
        Ok(())
    } else {
        Err(UsageError(format!(
            "invalid value '{value}' for {} ({:?})",
            spec.name, spec.kind
        )))
    }
}

/// Parse `key=value` lines; `#` starts a comment, blank lines are ignored.
pub fn parse_config_text(text: &str) -> Result<Vec<(String, String)>, UsageError> {
    let mut pairs = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| UsageError(format!("config line {}: expected key=value, got '{raw}'", lineno + 1)))?;
        pairs.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(pairs)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub command: String,
    specs: Vec<KeySpec>,
    values: BTreeMap<&'static str, String>,
}

impl RunConfig {
    /// Layer `defaults < file < flags` over `specs`.
    pub fn resolve(
        command: &str,
        specs: &[KeySpec],
        file: &[(String, String)],
        flags: &[(String, String)],
    ) -> Result<Self, UsageError> {
        let mut values = BTreeMap::new();
        for s in specs {
            if let Some(d) = s.default {
                values.insert(s.name, d.to_string());
            }
        }
        for (origin, layer) in [("config file", file), ("flag", flags)] {
            for (k, v) in layer {
                let spec = specs
                    .iter()
                    .find(|s| s.name == k)
                    .ok_or_else(|| UsageError(format!("unknown {origin} key '{k}' for {command}")))?;
                check_kind(spec, v)?;
                values.insert(spec.name, v.clone());
            }
        }
        if let Some(missing) = specs.iter().find(|s| !values.contains_key(s.name)) {
            return Err(UsageError(format!("{command} requires --{}", missing.flag())));
        }
        Ok(Self {
            command: command.to_string(),
            specs: specs.to_vec(),
            values,
        })
    }

    fn raw(&self, key: &str) -> &str {
        self.values
            .get(key)
            .unwrap_or_else(|| panic!("key '{key}' is not declared for {}", self.command))
    }

    pub fn text(&self, key: &str) -> &str {
        self.raw(key)
    }

    pub fn is_set(&self, key: &str) -> bool {
        !self.raw(key).is_empty()
    }

    pub fn path(&self, key: &str) -> Option<PathBuf> {
        self.is_set(key).then(|| PathBuf::from(self.raw(key)))
    }

    pub fn uint(&self, key: &str) -> u64 {
        self.raw(key).parse().expect("validated at resolve")
    }

    pub fn usize(&self, key: &str) -> usize {
        self.uint(key) as usize
    }

    pub fn float(&self, key: &str) -> f64 {
        self.raw(key).parse().expect("validated at resolve")
    }

    pub fn floats(&self, key: &str) -> Vec<f64> {
        if !self.is_set(key) {
            return Vec::new();
        }
        self.raw(key)
            .split(',')
            .map(|v| v.trim().parse().expect("validated at resolve"))
            .collect()
    }

    /// Every key in declaration order, loadable again with `--config`.
    pub fn to_text(&self) -> String {
        let mut s = format!("# objimg {}\n", self.command);
        for spec in &self.specs {
            let _ = writeln!(s, "{}={}", spec.name, self.raw(spec.name));
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SPECS: [KeySpec; 4] = [
        KeySpec::new("epochs", Kind::Int, Some("30"), ""),
        KeySpec::new("lr", Kind::Float, Some("0.0002"), ""),
        KeySpec::new("data", Kind::Text, None, ""),
        KeySpec::new("rates", Kind::FloatList, Some("0.2,0.05"), ""),
    ];

    fn pairs(items: &[(&str, &str)]) -> Vec<(String, String)> {
        items.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
    }

    #[test]
    fn precedence_flags_over_file_over_defaults() {
        let file = parse_config_text("# run\nepochs = 5\nlr=0.1 # fast\n\ndata=d\n").unwrap();
        let cfg = RunConfig::resolve("train", &SPECS, &file, &pairs(&[("epochs", "7")])).unwrap();
        assert_eq!(cfg.usize("epochs"), 7);
        assert_eq!(cfg.float("lr"), 0.1);
        assert_eq!(cfg.floats("rates"), vec![0.2, 0.05]);
        assert_eq!(cfg.text("data"), "d");
        let again = RunConfig::resolve("train", &SPECS, &parse_config_text(&cfg.to_text()).unwrap(), &[]).unwrap();
        assert_eq!(again, cfg);
    }

    #[test]
    fn rejects_unknown_missing_and_mistyped() {
        assert!(RunConfig::resolve("t", &SPECS, &pairs(&[("data", "d"), ("frob", "1")]), &[]).is_err());
        assert!(RunConfig::resolve("t", &SPECS, &[], &[]).is_err());
        assert!(RunConfig::resolve("t", &SPECS, &pairs(&[("data", "d"), ("epochs", "x")]), &[]).is_err());
        assert!(RunConfig::resolve("t", &SPECS, &pairs(&[("data", "d"), ("rates", "0.1,a")]), &[]).is_err());
        assert!(parse_config_text("no equals sign").is_err());
    }
}
