//! Line-oriented `key=value` configuration.

use std::path::Path;

use dpor_core::params::Profile;
use dpor_core::sigtag::SigScheme;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Config {
    pub profile: Profile,
    pub profile_name: String,
    pub n: u64,
    pub m: usize,
    pub sig_scheme: SigScheme,
    /// Challenges per occupied level (and for C).
    pub per_level: usize,
    pub extra_attempts: usize,
    pub max_consecutive_failures: usize,
    /// Fixed RNG seed; OS randomness when absent.
    pub seed: Option<u64>,
    /// Remote server address; local snapshot when absent.
    pub server: Option<String>,
    pub dir: String,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            profile: Profile::TOY,
            profile_name: "toy".into(),
            n: 64,
            m: 8,
            sig_scheme: SigScheme::Ed25519,
            per_level: 8,
            extra_attempts: 64,
            max_consecutive_failures: 16,
            seed: None,
            server: None,
            dir: ".".into(),
        }
    }
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum ConfigError {
    #[error("line {line}: expected key=value")]
    Syntax { line: usize },
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },
    #[error("bad value `{value}` for `{key}`")]
    BadValue { key: String, value: String },
    #[error("cannot read config {path}: {msg}")]
    Io { path: String, msg: String },
}

pub fn parse_kv(text: &str) -> Result<Vec<(usize, String, String)>, ConfigError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or(ConfigError::Syntax { line: i + 1 })?;
        out.push((i + 1, k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

impl Config {
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let bad = || ConfigError::BadValue { key: key.into(), value: value.into() };
        fn num<T: std::str::FromStr>(v: &str, bad: impl Fn() -> ConfigError) -> Result<T, ConfigError> {
            v.parse().map_err(|_| bad())
        }
        match key {
            "profile" => {
                self.profile = Profile::by_name(value).ok_or_else(bad)?;
                self.profile_name = value.into();
            }
            "lambda" => self.profile.lambda = num(value, bad)?,
            "lambda_p" => self.profile.lambda_p = num(value, bad)?,
            "lambda_q" => self.profile.lambda_q = num(value, bad)?,
            "n" => self.n = num(value, bad)?,
            "m" => self.m = num(value, bad)?,
            "sig_scheme" => self.sig_scheme = SigScheme::by_name(value).ok_or_else(bad)?,
            "per_level" | "c" => self.per_level = num(value, bad)?,
            "extra_attempts" => self.extra_attempts = num(value, bad)?,
            "max_consecutive_failures" => self.max_consecutive_failures = num(value, bad)?,
            "seed" => self.seed = Some(num(value, bad)?),
            "server" => self.server = (!value.is_empty()).then(|| value.to_string()),
            "dir" => self.dir = value.into(),
            _ => return Err(ConfigError::UnknownKey { line: 0, key: key.into() }),
        }
        Ok(())
    }

    pub fn apply_text(&mut self, text: &str) -> Result<(), ConfigError> {
        for (line, k, v) in parse_kv(text)? {
            self.set(&k, &v).map_err(|e| match e {
                ConfigError::UnknownKey { key, .. } => ConfigError::UnknownKey { line, key },
                other => other,
            })?;
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Config, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::Io { path: path.display().to_string(), msg: e.to_string() })?;
        let mut c = Config::default();
        c.apply_text(&text)?;
        Ok(c)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_and_overrides() {
        let mut c = Config::default();
        c.apply_text("# comment\nprofile = paper\n\nn=16 # trailing\nper_level=4\nseed=9\nserver=\n").unwrap();
        assert_eq!(c.profile, Profile::PAPER);
        assert_eq!((c.n, c.per_level, c.seed, c.server.as_deref()), (16, 4, Some(9), None));
    }

    #[test]
    fn rejects_bad_lines() {
        let mut c = Config::default();
        assert_eq!(c.apply_text("n"), Err(ConfigError::Syntax { line: 1 }));
        assert_eq!(c.apply_text("\nfoo=1"), Err(ConfigError::UnknownKey { line: 2, key: "foo".into() }));
        assert!(matches!(c.apply_text("n=x"), Err(ConfigError::BadValue { .. })));
        assert!(matches!(c.apply_text("profile=huge"), Err(ConfigError::BadValue { .. })));
    }

    #[test]
    fn shipped_profiles_load() {
        let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
        let toy = Config::load(&dir.join("toy.conf")).unwrap();
        assert_eq!(toy.profile, Profile::TOY);
        let paper = Config::load(&dir.join("paper.conf")).unwrap();
        assert_eq!((paper.profile.lambda, paper.profile.lambda_p, paper.profile.lambda_q), (128, 1024, 257));
    }
}
