//! Deployment configuration, read from TOML. Every field is optional.

use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use journeys_core::engagement::{DistanceUnit, DEFAULT_BIRD_SPEED_MPS};
use journeys_core::geo::CommunityConfig;
use journeys_core::store::{Policy, DEFAULT_DEDUP_RADIUS_M};
use serde::Deserialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("reading {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("parsing {path}: {source}")]
    Parse {
        path: PathBuf,
        source: toml::de::Error,
    },
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub community: CommunityConfig,
    pub dedup_radius_m: f64,
    pub welcome: WelcomeConfig,
    pub store: StoreConfig,
    pub server: ServerConfig,
    /// Fixed seed for pseudonyms, tokens and welcome draws. Testing only:
    /// a seeded deployment issues predictable tokens.
    pub rng_seed: Option<u64>,
    /// Venue/address fixture for the offline geocoder; the built-in one
    /// when unset.
    pub geocoder_fixture: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WelcomeConfig {
    pub bird_speed_mps: f64,
    pub units: DistanceUnit,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StoreConfig {
    /// Journal file; in-memory when unset.
    pub path: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServerConfig {
    pub bind: SocketAddr,
    /// Bearer token for `/admin/*`. Admin routes are disabled without one.
    pub admin_token: Option<String>,
    /// State-changing requests allowed per token per minute; 0 disables.
    pub writes_per_minute: u32,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            community: CommunityConfig::default(),
            dedup_radius_m: DEFAULT_DEDUP_RADIUS_M,
            welcome: WelcomeConfig::default(),
            store: StoreConfig::default(),
            server: ServerConfig::default(),
            rng_seed: None,
            geocoder_fixture: None,
        }
    }
}

impl Default for WelcomeConfig {
    fn default() -> Self {
        WelcomeConfig {
            bird_speed_mps: DEFAULT_BIRD_SPEED_MPS,
            units: DistanceUnit::Metric,
        }
    }
}

impl Default for ServerConfig {
    fn default() -> Self {
        ServerConfig {
            bind: SocketAddr::from(([127, 0, 0, 1], 8080)),
            admin_token: None,
            writes_per_minute: 60,
        }
    }
}

impl Config {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_owned(),
            source,
        })?;
        let config: Config = toml::from_str(&text).map_err(|source| ConfigError::Parse {
            path: path.to_owned(),
            source,
        })?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.dedup_radius_m.is_finite() && self.dedup_radius_m >= 0.0) {
            return Err(ConfigError::Invalid("dedup_radius_m must be finite and non-negative".into()));
        }
        if !(self.welcome.bird_speed_mps.is_finite() && self.welcome.bird_speed_mps > 0.0) {
            return Err(ConfigError::Invalid("welcome.bird_speed_mps must be positive".into()));
        }
        if self.server.admin_token.as_deref().is_some_and(|t| t.len() < 16) {
            return Err(ConfigError::Invalid("server.admin_token must be at least 16 characters".into()));
        }
        Ok(())
    }

    pub fn policy(&self) -> Policy {
        Policy {
            community: self.community,
            dedup_radius_m: self.dedup_radius_m,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let c: Config = toml::from_str("").unwrap();
        assert_eq!(c, Config::default());
        assert_eq!(c.policy(), Policy::default());
    }

    #[test]
    fn overrides() {
        let c: Config = toml::from_str(
            r#"
            dedup_radius_m = 25.0
            rng_seed = 7
            [community]
            divisor = 8.0
            [welcome]
            units = "imperial"
            [server]
            bind = "0.0.0.0:9000"
            admin_token = "0123456789abcdef"
            "#,
        )
        .unwrap();
        c.validate().unwrap();
        assert_eq!(c.community.divisor(), 8.0);
        assert_eq!(c.community.min_radius_m(), 91.44);
        assert_eq!(c.dedup_radius_m, 25.0);
        assert_eq!(c.welcome.units, DistanceUnit::Imperial);
        assert_eq!(c.server.bind.port(), 9000);
        assert_eq!(c.rng_seed, Some(7));
    }

    #[test]
    fn example_file_parses() {
        let c: Config = toml::from_str(include_str!("../../../config/journeys.example.toml")).unwrap();
        c.validate().unwrap();
        assert_eq!(c.policy(), Policy::default());
        assert_eq!(c.store.path.as_deref(), Some(Path::new("journeys.jsonl")));
    }

    #[test]
    fn rejects_nonsense() {
        assert!(toml::from_str::<Config>("[community]\ndivisor = 0.0").is_err());
        assert!(toml::from_str::<Config>("colour = 'blue'").is_err());
        let c: Config = toml::from_str("[server]\nadmin_token = 'short'").unwrap();
        assert!(c.validate().is_err());
        let c: Config = toml::from_str("[welcome]\nbird_speed_mps = 0.0").unwrap();
        assert!(c.validate().is_err());
    }
}
