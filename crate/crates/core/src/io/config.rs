//! Run configuration (TOML).
//!
//! ```toml
//! seed = 7
//! snapshot_stride = 1
//! desk_scale = 0.05
//!
//! [grid]
//! min_corner = [-6.4, -6.4, -6.4]
//! cell_edge = 0.2
//! dims = [64, 64, 64]
//!
//! [filter]
//! gamma = 0.99
//! ```
//!
//! Particle budgets are not set directly: they are `2e6 * desk_scale`
//! persistent and `2e5 * desk_scale` new-born particles.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::grid::GridSpec;
use crate::pipeline::FilterParams;

/// Full-scale persistent particle budget.
pub const FULL_PARTICLES: f64 = 2.0e6;
/// Full-scale new-born particle budget.
pub const FULL_BIRTH_PARTICLES: f64 = 2.0e5;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config schema error: {0}")]
    Schema(String),
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    #[serde(default = "default_stride")]
    pub snapshot_stride: usize,
    #[serde(default = "default_desk_scale")]
    pub desk_scale: f64,
    #[serde(default = "default_grid")]
    pub grid: GridSpec,
    #[serde(default)]
    pub filter: FilterParams,
}

fn default_stride() -> usize {
    1
}

fn default_desk_scale() -> f64 {
    0.05
}

fn default_grid() -> GridSpec {
    GridSpec::centered([0.0; 3], 0.2, [64, 64, 64]).expect("default grid is valid")
}

impl RunConfig {
    pub fn new(seed: u64, grid: GridSpec) -> Self {
        let mut config = RunConfig {
            seed,
            snapshot_stride: default_stride(),
            desk_scale: default_desk_scale(),
            grid,
            filter: FilterParams::default(),
        };
        config.apply_desk_scale();
        config
    }

    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let table: toml::Table = text.parse().map_err(|e: toml::de::Error| ConfigError::Schema(e.to_string()))?;
        if let Some(filter) = table.get("filter").and_then(|f| f.as_table()) {
            for key in ["particles", "birth_particles"] {
                if filter.contains_key(key) {
                    return Err(ConfigError::Schema(format!(
                        "filter.{key} is derived from desk_scale and cannot be set"
                    )));
                }
            }
        }
        let mut config: RunConfig = toml::from_str(text).map_err(|e| ConfigError::Schema(e.to_string()))?;
        config.apply_desk_scale();
        config.validate()?;
        Ok(config)
    }

    pub fn to_toml_string(&self) -> String {
        let mut table = toml::Table::try_from(self).expect("config serializes");
        if let Some(filter) = table.get_mut("filter").and_then(|f| f.as_table_mut()) {
            filter.remove("particles");
            filter.remove("birth_particles");
        }
        toml::to_string(&table).expect("config serializes")
    }

    /// Sets the particle budgets from `desk_scale`.
    pub fn apply_desk_scale(&mut self) {
        self.filter.particles = (FULL_PARTICLES * self.desk_scale).round() as usize;
        self.filter.birth_particles = (FULL_BIRTH_PARTICLES * self.desk_scale).round() as usize;
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.snapshot_stride == 0 {
            return Err(ConfigError::Invalid("snapshot_stride must be at least 1".into()));
        }
        if !(self.desk_scale > 0.0 && self.desk_scale.is_finite()) {
            return Err(ConfigError::Invalid(format!(
                "desk_scale must be positive, got {}",
                self.desk_scale
            )));
        }
        self.grid
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.filter
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))
    }
}

/// Hex SHA-256 of a byte string.
pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_follow_the_parameter_table() {
        let c = RunConfig::from_toml_str("seed = 3\n").unwrap();
        let f = &c.filter;
        assert_eq!(c.grid.cell_edge, 0.2);
        assert_eq!(f.motion.sigma_p, 0.05);
        assert_eq!(f.motion.sigma_v, 0.1);
        assert_eq!(f.kernel.length, 0.5);
        assert_eq!(f.kernel.sigma0, 0.1);
        assert_eq!(f.motion.p_survive, 0.99);
        assert_eq!(f.p_birth, 0.02);
        assert_eq!(f.gamma, 0.99);
        assert_eq!(f.alpha, 0.9);
        assert_eq!(f.prior_sum, 0.001);
        assert_eq!(c.desk_scale, 0.05);
        assert_eq!(f.particles, 100_000);
        assert_eq!(f.birth_particles, 10_000);
        assert_eq!(c.filter, FilterParams::default());
    }

    #[test]
    fn desk_scale_sets_budgets() {
        let c = RunConfig::from_toml_str("seed = 3\ndesk_scale = 0.1\n").unwrap();
        assert_eq!((c.filter.particles, c.filter.birth_particles), (200_000, 20_000));
    }

    #[test]
    fn unknown_and_derived_keys_rejected() {
        for text in [
            "seed = 1\ncolour = 2\n",
            "seed = 1\n[filter]\ngama = 0.5\n",
            "seed = 1\n[filter.motion]\nsigma = 0.5\n",
            "seed = 1\n[filter]\nparticles = 5\n",
            "seed = 1\n[grid]\ncell_edge = 0.2\ndims = [4, 4, 4]\nmin_corner = [0, 0, 0]\norigin = 1\n",
        ] {
            assert!(matches!(RunConfig::from_toml_str(text), Err(ConfigError::Schema(_))), "{text}");
        }
        assert!(matches!(
            RunConfig::from_toml_str("seed = 1\n[filter]\ngamma = 1.5\n"),
            Err(ConfigError::Invalid(_))
        ));
        assert!(matches!(RunConfig::from_toml_str("snapshot_stride = 1\n"), Err(ConfigError::Schema(_))));
    }

    #[test]
    fn round_trip() {
        let mut c = RunConfig::new(11, GridSpec::centered([1.0, 0.0, 0.0], 0.25, [8, 8, 4]).unwrap());
        c.filter.ground_filter = Some(-1.5);
        let text = c.to_toml_string();
        assert!(!text.contains("particles ="), "{text}");
        assert_eq!(RunConfig::from_toml_str(&text).unwrap(), c);
    }

    #[test]
    fn hash_is_stable() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }
}
