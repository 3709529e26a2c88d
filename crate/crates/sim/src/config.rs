//! The harness config file. Every section and field is optional.
//!
//! ```toml
//! [kl_grid]
//! alpha = 0.005
//! ratios = [1.0, 10.0, 200.0]
//! gammas = [-6.0, 0.0]
//!
//! [series]
//! seed = 7
//! length = 320
//! noise_sd = 30.0
//! regimes = [{ level = 0.0, duration = 80 }, { level = 100.0, duration = 80 }]
//!
//! [network]          # two-level filter; omitted fields take the standard values
//! omega1 = 2.0
//! omega2 = -1.0
//!
//! [filter]
//! network_file = "net.toml"   # general network spec, replaces [network]
//! input = "series.csv"        # observations (and truth) instead of [series]
//!
//! [scan]
//! omega1 = { start = -16.0, stop = 2.0, step = 1.0 }
//! omega2 = { start = -16.0, stop = 2.0, step = 1.0 }
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use uhgf_core::network::TwoLevelConfig;

use crate::kl_grid::KlGridConfig;
use crate::scan::Axis;
use crate::series::SeriesSpec;
use crate::HarnessError;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilterSection {
    pub network_file: Option<PathBuf>,
    pub input: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScanSection {
    pub omega1: Option<Axis>,
    pub omega2: Option<Axis>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HarnessConfig {
    pub kl_grid: KlGridConfig,
    pub series: SeriesSpec,
    pub network: Option<TwoLevelConfig>,
    pub filter: FilterSection,
    pub scan: ScanSection,
}

impl HarnessConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, HarnessError> {
        Ok(toml::from_str(text)?)
    }

    /// Reads a config file. Relative paths inside it are resolved against
    /// the file's directory.
    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| HarnessError::config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::from_toml_str(&text)?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [&mut cfg.filter.network_file, &mut cfg.filter.input]
            .into_iter()
            .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_is_all_defaults() {
        let cfg = HarnessConfig::from_toml_str("").unwrap();
        assert_eq!(cfg, HarnessConfig::default());
        assert_eq!(cfg.kl_grid.ratios.len(), 8);
    }

    #[test]
    fn doc_example_parses() {
        let text = r#"
            [kl_grid]
            alpha = 0.005
            ratios = [1.0, 10.0, 200.0]
            gammas = [-6.0, 0.0]
            [series]
            seed = 3
            regimes = [{ level = 0.0, duration = 80 }]
            [network]
            omega2 = 2.0
            [scan]
            omega1 = { start = -16.0, stop = 2.0, step = 1.0 }
        "#;
        let cfg = HarnessConfig::from_toml_str(text).unwrap();
        assert_eq!(cfg.kl_grid.ratios, vec![1.0, 10.0, 200.0]);
        assert_eq!(cfg.series.seed, 3);
        assert_eq!(cfg.series.length, 320);
        let net = cfg.network.unwrap();
        assert_eq!((net.omega1, net.omega2), (2.0, 2.0));
        assert_eq!(cfg.scan.omega1.unwrap().step, 1.0);
        assert!(cfg.scan.omega2.is_none());
    }

    #[test]
    fn unknown_fields_are_errors() {
        assert!(HarnessConfig::from_toml_str("[series]\nsed = 1\n").is_err());
        assert!(HarnessConfig::from_toml_str("[bogus]\n").is_err());
    }
}
