//! Campaign description: TOML schema and built-in presets.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::combining::AssociationRule;
use crate::error::{Error, Result};
use crate::ris::{Method, RisSettings};
use crate::scenario::SystemConfig;

/// One carrier with its paired panel size.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Band {
    pub freq_hz: f64,
    pub n_r: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSpec {
    pub r_values: Vec<usize>,
    pub methods: Vec<Method>,
    /// Empty means the scenario's own carrier and `ris_elements`.
    pub bands: Vec<Band>,
    /// Physical panel side in metres held fixed across bands; element spacing follows.
    pub panel_side: Option<f64>,
    pub n_deployments: usize,
    pub n_blocks: usize,
}

impl Default for SweepSpec {
    fn default() -> Self {
        Self {
            r_values: vec![0, 5, 10],
            methods: Method::ALL.to_vec(),
            bands: Vec::new(),
            panel_side: None,
            n_deployments: 20,
            n_blocks: 20,
        }
    }
}

/// Source of the statistics fed to the estimator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CovarianceMode {
    /// Closed-form second moments of the aggregated channel.
    Analytic,
    /// Sample average over fresh channel draws.
    Sampled,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimationSpec {
    pub covariance: CovarianceMode,
    /// Draws per covariance estimate in sampled mode.
    pub n_cov: usize,
}

impl Default for EstimationSpec {
    fn default() -> Self {
        Self {
            covariance: CovarianceMode::Analytic,
            n_cov: 200,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSpec {
    pub path: PathBuf,
}

impl Default for OutputSpec {
    fn default() -> Self {
        Self {
            path: PathBuf::from("results.csv"),
        }
    }
}

/// Full campaign description.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CampaignSpec {
    pub scenario: SystemConfig,
    pub sweep: SweepSpec,
    pub ris: RisSettings,
    pub association: AssociationRule,
    pub estimation: EstimationSpec,
    pub output: OutputSpec,
}

/// Named built-in campaigns.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    /// L=10, K=5, N_R=16, 20 deployments x 20 blocks.
    Desk,
    /// L=20, K=10, N_R=64, R up to 20, 100 x 100. Long running.
    Paper,
    /// 30 x 30 cm panels at 3.5, 8 and 15 GHz.
    EqualArea,
}

impl std::str::FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "desk" => Ok(Preset::Desk),
            "paper" => Ok(Preset::Paper),
            "equal-area" => Ok(Preset::EqualArea),
            other => Err(Error::Config(format!("unknown preset {other:?}"))),
        }
    }
}

impl CampaignSpec {
    pub fn preset(preset: Preset) -> Self {
        match preset {
            Preset::Desk => {
                let mut s = Self::default();
                s.ris.block_size = 4;
                s.output.path = PathBuf::from("desk.csv");
                s
            }
            Preset::Paper => {
                let mut s = Self::default();
                s.scenario.num_aps = 20;
                s.scenario.num_ms = 10;
                s.scenario.ris_elements = 64;
                s.sweep.r_values = (0..=20).collect();
                s.sweep.n_deployments = 100;
                s.sweep.n_blocks = 100;
                s.output.path = PathBuf::from("paper.csv");
                s
            }
            Preset::EqualArea => {
                let mut s = Self::preset(Preset::Paper);
                s.sweep.r_values = vec![0, 5, 10];
                s.sweep.bands = vec![
                    Band { freq_hz: 3.5e9, n_r: 64 },
                    Band { freq_hz: 8e9, n_r: 256 },
                    Band { freq_hz: 15e9, n_r: 1024 },
                ];
                s.sweep.panel_side = Some(0.3);
                s.sweep.n_deployments = 20;
                s.sweep.n_blocks = 20;
                s.output.path = PathBuf::from("equal_area.csv");
                s
            }
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let spec: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("campaign spec serializes")
    }

    /// Sweep bands, falling back to the scenario carrier and panel.
    pub fn bands(&self) -> Vec<Band> {
        if self.sweep.bands.is_empty() {
            vec![Band {
                freq_hz: self.scenario.carrier_freq,
                n_r: self.scenario.ris_elements,
            }]
        } else {
            self.sweep.bands.clone()
        }
    }

    /// System parameters for one (band, R) sweep point.
    pub fn point_config(&self, band: Band, num_ris: usize) -> SystemConfig {
        let mut cfg = self.scenario.clone();
        cfg.carrier_freq = band.freq_hz;
        cfg.ris_elements = band.n_r;
        cfg.num_ris = num_ris;
        if let Some(side) = self.sweep.panel_side {
            let per_side = (band.n_r as f64).sqrt();
            cfg.ris_element_spacing = side / per_side / cfg.wavelength();
        }
        cfg
    }

    pub fn validate(&self) -> Result<()> {
        let sw = &self.sweep;
        if sw.r_values.is_empty() || sw.methods.is_empty() {
            return Err(Error::Config("sweep.r_values and sweep.methods must be nonempty".into()));
        }
        if sw.n_deployments == 0 || sw.n_blocks == 0 {
            return Err(Error::Config("sweep.n_deployments and sweep.n_blocks must be at least 1".into()));
        }
        if let Some(side) = sw.panel_side {
            if !(side > 0.0) {
                return Err(Error::Config(format!("sweep.panel_side = {side} must be positive")));
            }
        }
        if self.estimation.covariance == CovarianceMode::Sampled && self.estimation.n_cov < 100 {
            return Err(Error::Config("estimation.n_cov must be at least 100".into()));
        }
        if let AssociationRule::TopQ { q } = self.association {
            if q == 0 || q > self.scenario.num_aps {
                return Err(Error::Config(format!("association q = {q} outside 1..={}", self.scenario.num_aps)));
            }
        }
        if self.ris.codebook_size == 0 || self.ris.grid_points == 0 {
            return Err(Error::Config("ris.codebook_size and ris.grid_points must be positive".into()));
        }
        for band in self.bands() {
            let max_r = sw.r_values.iter().copied().max().unwrap_or(0);
            let cfg = self.point_config(band, max_r);
            cfg.validate()?;
            if sw.methods.contains(&Method::Grouped) && (self.ris.block_size == 0 || band.n_r % self.ris.block_size != 0) {
                return Err(Error::Config(format!(
                    "ris.block_size = {} does not divide N_R = {}",
                    self.ris.block_size, band.n_r
                )));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_validate() {
        for p in [Preset::Desk, Preset::Paper, Preset::EqualArea] {
            CampaignSpec::preset(p).validate().unwrap();
        }
    }

    #[test]
    fn toml_round_trip() {
        for p in [Preset::Desk, Preset::EqualArea] {
            let spec = CampaignSpec::preset(p);
            assert_eq!(CampaignSpec::from_toml(&spec.to_toml()).unwrap(), spec);
        }
    }

    #[test]
    fn partial_toml_fills_defaults() {
        let spec = CampaignSpec::from_toml(
            "[scenario]\nnum_ms = 3\n[sweep]\nr_values = [0, 2]\nmethods = [1, 4]\n[association]\nrule = \"top_q\"\nq = 2\n",
        )
        .unwrap();
        assert_eq!(spec.scenario.num_ms, 3);
        assert_eq!(spec.sweep.methods, vec![Method::LosAware, Method::Codebook]);
        assert_eq!(spec.association, AssociationRule::TopQ { q: 2 });
        assert_eq!(spec.sweep.n_blocks, 20);
    }

    #[test]
    fn bad_configs_rejected() {
        assert!(CampaignSpec::from_toml("[sweep]\nr_values = []\n").is_err());
        assert!(CampaignSpec::from_toml("[sweep]\nn_blocks = 0\n").is_err());
        assert!(CampaignSpec::from_toml("[sweep]\nmethods = [6]\n").is_err());
        assert!(CampaignSpec::from_toml("[scenario]\nbogus = 1\n").is_err());
        assert!(CampaignSpec::from_toml("[ris]\nblock_size = 3\n").is_err());
        assert!("huge".parse::<Preset>().is_err());
    }

    #[test]
    fn equal_area_spacing_keeps_panel_side() {
        let spec = CampaignSpec::preset(Preset::EqualArea);
        for band in spec.bands() {
            let cfg = spec.point_config(band, 5);
            let side = cfg.ris_element_spacing * cfg.wavelength() * (band.n_r as f64).sqrt();
            assert!((side - 0.3).abs() < 1e-12);
        }
    }
}
