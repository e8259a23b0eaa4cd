//! Pipeline configuration: every tunable with its default.
//!
//! Configuration files are flat `key = value` lines (TOML syntax without
//! tables). Any key can be overridden individually with [`PipelineConfig::set`];
//! dashes and underscores in key names are interchangeable.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::affinity::AffinityParams;
use crate::boundary::GradientParams;
use crate::error::{Error, Result};
use crate::pmi::{SamplingParams, DEFAULT_GRID, DEFAULT_RHO, DEFAULT_SAMPLES};
use crate::spectral::EigenParams;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub rho: f64,
    pub samples: usize,
    pub mean_distance: f64,
    pub sigma_distance: f64,
    pub min_distance: f64,
    pub max_distance: f64,
    pub grid: usize,
    pub intra_radius: f64,
    pub inter_radius: f64,
    pub scales: Vec<f64>,
    pub scale_weights: Vec<f64>,
    /// Temporal window length per scale.
    pub window: Vec<usize>,
    pub k: usize,
    pub tol: f64,
    pub max_applications: usize,
    pub gradient_sigma: f64,
    pub normalize_percentile: f64,
    /// Spectral graph reduction at full resolution.
    pub reduction: bool,
    pub prior_sigma: f64,
    pub target_reduction: f64,
    /// Fixed pre-grouping threshold; tuned to `target_reduction` when absent.
    pub prior_threshold: Option<f64>,
    /// Weight of the temporal channel relative to the spatial ones in the watershed surface.
    pub temporal_weight: f64,
    pub tolerance_fraction: f64,
    pub levels: usize,
    pub seed: u64,
    /// Solve one window spanning the whole video at every scale.
    pub full_video: bool,
    /// Worker threads; 0 uses all cores.
    pub jobs: usize,
    pub pattern: String,
    pub dump_eigenvectors: bool,
    pub dump_affinity: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let sampling = SamplingParams::default();
        Self {
            rho: DEFAULT_RHO,
            samples: DEFAULT_SAMPLES,
            mean_distance: sampling.mean_distance,
            sigma_distance: sampling.sigma_distance,
            min_distance: sampling.min_distance,
            max_distance: sampling.max_distance,
            grid: DEFAULT_GRID,
            intra_radius: 5.0,
            inter_radius: 3.0,
            scales: vec![1.0, 0.5, 0.25],
            scale_weights: vec![0.5, 0.3, 0.2],
            window: vec![5, 3, 3],
            k: 20,
            tol: 1e-6,
            max_applications: 2000,
            gradient_sigma: 1.5,
            normalize_percentile: 99.9,
            reduction: true,
            prior_sigma: 1.5,
            target_reduction: 13.0,
            prior_threshold: None,
            temporal_weight: 1.0,
            tolerance_fraction: crate::eval::DEFAULT_TOLERANCE_FRACTION,
            levels: 51,
            seed: 0,
            full_video: false,
            jobs: 0,
            pattern: "*.png".into(),
            dump_eigenvectors: false,
            dump_affinity: false,
        }
    }
}

fn config_error(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

fn normalize_key(key: &str) -> String {
    key.trim().replace('-', "_")
}

impl PipelineConfig {
    /// Every configuration key, in declaration order.
    pub const KEYS: &'static [&'static str] = &[
        "rho",
        "samples",
        "mean_distance",
        "sigma_distance",
        "min_distance",
        "max_distance",
        "grid",
        "intra_radius",
        "inter_radius",
        "scales",
        "scale_weights",
        "window",
        "k",
        "tol",
        "max_applications",
        "gradient_sigma",
        "normalize_percentile",
        "reduction",
        "prior_sigma",
        "target_reduction",
        "prior_threshold",
        "temporal_weight",
        "tolerance_fraction",
        "levels",
        "seed",
        "full_video",
        "jobs",
        "pattern",
        "dump_eigenvectors",
        "dump_affinity",
    ];

    /// Keys holding a boolean.
    pub fn is_switch(key: &str) -> bool {
        matches!(
            normalize_key(key).as_str(),
            "reduction" | "full_video" | "dump_eigenvectors" | "dump_affinity"
        )
    }

    /// Re-derives `scale_weights` and `window` for the current `scales` from
    /// the defaults of each scale.
    pub fn fit_per_scale_lists(&mut self, weights: bool, windows: bool) {
        let defaults = Self::default();
        let slot = |s: f64| defaults.scales.iter().position(|&d| d == s);
        if weights {
            self.scale_weights = self
                .scales
                .iter()
                .map(|&s| slot(s).map_or(1.0, |i| defaults.scale_weights[i]))
                .collect();
        }
        if windows {
            self.window = self
                .scales
                .iter()
                .map(|&s| crate::spectral::default_window_len(s))
                .collect();
        }
    }

    pub fn from_str(text: &str) -> Result<Self> {
        let table: toml::Table = toml::from_str(text).map_err(|e| config_error(e.to_string()))?;
        let mut flat = toml::Table::new();
        for (k, v) in table {
            if v.is_table() {
                return Err(config_error(format!("nested section `{k}` is not allowed")));
            }
            flat.insert(normalize_key(&k), v);
        }
        let cfg: Self = flat.try_into().map_err(|e: toml::de::Error| config_error(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_str(&text)
    }

    /// Flat text form that [`PipelineConfig::from_str`] reads back.
    pub fn to_text(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Overrides one key. `value` is parsed as a TOML value; comma-separated
    /// numbers are accepted for list keys and bare words as strings. `none`
    /// restores the default, which clears optional keys.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let key = normalize_key(key);
        let mut table = toml::Table::try_from(&*self).expect("config serializes");
        if !table.contains_key(&key) && !matches!(key.as_str(), "prior_threshold") {
            return Err(config_error(format!("unknown configuration key `{key}`")));
        }
        let parse = |s: &str| -> Option<toml::Value> {
            let doc: toml::Table = toml::from_str(&format!("v = {s}")).ok()?;
            doc.get("v").cloned()
        };
        let is_list = matches!(table.get(&key), Some(toml::Value::Array(_)));
        let value = value.trim();
        if value.eq_ignore_ascii_case("none") {
            table.remove(&key);
            *self = table.try_into().map_err(|e: toml::de::Error| config_error(e.to_string()))?;
            return Ok(());
        }
        let parsed = if is_list && !value.starts_with('[') {
            parse(&format!("[{value}]"))
        } else {
            parse(value)
        }
        .unwrap_or_else(|| toml::Value::String(value.to_string()));
        table.insert(key.clone(), parsed);
        let updated: Self = table
            .try_into()
            .map_err(|e: toml::de::Error| config_error(format!("`{key}`: {e}")))?;
        *self = updated;
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(config_error(format!("`{name}` must be positive and finite, got {v}")))
            }
        };
        positive("rho", self.rho)?;
        positive("mean_distance", self.mean_distance)?;
        positive("sigma_distance", self.sigma_distance)?;
        positive("min_distance", self.min_distance)?;
        positive("intra_radius", self.intra_radius)?;
        positive("inter_radius", self.inter_radius)?;
        positive("tol", self.tol)?;
        positive("gradient_sigma", self.gradient_sigma)?;
        positive("prior_sigma", self.prior_sigma)?;
        positive("tolerance_fraction", self.tolerance_fraction)?;
        if self.max_distance < self.min_distance {
            return Err(config_error("`max_distance` must be >= `min_distance`"));
        }
        if self.samples == 0 || self.k == 0 || self.max_applications == 0 {
            return Err(config_error("`samples`, `k` and `max_applications` must be >= 1"));
        }
        if self.grid < 2 {
            return Err(config_error("`grid` must be >= 2"));
        }
        if self.scales.is_empty() {
            return Err(config_error("`scales` must not be empty"));
        }
        for &s in &self.scales {
            if ![1.0, 0.5, 0.25].contains(&s) {
                return Err(config_error(format!("scale {s} is not one of 1, 0.5, 0.25")));
            }
        }
        let mut sorted = self.scales.clone();
        sorted.sort_by(f64::total_cmp);
        sorted.dedup();
        if sorted.len() != self.scales.len() {
            return Err(config_error("`scales` contains duplicates"));
        }
        if self.scale_weights.len() != self.scales.len() || self.window.len() != self.scales.len() {
            return Err(config_error(format!(
                "`scale_weights` ({}) and `window` ({}) need one entry per scale ({})",
                self.scale_weights.len(),
                self.window.len(),
                self.scales.len()
            )));
        }
        if self.scale_weights.iter().any(|w| !(*w >= 0.0 && w.is_finite()))
            || self.scale_weights.iter().sum::<f64>() <= 0.0
        {
            return Err(config_error("`scale_weights` must be >= 0 with a positive sum"));
        }
        if self.window.contains(&0) {
            return Err(config_error("window lengths must be >= 1"));
        }
        if !(self.normalize_percentile > 0.0 && self.normalize_percentile <= 100.0) {
            return Err(config_error("`normalize_percentile` must lie in (0, 100]"));
        }
        if !(self.target_reduction >= 1.0 && self.target_reduction.is_finite()) {
            return Err(config_error("`target_reduction` must be >= 1"));
        }
        if let Some(t) = self.prior_threshold {
            if !(0.0..=1.0).contains(&t) {
                return Err(config_error("`prior_threshold` must lie in [0, 1]"));
            }
        }
        if !(self.temporal_weight >= 0.0 && self.temporal_weight.is_finite()) {
            return Err(config_error("`temporal_weight` must be >= 0"));
        }
        if self.levels < 2 {
            return Err(config_error("`levels` must be >= 2"));
        }
        if self.pattern.matches('*').count() != 1 {
            return Err(config_error("`pattern` must contain exactly one `*`"));
        }
        Ok(())
    }

    pub fn sampling(&self) -> SamplingParams {
        SamplingParams {
            count: self.samples,
            mean_distance: self.mean_distance,
            sigma_distance: self.sigma_distance,
            min_distance: self.min_distance,
            max_distance: self.max_distance,
        }
    }

    pub fn affinity(&self) -> AffinityParams {
        AffinityParams {
            intra_radius: self.intra_radius,
            inter_radius: self.inter_radius,
        }
    }

    pub fn eigen(&self) -> EigenParams {
        EigenParams {
            k: self.k,
            tol: self.tol,
            max_applications: self.max_applications,
            seed: self.seed,
        }
    }

    pub fn gradient(&self) -> GradientParams {
        GradientParams {
            sigma: self.gradient_sigma,
            normalize_percentile: self.normalize_percentile,
        }
    }

    /// Normalised thresholds `l / (levels - 1)`.
    pub fn thresholds(&self) -> Vec<f64> {
        (0..self.levels)
            .map(|l| l as f64 / (self.levels - 1) as f64)
            .collect()
    }
}
