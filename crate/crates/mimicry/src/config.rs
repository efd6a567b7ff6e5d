//! TOML run configuration.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use mimicry_core::dyads::DyadParams;
use mimicry_core::estimate::{DoseParams, Grouping};
use mimicry_core::matching::AdjustmentSpec;
use mimicry_core::sensitivity::Sidedness;
use mimicry_core::sim::SimulationConfig;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Master seed. Required, either here or on the command line.
    pub seed: Option<u64>,
    pub input: InputConfig,
    pub output: OutputConfig,
    pub dyads: DyadConfig,
    pub adjustment: AdjustmentSpec,
    pub estimation: EstimationConfig,
    pub analyses: AnalysesConfig,
    /// Used by `simulate`; its seed is replaced by the run seed.
    pub simulation: SimulationConfig,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InputConfig {
    pub transactions: Option<PathBuf>,
    pub catalog: Option<PathBuf>,
    pub demographics: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
    pub plots: bool,
    /// Also write the context, dyad and matched-pair dumps.
    pub dumps: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { dir: PathBuf::from("out"), plots: true, dumps: true }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DyadConfig {
    pub max_gap_s: i64,
    pub min_pair_count: usize,
    pub require_anchor: bool,
    pub frequency_before_anchor: bool,
    /// Share of dyads whose partner bought an addition needed to study it in a daypart.
    pub addition_threshold: f64,
}

impl Default for DyadConfig {
    fn default() -> Self {
        let d = DyadParams::default();
        Self {
            max_gap_s: d.max_gap_s,
            min_pair_count: d.min_pair_count,
            require_anchor: d.require_anchor,
            frequency_before_anchor: d.frequency_before_anchor,
            addition_threshold: 0.01,
        }
    }
}

impl DyadConfig {
    pub fn params(&self) -> DyadParams {
        DyadParams {
            max_gap_s: self.max_gap_s,
            require_anchor: self.require_anchor,
            min_pair_count: self.min_pair_count,
            frequency_before_anchor: self.frequency_before_anchor,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimationConfig {
    pub replicates: usize,
    pub level: f64,
    pub alpha: f64,
    pub min_stratum: usize,
    pub sidedness: Sidedness,
    /// Largest Γ on the reported p-value grid.
    pub gamma_grid_max: f64,
    pub lambda_max: f64,
    pub dose: DoseParams,
    pub coordination_min_per_order: usize,
    pub coordination_sample_per_pair: usize,
}

impl Default for EstimationConfig {
    fn default() -> Self {
        Self {
            replicates: 1000,
            level: 0.95,
            alpha: 0.05,
            min_stratum: 50,
            sidedness: Sidedness::OneSided,
            gamma_grid_max: 5.0,
            lambda_max: 50.0,
            dose: DoseParams::default(),
            coordination_min_per_order: 10,
            coordination_sample_per_pair: 10,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysesConfig {
    pub baseline: bool,
    pub sensitivity: bool,
    pub dose_response: bool,
    pub coordination: bool,
    pub subgroups: Vec<Grouping>,
    pub anchor_mimicry: bool,
    /// Fill missing statuses with forest predictions before subgroup analysis.
    pub infer_status: bool,
}

impl Default for AnalysesConfig {
    fn default() -> Self {
        Self {
            baseline: true,
            sensitivity: true,
            dose_response: true,
            coordination: true,
            subgroups: vec![Grouping::StatusPair, Grouping::AdditionItem, Grouping::Daypart],
            anchor_mimicry: true,
            infer_status: false,
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).context("config")
    }

    /// Loads a config and resolves its relative paths against the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
        let mut cfg = Self::from_toml(&text).with_context(|| format!("in {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [&mut cfg.input.transactions, &mut cfg.input.catalog, &mut cfg.input.demographics]
            .into_iter()
            .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    pub fn seed(&self) -> Result<u64> {
        match self.seed {
            Some(s) => Ok(s),
            None => bail!("config: no seed; set `seed` in the config or pass --seed"),
        }
    }

    /// Checks ranges and that referenced inputs exist.
    pub fn validate(&self) -> Result<()> {
        self.seed()?;
        self.adjustment.validate().context("config: adjustment")?;
        let e = &self.estimation;
        if e.replicates == 0 {
            bail!("config: estimation.replicates must be positive");
        }
        if !(e.level > 0.0 && e.level < 1.0) || !(e.alpha > 0.0 && e.alpha < 1.0) {
            bail!("config: estimation.level and estimation.alpha must lie in (0, 1)");
        }
        if !(e.gamma_grid_max >= 1.0) || !(e.lambda_max > 1.0) {
            bail!("config: gamma_grid_max must be at least 1 and lambda_max above 1");
        }
        if e.dose.bin_width_s <= 0 || e.dose.max_delay_s < e.dose.bin_width_s {
            bail!("config: dose bins need a positive width not above max_delay_s");
        }
        let d = &self.dyads;
        if d.max_gap_s <= 0 || !(0.0..=1.0).contains(&d.addition_threshold) {
            bail!("config: dyads.max_gap_s must be positive and addition_threshold in [0, 1]");
        }
        for (name, p) in [
            ("transactions", &self.input.transactions),
            ("catalog", &self.input.catalog),
            ("demographics", &self.input.demographics),
        ] {
            if let Some(p) = p {
                if !p.exists() {
                    bail!("config: input.{name} {} does not exist", p.display());
                }
            }
        }
        Ok(())
    }

    pub fn transactions(&self) -> Result<&Path> {
        self.input.transactions.as_deref().context("config: input.transactions is not set")
    }

    pub fn catalog(&self) -> Result<&Path> {
        self.input.catalog.as_deref().context("config: input.catalog is not set")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nested_sections() {
        let cfg = RunConfig::from_toml(
            r#"
seed = 7
[dyads]
max_gap_s = 120
[adjustment]
match_focal_identity = true
caliper = { mode = "absolute", width = 0.05 }
[estimation]
replicates = 200
[analyses]
subgroups = ["focal_status", "year"]
[simulation]
n_persons = 50
"#,
        )
        .unwrap();
        assert_eq!(cfg.seed, Some(7));
        assert_eq!(cfg.dyads.max_gap_s, 120);
        assert_eq!(cfg.dyads.min_pair_count, 10);
        assert!(cfg.adjustment.match_focal_identity);
        assert_eq!(cfg.estimation.replicates, 200);
        assert_eq!(cfg.analyses.subgroups, vec![Grouping::FocalStatus, Grouping::Year]);
        assert_eq!(cfg.simulation.n_persons, 50);
        assert_eq!(cfg.simulation.n_shops, 2);
    }

    #[test]
    fn seed_is_mandatory() {
        let cfg = RunConfig::from_toml("").unwrap();
        assert!(cfg.validate().is_err());
        assert!(RunConfig::from_toml("seed = 1\nunknown = 2").is_err());
    }

    #[test]
    fn missing_input_is_rejected() {
        let cfg = RunConfig::from_toml("seed = 1\n[input]\ntransactions = \"/nonexistent/tx.csv\"").unwrap();
        let err = cfg.validate().unwrap_err();
        assert!(err.to_string().contains("does not exist"));
    }
}
