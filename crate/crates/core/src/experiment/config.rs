use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::{InitRanges, SeriesSchema, SynthSpec};
use crate::error::{Error, Result};
use crate::model::RbfArxSpec;
use crate::recursive::{Algorithm, EstimatorConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    SynthBench,
    MonteCarlo,
    FitSeries,
    Compare,
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ExperimentKind::SynthBench => "synth-bench",
            ExperimentKind::MonteCarlo => "monte-carlo",
            ExperimentKind::FitSeries => "fit-series",
            ExperimentKind::Compare => "compare",
        })
    }
}

impl FromStr for ExperimentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "synth-bench" => Ok(Self::SynthBench),
            "monte-carlo" => Ok(Self::MonteCarlo),
            "fit-series" => Ok(Self::FitSeries),
            "compare" => Ok(Self::Compare),
            other => Err(Error::InvalidConfig(format!("unknown experiment `{other}`"))),
        }
    }
}

/// Estimator knobs shared by every algorithm of an experiment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EstimatorSettings {
    pub s0: f64,
    pub k0: f64,
    pub window_p: usize,
    pub learning_rate: f64,
}

impl Default for EstimatorSettings {
    fn default() -> Self {
        let d = EstimatorConfig::default();
        Self {
            s0: d.s0,
            k0: d.k0,
            window_p: d.window_p,
            learning_rate: d.learning_rate,
        }
    }
}

impl EstimatorSettings {
    pub fn for_algorithm(&self, algorithm: Algorithm) -> EstimatorConfig {
        EstimatorConfig {
            algorithm,
            s0: self.s0,
            k0: self.k0,
            window_p: self.window_p,
            learning_rate: self.learning_rate,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthSettings {
    pub noise_std: f64,
    pub sample_count: usize,
    pub true_a: Vec<f64>,
    pub true_c: Vec<f64>,
}

impl Default for SynthSettings {
    fn default() -> Self {
        let b = SynthSpec::benchmark(0);
        Self {
            noise_std: b.noise_std,
            sample_count: b.sample_count,
            true_a: b.true_a,
            true_c: b.true_c,
        }
    }
}

impl SynthSettings {
    pub fn spec(&self, seed: u64) -> SynthSpec {
        SynthSpec {
            true_a: self.true_a.clone(),
            true_c: self.true_c.clone(),
            noise_std: self.noise_std,
            sample_count: self.sample_count,
            seed,
            inputs: Default::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SeriesTransform {
    #[default]
    None,
    /// `ln(y − 260)` on the target column.
    Ozone,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesSettings {
    /// CSV file; may be absent when the series is supplied in memory.
    #[serde(default)]
    pub path: Option<PathBuf>,
    #[serde(default)]
    pub schema: SeriesSchema,
    #[serde(default)]
    pub transform: SeriesTransform,
    pub model: RbfArxSpec,
    /// First series position of the holdout set.
    pub holdout_from: usize,
    /// Initial kernel widths; default `1 / (d · var(y_train))`.
    #[serde(default)]
    pub init_widths: Option<Vec<f64>>,
    /// Initial kernel centers; default evenly spaced training-target quantiles.
    #[serde(default)]
    pub init_centers: Option<Vec<Vec<f64>>>,
    /// Initial linear coefficients; default zero.
    #[serde(default)]
    pub init_coefficients: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    pub algorithms: Vec<Algorithm>,
    pub master_seed: u64,
    /// Seeds for synth-bench, runs for monte-carlo.
    pub runs: usize,
    pub output_dir: PathBuf,
    pub checkpoints: Vec<usize>,
    pub estimator: EstimatorSettings,
    /// Per-algorithm replacements for `estimator`.
    pub overrides: BTreeMap<Algorithm, EstimatorSettings>,
    pub synth: SynthSettings,
    pub init: InitRanges,
    pub series: Option<SeriesSettings>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            kind: ExperimentKind::SynthBench,
            algorithms: Algorithm::ALL.to_vec(),
            master_seed: 2021,
            runs: 20,
            output_dir: PathBuf::from("out"),
            checkpoints: vec![100, 200, 500, 1000],
            estimator: EstimatorSettings::default(),
            overrides: BTreeMap::new(),
            synth: SynthSettings::default(),
            init: InitRanges::default(),
            series: None,
        }
    }
}

impl ExperimentConfig {
    pub fn new(kind: ExperimentKind) -> Self {
        let mut cfg = Self {
            kind,
            ..Self::default()
        };
        if kind == ExperimentKind::MonteCarlo {
            cfg.runs = 300;
        }
        if kind == ExperimentKind::Compare {
            cfg.runs = 1;
        }
        cfg
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("experiment config serializes")
    }

    pub fn estimator_for(&self, algorithm: Algorithm) -> EstimatorConfig {
        self.overrides
            .get(&algorithm)
            .unwrap_or(&self.estimator)
            .for_algorithm(algorithm)
    }

    pub fn validate(&self) -> Result<()> {
        if self.algorithms.is_empty() {
            return Err(Error::InvalidConfig("no algorithm selected".into()));
        }
        if self.runs == 0 {
            return Err(Error::InvalidConfig("runs must be at least 1".into()));
        }
        match self.kind {
            ExperimentKind::FitSeries => {
                let series = self.series.as_ref().ok_or_else(|| {
                    Error::InvalidConfig("fit-series needs a [series] section".into())
                })?;
                series.model.validate()?;
                let n = series.model.linear_dim();
                for alg in &self.algorithms {
                    self.estimator_for(*alg).validate(n)?;
                }
            }
            _ => {
                self.synth.spec(0).validate()?;
                self.init.validate()?;
                if self.init.a.len() != self.synth.true_a.len()
                    || self.init.c.len() != self.synth.true_c.len()
                {
                    return Err(Error::InvalidConfig(
                        "initial-value ranges do not match the parameter dimensions".into(),
                    ));
                }
                if let Some(cp) = self.checkpoints.iter().find(|&&c| c == 0 || c > self.synth.sample_count) {
                    return Err(Error::InvalidConfig(format!(
                        "checkpoint {cp} outside 1..={}",
                        self.synth.sample_count
                    )));
                }
                for alg in &self.algorithms {
                    self.estimator_for(*alg).validate(self.synth.true_c.len())?;
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toml_round_trip() {
        let mut cfg = ExperimentConfig::new(ExperimentKind::FitSeries);
        cfg.series = Some(SeriesSettings {
            path: Some("data/ozone.csv".into()),
            schema: SeriesSchema::default(),
            transform: SeriesTransform::Ozone,
            model: RbfArxSpec::ar(5, 1, 2),
            holdout_from: 300,
            init_widths: None,
            init_centers: None,
            init_coefficients: None,
        });
        let text = cfg.to_toml();
        assert_eq!(ExperimentConfig::from_toml_str(&text).unwrap(), cfg);
    }

    #[test]
    fn partial_file_uses_defaults() {
        let cfg = ExperimentConfig::from_toml_str(
            "kind = \"monte-carlo\"\nruns = 7\nalgorithms = [\"repi\", \"rgn\"]\n[estimator]\ns0 = 10.0\n",
        )
        .unwrap();
        assert_eq!(cfg.kind, ExperimentKind::MonteCarlo);
        assert_eq!(cfg.runs, 7);
        assert_eq!(cfg.algorithms, vec![Algorithm::Repi, Algorithm::Rgn]);
        assert_eq!(cfg.estimator.s0, 10.0);
        assert_eq!(cfg.estimator.k0, 100.0);
        assert_eq!(cfg.synth.sample_count, 1000);
        cfg.validate().unwrap();
    }

    #[test]
    fn per_algorithm_override() {
        let cfg = ExperimentConfig::from_toml_str(
            "[estimator]\ns0 = 2.0\n[overrides.rvp]\nwindow_p = 25\n",
        )
        .unwrap();
        assert_eq!(cfg.estimator_for(Algorithm::Repi).s0, 2.0);
        assert_eq!(cfg.estimator_for(Algorithm::Rvp).window_p, 25);
        assert_eq!(cfg.estimator_for(Algorithm::Rvp).s0, 1.0);
        assert_eq!(cfg.estimator_for(Algorithm::Rvp).algorithm, Algorithm::Rvp);
    }

    #[test]
    fn validation_failures() {
        let mut cfg = ExperimentConfig::default();
        cfg.algorithms.clear();
        assert!(cfg.validate().is_err());
        let mut cfg = ExperimentConfig::default();
        cfg.checkpoints = vec![2000];
        assert!(cfg.validate().is_err());
        let cfg = ExperimentConfig::new(ExperimentKind::FitSeries);
        assert!(cfg.validate().is_err());
        assert!(ExperimentConfig::from_toml_str("kind = \"nope\"").is_err());
    }
}
