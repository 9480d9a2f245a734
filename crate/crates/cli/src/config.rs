//! Experiment configuration: a single TOML file with strict schema
//! validation, plus a SHA-256 fingerprint of the canonicalized config that
//! every output file carries for provenance.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use visits_core::{Measure, ShiftSystem, Symbol};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    EntrySweep,
    ReturnSweep,
    Oscillation,
    ConditionCheck,
    BoundProfile,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemCfg {
    pub alphabet_size: usize,
    /// Row-major 0/1 entries; omitted means the full shift.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transitions: Option<Vec<u8>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeasureKind {
    Bernoulli,
    Markov,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeasureCfg {
    pub kind: MeasureKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<f64>>,
    /// Row-major stochastic matrix; the stationary vector is computed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub matrix: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetCfg {
    /// Repeating block of the periodic point, written as digits.
    pub block: String,
    /// Cylinder length for experiments that need a single length.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepMethod {
    Exact,
    MonteCarlo,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepCfg {
    pub n_min: usize,
    pub n_max: usize,
    pub t_grid: Vec<f64>,
    pub r_max: usize,
    #[serde(default = "default_method")]
    pub method: SweepMethod,
}

fn default_method() -> SweepMethod {
    SweepMethod::Exact
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McCfg {
    pub samples: u64,
    /// Mandatory: Monte Carlo runs never get an implicit seed.
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OscillationCfg {
    /// Weight of symbol 0; the construction requires w != 1/2.
    pub w: f64,
    pub t0: f64,
    pub r0: u32,
    pub max_blocks: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_grid: Option<Vec<f64>>,
    /// Per-block cap on how far the length search scans upward.
    #[serde(default = "default_max_growth")]
    pub max_growth: usize,
    /// Per-evaluation cap on the observation time.
    #[serde(default = "default_max_tau")]
    pub max_tau: u64,
    /// r_max used for the reported TV distances.
    #[serde(default = "default_r_report")]
    pub r_report: usize,
}

fn default_max_growth() -> usize {
    24
}

fn default_max_tau() -> u64 {
    20_000_000
}

fn default_r_report() -> usize {
    10
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConditionsCfg {
    pub tau: u64,
    pub r_max: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<u64>,
    #[serde(default = "default_pattern_budget")]
    pub pattern_budget: u64,
    #[serde(default = "default_sample_size")]
    pub sample_size: u64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_c0")]
    pub c0: f64,
}

fn default_pattern_budget() -> u64 {
    1_000_000
}

fn default_sample_size() -> u64 {
    20_000
}

fn default_c0() -> f64 {
    1.0
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PhiCfg {
    /// Derive from the measure: zero for Bernoulli, a geometric fit of the
    /// measured mixing coefficients for Markov.
    Auto,
    Zero,
    Geometric { coeff: f64, rho: f64 },
    Algebraic { coeff: f64, kappa: f64 },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DeltaCfg {
    /// Grid search minimizing the evaluated bound.
    Grid,
    /// `delta = log mu(A_n) / log rho` (geometric mixing).
    Geometric,
    /// `delta = mu(A_m)^(-1/kappa)` (algebraic mixing).
    Algebraic,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProfileCfg {
    pub n_min: usize,
    pub n_max: usize,
    pub t: f64,
    pub r_list: Vec<u32>,
    #[serde(default = "default_phi")]
    pub phi: PhiCfg,
    #[serde(default = "default_delta")]
    pub delta: DeltaCfg,
    #[serde(default = "default_c0")]
    pub c: f64,
}

fn default_phi() -> PhiCfg {
    PhiCfg::Auto
}

fn default_delta() -> DeltaCfg {
    DeltaCfg::Grid
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BudgetCfg {
    #[serde(default = "default_dp_cells")]
    pub max_dp_cells: u64,
}

fn default_dp_cells() -> u64 {
    4_000_000_000
}

impl Default for BudgetCfg {
    fn default() -> Self {
        BudgetCfg {
            max_dp_cells: default_dp_cells(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputCfg {
    pub dir: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub kind: ExperimentKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub system: Option<SystemCfg>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub measure: Option<MeasureCfg>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<TargetCfg>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepCfg>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mc: Option<McCfg>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub oscillation: Option<OscillationCfg>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub conditions: Option<ConditionsCfg>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub profile: Option<ProfileCfg>,
    #[serde(default)]
    pub budget: Option<BudgetCfg>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<OutputCfg>,
}

impl ConfigFile {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::config(format!("cannot read {}: {e}", path.display())))?;
        toml::from_str(&text)
            .map_err(|e| CliError::config(format!("{} is not a valid config: {e}", path.display())))
    }

    /// SHA-256 of the canonical JSON serialization of the parsed config.
    pub fn fingerprint(&self) -> String {
        let canonical = serde_json::to_string(self).expect("config serializes");
        let digest = Sha256::digest(canonical.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn build_system(&self) -> CliResult<ShiftSystem> {
        let cfg = self
            .system
            .as_ref()
            .ok_or_else(|| CliError::config("missing [system] section"))?;
        let system = match &cfg.transitions {
            None => ShiftSystem::full(cfg.alphabet_size)?,
            Some(rows) => ShiftSystem::with_transitions(cfg.alphabet_size, rows.clone())?,
        };
        if !system.is_full() && !system.is_primitive() {
            return Err(CliError::config(
                "transition matrix is not primitive; experiments require a mixing system",
            ));
        }
        Ok(system)
    }

    pub fn build_measure(&self, system: &ShiftSystem) -> CliResult<Measure> {
        let cfg = self
            .measure
            .as_ref()
            .ok_or_else(|| CliError::config("missing [measure] section"))?;
        let measure = match cfg.kind {
            MeasureKind::Bernoulli => {
                let weights = cfg.weights.clone().ok_or_else(|| {
                    CliError::config("measure.kind = bernoulli requires measure.weights")
                })?;
                if cfg.matrix.is_some() {
                    return Err(CliError::config(
                        "measure.matrix is not used with a Bernoulli measure",
                    ));
                }
                Measure::bernoulli(weights)?
            }
            MeasureKind::Markov => {
                let matrix = cfg.matrix.clone().ok_or_else(|| {
                    CliError::config("measure.kind = markov requires measure.matrix")
                })?;
                if cfg.weights.is_some() {
                    return Err(CliError::config(
                        "measure.weights is not used with a Markov measure",
                    ));
                }
                Measure::markov(matrix, system.alphabet_size())?
            }
        };
        measure.compatible_with(system)?;
        Ok(measure)
    }

    pub fn target_block(&self, system: &ShiftSystem) -> CliResult<Vec<Symbol>> {
        let cfg = self
            .target
            .as_ref()
            .ok_or_else(|| CliError::config("missing [target] section"))?;
        parse_word(&cfg.block, system.alphabet_size())
    }

    pub fn output_dir(&self, flag: Option<&Path>) -> std::path::PathBuf {
        if let Some(p) = flag {
            return p.to_path_buf();
        }
        match &self.output {
            Some(o) => std::path::PathBuf::from(&o.dir),
            None => std::path::PathBuf::from("out"),
        }
    }
}

/// Parses a word written as decimal digits ("0110"); alphabets up to 10.
pub fn parse_word(text: &str, alphabet: usize) -> CliResult<Vec<Symbol>> {
    if alphabet > 10 {
        return Err(CliError::config(
            "digit word notation supports alphabets up to 10 symbols",
        ));
    }
    if text.is_empty() {
        return Err(CliError::config("word must be nonempty"));
    }
    text.chars()
        .map(|c| {
            let d = c
                .to_digit(10)
                .ok_or_else(|| CliError::config(format!("invalid symbol '{c}' in word")))?;
            if d as usize >= alphabet {
                return Err(CliError::config(format!(
                    "symbol {d} outside alphabet of size {alphabet}"
                )));
            }
            Ok(d as Symbol)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_word_validates() {
        assert_eq!(parse_word("010", 2).unwrap(), vec![0, 1, 0]);
        assert!(parse_word("02", 2).is_err());
        assert!(parse_word("", 2).is_err());
        assert!(parse_word("0a", 2).is_err());
    }

    #[test]
    fn fingerprint_is_stable_and_sensitive() {
        let a: ConfigFile = toml::from_str(
            r#"
            kind = "entry_sweep"
            [system]
            alphabet_size = 2
            [measure]
            kind = "bernoulli"
            weights = [0.3, 0.7]
            [target]
            block = "0"
            [sweep]
            n_min = 2
            n_max = 4
            t_grid = [1.0]
            r_max = 5
            "#,
        )
        .unwrap();
        let f1 = a.fingerprint();
        let f2 = a.fingerprint();
        assert_eq!(f1, f2);
        assert_eq!(f1.len(), 64);
        let mut b = a.clone();
        b.sweep.as_mut().unwrap().r_max = 6;
        assert_ne!(f1, b.fingerprint());
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let err = toml::from_str::<ConfigFile>(
            r#"
            kind = "entry_sweep"
            typo_field = 3
            "#,
        );
        assert!(err.is_err());
    }
}
