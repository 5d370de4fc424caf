//! Run configuration: TOML or JSON file, overridden by command-line flags.

use std::path::Path;

use nuflavor::hamiltonians::{theta_from_sin2_2theta, BlockSign, NeutrinoParams, DEFAULT_SIN2_2THETA, GENUINE_STATES};
use nuflavor::mitigation::ReadoutNoise;
use nuflavor::qlanczos::{DELTA_THREE_QUBIT, DELTA_TWO_QUBIT};
use nuflavor::{PauliSum, SamplingPlan};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    #[default]
    Exact,
    Sampled,
}

/// Reduced block by sector: `k1`, `k3` (2 qubits) or `k2` (3 qubits).
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Block {
    #[default]
    K1,
    K3,
    K2,
}

impl Block {
    /// Block Hamiltonian, negated when `negate` is set.
    pub fn hamiltonian(self, params: &NeutrinoParams, negate: bool) -> nuflavor::Result<PauliSum> {
        use nuflavor::hamiltonians::{reduced_one_particle_block, reduced_two_particle_block};
        let h = match self {
            Block::K1 => reduced_one_particle_block(params, BlockSign::Minus)?,
            Block::K3 => reduced_one_particle_block(params, BlockSign::Plus)?,
            Block::K2 => reduced_two_particle_block(params)?,
        };
        Ok(if negate { -h } else { h })
    }

    pub fn genuine(self) -> Vec<usize> {
        match self {
            Block::K2 => GENUINE_STATES.to_vec(),
            _ => (0..4).collect(),
        }
    }

    pub fn default_delta(self) -> f64 {
        match self {
            Block::K2 => DELTA_THREE_QUBIT,
            _ => DELTA_TWO_QUBIT,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Physics {
    pub omega0: f64,
    pub sin2_2theta: f64,
}

impl Default for Physics {
    fn default() -> Self {
        Self { omega0: 1.0, sin2_2theta: DEFAULT_SIN2_2THETA }
    }
}

impl Physics {
    pub fn params(&self, n_neutrinos: usize, mu: f64) -> NeutrinoParams {
        NeutrinoParams::new(n_neutrinos, mu).with_omega0(self.omega0).with_theta(theta_from_sin2_2theta(self.sin2_2theta))
    }
}

/// Readout bit-flip probabilities used by sampled runs.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Readout {
    pub p01: f64,
    pub p10: f64,
}

impl Readout {
    pub fn noise(&self) -> ReadoutNoise {
        ReadoutNoise::symmetric(self.p01, self.p10)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpectrumSection {
    pub mu_values: Vec<f64>,
    pub delta_two_qubit: f64,
    pub delta_three_qubit: f64,
    /// Largest allowed `|E - E_exact|` in exact mode.
    pub tolerance: f64,
    /// Allowed deviation in units of `dE` in sampled mode.
    pub sigmas: f64,
}

impl Default for SpectrumSection {
    fn default() -> Self {
        Self {
            mu_values: vec![0.0, 0.25, 0.5, 0.75, 1.0],
            delta_two_qubit: DELTA_TWO_QUBIT,
            delta_three_qubit: DELTA_THREE_QUBIT,
            tolerance: 1e-3,
            sigmas: 3.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct QiteSection {
    pub block: Block,
    pub negate: bool,
    pub mu: f64,
    /// Basis label such as `"10"`; defaults to a superposition of the two lowest diagonal states.
    pub initial: Option<String>,
    pub delta_tau: f64,
    pub max_steps: usize,
    pub epsilon: f64,
    pub runs: usize,
    pub tolerance: f64,
}

impl Default for QiteSection {
    fn default() -> Self {
        Self {
            block: Block::K1,
            negate: false,
            mu: 0.2,
            initial: None,
            delta_tau: 0.1,
            max_steps: 60,
            epsilon: 1e-3,
            runs: 2,
            tolerance: 1e-2,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct QlanczosSection {
    pub block: Block,
    pub negate: bool,
    pub mu: f64,
    pub levels: usize,
    /// Uncertainty threshold; the block default when absent.
    pub delta: Option<f64>,
    pub delta_tau: f64,
    pub max_steps: usize,
    pub tolerance: f64,
    pub sigmas: f64,
}

impl Default for QlanczosSection {
    fn default() -> Self {
        Self {
            block: Block::K1,
            negate: false,
            mu: 0.2,
            levels: 2,
            delta: None,
            delta_tau: 0.1,
            max_steps: 60,
            tolerance: 1e-3,
            sigmas: 3.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvolveSection {
    pub n_neutrinos: Vec<usize>,
    /// Sampled replicates per entry of `n_neutrinos`.
    pub runs: Vec<usize>,
    pub mu: f64,
    pub t_max: f64,
    pub points: usize,
    pub max_delta_t: f64,
    pub tolerance: f64,
}

impl Default for EvolveSection {
    fn default() -> Self {
        Self { n_neutrinos: vec![3, 4], runs: vec![6, 5], mu: 1.0, t_max: 4.0, points: 41, max_delta_t: 0.05, tolerance: 0.02 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MitigateSection {
    pub block: Block,
    pub negate: bool,
    pub mu: f64,
    pub p01: f64,
    pub p10: f64,
    pub lambda: f64,
    pub weight: f64,
    pub r_values: Vec<u32>,
    pub degree: usize,
    pub seeds: usize,
    pub survival_n: usize,
    pub survival_mu: f64,
    pub survival_t: f64,
    /// Minimum fraction of seeds where the mitigated error beats the raw one.
    pub improve_fraction: f64,
}

impl Default for MitigateSection {
    fn default() -> Self {
        Self {
            block: Block::K1,
            negate: false,
            mu: 0.2,
            p01: 0.02,
            p10: 0.03,
            lambda: 0.02,
            weight: 3.0,
            r_values: vec![1, 3, 5, 7, 9],
            degree: 2,
            seeds: 50,
            survival_n: 3,
            survival_mu: 1.0,
            survival_t: 1.0,
            improve_fraction: 0.9,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Config {
    pub seed: u64,
    pub shots: u64,
    pub mode: Mode,
    pub physics: Physics,
    pub readout: Readout,
    pub spectrum: SpectrumSection,
    pub qite: QiteSection,
    pub qlanczos: QlanczosSection,
    pub evolve: EvolveSection,
    pub mitigate: MitigateSection,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            seed: 1,
            shots: 8192,
            mode: Mode::Exact,
            physics: Physics::default(),
            readout: Readout::default(),
            spectrum: SpectrumSection::default(),
            qite: QiteSection::default(),
            qlanczos: QlanczosSection::default(),
            evolve: EvolveSection::default(),
            mitigate: MitigateSection::default(),
        }
    }
}

/// Flag values that override the file.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub shots: Option<u64>,
    pub mode: Option<Mode>,
}

impl Config {
    /// Parses TOML, a JSON config, or a JSON manifest (its `config` member).
    pub fn parse(text: &str, json: bool) -> Result<Self, CliError> {
        if !json {
            return toml::from_str(text).map_err(|e| CliError::Config(e.to_string()));
        }
        let value: serde_json::Value = serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        let inner = match value {
            serde_json::Value::Object(mut map) if map.contains_key("manifest_version") => {
                map.remove("config").ok_or_else(|| CliError::Config("manifest has no config".into()))?
            }
            other => other,
        };
        serde_json::from_value(inner).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn load(path: Option<&Path>, overrides: &Overrides) -> Result<Self, CliError> {
        let mut config = match path {
            None => Config::default(),
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?;
                let json = p.extension().is_some_and(|e| e == "json");
                Config::parse(&text, json).map_err(|e| match e {
                    CliError::Config(m) => CliError::Config(format!("{}: {m}", p.display())),
                    other => other,
                })?
            }
        };
        if let Some(s) = overrides.seed {
            config.seed = s;
        }
        if let Some(s) = overrides.shots {
            config.shots = s;
        }
        if let Some(m) = overrides.mode {
            config.mode = m;
        }
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: &str| Err(CliError::Config(m.to_string()));
        if self.shots == 0 {
            return bad("shots must be at least 1");
        }
        if !(self.physics.omega0 > 0.0) {
            return bad("physics.omega0 must be positive");
        }
        if !(0.0..=1.0).contains(&self.physics.sin2_2theta) {
            return bad("physics.sin2_2theta must lie in [0, 1]");
        }
        self.readout.noise().validate().map_err(|e| CliError::Config(format!("readout: {e}")))?;
        if self.spectrum.mu_values.iter().any(|m| !(*m >= 0.0)) {
            return bad("spectrum.mu_values must be nonnegative");
        }
        for (name, mu) in [("qite.mu", self.qite.mu), ("qlanczos.mu", self.qlanczos.mu), ("evolve.mu", self.evolve.mu), ("mitigate.mu", self.mitigate.mu)] {
            if !(mu >= 0.0) {
                return Err(CliError::Config(format!("{name} must be nonnegative")));
            }
        }
        if self.qite.runs == 0 {
            return bad("qite.runs must be at least 1");
        }
        if let Some(label) = &self.qite.initial {
            let width = if self.qite.block == Block::K2 { 3 } else { 2 };
            if label.len() != width || !label.chars().all(|c| c == '0' || c == '1') {
                return Err(CliError::Config(format!("qite.initial must be a {width}-bit label, got {label:?}")));
            }
        }
        if self.qlanczos.levels == 0 {
            return bad("qlanczos.levels must be at least 1");
        }
        if self.evolve.n_neutrinos.is_empty() || self.evolve.n_neutrinos.iter().any(|&n| n == 0 || n > 10) {
            return bad("evolve.n_neutrinos entries must lie in 1..=10");
        }
        if self.evolve.runs.len() != self.evolve.n_neutrinos.len() || self.evolve.runs.contains(&0) {
            return bad("evolve.runs needs one positive entry per evolve.n_neutrinos");
        }
        if !(self.evolve.t_max >= 0.0) || self.evolve.points == 0 || !(self.evolve.max_delta_t > 0.0) {
            return bad("evolve needs t_max >= 0, points >= 1 and max_delta_t > 0");
        }
        let m = &self.mitigate;
        if m.seeds == 0 || m.survival_n == 0 || m.survival_n > 10 || !(m.survival_t >= 0.0) || !(m.survival_mu >= 0.0) {
            return bad("mitigate needs seeds >= 1, survival_n in 1..=10, survival_t >= 0 and survival_mu >= 0");
        }
        ReadoutNoise::symmetric(m.p01, m.p10).validate().map_err(|e| CliError::Config(format!("mitigate: {e}")))?;
        self.fold().validate().map_err(|e| CliError::Config(format!("mitigate: {e}")))?;
        self.zne().validate().map_err(|e| CliError::Config(format!("mitigate: {e}")))?;
        Ok(())
    }

    /// Sampling plan with the configured readout channel and the given seed.
    pub fn plan(&self, seed: u64) -> SamplingPlan {
        let plan = SamplingPlan::new(self.shots, seed);
        if self.readout.p01 > 0.0 || self.readout.p10 > 0.0 {
            plan.with_readout(self.readout.noise())
        } else {
            plan
        }
    }

    pub fn fold(&self) -> nuflavor::mitigation::FoldableNoise {
        nuflavor::mitigation::FoldableNoise::new(self.mitigate.lambda, self.mitigate.weight)
    }

    pub fn zne(&self) -> nuflavor::mitigation::ZneConfig {
        nuflavor::mitigation::ZneConfig { r_values: self.mitigate.r_values.clone(), degree: self.mitigate.degree }
    }
}
