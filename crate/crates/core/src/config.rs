//! Experiment configuration: a JSON document selecting a model, grids, a
//! selection rule, an optional transfer operator, and output options.
//!
//! The file format is strict UTF-8 JSON without comments; unknown keys are
//! rejected so that typos surface as validation errors with a line and
//! column. Flags never carry experiment parameters, only the subcommand and
//! paths, so a config file pins a run completely.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::kernel::Kernel;
use crate::model::{cumsum_matrix, JointGaussianModel};
use crate::transfer::TransferOperator;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kernel: Option<KernelSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transfer: Option<TransferSpec>,
    #[serde(default)]
    pub greedy: GreedySpec,
    #[serde(default)]
    pub grids: GridSpec,
    #[serde(default)]
    pub selection: SelectionSpec,
    #[serde(default)]
    pub outputs: OutputSpec,
    #[serde(default)]
    pub oracle: OracleSpec,
    #[serde(default)]
    pub rates: RatesSpec,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "name", content = "params", rename_all = "snake_case")]
pub enum ModelSpec {
    BrownianRestriction {
        #[serde(default)]
        noise_variance: f64,
    },
    EigenTruncation {
        eigenvalues: Vec<f64>,
        kept: Vec<usize>,
    },
    InvertibleMap {
        kernel: KernelSpec,
        map: MapSpec,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct KernelSpec {
    pub family: String,
    #[serde(default)]
    pub params: KernelParams,
    pub domain: [f64; 2],
}

#[derive(Debug, Clone, Default, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct KernelParams {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lengthscale: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MapSpec {
    Identity,
    Scale { factor: f64 },
    Cumsum,
    Matrix { rows: Vec<Vec<f64>> },
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "variant", content = "params", rename_all = "snake_case")]
pub enum TransferSpec {
    /// The exact operator for the configured model.
    Auto,
    RestrictionBm,
    NoisyRestrictionBm { noise_variance: f64 },
    InverseMap,
    MoorePenrose,
    EigenTruncation,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct GreedySpec {
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_n_max")]
    pub n_max: usize,
    /// Absolute stopping tolerance; when absent, `1e-12` times the initial
    /// supremum is used.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stop_tol: Option<f64>,
}

impl Default for GreedySpec {
    fn default() -> Self {
        GreedySpec { gamma: default_gamma(), seed: 0, n_max: default_n_max(), stop_tol: None }
    }
}

fn default_gamma() -> f64 {
    1.0
}

fn default_n_max() -> usize {
    50
}

#[derive(Debug, Clone, Default, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    /// Points on the domain of `X`; defaults to 201 per unit length.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x_points: Option<usize>,
    /// Points on the observation domain; defaults to 201 per unit length.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub y_points: Option<usize>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize, PartialEq)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum SelectionSpec {
    /// Condition on greedily selected points (the greedy block applies).
    #[default]
    Greedy,
    /// Condition on every observation coordinate.
    All,
    /// Condition on explicit observation indices.
    Indices { indices: Vec<usize> },
    /// Condition on nothing; the posterior equals the prior.
    None,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    #[serde(default = "default_outdir")]
    pub directory: String,
    #[serde(default = "default_formats")]
    pub formats: Vec<String>,
}

impl Default for OutputSpec {
    fn default() -> Self {
        OutputSpec { directory: default_outdir(), formats: default_formats() }
    }
}

fn default_outdir() -> String {
    "runs".to_string()
}

fn default_formats() -> Vec<String> {
    vec!["csv".to_string(), "json".to_string()]
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct OracleSpec {
    #[serde(default = "default_mc_samples")]
    pub mc_samples: usize,
    #[serde(default = "default_mc_seed")]
    pub seed: u64,
}

impl Default for OracleSpec {
    fn default() -> Self {
        OracleSpec { mc_samples: default_mc_samples(), seed: default_mc_seed() }
    }
}

fn default_mc_samples() -> usize {
    100_000
}

fn default_mc_seed() -> u64 {
    42
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct RatesSpec {
    /// Window for the power-law fit and the rate bound.
    #[serde(default = "default_fit_window")]
    pub fit_window: [usize; 2],
}

impl Default for RatesSpec {
    fn default() -> Self {
        RatesSpec { fit_window: default_fit_window() }
    }
}

fn default_fit_window() -> [usize; 2] {
    [10, 100]
}

impl ExperimentConfig {
    /// Parse and validate a JSON document.
    pub fn from_json(text: &str) -> Result<Self> {
        let config: ExperimentConfig = serde_json::from_str(text).map_err(|e| {
            Error::config(format!(
                "cannot parse config (line {}, column {}): {e}",
                e.line(),
                e.column()
            ))
        })?;
        config.validate()?;
        Ok(config)
    }

    /// Cross-field validation beyond what the schema enforces.
    pub fn validate(&self) -> Result<()> {
        if self.greedy.n_max < 1 {
            return Err(Error::config("greedy.n_max must be at least 1"));
        }
        if !(self.greedy.gamma > 0.0 && self.greedy.gamma <= 1.0) {
            return Err(Error::config(format!(
                "greedy.gamma must lie in (0, 1], got {}",
                self.greedy.gamma
            )));
        }
        if let Some(tol) = self.greedy.stop_tol {
            if !(tol >= 0.0) {
                return Err(Error::config(format!(
                    "greedy.stop_tol must be nonnegative, got {tol}"
                )));
            }
        }
        if let Some(n) = self.grids.x_points {
            if n < 2 {
                return Err(Error::config("grids.x_points must be at least 2"));
            }
        }
        if let Some(n) = self.grids.y_points {
            if n < 2 {
                return Err(Error::config("grids.y_points must be at least 2"));
            }
        }
        if self.oracle.mc_samples < 1_000 {
            return Err(Error::config(format!(
                "oracle.mc_samples must be at least 1000, got {}",
                self.oracle.mc_samples
            )));
        }
        let [lo, hi] = self.rates.fit_window;
        if lo < 1 || lo > hi {
            return Err(Error::config(format!(
                "rates.fit_window must satisfy 1 <= lo <= hi, got [{lo}, {hi}]"
            )));
        }
        for f in &self.outputs.formats {
            if f != "csv" && f != "json" {
                return Err(Error::config(format!("unknown output format '{f}'")));
            }
        }
        match &self.model {
            ModelSpec::BrownianRestriction { noise_variance } => {
                if !(*noise_variance >= 0.0) {
                    return Err(Error::config(format!(
                        "model.params.noise_variance must be nonnegative, got {noise_variance}"
                    )));
                }
            }
            ModelSpec::EigenTruncation { eigenvalues, kept } => {
                if eigenvalues.is_empty() {
                    return Err(Error::config("model.params.eigenvalues must be nonempty"));
                }
                if kept.is_empty() {
                    return Err(Error::config("model.params.kept must be nonempty"));
                }
            }
            ModelSpec::InvertibleMap { kernel, .. } => {
                build_kernel(kernel)?;
            }
        }
        if let Some(spec) = &self.kernel {
            build_kernel(spec)?;
        }
        if let SelectionSpec::Indices { indices } = &self.selection {
            if indices.is_empty() {
                return Err(Error::config(
                    "selection.indices must be nonempty; use mode \"none\" for no conditioning",
                ));
            }
        }
        Ok(())
    }

    /// Instantiate the configured model.
    pub fn build_model(&self) -> Result<JointGaussianModel> {
        match &self.model {
            ModelSpec::BrownianRestriction { noise_variance } => {
                let grid_x = match self.grids.x_points {
                    Some(n) => Grid::uniform(0.0, 1.0, n)?,
                    None => Grid::default_resolution(0.0, 1.0)?,
                };
                let grid_y = match self.grids.y_points {
                    Some(n) => Grid::uniform(0.5, 1.0, n)?,
                    None => Grid::default_resolution(0.5, 1.0)?,
                };
                JointGaussianModel::brownian_restriction(*noise_variance, grid_x, grid_y)
            }
            ModelSpec::EigenTruncation { eigenvalues, kept } => {
                let grid = match self.grids.x_points {
                    Some(n) => Grid::uniform(0.0, 1.0, n)?,
                    None => Grid::default_resolution(0.0, 1.0)?,
                };
                JointGaussianModel::eigen_truncation(eigenvalues.clone(), kept.clone(), grid)
            }
            ModelSpec::InvertibleMap { kernel, map } => {
                let k = build_kernel(kernel)?;
                let (lo, hi) = k.domain();
                let grid = match self.grids.x_points {
                    Some(n) => Grid::uniform(lo, hi, n)?,
                    None => Grid::default_resolution(lo, hi)?,
                };
                let n = grid.len();
                let matrix = match map {
                    MapSpec::Identity => nalgebra::DMatrix::identity(n, n),
                    MapSpec::Scale { factor } => *factor * nalgebra::DMatrix::identity(n, n),
                    MapSpec::Cumsum => cumsum_matrix(n),
                    MapSpec::Matrix { rows } => {
                        if rows.len() != n || rows.iter().any(|r| r.len() != n) {
                            return Err(Error::config(format!(
                                "map.rows must form an {n}x{n} matrix matching the grid"
                            )));
                        }
                        nalgebra::DMatrix::from_fn(n, n, |i, j| rows[i][j])
                    }
                };
                JointGaussianModel::invertible_map(&k, grid, matrix)
            }
        }
    }

    /// Instantiate the configured transfer operator for `model`.
    pub fn build_transfer(&self, model: &JointGaussianModel) -> Result<Option<TransferOperator>> {
        let spec = match &self.transfer {
            None => return Ok(None),
            Some(s) => s,
        };
        let op = match spec {
            TransferSpec::Auto => TransferOperator::for_model(model)?,
            TransferSpec::RestrictionBm => {
                TransferOperator::restriction_bm(model.grid_x(), model.y_points())?
            }
            TransferSpec::NoisyRestrictionBm { noise_variance } => {
                TransferOperator::noisy_restriction_bm(
                    *noise_variance,
                    model.grid_x(),
                    model.y_points(),
                )?
            }
            TransferSpec::InverseMap => {
                let map = model.observation_map().ok_or_else(|| {
                    Error::config("transfer variant inverse_map needs an invertible_map model")
                })?;
                TransferOperator::inverse_map(map)?
            }
            TransferSpec::MoorePenrose => {
                let map = model.observation_map().ok_or_else(|| {
                    Error::config("transfer variant moore_penrose needs an invertible_map model")
                })?;
                let gram = crate::kernel::gram_from_matrix(
                    model.k_xx_matrix(),
                    crate::kernel::JitterPolicy::Escalate,
                )?;
                TransferOperator::moore_penrose_grid(map, &gram)?
            }
            TransferSpec::EigenTruncation => {
                if model.noise_variance().is_some() || model.observation_map().is_some() {
                    return Err(Error::config(
                        "transfer variant eigen_truncation needs an eigen_truncation model",
                    ));
                }
                TransferOperator::for_model(model)?
            }
        };
        Ok(Some(op))
    }

    /// Selection indices for conditioning commands. Greedy mode runs the
    /// configured selection rule on the observation kernel.
    pub fn build_selection(&self, model: &JointGaussianModel) -> Result<Vec<usize>> {
        match &self.selection {
            SelectionSpec::None => Ok(Vec::new()),
            SelectionSpec::All => Ok((0..model.ny()).collect()),
            SelectionSpec::Indices { indices } => Ok(indices.clone()),
            SelectionSpec::Greedy => {
                let mut st = self.build_greedy(model)?;
                let stop = self
                    .greedy
                    .stop_tol
                    .unwrap_or_else(|| st.default_stop_tol());
                st.run(self.greedy.n_max, stop)?;
                Ok(st.selected().to_vec())
            }
        }
    }

    /// Greedy state on the model's observation kernel, not yet run.
    pub fn build_greedy(&self, model: &JointGaussianModel) -> Result<crate::greedy::GreedyState> {
        let rule = if self.greedy.gamma >= 1.0 {
            crate::greedy::SelectionRule::Strong
        } else {
            crate::greedy::SelectionRule::WeakRandom {
                gamma: self.greedy.gamma,
                seed: self.greedy.seed,
            }
        };
        crate::greedy::GreedyState::init(model.y_kernel()?, model.y_grid()?, rule, false)
    }
}

fn build_kernel(spec: &KernelSpec) -> Result<Kernel> {
    let [lo, hi] = spec.domain;
    match spec.family.as_str() {
        "brownian_min" => Kernel::brownian_min(lo, hi),
        "shifted_min" => {
            let c = spec.params.c.ok_or_else(|| {
                Error::config("kernel family shifted_min needs params.c")
            })?;
            Kernel::shifted_min(c, lo, hi)
        }
        "gaussian_rbf" => {
            let l = spec.params.lengthscale.ok_or_else(|| {
                Error::config("kernel family gaussian_rbf needs params.lengthscale")
            })?;
            Kernel::gaussian_rbf(l, lo, hi)
        }
        other => Err(Error::config(format!(
            "unknown kernel family '{other}' (expected brownian_min, shifted_min or gaussian_rbf)"
        ))),
    }
    .map_err(|e| match e {
        Error::Domain(msg) => Error::Config(msg),
        other => other,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "model": {"name": "brownian_restriction", "params": {"noise_variance": 0.0}}
    }"#;

    #[test]
    fn minimal_config_parses_with_defaults() {
        let cfg = ExperimentConfig::from_json(MINIMAL).unwrap();
        assert_eq!(cfg.greedy.gamma, 1.0);
        assert_eq!(cfg.greedy.n_max, 50);
        assert_eq!(cfg.oracle.mc_samples, 100_000);
        let model = cfg.build_model().unwrap();
        assert_eq!(model.nx(), 201);
        assert_eq!(model.ny(), 101);
    }

    #[test]
    fn unknown_keys_are_rejected_with_position() {
        let text = r#"{
            "model": {"name": "brownian_restriction", "params": {}},
            "greedyy": {}
        }"#;
        match ExperimentConfig::from_json(text) {
            Err(Error::Config(msg)) => assert!(msg.contains("line"), "{msg}"),
            other => panic!("expected config error, got {other:?}"),
        }
    }

    #[test]
    fn zero_n_max_fails_validation() {
        let text = r#"{
            "model": {"name": "brownian_restriction", "params": {}},
            "greedy": {"n_max": 0}
        }"#;
        assert!(matches!(
            ExperimentConfig::from_json(text),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn config_round_trips_through_json() {
        let full = r#"{
            "model": {"name": "brownian_restriction", "params": {"noise_variance": 0.5}},
            "kernel": {"family": "shifted_min", "params": {"c": 1.0}, "domain": [0.5, 1.0]},
            "transfer": {"variant": "noisy_restriction_bm", "params": {"noise_variance": 0.5}},
            "greedy": {"gamma": 0.5, "seed": 3, "n_max": 20, "stop_tol": 1e-10},
            "grids": {"x_points": 81, "y_points": 41},
            "selection": {"mode": "indices", "indices": [0, 3, 7]},
            "outputs": {"directory": "out", "formats": ["json"]},
            "oracle": {"mc_samples": 2000, "seed": 9},
            "rates": {"fit_window": [5, 20]}
        }"#;
        for text in [MINIMAL, full] {
            let cfg = ExperimentConfig::from_json(text).unwrap();
            let echoed = serde_json::to_string(&cfg).unwrap();
            let back = ExperimentConfig::from_json(&echoed).unwrap();
            assert_eq!(cfg, back);
        }
    }

    #[test]
    fn eigen_model_spec_builds() {
        let text = r#"{
            "model": {"name": "eigen_truncation",
                      "params": {"eigenvalues": [1.0, 0.5, 0.25], "kept": [0, 2]}},
            "grids": {"x_points": 41}
        }"#;
        let cfg = ExperimentConfig::from_json(text).unwrap();
        let model = cfg.build_model().unwrap();
        assert_eq!(model.ny(), 2);
    }

    #[test]
    fn invertible_map_spec_builds_with_named_maps() {
        let text = r#"{
            "model": {"name": "invertible_map",
                      "params": {"kernel": {"family": "brownian_min", "domain": [0.5, 1.0]},
                                 "map": {"kind": "cumsum"}}},
            "grids": {"x_points": 11}
        }"#;
        let cfg = ExperimentConfig::from_json(text).unwrap();
        let model = cfg.build_model().unwrap();
        assert!(model.observation_map().is_some());
    }

    #[test]
    fn transfer_auto_builds_the_exact_operator() {
        let text = r#"{
            "model": {"name": "brownian_restriction", "params": {"noise_variance": 0.5}},
            "transfer": {"variant": "auto"},
            "grids": {"x_points": 41, "y_points": 21}
        }"#;
        let cfg = ExperimentConfig::from_json(text).unwrap();
        let model = cfg.build_model().unwrap();
        let op = cfg.build_transfer(&model).unwrap().unwrap();
        assert!((op.operator_norm() - 1.5).abs() < 1e-12);
    }

    #[test]
    fn matrix_transfer_variants_need_a_matrix_model() {
        let base = r#""model": {"name": "brownian_restriction", "params": {}},
                      "grids": {"x_points": 21, "y_points": 11}"#;
        for variant in ["inverse_map", "moore_penrose"] {
            let text =
                format!(r#"{{{base}, "transfer": {{"variant": "{variant}"}}}}"#);
            let cfg = ExperimentConfig::from_json(&text).unwrap();
            let model = cfg.build_model().unwrap();
            assert!(matches!(
                cfg.build_transfer(&model),
                Err(Error::Config(_))
            ));
        }
    }

    #[test]
    fn moore_penrose_variant_matches_the_inverse_on_invertible_models() {
        let base = r#"{
            "model": {"name": "invertible_map",
                      "params": {"kernel": {"family": "brownian_min", "domain": [0.5, 1.0]},
                                 "map": {"kind": "cumsum"}}},
            "grids": {"x_points": 9},
            "transfer": {"variant": "VARIANT"}
        }"#;
        let mut ops = Vec::new();
        for variant in ["inverse_map", "moore_penrose"] {
            let cfg =
                ExperimentConfig::from_json(&base.replace("VARIANT", variant)).unwrap();
            let model = cfg.build_model().unwrap();
            ops.push(cfg.build_transfer(&model).unwrap().unwrap());
        }
        let v: Vec<f64> = (0..9).map(|i| (i as f64 * 0.7).sin()).collect();
        let a = ops[0].apply(&v).unwrap();
        let b = ops[1].apply(&v).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-8);
        }
    }
}
