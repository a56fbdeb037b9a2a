//! Experiment harness behind the `ggcond` binary: runs the subcommands,
//! writes CSV/JSON outputs atomically, and records a run manifest.
//!
//! Runs are reproducible: a config plus its seeds determines every output
//! byte. Numeric CSV fields carry 17 significant digits so that parsing them
//! back recovers the exact doubles. Each run writes into
//! `<outdir>/<run-id>/` where the run id hashes the canonical config, making
//! reruns land in the same place.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::conditioning::{
    self, monte_carlo_oracle, posterior_kernel, residual_opnorm, schur_oracle,
    IncrementalPosterior,
};
use crate::config::{ExperimentConfig, SelectionSpec};
use crate::error::{Error, Result};
use crate::linalg;
use crate::rates::{self, DecayTarget};
use crate::transfer::TransferOperator;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Subcommand {
    Greedy,
    Condition,
    Rates,
    Oracle,
}

impl Subcommand {
    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "greedy" => Ok(Subcommand::Greedy),
            "condition" => Ok(Subcommand::Condition),
            "rates" => Ok(Subcommand::Rates),
            "oracle" => Ok(Subcommand::Oracle),
            other => Err(Error::config(format!(
                "unknown subcommand '{other}' (expected greedy, condition, rates or oracle)"
            ))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Subcommand::Greedy => "greedy",
            Subcommand::Condition => "condition",
            Subcommand::Rates => "rates",
            Subcommand::Oracle => "oracle",
        }
    }
}

/// Files produced by a run, rooted at the run directory.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub dir: PathBuf,
    pub files: Vec<PathBuf>,
}

/// Execute a subcommand, writing outputs under `outdir/<run-id>/`.
pub fn run(cmd: Subcommand, config: &ExperimentConfig, outdir: &Path) -> Result<RunOutput> {
    let run_id = config_run_id(config);
    let dir = outdir.join(format!("{}-{run_id}", cmd.name()));
    fs::create_dir_all(&dir)?;
    let (mut files, jitter) = match cmd {
        Subcommand::Greedy => cmd_greedy(config, &dir)?,
        Subcommand::Condition => cmd_condition(config, &dir)?,
        Subcommand::Rates => cmd_rates(config, &dir)?,
        Subcommand::Oracle => cmd_oracle(config, &dir)?,
    };
    let manifest = write_manifest(config, &dir, &files, jitter)?;
    files.push(manifest);
    Ok(RunOutput { dir, files })
}

/// FNV-1a hash of the canonical serialized config; stable across runs.
pub fn config_run_id(config: &ExperimentConfig) -> String {
    let canonical = serde_json::to_string(config).expect("config serializes");
    format!("{:016x}", fnv1a64(canonical.as_bytes()))
}

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

/// 17 significant digits: round-trip exact for f64.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// Write atomically: temp file in the same directory, then rename.
fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, contents)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| Error::numerical(format!("cannot serialize report: {e}")))?;
    text.push('\n');
    write_atomic(path, &text)
}

#[derive(Serialize)]
struct RunManifest<'a> {
    tool_version: &'static str,
    created_unix: u64,
    threads: usize,
    config: &'a ExperimentConfig,
    jitter: serde_json::Value,
    checksums: std::collections::BTreeMap<String, String>,
}

/// Parallelism cap from `GG_THREADS`; the computations are sequential, so
/// anything at least 1 is honored as-is.
pub fn effective_threads() -> usize {
    std::env::var("GG_THREADS")
        .ok()
        .and_then(|s| s.parse::<usize>().ok())
        .map(|n| n.max(1))
        .unwrap_or(1)
        .min(1)
}

fn write_manifest(
    config: &ExperimentConfig,
    dir: &Path,
    files: &[PathBuf],
    jitter: serde_json::Value,
) -> Result<PathBuf> {
    let mut checksums = std::collections::BTreeMap::new();
    for f in files {
        let bytes = fs::read(f)?;
        let name = f
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default();
        checksums.insert(name, format!("{:016x}", fnv1a64(&bytes)));
    }
    let created_unix = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    let manifest = RunManifest {
        tool_version: env!("CARGO_PKG_VERSION"),
        created_unix,
        threads: effective_threads(),
        config,
        jitter,
        checksums,
    };
    let path = dir.join("manifest.json");
    write_json(&path, &manifest)?;
    Ok(path)
}

fn wants(config: &ExperimentConfig, format: &str) -> bool {
    config.outputs.formats.iter().any(|f| f == format)
}

/// Run the greedy selection on the observation kernel and export the trace.
fn cmd_greedy(config: &ExperimentConfig, dir: &Path) -> Result<(Vec<PathBuf>, serde_json::Value)> {
    let model = config.build_model()?;
    let mut st = config.build_greedy(&model)?;
    let stop = config.greedy.stop_tol.unwrap_or_else(|| st.default_stop_tol());
    st.run(config.greedy.n_max, stop)?;

    let mut files = Vec::new();
    if wants(config, "csv") {
        let points = st.candidates().points();
        let mut selection = String::from("step,index,point\n");
        for h in st.history() {
            writeln!(selection, "{},{},{}", h.step, h.selected, fmt_f64(points[h.selected]))
                .unwrap();
        }
        let path = dir.join("selection.csv");
        write_atomic(&path, &selection)?;
        files.push(path);

        let mut history = String::from("step,point,sup_power_sq\n");
        for h in st.history() {
            writeln!(
                history,
                "{},{},{}",
                h.step,
                fmt_f64(points[h.selected]),
                fmt_f64(h.sup_power_sq)
            )
            .unwrap();
        }
        let path = dir.join("power_history.csv");
        write_atomic(&path, &history)?;
        files.push(path);
    }
    Ok((files, serde_json::json!({})))
}

#[derive(Serialize)]
struct OpnormSummary {
    value: f64,
    argmax_point: f64,
    grid_size: usize,
    selected: usize,
    jitter: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    via_m: Option<ViaMSummary>,
}

#[derive(Serialize)]
struct ViaMSummary {
    value: f64,
    argmax_point: f64,
    m_norm: f64,
    /// Largest entrywise gap between the via-M residual and the
    /// full-observation Schur oracle.
    max_discrepancy: f64,
}

/// Condition on the configured selection and export the residual.
fn cmd_condition(config: &ExperimentConfig, dir: &Path) -> Result<(Vec<PathBuf>, serde_json::Value)> {
    let model = config.build_model()?;
    let selected = config.build_selection(&model)?;
    let pk = posterior_kernel(&model, &selected)?;
    let report = residual_opnorm(&pk);

    let mut files = Vec::new();
    if wants(config, "csv") {
        let residual = pk.residual_matrix();
        let points = model.grid_x().points();
        let mut csv = String::from("t");
        for &p in points {
            csv.push(',');
            csv.push_str(&fmt_f64(p));
        }
        csv.push('\n');
        for (i, &p) in points.iter().enumerate() {
            csv.push_str(&fmt_f64(p));
            for j in 0..points.len() {
                csv.push(',');
                csv.push_str(&fmt_f64(residual[(i, j)]));
            }
            csv.push('\n');
        }
        let path = dir.join("residual_matrix.csv");
        write_atomic(&path, &csv)?;
        files.push(path);
    }

    let via_m = match config.build_transfer(&model)? {
        None => None,
        Some(op) => {
            let residual = conditioning::conditional_cov_via_m(&model, &op)?;
            let all: Vec<usize> = (0..model.ny()).collect();
            let dense = schur_oracle(&model, &all)?;
            let summary = conditioning::opnorm_of_residual(&residual, model.grid_x().points());
            Some(ViaMSummary {
                value: summary.value,
                argmax_point: summary.argmax_point,
                m_norm: op.operator_norm(),
                max_discrepancy: linalg::max_abs_diff(&residual, &dense),
            })
        }
    };

    if wants(config, "json") {
        let summary = OpnormSummary {
            value: report.value,
            argmax_point: report.argmax_point,
            grid_size: report.grid_size,
            selected: selected.len(),
            jitter: pk.jitter(),
            via_m,
        };
        let path = dir.join("opnorm.json");
        write_json(&path, &summary)?;
        files.push(path);
    }
    Ok((files, serde_json::json!({"posterior": pk.jitter()})))
}

#[derive(Serialize)]
struct BoundsReport {
    transfer: rates::TransferBoundReport,
    width_surrogate: rates::WidthSurrogateReport,
    greedy_rate: rates::GreedyRateReport,
    pass: bool,
}

/// Decay curves plus the transfer-bound and rate reports.
fn cmd_rates(config: &ExperimentConfig, dir: &Path) -> Result<(Vec<PathBuf>, serde_json::Value)> {
    let model = config.build_model()?;
    let op = config
        .build_transfer(&model)?
        .map(Ok)
        .unwrap_or_else(|| TransferOperator::for_model(&model))?;
    let mut st = config.build_greedy(&model)?;
    let stop = config.greedy.stop_tol.unwrap_or_else(|| st.default_stop_tol());
    st.run(config.greedy.n_max, stop)?;

    let y_curve = rates::decay_curve(&model, &st, DecayTarget::YResidual)?;
    let x_curve = rates::decay_curve(&model, &st, DecayTarget::XGivenYnResidual)?;

    let mut files = Vec::new();
    if wants(config, "csv") {
        let mut csv = String::from("n,y_residual,x_given_yn_residual\n");
        for (&(n, y), &(_, x)) in y_curve.entries.iter().zip(&x_curve.entries) {
            writeln!(csv, "{n},{},{}", fmt_f64(y), fmt_f64(x)).unwrap();
        }
        let path = dir.join("decay.csv");
        write_atomic(&path, &csv)?;
        files.push(path);
    }

    if wants(config, "json") {
        let n_max = config.greedy.n_max;
        let transfer = rates::check_transfer_bound(&model, &op, &st, n_max)?;
        let width = rates::check_width_surrogate_bound(&st, n_max)?;
        let window = (config.rates.fit_window[0], config.rates.fit_window[1]);
        let baseline = rates::uniform_baseline_curve(&model, window)?;
        let greedy_rate = rates::check_greedy_rate_curves(
            &x_curve,
            &baseline,
            op.operator_norm(),
            st.rule().gamma(),
            window,
        )?;
        let pass = transfer.pass && width.pass && greedy_rate.pass;
        let report = BoundsReport { transfer, width_surrogate: width, greedy_rate, pass };
        let path = dir.join("bounds_report.json");
        write_json(&path, &report)?;
        files.push(path);
    }
    Ok((files, serde_json::json!({})))
}

#[derive(Serialize)]
struct OracleReport {
    /// Largest entrywise gap between the incremental Newton residuals and
    /// the SVD Schur oracle, over all greedy steps.
    newton_vs_schur_max: f64,
    newton_steps: usize,
    mc: McSummary,
    pass: bool,
}

#[derive(Serialize)]
struct McSummary {
    samples: usize,
    seed: u64,
    entries: usize,
    within_3se_fraction: f64,
    max_se_multiple: f64,
}

/// Cross-check the incremental route against the dense oracle and the
/// analytic residual against a Monte-Carlo estimate.
fn cmd_oracle(config: &ExperimentConfig, dir: &Path) -> Result<(Vec<PathBuf>, serde_json::Value)> {
    let model = config.build_model()?;
    let mut st = config.build_greedy(&model)?;
    let stop = config.greedy.stop_tol.unwrap_or_else(|| st.default_stop_tol());
    st.run(config.greedy.n_max, stop)?;

    let mut inc = IncrementalPosterior::new(&model);
    let mut newton_vs_schur_max: f64 = 0.0;
    while inc.advance(&st)? {
        let n = inc.steps();
        let dense = schur_oracle(&model, &st.selected()[..n])?;
        newton_vs_schur_max =
            newton_vs_schur_max.max(linalg::max_abs_diff(&inc.residual_matrix(), &dense));
    }

    let selected = if matches!(config.selection, SelectionSpec::Greedy) {
        st.selected().to_vec()
    } else {
        config.build_selection(&model)?
    };
    let mc = monte_carlo_oracle(&model, &selected, config.oracle.mc_samples, config.oracle.seed)?;
    let analytic = schur_oracle(&model, &selected)?;
    let nx = model.nx();
    let mut within = 0usize;
    let mut max_multiple: f64 = 0.0;
    for i in 0..nx {
        for j in 0..nx {
            let mult = mc.se_multiple(&analytic, i, j);
            if mult <= 3.0 {
                within += 1;
            }
            max_multiple = max_multiple.max(mult);
        }
    }
    let fraction = within as f64 / (nx * nx) as f64;
    let report = OracleReport {
        newton_vs_schur_max,
        newton_steps: inc.steps(),
        mc: McSummary {
            samples: mc.samples,
            seed: config.oracle.seed,
            entries: nx * nx,
            within_3se_fraction: fraction,
            max_se_multiple: max_multiple,
        },
        pass: newton_vs_schur_max <= 1e-6 && fraction >= 0.99,
    };
    let mut files = Vec::new();
    let path = dir.join("oracle_report.json");
    write_json(&path, &report)?;
    files.push(path);
    Ok((files, serde_json::json!({})))
}
