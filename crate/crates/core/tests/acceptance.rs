//! Acceptance suite: one test per shipping criterion, each printing a
//! pass/fail line (visible with `--nocapture`). Tolerances are pinned here
//! and nowhere else.

use std::time::Instant;

use nalgebra::DMatrix;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use ggcond::conditioning::{
    conditional_cov_via_m, monte_carlo_oracle, schur_oracle, IncrementalPosterior,
};
use ggcond::greedy::{GreedyState, SelectionRule};
use ggcond::kernel::{gram_from_matrix, JitterPolicy};
use ggcond::linalg;
use ggcond::model::JointGaussianModel;
use ggcond::rates::{self, DecayTarget};
use ggcond::transfer::TransferOperator;
use ggcond::Grid;

fn report(id: u32, name: &str, ok: bool) {
    println!("acceptance {id} ({name}): {}", if ok { "PASS" } else { "FAIL" });
}

fn brownian_model(noise: f64) -> JointGaussianModel {
    JointGaussianModel::brownian_restriction(
        noise,
        Grid::uniform(0.0, 1.0, 201).unwrap(),
        Grid::uniform(0.5, 1.0, 101).unwrap(),
    )
    .unwrap()
}

fn greedy_trace(model: &JointGaussianModel, rule: SelectionRule, n: usize) -> GreedyState {
    let mut st = GreedyState::init(
        model.y_kernel().unwrap(),
        model.y_grid().unwrap(),
        rule,
        false,
    )
    .unwrap();
    st.run(n, 0.0).unwrap();
    st
}

/// Criterion 1: the incremental Newton route and the SVD Schur oracle agree
/// entrywise to 1e-6 for every n <= 50 on the standard grids, in under 10 s.
#[test]
fn acceptance_1_oracle_equivalence() {
    let start = Instant::now();
    let model = brownian_model(0.0);
    let st = greedy_trace(&model, SelectionRule::Strong, 50);
    let mut inc = IncrementalPosterior::new(&model);
    let mut worst: f64 = 0.0;
    while inc.advance(&st).unwrap() {
        let n = inc.steps();
        let dense = schur_oracle(&model, &st.selected()[..n]).unwrap();
        worst = worst.max(linalg::max_abs_diff(&inc.residual_matrix(), &dense));
    }
    let elapsed = start.elapsed();
    let ok = inc.steps() == 50 && worst <= 1e-6 && elapsed.as_secs_f64() < 10.0;
    report(1, "oracle equivalence", ok);
    assert!(
        ok,
        "steps = {}, worst discrepancy = {worst:.3e}, elapsed = {elapsed:?}",
        inc.steps()
    );
}

/// Criterion 2: the transfer-operator route reproduces the closed-form
/// residual of the restricted Brownian motion and matches the
/// full-observation Schur oracle, both to 1e-6.
#[test]
fn acceptance_2_conditional_variance_closed_form() {
    let model = brownian_model(0.0);
    let op = TransferOperator::for_model(&model).unwrap();
    let residual = conditional_cov_via_m(&model, &op).unwrap();
    let grid = model.grid_x();
    let mut worst_closed_form: f64 = 0.0;
    for (i, &s) in grid.points().iter().enumerate() {
        for (j, &t) in grid.points().iter().enumerate() {
            let expect = if s <= 0.5 && t <= 0.5 {
                s.min(t) - 2.0 * s * t
            } else {
                0.0
            };
            worst_closed_form = worst_closed_form.max((residual[(i, j)] - expect).abs());
        }
    }
    let all: Vec<usize> = (0..model.ny()).collect();
    let dense = schur_oracle(&model, &all).unwrap();
    let worst_oracle = linalg::max_abs_diff(&residual, &dense);
    let ok = worst_closed_form <= 1e-6 && worst_oracle <= 1e-6;
    report(2, "conditional variance closed form", ok);
    assert!(ok, "closed form {worst_closed_form:.3e}, oracle {worst_oracle:.3e}");
}

/// Criterion 3: the transfer inequality holds for every n <= 50, noiseless
/// and with offset variances 0.1 and 0.5, with 1e-8 additive tolerance.
#[test]
fn acceptance_3_transfer_inequality() {
    let mut ok = true;
    let mut detail = String::new();
    for noise in [0.0, 0.1, 0.5] {
        let model = brownian_model(noise);
        let op = TransferOperator::for_model(&model).unwrap();
        let expected_norm = if noise == 0.0 { 1.0 } else { 1.0 + noise / (0.5 + noise) };
        assert!((op.operator_norm() - expected_norm).abs() < 1e-12);
        let st = greedy_trace(&model, SelectionRule::Strong, 50);
        let rep = rates::check_transfer_bound(&model, &op, &st, 50).unwrap();
        if !rep.pass {
            ok = false;
            let worst = rep
                .per_n
                .iter()
                .map(|r| r.lhs - r.rhs)
                .fold(f64::NEG_INFINITY, f64::max);
            detail.push_str(&format!("noise {noise}: worst violation {worst:.3e}; "));
        }
    }
    report(3, "transfer inequality", ok);
    assert!(ok, "{detail}");
}

/// Criterion 4: the fitted decay exponent of the greedy sup residual on the
/// observation kernel is at least 0.8 over n in [10, 100], in under 30 s.
#[test]
fn acceptance_4_greedy_decay_rate() {
    let start = Instant::now();
    let model = brownian_model(0.0);
    let st = greedy_trace(&model, SelectionRule::Strong, 100);
    let curve = rates::decay_curve(&model, &st, DecayTarget::YResidual).unwrap();
    let fit = rates::fit_power_law(&curve, (10, 100)).unwrap();
    let elapsed = start.elapsed();
    let ok = fit.alpha_hat >= 0.8 && elapsed.as_secs_f64() < 30.0;
    report(4, "greedy decay rate", ok);
    assert!(ok, "alpha_hat = {}, elapsed = {elapsed:?}", fit.alpha_hat);
}

/// Criterion 5: the conservative width-surrogate bound holds for all
/// n <= 50, for strong and seeded weak-random selection.
#[test]
fn acceptance_5_width_surrogate_bound() {
    let model = brownian_model(0.0);
    let mut ok = true;
    let mut detail = String::new();
    for rule in [
        SelectionRule::Strong,
        SelectionRule::WeakRandom { gamma: 0.5, seed: 2718 },
    ] {
        let gamma = rule.gamma();
        let st = greedy_trace(&model, rule, 50);
        let rep = rates::check_width_surrogate_bound(&st, 50).unwrap();
        if !rep.pass {
            ok = false;
            detail.push_str(&format!("gamma {gamma}: max ratio {}; ", rep.max_ratio));
        }
    }
    report(5, "width surrogate bound", ok);
    assert!(ok, "{detail}");
}

/// Criterion 6: the polynomial-rate bound with uniform-baseline-fitted
/// constants and slack 2^(5a+1)/gamma^2 holds for gamma in {1, 0.5}.
#[test]
fn acceptance_6_polynomial_rate_bound() {
    let model = brownian_model(0.0);
    let op = TransferOperator::for_model(&model).unwrap();
    let mut ok = true;
    let mut detail = String::new();
    for rule in [
        SelectionRule::Strong,
        SelectionRule::WeakRandom { gamma: 0.5, seed: 31415 },
    ] {
        let gamma = rule.gamma();
        let st = greedy_trace(&model, rule, 100);
        let rep = rates::check_greedy_rate(&model, &op, &st, (10, 100)).unwrap();
        if !rep.pass {
            ok = false;
            let worst = rep
                .per_n
                .iter()
                .map(|r| r.lhs / r.bound)
                .fold(f64::NEG_INFINITY, f64::max);
            detail.push_str(&format!(
                "gamma {gamma}: c = {}, alpha = {}, worst lhs/bound = {worst}; ",
                rep.c_hat, rep.alpha_hat
            ));
        }
    }
    report(6, "polynomial rate bound", ok);
    assert!(ok, "{detail}");
}

/// Criterion 7: the four defining identities of the weighted minimum-norm
/// inverse hold to 1e-8 on 20 seeded random full-row-rank instances.
#[test]
fn acceptance_7_penrose_identities() {
    let mut rng = ChaCha8Rng::seed_from_u64(7777);
    let mut ok = true;
    let mut detail = String::new();
    for case in 0..20 {
        let rows = rng.gen_range(2..=20);
        let cols = rng.gen_range(rows.max(10)..=50);
        let l = DMatrix::from_fn(rows, cols, |_, _| rng.gen::<f64>() * 2.0 - 1.0);
        // well-conditioned SPD weight: QR-orthogonalized basis with spectrum
        // in [0.5, 2]
        let raw = DMatrix::from_fn(cols, cols, |_, _| rng.gen::<f64>() * 2.0 - 1.0);
        let q = raw.qr().q();
        let spectrum = DMatrix::from_fn(cols, cols, |i, j| {
            if i == j {
                0.5 + 1.5 * (i as f64) / (cols.max(2) - 1) as f64
            } else {
                0.0
            }
        });
        let k_xx = &q * spectrum * q.transpose();
        let k_xx = 0.5 * (&k_xx + k_xx.transpose());
        let gram = gram_from_matrix(k_xx, JitterPolicy::Escalate).unwrap();
        let op = TransferOperator::moore_penrose_grid(&l, &gram).unwrap();
        let rep = op.penrose_check(&gram).unwrap();
        if rep.max() > 1e-8 {
            ok = false;
            detail.push_str(&format!("case {case} ({rows}x{cols}): {rep:?}; "));
        }
    }
    report(7, "Penrose identities", ok);
    assert!(ok, "{detail}");
}

/// Criterion 8: with 1e5 samples the Monte-Carlo estimate agrees with the
/// analytic residual within 3 standard errors on at least 99% of entries,
/// for the Brownian and eigenbasis models.
#[test]
fn acceptance_8_monte_carlo_oracle() {
    let mut ok = true;
    let mut detail = String::new();

    let brownian = brownian_model(0.0);
    let st = greedy_trace(&brownian, SelectionRule::Strong, 10);
    let cases: Vec<(&str, JointGaussianModel, Vec<usize>)> = vec![
        ("brownian", brownian.clone(), st.selected().to_vec()),
        (
            "eigen",
            JointGaussianModel::eigen_truncation(
                vec![1.0, 0.5, 0.25, 0.125, 0.0625, 0.03125],
                vec![0, 1, 3],
                Grid::uniform(0.0, 1.0, 201).unwrap(),
            )
            .unwrap(),
            vec![0, 1, 2],
        ),
    ];
    for (name, model, selected) in cases {
        let mc = monte_carlo_oracle(&model, &selected, 100_000, 1234).unwrap();
        let analytic = schur_oracle(&model, &selected).unwrap();
        let frac = mc.fraction_within(&analytic, 3.0);
        if frac < 0.99 {
            ok = false;
            detail.push_str(&format!("{name}: only {frac} within 3 SE; "));
        }
    }
    report(8, "Monte-Carlo oracle", ok);
    assert!(ok, "{detail}");
}

/// Criterion 9: rerunning every subcommand with an identical config produces
/// byte-identical CSV/JSON payloads. The manifest is a run record (it
/// carries a timestamp) and is not part of the payload contract.
#[test]
fn acceptance_9_deterministic_outputs() {
    let config_text = r#"{
        "model": {"name": "brownian_restriction", "params": {"noise_variance": 0.1}},
        "transfer": {"variant": "auto"},
        "greedy": {"gamma": 0.5, "seed": 11, "n_max": 15},
        "grids": {"x_points": 81, "y_points": 41},
        "selection": {"mode": "greedy"},
        "oracle": {"mc_samples": 2000, "seed": 5},
        "rates": {"fit_window": [5, 15]}
    }"#;
    let base = std::env::temp_dir().join(format!("ggcond-acceptance-{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&base);
    let config_path = base.join("config.json");
    std::fs::create_dir_all(&base).unwrap();
    std::fs::write(&config_path, config_text).unwrap();

    let mut ok = true;
    let mut detail = String::new();
    for cmd in ["greedy", "condition", "rates", "oracle"] {
        let mut payloads: Vec<std::collections::BTreeMap<String, Vec<u8>>> = Vec::new();
        for run in 0..2 {
            let outdir = base.join(format!("{cmd}-{run}"));
            let status = std::process::Command::new(env!("CARGO_BIN_EXE_ggcond"))
                .args([cmd, "--config"])
                .arg(&config_path)
                .arg("--outdir")
                .arg(&outdir)
                .stdout(std::process::Stdio::null())
                .status()
                .unwrap();
            if !status.success() {
                ok = false;
                detail.push_str(&format!("{cmd} run {run} exited {status:?}; "));
                continue;
            }
            let mut files = std::collections::BTreeMap::new();
            for entry in walk(&outdir) {
                let name = entry.file_name().unwrap().to_string_lossy().into_owned();
                if name == "manifest.json" {
                    continue;
                }
                files.insert(name, std::fs::read(&entry).unwrap());
            }
            payloads.push(files);
        }
        if payloads.len() == 2 {
            if payloads[0].keys().collect::<Vec<_>>() != payloads[1].keys().collect::<Vec<_>>() {
                ok = false;
                detail.push_str(&format!("{cmd}: file sets differ; "));
            } else {
                for (name, bytes) in &payloads[0] {
                    if payloads[1][name] != *bytes {
                        ok = false;
                        detail.push_str(&format!("{cmd}: {name} differs between runs; "));
                    }
                }
                if payloads[0].is_empty() {
                    ok = false;
                    detail.push_str(&format!("{cmd}: produced no payload files; "));
                }
            }
        }
    }
    let _ = std::fs::remove_dir_all(&base);
    report(9, "deterministic outputs", ok);
    assert!(ok, "{detail}");
}

fn walk(dir: &std::path::Path) -> Vec<std::path::PathBuf> {
    let mut out = Vec::new();
    if let Ok(entries) = std::fs::read_dir(dir) {
        for entry in entries.flatten() {
            let path = entry.path();
            if path.is_dir() {
                out.extend(walk(&path));
            } else {
                out.push(path);
            }
        }
    }
    out.sort();
    out
}
