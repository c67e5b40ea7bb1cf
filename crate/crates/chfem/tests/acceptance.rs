//! Acceptance suite: one test per headline guarantee, each printing a
//! pass/fail line with the measured numbers (visible with `--nocapture`).
//!
//! The convergence studies integrate real trajectories and take minutes;
//! everything else is seconds.

use std::path::Path;
use std::time::Instant;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use chfem::config::RunConfig;
use chfem::fespace::{build_space, FeField, FeSpace};
use chfem::functionals::{dual_norm_lower_bound, relative_energy, DualNormSolver};
use chfem::harness::{convergence_study, projection_study, stability_probe, StudySpec};
use chfem::integrator::run;
use chfem::mesh::Mesh;
use chfem::model::ModelParams;
use chfem::projections::{
    product_projection_defect, time_avg_error_l2, time_interp_error_l2, TimeGrid,
};

fn pass(criterion: u32, name: &str, detail: String) {
    println!("criterion {criterion:02} ({name}): PASS — {detail}");
}

fn reference_trajectory() -> chfem::integrator::Trajectory {
    let cfg = RunConfig::reference();
    assert_eq!(cfg.level, 0);
    assert_eq!(cfg.grid.n_steps, 8);
    let space = cfg.space().unwrap();
    let phi0 = cfg.initial_field(&space).unwrap();
    let traj = run(&space, &cfg.model, cfg.grid, cfg.solver, phi0).unwrap();
    assert!(traj.failure.is_none(), "{:?}", traj.failure);
    traj
}

fn random_field(space: &std::sync::Arc<FeSpace>, seed: u64, range: (f64, f64)) -> FeField {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let coeffs = (0..space.dof_count)
        .map(|_| range.0 + (range.1 - range.0) * rng.random::<f64>())
        .collect();
    space.field_from_coeffs(coeffs)
}

#[test]
fn criterion_01_mass_conservation() {
    let traj = reference_trajectory();
    let mass0 = traj.diagnostics[0].mass;
    let drift = traj
        .diagnostics
        .iter()
        .map(|r| (r.mass - mass0).abs())
        .fold(0.0f64, f64::max);
    assert!(drift <= 1e-12, "mass drift {drift:.3e} exceeds 1e-12");
    pass(1, "mass conservation", format!("max drift {drift:.3e}"));
}

#[test]
fn criterion_02_energy_dissipation_identity() {
    let traj = reference_trajectory();
    let energy0 = traj.diagnostics[0].energy;
    let mut defect = 0.0f64;
    for pair in traj.diagnostics.windows(2) {
        assert!(
            pair[1].energy <= pair[0].energy,
            "energy increased: {} -> {} at t = {}",
            pair[0].energy,
            pair[1].energy,
            pair[1].t
        );
    }
    for r in &traj.diagnostics {
        defect = defect.max((r.energy + r.cumulative_dissipation - energy0).abs());
    }
    assert!(defect <= 1e-8, "identity defect {defect:.3e} exceeds 1e-8");
    pass(
        2,
        "energy-dissipation identity",
        format!("max defect {defect:.3e}, trace nonincreasing"),
    );
}

#[test]
fn criterion_03_fully_discrete_convergence() {
    let started = Instant::now();
    let cfg = RunConfig::reference();
    let spec = StudySpec::fully_discrete(0, 2, 0.16);
    let report = convergence_study(&cfg, &spec).unwrap();

    println!("fully discrete study (T = 0.16, tau_k = 0.16 h_k):");
    for row in &report.rows {
        println!(
            "  k={} h={:.4e} tau={:.4e} e={:.6e} eoc={:?}",
            row.k, row.h, row.tau, row.error, row.eoc
        );
    }
    println!(
        "  comparison values for the same discretization at a longer, unspecified \
         final time: e = [1.5183e0, 3.7896e-1, 9.2797e-2, 2.3795e-2, 6.0902e-3], \
         rates [---, 2.00, 2.02, 1.96, 1.96]"
    );

    let decreasing = report.rows.windows(2).all(|p| p[1].error < p[0].error);
    let rates: Vec<f64> = report.rows.iter().filter_map(|r| r.eoc).collect();
    let in_band = rates.iter().all(|r| (1.7..=2.3).contains(r));
    let status = if decreasing && in_band { "PASS" } else { "FAIL" };
    println!(
        "criterion 03 (fully discrete convergence): {status} — rates {rates:.4?} \
         vs required [1.7, 2.3], {:.1}s",
        started.elapsed().as_secs_f64()
    );
    assert!(decreasing, "errors must decrease: {:?}", report.rows);
    assert!(
        in_band,
        "EOC outside [1.7, 2.3] at some refinement; rows {:?}",
        report.rows
    );
}

#[test]
fn criterion_04_semi_discrete_convergence() {
    let started = Instant::now();
    let cfg = RunConfig::reference();
    let spec = StudySpec::semi_discrete(0, 1, 0.04);
    assert_eq!(spec.tau_star, 0.16 / 512.0);
    let report = convergence_study(&cfg, &spec).unwrap();

    println!("semi-discrete study (T = 0.04, tau* = 0.16/512):");
    for row in &report.rows {
        println!(
            "  k={} h={:.4e} tau={:.4e} e={:.6e} eoc={:?}",
            row.k, row.h, row.tau, row.error, row.eoc
        );
    }
    println!(
        "  comparison values for the same spatial discretization at a longer, \
         unspecified final time: e = [1.4794e0, 3.7373e-1, 9.2554e-2, 2.3622e-2, \
         5.9391e-3], rates [---, 1.98, 2.01, 1.97, 1.99]"
    );

    let decreasing = report.rows[1].error < report.rows[0].error;
    let rate = report.rows[1].eoc.unwrap();
    let in_band = (1.7..=2.3).contains(&rate);
    let status = if decreasing && in_band { "PASS" } else { "FAIL" };
    println!(
        "criterion 04 (semi-discrete convergence): {status} — rate {rate:.4} \
         vs required [1.7, 2.3], {:.1}s",
        started.elapsed().as_secs_f64()
    );
    assert!(decreasing, "errors must decrease: {:?}", report.rows);
    assert!(in_band, "EOC {rate} outside [1.7, 2.3]; rows {:?}", report.rows);
}

#[test]
fn criterion_05_projection_orders() {
    let model = ModelParams::reference();
    let report = projection_study(&model, 0, 3).unwrap();
    let last = report.rows.last().unwrap();
    let (l2, h1, mh) = (
        last.l2_eoc.unwrap(),
        last.h1_eoc.unwrap(),
        last.mu_hat_eoc.unwrap(),
    );
    assert!((l2 - 3.0).abs() <= 0.3, "L2-projection EOC {l2} not 3±0.3");
    assert!((h1 - 2.0).abs() <= 0.3, "H1-projection EOC {h1} not 2±0.3");
    assert!((mh - 2.0).abs() <= 0.3, "potential reconstruction EOC {mh} not 2±0.3");
    pass(
        5,
        "projection orders",
        format!("L2 {l2:.2} (exp 3), H1 {h1:.2} (exp 2), mu-hat {mh:.2} (exp 2)"),
    );
}

#[test]
fn criterion_06_time_operator_orders() {
    let u = |t: f64| t.sin();
    let v = |t: f64| t.cos();
    let taus = [0.125, 0.0625, 0.03125, 0.015625];

    let mut avg_errs = Vec::new();
    let mut interp_errs = Vec::new();
    let mut defect_errs = Vec::new();
    for &tau in &taus {
        let grid = TimeGrid::from_final_time(1.0, tau).unwrap();
        avg_errs.push(time_avg_error_l2(u, &grid));
        interp_errs.push(time_interp_error_l2(u, &grid));
        defect_errs.push(product_projection_defect(u, v, &grid, 2.0));
    }
    let rates = |errs: &[f64]| -> Vec<f64> {
        errs.windows(2).map(|w| (w[0] / w[1]).log2()).collect()
    };
    let (ra, ri, rd) = (rates(&avg_errs), rates(&interp_errs), rates(&defect_errs));
    for r in &ra {
        assert!((r - 1.0).abs() <= 0.2, "interval-average EOC {r} not 1±0.2");
    }
    for r in &ri {
        assert!((r - 2.0).abs() <= 0.2, "interpolation EOC {r} not 2±0.2");
    }
    for r in &rd {
        assert!((r - 2.0).abs() <= 0.2, "product-defect EOC {r} not 2±0.2");
    }

    // Closed form: for u = v = t the per-interval defect is exactly τ²/12.
    let grid = TimeGrid::from_final_time(1.0, 0.125).unwrap();
    let max_defect = product_projection_defect(|t| t, |t| t, &grid, f64::INFINITY);
    let expected = 0.125 * 0.125 / 12.0;
    assert!(
        (max_defect - expected).abs() <= 1e-12,
        "defect {max_defect:.16e} vs τ²/12 = {expected:.16e}"
    );
    pass(
        6,
        "time-operator orders",
        format!(
            "avg {:.2}, interp {:.2}, defect {:.2}; τ²/12 matched to {:.1e}",
            ra.last().unwrap(),
            ri.last().unwrap(),
            rd.last().unwrap(),
            (max_defect - expected).abs()
        ),
    );
}

#[test]
fn criterion_07_relative_energy_bounds() {
    let space = build_space(Mesh::build_uniform(0).unwrap());
    let model = ModelParams::reference();
    let range = model.admissible_range;
    let mut worst_slack = f64::INFINITY;
    for pair in 0..100u64 {
        let phi = random_field(&space, 900 + pair, range);
        let phi_hat = random_field(&space, 2900 + pair, range);
        let re = relative_energy(&phi, &phi_hat, &model);
        let delta: Vec<f64> = phi
            .coeffs
            .iter()
            .zip(&phi_hat.coeffs)
            .map(|(a, b)| a - b)
            .collect();
        let d = space.field_from_coeffs(delta);
        let h1_sq = d.l2_norm_sq() + d.h1_seminorm_sq();
        let slack = re - 0.5 * model.gamma * h1_sq;
        worst_slack = worst_slack.min(slack);
        assert!(
            slack >= -1e-12,
            "lower bound violated by {slack:.3e} on pair {pair}"
        );
        let diag = relative_energy(&phi, &phi, &model);
        assert!(diag.abs() <= 1e-12, "diagonal not zero: {diag:.3e}");
    }
    pass(
        7,
        "relative-energy bounds",
        format!("worst lower-bound slack {worst_slack:.3e} over 100 pairs, diagonal 0"),
    );
}

#[test]
fn criterion_08_discrete_dual_norm() {
    let space = build_space(Mesh::build_uniform(0).unwrap());
    let solver = DualNormSolver::new(&space).unwrap();
    let mut max_rel = 0.0f64;
    let mut min_ratio = f64::INFINITY;
    for i in 0..20u64 {
        let c = random_field(&space, 7000 + i, (-1.0, 1.0));
        let r = solver.gram.matvec(&c.coeffs);
        let dual = solver.dual_norm(&r);
        let h1 = solver.h1_norm(&c.coeffs);
        let rel = (dual - h1).abs() / h1;
        max_rel = max_rel.max(rel);
        assert!(rel <= 1e-10, "Riesz identity off by {rel:.3e}");

        let lower = dual_norm_lower_bound(&solver.gram, &r, 200, 7);
        let ratio = lower / dual;
        min_ratio = min_ratio.min(ratio);
        assert!(
            ratio >= 0.95,
            "randomized sup reached only {:.2}% of the dual norm",
            100.0 * ratio
        );
        assert!(ratio <= 1.0 + 1e-12, "lower bound exceeded the true norm");
    }
    pass(
        8,
        "discrete dual norm",
        format!("Riesz rel err ≤ {max_rel:.2e}, randomized sup ≥ {:.1}%", 100.0 * min_ratio),
    );
}

#[test]
fn criterion_09_perturbation_probe() {
    let started = Instant::now();
    let cfg = RunConfig::reference();
    let report = stability_probe(&cfg, &[0.0, 1e-2, 1e-3, 1e-4]).unwrap();

    assert!(
        report.series[0].iter().all(|&v| v == 0.0),
        "zero perturbation must give identically zero relative energy"
    );
    let mut rates = Vec::new();
    for i in [2usize, 3] {
        let rate = report.eoc[i].expect("positive pair");
        assert!(
            (1.7..=2.3).contains(&rate),
            "EOC {rate} outside 2±0.3; finals {:?}",
            report.final_values
        );
        rates.push(rate);
    }
    pass(
        9,
        "perturbation probe",
        format!(
            "eps-rates {rates:.2?}, zero case identically 0, {:.1}s",
            started.elapsed().as_secs_f64()
        ),
    );
}

#[test]
fn criterion_10_bitwise_determinism() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg_path = tmp.path().join("run.toml");
    std::fs::write(
        &cfg_path,
        r#"
[model]
gamma = 0.003
potential = { scale = 0.3, root = 0.99 }
mobility = [1.0, 0.0, -2.0, 0.0, 1.0]
mobility_floor = 1e-3
admissible_range = [-4.0, 4.0]

[discretization]
level = 0
T = 0.04
tau = 0.02

[output]
snapshot_times = [0.04]
sample_grid = 16
"#,
    )
    .unwrap();

    let bin = env!("CARGO_BIN_EXE_chfem");
    let mut n_files = 0usize;
    for (sub, args) in [
        ("run", vec!["-c", cfg_path.to_str().unwrap(), "-o"]),
        (
            "converge",
            vec!["--k-min", "0", "--k-max", "0", "--T", "0.04", "--out"],
        ),
    ] {
        let out_a = tmp.path().join(format!("{sub}_a"));
        let out_b = tmp.path().join(format!("{sub}_b"));
        for out in [&out_a, &out_b] {
            let target: std::ffi::OsString = if sub == "converge" {
                out.join("report.csv").into()
            } else {
                out.clone().into()
            };
            let status = std::process::Command::new(bin)
                .arg(sub)
                .args(&args)
                .arg(target)
                .stdout(std::process::Stdio::null())
                .status()
                .unwrap();
            assert!(status.success(), "{sub} failed");
        }
        n_files += assert_dirs_identical(&out_a, &out_b);
    }
    pass(
        10,
        "bitwise determinism",
        format!("{n_files} files byte-identical across repeated executions"),
    );
}

fn assert_dirs_identical(a: &Path, b: &Path) -> usize {
    let mut names: Vec<String> = std::fs::read_dir(a)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    names.sort();
    assert!(!names.is_empty());
    for name in &names {
        let bytes_a = std::fs::read(a.join(name)).unwrap();
        let bytes_b = std::fs::read(b.join(name)).unwrap();
        assert_eq!(bytes_a, bytes_b, "{name} differs between executions");
    }
    names.len()
}
