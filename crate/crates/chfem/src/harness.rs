//! Convergence studies over nested grids, trajectory-to-trajectory error
//! norms, experimental orders of convergence, projection-order tables and
//! perturbation (stability) probes.
//!
//! The central error measure compares two discrete solutions after bringing
//! the coarse one onto the fine space:
//!
//! ```text
//! e = max_n ‖φ_c(t^n) − φ_f(t^n)‖₁  +  ‖μ̄_c − μ̄_f‖_{L²(0,T; H¹)}
//! ```
//!
//! with the maximum over the coarse time nodes and the μ-term integrated
//! exactly (both chemical potentials are piecewise constant in time, so on
//! each fine interval the difference is a single field).

use std::f64::consts::PI;

use crate::assembly::h1_gram;
use crate::config::{RunConfig, DEFAULT_TAU_FACTOR};
use crate::error::{Error, Result};
use crate::fespace::{build_space, prolong, FeField};
use crate::functionals::relative_energy;
use crate::integrator::{run, Trajectory};
use crate::mesh::{mesh_width, Mesh};
use crate::model::ModelParams;
use crate::projections::{
    analytic_h1_error, analytic_l2_error, h1_project, l2_project, mu_hat, TimeGrid,
};

/// Which refinement family a study runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StudyMode {
    /// Refine space and time together: `τ_k = tau_factor · h_k`.
    FullyDiscrete,
    /// Refine space only; every level runs at the same small `τ*`.
    SemiDiscrete,
}

impl StudyMode {
    pub fn label(self) -> &'static str {
        match self {
            StudyMode::FullyDiscrete => "fully-discrete",
            StudyMode::SemiDiscrete => "semi-discrete",
        }
    }
}

/// Parameters of a convergence study. Each row `k` compares the run at level
/// `k` against the run at level `k+1`, so levels `k_min ..= k_max+1` are
/// integrated once each and shared between adjacent rows.
#[derive(Debug, Clone, Copy)]
pub struct StudySpec {
    pub k_min: u32,
    pub k_max: u32,
    pub mode: StudyMode,
    /// Final time; must be an integer multiple of every step size in range.
    pub t_final: f64,
    /// Fully discrete mode: `τ_k = tau_factor · h_k`.
    pub tau_factor: f64,
    /// Semi-discrete mode: the shared step size.
    pub tau_star: f64,
}

impl StudySpec {
    /// Joint space/time refinement with the default step factor.
    pub fn fully_discrete(k_min: u32, k_max: u32, t_final: f64) -> Self {
        Self {
            k_min,
            k_max,
            mode: StudyMode::FullyDiscrete,
            t_final,
            tau_factor: DEFAULT_TAU_FACTOR,
            tau_star: DEFAULT_TAU_FACTOR / 512.0,
        }
    }

    /// Space-only refinement at the default `τ* = 0.16·2⁻⁹`.
    pub fn semi_discrete(k_min: u32, k_max: u32, t_final: f64) -> Self {
        Self {
            mode: StudyMode::SemiDiscrete,
            ..Self::fully_discrete(k_min, k_max, t_final)
        }
    }

    /// The step size used at level `k` under this spec.
    pub fn tau_at(&self, k: u32) -> f64 {
        match self.mode {
            StudyMode::FullyDiscrete => self.tau_factor * mesh_width(k),
            StudyMode::SemiDiscrete => self.tau_star,
        }
    }
}

/// One line of a convergence table.
#[derive(Debug, Clone, Copy)]
pub struct StudyRow {
    pub k: u32,
    pub h: f64,
    pub tau: f64,
    pub error: f64,
    /// `log₂(e_{k−1}/e_k)`; absent on the first row.
    pub eoc: Option<f64>,
}

/// A finished study: rows plus enough provenance to rerun it.
#[derive(Debug, Clone)]
pub struct ConvergenceReport {
    /// `"fully-discrete"`, `"semi-discrete"` or `"projection"`.
    pub kind: &'static str,
    pub rows: Vec<StudyRow>,
    /// TOML echo of the configuration and study parameters.
    pub config_echo: String,
}

/// Experimental order of convergence under halving: `log₂(e_coarse/e_fine)`.
pub fn eoc(e_coarse: f64, e_fine: f64) -> Result<f64> {
    eoc_with_ratio(e_coarse, e_fine, 2.0)
}

/// EOC for an arbitrary refinement ratio `> 1` between consecutive runs:
/// `log(e_coarse/e_fine) / log(ratio)`.
pub fn eoc_with_ratio(e_coarse: f64, e_fine: f64, ratio: f64) -> Result<f64> {
    for e in [e_coarse, e_fine] {
        if !(e > 0.0) || !e.is_finite() {
            return Err(Error::NonPositiveError(e));
        }
    }
    Ok((e_coarse / e_fine).ln() / ratio.ln())
}

fn ensure_complete(traj: &Trajectory) -> Result<()> {
    match &traj.failure {
        Some(msg) => Err(Error::IncompleteTrajectory(msg.clone())),
        None => Ok(()),
    }
}

/// Distance between a trajectory and one on the same or the next-finer grid
/// pair (space and time): max-over-nodes H¹ error of the phase field plus the
/// exact `L²(0,T; H¹)` norm of the chemical-potential difference.
///
/// The fine run's time grid must contain the coarse nodes (same final time,
/// step ratio a positive integer) and its space must be the same level or the
/// next refinement; coarse fields are prolonged before differencing, so both
/// arguments are measured in the fine space.
pub fn error_between(coarse: &Trajectory, fine: &Trajectory) -> Result<f64> {
    ensure_complete(coarse)?;
    ensure_complete(fine)?;

    let nc = coarse.grid.n_steps;
    let nf = fine.grid.n_steps;
    let not_nested = Error::GridsNotNested {
        coarse: nc,
        fine: nf,
    };
    if nc == 0 || nf % nc != 0 {
        return Err(not_nested);
    }
    let ratio = nf / nc;
    if (coarse.grid.t_end() - fine.grid.t_end()).abs() > 1e-9 {
        return Err(not_nested);
    }

    let coarse_space = &coarse.phi[0].space;
    let fine_space = &fine.phi[0].space;
    let same_level = coarse_space.mesh.level == fine_space.mesh.level;
    let into_fine = |f: &FeField| -> Result<FeField> {
        if same_level {
            Ok(fine_space.field_from_coeffs(f.coeffs.clone()))
        } else {
            prolong(f, fine_space)
        }
    };

    let gram = h1_gram(fine_space);
    let h1_of_diff = |a: &FeField, b: &FeField| -> f64 {
        let d: Vec<f64> = a
            .coeffs
            .iter()
            .zip(&b.coeffs)
            .map(|(x, y)| x - y)
            .collect();
        gram.bilinear(&d, &d).max(0.0)
    };

    let mut phi_part = 0.0f64;
    for n in 0..=nc {
        let pc = into_fine(&coarse.phi[n])?;
        phi_part = phi_part.max(h1_of_diff(&pc, &fine.phi[ratio * n]).sqrt());
    }

    // μ is constant on each interval, so the time integral over a coarse
    // interval is a plain sum of fine-interval contributions.
    let mut mu_sq = 0.0f64;
    for n in 0..nc {
        let pc = into_fine(&coarse.mu[n])?;
        for j in 0..ratio {
            mu_sq += fine.grid.tau * h1_of_diff(&pc, &fine.mu[ratio * n + j]);
        }
    }

    Ok(phi_part + mu_sq.sqrt())
}

/// Run the nested-grid study described by `spec`, taking the physics and
/// solver settings (model, initial condition, Newton controls) from `config`;
/// the config's own level and grid are superseded per row.
pub fn convergence_study(config: &RunConfig, spec: &StudySpec) -> Result<ConvergenceReport> {
    if spec.k_min > spec.k_max {
        return Err(Error::ValidationError {
            key: "k_range".into(),
            reason: format!("k_min {} exceeds k_max {}", spec.k_min, spec.k_max),
        });
    }

    let mut rows: Vec<StudyRow> = Vec::new();
    let mut previous: Option<Trajectory> = None;
    for level in spec.k_min..=spec.k_max + 1 {
        let grid = TimeGrid::from_final_time(spec.t_final, spec.tau_at(level))?;
        let space = build_space(Mesh::build_uniform(level)?);
        let phi0 = config.initial.build(&space)?;
        let traj = run(&space, &config.model, grid, config.solver, phi0)?;
        ensure_complete(&traj)?;
        if let Some(prev) = previous.take() {
            let k = level - 1;
            let error = error_between(&prev, &traj)?;
            let rate = match rows.last() {
                Some(last) => Some(eoc(last.error, error)?),
                None => None,
            };
            rows.push(StudyRow {
                k,
                h: mesh_width(k),
                tau: spec.tau_at(k),
                error,
                eoc: rate,
            });
        }
        previous = Some(traj);
    }

    Ok(ConvergenceReport {
        kind: spec.mode.label(),
        rows,
        config_echo: study_echo(config, spec),
    })
}

fn study_echo(config: &RunConfig, spec: &StudySpec) -> String {
    format!(
        "{}\n[study]\nkind = \"{}\"\nk_min = {}\nk_max = {}\nT = {}\ntau_factor = {}\ntau_star = {}\n",
        config.echo_toml().trim_end(),
        spec.mode.label(),
        spec.k_min,
        spec.k_max,
        spec.t_final,
        spec.tau_factor,
        spec.tau_star,
    )
}

/// Outcome of a perturbation probe: the relative energy between a perturbed
/// and an unperturbed run, tracked over time for each perturbation size.
#[derive(Debug, Clone)]
pub struct StabilityReport {
    pub epsilons: Vec<f64>,
    /// Time of each node, shared by all series.
    pub times: Vec<f64>,
    /// `series[i][n]` = relative energy at node `n` for `epsilons[i]`.
    pub series: Vec<Vec<f64>>,
    /// `sup_n series[i][n] / series[i][0]` (0 when the perturbation is zero).
    pub amplification: Vec<f64>,
    /// Relative energy at the final time, per epsilon.
    pub final_values: Vec<f64>,
    /// Order of `final_values` with respect to epsilon, from consecutive
    /// pairs (absent on the first row and where a value vanishes).
    pub eoc: Vec<Option<f64>>,
    pub config_echo: String,
}

/// Integrate the configured run and, for each `ε`, the same run with initial
/// data perturbed by `ε·sin(2πx)`, and report the relative-energy distance
/// between the pair over time. A quadratic functional of the perturbation
/// should show order 2 in `ε` at the final time.
pub fn stability_probe(config: &RunConfig, epsilons: &[f64]) -> Result<StabilityReport> {
    for &eps in epsilons {
        if !eps.is_finite() || eps < 0.0 {
            return Err(Error::ValidationError {
                key: "epsilons".into(),
                reason: format!("perturbation sizes must be finite and nonnegative, got {eps}"),
            });
        }
    }

    let space = config.space()?;
    let base0 = config.initial_field(&space)?;
    let shape = space.interpolate(|x, _| (2.0 * PI * x).sin());
    let base = run(
        &space,
        &config.model,
        config.grid,
        config.solver,
        base0.clone(),
    )?;
    ensure_complete(&base)?;

    let mut series = Vec::with_capacity(epsilons.len());
    let mut amplification = Vec::with_capacity(epsilons.len());
    let mut final_values = Vec::with_capacity(epsilons.len());
    for &eps in epsilons {
        let coeffs: Vec<f64> = base0
            .coeffs
            .iter()
            .zip(&shape.coeffs)
            .map(|(b, s)| b + eps * s)
            .collect();
        let traj = run(
            &space,
            &config.model,
            config.grid,
            config.solver,
            space.field_from_coeffs(coeffs),
        )?;
        ensure_complete(&traj)?;
        let energies: Vec<f64> = (0..=config.grid.n_steps)
            .map(|n| relative_energy(&traj.phi[n], &base.phi[n], &config.model))
            .collect();
        let amp = if energies[0] > 0.0 {
            energies.iter().cloned().fold(0.0f64, f64::max) / energies[0]
        } else {
            0.0
        };
        amplification.push(amp);
        final_values.push(*energies.last().expect("at least the initial node"));
        series.push(energies);
    }

    let mut rates = vec![None; epsilons.len()];
    for i in 1..epsilons.len() {
        let (e0, e1) = (epsilons[i - 1], epsilons[i]);
        let (f0, f1) = (final_values[i - 1], final_values[i]);
        if e0 > 0.0 && e1 > 0.0 && e0 != e1 && f0 > 0.0 && f1 > 0.0 {
            rates[i] = Some(eoc_with_ratio(f0, f1, e0 / e1)?);
        }
    }

    Ok(StabilityReport {
        epsilons: epsilons.to_vec(),
        times: (0..=config.grid.n_steps).map(|n| config.grid.node(n)).collect(),
        series,
        amplification,
        final_values,
        eoc: rates,
        config_echo: config.echo_toml(),
    })
}

/// One line of the projection-order table: errors of the L² projection, the
/// H¹ projection and the reconstructed chemical potential at one level.
#[derive(Debug, Clone, Copy)]
pub struct ProjectionRow {
    pub level: u32,
    pub h: f64,
    /// `‖g − π⁰g‖₀` (expected order 3).
    pub l2_error: f64,
    pub l2_eoc: Option<f64>,
    /// `‖g − π¹g‖₁` (expected order 2).
    pub h1_error: f64,
    pub h1_eoc: Option<f64>,
    /// `‖μ − μ̂‖₁` for a manufactured smooth pair (expected order 2).
    pub mu_hat_error: f64,
    pub mu_hat_eoc: Option<f64>,
}

/// Projection-order report over a level range.
#[derive(Debug, Clone)]
pub struct ProjectionReport {
    pub rows: Vec<ProjectionRow>,
}

/// Measure the spatial projection orders on `g = sin(2πx)cos(2πy)` and, for
/// the chemical-potential reconstruction, on the manufactured pair
/// `μ = −γΔg + f′(g)` induced by the model.
pub fn projection_study(model: &ModelParams, k_min: u32, k_max: u32) -> Result<ProjectionReport> {
    if k_min > k_max {
        return Err(Error::ValidationError {
            key: "k_range".into(),
            reason: format!("k_min {k_min} exceeds k_max {k_max}"),
        });
    }
    let g = |x: f64, y: f64| (2.0 * PI * x).sin() * (2.0 * PI * y).cos();
    let g_grad = |x: f64, y: f64| {
        (
            2.0 * PI * (2.0 * PI * x).cos() * (2.0 * PI * y).cos(),
            -2.0 * PI * (2.0 * PI * x).sin() * (2.0 * PI * y).sin(),
        )
    };
    let gamma = model.gamma;
    // −Δg = 8π²g for this separable profile, so μ and ∇μ come in closed form.
    let mu_fn = move |x: f64, y: f64| gamma * 8.0 * PI * PI * g(x, y) + model.f_eval(g(x, y), 1);
    let mu_grad = move |x: f64, y: f64| {
        let grad = g_grad(x, y);
        let c = gamma * 8.0 * PI * PI + model.f_eval(g(x, y), 2);
        (c * grad.0, c * grad.1)
    };

    let mut rows: Vec<ProjectionRow> = Vec::new();
    for level in k_min..=k_max {
        let space = build_space(Mesh::build_uniform(level)?);
        let l2_error = analytic_l2_error(&l2_project(&space, g)?, g);
        let h1_error = analytic_h1_error(&h1_project(&space, g, g_grad)?, g, g_grad);
        let phi_hat = h1_project(&space, g, g_grad)?;
        let reconstructed = mu_hat(&space, model, g, g_grad, mu_fn, &phi_hat)?;
        let mu_hat_error = analytic_h1_error(&reconstructed, mu_fn, mu_grad);
        let (l2_eoc, h1_eoc, mu_hat_eoc) = match rows.last() {
            Some(prev) => (
                Some(eoc(prev.l2_error, l2_error)?),
                Some(eoc(prev.h1_error, h1_error)?),
                Some(eoc(prev.mu_hat_error, mu_hat_error)?),
            ),
            None => (None, None, None),
        };
        rows.push(ProjectionRow {
            level,
            h: mesh_width(level),
            l2_error,
            l2_eoc,
            h1_error,
            h1_eoc,
            mu_hat_error,
            mu_hat_eoc,
        });
    }
    Ok(ProjectionReport { rows })
}
