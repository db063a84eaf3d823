//! Effective-matrix estimation from truncated periodic correctors.
//!
//! On the torus `Q_N = (0, N)^d` the estimate is
//!
//! ```text
//! B_N[i][j] = |Q_N|⁻¹ ∫ det(∇φ) eᵢᵀ A (e_j + (∇φ)⁻ᵀ∇w_j),
//! A_N       = det(α_N)⁻¹ B_N,    α_N = |Q_N|⁻¹ ∫ ∇φ,
//! ```
//!
//! with `w_j` the solved correctors. For the tensorized deformation `α_N` is
//! diagonal with exact per-axis entries `φᵢ(N)/N` (cell sums, no quadrature),
//! and `β_N = |Q_N|⁻¹∫det(∇φ)(∇φ)⁻¹` equals `adj(α_N)` identically. As `N`
//! grows, `A_N` converges almost surely to the deterministic effective
//! matrix; the study below verifies stabilization (variance decay and Cauchy
//! differences), which is all the almost-sure statement promises — no rate is
//! claimed.

use crate::exact1d::homogenize_1d;
use crate::fem::{
    build_mesh, gradient_at, sample_coefficients, solve_all_correctors, PeriodicMesh,
};
use crate::mat::{self, Mat2};
use crate::model::{DiffeoLaw, PeriodicMatrixField, PeriodicScalarField, TensorDiffeo};
use crate::rng::{child_seed, mix64, SALT_REALIZATION};
use crate::{map_indexed, Error, Result};

/// One realization's effective-matrix estimate.
#[derive(Debug, Clone)]
pub struct HomogenizedEstimate {
    pub d: usize,
    pub n_cells: usize,
    /// Mean deformation gradient `|Q_N|⁻¹∫∇φ` (exact cell sums).
    pub alpha: Mat2,
    /// Mean adjugate `|Q_N|⁻¹∫det(∇φ)(∇φ)⁻¹` (exact for tensor fields).
    pub beta: Mat2,
    pub b_star: Mat2,
    pub a_star: Mat2,
    /// Worst solver residual over the `d` corrector solves.
    pub solver_residual: f64,
    pub iterations: usize,
}

/// Exact `(α_N, β_N)` for a tensorized deformation over `(0, N)^d`.
pub fn alpha_beta(diffeo: &TensorDiffeo, n_cells: usize) -> (Mat2, Mat2) {
    let d = diffeo.dim();
    let nf = n_cells as f64;
    let mut alpha = mat::identity();
    for i in 0..d {
        alpha[i][i] = diffeo.axis(i).phi_at_int(n_cells as i64) / nf;
    }
    // β = |Q_N|⁻¹ ∫ det(∇φ)(∇φ)⁻¹; diagonal with [β]₁₁ = mean φ₂', [β]₂₂ =
    // mean φ₁' in 2D, identically 1 in 1D — the adjugate of α.
    let beta = mat::adjugate(d, alpha);
    (alpha, beta)
}

/// Solves the `d` correctors on the given mesh and assembles the estimate.
pub fn estimate_a_star(
    mesh: &PeriodicMesh,
    diffeo: &TensorDiffeo,
    a_per: &PeriodicMatrixField,
    tol: f64,
) -> Result<HomogenizedEstimate> {
    estimate_with_correctors(mesh, diffeo, a_per, tol).map(|(est, _)| est)
}

/// As [`estimate_a_star`], additionally returning the corrector fields (for
/// dumps and nodal checks).
pub fn estimate_with_correctors(
    mesh: &PeriodicMesh,
    diffeo: &TensorDiffeo,
    a_per: &PeriodicMatrixField,
    tol: f64,
) -> Result<(HomogenizedEstimate, Vec<crate::fem::CorrectorSolution>)> {
    let d = mesh.d;
    let coeff = sample_coefficients(mesh, diffeo, a_per)?;
    let sols = solve_all_correctors(&coeff, tol)?;
    let qpe = mesh.quad_points_per_element();
    let wq = match d {
        1 => 0.5 * mesh.h,
        _ => 0.25 * mesh.h * mesh.h,
    };
    let volume = (mesh.n_cells as f64).powi(d as i32);
    let mut b_star = mat::zero();
    for (j, sol) in sols.iter().enumerate() {
        // accumulate column j in element order
        let mut col = [crate::quad::Accumulator::default(); 2];
        for e in 0..mesh.elements() {
            for q in 0..qpe {
                let qd = coeff.at(e, q);
                let grad = gradient_at(mesh, &sol.nodal, e, q);
                // e_j + (∇φ)⁻ᵀ ∇w_j
                let mut vec_j = [0.0; 2];
                for i in 0..d {
                    vec_j[i] = if i == j { 1.0 } else { 0.0 } + qd.inv_g[i] * grad[i];
                }
                for i in 0..d {
                    let mut av = 0.0;
                    for k in 0..d {
                        av += qd.a[i][k] * vec_j[k];
                    }
                    col[i].add(wq * qd.det * av);
                }
            }
        }
        for i in 0..d {
            b_star[i][j] = col[i].value() / volume;
        }
    }
    let (alpha, beta) = alpha_beta(diffeo, mesh.n_cells);
    let det_alpha = mat::det(d, alpha);
    if det_alpha <= 0.0 {
        return Err(Error::Solver(
            "mean deformation gradient is singular; path invariant violated".into(),
        ));
    }
    let a_star = mat::scale(b_star, 1.0 / det_alpha);
    let solver_residual = sols.iter().map(|s| s.residual).fold(0.0, f64::max);
    let iterations = sols.iter().map(|s| s.iterations).max().unwrap_or(0);
    Ok((
        HomogenizedEstimate {
            d,
            n_cells: mesh.n_cells,
            alpha,
            beta,
            b_star,
            a_star,
            solver_residual,
            iterations,
        },
        sols,
    ))
}

// ---------------------------------------------------------------------------
// Convergence study
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct StudyConfig {
    pub d: usize,
    pub law: DiffeoLaw,
    pub a_per: PeriodicMatrixField,
    /// Increasing torus sizes.
    pub n_list: Vec<usize>,
    /// Realizations per size.
    pub m: usize,
    pub refine: usize,
    pub tol: f64,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct ConvergenceRow {
    pub n_cells: usize,
    pub m: usize,
    /// Entrywise mean of the estimates.
    pub mean: Mat2,
    /// Entrywise sample standard deviation.
    pub std: Mat2,
    /// `max |mean(N) − mean(previous N)|`, from the second row on.
    pub cauchy: Option<f64>,
    /// Worst `|A − Aᵀ|` over realizations.
    pub max_asymmetry: f64,
    /// Smallest eigenvalue of `sym(A)` over realizations.
    pub min_sym_eigenvalue: f64,
}

#[derive(Debug, Clone)]
pub struct ConvergenceTable {
    pub d: usize,
    pub rows: Vec<ConvergenceRow>,
}

/// Runs `m` independent realizations per torus size. The realization seed is
/// `child_seed(mix64(seed, N), SALT_REALIZATION, index)`, so the table is a
/// pure function of `(seed, n_list, m)`.
pub fn convergence_study(cfg: &StudyConfig) -> Result<ConvergenceTable> {
    if cfg.n_list.is_empty() || cfg.n_list.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::invalid("torus sizes must be strictly increasing"));
    }
    if cfg.m < 2 {
        return Err(Error::invalid("study needs at least 2 realizations per size"));
    }
    let mut rows: Vec<ConvergenceRow> = Vec::with_capacity(cfg.n_list.len());
    for &n_cells in &cfg.n_list {
        let mesh = build_mesh(cfg.d, n_cells, cfg.refine)?;
        let per_n_seed = mix64(cfg.seed, n_cells as i64);
        let estimates = map_indexed(cfg.m, |j| {
            let seed = child_seed(per_n_seed, SALT_REALIZATION, j as i64);
            let diffeo = TensorDiffeo::sample(&cfg.law, cfg.d, 0..n_cells as i64, seed)
                .map_err(Error::in_sample(j))?;
            estimate_a_star(&mesh, &diffeo, &cfg.a_per, cfg.tol).map_err(Error::in_sample(j))
        })?;
        let mut mean = mat::zero();
        let mut std = mat::zero();
        for i in 0..cfg.d {
            for j in 0..cfg.d {
                let vals: Vec<f64> = estimates.iter().map(|e| e.a_star[i][j]).collect();
                mean[i][j] = crate::mcstats::mean(&vals);
                std[i][j] = crate::mcstats::sample_variance(&vals).sqrt();
            }
        }
        let cauchy = rows
            .last()
            .map(|prev: &ConvergenceRow| mat::max_abs_diff(cfg.d, mean, prev.mean));
        let max_asymmetry = estimates
            .iter()
            .map(|e| mat::asymmetry(cfg.d, e.a_star))
            .fold(0.0, f64::max);
        let min_sym_eigenvalue = estimates
            .iter()
            .map(|e| mat::sym_eigenvalues(cfg.d, e.a_star)[0])
            .fold(f64::INFINITY, f64::min);
        rows.push(ConvergenceRow {
            n_cells,
            m: cfg.m,
            mean,
            std,
            cauchy,
            max_asymmetry,
            min_sym_eigenvalue,
        });
    }
    Ok(ConvergenceTable { d: cfg.d, rows })
}

// ---------------------------------------------------------------------------
// 1D cross-validation
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy)]
pub struct CrossValidation1d {
    pub fem_mean: f64,
    pub exact: f64,
    pub rel_gap: f64,
}

/// Compares the mean 1D truncated-corrector estimate against the closed-form
/// effective coefficient.
pub fn cross_validate_1d(
    law: &DiffeoLaw,
    profile: &PeriodicScalarField,
    n_cells: usize,
    refine: usize,
    m: usize,
    tol: f64,
    seed: u64,
) -> Result<CrossValidation1d> {
    let exact = homogenize_1d(law, profile)?.a_star;
    let mesh = build_mesh(1, n_cells, refine)?;
    let a_per = PeriodicMatrixField::laminate(0, profile.clone())?;
    let values = map_indexed(m, |j| {
        let seed_j = child_seed(seed, SALT_REALIZATION, j as i64);
        let diffeo = TensorDiffeo::sample(law, 1, 0..n_cells as i64, seed_j)
            .map_err(Error::in_sample(j))?;
        estimate_a_star(&mesh, &diffeo, &a_per, tol)
            .map(|e| e.a_star[0][0])
            .map_err(Error::in_sample(j))
    })?;
    let fem_mean = crate::mcstats::mean(&values);
    Ok(CrossValidation1d {
        fem_mean,
        exact,
        rel_gap: (fem_mean - exact).abs() / exact,
    })
}
