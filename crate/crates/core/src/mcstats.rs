//! Monte Carlo ensembles over deformation realizations and the statistical
//! verification suite for the Gaussian limit of the scaled residual.
//!
//! Every ensemble member is a pure function of `(master seed, sample index)`,
//! so ensembles are identical for any worker count; aggregation always runs
//! in index order with compensated summation.

use crate::exact1d::{
    self, h1_corrector_error_sq, kernel_k0, l2_remainder_sq, l2_residual_sq, path_for_eps,
    residual_decompose, solve_oscillatory, Setup1d,
};
use crate::model::SourceTerm;
use crate::quad::{compensated_sum, default_rule};
use crate::rng::{child_seed, SALT_REALIZATION};
use crate::{map_indexed, map_indexed_serial, Error, Result};

/// Asymptotic 1% point of the Kolmogorov distribution, `√(−ln(0.005)/2)`.
pub const KS_COEFF_1PCT: f64 = 1.627_623_630_718_729_3;

// ---------------------------------------------------------------------------
// Scalar statistics helpers
// ---------------------------------------------------------------------------

/// Compensated mean.
pub fn mean(xs: &[f64]) -> f64 {
    compensated_sum(xs.iter().copied()) / xs.len() as f64
}

/// `(mean, m₂, m₃, m₄)` with central moments computed compensated.
pub fn central_moments(xs: &[f64]) -> (f64, f64, f64, f64) {
    let n = xs.len() as f64;
    let mu = mean(xs);
    let m2 = compensated_sum(xs.iter().map(|x| (x - mu).powi(2))) / n;
    let m3 = compensated_sum(xs.iter().map(|x| (x - mu).powi(3))) / n;
    let m4 = compensated_sum(xs.iter().map(|x| (x - mu).powi(4))) / n;
    (mu, m2, m3, m4)
}

/// Unbiased sample variance.
pub fn sample_variance(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mu = mean(xs);
    compensated_sum(xs.iter().map(|x| (x - mu).powi(2))) / (n - 1.0)
}

/// Standard error of the mean by batch means over `b` consecutive batches.
pub fn batch_se(xs: &[f64], b: usize) -> f64 {
    let b = b.min(xs.len()).max(2);
    let per = xs.len() / b;
    let means: Vec<f64> = (0..b)
        .map(|i| mean(&xs[i * per..(i + 1) * per]))
        .collect();
    (sample_variance(&means) / b as f64).sqrt()
}

/// One-sample Kolmogorov–Smirnov distance against `Normal(0, variance)`.
pub fn ks_distance_normal(samples: &[f64], variance: f64) -> f64 {
    use statrs::distribution::{ContinuousCDF, Normal};
    let sd = variance.sqrt();
    let mut sorted = samples.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = sorted.len() as f64;
    if sd == 0.0 {
        // degenerate model: distance against a point mass step
        return 1.0;
    }
    let normal = Normal::new(0.0, sd).expect("positive sd");
    let mut d: f64 = 0.0;
    for (i, &x) in sorted.iter().enumerate() {
        let c = normal.cdf(x);
        d = d.max(((i + 1) as f64 / n - c).abs());
        d = d.max((c - i as f64 / n).abs());
    }
    d
}

/// Two-sample Kolmogorov–Smirnov distance (sorts both inputs).
pub fn ks_two_sample(a: &mut [f64], b: &mut [f64]) -> f64 {
    a.sort_by(|x, y| x.partial_cmp(y).unwrap());
    b.sort_by(|x, y| x.partial_cmp(y).unwrap());
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        if a[i] <= b[j] {
            i += 1;
        } else {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

// ---------------------------------------------------------------------------
// Gaussian limit model
// ---------------------------------------------------------------------------

/// The limit law of the scaled residual: a centered Gaussian process with
/// covariance `c² ∫₀¹ K₀(x,t) K₀(y,t) dt`.
#[derive(Debug, Clone)]
pub struct GaussianLimitModel {
    pub c_sq: f64,
    f: SourceTerm,
}

impl GaussianLimitModel {
    pub fn new(setup: &Setup1d) -> Self {
        GaussianLimitModel {
            c_sq: setup.h.c_sq,
            f: setup.f.clone(),
        }
    }

    /// Covariance of the limit process at `(x, y)`, by quadrature split at
    /// `x`, `y` and the source kinks.
    pub fn cov(&self, x: f64, y: f64) -> f64 {
        let rule = default_rule();
        let mut breaks = vec![x, y];
        breaks.extend(self.f.breakpoints());
        breaks.sort_by(|a, b| a.partial_cmp(b).unwrap());
        self.c_sq
            * rule.integrate_with_breaks(0.0, 1.0, &breaks, |t| {
                kernel_k0(&self.f, x, t) * kernel_k0(&self.f, y, t)
            })
    }

    /// Variance at `x`.
    pub fn var(&self, x: f64) -> f64 {
        self.cov(x, x)
    }

    /// Covariance matrix on a grid (symmetric positive semidefinite).
    pub fn cov_matrix(&self, grid: &[f64]) -> Vec<Vec<f64>> {
        let n = grid.len();
        let mut m = vec![vec![0.0; n]; n];
        for i in 0..n {
            for j in 0..=i {
                let v = self.cov(grid[i], grid[j]);
                m[i][j] = v;
                m[j][i] = v;
            }
        }
        m
    }
}

// ---------------------------------------------------------------------------
// Ensembles
// ---------------------------------------------------------------------------

/// What to evaluate per realization.
#[derive(Debug, Clone)]
pub struct EnsembleOptions {
    /// Evaluation grid in `[0, 1]` for the scaled residual.
    pub grid: Vec<f64>,
    /// Run the two-route residual decomposition (records the mismatch).
    pub decomposition: bool,
    /// Record `‖u − u⋆‖²` and `‖r‖²`.
    pub norms: bool,
    /// Record the squared H¹ corrector error (the costliest quantity).
    pub h1: bool,
}

impl EnsembleOptions {
    /// 101-point uniform grid, decomposition on, norms off.
    pub fn on_default_grid() -> Self {
        EnsembleOptions {
            grid: uniform_grid(101),
            decomposition: true,
            norms: false,
            h1: false,
        }
    }

    pub fn with_grid(grid: Vec<f64>) -> Self {
        EnsembleOptions {
            grid,
            decomposition: true,
            norms: false,
            h1: false,
        }
    }
}

/// `n` uniform points on `[0, 1]` including both ends.
pub fn uniform_grid(n: usize) -> Vec<f64> {
    (0..n).map(|i| i as f64 / (n - 1) as f64).collect()
}

/// Scalar functionals recorded per realization.
#[derive(Debug, Clone, Copy)]
pub struct SampleRecord {
    pub c_eps: f64,
    pub c_gap: f64,
    pub rho_eps: f64,
    pub mismatch_max: Option<f64>,
    pub l2_residual_sq: Option<f64>,
    pub l2_remainder_sq: Option<f64>,
    pub h1_corrector_sq: Option<f64>,
}

/// A Monte Carlo ensemble of scaled residual profiles.
#[derive(Debug, Clone)]
pub struct Ensemble {
    pub eps: f64,
    pub seed: u64,
    pub grid: Vec<f64>,
    /// Per sample, per grid point: `(u − u⋆)(x) / √ε`.
    pub scaled_residual: Vec<Vec<f64>>,
    pub records: Vec<SampleRecord>,
}

fn sample_one(
    setup: &Setup1d,
    eps: f64,
    opts: &EnsembleOptions,
    path_seed: u64,
) -> Result<(Vec<f64>, SampleRecord)> {
    let path = path_for_eps(&setup.law, eps, path_seed)?;
    let sol = solve_oscillatory(setup, &path, eps)?;
    let sqrt_eps = eps.sqrt();
    let (row, mismatch) = if opts.decomposition {
        let dec = residual_decompose(&sol, &opts.grid)?;
        (
            dec.residual.iter().map(|r| r / sqrt_eps).collect(),
            Some(dec.mismatch_max),
        )
    } else {
        let mut row = Vec::with_capacity(opts.grid.len());
        for &x in &opts.grid {
            let u = sol.u(x)?;
            row.push((u - exact1d::u_star(&setup.h, &setup.f, x)) / sqrt_eps);
        }
        (row, None)
    };
    let record = SampleRecord {
        c_eps: sol.c_eps(),
        c_gap: sol.c_gap(),
        rho_eps: sol.rho_eps(),
        mismatch_max: mismatch,
        l2_residual_sq: opts.norms.then(|| l2_residual_sq(&sol)),
        l2_remainder_sq: opts.norms.then(|| l2_remainder_sq(&sol)),
        h1_corrector_sq: opts.h1.then(|| h1_corrector_error_sq(&sol)),
    };
    Ok((row, record))
}

/// Runs `m` independent realizations; sample `i` uses the path seed
/// `child_seed(seed, SALT_REALIZATION, i)`.
pub fn run_ensemble(
    setup: &Setup1d,
    eps: f64,
    m: usize,
    opts: &EnsembleOptions,
    seed: u64,
) -> Result<Ensemble> {
    if m < 2 {
        return Err(Error::invalid("ensemble needs at least 2 samples"));
    }
    let results = map_indexed(m, |i| {
        sample_one(setup, eps, opts, child_seed(seed, SALT_REALIZATION, i as i64))
            .map_err(Error::in_sample(i))
    })?;
    Ok(assemble(setup, eps, seed, opts, results))
}

/// Sequential reference version of [`run_ensemble`] (identical output).
pub fn run_ensemble_serial(
    setup: &Setup1d,
    eps: f64,
    m: usize,
    opts: &EnsembleOptions,
    seed: u64,
) -> Result<Ensemble> {
    if m < 2 {
        return Err(Error::invalid("ensemble needs at least 2 samples"));
    }
    let results = map_indexed_serial(m, |i| {
        sample_one(setup, eps, opts, child_seed(seed, SALT_REALIZATION, i as i64))
            .map_err(Error::in_sample(i))
    })?;
    Ok(assemble(setup, eps, seed, opts, results))
}

fn assemble(
    _setup: &Setup1d,
    eps: f64,
    seed: u64,
    opts: &EnsembleOptions,
    results: Vec<(Vec<f64>, SampleRecord)>,
) -> Ensemble {
    let mut scaled_residual = Vec::with_capacity(results.len());
    let mut records = Vec::with_capacity(results.len());
    for (row, rec) in results {
        scaled_residual.push(row);
        records.push(rec);
    }
    Ensemble {
        eps,
        seed,
        grid: opts.grid.clone(),
        scaled_residual,
        records,
    }
}

/// Unbiased sample covariance between two grid indices with a batch-means
/// standard error (50 batches).
pub fn empirical_cov(e: &Ensemble, x_idx: usize, y_idx: usize) -> Result<(f64, f64)> {
    let m = e.scaled_residual.len();
    if m < 30 {
        return Err(Error::invalid("covariance estimation needs at least 30 samples"));
    }
    let a: Vec<f64> = e.scaled_residual.iter().map(|r| r[x_idx]).collect();
    let b: Vec<f64> = e.scaled_residual.iter().map(|r| r[y_idx]).collect();
    let (ma, mb) = (mean(&a), mean(&b));
    let cov = compensated_sum((0..m).map(|i| (a[i] - ma) * (b[i] - mb))) / (m - 1) as f64;
    let nb = 50.min(m / 2);
    let per = m / nb;
    let batch_covs: Vec<f64> = (0..nb)
        .map(|k| {
            let r = k * per..(k + 1) * per;
            let (ba, bb) = (&a[r.clone()], &b[r]);
            let (mba, mbb) = (mean(ba), mean(bb));
            compensated_sum(ba.iter().zip(bb).map(|(x, y)| (x - mba) * (y - mbb)))
                / (per - 1) as f64
        })
        .collect();
    let se = (sample_variance(&batch_covs) / nb as f64).sqrt();
    Ok((cov, se))
}

/// Scaled kernel averages `(1/√ε)∫₀¹K₀(x_j,t)ψ(φ⁻¹(t/ε))dt` per realization;
/// with a single probe point these are the scalar functionals whose limit law
/// is `Normal(0, c²‖K₀(x,·)‖²)`.
pub fn sample_scaled_leading(
    setup: &Setup1d,
    eps: f64,
    xs: &[f64],
    m: usize,
    seed: u64,
) -> Result<Vec<Vec<f64>>> {
    let sqrt_eps = eps.sqrt();
    map_indexed(m, |i| {
        let path_seed = child_seed(seed, SALT_REALIZATION, i as i64);
        let path = path_for_eps(&setup.law, eps, path_seed).map_err(Error::in_sample(i))?;
        let sol = solve_oscillatory(setup, &path, eps).map_err(Error::in_sample(i))?;
        xs.iter()
            .map(|&x| sol.leading(x).map(|v| v / sqrt_eps))
            .collect::<Result<Vec<f64>>>()
            .map_err(Error::in_sample(i))
    })
}

/// Per-realization cell fluctuations `Y_k`, `k = 0..count`, by quadrature.
pub fn sample_y_cells(setup: &Setup1d, count: usize, m: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    map_indexed(m, |i| {
        let path_seed = child_seed(seed, SALT_REALIZATION, i as i64);
        let path = crate::model::DiffeoPath::sample(&setup.law, 0..count as i64, path_seed)
            .map_err(Error::in_sample(i))?;
        Ok((0..count as i64)
            .map(|k| exact1d::y_cell(&path, &setup.a_per, &setup.h, k))
            .collect())
    })
}

// ---------------------------------------------------------------------------
// CLT shape check
// ---------------------------------------------------------------------------

/// Pass thresholds for [`clt_check`]: `|z| < z_max` for moment scores and a
/// KS distance under the asymptotic critical value `ks_coeff/√n`.
#[derive(Debug, Clone, Copy)]
pub struct CltThresholds {
    pub z_max: f64,
    pub ks_coeff: f64,
}

impl Default for CltThresholds {
    fn default() -> Self {
        CltThresholds {
            z_max: 4.0,
            ks_coeff: KS_COEFF_1PCT,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct CltReport {
    pub n: usize,
    pub mean: f64,
    pub variance: f64,
    pub target_var: f64,
    pub mean_z: f64,
    pub var_z: f64,
    pub skew_z: f64,
    pub kurt_z: f64,
    pub ks_distance: f64,
    pub ks_critical: f64,
    pub pass: bool,
}

/// Checks that samples look like draws from `Normal(0, target_var)`:
/// z-scores for the mean, variance, standardized skewness and excess
/// kurtosis, plus a one-sample KS distance.
pub fn clt_check(samples: &[f64], target_var: f64, thr: &CltThresholds) -> Result<CltReport> {
    let n = samples.len();
    if n < 1000 {
        return Err(Error::invalid("clt_check needs at least 1000 samples"));
    }
    let nf = n as f64;
    let (mu, m2, m3, m4) = central_moments(samples);
    let variance = m2 * nf / (nf - 1.0);
    let mean_se = (variance / nf).sqrt();
    let mean_z = if mean_se > 0.0 { mu / mean_se } else { f64::INFINITY * mu.signum() };
    let var_se = ((m4 - m2 * m2).max(0.0) / nf).sqrt();
    let var_z = if var_se > 0.0 {
        (variance - target_var) / var_se
    } else if variance == target_var {
        0.0
    } else {
        f64::INFINITY
    };
    let skew = if m2 > 0.0 { m3 / m2.powf(1.5) } else { 0.0 };
    let skew_z = skew / (6.0 / nf).sqrt();
    let kurt = if m2 > 0.0 { m4 / (m2 * m2) - 3.0 } else { 0.0 };
    let kurt_z = kurt / (24.0 / nf).sqrt();
    let ks_distance = ks_distance_normal(samples, target_var);
    let ks_critical = thr.ks_coeff / nf.sqrt();
    let pass = mean_z.abs() < thr.z_max
        && var_z.abs() < thr.z_max
        && skew_z.abs() < thr.z_max
        && kurt_z.abs() < thr.z_max
        && ks_distance < ks_critical;
    Ok(CltReport {
        n,
        mean: mu,
        variance,
        target_var,
        mean_z,
        var_z,
        skew_z,
        kurt_z,
        ks_distance,
        ks_critical,
        pass,
    })
}

// ---------------------------------------------------------------------------
// Moment-bound check
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy)]
pub struct MomentRow {
    pub eps: f64,
    /// Empirical `E[Z^{2p}]`.
    pub moment: f64,
    /// Batch-means standard error of the moment.
    pub se: f64,
    /// Bound denominator `(β−α)^p + ε^{(p−1)/2}`.
    pub bound_denom: f64,
    pub ratio: f64,
}

/// Empirical even moments of the windowed fluctuation
/// `Z(α, β) = ε^{-1/2} ∫_α^β ψ(φ⁻¹(t/ε)) dt` against the bound
/// denominator `(β−α)^p + ε^{(p−1)/2}`.
#[derive(Debug, Clone)]
pub struct MomentReport {
    pub p: u32,
    pub alpha: f64,
    pub beta: f64,
    pub m: usize,
    pub rows: Vec<MomentRow>,
}

impl MomentReport {
    pub fn max_ratio(&self) -> f64 {
        self.rows.iter().map(|r| r.ratio).fold(0.0, f64::max)
    }

    pub fn median_ratio(&self) -> f64 {
        let mut rs: Vec<f64> = self.rows.iter().map(|r| r.ratio).collect();
        rs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        rs[rs.len() / 2]
    }
}

/// Samples of `Z(α, β)` for one `ε`.
pub fn sample_window_fluctuation(
    setup: &Setup1d,
    eps: f64,
    alpha: f64,
    beta: f64,
    m: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    let sqrt_eps = eps.sqrt();
    map_indexed(m, |i| {
        let path_seed = child_seed(seed, SALT_REALIZATION, i as i64);
        let path = path_for_eps(&setup.law, eps, path_seed).map_err(Error::in_sample(i))?;
        let sol = solve_oscillatory(setup, &path, eps).map_err(Error::in_sample(i))?;
        let pa = sol.psi_integral(alpha).map_err(Error::in_sample(i))?;
        let pb = sol.psi_integral(beta).map_err(Error::in_sample(i))?;
        Ok((pb - pa) / sqrt_eps)
    })
}

pub fn moment_bound_check(
    setup: &Setup1d,
    p: u32,
    eps_list: &[f64],
    alpha: f64,
    beta: f64,
    m: usize,
    seed: u64,
) -> Result<MomentReport> {
    if !(1..=4).contains(&p) {
        return Err(Error::invalid("moment order p must be in 1..=4"));
    }
    if !(0.0 <= alpha && alpha < beta && beta <= 1.0) {
        return Err(Error::invalid("window must satisfy 0 ≤ α < β ≤ 1"));
    }
    let mut rows = Vec::with_capacity(eps_list.len());
    for &eps in eps_list {
        let z = sample_window_fluctuation(setup, eps, alpha, beta, m, seed)?;
        let powers: Vec<f64> = z.iter().map(|v| v.powi(2 * p as i32)).collect();
        let moment = mean(&powers);
        let se = batch_se(&powers, 50);
        let bound_denom = (beta - alpha).powi(p as i32) + eps.powf((p as f64 - 1.0) / 2.0);
        rows.push(MomentRow {
            eps,
            moment,
            se,
            bound_denom,
            ratio: moment / bound_denom,
        });
    }
    Ok(MomentReport {
        p,
        alpha,
        beta,
        m,
        rows,
    })
}

// ---------------------------------------------------------------------------
// Rate fit
// ---------------------------------------------------------------------------

/// Least-squares fit of `log(value)` against `log(eps)`.
#[derive(Debug, Clone, Copy)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    /// Sum of squared residuals in log space.
    pub residual_sq: f64,
}

pub fn rate_fit(pairs: &[(f64, f64)]) -> Result<RateFit> {
    if pairs.len() < 2 {
        return Err(Error::invalid("rate fit needs at least 2 pairs"));
    }
    if pairs.iter().any(|&(e, v)| e <= 0.0 || v <= 0.0) {
        return Err(Error::invalid("rate fit requires positive pairs"));
    }
    let logs: Vec<(f64, f64)> = pairs.iter().map(|&(e, v)| (e.ln(), v.ln())).collect();
    let n = logs.len() as f64;
    let sx = compensated_sum(logs.iter().map(|p| p.0)) / n;
    let sy = compensated_sum(logs.iter().map(|p| p.1)) / n;
    let sxx = compensated_sum(logs.iter().map(|p| (p.0 - sx) * (p.0 - sx)));
    let sxy = compensated_sum(logs.iter().map(|p| (p.0 - sx) * (p.1 - sy)));
    let slope = sxy / sxx;
    let intercept = sy - slope * sx;
    let residual_sq = compensated_sum(
        logs.iter()
            .map(|p| (p.1 - intercept - slope * p.0).powi(2)),
    );
    Ok(RateFit {
        slope,
        intercept,
        residual_sq,
    })
}
