//! Coefficient fields, source terms, and the random deformation.
//!
//! The deformation `φ` is a strictly increasing map of the line (one
//! independent copy per axis in higher dimension) whose derivative is
//! piecewise defined per unit cell:
//!
//! ```text
//! φ'(y) = 1 + X_k · G(y)   on [k, k+1),     φ(0) = 0,
//! ```
//!
//! with i.i.d. cell amplitudes `X_k`, `|X_k| ≤ m < 1`, and a 1-periodic shape
//! `G` with `‖G‖_∞ ≤ m`. This keeps `φ' ∈ [1 - m², 1 + m²]`, so `φ` is a
//! bi-Lipschitz bijection and its derivative is stationary under integer
//! shifts of the cell index.

use crate::rng::{child_seed, mix64, unit_f64, SALT_AXIS};
use crate::{Error, Result};
use std::ops::Range;

/// Fractional part in `[0, 1)`.
#[inline]
pub(crate) fn fract1(x: f64) -> f64 {
    let f = x - x.floor();
    if f >= 1.0 {
        0.0
    } else {
        f
    }
}

// ---------------------------------------------------------------------------
// Periodic scalar coefficient
// ---------------------------------------------------------------------------

/// A 1-periodic piecewise-constant coefficient with positive lower bound.
///
/// `values[i]` holds on `[breaks[i], breaks[i+1])` (and the last piece wraps
/// to 1). `breaks[0]` is always 0.
#[derive(Debug, Clone, PartialEq)]
pub struct PeriodicScalarField {
    breaks: Vec<f64>,
    values: Vec<f64>,
    a_minus: f64,
    a_plus: f64,
}

impl PeriodicScalarField {
    pub fn piecewise(breaks: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if breaks.is_empty() || breaks.len() != values.len() {
            return Err(Error::InvalidField(
                "breaks and values must be non-empty and of equal length".into(),
            ));
        }
        if breaks[0] != 0.0 {
            return Err(Error::InvalidField("first breakpoint must be 0".into()));
        }
        if breaks.windows(2).any(|w| w[0] >= w[1]) || breaks.iter().any(|&b| !(0.0..1.0).contains(&b)) {
            return Err(Error::InvalidField(
                "breakpoints must be strictly increasing within [0, 1)".into(),
            ));
        }
        if values.iter().any(|v| !v.is_finite() || *v <= 0.0) {
            return Err(Error::InvalidField(
                "coefficient values must be finite and positive".into(),
            ));
        }
        let a_minus = values.iter().cloned().fold(f64::INFINITY, f64::min);
        let a_plus = values.iter().cloned().fold(0.0, f64::max);
        Ok(PeriodicScalarField {
            breaks,
            values,
            a_minus,
            a_plus,
        })
    }

    pub fn constant(value: f64) -> Result<Self> {
        Self::piecewise(vec![0.0], vec![value])
    }

    /// Value at `x`, extended 1-periodically.
    pub fn value(&self, x: f64) -> f64 {
        let u = fract1(x);
        let idx = match self.breaks.binary_search_by(|b| b.partial_cmp(&u).unwrap()) {
            Ok(i) => i,
            Err(i) => i - 1,
        };
        self.values[idx]
    }

    /// Sorted discontinuity abscissae in `[0, 1)` (the first is 0).
    pub fn breakpoints(&self) -> &[f64] {
        &self.breaks
    }

    pub fn bounds(&self) -> (f64, f64) {
        (self.a_minus, self.a_plus)
    }

    /// Exact `∫₀¹ 1/a`.
    pub fn mean_inverse(&self) -> f64 {
        let mut acc = 0.0;
        for i in 0..self.values.len() {
            let hi = if i + 1 < self.breaks.len() {
                self.breaks[i + 1]
            } else {
                1.0
            };
            acc += (hi - self.breaks[i]) / self.values[i];
        }
        acc
    }
}

// ---------------------------------------------------------------------------
// Periodic matrix coefficient (d = 2)
// ---------------------------------------------------------------------------

/// Structure of a periodic `d×d` coefficient matrix (`d ≤ 2`).
#[derive(Debug, Clone)]
pub enum MatrixStructure {
    /// The identity matrix everywhere.
    Identity,
    /// `a(x_axis) · Id`: scalar profile varying along one coordinate.
    Laminate {
        axis: usize,
        profile: PeriodicScalarField,
    },
    /// `a(x) · Id` with `a` alternating on half-cell squares:
    /// `values[0]` where `⌊2x₁⌋ + ⌊2x₂⌋` is even, `values[1]` otherwise.
    Checkerboard { values: [f64; 2] },
}

/// A Z²-periodic matrix coefficient with coercivity bounds.
#[derive(Debug, Clone)]
pub struct PeriodicMatrixField {
    structure: MatrixStructure,
    a_minus: f64,
    a_plus: f64,
}

impl PeriodicMatrixField {
    pub fn identity() -> Self {
        PeriodicMatrixField {
            structure: MatrixStructure::Identity,
            a_minus: 1.0,
            a_plus: 1.0,
        }
    }

    pub fn laminate(axis: usize, profile: PeriodicScalarField) -> Result<Self> {
        if axis > 1 {
            return Err(Error::InvalidField("laminate axis must be 0 or 1".into()));
        }
        let (a_minus, a_plus) = profile.bounds();
        Ok(PeriodicMatrixField {
            structure: MatrixStructure::Laminate { axis, profile },
            a_minus,
            a_plus,
        })
    }

    pub fn checkerboard(v0: f64, v1: f64) -> Result<Self> {
        if v0 <= 0.0 || v1 <= 0.0 || !v0.is_finite() || !v1.is_finite() {
            return Err(Error::InvalidField(
                "checkerboard values must be finite and positive".into(),
            ));
        }
        Ok(PeriodicMatrixField {
            structure: MatrixStructure::Checkerboard { values: [v0, v1] },
            a_minus: v0.min(v1),
            a_plus: v0.max(v1),
        })
    }

    /// Matrix value at a point (entries beyond the active dimension are
    /// identity-padded).
    pub fn value(&self, x: [f64; 2]) -> [[f64; 2]; 2] {
        let s = self.scalar_at(x);
        [[s, 0.0], [0.0, s]]
    }

    /// Scalar multiplier of the identity at `x` (all supported structures are
    /// isotropic).
    pub fn scalar_at(&self, x: [f64; 2]) -> f64 {
        match &self.structure {
            MatrixStructure::Identity => 1.0,
            MatrixStructure::Laminate { axis, profile } => profile.value(x[*axis]),
            MatrixStructure::Checkerboard { values } => {
                let i = (2.0 * fract1(x[0])) as usize + (2.0 * fract1(x[1])) as usize;
                values[i % 2]
            }
        }
    }

    pub fn bounds(&self) -> (f64, f64) {
        (self.a_minus, self.a_plus)
    }

    pub fn is_symmetric(&self) -> bool {
        true
    }

    pub fn structure(&self) -> &MatrixStructure {
        &self.structure
    }

    /// The scalar 1D profile when the field is 1D-reducible along `x₁`.
    pub fn laminate_profile(&self) -> Option<&PeriodicScalarField> {
        match &self.structure {
            MatrixStructure::Laminate { axis: 0, profile } => Some(profile),
            _ => None,
        }
    }
}

// ---------------------------------------------------------------------------
// Source term
// ---------------------------------------------------------------------------

/// Right-hand side `f` on `(0, 1)` with closed-form primitives
/// `F(t) = ∫₀ᵗ f` and `∫₀ᵗ F`.
#[derive(Debug, Clone)]
pub enum SourceTerm {
    /// `f ≡ value`
    Constant { value: f64 },
    /// `f(x) = amplitude · sin(2πx)`
    Sine { amplitude: f64 },
    /// Piecewise constant; `values[i]` on `[breaks[i], breaks[i+1])`.
    Piecewise {
        breaks: Vec<f64>,
        values: Vec<f64>,
        /// `F` at each breakpoint (cumulative).
        primitive_at: Vec<f64>,
        /// `∫₀ᵗ F` at each breakpoint (cumulative).
        primitive2_at: Vec<f64>,
    },
}

impl SourceTerm {
    pub fn constant(value: f64) -> Self {
        SourceTerm::Constant { value }
    }

    pub fn sine(amplitude: f64) -> Self {
        SourceTerm::Sine { amplitude }
    }

    pub fn piecewise(breaks: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if breaks.is_empty()
            || breaks.len() != values.len()
            || breaks[0] != 0.0
            || breaks.windows(2).any(|w| w[0] >= w[1])
            || breaks.iter().any(|&b| !(0.0..1.0).contains(&b))
        {
            return Err(Error::InvalidField(
                "source breakpoints must start at 0 and increase within [0, 1)".into(),
            ));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidField("source values must be finite".into()));
        }
        let n = breaks.len();
        let mut primitive_at = vec![0.0; n];
        let mut primitive2_at = vec![0.0; n];
        for i in 1..n {
            let dt = breaks[i] - breaks[i - 1];
            primitive_at[i] = primitive_at[i - 1] + values[i - 1] * dt;
            primitive2_at[i] =
                primitive2_at[i - 1] + primitive_at[i - 1] * dt + 0.5 * values[i - 1] * dt * dt;
        }
        Ok(SourceTerm::Piecewise {
            breaks,
            values,
            primitive_at,
            primitive2_at,
        })
    }

    /// `f(x)`.
    pub fn f(&self, x: f64) -> f64 {
        match self {
            SourceTerm::Constant { value } => *value,
            SourceTerm::Sine { amplitude } => {
                amplitude * (2.0 * std::f64::consts::PI * x).sin()
            }
            SourceTerm::Piecewise { breaks, values, .. } => {
                let u = x.clamp(0.0, 1.0);
                let idx = breaks.partition_point(|&b| b <= u).saturating_sub(1);
                values[idx.min(values.len() - 1)]
            }
        }
    }

    /// `F(t) = ∫₀ᵗ f`, continuous with `F(0) = 0`.
    pub fn primitive(&self, t: f64) -> f64 {
        match self {
            SourceTerm::Constant { value } => value * t,
            SourceTerm::Sine { amplitude } => {
                let w = 2.0 * std::f64::consts::PI;
                amplitude * (1.0 - (w * t).cos()) / w
            }
            SourceTerm::Piecewise {
                breaks,
                values,
                primitive_at,
                ..
            } => {
                let u = t.clamp(0.0, 1.0);
                let idx = breaks.partition_point(|&b| b <= u).saturating_sub(1);
                let idx = idx.min(values.len() - 1);
                primitive_at[idx] + values[idx] * (u - breaks[idx])
            }
        }
    }

    /// `∫₀ᵗ F(s) ds`.
    pub fn primitive2(&self, t: f64) -> f64 {
        match self {
            SourceTerm::Constant { value } => 0.5 * value * t * t,
            SourceTerm::Sine { amplitude } => {
                let w = 2.0 * std::f64::consts::PI;
                amplitude * (t - (w * t).sin() / w) / w
            }
            SourceTerm::Piecewise {
                breaks,
                values,
                primitive_at,
                primitive2_at,
            } => {
                let u = t.clamp(0.0, 1.0);
                let idx = breaks.partition_point(|&b| b <= u).saturating_sub(1);
                let idx = idx.min(values.len() - 1);
                let dt = u - breaks[idx];
                primitive2_at[idx] + primitive_at[idx] * dt + 0.5 * values[idx] * dt * dt
            }
        }
    }

    /// `∫₀¹ F`, the flux constant of the homogenized two-point problem.
    pub fn c_star(&self) -> f64 {
        self.primitive2(1.0)
    }

    /// Interior discontinuities of `f` in `(0, 1)`.
    pub fn breakpoints(&self) -> Vec<f64> {
        match self {
            SourceTerm::Piecewise { breaks, .. } => {
                breaks.iter().copied().filter(|&b| b > 0.0).collect()
            }
            _ => Vec::new(),
        }
    }
}

// ---------------------------------------------------------------------------
// Deformation law
// ---------------------------------------------------------------------------

/// Distribution of the per-cell amplitude `X₀` on `[-m, m]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum XDist {
    /// Uniform on `[-m, m]` (centered).
    UniformSym,
    /// Uniform on `[0, m]` (non-centered).
    UniformPos,
    /// `±m` with probability ½ each (centered).
    TwoPoint,
}

impl XDist {
    pub fn mean(self, m: f64) -> f64 {
        match self {
            XDist::UniformSym | XDist::TwoPoint => 0.0,
            XDist::UniformPos => 0.5 * m,
        }
    }

    pub fn variance(self, m: f64) -> f64 {
        match self {
            XDist::UniformSym => m * m / 3.0,
            XDist::UniformPos => m * m / 12.0,
            XDist::TwoPoint => m * m,
        }
    }

    /// Maps a uniform `u ∈ [0, 1)` to a sample.
    pub fn sample(self, m: f64, u: f64) -> f64 {
        match self {
            XDist::UniformSym => m * (2.0 * u - 1.0),
            XDist::UniformPos => m * u,
            XDist::TwoPoint => {
                if u < 0.5 {
                    -m
                } else {
                    m
                }
            }
        }
    }
}

/// 1-periodic shape of the derivative perturbation, normalized to sup-norm 1
/// and scaled by the law amplitude `m`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ShapeFn {
    /// `sin(2πy)`; smooth, zero cell integral.
    Sine,
    /// `+1` on `[0, ½)`, `-1` on `[½, 1)`; makes the deformation piecewise
    /// affine and analytically invertible.
    Haar,
}

impl ShapeFn {
    /// Shape value at `y` (1-periodic), before scaling by `m`.
    pub fn value(self, y: f64) -> f64 {
        let u = fract1(y);
        match self {
            ShapeFn::Sine => (2.0 * std::f64::consts::PI * u).sin(),
            ShapeFn::Haar => {
                if u < 0.5 {
                    1.0
                } else {
                    -1.0
                }
            }
        }
    }

    /// `∫₀ᵘ shape` for `u ∈ [0, 1]`.
    pub fn primitive(self, u: f64) -> f64 {
        match self {
            ShapeFn::Sine => {
                let w = 2.0 * std::f64::consts::PI;
                (1.0 - (w * u).cos()) / w
            }
            ShapeFn::Haar => {
                if u <= 0.5 {
                    u
                } else {
                    1.0 - u
                }
            }
        }
    }

    /// Cell-interior split points for piecewise quadrature: genuine kinks for
    /// the Haar shape, quarter-period curvature control for the sine shape
    /// (keeps 8-point Gauss at ~1e-15 per piece).
    pub fn quadrature_breaks(self) -> &'static [f64] {
        match self {
            ShapeFn::Sine => &[0.25, 0.5, 0.75],
            ShapeFn::Haar => &[0.5],
        }
    }
}

/// Law of the random deformation: amplitude bound `m`, per-cell amplitude
/// distribution, and periodic shape.
///
/// `m = 0` is the degenerate law of the identity map.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiffeoLaw {
    m: f64,
    x_dist: XDist,
    shape: ShapeFn,
}

impl DiffeoLaw {
    pub fn new(m: f64, x_dist: XDist, shape: ShapeFn) -> Result<Self> {
        if !m.is_finite() || !(0.0..1.0).contains(&m) {
            return Err(Error::invalid(format!(
                "deformation amplitude m must satisfy 0 <= m < 1, got {m}"
            )));
        }
        Ok(DiffeoLaw { m, x_dist, shape })
    }

    /// The identity deformation (`m = 0`).
    pub fn identity() -> Self {
        DiffeoLaw {
            m: 0.0,
            x_dist: XDist::UniformSym,
            shape: ShapeFn::Sine,
        }
    }

    pub fn amplitude(&self) -> f64 {
        self.m
    }

    pub fn x_dist(&self) -> XDist {
        self.x_dist
    }

    pub fn shape(&self) -> ShapeFn {
        self.shape
    }

    /// Uniform lower bound of `φ'`: `ν = 1 - m²`.
    pub fn nu(&self) -> f64 {
        1.0 - self.m * self.m
    }

    /// Uniform upper bound of `φ'`: `1 + m²`.
    pub fn m_bound(&self) -> f64 {
        1.0 + self.m * self.m
    }

    pub fn mean_x(&self) -> f64 {
        self.x_dist.mean(self.m)
    }

    pub fn var_x(&self) -> f64 {
        self.x_dist.variance(self.m)
    }

    /// `G(y) = m · shape(y)`.
    pub fn g(&self, y: f64) -> f64 {
        self.m * self.shape.value(y)
    }

    /// `∫₀ᵘ G` for `u ∈ [0, 1]`.
    pub fn g_primitive(&self, u: f64) -> f64 {
        self.m * self.shape.primitive(u)
    }

    /// `∫₀¹ G` over one cell.
    pub fn g_cell_integral(&self) -> f64 {
        self.g_primitive(1.0)
    }

    /// `E[φ(k+1) - φ(k)] = 1 + E(X₀)·∫₀¹G`.
    pub fn mean_increment(&self) -> f64 {
        1.0 + self.mean_x() * self.g_cell_integral()
    }

    /// True when every realization is the identity map.
    pub fn is_deterministic(&self) -> bool {
        self.m == 0.0
    }

    /// Pure per-cell amplitude: a function of `(seed, k)` only.
    pub fn sample_x(&self, seed: u64, k: i64) -> f64 {
        self.x_dist.sample(self.m, unit_f64(mix64(seed, k)))
    }
}

// ---------------------------------------------------------------------------
// Deformation realization
// ---------------------------------------------------------------------------

/// One realization of the random deformation, anchored at `φ(0) = 0`.
///
/// Cell amplitudes are derived statelessly from `(seed, cell index)`, so the
/// realized range is only a cache: queries outside it recompute amplitudes on
/// the fly and extending the range never changes previously realized values.
/// A realized path is immutable and safe to share across workers.
#[derive(Debug, Clone)]
pub struct DiffeoPath {
    law: DiffeoLaw,
    /// `None` for paths built from explicit cells, which are identity
    /// outside their range.
    seed: Option<u64>,
    lo: i64,
    xs: Vec<f64>,
    /// Prefix sums: `sx[i] = Σ_{j<i} xs[j]`, length `xs.len() + 1`.
    sx: Vec<f64>,
}

impl DiffeoPath {
    /// Samples the path over `cells` (a non-empty cache range).
    pub fn sample(law: &DiffeoLaw, cells: Range<i64>, seed: u64) -> Result<Self> {
        if cells.is_empty() {
            return Err(Error::invalid("cell range must be non-empty"));
        }
        let xs: Vec<f64> = cells.clone().map(|k| law.sample_x(seed, k)).collect();
        Ok(Self::with_cells(law, cells.start, Some(seed), xs))
    }

    /// Builds a path from explicit cell amplitudes (oracle and test use).
    pub fn from_cells(law: &DiffeoLaw, start: i64, xs: Vec<f64>) -> Result<Self> {
        if xs.is_empty() {
            return Err(Error::invalid("cell list must be non-empty"));
        }
        if xs.iter().any(|x| x.abs() > law.amplitude() + 1e-15) {
            return Err(Error::invalid("cell amplitude exceeds the law bound m"));
        }
        Ok(Self::with_cells(law, start, None, xs))
    }

    fn with_cells(law: &DiffeoLaw, lo: i64, seed: Option<u64>, xs: Vec<f64>) -> Self {
        let mut sx = Vec::with_capacity(xs.len() + 1);
        let mut acc = 0.0;
        sx.push(0.0);
        for &x in &xs {
            acc += x;
            sx.push(acc);
        }
        DiffeoPath {
            law: *law,
            seed,
            lo,
            xs,
            sx,
        }
    }

    pub fn law(&self) -> &DiffeoLaw {
        &self.law
    }

    /// Cached cell range.
    pub fn cells(&self) -> Range<i64> {
        self.lo..self.lo + self.xs.len() as i64
    }

    /// Amplitude of cell `k` (cached or recomputed).
    pub fn x_coeff(&self, k: i64) -> f64 {
        if k >= self.lo && k < self.lo + self.xs.len() as i64 {
            self.xs[(k - self.lo) as usize]
        } else {
            match self.seed {
                Some(seed) => self.law.sample_x(seed, k),
                None => 0.0,
            }
        }
    }

    /// `Σ_{a ≤ k < b} X_k` (cache-accelerated).
    fn sum_cells(&self, a: i64, b: i64) -> f64 {
        debug_assert!(a <= b);
        let hi = self.lo + self.xs.len() as i64;
        let ca = a.clamp(self.lo, hi);
        let cb = b.clamp(self.lo, hi);
        let mut acc = 0.0;
        if ca < cb {
            acc += self.sx[(cb - self.lo) as usize] - self.sx[(ca - self.lo) as usize];
        }
        for k in a..ca.min(b) {
            acc += self.x_coeff(k);
        }
        for k in cb.max(a)..b {
            acc += self.x_coeff(k);
        }
        acc
    }

    /// `φ` at an integer, via exact cell increments.
    pub fn phi_at_int(&self, n: i64) -> f64 {
        let g_total = self.law.g_cell_integral();
        let sum = if n >= 0 {
            self.sum_cells(0, n)
        } else {
            -self.sum_cells(n, 0)
        };
        n as f64 + g_total * sum
    }

    /// Increment `φ(k+1) - φ(k)`.
    pub fn increment(&self, k: i64) -> f64 {
        1.0 + self.x_coeff(k) * self.law.g_cell_integral()
    }

    /// `φ'(y) = 1 + X_{⌊y⌋} G(y)`, in `[ν, 1 + m²]`.
    pub fn phi_prime(&self, y: f64) -> f64 {
        let k = y.floor() as i64;
        1.0 + self.x_coeff(k) * self.law.g(y)
    }

    /// `φ(y)`, strictly increasing, `φ(0) = 0`.
    pub fn phi(&self, y: f64) -> f64 {
        let n = y.floor();
        let u = y - n;
        let k = n as i64;
        self.phi_at_int(k) + u + self.x_coeff(k) * self.law.g_primitive(u)
    }

    /// Monotone inverse: returns `y` with `|φ(y) - z| ≤ tol·max(1, |z|)`.
    ///
    /// Brackets the containing cell by integer bisection (`φ' ≥ ν > 0`
    /// guarantees a bracket), narrows by bisection to width 1e-3, then
    /// polishes with safeguarded Newton steps.
    pub fn phi_inverse(&self, z: f64, tol: f64) -> Result<f64> {
        if tol.is_nan() || tol <= 0.0 {
            return Err(Error::invalid("inversion tolerance must be positive"));
        }
        let nu = self.law.nu();
        let mb = self.law.m_bound();
        let mut lo = (z / mb).min(z / nu).floor() as i64 - 1;
        let mut hi = (z / mb).max(z / nu).ceil() as i64 + 1;
        if !(self.phi_at_int(lo) <= z && z < self.phi_at_int(hi)) {
            return Err(Error::Solver(format!(
                "inversion bracket failed at z = {z}; path invariant violated"
            )));
        }
        while hi - lo > 1 {
            let mid = lo + (hi - lo) / 2;
            if self.phi_at_int(mid) <= z {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        // Solve φ(lo + u) = z for u in [0, 1].
        let base = self.phi_at_int(lo);
        let xk = self.x_coeff(lo);
        let value = |u: f64| base + u + xk * self.law.g_primitive(u) - z;
        let deriv = |u: f64| 1.0 + xk * self.law.g(lo as f64 + u);
        let (mut ua, mut ub) = (0.0, 1.0);
        while ub - ua > 1e-3 {
            let um = 0.5 * (ua + ub);
            if value(um) <= 0.0 {
                ua = um;
            } else {
                ub = um;
            }
        }
        let target = tol * z.abs().max(1.0);
        let mut u = 0.5 * (ua + ub);
        for _ in 0..100 {
            let fv = value(u);
            if fv.abs() <= target {
                return Ok(lo as f64 + u);
            }
            if fv <= 0.0 {
                ua = u;
            } else {
                ub = u;
            }
            let step = fv / deriv(u);
            let mut next = u - step;
            if !(next > ua && next < ub) {
                next = 0.5 * (ua + ub);
            }
            u = next;
        }
        let fv = value(u);
        if fv.abs() <= target {
            Ok(lo as f64 + u)
        } else {
            Err(Error::Solver(format!(
                "inversion did not reach tolerance at z = {z} (residual {fv:e})"
            )))
        }
    }

}

// ---------------------------------------------------------------------------
// Tensorized deformation (d >= 2)
// ---------------------------------------------------------------------------

/// A d-dimensional deformation built from independent 1D paths per axis:
/// `φ(x)_i = φ_i(x_i)`, so `∇φ` is diagonal everywhere.
#[derive(Debug, Clone)]
pub struct TensorDiffeo {
    axes: Vec<DiffeoPath>,
}

impl TensorDiffeo {
    /// Samples `dim` independent axes over `cells`; each axis seed is
    /// `child_seed(seed, SALT_AXIS, axis)`.
    pub fn sample(law: &DiffeoLaw, dim: usize, cells: Range<i64>, seed: u64) -> Result<Self> {
        if dim == 0 || dim > 2 {
            return Err(Error::invalid("tensor deformation dimension must be 1 or 2"));
        }
        let axes = (0..dim)
            .map(|i| DiffeoPath::sample(law, cells.clone(), child_seed(seed, SALT_AXIS, i as i64)))
            .collect::<Result<Vec<_>>>()?;
        Ok(TensorDiffeo { axes })
    }

    pub fn from_axes(axes: Vec<DiffeoPath>) -> Result<Self> {
        if axes.is_empty() || axes.len() > 2 {
            return Err(Error::invalid("tensor deformation dimension must be 1 or 2"));
        }
        Ok(TensorDiffeo { axes })
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    pub fn axis(&self, i: usize) -> &DiffeoPath {
        &self.axes[i]
    }

    /// Diagonal of `∇φ` at `x` (inactive axes padded with 1).
    pub fn grad_diag(&self, x: [f64; 2]) -> [f64; 2] {
        let mut g = [1.0, 1.0];
        for (i, axis) in self.axes.iter().enumerate() {
            g[i] = axis.phi_prime(x[i]);
        }
        g
    }

    /// `det ∇φ ≥ ν^d`.
    pub fn det_grad(&self, x: [f64; 2]) -> f64 {
        let g = self.grad_diag(x);
        match self.dim() {
            1 => g[0],
            _ => g[0] * g[1],
        }
    }
}

// ---------------------------------------------------------------------------
// Assumption verification
// ---------------------------------------------------------------------------

/// Bounds of a coefficient field, for assumption checks.
pub trait CoefficientBounds {
    fn bounds(&self) -> (f64, f64);
}

impl CoefficientBounds for PeriodicScalarField {
    fn bounds(&self) -> (f64, f64) {
        PeriodicScalarField::bounds(self)
    }
}

impl CoefficientBounds for PeriodicMatrixField {
    fn bounds(&self) -> (f64, f64) {
        PeriodicMatrixField::bounds(self)
    }
}

/// Report of the structural assumptions: non-degeneracy and boundedness of
/// the deformation gradient, coercivity and boundedness of the coefficient.
#[derive(Debug, Clone, Copy)]
pub struct AssumptionReport {
    pub nu: f64,
    pub m_bound: f64,
    pub a_minus: f64,
    pub a_plus: f64,
    pub nondegenerate: bool,
    pub bounded: bool,
    pub coercive: bool,
}

impl AssumptionReport {
    pub fn pass(&self) -> bool {
        self.nondegenerate && self.bounded && self.coercive
    }
}

/// Checks the standing assumptions for a (law, coefficient) pair. Failures
/// are reported, not thrown.
pub fn verify_assumptions(law: &DiffeoLaw, field: &dyn CoefficientBounds) -> AssumptionReport {
    let (a_minus, a_plus) = field.bounds();
    AssumptionReport {
        nu: law.nu(),
        m_bound: law.m_bound(),
        a_minus,
        a_plus,
        nondegenerate: law.nu() > 0.0,
        bounded: law.m_bound().is_finite(),
        coercive: a_minus > 0.0 && a_plus.is_finite(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SALT_REALIZATION;

    fn c1_field() -> PeriodicScalarField {
        PeriodicScalarField::piecewise(vec![0.0, 0.5], vec![1.0, 4.0]).unwrap()
    }

    fn c2_law() -> DiffeoLaw {
        DiffeoLaw::new(0.7, XDist::UniformSym, ShapeFn::Sine).unwrap()
    }

    #[test]
    fn field_eval_and_bounds() {
        let a = c1_field();
        assert_eq!(a.value(0.25), 1.0);
        assert_eq!(a.value(0.75), 4.0);
        assert_eq!(a.value(1.25), 1.0);
        assert_eq!(a.value(-0.25), 4.0);
        assert_eq!(a.bounds(), (1.0, 4.0));
        assert!((a.mean_inverse() - 0.625).abs() < 1e-15);
    }

    #[test]
    fn field_validation() {
        assert!(PeriodicScalarField::piecewise(vec![0.0, 0.5], vec![1.0, 0.0]).is_err());
        assert!(PeriodicScalarField::piecewise(vec![0.1, 0.5], vec![1.0, 2.0]).is_err());
        assert!(PeriodicScalarField::piecewise(vec![0.0, 0.5, 0.4], vec![1.0, 2.0, 3.0]).is_err());
    }

    #[test]
    fn source_primitives() {
        let f = SourceTerm::constant(1.0);
        assert_eq!(f.primitive(0.0), 0.0);
        assert!((f.c_star() - 0.5).abs() < 1e-15);
        let s = SourceTerm::sine(1.0);
        assert!(s.primitive(0.0).abs() < 1e-15);
        assert!((s.primitive(0.5) - 1.0 / std::f64::consts::PI).abs() < 1e-15);
        let pw = SourceTerm::piecewise(vec![0.0, 0.5], vec![2.0, -1.0]).unwrap();
        assert!((pw.primitive(1.0) - 0.5).abs() < 1e-15);
        // F' = f away from breakpoints
        for &t in &[0.2, 0.7] {
            let d = 1e-6;
            let fd = (pw.primitive(t + d) - pw.primitive(t - d)) / (2.0 * d);
            assert!((fd - pw.f(t)).abs() < 1e-9);
        }
    }

    #[test]
    fn law_rejects_bad_amplitude() {
        assert!(DiffeoLaw::new(1.2, XDist::UniformSym, ShapeFn::Sine).is_err());
        assert!(DiffeoLaw::new(1.0, XDist::UniformSym, ShapeFn::Sine).is_err());
        assert!(DiffeoLaw::new(-0.1, XDist::UniformSym, ShapeFn::Sine).is_err());
        assert!(DiffeoLaw::new(0.0, XDist::UniformSym, ShapeFn::Sine).is_ok());
    }

    #[test]
    fn identity_law_path() {
        let law = DiffeoLaw::identity();
        let p = DiffeoPath::sample(&law, 0..10, 99).unwrap();
        assert_eq!(p.phi(2.75), 2.75);
        assert_eq!(p.phi_prime(1.3), 1.0);
        assert_eq!(p.phi_inverse(3.2, 1e-12).unwrap(), 3.2);
    }

    #[test]
    fn stateless_seeding_contract() {
        let law = c2_law();
        let a = DiffeoPath::sample(&law, 0..10, 7).unwrap();
        let b = DiffeoPath::sample(&law, -5..40, 7).unwrap();
        for k in 0..10 {
            assert_eq!(a.x_coeff(k), b.x_coeff(k));
        }
        // out-of-cache queries agree with cached ones
        assert_eq!(a.x_coeff(25), b.x_coeff(25));
    }

    #[test]
    fn phi_closed_form_value() {
        // X₀ = 0.7 forced via explicit cells
        let law = c2_law();
        let p = DiffeoPath::from_cells(&law, 0, vec![0.7, 0.7]).unwrap();
        assert!((p.phi(1.0) - 1.0).abs() < 1e-15, "sine integrates to zero");
        let expect = 0.5 + 0.49 / std::f64::consts::PI;
        assert!((p.phi(0.5) - expect).abs() < 1e-15);
        // derivative formula
        let p2 = DiffeoPath::from_cells(&law, 0, vec![0.5]).unwrap();
        assert!((p2.phi_prime(0.25) - 1.35).abs() < 1e-15);
    }

    #[test]
    fn phi_monotone_and_bounded() {
        let law = c2_law();
        let p = DiffeoPath::sample(&law, 0..50, 3).unwrap();
        let mut prev = p.phi(0.0);
        for i in 1..=2000 {
            let y = i as f64 * 0.02;
            let v = p.phi(y);
            assert!(v > prev);
            prev = v;
            let d = p.phi_prime(y);
            assert!(d >= law.nu() - 1e-12 && d <= law.m_bound() + 1e-12);
        }
    }

    #[test]
    fn inverse_round_trip() {
        for (dist, shape) in [
            (XDist::UniformSym, ShapeFn::Sine),
            (XDist::UniformPos, ShapeFn::Haar),
            (XDist::TwoPoint, ShapeFn::Haar),
        ] {
            let law = DiffeoLaw::new(0.7, dist, shape).unwrap();
            let p = DiffeoPath::sample(&law, -10..60, 11).unwrap();
            let tol = 1e-12;
            for i in 0..200 {
                let y = -5.0 + 60.0 * unit_f64(mix64(1000, i));
                let z = p.phi(y);
                let back = p.phi_inverse(z, tol).unwrap();
                assert!(
                    (back - y).abs() < 10.0 * tol * z.abs().max(1.0),
                    "round trip failed: y={y} back={back}"
                );
            }
            // closed-form inverse example
            let pf = DiffeoPath::from_cells(&law, 0, vec![0.7]).unwrap();
            if shape == ShapeFn::Sine {
                let z = 0.5 + 0.49 / std::f64::consts::PI;
                assert!((pf.phi_inverse(z, 1e-12).unwrap() - 0.5).abs() < 1e-11);
            }
        }
    }

    #[test]
    fn haar_inverse_matches_affine_oracle() {
        // piecewise affine: closed-form inverse on each half-cell
        let law = DiffeoLaw::new(0.5, XDist::TwoPoint, ShapeFn::Haar).unwrap();
        let p = DiffeoPath::from_cells(&law, 0, vec![0.5, -0.5]).unwrap();
        // cell 0: slope 1.25 on [0, .5), slope 0.75 on [.5, 1)
        let z = 0.3;
        let oracle = z / 1.25;
        assert!((p.phi_inverse(z, 1e-13).unwrap() - oracle).abs() < 1e-12);
        let z2 = 1.25 * 0.5 + 0.75 * 0.3; // φ(0.8)
        assert!((p.phi_inverse(z2, 1e-13).unwrap() - 0.8).abs() < 1e-12);
    }

    #[test]
    fn increments_are_stationary_ks() {
        // two-sample KS between D_0 and D_3 over resampled paths, and between
        // Y-like integrals; with the zero-mean shapes D_k ≡ 1, so exercise the
        // distributional check on the mid-cell value φ(k + 1/2) - φ(k) instead,
        // which does vary with X_k.
        let law = c2_law();
        let n = 10_000;
        let mut s0: Vec<f64> = Vec::with_capacity(n);
        let mut s3: Vec<f64> = Vec::with_capacity(n);
        for i in 0..n {
            let seed = child_seed(12345, SALT_REALIZATION, i as i64);
            let p = DiffeoPath::sample(&law, 0..5, seed).unwrap();
            s0.push(p.phi(0.5) - p.phi_at_int(0));
            s3.push(p.phi(3.5) - p.phi_at_int(3));
            // whole-cell increments are identically 1 for zero-mean shapes
            assert!((p.increment(0) - 1.0).abs() < 1e-15);
            assert!((p.increment(3) - 1.0).abs() < 1e-15);
        }
        let d = crate::mcstats::ks_two_sample(&mut s0, &mut s3);
        let crit = 1.6276 * (2.0 / n as f64).sqrt();
        assert!(d < crit, "KS distance {d} over critical {crit}");
    }

    #[test]
    fn sample_mean_of_cell_amplitudes() {
        // 10⁴ cells of a centered uniform law: the sample mean stays within
        // 4·sd/√n of zero
        let law = c2_law();
        let p = DiffeoPath::sample(&law, 0..10_000, 31).unwrap();
        let mean: f64 = (0..10_000).map(|k| p.x_coeff(k)).sum::<f64>() / 1e4;
        let bound = 4.0 * (0.7 / 3f64.sqrt()) / 100.0;
        assert!(mean.abs() < bound, "sample mean {mean} vs bound {bound}");
    }

    #[test]
    fn mean_increment_matches_law() {
        let law = DiffeoLaw::new(0.7, XDist::UniformPos, ShapeFn::Sine).unwrap();
        assert_eq!(law.mean_increment(), 1.0); // zero-mean shape
        let n = 4000;
        let mut sum = 0.0;
        for i in 0..n {
            let seed = child_seed(777, SALT_REALIZATION, i as i64);
            let p = DiffeoPath::sample(&law, 0..1, seed).unwrap();
            sum += p.increment(0);
        }
        let emp = sum / n as f64;
        // exact for zero-mean shapes: increments are deterministic
        assert!((emp - law.mean_increment()).abs() < 1e-12);
    }

    #[test]
    fn tensor_determinant_bounds() {
        let law = c2_law();
        let t = TensorDiffeo::sample(&law, 2, 0..8, 5).unwrap();
        let lo = law.nu() * law.nu();
        let hi = law.m_bound() * law.m_bound();
        for i in 0..400 {
            let x = [
                8.0 * unit_f64(mix64(1, i)),
                8.0 * unit_f64(mix64(2, i)),
            ];
            let det = t.det_grad(x);
            assert!(det >= lo - 1e-12 && det <= hi + 1e-12);
            let g = t.grad_diag(x);
            // diagonal inverse times gradient is the identity, trivially but
            // exactly
            assert!((g[0] * (1.0 / g[0]) - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn assumption_reports() {
        let report = verify_assumptions(&c2_law(), &c1_field());
        assert!((report.nu - 0.51).abs() < 1e-15);
        assert!((report.m_bound - 1.49).abs() < 1e-15);
        assert_eq!(report.a_minus, 1.0);
        assert_eq!(report.a_plus, 4.0);
        assert!(report.pass());
    }

    #[test]
    fn matrix_field_structures() {
        let lam = PeriodicMatrixField::laminate(0, c1_field()).unwrap();
        assert_eq!(lam.scalar_at([0.25, 0.9]), 1.0);
        assert_eq!(lam.scalar_at([0.75, 0.1]), 4.0);
        let cb = PeriodicMatrixField::checkerboard(1.0, 4.0).unwrap();
        assert_eq!(cb.scalar_at([0.25, 0.25]), 1.0);
        assert_eq!(cb.scalar_at([0.75, 0.25]), 4.0);
        assert_eq!(cb.scalar_at([0.75, 0.75]), 1.0);
        assert_eq!(cb.scalar_at([1.25, 0.75]), 4.0);
        let id = PeriodicMatrixField::identity();
        assert_eq!(id.value([0.3, 0.9]), [[1.0, 0.0], [0.0, 1.0]]);
    }
}
