//! Periodic first-order finite elements for the truncated corrector problem
//! on `Q_N = (0, N)^d`, `d ∈ {1, 2}`.
//!
//! The weak form reads: find a `Q_N`-periodic `w` with
//!
//! ```text
//! ∫_{Q_N} det(∇φ) (∇v)ᵀ (∇φ)⁻¹ A (p + (∇φ)⁻ᵀ ∇w) = 0   for all periodic v,
//! ```
//!
//! i.e. a symmetric positive semidefinite system with the effective element
//! matrix `C = det(∇φ)(∇φ)⁻¹A(∇φ)⁻ᵀ` and load `−det(∇φ)(∇φ)⁻¹A p`. The
//! deformation is tensorized, so `∇φ` is diagonal at every quadrature point.
//! Elements are uniform tensor-product Q1 with `2^d`-point Gauss quadrature;
//! coefficients are sampled pointwise at quadrature points. The constant
//! nullspace is removed by mean projection, keeping the system symmetric for
//! conjugate gradients with Jacobi preconditioning.

use crate::mat::Mat2;
use crate::model::{PeriodicMatrixField, TensorDiffeo};
use crate::{Error, Result};

/// Hard cap on unknowns.
const MAX_DOFS: usize = 10_000_000;

/// Gauss points of the 2-point rule on `[0, 1]`.
const GP: [f64; 2] = [
    0.5 - 0.288_675_134_594_812_9, // (1 - 1/√3)/2
    0.5 + 0.288_675_134_594_812_9,
];

/// Uniform periodic tensor mesh: `n_cells` unit cells per side, `refine`
/// elements per unit cell per side.
#[derive(Debug, Clone, Copy)]
pub struct PeriodicMesh {
    pub d: usize,
    pub n_cells: usize,
    pub refine: usize,
    /// Nodes (and elements) per side after periodic identification.
    pub nodes_per_side: usize,
    /// Element size `1/refine`.
    pub h: f64,
}

pub fn build_mesh(d: usize, n_cells: usize, refine: usize) -> Result<PeriodicMesh> {
    if !(1..=2).contains(&d) {
        return Err(Error::invalid("mesh dimension must be 1 or 2"));
    }
    if n_cells == 0 || refine == 0 {
        return Err(Error::invalid("mesh sizes must be at least 1"));
    }
    let n = n_cells * refine;
    let dofs = n.pow(d as u32);
    if dofs > MAX_DOFS {
        return Err(Error::invalid(format!(
            "mesh would have {dofs} unknowns (cap {MAX_DOFS})"
        )));
    }
    Ok(PeriodicMesh {
        d,
        n_cells,
        refine,
        nodes_per_side: n,
        h: 1.0 / refine as f64,
    })
}

impl PeriodicMesh {
    pub fn dofs(&self) -> usize {
        self.nodes_per_side.pow(self.d as u32)
    }

    pub fn elements(&self) -> usize {
        self.dofs()
    }

    pub fn quad_points_per_element(&self) -> usize {
        1 << self.d
    }

    #[inline]
    fn node2(&self, ix: usize, iy: usize) -> usize {
        let n = self.nodes_per_side;
        (iy % n) * n + (ix % n)
    }

    /// Physical coordinates of quadrature point `q` of element `e`.
    pub fn quad_point(&self, e: usize, q: usize) -> [f64; 2] {
        let n = self.nodes_per_side;
        match self.d {
            1 => [(e as f64 + GP[q]) * self.h, 0.0],
            _ => {
                let (ex, ey) = (e % n, e / n);
                let (qx, qy) = (q % 2, q / 2);
                [
                    (ex as f64 + GP[qx]) * self.h,
                    (ey as f64 + GP[qy]) * self.h,
                ]
            }
        }
    }

    /// Node positions (for field dumps).
    pub fn node_coords(&self, i: usize) -> [f64; 2] {
        let n = self.nodes_per_side;
        match self.d {
            1 => [i as f64 * self.h, 0.0],
            _ => [(i % n) as f64 * self.h, (i / n) as f64 * self.h],
        }
    }
}

// ---------------------------------------------------------------------------
// Coefficient sampling
// ---------------------------------------------------------------------------

/// Per-quadrature-point data of one realization over the mesh.
#[derive(Debug, Clone, Copy)]
pub struct QuadData {
    pub det: f64,
    /// Diagonal of `(∇φ)⁻¹`.
    pub inv_g: [f64; 2],
    /// Coefficient matrix at the point.
    pub a: Mat2,
}

#[derive(Debug, Clone)]
pub struct CoefficientSample {
    pub mesh: PeriodicMesh,
    /// Indexed `e * qpe + q`.
    pub data: Vec<QuadData>,
}

/// Evaluates `∇φ`, its inverse and determinant, and the coefficient matrix
/// pointwise at every quadrature point.
pub fn sample_coefficients(
    mesh: &PeriodicMesh,
    diffeo: &TensorDiffeo,
    a_per: &PeriodicMatrixField,
) -> Result<CoefficientSample> {
    if diffeo.dim() != mesh.d {
        return Err(Error::invalid("deformation dimension does not match mesh"));
    }
    let law = diffeo.axis(0).law();
    let nu_d = law.nu().powi(mesh.d as i32);
    let (a_minus, _) = a_per.bounds();
    if a_minus <= 0.0 {
        return Err(Error::InvalidField("coefficient is not coercive".into()));
    }
    let qpe = mesh.quad_points_per_element();
    let mut data = Vec::with_capacity(mesh.elements() * qpe);
    for e in 0..mesh.elements() {
        for q in 0..qpe {
            let x = mesh.quad_point(e, q);
            let g = diffeo.grad_diag(x);
            let det = if mesh.d == 1 { g[0] } else { g[0] * g[1] };
            if det < nu_d - 1e-12 {
                return Err(Error::Solver(format!(
                    "deformation determinant {det} below the uniform bound {nu_d}"
                )));
            }
            debug_assert!((g[0] * (1.0 / g[0]) - 1.0).abs() < 1e-12);
            data.push(QuadData {
                det,
                inv_g: [1.0 / g[0], 1.0 / g[1]],
                a: a_per.value(x),
            });
        }
    }
    Ok(CoefficientSample { mesh: *mesh, data })
}

impl CoefficientSample {
    #[inline]
    pub fn at(&self, e: usize, q: usize) -> &QuadData {
        &self.data[e * self.mesh.quad_points_per_element() + q]
    }

    /// Effective element matrix `C = det·(∇φ)⁻¹A(∇φ)⁻ᵀ` at a point.
    pub fn effective(&self, e: usize, q: usize) -> Mat2 {
        let qd = self.at(e, q);
        let mut c = [[0.0; 2]; 2];
        for i in 0..self.mesh.d {
            for j in 0..self.mesh.d {
                c[i][j] = qd.det * qd.inv_g[i] * qd.a[i][j] * qd.inv_g[j];
            }
        }
        c
    }
}

// ---------------------------------------------------------------------------
// Stencil matrix and preconditioned CG
// ---------------------------------------------------------------------------

/// Symmetric stencil matrix on the periodic grid: 3 weights per row in 1D,
/// 9 in 2D, with a fixed neighbor ordering.
pub struct StencilMatrix {
    mesh: PeriodicMesh,
    w: Vec<[f64; 9]>,
}

impl StencilMatrix {
    fn zero(mesh: PeriodicMesh) -> Self {
        StencilMatrix {
            mesh,
            w: vec![[0.0; 9]; mesh.dofs()],
        }
    }

    pub fn apply(&self, x: &[f64], y: &mut [f64]) {
        let n = self.mesh.nodes_per_side;
        match self.mesh.d {
            1 => {
                for i in 0..n {
                    let row = &self.w[i];
                    let left = (i + n - 1) % n;
                    let right = (i + 1) % n;
                    y[i] = row[0] * x[left] + row[1] * x[i] + row[2] * x[right];
                }
            }
            _ => {
                for iy in 0..n {
                    for ix in 0..n {
                        let i = iy * n + ix;
                        let row = &self.w[i];
                        let xm = (ix + n - 1) % n;
                        let xp = (ix + 1) % n;
                        let ym = (iy + n - 1) % n;
                        let yp = (iy + 1) % n;
                        y[i] = row[0] * x[ym * n + xm]
                            + row[1] * x[ym * n + ix]
                            + row[2] * x[ym * n + xp]
                            + row[3] * x[iy * n + xm]
                            + row[4] * x[i]
                            + row[5] * x[iy * n + xp]
                            + row[6] * x[yp * n + xm]
                            + row[7] * x[yp * n + ix]
                            + row[8] * x[yp * n + xp];
                    }
                }
            }
        }
    }

    fn diagonal(&self) -> Vec<f64> {
        let c = if self.mesh.d == 1 { 1 } else { 4 };
        self.w.iter().map(|r| r[c]).collect()
    }

    #[inline]
    fn add(&mut self, row: usize, slot: usize, v: f64) {
        self.w[row][slot] += v;
    }
}

fn subtract_mean(x: &mut [f64]) {
    let m = crate::quad::compensated_sum(x.iter().copied()) / x.len() as f64;
    for v in x.iter_mut() {
        *v -= m;
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    crate::quad::compensated_sum(a.iter().zip(b).map(|(x, y)| x * y))
}

/// Jacobi-preconditioned conjugate gradients on the mean-zero subspace.
fn pcg(
    mat: &StencilMatrix,
    b: &[f64],
    tol: f64,
    max_iter: usize,
) -> Result<(Vec<f64>, f64, usize)> {
    let n = b.len();
    let diag = mat.diagonal();
    if diag.iter().any(|&d| d <= 0.0) {
        return Err(Error::Solver("system diagonal is not positive".into()));
    }
    let mut b = b.to_vec();
    subtract_mean(&mut b);
    let b_norm = dot(&b, &b).sqrt();
    if b_norm == 0.0 {
        return Ok((vec![0.0; n], 0.0, 0));
    }
    let mut x = vec![0.0; n];
    let mut r = b.clone();
    let mut z: Vec<f64> = r.iter().zip(&diag).map(|(v, d)| v / d).collect();
    subtract_mean(&mut z);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![0.0; n];
    for it in 0..max_iter {
        mat.apply(&p, &mut ap);
        let pap = dot(&p, &ap);
        if pap <= 0.0 {
            return Err(Error::Solver(
                "conjugate gradients met a non-positive curvature direction".into(),
            ));
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        subtract_mean(&mut r);
        let r_norm = dot(&r, &r).sqrt();
        if r_norm <= tol * b_norm {
            subtract_mean(&mut x);
            return Ok((x, r_norm / b_norm, it + 1));
        }
        for i in 0..n {
            z[i] = r[i] / diag[i];
        }
        subtract_mean(&mut z);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    let r_norm = dot(&r, &r).sqrt();
    Err(Error::Solver(format!(
        "conjugate gradients did not converge in {max_iter} iterations \
         (relative residual {:.3e})",
        r_norm / b_norm
    )))
}

// ---------------------------------------------------------------------------
// Corrector solve
// ---------------------------------------------------------------------------

/// A solved periodic corrector for one direction.
#[derive(Debug, Clone)]
pub struct CorrectorSolution {
    pub direction: usize,
    /// Nodal values, mean zero over the torus.
    pub nodal: Vec<f64>,
    /// Achieved relative residual.
    pub residual: f64,
    pub iterations: usize,
}

/// Reference-element basis gradient of local node `a` at quadrature point
/// `q`, divided by `h` (2D).
fn grad2(a: usize, q: usize, h: f64) -> [f64; 2] {
    let (ax, ay) = (a % 2, a / 2);
    let (qx, qy) = (q % 2, q / 2);
    let lx = if ax == 0 { 1.0 - GP[qx] } else { GP[qx] };
    let ly = if ay == 0 { 1.0 - GP[qy] } else { GP[qy] };
    let dx = if ax == 0 { -1.0 } else { 1.0 };
    let dy = if ay == 0 { -1.0 } else { 1.0 };
    [dx * ly / h, dy * lx / h]
}

/// Assembles the stiffness matrix and the direction loads in one sweep.
fn assemble(
    coeff: &CoefficientSample,
    directions: &[usize],
) -> (StencilMatrix, Vec<Vec<f64>>) {
    let mesh = coeff.mesh;
    let n = mesh.nodes_per_side;
    let mut mat = StencilMatrix::zero(mesh);
    let mut loads = vec![vec![0.0; mesh.dofs()]; directions.len()];
    match mesh.d {
        1 => {
            let wq = 0.5 * mesh.h; // reference weight × measure
            for e in 0..n {
                for q in 0..2 {
                    let qd = coeff.at(e, q);
                    let c00 = qd.det * qd.inv_g[0] * qd.a[0][0] * qd.inv_g[0];
                    let l0 = qd.det * qd.inv_g[0] * qd.a[0][0];
                    for a in 0..2 {
                        let ga = if a == 0 { -1.0 } else { 1.0 } / mesh.h;
                        let row = (e + a) % n;
                        for b in 0..2 {
                            let gb = if b == 0 { -1.0 } else { 1.0 } / mesh.h;
                            // slot: b − a + 1
                            let slot = (b as i64 - a as i64 + 1) as usize;
                            mat.add(row, slot, wq * ga * c00 * gb);
                        }
                        for (li, load) in loads.iter_mut().enumerate() {
                            debug_assert_eq!(directions[li], 0);
                            load[row] -= wq * ga * l0;
                        }
                    }
                }
            }
        }
        _ => {
            let wq = 0.25 * mesh.h * mesh.h;
            for e in 0..mesh.elements() {
                let (ex, ey) = (e % n, e / n);
                for q in 0..4 {
                    let qd = coeff.at(e, q);
                    let c = coeff.effective(e, q);
                    // det·(∇φ)⁻¹·A columns for the loads
                    let mut lcol = [[0.0; 2]; 2];
                    for i in 0..2 {
                        for j in 0..2 {
                            lcol[i][j] = qd.det * qd.inv_g[i] * qd.a[i][j];
                        }
                    }
                    let grads: [[f64; 2]; 4] =
                        std::array::from_fn(|a| grad2(a, q, mesh.h));
                    for a in 0..4 {
                        let (ax, ay) = (a % 2, a / 2);
                        let row = mesh.node2(ex + ax, ey + ay);
                        let ga = grads[a];
                        for b in 0..4 {
                            let (bx, by) = (b % 2, b / 2);
                            let gb = grads[b];
                            let v = wq
                                * (ga[0] * (c[0][0] * gb[0] + c[0][1] * gb[1])
                                    + ga[1] * (c[1][0] * gb[0] + c[1][1] * gb[1]));
                            let slot = ((by as i64 - ay as i64 + 1) * 3
                                + (bx as i64 - ax as i64 + 1))
                                as usize;
                            mat.add(row, slot, v);
                        }
                        for (li, load) in loads.iter_mut().enumerate() {
                            let p = directions[li];
                            load[row] -= wq * (ga[0] * lcol[0][p] + ga[1] * lcol[1][p]);
                        }
                    }
                }
            }
        }
    }
    (mat, loads)
}

/// Solves the periodic corrector problem for basis direction `p`.
pub fn solve_corrector(
    coeff: &CoefficientSample,
    direction: usize,
    tol: f64,
) -> Result<CorrectorSolution> {
    if direction >= coeff.mesh.d {
        return Err(Error::invalid("corrector direction out of range"));
    }
    let (mat, loads) = assemble(coeff, &[direction]);
    solve_with(&mat, &loads[0], coeff.mesh, direction, tol)
}

fn solve_with(
    mat: &StencilMatrix,
    load: &[f64],
    mesh: PeriodicMesh,
    direction: usize,
    tol: f64,
) -> Result<CorrectorSolution> {
    let max_iter = (50.0 * (mesh.dofs() as f64).sqrt()).ceil() as usize;
    let (nodal, residual, iterations) = pcg(mat, load, tol, max_iter.max(100))?;
    Ok(CorrectorSolution {
        direction,
        nodal,
        residual,
        iterations,
    })
}

/// Solves all `d` correctors reusing one assembly.
pub fn solve_all_correctors(
    coeff: &CoefficientSample,
    tol: f64,
) -> Result<Vec<CorrectorSolution>> {
    let dirs: Vec<usize> = (0..coeff.mesh.d).collect();
    let (mat, loads) = assemble(coeff, &dirs);
    dirs.iter()
        .map(|&p| solve_with(&mat, &loads[p], coeff.mesh, p, tol))
        .collect()
}

/// Gradient of a nodal field at quadrature point `q` of element `e`.
pub fn gradient_at(mesh: &PeriodicMesh, nodal: &[f64], e: usize, q: usize) -> [f64; 2] {
    let n = mesh.nodes_per_side;
    match mesh.d {
        1 => {
            let v0 = nodal[e % n];
            let v1 = nodal[(e + 1) % n];
            [(v1 - v0) / mesh.h, 0.0]
        }
        _ => {
            let (ex, ey) = (e % n, e / n);
            let mut g = [0.0, 0.0];
            for a in 0..4 {
                let (ax, ay) = (a % 2, a / 2);
                let v = nodal[mesh.node2(ex + ax, ey + ay)];
                let ga = grad2(a, q, mesh.h);
                g[0] += v * ga[0];
                g[1] += v * ga[1];
            }
            g
        }
    }
}

/// Weak-form residual `‖K w − b‖ / ‖b‖` of a solution (Galerkin check).
pub fn weak_residual(
    coeff: &CoefficientSample,
    sol: &CorrectorSolution,
) -> f64 {
    let (mat, loads) = assemble(coeff, &[sol.direction]);
    let mut kw = vec![0.0; sol.nodal.len()];
    mat.apply(&sol.nodal, &mut kw);
    let mut b = loads[0].clone();
    subtract_mean(&mut b);
    let num = dot(
        &kw.iter().zip(&b).map(|(a, c)| a - c).collect::<Vec<_>>(),
        &kw.iter().zip(&b).map(|(a, c)| a - c).collect::<Vec<_>>(),
    )
    .sqrt();
    let den = dot(&b, &b).sqrt();
    if den == 0.0 {
        num
    } else {
        num / den
    }
}
