//! Tiny fixed-size matrix helpers for the d ≤ 2 effective-tensor algebra.
//!
//! Matrices are `[[f64; 2]; 2]` with an explicit active dimension `d`; in the
//! 1D case only the `[0][0]` entry is meaningful and the rest is
//! identity-padded.

pub type Mat2 = [[f64; 2]; 2];

pub fn identity() -> Mat2 {
    [[1.0, 0.0], [0.0, 1.0]]
}

pub fn zero() -> Mat2 {
    [[0.0; 2]; 2]
}

pub fn scale(m: Mat2, s: f64) -> Mat2 {
    [
        [m[0][0] * s, m[0][1] * s],
        [m[1][0] * s, m[1][1] * s],
    ]
}

pub fn det(d: usize, m: Mat2) -> f64 {
    match d {
        1 => m[0][0],
        _ => m[0][0] * m[1][1] - m[0][1] * m[1][0],
    }
}

/// Adjugate: `adj(M) · M = det(M) · Id`. In 1D the adjugate is 1.
pub fn adjugate(d: usize, m: Mat2) -> Mat2 {
    match d {
        1 => identity(),
        _ => [[m[1][1], -m[0][1]], [-m[1][0], m[0][0]]],
    }
}

pub fn transpose(m: Mat2) -> Mat2 {
    [[m[0][0], m[1][0]], [m[0][1], m[1][1]]]
}

pub fn sym_part(m: Mat2) -> Mat2 {
    [
        [m[0][0], 0.5 * (m[0][1] + m[1][0])],
        [0.5 * (m[0][1] + m[1][0]), m[1][1]],
    ]
}

/// Largest absolute asymmetry `max |M - Mᵀ|`.
pub fn asymmetry(d: usize, m: Mat2) -> f64 {
    if d < 2 {
        0.0
    } else {
        (m[0][1] - m[1][0]).abs()
    }
}

/// Entrywise `max |A - B|` over the active `d×d` block.
pub fn max_abs_diff(d: usize, a: Mat2, b: Mat2) -> f64 {
    let mut m: f64 = 0.0;
    for i in 0..d {
        for j in 0..d {
            m = m.max((a[i][j] - b[i][j]).abs());
        }
    }
    m
}

/// Eigenvalues of the symmetric part, ascending. For `d = 1`, both slots hold
/// the single entry.
pub fn sym_eigenvalues(d: usize, m: Mat2) -> [f64; 2] {
    if d == 1 {
        return [m[0][0], m[0][0]];
    }
    let s = sym_part(m);
    let tr = s[0][0] + s[1][1];
    let dd = s[0][0] * s[1][1] - s[0][1] * s[1][0];
    let disc = (0.25 * tr * tr - dd).max(0.0).sqrt();
    [0.5 * tr - disc, 0.5 * tr + disc]
}
