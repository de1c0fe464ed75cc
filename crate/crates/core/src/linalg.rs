//! Fixed-capacity dense helpers for the small (n <= 3) tensors that show up in
//! every stencil evaluation. Heap-free so the hot loops stay allocation free.

pub const MAX_DIM: usize = 3;

pub type Vector = [f64; MAX_DIM];
pub type Matrix = [[f64; MAX_DIM]; MAX_DIM];
/// `gamma[k][i][j]` holds Γ^k_ij.
pub type Christoffels = [[[f64; MAX_DIM]; MAX_DIM]; MAX_DIM];

pub const ZERO_VEC: Vector = [0.0; MAX_DIM];
pub const ZERO_MAT: Matrix = [[0.0; MAX_DIM]; MAX_DIM];
pub const ZERO_GAMMA: Christoffels = [[[0.0; MAX_DIM]; MAX_DIM]; MAX_DIM];

pub fn identity(n: usize) -> Matrix {
    let mut m = ZERO_MAT;
    for (i, row) in m.iter_mut().enumerate().take(n) {
        row[i] = 1.0;
    }
    m
}

/// Lower Cholesky factor of the leading `n x n` block, or `None` when the
/// block is not positive definite.
pub fn cholesky(a: &Matrix, n: usize) -> Option<Matrix> {
    let mut l = ZERO_MAT;
    for i in 0..n {
        for j in 0..=i {
            let mut s = a[i][j];
            for k in 0..j {
                s -= l[i][k] * l[j][k];
            }
            if i == j {
                if !(s > 0.0) || !s.is_finite() {
                    return None;
                }
                l[i][i] = s.sqrt();
            } else {
                l[i][j] = s / l[j][j];
            }
        }
    }
    Some(l)
}

/// Inverse and `sqrt(det)` of an SPD block via its Cholesky factor.
pub fn spd_inverse(a: &Matrix, n: usize) -> Option<(Matrix, f64)> {
    let l = cholesky(a, n)?;
    let mut sqrt_det = 1.0;
    for i in 0..n {
        sqrt_det *= l[i][i];
    }
    // Invert L by forward substitution, then A^{-1} = L^{-T} L^{-1}.
    let mut linv = ZERO_MAT;
    for j in 0..n {
        linv[j][j] = 1.0 / l[j][j];
        for i in (j + 1)..n {
            let mut s = 0.0;
            for k in j..i {
                s -= l[i][k] * linv[k][j];
            }
            linv[i][j] = s / l[i][i];
        }
    }
    let mut inv = ZERO_MAT;
    for i in 0..n {
        for j in 0..=i {
            let mut s = 0.0;
            for k in i.max(j)..n {
                s += linv[k][i] * linv[k][j];
            }
            inv[i][j] = s;
            inv[j][i] = s;
        }
    }
    Some((inv, sqrt_det))
}

/// Largest eigenvalue of a symmetric block.
pub fn sym_max_eigenvalue(a: &Matrix, n: usize) -> f64 {
    let m = nalgebra::DMatrix::from_fn(n, n, |i, j| a[i][j]);
    m.symmetric_eigenvalues().max()
}

pub fn mat_vec(a: &Matrix, x: &Vector, n: usize) -> Vector {
    let mut y = ZERO_VEC;
    for i in 0..n {
        let mut s = 0.0;
        for j in 0..n {
            s += a[i][j] * x[j];
        }
        y[i] = s;
    }
    y
}

pub fn dot(x: &Vector, y: &Vector, n: usize) -> f64 {
    let mut s = 0.0;
    for i in 0..n {
        s += x[i] * y[i];
    }
    s
}

/// `sum_ij a[i][j] * b[i][j]` over the leading block.
pub fn contract(a: &Matrix, b: &Matrix, n: usize) -> f64 {
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            s += a[i][j] * b[i][j];
        }
    }
    s
}

pub fn to_matrix(rows: &[Vec<f64>]) -> Matrix {
    let mut m = ZERO_MAT;
    for (i, row) in rows.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            m[i][j] = *v;
        }
    }
    m
}

pub fn from_matrix(m: &Matrix, n: usize) -> Vec<Vec<f64>> {
    (0..n).map(|i| m[i][..n].to_vec()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inverse_of_spd_block() {
        let a = [[4.0, 1.0, 0.5], [1.0, 3.0, 0.2], [0.5, 0.2, 2.0]];
        let (inv, sd) = spd_inverse(&a, 3).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let mut s = 0.0;
                for k in 0..3 {
                    s += a[i][k] * inv[k][j];
                }
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((s - want).abs() < 1e-14);
            }
        }
        let det = 4.0 * (3.0 * 2.0 - 0.04) - 1.0 * (2.0 - 0.1) + 0.5 * (0.2 - 1.5);
        assert!((sd * sd - det).abs() < 1e-12);
    }

    #[test]
    fn indefinite_rejected() {
        let a = [[1.0, 2.0, 0.0], [2.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
        assert!(cholesky(&a, 2).is_none());
    }

    #[test]
    fn max_eigenvalue_diag() {
        let a = [[2.0, 0.0, 0.0], [0.0, 5.0, 0.0], [0.0, 0.0, 9.0]];
        assert!((sym_max_eigenvalue(&a, 2) - 5.0).abs() < 1e-12);
    }
}
