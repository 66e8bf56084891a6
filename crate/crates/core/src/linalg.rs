//! Symmetric eigen-decomposition for small fixed-size matrices by cyclic
//! Jacobi rotations.

/// Result of a symmetric eigen-decomposition. `values[k]` pairs with column
/// `k` of `vectors` (`vectors[row][k]`); pairs are sorted by descending
/// eigenvalue.
#[derive(Debug, Clone, Copy)]
pub struct SymEigen<const N: usize> {
    pub values: [f64; N],
    pub vectors: [[f64; N]; N],
    pub sweeps: usize,
}

impl<const N: usize> SymEigen<N> {
    pub fn vector(&self, k: usize) -> [f64; N] {
        std::array::from_fn(|r| self.vectors[r][k])
    }
}

const MAX_SWEEPS: usize = 100;

fn off_diagonal_norm<const N: usize>(a: &[[f64; N]; N]) -> f64 {
    let mut s = 0.0;
    for (p, row) in a.iter().enumerate() {
        for (q, v) in row.iter().enumerate() {
            if p != q {
                s += v * v;
            }
        }
    }
    s.sqrt()
}

/// Diagonalizes the symmetric matrix `a` until the off-diagonal Frobenius
/// norm drops below `tol`, or until a full sweep finds nothing left to
/// rotate at working precision.
///
/// Only the upper triangle of `a` is read.
pub fn jacobi_eigen<const N: usize>(a: &[[f64; N]; N], tol: f64) -> SymEigen<N> {
    let mut m = [[0.0; N]; N];
    for p in 0..N {
        for q in p..N {
            m[p][q] = a[p][q];
            m[q][p] = a[p][q];
        }
    }
    let mut v = [[0.0; N]; N];
    for (i, row) in v.iter_mut().enumerate() {
        row[i] = 1.0;
    }

    let mut sweeps = 0;
    while sweeps < MAX_SWEEPS && off_diagonal_norm(&m) >= tol {
        sweeps += 1;
        let mut rotated = false;
        for p in 0..N {
            for q in (p + 1)..N {
                let apq = m[p][q];
                if apq == 0.0 {
                    continue;
                }
                let app = m[p][p];
                let aqq = m[q][q];
                // Element already negligible against both diagonal entries.
                if app.abs() + apq.abs() == app.abs() && aqq.abs() + apq.abs() == aqq.abs() {
                    m[p][q] = 0.0;
                    m[q][p] = 0.0;
                    continue;
                }
                rotated = true;
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..N {
                    let mkp = m[k][p];
                    let mkq = m[k][q];
                    m[k][p] = c * mkp - s * mkq;
                    m[k][q] = s * mkp + c * mkq;
                }
                for k in 0..N {
                    let mpk = m[p][k];
                    let mqk = m[q][k];
                    m[p][k] = c * mpk - s * mqk;
                    m[q][k] = s * mpk + c * mqk;
                }
                m[p][q] = 0.0;
                m[q][p] = 0.0;
                for row in v.iter_mut() {
                    let vp = row[p];
                    let vq = row[q];
                    row[p] = c * vp - s * vq;
                    row[q] = s * vp + c * vq;
                }
            }
        }
        if !rotated {
            break;
        }
    }

    let mut order: [usize; N] = std::array::from_fn(|i| i);
    order.sort_by(|&i, &j| m[j][j].total_cmp(&m[i][i]).then(i.cmp(&j)));
    let values = std::array::from_fn(|k| m[order[k]][order[k]]);
    let vectors = std::array::from_fn(|r| std::array::from_fn(|k| v[r][order[k]]));
    SymEigen { values, vectors, sweeps }
}
