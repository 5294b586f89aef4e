//! Jacobi routines for the small dense problems the statistics need.
//!
//! Sequences are tens of tokens long, so O(n^3) sweeps are cheap and Jacobi's
//! high relative accuracy on small eigenvalues matters more than speed: the
//! log-determinant is dominated by the smallest ones.

use alloc::vec::Vec;

use crate::trace::Matrix;

const MAX_SWEEPS: usize = 80;

fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0; 4];
    let (ca, ra) = (a.chunks_exact(4), a.chunks_exact(4).remainder());
    let rb = b.chunks_exact(4).remainder();
    for (x, y) in ca.zip(b.chunks_exact(4)) {
        for k in 0..4 {
            acc[k] += x[k] * y[k];
        }
    }
    let tail: f64 = ra.iter().zip(rb).map(|(x, y)| x * y).sum();
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// Squared singular values of `vectors` (rows of a `k x len` buffer) via
/// one-sided (Hestenes) Jacobi: rotate pairs of rows until all rows are
/// mutually orthogonal; the squared row norms are then the eigenvalues of the
/// row Gram matrix.
fn hestenes(mut buf: Vec<f64>, k: usize, len: usize) -> Vec<f64> {
    let tol = f64::EPSILON * len.max(k).max(1) as f64;
    let mut norms = alloc::vec![0.0; k];
    for _ in 0..MAX_SWEEPS {
        // refreshed every sweep so rotation updates cannot drift
        for (i, n) in norms.iter_mut().enumerate() {
            let r = &buf[i * len..(i + 1) * len];
            *n = dot(r, r);
        }
        let mut rotated = false;
        for i in 0..k {
            for j in i + 1..k {
                let (head, tail) = buf.split_at_mut(j * len);
                let ri = &mut head[i * len..(i + 1) * len];
                let rj = &mut tail[..len];
                let alpha = norms[i];
                let beta = norms[j];
                let gamma = dot(ri, rj);
                if gamma == 0.0 || gamma.abs() <= tol * libm::sqrt(alpha) * libm::sqrt(beta) {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let sign = if zeta >= 0.0 { 1.0 } else { -1.0 };
                let t = sign / (zeta.abs() + libm::sqrt(1.0 + zeta * zeta));
                let c = 1.0 / libm::sqrt(1.0 + t * t);
                let s = c * t;
                for (x, y) in ri.iter_mut().zip(rj.iter_mut()) {
                    let (a, b) = (*x, *y);
                    *x = c * a - s * b;
                    *y = s * a + c * b;
                }
                norms[i] = alpha - t * gamma;
                norms[j] = beta + t * gamma;
            }
        }
        if !rotated {
            break;
        }
    }
    (0..k)
        .map(|i| {
            let r = &buf[i * len..(i + 1) * len];
            dot(r, r)
        })
        .collect()
}

/// Eigenvalues of `h hᵀ` for an `m x d` matrix, unsorted, length `m`.
///
/// Works on whichever of rows/columns is the shorter set of vectors; when
/// `m > d` the `m - d` structurally zero eigenvalues are appended exactly.
pub(crate) fn gram_eigenvalues_of_rows(h: &Matrix) -> Vec<f64> {
    let (m, d) = (h.rows(), h.cols());
    if m <= d {
        return hestenes(h.data().to_vec(), m, d);
    }
    let mut cols = Vec::with_capacity(m * d);
    for j in 0..d {
        cols.extend((0..m).map(|i| h.get(i, j)));
    }
    let mut eig = hestenes(cols, d, m);
    eig.resize(m, 0.0);
    eig
}

/// Eigenvalues of a symmetric matrix by cyclic two-sided Jacobi, unsorted.
/// The input is symmetrized as `(A + Aᵀ) / 2` first.
pub(crate) fn symmetric_eigenvalues(g: &Matrix) -> Vec<f64> {
    let n = g.rows();
    let mut a = alloc::vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            a[i * n + j] = 0.5 * (g.get(i, j) + g.get(j, i));
        }
    }
    let frob2: f64 = a.iter().map(|v| v * v).sum();
    if frob2 == 0.0 {
        return alloc::vec![0.0; n];
    }
    let tol2 = (f64::EPSILON * f64::EPSILON) * frob2;

    for _ in 0..MAX_SWEEPS {
        let mut off = 0.0;
        for i in 0..n {
            for j in 0..i {
                off += 2.0 * a[i * n + j] * a[i * n + j];
            }
        }
        if off <= tol2 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                let app = a[p * n + p];
                let aqq = a[q * n + q];
                let theta = (aqq - app) / (2.0 * apq);
                let sign = if theta >= 0.0 { 1.0 } else { -1.0 };
                let t = sign / (theta.abs() + libm::sqrt(theta * theta + 1.0));
                let c = 1.0 / libm::sqrt(t * t + 1.0);
                let s = t * c;
                for k in 0..n {
                    let akp = a[k * n + p];
                    let akq = a[k * n + q];
                    a[k * n + p] = c * akp - s * akq;
                    a[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p * n + k];
                    let aqk = a[q * n + k];
                    a[p * n + k] = c * apk - s * aqk;
                    a[q * n + k] = s * apk + c * aqk;
                }
                a[p * n + q] = 0.0;
                a[q * n + p] = 0.0;
            }
        }
    }
    (0..n).map(|i| a[i * n + i]).collect()
}
