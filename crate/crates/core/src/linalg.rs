//! Small dense linear-algebra helpers on 8×8 complex matrices.

use crate::{Mat8, C64};
use nalgebra::{SMatrix, SymmetricEigen};

/// Matrix exponential by scaling and squaring of a truncated Taylor series.
pub fn expm<const N: usize>(a: &SMatrix<C64, N, N>) -> SMatrix<C64, N, N> {
    let norm1 = (0..N)
        .map(|j| (0..N).map(|i| a[(i, j)].norm()).sum::<f64>())
        .fold(0.0, f64::max);
    let squarings = if norm1 > 0.25 {
        (norm1 / 0.25).log2().ceil() as i32
    } else {
        0
    };
    let b = a / C64::new(2f64.powi(squarings), 0.0);
    let mut term = SMatrix::<C64, N, N>::identity();
    let mut sum = term;
    // ‖B‖ ≤ 1/4: 16 terms leave a remainder below 1e-20
    for k in 1..=16 {
        term = term * b / C64::new(k as f64, 0.0);
        sum += term;
    }
    for _ in 0..squarings {
        sum = sum * sum;
    }
    sum
}

/// Eigenvalues of the Hermitian part of `m`, ascending.
pub fn hermitian_eigenvalues(m: &Mat8) -> [f64; 8] {
    let h = (m + m.adjoint()) * C64::new(0.5, 0.0);
    let eig = SymmetricEigen::new(h);
    let mut v = [0.0; 8];
    for (i, x) in eig.eigenvalues.iter().enumerate() {
        v[i] = *x;
    }
    v.sort_by(|a, b| a.total_cmp(b));
    v
}

/// Eigen-decomposition of a Hermitian matrix: (eigenvalues, column eigenvectors).
pub fn hermitian_eigen(m: &Mat8) -> (Vec<f64>, Mat8) {
    let h = (m + m.adjoint()) * C64::new(0.5, 0.0);
    let eig = SymmetricEigen::new(h);
    (eig.eigenvalues.iter().copied().collect(), eig.eigenvectors)
}

/// Trace distance ½‖a − b‖₁ between two Hermitian matrices.
pub fn trace_distance(a: &Mat8, b: &Mat8) -> f64 {
    0.5 * hermitian_eigenvalues(&(a - b)).iter().map(|x| x.abs()).sum::<f64>()
}

pub fn trace(m: &Mat8) -> C64 {
    m.trace()
}

/// Largest elementwise deviation from Hermiticity.
pub fn hermiticity_error(m: &Mat8) -> f64 {
    (m - m.adjoint()).iter().map(|z| z.norm()).fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn expm_of_diagonal() {
        let mut a = Mat8::zeros();
        for i in 0..8 {
            a[(i, i)] = C64::new(-0.3 * i as f64, 1.7 * i as f64);
        }
        let e = expm(&a);
        for i in 0..8 {
            let expect = a[(i, i)].exp();
            assert!((e[(i, i)] - expect).norm() < 1e-13);
        }
    }

    #[test]
    fn expm_of_rotation_generator() {
        // exp(-i θ σx) on a 2×2 block
        let theta = 7.3;
        let mut a = Mat8::zeros();
        a[(0, 1)] = C64::new(0.0, -theta);
        a[(1, 0)] = C64::new(0.0, -theta);
        let e = expm(&a);
        assert!((e[(0, 0)] - C64::new(theta.cos(), 0.0)).norm() < 1e-12);
        assert!((e[(0, 1)] - C64::new(0.0, -theta.sin())).norm() < 1e-12);
        assert!((e[(7, 7)] - C64::new(1.0, 0.0)).norm() < 1e-14);
    }

    #[test]
    fn trace_distance_of_orthogonal_pure_states() {
        let mut a = Mat8::zeros();
        let mut b = Mat8::zeros();
        a[(0, 0)] = C64::new(1.0, 0.0);
        b[(5, 5)] = C64::new(1.0, 0.0);
        assert!((trace_distance(&a, &b) - 1.0).abs() < 1e-14);
        assert!(trace_distance(&a, &a) < 1e-15);
    }
}
