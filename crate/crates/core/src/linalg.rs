//! Small dense complex helpers shared by the model, library and detectors.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

pub type CMatrix = DMatrix<Complex64>;
pub type CVector = DVector<Complex64>;

pub const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

/// Hermitian inner product `<a, b> = a^* b`.
pub fn inner(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

pub fn norm(a: &[Complex64]) -> f64 {
    a.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
}

pub fn max_abs(a: &[Complex64]) -> f64 {
    a.iter().map(|x| x.norm()).fold(0.0, f64::max)
}

/// Rotates `v` so its largest-magnitude entry is real and positive.
/// Ties resolve to the lowest index.
pub fn fix_phase(v: &mut [Complex64]) {
    let mut best = 0;
    let mut best_mag = -1.0;
    for (i, x) in v.iter().enumerate() {
        let m = x.norm();
        if m > best_mag {
            best_mag = m;
            best = i;
        }
    }
    if best_mag <= 0.0 {
        return;
    }
    let rot = v[best].conj() / best_mag;
    for x in v.iter_mut() {
        *x *= rot;
    }
    v[best] = Complex64::new(v[best].re, 0.0);
}

/// Dominant left singular direction of `m` by power iteration on `m m^*`,
/// started from the normalized all-ones vector. Returns `None` when the
/// iterate collapses to zero (e.g. `m == 0`).
pub fn dominant_direction(m: &CMatrix, iterations: usize) -> Option<CVector> {
    let n = m.nrows();
    let mut v = CVector::from_element(n, Complex64::new(1.0 / (n as f64).sqrt(), 0.0));
    let mh = m.adjoint();
    for _ in 0..iterations {
        let w = m * (&mh * &v);
        let nw = w.norm();
        if nw == 0.0 || !nw.is_finite() {
            return None;
        }
        v = w / Complex64::new(nw, 0.0);
    }
    let mut out = v;
    fix_phase(out.as_mut_slice());
    Some(out)
}

/// Singular values of a complex matrix, in non-increasing order.
pub fn singular_values(m: &CMatrix) -> Vec<f64> {
    let svd = m.clone().svd(false, false);
    let mut s: Vec<f64> = svd.singular_values.iter().copied().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn inner_is_conjugate_linear_in_first_argument() {
        let a = [c(0.0, 1.0), c(2.0, 0.0)];
        let b = [c(1.0, 0.0), c(1.0, 1.0)];
        // conj(i)*1 + 2*(1+i) = -i + 2 + 2i
        assert_eq!(inner(&a, &b), c(2.0, 1.0));
    }

    #[test]
    fn fix_phase_makes_largest_entry_real_positive() {
        let mut v = [c(0.1, 0.0), c(0.0, -3.0), c(1.0, 1.0)];
        fix_phase(&mut v);
        assert!((v[1].re - 3.0).abs() < 1e-15);
        assert_eq!(v[1].im, 0.0);
        assert!((norm(&v) - (0.01f64 + 9.0 + 2.0).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn dominant_direction_of_rank_one() {
        let g = CVector::from_vec(vec![c(0.0, 0.0), c(1.0, 2.0), c(-0.5, 0.25)]);
        let m = &g * g.transpose() * c(0.3, -0.7);
        let d = dominant_direction(&m, 50).unwrap();
        let gn = g.normalize();
        let overlap = inner(d.as_slice(), gn.as_slice()).norm();
        assert!((overlap - 1.0).abs() < 1e-12);
    }

    #[test]
    fn dominant_direction_of_zero_is_none() {
        let m = CMatrix::zeros(3, 3);
        assert!(dominant_direction(&m, 10).is_none());
    }
}
