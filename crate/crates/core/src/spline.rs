//! Clamped uniform B-splines on `[0,1]`.
//!
//! A knot vector with `grid` interior intervals and polynomial degree `p` has
//! `grid + 2p + 1` knots, the first and last `p + 1` of them repeated at the
//! domain ends. It spans `grid + p` basis functions. Evaluation uses the
//! Cox–de Boor recurrence, raising the degree-0 indicator of the active
//! interval one degree at a time.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Clamped uniform knot vector over `[0,1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct KnotVector<T> {
    knots: Vec<T>,
    degree: usize,
    grid: usize,
}

impl<T: Scalar> KnotVector<T> {
    pub fn new(grid: usize, degree: usize) -> Result<Self> {
        if grid == 0 {
            return Err(Error::InvalidConfig("spline grid must be at least 1".into()));
        }
        let mut knots = Vec::with_capacity(grid + 2 * degree + 1);
        knots.extend(std::iter::repeat_n(T::zero(), degree));
        for i in 0..=grid {
            knots.push(T::count(i) / T::count(grid));
        }
        knots.extend(std::iter::repeat_n(T::one(), degree));
        Ok(KnotVector {
            knots,
            degree,
            grid,
        })
    }

    pub fn knots(&self) -> &[T] {
        &self.knots
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn grid(&self) -> usize {
        self.grid
    }

    /// Number of basis functions, `grid + degree`.
    pub fn n_basis(&self) -> usize {
        self.grid + self.degree
    }

    /// Index of the degree-0 interval containing `t`. The last non-empty
    /// interval is closed on the right so that `t = 1` is covered.
    fn span(&self, t: T) -> usize {
        let last = self.knots.len() - self.degree - 2;
        if t >= self.knots[last + 1] {
            return last;
        }
        let mut s = self.degree;
        while s < last && t >= self.knots[s + 1] {
            s += 1;
        }
        s
    }

    /// Fills `work` with every basis function of degree `upto` at `t`.
    fn raise(&self, t: T, upto: usize, work: &mut Vec<T>) {
        let k = &self.knots;
        work.clear();
        work.resize(k.len() - 1, T::zero());
        work[self.span(t)] = T::one();
        for d in 1..=upto {
            for i in 0..k.len() - d - 1 {
                let left_den = k[i + d] - k[i];
                let right_den = k[i + d + 1] - k[i + 1];
                let left = if left_den > T::zero() {
                    (t - k[i]) / left_den * work[i]
                } else {
                    T::zero()
                };
                let right = if right_den > T::zero() {
                    (k[i + d + 1] - t) / right_den * work[i + 1]
                } else {
                    T::zero()
                };
                work[i] = left + right;
            }
        }
        work.truncate(k.len() - upto - 1);
    }

    /// All `grid + degree` basis values at `t` (clamped to `[0,1]`).
    pub fn basis(&self, t: T) -> Vec<T> {
        let mut work = Vec::with_capacity(self.knots.len());
        self.basis_into(t, &mut work);
        work
    }

    /// Like [`basis`](Self::basis), reusing `out` as storage.
    pub fn basis_into(&self, t: T, out: &mut Vec<T>) {
        let t = clamp_unit(t);
        self.raise(t, self.degree, out);
    }

    /// Derivatives of every basis function with respect to `t`.
    pub fn basis_derivative(&self, t: T) -> Result<Vec<T>> {
        let mut out = Vec::with_capacity(self.knots.len());
        self.basis_derivative_into(t, &mut out)?;
        Ok(out)
    }

    pub fn basis_derivative_into(&self, t: T, out: &mut Vec<T>) -> Result<()> {
        let p = self.degree;
        if p == 0 {
            return Err(Error::InvalidConfig(
                "degree-0 splines have no derivative".into(),
            ));
        }
        let t = clamp_unit(t);
        let mut lower = Vec::with_capacity(self.knots.len());
        self.raise(t, p - 1, &mut lower);
        let k = &self.knots;
        let pf = T::count(p);
        out.clear();
        for i in 0..self.n_basis() {
            let left_den = k[i + p] - k[i];
            let right_den = k[i + p + 1] - k[i + 1];
            let mut v = T::zero();
            if left_den > T::zero() {
                v = v + pf * lower[i] / left_den;
            }
            if right_den > T::zero() {
                v = v - pf * lower[i + 1] / right_den;
            }
            out.push(v);
        }
        Ok(())
    }
}

/// Clamped uniform knot vector on `[0,1]` with `grid` intervals.
pub fn make_knots<T: Scalar>(grid: usize, degree: usize) -> Result<KnotVector<T>> {
    KnotVector::new(grid, degree)
}

#[inline]
fn clamp_unit<T: Scalar>(t: T) -> T {
    if t.is_nan() {
        return t;
    }
    t.max(T::zero()).min(T::one())
}

#[inline]
pub(crate) fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter()
        .zip(b)
        .fold(T::zero(), |acc, (&x, &y)| acc + x * y)
}

/// One univariate spline: coefficients over a knot vector.
#[derive(Debug, Clone, PartialEq)]
pub struct SplineEdge<T> {
    knots: KnotVector<T>,
    coeffs: Vec<T>,
}

impl<T: Scalar> SplineEdge<T> {
    pub fn new(knots: KnotVector<T>, coeffs: Vec<T>) -> Result<Self> {
        if coeffs.len() != knots.n_basis() {
            return Err(Error::CoefficientCount {
                expected: knots.n_basis(),
                got: coeffs.len(),
            });
        }
        Ok(SplineEdge { knots, coeffs })
    }

    pub fn knots(&self) -> &KnotVector<T> {
        &self.knots
    }

    pub fn coeffs(&self) -> &[T] {
        &self.coeffs
    }

    pub fn eval(&self, t: T) -> T {
        dot(&self.coeffs, &self.knots.basis(t))
    }

    pub fn eval_derivative(&self, t: T) -> Result<T> {
        Ok(dot(&self.coeffs, &self.knots.basis_derivative(t)?))
    }

    /// L2 norm of the coefficient vector.
    pub fn coeff_norm(&self) -> T {
        dot(&self.coeffs, &self.coeffs).sqrt()
    }
}

/// `Σ_i coeffs[i]·B_i(t)`; the coefficient count must match the basis.
pub fn eval_edge<T: Scalar>(knots: &KnotVector<T>, coeffs: &[T], t: T) -> Result<T> {
    if coeffs.len() != knots.n_basis() {
        return Err(Error::CoefficientCount {
            expected: knots.n_basis(),
            got: coeffs.len(),
        });
    }
    Ok(dot(coeffs, &knots.basis(t)))
}

pub fn eval_edge_derivative<T: Scalar>(knots: &KnotVector<T>, coeffs: &[T], t: T) -> Result<T> {
    if coeffs.len() != knots.n_basis() {
        return Err(Error::CoefficientCount {
            expected: knots.n_basis(),
            got: coeffs.len(),
        });
    }
    Ok(dot(coeffs, &knots.basis_derivative(t)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    /// Textbook recursive Cox–de Boor for a single basis function. Kept
    /// independent of the triangular evaluation above.
    fn cox_de_boor(k: &[f64], i: usize, p: usize, t: f64, last_span: usize) -> f64 {
        if p == 0 {
            let inside = k[i] <= t && t < k[i + 1];
            let closing = i == last_span && t == k[i + 1];
            return if inside || closing { 1.0 } else { 0.0 };
        }
        let mut v = 0.0;
        if k[i + p] != k[i] {
            v += (t - k[i]) / (k[i + p] - k[i]) * cox_de_boor(k, i, p - 1, t, last_span);
        }
        if k[i + p + 1] != k[i + 1] {
            v += (k[i + p + 1] - t) / (k[i + p + 1] - k[i + 1])
                * cox_de_boor(k, i + 1, p - 1, t, last_span);
        }
        v
    }

    #[test]
    fn knot_layouts() {
        let kv = make_knots::<f64>(1, 0).unwrap();
        assert_eq!(kv.knots(), &[0.0, 1.0]);
        assert_eq!(kv.n_basis(), 1);

        let kv = make_knots::<f64>(5, 3).unwrap();
        assert_eq!(kv.knots().len(), 12);
        assert_eq!(kv.n_basis(), 8);

        let kv = make_knots::<f64>(2, 1).unwrap();
        assert_eq!(kv.knots(), &[0.0, 0.0, 0.5, 1.0, 1.0]);

        assert!(make_knots::<f64>(0, 3).is_err());
    }

    #[test]
    fn degree_zero_indicator() {
        let kv = make_knots::<f64>(2, 0).unwrap();
        assert_eq!(kv.basis(0.25), vec![1.0, 0.0]);
        assert_eq!(kv.basis(1.0), vec![0.0, 1.0]);
    }

    #[test]
    fn cubic_midpoint_is_mirror_symmetric() {
        let kv = make_knots::<f64>(5, 3).unwrap();
        let b = kv.basis(0.5);
        let n = b.len();
        for i in 0..n {
            assert_relative_eq!(b[i], b[n - 1 - i], epsilon = 1e-15);
        }
        let last_span = kv.knots().len() - 3 - 2;
        for (i, &bi) in b.iter().enumerate() {
            assert_relative_eq!(bi, cox_de_boor(kv.knots(), i, 3, 0.5, last_span), epsilon = 1e-15);
        }
    }

    #[test]
    fn endpoints_interpolate() {
        for (grid, degree) in [(1, 1), (5, 3), (3, 2), (8, 4)] {
            let kv = make_knots::<f64>(grid, degree).unwrap();
            let b0 = kv.basis(0.0);
            let b1 = kv.basis(1.0);
            assert_eq!(b0[0], 1.0);
            assert!(b0[1..].iter().all(|&v| v == 0.0));
            assert_eq!(*b1.last().unwrap(), 1.0);
            assert!(b1[..b1.len() - 1].iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn linear_hat_derivative() {
        let kv = make_knots::<f64>(1, 1).unwrap();
        for t in [0.1, 0.5, 0.9] {
            assert_eq!(kv.basis_derivative(t).unwrap(), vec![-1.0, 1.0]);
        }
        assert!(make_knots::<f64>(3, 0).unwrap().basis_derivative(0.5).is_err());
    }

    #[test]
    fn constant_coefficients_reproduce_constant() {
        let kv = make_knots::<f64>(5, 3).unwrap();
        let zero = SplineEdge::new(kv.clone(), vec![0.0; 8]).unwrap();
        let c = SplineEdge::new(kv.clone(), vec![-2.5; 8]).unwrap();
        for i in 0..=20 {
            let t = i as f64 / 20.0;
            assert_eq!(zero.eval(t), 0.0);
            assert_relative_eq!(c.eval(t), -2.5, epsilon = 1e-12);
        }
        assert!(matches!(
            SplineEdge::new(kv.clone(), vec![0.0; 7]),
            Err(Error::CoefficientCount { expected: 8, got: 7 })
        ));
        assert!(eval_edge(&kv, &[1.0; 9], 0.3).is_err());
    }

    #[test]
    fn pythagorean_norm() {
        let kv = make_knots::<f64>(5, 3).unwrap();
        let e = SplineEdge::new(kv, vec![3.0, 4.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]).unwrap();
        assert_eq!(e.coeff_norm(), 5.0);
    }

    #[test]
    fn single_precision_partition_of_unity() {
        let kv = make_knots::<f32>(5, 3).unwrap();
        for i in 0..=100 {
            let s: f32 = kv.basis(i as f32 / 100.0).iter().sum();
            assert!((s - 1.0).abs() < 1e-6);
        }
    }

    proptest! {
        #[test]
        fn basis_matches_recursive_definition(grid in 1usize..=8, degree in 0usize..=4, t in 0.0f64..=1.0) {
            let kv = make_knots::<f64>(grid, degree).unwrap();
            let b = kv.basis(t);
            prop_assert_eq!(b.len(), grid + degree);
            let last_span = kv.knots().len() - degree - 2;
            for (i, &bi) in b.iter().enumerate() {
                prop_assert!(bi >= 0.0);
                let r = cox_de_boor(kv.knots(), i, degree, t, last_span);
                prop_assert!((bi - r).abs() < 1e-12, "i={} {} vs {}", i, bi, r);
            }
            prop_assert!(b.iter().filter(|&&v| v != 0.0).count() <= degree + 1);
            prop_assert!((b.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }

        #[test]
        fn derivative_sums_to_zero(grid in 1usize..=8, degree in 1usize..=4, t in 0.001f64..0.999) {
            let kv = make_knots::<f64>(grid, degree).unwrap();
            let d = kv.basis_derivative(t).unwrap();
            prop_assert!(d.iter().sum::<f64>().abs() < 1e-9);
        }

        #[test]
        fn eval_is_linear_in_coefficients(
            c1 in proptest::collection::vec(-5.0f64..5.0, 8),
            c2 in proptest::collection::vec(-5.0f64..5.0, 8),
            a in -3.0f64..3.0, b in -3.0f64..3.0, t in 0.0f64..=1.0,
        ) {
            let kv = make_knots::<f64>(5, 3).unwrap();
            let mix: Vec<f64> = c1.iter().zip(&c2).map(|(x, y)| a * x + b * y).collect();
            let lhs = eval_edge(&kv, &mix, t).unwrap();
            let rhs = a * eval_edge(&kv, &c1, t).unwrap() + b * eval_edge(&kv, &c2, t).unwrap();
            prop_assert!((lhs - rhs).abs() < 1e-12);
        }

        #[test]
        fn edge_derivative_matches_finite_difference(
            c in proptest::collection::vec(-2.0f64..2.0, 8), t in 0.01f64..0.99,
        ) {
            let kv = make_knots::<f64>(5, 3).unwrap();
            let e = SplineEdge::new(kv, c).unwrap();
            let h = 1e-5;
            let fd = (e.eval(t + h) - e.eval(t - h)) / (2.0 * h);
            let an = e.eval_derivative(t).unwrap();
            let rel = (an - fd).abs() / an.abs().max(fd.abs()).max(1e-3);
            prop_assert!(rel < 1e-5, "analytic {} fd {}", an, fd);
        }
    }
}
