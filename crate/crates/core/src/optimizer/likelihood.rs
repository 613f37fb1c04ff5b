//! Weighted logistic likelihood and its row gradients, evaluated on full
//! matrices. The solver uses the cached versions in `workspace`; these are
//! the plain reference forms.

use ndarray::{Array1, Array2, ArrayView1, Axis, Zip};

use crate::data::{InteractionMatrix, SideFeatures};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Per-cell weight on `log(1 + e^m)` and the target multiplying `m`.
#[inline]
pub(crate) fn cell_coefficients<F: Scalar>(y: u8, xi: F) -> (F, F) {
    if y == 1 {
        (xi, xi)
    } else {
        (F::one(), F::zero())
    }
}

/// `∂/∂m` of the negated weighted log-likelihood at one cell: `w - ξy`.
#[inline]
pub(crate) fn cell_residual<F: Scalar>(m: F, y: u8, xi: F) -> F {
    let (c, target) = cell_coefficients(y, xi);
    c * m.sigmoid() - target
}

/// `M = U A Bᵀ Vᵀ`, evaluated as `(UA)(VB)ᵀ`.
pub fn compute_m<F: Scalar>(
    u: &SideFeatures<F>,
    a: &Array2<F>,
    b: &Array2<F>,
    v: &SideFeatures<F>,
) -> Result<Array2<F>> {
    let (um, vm) = (u.matrix(), v.matrix());
    if um.ncols() != a.nrows() || vm.ncols() != b.nrows() || a.ncols() != b.ncols() {
        return Err(Error::Dimension(format!(
            "U {:?} · A {:?} · Bᵀ {:?} · Vᵀ {:?}",
            um.dim(),
            a.dim(),
            b.dim(),
            vm.dim()
        )));
    }
    let ua = um.dot(a);
    let vb = vm.dot(b);
    Ok(ua.dot(&vb.t()))
}

/// `W` with `w_ij = (1 + ξ y_ij - y_ij) σ(m_ij)`.
pub fn weight_matrix<F: Scalar>(m: &Array2<F>, y: &InteractionMatrix, xi: F) -> Array2<F> {
    let mut w = Array2::zeros(m.dim());
    Zip::from(&mut w)
        .and(m)
        .and(y.labels())
        .for_each(|w, &m, &y| *w = cell_coefficients(y, xi).0 * m.sigmoid());
    w
}

/// `W - ξY`.
pub fn residual_matrix<F: Scalar>(m: &Array2<F>, y: &InteractionMatrix, xi: F) -> Array2<F> {
    let mut r = Array2::zeros(m.dim());
    Zip::from(&mut r)
        .and(m)
        .and(y.labels())
        .for_each(|r, &m, &y| *r = cell_residual(m, y, xi));
    r
}

/// Weighted log-likelihood `Σ ξ y m - (ξ y + 1 - y) log(1 + e^m)`.
pub fn log_likelihood<F: Scalar>(m: &Array2<F>, y: &InteractionMatrix, xi: F) -> F {
    let mut total = F::zero();
    for (row_m, row_y) in m.axis_iter(Axis(0)).zip(y.labels().axis_iter(Axis(0))) {
        let mut acc = F::zero();
        for (&m, &y) in row_m.iter().zip(row_y.iter()) {
            let (c, target) = cell_coefficients(y, xi);
            acc = acc + target * m - c * m.softplus();
        }
        total = total + acc;
    }
    total
}

fn check_shapes<F: Scalar>(
    u: &SideFeatures<F>,
    v: &SideFeatures<F>,
    y: &InteractionMatrix,
) -> Result<()> {
    if u.n_entities() != y.n_rows() || v.n_entities() != y.n_cols() {
        return Err(Error::Dimension(format!(
            "Y is {:?} but U has {} rows and V has {}",
            y.shape(),
            u.n_entities(),
            v.n_entities()
        )));
    }
    Ok(())
}

/// Gradient of the negated log-likelihood with respect to row `k` of `A`:
/// `Bᵀ Vᵀ (W - ξY)ᵀ u_{·k}` where `u_{·k}` is the k-th column of `U`.
pub fn grad_row_a<F: Scalar>(
    k: usize,
    u: &SideFeatures<F>,
    v: &SideFeatures<F>,
    a: &Array2<F>,
    b: &Array2<F>,
    y: &InteractionMatrix,
    xi: F,
) -> Result<Array1<F>> {
    check_shapes(u, v, y)?;
    if k >= a.nrows() {
        return Err(Error::Dimension(format!("row {k} of A with {} rows", a.nrows())));
    }
    let m = compute_m(u, a, b, v)?;
    let r = residual_matrix(&m, y, xi);
    let col: ArrayView1<F> = u.matrix().column(k);
    let t = r.t().dot(&col);
    let s = v.matrix().t().dot(&t);
    Ok(b.t().dot(&s))
}

/// Gradient with respect to row `l` of `B`: `Aᵀ Uᵀ (W - ξY) v_{·l}`.
pub fn grad_row_b<F: Scalar>(
    l: usize,
    u: &SideFeatures<F>,
    v: &SideFeatures<F>,
    a: &Array2<F>,
    b: &Array2<F>,
    y: &InteractionMatrix,
    xi: F,
) -> Result<Array1<F>> {
    check_shapes(u, v, y)?;
    if l >= b.nrows() {
        return Err(Error::Dimension(format!("row {l} of B with {} rows", b.nrows())));
    }
    let m = compute_m(u, a, b, v)?;
    let r = residual_matrix(&m, y, xi);
    let col: ArrayView1<F> = v.matrix().column(l);
    let t = r.dot(&col);
    let s = u.matrix().t().dot(&t);
    Ok(a.t().dot(&s))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use ndarray::array;

    fn sf(m: Array2<f64>) -> SideFeatures<f64> {
        SideFeatures::new(m, None).unwrap()
    }

    #[test]
    fn m_is_zero_when_a_factor_vanishes() {
        let u = sf(array![[1.0, 2.0], [3.0, 4.0]]);
        let v = sf(array![[1.0], [0.5], [2.0]]);
        let m = compute_m(&u, &Array2::zeros((2, 2)), &array![[1.0, 1.0]], &v).unwrap();
        assert!(m.iter().all(|&x| x == 0.0));
        let m = compute_m(&u, &array![[1.0, 1.0], [2.0, 0.0]], &Array2::zeros((1, 2)), &v).unwrap();
        assert!(m.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn scalar_m() {
        let m = compute_m(&sf(array![[2.0]]), &array![[3.0]], &array![[4.0]], &sf(array![[5.0]])).unwrap();
        assert_eq!(m[[0, 0]], 120.0);
    }

    #[test]
    fn m_matches_quadruple_loop() {
        let u = sf(array![[0.3, -1.2], [0.8, 0.1], [-0.5, 0.7]]);
        let a = array![[1.1, -0.4], [0.2, 0.9]];
        let b = array![[-0.6, 0.3], [0.5, 1.4]];
        let v = sf(array![[0.9, -0.2], [0.4, 0.4], [-1.0, 0.6], [0.05, -0.7]]);
        let m = compute_m(&u, &a, &b, &v).unwrap();
        for i in 0..3 {
            for j in 0..4 {
                let mut s = 0.0;
                for k in 0..2 {
                    for l in 0..2 {
                        for q in 0..2 {
                            s += u.matrix()[[i, k]] * a[[k, q]] * b[[l, q]] * v.matrix()[[j, l]];
                        }
                    }
                }
                assert_relative_eq!(m[[i, j]], s, epsilon = 1e-14);
            }
        }
    }

    #[test]
    fn shape_mismatch_is_a_dimension_error() {
        let u = sf(array![[1.0, 2.0]]);
        let v = sf(array![[1.0]]);
        assert!(matches!(
            compute_m(&u, &array![[1.0]], &array![[1.0]], &v),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn scalar_gradients() {
        let one = sf(array![[1.0]]);
        let y = InteractionMatrix::from_positives(1, 1, [(0, 0)]).unwrap();
        let ga = grad_row_a(0, &one, &one, &array![[0.0]], &array![[1.0]], &y, 1.0).unwrap();
        assert_relative_eq!(ga[0], -0.5);
        let gb = grad_row_b(0, &one, &one, &array![[1.0]], &array![[0.0]], &y, 1.0).unwrap();
        assert_relative_eq!(gb[0], -0.5);
    }

    #[test]
    fn weights_respect_bounds() {
        let m = array![[-3.0, 0.0], [2.0, 40.0]];
        let y = InteractionMatrix::from_positives(2, 2, [(0, 1), (1, 1)]).unwrap();
        let w = weight_matrix(&m, &y, 10.0);
        for ((i, j), &wv) in w.indexed_iter() {
            let cap = if y.get(i, j) == 1 { 10.0 } else { 1.0 };
            assert!(wv >= 0.0 && wv <= cap);
        }
    }

    #[test]
    fn log_likelihood_at_zero() {
        let y = InteractionMatrix::from_positives(2, 2, [(0, 0)]).unwrap();
        let ll = log_likelihood(&Array2::<f64>::zeros((2, 2)), &y, 10.0);
        assert_relative_eq!(ll, -(10.0 + 3.0) * 2.0f64.ln(), epsilon = 1e-12);
    }
}
