//! Cached products `UA`, `VB` and `M` for row-at-a-time updates.
//!
//! Changing row `k` of `A` by `δ` moves `M` by the rank-1 term
//! `u_{·k} (VB δ)ᵀ`, touching only the rows `i` with `u_ik ≠ 0`. The cache
//! applies these updates in place and recomputes everything from scratch
//! every `REFRESH_EVERY` row changes to bound accumulated rounding.
//!
//! Reductions run over fixed-size chunks summed in chunk order, so results
//! do not depend on the size of the thread pool.

use ndarray::{Array1, Array2, ArrayView1, Axis};
use rayon::prelude::*;

use super::likelihood::cell_coefficients;
use super::Problem;
use crate::data::LatentFactors;
use crate::scalar::Scalar;

pub(crate) const REFRESH_EVERY: usize = 25;
const CHUNK: usize = 32;

/// Nonzero entries of one column of a side-feature matrix.
#[derive(Debug, Clone)]
struct SparseColumn<F> {
    index: Vec<usize>,
    value: Vec<F>,
}

impl<F: Scalar> SparseColumn<F> {
    fn from_matrix(m: &Array2<F>) -> Vec<Self> {
        m.axis_iter(Axis(1))
            .map(|col| {
                let (index, value) = col
                    .iter()
                    .enumerate()
                    .filter(|(_, v)| **v != F::zero())
                    .map(|(i, v)| (i, *v))
                    .unzip();
                SparseColumn { index, value }
            })
            .collect()
    }

    fn len(&self) -> usize {
        self.index.len()
    }
}

#[derive(Debug, Clone)]
pub(crate) struct Workspace<F> {
    ua: Array2<F>,
    vb: Array2<F>,
    m: Array2<F>,
    /// `W - ξY` at the cached `M`; valid only while `resid_valid`.
    resid: Array2<F>,
    resid_valid: bool,
    /// Labels as 0/1 scalars.
    yf: Array2<F>,
    u_cols: Vec<SparseColumn<F>>,
    v_cols: Vec<SparseColumn<F>>,
    xi: F,
    since_refresh: usize,
}

/// Overwrites logits with `(1 + ξy - y)σ(m) - ξy` given labels as 0/1 scalars.
fn residuals_in_place<F: Scalar>(m: &mut [F], y: &[F], xi: F) {
    F::sigmoid_in_place(m);
    let xi_m1 = xi - F::one();
    for (r, &y) in m.iter_mut().zip(y) {
        *r = *r + y * (xi_m1 * *r - xi);
    }
}

fn is_zero<F: Scalar>(x: ArrayView1<F>) -> bool {
    x.iter().all(|v| *v == F::zero())
}

impl<F: Scalar> Workspace<F> {
    pub(crate) fn new(problem: &Problem<'_, F>, factors: &LatentFactors<F>, xi: F) -> Self {
        let (n_rows, n_cols) = problem.y.shape();
        let mut ws = Self {
            ua: Array2::zeros((n_rows, factors.rank())),
            vb: Array2::zeros((n_cols, factors.rank())),
            m: Array2::zeros((n_rows, n_cols)),
            resid: Array2::zeros((n_rows, n_cols)),
            resid_valid: false,
            yf: problem.y.labels().mapv(|y| if y == 1 { F::one() } else { F::zero() }),
            u_cols: SparseColumn::from_matrix(problem.u.matrix()),
            v_cols: SparseColumn::from_matrix(problem.v.matrix()),
            xi,
            since_refresh: 0,
        };
        ws.refresh(problem, factors);
        ws
    }

    pub(crate) fn m(&self) -> &Array2<F> {
        &self.m
    }

    /// Recomputes every cached product from the factors.
    pub(crate) fn refresh(&mut self, problem: &Problem<'_, F>, factors: &LatentFactors<F>) {
        self.ua = problem.u.matrix().dot(&factors.a);
        self.vb = problem.v.matrix().dot(&factors.b);
        let ua = &self.ua;
        let vb = &self.vb;
        self.m
            .axis_chunks_iter_mut(Axis(0), CHUNK)
            .into_par_iter()
            .zip(ua.axis_chunks_iter(Axis(0), CHUNK).into_par_iter())
            .for_each(|(mut out, ua_chunk)| out.assign(&ua_chunk.dot(&vb.t())));
        self.resid_valid = false;
        self.since_refresh = 0;
    }

    fn ensure_resid(&mut self) {
        if self.resid_valid {
            return;
        }
        let xi = self.xi;
        self.resid
            .axis_iter_mut(Axis(0))
            .into_par_iter()
            .zip(self.m.axis_iter(Axis(0)).into_par_iter())
            .zip(self.yf.axis_iter(Axis(0)).into_par_iter())
            .for_each(|((mut r, m), y)| {
                let r = r.as_slice_mut().expect("contiguous");
                r.copy_from_slice(m.as_slice().expect("contiguous"));
                residuals_in_place(r, y.as_slice().expect("contiguous"), xi);
            });
        self.resid_valid = true;
    }

    /// Gradient of the negated log-likelihood with respect to row `k` of `A`,
    /// evaluated with that row moved by `delta` from its cached value.
    pub(crate) fn grad_a(&mut self, k: usize, delta: ArrayView1<F>) -> Array1<F> {
        let (n_rows, n_cols) = self.m.dim();
        let unshifted = is_zero(delta);
        if unshifted && self.u_cols[k].len() * 2 > n_rows {
            self.ensure_resid();
        }
        let use_resid = unshifted && self.resid_valid;
        let shift = (!unshifted).then(|| self.vb.dot(&delta));
        let col = &self.u_cols[k];
        let (xi, m, yf, resid) = (self.xi, &self.m, &self.yf, &self.resid);

        let partials: Vec<Array1<F>> = col
            .index
            .par_chunks(CHUNK)
            .zip(col.value.par_chunks(CHUNK))
            .map(|(idx, val)| {
                let mut acc = vec![F::zero(); n_cols];
                let mut buf = vec![F::zero(); n_cols];
                for (&i, &u) in idx.iter().zip(val.iter()) {
                    let r_row: &[F] = if use_resid {
                        resid.row(i).to_slice().expect("contiguous")
                    } else {
                        buf.copy_from_slice(m.row(i).to_slice().expect("contiguous"));
                        if let Some(s) = &shift {
                            for (b, &sv) in buf.iter_mut().zip(s.iter()) {
                                *b = *b + u * sv;
                            }
                        }
                        residuals_in_place(&mut buf, yf.row(i).to_slice().expect("contiguous"), xi);
                        &buf
                    };
                    for (a, &r) in acc.iter_mut().zip(r_row) {
                        *a = *a + u * r;
                    }
                }
                Array1::from_vec(acc)
            })
            .collect();
        let mut t = Array1::<F>::zeros(n_cols);
        for p in &partials {
            t.zip_mut_with(p, |a, &b| *a = *a + b);
        }
        self.vb.t().dot(&t)
    }

    /// Gradient with respect to row `l` of `B`, with that row moved by `delta`.
    pub(crate) fn grad_b(&mut self, l: usize, delta: ArrayView1<F>) -> Array1<F> {
        let (n_rows, n_cols) = self.m.dim();
        let unshifted = is_zero(delta);
        if unshifted && self.v_cols[l].len() * 2 > n_cols {
            self.ensure_resid();
        }
        let use_resid = unshifted && self.resid_valid;
        let shift = (!unshifted).then(|| self.ua.dot(&delta));
        let col = &self.v_cols[l];
        let dense = col.len() == n_cols;
        let (xi, m, yf, resid) = (self.xi, &self.m, &self.yf, &self.resid);

        let mut t = vec![F::zero(); n_rows];
        t.par_iter_mut().enumerate().for_each_init(
            || (vec![F::zero(); col.len()], vec![F::zero(); col.len()]),
            |(buf, ybuf), (i, ti)| {
                let m_row = m.row(i);
                let m_row = m_row.to_slice().expect("contiguous");
                let y_row = yf.row(i);
                let y_row = y_row.to_slice().expect("contiguous");
                if use_resid {
                    let r_row = resid.row(i);
                    let r_row = r_row.to_slice().expect("contiguous");
                    *ti = if dense {
                        r_row.iter().zip(&col.value).fold(F::zero(), |a, (&r, &v)| a + v * r)
                    } else {
                        col.index.iter().zip(&col.value).fold(F::zero(), |a, (&j, &v)| a + v * r_row[j])
                    };
                    return;
                }
                if dense {
                    buf.copy_from_slice(m_row);
                    ybuf.copy_from_slice(y_row);
                } else {
                    for ((b, yb), &j) in buf.iter_mut().zip(ybuf.iter_mut()).zip(&col.index) {
                        *b = m_row[j];
                        *yb = y_row[j];
                    }
                }
                if let Some(s) = &shift {
                    let si = s[i];
                    for (b, &v) in buf.iter_mut().zip(&col.value) {
                        *b = *b + si * v;
                    }
                }
                residuals_in_place(buf, ybuf, xi);
                *ti = buf.iter().zip(&col.value).fold(F::zero(), |a, (&r, &v)| a + v * r);
            },
        );
        self.ua.t().dot(&Array1::from_vec(t))
    }

    /// Records that row `k` of `A` changed by `delta`.
    pub(crate) fn apply_a(&mut self, k: usize, delta: ArrayView1<F>) {
        if is_zero(delta) {
            return;
        }
        let s = self.vb.dot(&delta);
        let col = &self.u_cols[k];
        for (&i, &u) in col.index.iter().zip(col.value.iter()) {
            self.ua.row_mut(i).scaled_add(u, &delta);
            self.m.row_mut(i).scaled_add(u, &s);
        }
        self.resid_valid = false;
        self.since_refresh += 1;
    }

    /// Records that row `l` of `B` changed by `delta`.
    pub(crate) fn apply_b(&mut self, l: usize, delta: ArrayView1<F>) {
        if is_zero(delta) {
            return;
        }
        let s = self.ua.dot(&delta);
        let col = &self.v_cols[l];
        for (&j, &v) in col.index.iter().zip(col.value.iter()) {
            self.vb.row_mut(j).scaled_add(v, &delta);
        }
        self.m
            .axis_iter_mut(Axis(0))
            .into_par_iter()
            .zip(s.as_slice().expect("contiguous").par_iter())
            .for_each(|(mut row, &si)| {
                for (&j, &v) in col.index.iter().zip(col.value.iter()) {
                    row[j] = row[j] + si * v;
                }
            });
        self.resid_valid = false;
        self.since_refresh += 1;
    }

    /// Full recomputation once enough rank-1 updates have accumulated.
    pub(crate) fn maybe_refresh(&mut self, problem: &Problem<'_, F>, factors: &LatentFactors<F>) {
        if self.since_refresh >= REFRESH_EVERY {
            self.refresh(problem, factors);
        }
    }

    /// Weighted log-likelihood at the cached `M`.
    pub(crate) fn log_likelihood(&self, problem: &Problem<'_, F>) -> F {
        let xi = self.xi;
        let partials: Vec<F> = self
            .m
            .axis_iter(Axis(0))
            .into_par_iter()
            .zip(problem.y.labels().axis_iter(Axis(0)).into_par_iter())
            .map(|(m, y)| {
                let mut acc = F::zero();
                for (&m, &y) in m.iter().zip(y.iter()) {
                    let (c, target) = cell_coefficients(y, xi);
                    acc = acc + target * m - c * m.softplus();
                }
                acc
            })
            .collect();
        partials.into_iter().fold(F::zero(), |a, b| a + b)
    }
}
