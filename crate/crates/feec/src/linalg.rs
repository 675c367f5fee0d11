//! Small dense linear algebra helpers on top of nalgebra's SVD.

use nalgebra::{DMatrix, DVector};

/// Orthonormal basis of the column space, keeping singular directions above
/// `tol` relative to the largest singular value.
pub fn orthonormal_columns(m: &DMatrix<f64>, tol: f64) -> DMatrix<f64> {
    if m.ncols() == 0 || m.nrows() == 0 {
        return DMatrix::zeros(m.nrows(), 0);
    }
    let svd = m.clone().svd(true, false);
    let u = svd.u.as_ref().expect("u requested");
    let smax = svd.singular_values.max();
    if smax == 0.0 {
        return DMatrix::zeros(m.nrows(), 0);
    }
    let keep: Vec<usize> = svd
        .singular_values
        .iter()
        .enumerate()
        .filter(|(_, s)| **s > tol * smax)
        .map(|(i, _)| i)
        .collect();
    let mut out = DMatrix::zeros(m.nrows(), keep.len());
    for (j, &i) in keep.iter().enumerate() {
        out.set_column(j, &u.column(i));
    }
    out
}

/// Orthonormal basis of the nullspace: right singular vectors with singular
/// value at most `tol` relative to the largest one.
pub fn nullspace(m: &DMatrix<f64>, tol: f64) -> DMatrix<f64> {
    let ncols = m.ncols();
    if ncols == 0 {
        return DMatrix::zeros(0, 0);
    }
    if m.nrows() == 0 {
        return DMatrix::identity(ncols, ncols);
    }
    let svd = m.clone().svd(false, true);
    let v_t = svd.v_t.as_ref().expect("v_t requested");
    let smax = svd.singular_values.max();
    let rank = if smax == 0.0 {
        0
    } else {
        svd.singular_values.iter().filter(|s| **s > tol * smax).count()
    };
    // Singular values are descending; the trailing rows of Vᵀ plus any
    // columns beyond the decomposition size span the kernel.
    let mut cols: Vec<DVector<f64>> = Vec::new();
    for i in rank..v_t.nrows() {
        cols.push(v_t.row(i).transpose());
    }
    // Deficient case nrows < ncols: v_t has min(nrows, ncols) rows; recover
    // the remaining kernel directions by projecting out the row space.
    if v_t.nrows() < ncols {
        let mut basis: Vec<DVector<f64>> = (0..v_t.nrows())
            .map(|i| v_t.row(i).transpose())
            .collect();
        basis.extend(cols.iter().cloned());
        for j in 0..ncols {
            let mut e = DVector::zeros(ncols);
            e[j] = 1.0;
            for b in &basis {
                let proj = b.dot(&e);
                e -= proj * b;
            }
            let norm = e.norm();
            if norm > 1e-10 {
                e /= norm;
                cols.push(e.clone());
                basis.push(e);
            }
        }
    }
    let mut out = DMatrix::zeros(ncols, cols.len());
    for (j, c) in cols.iter().enumerate() {
        out.set_column(j, c);
    }
    out
}

/// Minimum-norm least-squares solution of A x = b; returns the solution and
/// the residual ‖Ax − b‖₂.
pub fn min_norm_solve(a: &DMatrix<f64>, b: &DVector<f64>, tol: f64) -> (DVector<f64>, f64) {
    if a.ncols() == 0 {
        return (DVector::zeros(0), b.norm());
    }
    let svd = a.clone().svd(true, true);
    let x = svd.solve(b, tol).expect("svd solve");
    let residual = (a * &x - b).norm();
    (x, residual)
}

/// Relative distance of `v` from the span of the orthonormal columns `basis`.
pub fn membership_residual(v: &DVector<f64>, basis: &DMatrix<f64>) -> f64 {
    let norm = v.norm();
    if norm == 0.0 {
        return 0.0;
    }
    let coeff = basis.transpose() * v;
    let proj = basis * coeff;
    (v - proj).norm() / norm
}

/// Maximum mutual membership residual of two column spans, after
/// orthonormalizing both: 0 means the spans agree.
pub fn mutual_span_residual(a: &DMatrix<f64>, b: &DMatrix<f64>, tol: f64) -> f64 {
    let qa = orthonormal_columns(a, tol);
    let qb = orthonormal_columns(b, tol);
    let mut worst = 0.0f64;
    for j in 0..qa.ncols() {
        worst = worst.max(membership_residual(&qa.column(j).into_owned(), &qb));
    }
    for j in 0..qb.ncols() {
        worst = worst.max(membership_residual(&qb.column(j).into_owned(), &qa));
    }
    worst
}

/// Flips column signs so the entry of largest magnitude in each column is
/// positive, making SVD-derived bases deterministic up to ordering.
pub fn fix_column_signs(m: &mut DMatrix<f64>) {
    for j in 0..m.ncols() {
        let mut best = 0usize;
        let mut best_abs = 0.0;
        for i in 0..m.nrows() {
            let a = m[(i, j)].abs();
            if a > best_abs {
                best_abs = a;
                best = i;
            }
        }
        if m[(best, j)] < 0.0 {
            for i in 0..m.nrows() {
                m[(i, j)] = -m[(i, j)];
            }
        }
    }
}

/// Rank with a relative singular value threshold.
pub fn rank(m: &DMatrix<f64>, tol: f64) -> usize {
    if m.ncols() == 0 || m.nrows() == 0 {
        return 0;
    }
    let svd = m.clone().svd(false, false);
    let smax = svd.singular_values.max();
    if smax == 0.0 {
        return 0;
    }
    svd.singular_values.iter().filter(|s| **s > tol * smax).count()
}

/// Condition number estimate from the extreme singular values.
pub fn condition_number(m: &DMatrix<f64>) -> f64 {
    let svd = m.clone().svd(false, false);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if smin == 0.0 {
        f64::INFINITY
    } else {
        smax / smin
    }
}
