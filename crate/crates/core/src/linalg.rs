//! Dense helpers shared by the simulation modules.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;

pub type Mat = DMatrix<f64>;
pub type Vector = DVector<f64>;
pub type CMat = DMatrix<Complex64>;

/// Eigenpairs of a real symmetric matrix, eigenvalues ascending.
pub fn eigh(s: &Mat) -> (Vec<f64>, Mat) {
    let n = s.nrows();
    let eig = SymmetricEigen::new(s.clone());
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vectors = Mat::zeros(n, n);
    for (j, &i) in order.iter().enumerate() {
        vectors.set_column(j, &eig.eigenvectors.column(i));
    }
    (values, vectors)
}

/// Eigenpairs of a complex Hermitian matrix, eigenvalues ascending.
pub fn eigh_complex(h: &CMat) -> (Vec<f64>, CMat) {
    let n = h.nrows();
    let eig = SymmetricEigen::new(h.clone());
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vectors = CMat::zeros(n, n);
    for (j, &i) in order.iter().enumerate() {
        vectors.set_column(j, &eig.eigenvectors.column(i));
    }
    (values, vectors)
}

/// exp(-i t H) for Hermitian H.
pub fn expm_hermitian(h: &CMat, t: f64) -> CMat {
    let (w, v) = eigh_complex(h);
    let mut vd = v.clone();
    for (j, &wj) in w.iter().enumerate() {
        let phase = Complex64::from_polar(1.0, -t * wj);
        for x in vd.column_mut(j).iter_mut() {
            *x *= phase;
        }
    }
    vd * v.adjoint()
}

/// Groups of indices connected through nonzero entries of `a`.
pub fn components(a: &Mat) -> Vec<Vec<usize>> {
    let n = a.nrows();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut [usize], mut x: usize) -> usize {
        while p[x] != x {
            p[x] = p[p[x]];
            x = p[x];
        }
        x
    }
    for j in 0..n {
        for i in 0..j {
            if a[(i, j)] != 0.0 || a[(j, i)] != 0.0 {
                let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
                if ri != rj {
                    parent[ri.max(rj)] = ri.min(rj);
                }
            }
        }
    }
    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut slot = vec![usize::MAX; n];
    for i in 0..n {
        let r = find(&mut parent, i);
        if slot[r] == usize::MAX {
            slot[r] = groups.len();
            groups.push(Vec::new());
        }
        groups[slot[r]].push(i);
    }
    groups
}

/// exp(t A) for real antisymmetric A.
///
/// Decoupled blocks are exponentiated separately; each block uses
/// exp(A) = cos(W) + A sinc(W) with W = sqrt(-A^2), so the result is orthogonal
/// up to round-off.
pub fn expm_antisymmetric(a: &Mat, t: f64) -> Mat {
    let n = a.nrows();
    let mut out = Mat::identity(n, n);
    for comp in components(a) {
        match comp.len() {
            1 => {}
            2 => {
                let w = t * a[(comp[0], comp[1])];
                let (s, c) = w.sin_cos();
                out[(comp[0], comp[0])] = c;
                out[(comp[1], comp[1])] = c;
                out[(comp[0], comp[1])] = s;
                out[(comp[1], comp[0])] = -s;
            }
            k => {
                let sub = Mat::from_fn(k, k, |i, j| t * a[(comp[i], comp[j])]);
                let e = expm_dense(&sub);
                for (i, &ci) in comp.iter().enumerate() {
                    for (j, &cj) in comp.iter().enumerate() {
                        out[(ci, cj)] = e[(i, j)];
                    }
                }
            }
        }
    }
    out
}

fn expm_dense(a: &Mat) -> Mat {
    let x = a.transpose() * a;
    let (w, v) = eigh(&x);
    let mut vc = v.clone();
    let mut vs = v.clone();
    for (j, &wj) in w.iter().enumerate() {
        let om = wj.max(0.0).sqrt();
        let sinc = if om < 1e-8 { 1.0 - om * om / 6.0 } else { om.sin() / om };
        vc.column_mut(j).scale_mut(om.cos());
        vs.column_mut(j).scale_mut(sinc);
    }
    let vt = v.transpose();
    let c = vc * &vt;
    let s = vs * &vt;
    c + a * s
}

/// One Newton-Schulz step towards the nearest orthogonal matrix.
pub fn reorthonormalize(o: &Mat) -> Mat {
    let n = o.nrows();
    let g = o.transpose() * o;
    o * (Mat::identity(n, n) * 3.0 - g) * 0.5
}

/// Max-abs deviation of OᵀO from the identity.
pub fn orthogonality_defect(o: &Mat) -> f64 {
    let n = o.nrows();
    (o.transpose() * o - Mat::identity(n, n)).amax()
}

/// Rotates the columns of `q` within their span to best match `reference`.
///
/// Returns the aligned basis and the smallest singular value of qᵀ·reference.
pub fn procrustes(q: &Mat, reference: &Mat) -> (Mat, f64) {
    let m = q.transpose() * reference;
    let svd = m.clone().svd(true, true);
    let u = svd.u.expect("svd u");
    let vt = svd.v_t.expect("svd v_t");
    let smin = svd.singular_values.iter().cloned().fold(f64::INFINITY, f64::min);
    (q * (u * vt), smin)
}

/// Orthonormal basis of the column span of `m` (rank from singular values above `tol`).
pub fn orthonormal_span(m: &Mat, tol: f64) -> Mat {
    if m.ncols() == 0 {
        return Mat::zeros(m.nrows(), 0);
    }
    let svd = m.clone().svd(true, false);
    let u = svd.u.expect("svd u");
    let keep: Vec<usize> = (0..svd.singular_values.len())
        .filter(|&i| svd.singular_values[i] > tol)
        .collect();
    let mut out = Mat::zeros(m.nrows(), keep.len());
    for (j, &i) in keep.iter().enumerate() {
        out.set_column(j, &u.column(i));
    }
    out
}

/// Pfaffian of a real antisymmetric matrix (Parlett-Reid with pivoting).
pub fn pfaffian(a: &Mat) -> f64 {
    let n = a.nrows();
    if n % 2 == 1 {
        return 0.0;
    }
    let mut a = a.clone();
    let mut pf = 1.0;
    let mut k = 0;
    while k + 1 < n {
        let mut kp = k + 1;
        for i in k + 2..n {
            if a[(i, k)].abs() > a[(kp, k)].abs() {
                kp = i;
            }
        }
        if kp != k + 1 {
            a.swap_rows(k + 1, kp);
            a.swap_columns(k + 1, kp);
            pf = -pf;
        }
        if a[(k + 1, k)] == 0.0 {
            return 0.0;
        }
        pf *= a[(k, k + 1)];
        if k + 2 < n {
            let piv = a[(k, k + 1)];
            let tau: Vec<f64> = (k + 2..n).map(|j| a[(k, j)] / piv).collect();
            let col: Vec<f64> = (k + 2..n).map(|i| a[(i, k + 1)]).collect();
            for (ii, i) in (k + 2..n).enumerate() {
                for (jj, j) in (k + 2..n).enumerate() {
                    a[(i, j)] += tau[ii] * col[jj] - col[ii] * tau[jj];
                }
            }
        }
        k += 2;
    }
    pf
}

/// Antisymmetric outer product x yᵀ − y xᵀ.
pub fn wedge(x: &Vector, y: &Vector) -> Mat {
    x * y.transpose() - y * x.transpose()
}
