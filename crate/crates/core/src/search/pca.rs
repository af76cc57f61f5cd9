use crate::scalar::Real;

const MAX_SWEEPS: usize = 100;

/// Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.
///
/// Returns eigenvalues in descending order and the matching eigenvectors as
/// rows of the second result.
pub fn symmetric_eigen<T: Real>(mut a: Vec<Vec<T>>) -> (Vec<T>, Vec<Vec<T>>) {
    let n = a.len();
    let mut v: Vec<Vec<T>> = (0..n)
        .map(|i| (0..n).map(|j| if i == j { T::one() } else { T::zero() }).collect())
        .collect();
    let eps = T::epsilon();
    for _ in 0..MAX_SWEEPS {
        let off: T = (0..n).flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[i][j] * a[i][j])
            .sum();
        let diag: T = (0..n).map(|i| a[i][i] * a[i][i]).sum();
        if off <= eps * eps * diag || off == T::zero() {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[p][q] == T::zero() {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (T::lit(2.0) * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + T::one()).sqrt());
                let c = T::one() / (t * t + T::one()).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[k][p], a[k][q]);
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[p][k], a[q][k]);
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
                for row in v.iter_mut() {
                    let (vp, vq) = (row[p], row[q]);
                    row[p] = c * vp - s * vq;
                    row[q] = s * vp + c * vq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[j][j].partial_cmp(&a[i][i]).unwrap_or(std::cmp::Ordering::Equal).then(i.cmp(&j)));
    let values = order.iter().map(|&i| a[i][i]).collect();
    let vectors = order.iter().map(|&i| (0..n).map(|k| v[k][i]).collect()).collect();
    (values, vectors)
}

/// Flips `v` so its first entry with magnitude above `tol` is positive.
fn orient<T: Real>(v: &mut [T], tol: T) {
    if let Some(first) = v.iter().find(|x| x.abs() > tol) {
        if *first < T::zero() {
            v.iter_mut().for_each(|x| *x = -*x);
        }
    }
}

/// Principal axes and 2-D scores of `rows` (each a point).
#[derive(Debug, Clone, PartialEq)]
pub struct Pca<T> {
    pub mean: Vec<T>,
    /// Unit loading vectors of the first two components.
    pub axes: [Vec<T>; 2],
    pub variances: [T; 2],
    pub coords: Vec<[T; 2]>,
}

/// Projects `rows` onto their first two principal components.
///
/// Works on the smaller of the covariance and Gram matrices. Each loading is
/// oriented so its first non-negligible entry is positive, which makes the
/// output deterministic. Zero-variance input projects to the origin.
pub fn pca_2d<T: Real>(rows: &[Vec<T>]) -> Pca<T> {
    let n = rows.len();
    let d = rows.first().map_or(0, Vec::len);
    let mut mean = vec![T::zero(); d];
    for r in rows {
        for (m, x) in mean.iter_mut().zip(r) {
            *m = *m + *x;
        }
    }
    let nn = T::from_usize_lossy(n.max(1));
    mean.iter_mut().for_each(|m| *m = *m / nn);
    // Residues at rounding level (e.g. identical points whose mean is inexact) become exact zeros.
    let snap = |a: T, m: T| {
        let d = a - m;
        if d.abs() <= T::lit(4.0) * T::epsilon() * a.abs().max(m.abs()) { T::zero() } else { d }
    };
    let x: Vec<Vec<T>> = rows.iter().map(|r| r.iter().zip(&mean).map(|(a, m)| snap(*a, *m)).collect()).collect();
    let denom = T::from_usize_lossy(n.saturating_sub(1).max(1));

    let mut axes = [vec![T::zero(); d], vec![T::zero(); d]];
    let mut variances = [T::zero(); 2];
    if n > 0 && d > 0 {
        let (vals, vecs) = if d <= n {
            let mut c = vec![vec![T::zero(); d]; d];
            for r in &x {
                for i in 0..d {
                    if r[i] == T::zero() {
                        continue;
                    }
                    for j in i..d {
                        c[i][j] = c[i][j] + r[i] * r[j];
                    }
                }
            }
            for i in 0..d {
                for j in i..d {
                    c[i][j] = c[i][j] / denom;
                    c[j][i] = c[i][j];
                }
            }
            symmetric_eigen(c)
        } else {
            let mut g = vec![vec![T::zero(); n]; n];
            for i in 0..n {
                for j in i..n {
                    let v: T = x[i].iter().zip(&x[j]).map(|(a, b)| *a * *b).sum::<T>() / denom;
                    g[i][j] = v;
                    g[j][i] = v;
                }
            }
            let (vals, us) = symmetric_eigen(g);
            // loading = Xᵀu / |Xᵀu|
            let vecs = us
                .into_iter()
                .map(|u| {
                    let mut l = vec![T::zero(); d];
                    for (xi, ui) in x.iter().zip(&u) {
                        for (lk, xk) in l.iter_mut().zip(xi) {
                            *lk = *lk + *xk * *ui;
                        }
                    }
                    let norm = l.iter().map(|v| *v * *v).sum::<T>().sqrt();
                    if norm > T::zero() {
                        l.iter_mut().for_each(|v| *v = *v / norm);
                    }
                    l
                })
                .collect();
            (vals, vecs)
        };
        let scale = vals.first().map_or(T::zero(), |v| v.abs());
        let tol = T::lit(1e-9);
        for k in 0..2.min(vals.len()) {
            if vals[k] > scale * T::lit(1e-12) && vals[k] > T::zero() {
                axes[k] = vecs[k].clone();
                orient(&mut axes[k], tol);
                variances[k] = vals[k];
            }
        }
    }
    let coords = x
        .iter()
        .map(|r| {
            let p = |a: &Vec<T>| r.iter().zip(a).map(|(u, v)| *u * *v).sum::<T>();
            [p(&axes[0]), p(&axes[1])]
        })
        .collect();
    Pca { mean, axes, variances, coords }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jacobi_recovers_known_spectrum() {
        let a: Vec<Vec<f64>> = vec![vec![2.0, 1.0, 0.0], vec![1.0, 2.0, 0.0], vec![0.0, 0.0, 5.0]];
        let (vals, vecs) = symmetric_eigen(a.clone());
        for (got, want) in vals.iter().zip([5.0, 3.0, 1.0]) {
            assert!((got - want).abs() < 1e-12);
        }
        for (lambda, v) in vals.iter().zip(&vecs) {
            for i in 0..3 {
                let av: f64 = (0..3).map(|j| a[i][j] * v[j]).sum();
                assert!((av - lambda * v[i]).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn identical_points_collapse() {
        let rows = vec![vec![0.3, 0.4, 0.5]; 3];
        let p = pca_2d(&rows);
        assert!(p.coords.iter().all(|c| c[0] == 0.0 && c[1] == 0.0));
    }

    #[test]
    fn line_projects_onto_first_axis_with_positive_loading() {
        let rows: Vec<Vec<f64>> = (0..10).map(|i| vec![-(i as f64), 2.0 * i as f64, 0.0]).collect();
        let p = pca_2d(&rows);
        assert!(p.axes[0][0] > 0.0);
        assert!((p.axes[0][1] / p.axes[0][0] + 2.0).abs() < 1e-9);
        assert!(p.coords.iter().all(|c| c[1].abs() < 1e-9));
        assert_eq!(p.variances[1], 0.0);
    }

    #[test]
    fn gram_and_covariance_paths_agree() {
        // 4 points in 6-d (Gram path) vs the same points padded to 12 rows (covariance path)
        let base: Vec<Vec<f64>> = vec![
            vec![1.0, 0.0, 2.0, 0.5, 0.0, 1.0],
            vec![0.0, 1.0, 0.3, 0.0, 2.0, 0.1],
            vec![2.0, 2.0, 0.0, 1.0, 1.0, 0.0],
            vec![0.5, 0.1, 1.0, 3.0, 0.0, 0.7],
        ];
        let a = pca_2d(&base);
        let mut rep = base.clone();
        rep.extend(base.clone());
        rep.extend(base.clone());
        let b = pca_2d(&rep);
        for k in 0..2 {
            for (x, y) in a.axes[k].iter().zip(&b.axes[k]) {
                assert!((x - y).abs() < 1e-8, "axis {k}: {:?} vs {:?}", a.axes[k], b.axes[k]);
            }
        }
    }
}
