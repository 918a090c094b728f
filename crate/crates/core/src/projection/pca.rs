use ndarray::{Array1, Array2, ArrayView2, Axis};

/// Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.
/// Returns eigenvalues in descending order and the matching unit
/// eigenvectors as columns.
pub fn symmetric_eigen(a: &Array2<f64>) -> (Array1<f64>, Array2<f64>) {
    let n = a.nrows();
    let mut a = a.clone();
    let mut v = Array2::<f64>::eye(n);
    let scale = a.iter().map(|x| x * x).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[[i, j]] * a[[i, j]])
            .sum::<f64>()
            .sqrt();
        if off <= 1e-15 * scale {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[[p, q]];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[[q, q]] - a[[p, p]]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[[k, p]], a[[k, q]]);
                    a[[k, p]] = c * akp - s * akq;
                    a[[k, q]] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[[p, k]], a[[q, k]]);
                    a[[p, k]] = c * apk - s * aqk;
                    a[[q, k]] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let (vkp, vkq) = (v[[k, p]], v[[k, q]]);
                    v[[k, p]] = c * vkp - s * vkq;
                    v[[k, q]] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[[j, j]].total_cmp(&a[[i, i]]).then(i.cmp(&j)));
    let values = Array1::from_iter(order.iter().map(|&i| a[[i, i]]));
    let vectors = v.select(Axis(1), &order);
    (values, vectors)
}

/// Top-two principal component scores of the centered rows. Each axis is
/// signed so its largest-magnitude loading is positive. The flag is set
/// when the data has no variance.
pub fn pca(h: ArrayView2<f64>) -> (Array2<f64>, bool) {
    let n = h.nrows();
    let mean = h.mean_axis(Axis(0)).expect("non-empty");
    let centered = &h - &mean;
    let cov = centered.t().dot(&centered) / n as f64;
    let (values, mut vectors) = symmetric_eigen(&cov);
    let total: f64 = values.iter().map(|v| v.abs()).sum();
    if total <= 1e-300 {
        return (Array2::zeros((n, 2)), true);
    }
    let mut basis = Array2::zeros((h.ncols(), 2));
    for c in 0..2.min(h.ncols()) {
        let mut col = vectors.column_mut(c);
        let pivot = col
            .iter()
            .copied()
            .fold(0.0f64, |best, x| if x.abs() > best.abs() { x } else { best });
        if pivot < 0.0 {
            col.mapv_inplace(|x| -x);
        }
        basis.column_mut(c).assign(&col);
    }
    (centered.dot(&basis), false)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn eigen_reconstructs_matrix() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let b = Array2::from_shape_simple_fn((6, 6), || rng.gen_range(-1.0..1.0));
        let a = b.t().dot(&b);
        let (vals, vecs) = symmetric_eigen(&a);
        let rebuilt = vecs.dot(&Array2::from_diag(&vals)).dot(&vecs.t());
        for (x, y) in rebuilt.iter().zip(a.iter()) {
            assert!((x - y).abs() < 1e-10);
        }
        assert!(vals.windows(2).into_iter().all(|w| w[0] >= w[1]));
        let gram = vecs.t().dot(&vecs);
        for ((i, j), g) in gram.indexed_iter() {
            assert!((g - f64::from(u8::from(i == j))).abs() < 1e-10);
        }
    }

    #[test]
    fn diagonal_input() {
        let (vals, _) = symmetric_eigen(&array![[1.0, 0.0], [0.0, 3.0]]);
        assert_eq!(vals, array![3.0, 1.0]);
    }

    #[test]
    fn planar_points_keep_distances() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        // orthonormal basis of a tilted plane in 3D
        let u = array![1.0, 1.0, 0.0] / 2f64.sqrt();
        let w = array![1.0, -1.0, 2.0] / 6f64.sqrt();
        let pts = Array2::from_shape_fn((25, 3), |_| 0.0);
        let mut pts = pts;
        for mut row in pts.rows_mut() {
            let (s, t) = (rng.gen_range(-3.0..3.0), rng.gen_range(-1.0..1.0));
            row.assign(&(&u * s + &w * t + array![0.5, -2.0, 1.0]));
        }
        let (coords, degenerate) = pca(pts.view());
        assert!(!degenerate);
        for i in 0..25 {
            for j in 0..25 {
                let d3 = (&pts.row(i) - &pts.row(j)).mapv(|x| x * x).sum().sqrt();
                let d2 = (&coords.row(i) - &coords.row(j)).mapv(|x| x * x).sum().sqrt();
                assert!((d3 - d2).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn centered_and_orthogonal() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let h = Array2::from_shape_simple_fn((50, 8), || rng.gen_range(-1.0..1.0));
        let (coords, _) = pca(h.view());
        let means = coords.mean_axis(Axis(0)).unwrap();
        assert!(means.iter().all(|m| m.abs() < 1e-9));
        let dot = coords.column(0).dot(&coords.column(1));
        assert!(dot.abs() < 1e-8);
        assert!(coords.column(0).dot(&coords.column(0)) >= coords.column(1).dot(&coords.column(1)));
    }

    #[test]
    fn constant_rows_are_degenerate() {
        let h = Array2::from_elem((4, 3), 2.5);
        let (coords, degenerate) = pca(h.view());
        assert!(degenerate);
        assert!(coords.iter().all(|&c| c == 0.0));
    }
}
