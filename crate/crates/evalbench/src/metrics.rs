//! Layout statistics over labeled point sets.

use ndarray::{Array1, ArrayView2};

fn dist(a: ndarray::ArrayView1<f64>, b: ndarray::ArrayView1<f64>) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Mean intra-class pairwise distance divided by mean inter-class pairwise
/// distance. Lower means tighter, better separated classes.
pub fn intra_inter_ratio(points: ArrayView2<f64>, labels: &[usize]) -> f64 {
    let (mut intra, mut n_intra, mut inter, mut n_inter) = (0.0, 0usize, 0.0, 0usize);
    for i in 0..points.nrows() {
        for j in i + 1..points.nrows() {
            let d = dist(points.row(i), points.row(j));
            if labels[i] == labels[j] {
                intra += d;
                n_intra += 1;
            } else {
                inter += d;
                n_inter += 1;
            }
        }
    }
    (intra / n_intra.max(1) as f64) / (inter / n_inter.max(1) as f64)
}

/// Per-class mean rows, indexed by class id.
pub fn centroids(points: ArrayView2<f64>, labels: &[usize]) -> Vec<Array1<f64>> {
    let k = labels.iter().copied().max().map_or(0, |m| m + 1);
    let mut sums = vec![Array1::zeros(points.ncols()); k];
    let mut counts = vec![0usize; k];
    for (row, &l) in points.rows().into_iter().zip(labels) {
        sums[l] += &row;
        counts[l] += 1;
    }
    sums.into_iter().zip(counts).map(|(s, c)| s / c.max(1) as f64).collect()
}

/// Euclidean distance between the centroids of classes `a` and `b`.
pub fn centroid_distance(centroids: &[Array1<f64>], a: usize, b: usize) -> f64 {
    dist(centroids[a].view(), centroids[b].view())
}
