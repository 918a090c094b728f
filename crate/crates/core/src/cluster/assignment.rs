/// Maximum-weight perfect matching on a square weight matrix
/// (Hungarian algorithm with potentials, O(n³)).
///
/// Returns `assign` where row `r` is matched to column `assign[r]`.
pub fn max_weight_assignment(weights: &[Vec<f64>]) -> Vec<usize> {
    let n = weights.len();
    if n == 0 {
        return Vec::new();
    }
    assert!(weights.iter().all(|r| r.len() == n), "weight matrix must be square");
    let top = weights.iter().flatten().copied().fold(f64::NEG_INFINITY, f64::max);
    // minimise cost = top - weight; 1-based indexing with a virtual column 0
    let cost = |r: usize, c: usize| top - weights[r - 1][c - 1];
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut row_of = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for r in 1..=n {
        row_of[0] = r;
        let mut col = 0usize;
        let mut min_v = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[col] = true;
            let row = row_of[col];
            let mut delta = f64::INFINITY;
            let mut next = 0usize;
            for c in 1..=n {
                if used[c] {
                    continue;
                }
                let reduced = cost(row, c) - u[row] - v[c];
                if reduced < min_v[c] {
                    min_v[c] = reduced;
                    way[c] = col;
                }
                if min_v[c] < delta {
                    delta = min_v[c];
                    next = c;
                }
            }
            for c in 0..=n {
                if used[c] {
                    u[row_of[c]] += delta;
                    v[c] -= delta;
                } else {
                    min_v[c] -= delta;
                }
            }
            col = next;
            if row_of[col] == 0 {
                break;
            }
        }
        loop {
            let prev = way[col];
            row_of[col] = row_of[prev];
            col = prev;
            if col == 0 {
                break;
            }
        }
    }
    let mut assign = vec![0usize; n];
    for c in 1..=n {
        if row_of[c] > 0 {
            assign[row_of[c] - 1] = c - 1;
        }
    }
    assign
}
