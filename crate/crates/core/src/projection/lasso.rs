use ndarray::ArrayView2;

use crate::error::{Error, Result};

fn on_segment(p: (f64, f64), a: (f64, f64), b: (f64, f64)) -> bool {
    let cross = (b.0 - a.0) * (p.1 - a.1) - (b.1 - a.1) * (p.0 - a.0);
    let len = ((b.0 - a.0).powi(2) + (b.1 - a.1).powi(2)).sqrt();
    let tol = 1e-12 * len.max(1.0);
    cross.abs() <= tol * len.max(f64::MIN_POSITIVE)
        && p.0 >= a.0.min(b.0) - tol
        && p.0 <= a.0.max(b.0) + tol
        && p.1 >= a.1.min(b.1) - tol
        && p.1 <= a.1.max(b.1) + tol
}

/// Even-odd rule with points on an edge counted as inside.
pub fn point_in_polygon(p: (f64, f64), polygon: &[(f64, f64)]) -> bool {
    let mut inside = false;
    let mut j = polygon.len() - 1;
    for i in 0..polygon.len() {
        let (a, b) = (polygon[i], polygon[j]);
        if on_segment(p, a, b) {
            return true;
        }
        if (a.1 > p.1) != (b.1 > p.1) {
            let x = a.0 + (p.1 - a.1) * (b.0 - a.0) / (b.1 - a.1);
            if p.0 < x {
                inside = !inside;
            }
        }
        j = i;
    }
    inside
}

/// Row indices of `coords` inside `polygon`, ascending.
pub fn lasso_select(coords: ArrayView2<f64>, polygon: &[(f64, f64)]) -> Result<Vec<usize>> {
    if polygon.len() < 3 {
        return Err(Error::DegeneratePolygon(format!("{} vertices", polygon.len())));
    }
    if polygon.iter().any(|(x, y)| !x.is_finite() || !y.is_finite()) {
        return Err(Error::DegeneratePolygon("non-finite vertex".into()));
    }
    Ok(coords
        .rows()
        .into_iter()
        .enumerate()
        .filter(|(_, r)| point_in_polygon((r[0], r[1]), polygon))
        .map(|(i, _)| i)
        .collect())
}
