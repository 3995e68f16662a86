//! Materialized convex classes (segments and triangles of prediction vectors)
//! and their exact empirical risk minimizers.

use super::star::{line_search_segment, LINE_SEARCH_TOL};
use super::{risk_of, validate_inputs};
use crate::error::{Error, Result};
use crate::loss_models::LossModel;
use crate::search::golden_section;

fn grid_count(resolution: f64) -> Result<usize> {
    if !(resolution > 0.0 && resolution <= 1.0) {
        return Err(Error::invalid(format!(
            "grid resolution must lie in (0, 1], got {resolution}"
        )));
    }
    Ok((1.0 / resolution).round() as usize)
}

fn combine(weights: &[f64], vertices: &[Vec<f64>]) -> Vec<f64> {
    (0..vertices[0].len())
        .map(|i| weights.iter().zip(vertices).map(|(w, v)| w * v[i]).sum())
        .collect()
}

/// Members `lambda a + (1 - lambda) b` for `lambda` on a grid of the given step.
pub fn materialize_segment(a: &[f64], b: &[f64], resolution: f64) -> Result<Vec<Vec<f64>>> {
    let m = grid_count(resolution)?;
    let vertices = [a.to_vec(), b.to_vec()];
    Ok((0..=m)
        .map(|j| {
            let l = j as f64 / m as f64;
            combine(&[l, 1.0 - l], &vertices)
        })
        .collect())
}

/// Barycentric grid over the triangle spanned by three prediction vectors.
pub fn materialize_simplex(vertices: &[Vec<f64>; 3], resolution: f64) -> Result<Vec<Vec<f64>>> {
    let m = grid_count(resolution)?;
    let mut members = Vec::with_capacity((m + 1) * (m + 2) / 2);
    for i in 0..=m {
        for j in 0..=(m - i) {
            let w = [
                i as f64 / m as f64,
                j as f64 / m as f64,
                (m - i - j) as f64 / m as f64,
            ];
            members.push(combine(&w, vertices));
        }
    }
    Ok(members)
}

/// Exact risk minimizer over the segment `[a, b]`: `(lambda, risk)`.
pub fn segment_erm(model: &LossModel, a: &[f64], b: &[f64], targets: &[f64]) -> Result<(f64, f64)> {
    line_search_segment(model, a, b, targets)
}

/// Exact risk minimizer over a triangle of prediction vectors: barycentric
/// weights and risk. The inner minimum over each slice of fixed first weight
/// is convex in that weight, so nested golden-section searches suffice.
pub fn simplex_erm(
    model: &LossModel,
    vertices: &[Vec<f64>; 3],
    targets: &[f64],
) -> Result<([f64; 3], f64)> {
    for v in vertices {
        validate_inputs(model, v, targets)?;
    }
    let inner = |s: f64| {
        golden_section(
            |u| {
                let w = [s, (1.0 - s) * u, (1.0 - s) * (1.0 - u)];
                risk_of(model, &combine(&w, vertices), targets)
            },
            0.0,
            1.0,
            LINE_SEARCH_TOL,
        )
    };
    let (s, _) = golden_section(|s| inner(s).1, 0.0, 1.0, LINE_SEARCH_TOL);
    let (u, risk) = inner(s);
    Ok(([s, (1.0 - s) * u, (1.0 - s) * (1.0 - u)], risk))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn segment_grid_has_endpoints() {
        let members = materialize_segment(&[1.0, 2.0], &[3.0, 4.0], 0.25).unwrap();
        assert_eq!(members.len(), 5);
        assert_eq!(members[0], vec![3.0, 4.0]);
        assert_eq!(members[4], vec![1.0, 2.0]);
    }

    #[test]
    fn simplex_erm_beats_grid() {
        let sq = LossModel::square(3.0).unwrap();
        let v = [
            vec![1.0, 0.0, 0.5],
            vec![-1.0, 1.0, 0.0],
            vec![0.0, -1.0, 1.0],
        ];
        let t = [0.1, 0.2, -0.3];
        let (w, risk) = simplex_erm(&sq, &v, &t).unwrap();
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let grid = materialize_simplex(&v, 0.01).unwrap();
        let best = grid
            .iter()
            .map(|g| risk_of(&sq, g, &t))
            .fold(f64::INFINITY, f64::min);
        assert!(risk <= best + 1e-12);
    }
}
