use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::estimators::{dot, max_row_norm, FunctionClass, Predictor, Sample};
use crate::loss_models::link_softmax;
use crate::seed::rng_from;

/// Features are standard normal vectors scaled back onto this radius when longer.
pub const FEATURE_RADIUS: f64 = 10.0;

fn clipped_normal<R: Rng>(rng: &mut R, d: usize) -> Vec<f64> {
    let mut x: Vec<f64> = (0..d).map(|_| StandardNormal.sample(rng)).collect();
    let norm = dot(&x, &x).sqrt();
    if norm > FEATURE_RADIUS {
        x.iter_mut().for_each(|v| *v *= FEATURE_RADIUS / norm);
    }
    x
}

fn draw_label<R: Rng>(rng: &mut R, probs: &[f64]) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (j, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return j + 1;
        }
    }
    probs.len()
}

/// Multinomial logistic data: clipped standard normal features, labels in
/// `1..=k` drawn from `softmax(W_true x)`.
pub fn gen_logistic_data(
    n: usize,
    d: usize,
    k: usize,
    bound: f64,
    w_true: &[Vec<f64>],
    seed: u64,
) -> Result<Sample> {
    if w_true.len() != k || w_true.iter().any(|r| r.len() != d) {
        return Err(Error::invalid(format!("W_true must be {k} x {d}")));
    }
    if max_row_norm(w_true) > bound * (1.0 + 1e-12) {
        return Err(Error::invalid(format!(
            "W_true row norms exceed B = {bound}"
        )));
    }
    let mut rng = rng_from(seed, &[]);
    let mut features = Vec::with_capacity(n);
    let mut targets = Vec::with_capacity(n);
    for _ in 0..n {
        let x = clipped_normal(&mut rng, d);
        let scores: Vec<f64> = w_true.iter().map(|row| dot(row, &x)).collect();
        targets.push(draw_label(&mut rng, &link_softmax(&scores)) as f64);
        features.push(x);
    }
    Sample::new(features, targets)
}

/// Clipped standard normal features only (oracle samples for the logistic model).
pub fn gen_logistic_features(n: usize, d: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = rng_from(seed, &[]);
    (0..n).map(|_| clipped_normal(&mut rng, d)).collect()
}

/// `Y = b + sigma N(0, 1)` with the two-point class `{+c, -c}`.
pub fn gen_twopoint_data(
    n: usize,
    c: f64,
    b: f64,
    sigma: f64,
    seed: u64,
) -> Result<(Sample, FunctionClass)> {
    if !(b.abs() < c) {
        return Err(Error::invalid(format!(
            "need |b| < c, got b = {b}, c = {c}"
        )));
    }
    let mut rng = rng_from(seed, &[]);
    let targets = (0..n)
        .map(|_| {
            let z: f64 = StandardNormal.sample(&mut rng);
            b + sigma * z
        })
        .collect();
    let class = FunctionClass::finite(vec![Predictor::constant(c), Predictor::constant(-c)])?;
    Ok((Sample::targets_only(targets)?, class))
}

/// The p-loss regression design: features uniform on `[-1, 1]^3`, members
/// `x -> w_j . (x1, x3)` with `w_j = r (cos 2 pi j / M, sin 2 pi j / M)`, and
/// `Y = w_0 . (x1, x3) + s x2 + U[-h, h]`. The `x2` term is invisible to
/// every member, so the model is misspecified; by symmetry member 0 is the
/// risk minimizer over the convex hull of the class.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PLossDesign {
    pub members: usize,
    pub radius: f64,
    pub misspecification: f64,
    pub noise: f64,
}

impl PLossDesign {
    pub fn member_weights(&self) -> Vec<[f64; 2]> {
        (0..self.members)
            .map(|j| {
                let a = 2.0 * std::f64::consts::PI * j as f64 / self.members as f64;
                [self.radius * a.cos(), self.radius * a.sin()]
            })
            .collect()
    }

    /// Largest `|Y|` the design can produce.
    pub fn target_bound(&self) -> f64 {
        self.radius * 2f64.sqrt() + self.misspecification.abs() + self.noise
    }

    /// `n` examples; with `antithetic`, example `2i + 1` flips `(x1, x3)` of
    /// example `2i`, which preserves the distribution.
    pub fn sample(&self, n: usize, seed: u64, antithetic: bool) -> Result<Sample> {
        let mut rng = rng_from(seed, &[]);
        let w0 = self.member_weights()[0];
        let mut features = Vec::with_capacity(n);
        let mut targets = Vec::with_capacity(n);
        let mut i = 0;
        while i < n {
            let x: [f64; 3] = std::array::from_fn(|_| rng.random_range(-1.0..=1.0));
            let eps = if self.noise > 0.0 {
                rng.random_range(-self.noise..=self.noise)
            } else {
                0.0
            };
            let z = self.misspecification * x[1] + eps;
            features.push(x.to_vec());
            targets.push(w0[0] * x[0] + w0[1] * x[2] + z);
            i += 1;
            if antithetic && i < n {
                features.push(vec![-x[0], x[1], -x[2]]);
                targets.push(-w0[0] * x[0] - w0[1] * x[2] + z);
                i += 1;
            }
        }
        Sample::new(features, targets)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_weights_give_uniform_labels() {
        let w = vec![vec![0.0, 0.0]; 3];
        let s = gen_logistic_data(10_000, 2, 3, 1.0, &w, 4).unwrap();
        let mut counts = [0.0f64; 3];
        for &y in &s.targets {
            counts[y as usize - 1] += 1.0;
        }
        let expected = 10_000.0 / 3.0;
        let chi2: f64 = counts
            .iter()
            .map(|c| (c - expected).powi(2) / expected)
            .sum();
        // 0.999 quantile of chi-square with 2 degrees of freedom
        assert!(chi2 < 13.8155, "{chi2}");
    }

    #[test]
    fn same_seed_same_sample() {
        let w = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        let a = gen_logistic_data(50, 2, 2, 3.0, &w, 11).unwrap();
        let b = gen_logistic_data(50, 2, 2, 3.0, &w, 11).unwrap();
        assert_eq!(a, b);
        assert!(a
            .features
            .iter()
            .all(|x| dot(x, x).sqrt() <= FEATURE_RADIUS + 1e-12));
    }

    #[test]
    fn extreme_weights_concentrate_labels() {
        // With W = (10, -10) in one coordinate the label follows the sign of x1.
        let w = vec![vec![10.0], vec![-10.0]];
        let s = gen_logistic_data(10_000, 1, 2, 10.0, &w, 12).unwrap();
        let agree = s
            .features
            .iter()
            .zip(&s.targets)
            .filter(|(x, &y)| (x[0] > 0.0) == (y == 1.0))
            .count();
        assert!(agree as f64 / 1e4 > 0.9);
    }

    #[test]
    fn twopoint_examples() {
        let (s, class) = gen_twopoint_data(1, 1.0, 0.1, 0.0, 1).unwrap();
        assert_eq!(s.targets, vec![0.1]);
        assert_eq!(class.members().unwrap().len(), 2);
        assert!(gen_twopoint_data(5, 1.0, 1.0, 1.0, 1).is_err());
    }

    #[test]
    fn ploss_design_stays_bounded() {
        let design = PLossDesign {
            members: 16,
            radius: 0.4,
            misspecification: 0.3,
            noise: 0.1,
        };
        let s = design.sample(1001, 5, true).unwrap();
        assert_eq!(s.len(), 1001);
        assert!(s.targets.iter().all(|y| y.abs() <= design.target_bound()));
        assert!(design.target_bound() <= 1.0);
        assert_eq!(s.features[1][0], -s.features[0][0]);
    }
}
