use offset_core::complexity_bounds::{
    chaining_bound, chaining_value, offset_complexity_mc, packing_bound, BoundInputs,
    EntropyProfile, EntropySource, GreedyCover, OffsetConfig, OffsetKind,
};
use offset_core::estimators::{
    erm_finite, line_search_segment, star_select, FunctionClass, Predictor, Sample,
};
use offset_core::experiments::fit_rate;
use offset_core::loss_models::{eval_loss, regularize_simplex, LossModel};
use offset_core::margins::{bregman_gap, empirical_metric, suite_models};
use proptest::prelude::*;

fn vec_in(lo: f64, hi: f64, n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(lo..hi, n)
}

fn risk(model: &LossModel, preds: &[f64], targets: &[f64]) -> f64 {
    preds
        .iter()
        .zip(targets)
        .map(|(&p, &t)| eval_loss(model, p, t).unwrap())
        .sum::<f64>()
        / targets.len() as f64
}

fn l2(a: &[f64], b: &[f64]) -> f64 {
    (a.iter().zip(b).map(|(u, v)| (u - v).powi(2)).sum::<f64>() / a.len() as f64).sqrt()
}

/// Smallest number of points of `vs` whose `eps`-balls cover `vs`.
fn min_internal_cover(vs: &[Vec<f64>], eps: f64) -> usize {
    let m = vs.len();
    (1..=m)
        .find(|&size| {
            (0u32..1 << m)
                .filter(|s| s.count_ones() as usize == size)
                .any(|set| {
                    vs.iter()
                        .all(|v| (0..m).any(|c| set >> c & 1 == 1 && l2(v, &vs[c]) <= eps))
                })
        })
        .unwrap()
}

fn bound_inputs(h: f64, n: f64) -> BoundInputs {
    BoundInputs {
        m: 1.0,
        eta: 0.5,
        n,
        rho: 0.05,
        eps: 0.01,
        alpha: None,
        gamma: Some(1.0),
        c: 1.0,
        entropy: EntropyProfile::new(EntropySource::Fixed { h }),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn mu_d_convexity_on_random_pairs(u in 0.0..1.0f64, v in 0.0..1.0f64, w in 0.0..1.0f64) {
        for model in suite_models().unwrap() {
            let (lo, hi) = model.domain;
            let x = lo + u * (hi - lo);
            let y = lo + v * (hi - lo);
            let t = if model.kind.is_likelihood() {
                if matches!(model.kind, offset_core::LossKind::Glm { .. }) { 1.0 } else { 0.0 }
            } else {
                let b = model.bound.unwrap_or(1.0);
                -b + 2.0 * w * b
            };
            let gap = bregman_gap(&model, x, y, t).unwrap();
            let modulus = model.modulus.modulus(&model, x, y, t).unwrap();
            prop_assert!(gap >= modulus - 1e-8, "{:?}: gap {} < modulus {}", model.kind, gap, modulus);
        }
    }

    #[test]
    fn empirical_metric_triangle(
        f in vec_in(-1.0, 1.0, 12), g in vec_in(-1.0, 1.0, 12), h in vec_in(-1.0, 1.0, 12),
        t in vec_in(-1.0, 1.0, 12),
    ) {
        let models = [LossModel::square(1.0).unwrap(), LossModel::p_loss(3.0, 1.0).unwrap()];
        for model in &models {
            let d = |a: &[f64], b: &[f64]| empirical_metric(model, a, b, &t).unwrap();
            prop_assert!(d(&f, &h) <= d(&f, &g) + d(&g, &h) + 1e-12);
            prop_assert!(d(&f, &f).abs() < 1e-12);
        }
        let log = LossModel::log(0.01).unwrap();
        let p = |v: &[f64]| v.iter().map(|x| 0.01 + 0.99 * (x + 1.0) / 2.0).collect::<Vec<_>>();
        let (pf, pg, ph) = (p(&f), p(&g), p(&h));
        let zeros = vec![0.0; 12];
        let d = |a: &[f64], b: &[f64]| empirical_metric(&log, a, b, &zeros).unwrap();
        prop_assert!(d(&pf, &ph) <= d(&pf, &pg) + d(&pg, &ph) + 1e-12);
    }

    #[test]
    fn offset_grows_with_the_class(
        members in prop::collection::vec(vec_in(-1.0, 1.0, 10), 2..6),
        t in vec_in(-1.0, 1.0, 10),
        cut in 1usize..6,
        seed in 0u64..1000,
        kind in prop::sample::select(vec![OffsetKind::MuD, OffsetKind::ExpConcave, OffsetKind::UniformConvex]),
    ) {
        let model = LossModel::square(1.0).unwrap();
        let cut = cut.min(members.len());
        let config = OffsetConfig { kind, draws: 16, lambda_levels: 8, seed };
        let small = offset_complexity_mc(&model, &members[..cut], &members[0], &t, &config).unwrap();
        let big = offset_complexity_mc(&model, &members, &members[0], &t, &config).unwrap();
        for (a, b) in small.per_draw_sup.iter().zip(&big.per_draw_sup) {
            prop_assert!(a <= b);
            prop_assert!(*a >= 0.0);
        }
        // finer mixing levels contain the coarser ones
        let fine = OffsetConfig { lambda_levels: 16, ..config };
        let refined = offset_complexity_mc(&model, &members, &members[0], &t, &fine).unwrap();
        prop_assert!(refined.mean >= big.mean);
    }

    #[test]
    fn packing_monotone(h in 0.0..50.0f64, dh in 0.0..10.0f64, n in 10.0..1e5f64, dn in 1.0..1e4f64) {
        let base = packing_bound(&bound_inputs(h, n)).unwrap();
        prop_assert!(packing_bound(&bound_inputs(h + dh, n)).unwrap() >= base);
        prop_assert!(packing_bound(&bound_inputs(h, n + dn)).unwrap() <= base);
    }

    #[test]
    fn chaining_infimum_below_sampled_alphas(
        q in 0.2..3.5f64, a in 0.5..3.0f64, n in 100.0..1e5f64,
        alphas in prop::collection::vec(0.0..1.0f64, 20),
    ) {
        let mut inputs = bound_inputs(0.0, n);
        inputs.entropy = EntropyProfile::new(EntropySource::PowerLaw { a, q });
        let inf = chaining_bound(&inputs).unwrap();
        for alpha in alphas {
            prop_assert!(inf.value <= chaining_value(&inputs, alpha).unwrap());
        }
        let mut bigger = inputs.clone();
        bigger.n *= 2.0;
        prop_assert!(chaining_value(&bigger, 0.3).unwrap() <= chaining_value(&inputs, 0.3).unwrap());
    }

    #[test]
    fn greedy_cover_between_minimal_covers(
        vs in prop::collection::vec(vec_in(-1.0, 1.0, 3), 1..8),
        eps in 0.05..1.5f64,
    ) {
        let greedy = GreedyCover::new(&vs).unwrap().size_at(eps);
        prop_assert!(min_internal_cover(&vs, eps) <= greedy);
        prop_assert!(greedy <= min_internal_cover(&vs, eps / 2.0));
    }

    #[test]
    fn erm_ties_go_to_lowest_index(values in prop::collection::vec(-1.0..1.0f64, 2..8), dup in 0usize..8, targets in vec_in(-1.0, 1.0, 5)) {
        let dup = dup % values.len();
        let mut members: Vec<Predictor> = values.iter().map(|&v| Predictor::constant(v)).collect();
        members.push(Predictor::constant(values[dup]));
        let model = LossModel::square(2.0).unwrap();
        let sample = Sample::targets_only(targets.clone()).unwrap();
        let (idx, r) = erm_finite(&model, &FunctionClass::finite(members.clone()).unwrap(), &sample).unwrap();
        let risks: Vec<f64> = values.iter().map(|&v| risk(&model, &vec![v; 5], &targets)).collect();
        let first = (0..risks.len()).find(|&i| risks[i] == r).unwrap();
        prop_assert_eq!(idx, first);
        prop_assert!(idx < values.len());
    }

    #[test]
    fn star_beats_every_segment_point(
        members in prop::collection::vec(vec_in(-1.0, 1.0, 8), 2..8),
        targets in vec_in(-1.0, 1.0, 8),
    ) {
        let model = LossModel::square(1.0).unwrap();
        let sel = star_select(&model, &members, &targets);
        prop_assert!(sel.star_risk <= sel.erm_risk);
        let erm = &members[sel.erm];
        for g in &members {
            for i in 0..=20 {
                let l = i as f64 / 20.0;
                let mix: Vec<f64> = erm.iter().zip(g).map(|(a, b)| l * a + (1.0 - l) * b).collect();
                prop_assert!(sel.star_risk <= risk(&model, &mix, &targets) + 1e-12);
            }
            let (_, seg) = line_search_segment(&model, erm, g, &targets).unwrap();
            prop_assert!(sel.star_risk <= seg + 1e-12);
        }
    }

    #[test]
    fn simplex_regularizer_is_a_floored_distribution(raw in prop::collection::vec(0.0..1.0f64, 2..10), delta in 0.0..0.5f64) {
        let total: f64 = raw.iter().sum::<f64>().max(1e-9);
        let probs: Vec<f64> = raw.iter().map(|p| p / total).collect();
        let k = probs.len() as f64;
        let out = regularize_simplex(&probs, delta).unwrap();
        prop_assert!((out.iter().sum::<f64>() - probs.iter().sum::<f64>() * (1.0 - delta) - delta).abs() < 1e-12);
        prop_assert!(out.iter().all(|&p| p >= delta / k - 1e-15));
    }

    #[test]
    fn fit_rate_recovers_power_laws(slope in -2.0..0.5f64, scale in 0.01..10.0f64) {
        let rows: Vec<(f64, f64)> = [64.0, 128.0, 256.0, 512.0, 1024.0]
            .iter()
            .map(|&n: &f64| (n, scale * n.powf(slope)))
            .collect();
        let (s, i, r2) = fit_rate(&rows).unwrap();
        prop_assert!((s - slope).abs() < 1e-9);
        prop_assert!((i - scale.ln()).abs() < 1e-8);
        prop_assert!((r2 - 1.0).abs() < 1e-9 || slope.abs() < 1e-12);
    }
}
