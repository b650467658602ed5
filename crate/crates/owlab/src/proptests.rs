//! Randomized checks of the structural invariants.

use std::sync::Arc;

use crate::almostdiag::{ad_apply, ad_compose_check, canonical_ad_matrix, ADParams};
use crate::dyadic::{babc_kernel, babc_raw};
use crate::lpfilters::{build_lp_pair, partition_check, FrequencyGrid};
use crate::operators::{sparse_apply, Coefficient, SampledFunction, SparseFamily};
use crate::optim::SphereSearch;
use crate::seqspace::{
    rescale_map, rescaled_params, seq_norm, DyadicSequence, NormFamily, NormSource, SpaceKind, SpaceParams,
};
use crate::traceext::{lift_sequence, restrict_sequence, trace_norm_check, trace_source_params, TraceOffset};
use crate::weights::{rho_lp, LocalNorm, PiecewiseGrid, Side};
use crate::{BabcParams, DyadicCube, GridWindow, Quadrature, WeightModel};
use proptest::prelude::*;

fn cube1() -> impl Strategy<Value = DyadicCube> {
    (-6i32..8, -40i64..40).prop_map(|(j, k)| DyadicCube::new(j, vec![k]))
}

fn cube2() -> impl Strategy<Value = DyadicCube> {
    (-4i32..6, -20i64..20, -20i64..20).prop_map(|(j, a, b)| DyadicCube::new(j, vec![a, b]))
}

fn rel(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / a.abs().max(b.abs())
    }
}

/// Two-coordinate diagonal power weight on the line; `V` and `V^{-1}` are
/// locally `p`-integrable for every `p < 4`.
fn diag_weight() -> impl Strategy<Value = WeightModel> {
    (0.0f64..1.0, 0.0f64..1.0, -0.24f64..0.24, -0.24f64..0.24)
        .prop_map(|(c1, c2, b1, b2)| WeightModel::diagonal_power(1, 2.0, vec![vec![c1], vec![c2]], vec![b1, b2]).unwrap())
}

fn sub_cube_of_unit() -> impl Strategy<Value = DyadicCube> {
    (0i32..5).prop_flat_map(|j| (0i64..(1i64 << j)).prop_map(move |k| DyadicCube::new(j, vec![k])))
}

fn vector(m: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.0f64..1.0, m).prop_filter("nonzero", |v| v.iter().any(|x| x.abs() > 1e-3))
}

fn window(levels: i32) -> Arc<GridWindow> {
    Arc::new(GridWindow::unit(1, 0, levels).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn kernel_on_the_diagonal(q in cube2(), a in 0.0f64..3.0, b in 0.0f64..3.0, c in 0.0f64..3.0) {
        let k = babc_kernel(&BabcParams::new(a, b, c).unwrap(), &q, &q).unwrap();
        prop_assert!(rel(k, (a + b).exp2()) < 1e-15);
    }

    #[test]
    fn kernel_swap_law(q in cube2(), r in cube2(), a in -3.0f64..3.0, b in -3.0f64..3.0, c in -3.0f64..3.0) {
        let lhs = babc_raw(a, b, c, &r, &q);
        let rhs = babc_raw(b, a, c, &q, &r);
        prop_assert!(rel(lhs, rhs) <= 1e-12, "{lhs} {rhs}");
    }

    #[test]
    fn kernel_nondecreasing_in_c(q in cube1(), r in cube1(), c in 0.0f64..3.0, dc in 0.0f64..2.0) {
        prop_assume!(q.anchor() != r.anchor());
        prop_assert!(babc_raw(0.3, -0.2, c, &q, &r) <= babc_raw(0.3, -0.2, c + dc, &q, &r));
    }

    #[test]
    fn window_enumeration_is_stable(j0 in -2i32..2, d in 0i32..4, lo in -3.0f64..3.0, w in 0.1f64..3.0) {
        let a = GridWindow::new(1, j0, j0 + d, &[lo], &[lo + w]).unwrap();
        let b = GridWindow::new(1, j0, j0 + d, &[lo], &[lo + w]).unwrap();
        prop_assert_eq!(a.cubes(), b.cubes());
    }

    #[test]
    fn rho_nondecreasing_in_p(v in diag_weight(), q in sub_cube_of_unit(), e in vector(2), p in 0.5f64..4.0, dp in 0.0f64..2.0) {
        let quad = Quadrature::default();
        let lo = rho_lp(&v, &q, p, &e, &quad).unwrap();
        let hi = rho_lp(&v, &q, p + dp, &e, &quad).unwrap();
        prop_assert!(lo <= hi * (1.0 + 1e-8), "{lo} {hi}");
    }

    #[test]
    fn elementary_doubling_lower_bound(v in diag_weight(), q in sub_cube_of_unit(), up in 1i32..4, e in vector(2), p in 0.5f64..4.0) {
        let quad = Quadrature::default();
        let s = q.ancestor(q.level - up);
        let ratio = rho_lp(&v, &s, p, &e, &quad).unwrap() / rho_lp(&v, &q, p, &e, &quad).unwrap();
        prop_assert!((q.volume() / s.volume()).powf(1.0 / p) <= ratio * (1.0 + 1e-12));
    }

    #[test]
    fn duality_on_a_probability_cube(v in diag_weight(), q in sub_cube_of_unit(), e in vector(2), es in vector(2),
                                     u in 0.3f64..4.0, w in 0.3f64..4.0) {
        let quad = Quadrature::default();
        let primal = LocalNorm::new(&v, &q, u, Side::Primal, &quad).unwrap().rho(&e);
        let dual = LocalNorm::new(&v, &q, w, Side::DualInverse, &quad).unwrap().rho(&es);
        let pair: f64 = e.iter().zip(&es).map(|(a, b)| a * b).sum();
        prop_assert!(pair.abs() <= primal * dual * (1.0 + 1e-12));
    }

    #[test]
    fn seq_norm_is_absolutely_homogeneous(seed in any::<u64>(), c in -5.0f64..5.0, s in -1.0f64..1.0,
                                          p in 0.5f64..4.0, q in 0.5f64..4.0, tl in any::<bool>()) {
        let kind = if tl { SpaceKind::TriebelLizorkin } else { SpaceKind::Besov };
        let params = SpaceParams::new(1, s, p, q, kind).unwrap();
        let t = DyadicSequence::random(window(4), 2, seed);
        let e = NormFamily::euclidean();
        let a = seq_norm(&t.scaled(c), &params, NormSource::Family(&e)).unwrap();
        let b = seq_norm(&t, &params, NormSource::Family(&e)).unwrap();
        prop_assert!((a - c.abs() * b).abs() <= 1e-12 * b);
    }

    #[test]
    fn removing_a_cube_never_increases_the_norm(seed in any::<u64>(), drop in 0usize..31, s in -1.0f64..1.0,
                                                 p in 0.5f64..4.0, q in 0.5f64..4.0, tl in any::<bool>()) {
        let kind = if tl { SpaceKind::TriebelLizorkin } else { SpaceKind::Besov };
        let params = SpaceParams::new(1, s, p, q, kind).unwrap();
        let w = window(4);
        let t = DyadicSequence::random(w.clone(), 1, seed);
        let mut smaller = t.clone();
        smaller.remove(&w.cubes()[drop]);
        let e = NormFamily::euclidean();
        let a = seq_norm(&smaller, &params, NormSource::Family(&e)).unwrap();
        let b = seq_norm(&t, &params, NormSource::Family(&e)).unwrap();
        prop_assert!(a <= b * (1.0 + 1e-13));
    }

    #[test]
    fn tl_equals_besov_when_q_equals_p(seed in any::<u64>(), s in -2.0f64..2.0, p in 0.3f64..5.0) {
        let t = DyadicSequence::random(window(5), 2, seed);
        let e = NormFamily::euclidean();
        let b = seq_norm(&t, &SpaceParams::besov(1, s, p, p).unwrap(), NormSource::Family(&e)).unwrap();
        let f = seq_norm(&t, &SpaceParams::tl(1, s, p, p).unwrap(), NormSource::Family(&e)).unwrap();
        prop_assert!(rel(b, f) <= 1e-12);
    }

    #[test]
    fn rescale_identity(seed in any::<u64>(), ui in 0usize..3, s in -1.0f64..1.0, p in 0.5f64..4.0,
                        q in 0.5f64..4.0, tl in any::<bool>()) {
        let u = [1.0 / 3.0, 0.5, 1.0][ui];
        let kind = if tl { SpaceKind::TriebelLizorkin } else { SpaceKind::Besov };
        let params = SpaceParams::new(1, s, p, q, kind).unwrap();
        let t = DyadicSequence::random(window(5), 2, seed);
        let e = NormFamily::euclidean();
        let lhs = seq_norm(&t, &params, NormSource::Family(&e)).unwrap().powf(u);
        let r = rescale_map(&t, &e, u).unwrap();
        let rhs = seq_norm(&r, &rescaled_params(&params, u), NormSource::Family(&NormFamily::unweighted(1.0))).unwrap();
        prop_assert!(rel(lhs, rhs) <= 1e-10, "{lhs} {rhs}");
    }

    #[test]
    fn restrict_undoes_lift(seed in any::<u64>(), k in -5i64..5, m in 1usize..4) {
        let u = DyadicSequence::random(window(3), m, seed);
        let back = restrict_sequence(&lift_sequence(&u, TraceOffset(k)).unwrap(), TraceOffset(k)).unwrap();
        for (i, v) in u.iter() {
            for (a, b) in v.iter().zip(back.get(i).unwrap()) {
                prop_assert!((a - b).abs() <= 1e-15 * a.abs().max(1.0));
            }
        }
    }

    #[test]
    fn partition_identity(alpha in 1.45f64..2.0, gap in 0.05f64..1.0) {
        let beta = (alpha + gap).min(3.1);
        prop_assume!(beta > alpha);
        let pair = build_lp_pair(alpha, beta, FrequencyGrid::new(1 << 12, 64.0).unwrap()).unwrap();
        prop_assert!(partition_check(&pair) <= 1e-8);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn closed_form_dual_matches_sphere_search(c in prop::collection::vec(0.0f64..1.0, 3),
                                              t in prop::collection::vec(-0.9f64..0.9, 3),
                                              q in sub_cube_of_unit(), es in vector(3), p in 1.2f64..4.0) {
        // exponents inside (-1/p, 1/p')
        let b = t.iter().map(|x| if *x < 0.0 { x / p } else { x * (1.0 - 1.0 / p) }).collect();
        let v = WeightModel::diagonal_power(1, p, c.iter().map(|x| vec![*x]).collect(), b).unwrap();
        let local = LocalNorm::new(&v, &q, p, Side::Primal, &Quadrature::default()).unwrap();
        let search = SphereSearch::default();
        let exact = local.dual(&es, &search).value;
        let found = local.dual_search(&es, &search).value;
        prop_assert!(rel(exact, found) <= 0.01, "{exact} {found}");
    }

    #[test]
    fn ad_apply_matches_double_loop(seed in any::<u64>(), d in 1.0f64..6.0, e in 0.0f64..4.0, f in 0.0f64..4.0) {
        let w = window(4);
        let params = ADParams::new(d, e, f).unwrap();
        let b = canonical_ad_matrix(params, w.clone());
        let t = DyadicSequence::random(w.clone(), 2, seed);
        let got = ad_apply(&b, &t).unwrap();
        for q in w.cubes() {
            let mut want = [0.0; 2];
            for (r, v) in t.iter() {
                let k = params.kernel(q, r);
                prop_assert_eq!(b.get(q, r).unwrap(), k);
                want[0] += k * v[0];
                want[1] += k * v[1];
            }
            let have = got.get(q).unwrap_or(&[0.0, 0.0]);
            for i in 0..2 {
                prop_assert!((have[i] - want[i]).abs() <= 1e-12 * want[i].abs().max(1.0));
            }
        }
    }

    #[test]
    fn ad_apply_is_linear(s1 in any::<u64>(), s2 in any::<u64>(), a in -3.0f64..3.0) {
        let w = window(4);
        let b = canonical_ad_matrix(ADParams::new(3.0, 2.0, 2.0).unwrap(), w.clone());
        let (t, u) = (DyadicSequence::random(w.clone(), 1, s1), DyadicSequence::random(w.clone(), 1, s2));
        let lhs = ad_apply(&b, &t.scaled(a).add(&u).unwrap()).unwrap();
        let rhs = ad_apply(&b, &t).unwrap().scaled(a).add(&ad_apply(&b, &u).unwrap()).unwrap();
        for q in w.cubes() {
            let x = lhs.get(q).map_or(0.0, |v| v[0]);
            let y = rhs.get(q).map_or(0.0, |v| v[0]);
            prop_assert!((x - y).abs() <= 1e-12 * x.abs().max(1.0));
        }
    }

    #[test]
    fn sparse_apply_linear_and_monotone(s1 in any::<u64>(), s2 in any::<u64>(), depth in 0u32..3, a in -2.0f64..2.0) {
        use rand::{Rng, SeedableRng};
        let one: Coefficient = Arc::new(|_: &[f64]| 1.0);
        let half: Coefficient = Arc::new(|x: &[f64]| 0.5 + 0.5 * x[0]);
        let fam = SparseFamily::middle_third_tree(&DyadicCube::unit(1), depth, half, one).unwrap();
        let level = fam.finest_level().unwrap();
        let draw = |seed: u64| {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let mut f = SampledFunction::zeros(level, vec![0], vec![1 << level], 1);
            f.values.iter_mut().for_each(|x| *x = rng.random_range(-1.0..1.0));
            f
        };
        let (f, g) = (draw(s1), draw(s2));
        let mut comb = f.clone();
        for (x, y) in comb.values.iter_mut().zip(&g.values) {
            *x = a * *x + y;
        }
        let (tf, tg, tc) = (sparse_apply(&fam, &f).unwrap(), sparse_apply(&fam, &g).unwrap(), sparse_apply(&fam, &comb).unwrap());
        let mut abs_f = f.clone();
        abs_f.values.iter_mut().for_each(|x| *x = x.abs());
        let t_abs = sparse_apply(&fam, &abs_f).unwrap();
        for i in 0..tc.values.len() {
            prop_assert!((tc.values[i] - (a * tf.values[i] + tg.values[i])).abs() <= 1e-12);
            prop_assert!(tf.values[i].abs() <= t_abs.values[i] + 1e-15);
        }
    }

    #[test]
    fn besov_trace_identity(seed in any::<u64>(), k in -2i64..=2, s in -1.0f64..2.0, p in 0.5f64..4.0, q in 0.5f64..4.0) {
        let target = SpaceParams::besov(2, s, p, q).unwrap();
        let source = trace_source_params(&target).unwrap();
        let u = DyadicSequence::random(window(4), 2, seed);
        let e = NormFamily::euclidean();
        let r = trace_norm_check(&u, TraceOffset(k), &target, &source, &e, &e).unwrap();
        prop_assert!((r.ratio - 1.0).abs() <= 1e-10, "{}", r.ratio);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn weighted_besov_trace_identity(seed in any::<u64>(), k in -2i64..=2, c in 0.0f64..1.0, b in -0.3f64..0.3, s in 0.0f64..1.0) {
        let v = WeightModel::diagonal_power(2, 2.0, vec![vec![c, 0.5], vec![0.5, c]], vec![b, -b]).unwrap();
        let target = SpaceParams::besov(2, s, 2.0, 1.5).unwrap();
        let source = trace_source_params(&target).unwrap();
        let rho = NormFamily::weighted(v, 2.0, Quadrature::new(8, crate::weights::QuadRule::Midpoint).unwrap());
        let d = NormFamily::pullback(rho.clone(), k);
        let u = DyadicSequence::random(window(3), 2, seed);
        let r = trace_norm_check(&u, TraceOffset(k), &target, &source, &d, &rho).unwrap();
        prop_assert!((r.ratio - 1.0).abs() <= 1e-10, "{}", r.ratio);
    }

    #[test]
    fn compose_ratio_is_translation_invariant(shift in -6i64..6) {
        let p1 = ADParams::new(1.5, 1.2, 1.1).unwrap();
        let p2 = ADParams::new(8.0, 8.0, 8.0).unwrap();
        let base = ad_compose_check(&p1, &p2, &GridWindow::unit(1, 0, 3).unwrap()).unwrap();
        let x = shift as f64;
        let moved = ad_compose_check(&p1, &p2, &GridWindow::new(1, 0, 3, &[x], &[x + 1.0]).unwrap()).unwrap();
        prop_assert!(rel(base.worst, moved.worst) <= 1e-12, "{} {}", base.worst, moved.worst);
    }

    #[test]
    fn pointwise_equals_cube_norms_for_piecewise_constant(seed in any::<u64>(), s in -1.0f64..1.0, q in 0.5f64..3.0) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mats = (0..16).map(|_| {
            let d: f64 = rng.random_range(0.5..2.0);
            vec![d, rng.random_range(-0.5..0.5), 0.0, rng.random_range(0.5..2.0)]
        }).collect();
        let v = WeightModel::piecewise_constant(2.0, PiecewiseGrid { lo: vec![0.0], hi: vec![1.0], cells: vec![16], mats }).unwrap();
        let quad = Quadrature::default();
        let params = SpaceParams::besov(1, s, 2.0, q).unwrap();
        let t = DyadicSequence::random(window(5), 2, seed ^ 1);
        let fam = NormFamily::weighted(v.clone(), 2.0, quad.clone());
        let a = seq_norm(&t, &params, NormSource::Family(&fam)).unwrap();
        let b = seq_norm(&t, &params, NormSource::Pointwise { weight: &v, quad: &quad }).unwrap();
        prop_assert!(rel(a, b) <= 1e-10, "{a} {b}");
    }
}
