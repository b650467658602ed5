//! The twelve acceptance criteria, run in order at their stated tolerances.
//! Each prints one PASS/FAIL line with the measured quantities and runtime.

use std::io::Write;
use std::sync::Arc;
use std::time::{Duration, Instant};

use owlab::almostdiag::{ad_compose_check, ad_opnorm_estimate, canonical_ad_matrix, sharp_ad_experiment, ADParams};
use owlab::lpfilters::{build_lp_pair, conv_decay_check, decay_profile, partition_check, FrequencyGrid};
use owlab::operators::{averaging_norm_oracle, averaging_norm_rhs, normal_sup_experiment, p22_experiment};
use owlab::optim::SphereSearch;
use owlab::seqspace::{
    rescale_map, rescaled_params, seq_norm, DyadicSequence, NormFamily, NormSource, PreparedNorms, SpaceKind, SpaceParams,
    UabcMeta,
};
use owlab::traceext::{trace_norm_check, trace_source_params, TraceOffset};
use owlab::weights::{ap_constant_estimate, local_ap, LocalNorm, PiecewiseGrid, QuadRule, Side};
use owlab::{DyadicCube, GridWindow, Quadrature, Result, TargetSpace, WeightModel};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SEED: u64 = 0xA9;

struct Check {
    id: &'static str,
    pass: bool,
    detail: String,
}

fn check(id: &'static str, pass: bool, detail: String) -> Check {
    Check { id, pass, detail }
}

// Written straight to the stdout handle so the lines survive output capture.
fn emit(line: &str) {
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "{line}");
    let _ = out.flush();
}

fn rel(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / a.abs().max(b.abs())
    }
}

fn unit_window(j0: i32, j1: i32) -> Arc<GridWindow> {
    Arc::new(GridWindow::unit(1, j0, j1).unwrap())
}

fn power_weight() -> WeightModel {
    WeightModel::diagonal_power(1, 2.0, vec![vec![1.0 / 3.0], vec![0.7]], vec![0.3, -0.2]).unwrap()
}

fn c1_average_identity() -> Result<Vec<Check>> {
    let window = unit_window(0, 5);
    let params = SpaceParams::besov(1, 0.5, 2.0, 1.5)?;
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let mats = (0..32).map(|_| vec![rng.random_range(0.2..3.0), 0.0, 0.0, rng.random_range(0.2..3.0)]).collect();
    let pwc = WeightModel::piecewise_constant(2.0, PiecewiseGrid { lo: vec![0.0], hi: vec![1.0], cells: vec![32], mats })?;
    let quad = Quadrature::default();
    let tanh = Quadrature::new(64, QuadRule::TanhSinh)?;
    let worst = |v: &WeightModel, pointwise: &Quadrature| -> Result<f64> {
        let fam = NormFamily::weighted(v.clone(), params.p, quad.clone());
        let mut w: f64 = 0.0;
        for i in 0..20 {
            let t = DyadicSequence::random(window.clone(), 2, SEED + i);
            let a = seq_norm(&t, &params, NormSource::Family(&fam))?;
            let b = seq_norm(&t, &params, NormSource::Pointwise { weight: v, quad: pointwise })?;
            w = w.max(rel(a, b));
        }
        Ok(w)
    };
    let d_pwc = worst(&pwc, &quad)?;
    let d_pow = worst(&power_weight(), &tanh)?;
    Ok(vec![
        check("1a", d_pwc <= 1e-10, format!("piecewise-constant max rel diff {d_pwc:.3e} (≤ 1e-10)")),
        check("1b", d_pow <= 1e-6, format!("power weight max rel diff {d_pow:.3e} (≤ 1e-6)")),
    ])
}

fn c2_rescale() -> Result<Vec<Check>> {
    let window = unit_window(0, 5);
    let fam = NormFamily::weighted(power_weight(), 2.0, Quadrature::default());
    let mut w: f64 = 0.0;
    for kind in [SpaceKind::Besov, SpaceKind::TriebelLizorkin] {
        let params = SpaceParams::new(1, 0.4, 2.0, 1.5, kind)?;
        for u in [1.0 / 3.0, 0.5, 1.0] {
            for i in 0..5 {
                let t = DyadicSequence::random(window.clone(), 2, SEED + i);
                let lhs = seq_norm(&t, &params, NormSource::Family(&fam))?.powf(u);
                let r = rescale_map(&t, &fam, u)?;
                let rhs = seq_norm(&r, &rescaled_params(&params, u), NormSource::Family(&NormFamily::unweighted(1.0)))?;
                w = w.max(rel(lhs, rhs));
            }
        }
    }
    Ok(vec![check("2", w <= 1e-10, format!("max rel diff {w:.3e} over u ∈ {{1/3,1/2,1}}, Besov and TL (≤ 1e-10)"))])
}

fn c3_trace() -> Result<Vec<Check>> {
    let e = NormFamily::euclidean();
    let besov = SpaceParams::besov(2, 0.6, 2.0, 1.5)?;
    let mut dev: f64 = 0.0;
    for k in -2..=2 {
        for i in 0..4 {
            let u = DyadicSequence::random(unit_window(0, 4), 2, SEED + i);
            let r = trace_norm_check(&u, TraceOffset(k), &besov, &trace_source_params(&besov)?, &e, &e)?;
            dev = dev.max((r.ratio - 1.0).abs());
        }
    }
    let tl = SpaceParams::tl(2, 0.6, 2.0, 1.5)?;
    let src = trace_source_params(&tl)?;
    let range = |j1: i32| -> Result<(f64, f64)> {
        let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
        for k in -2..=2 {
            for i in 0..4 {
                let u = DyadicSequence::random(unit_window(0, j1), 2, SEED + i);
                let r = trace_norm_check(&u, TraceOffset(k), &tl, &src, &e, &e)?;
                lo = lo.min(r.ratio);
                hi = hi.max(r.ratio);
            }
        }
        Ok((lo, hi))
    };
    let (lo4, hi4) = range(4)?;
    let (lo8, hi8) = range(8)?;
    let drift = rel(lo4, lo8).max(rel(hi4, hi8));
    let bounded = lo4 > 0.0 && hi4.is_finite() && lo8 > 0.0 && hi8.is_finite();
    Ok(vec![
        check("3a", dev <= 1e-10, format!("Besov |ratio - 1| ≤ {dev:.3e} for k ∈ -2..2 (≤ 1e-10)")),
        check(
            "3b",
            bounded && drift <= 0.2,
            format!("TL ratio in [{lo4:.4}, {hi4:.4}] on [0,4], [{lo8:.4}, {hi8:.4}] on [0,8], drift {:.1}% (≤ 20%)", 100.0 * drift),
        ),
    ])
}

fn c4_compose() -> Result<Vec<Check>> {
    let a = ADParams::new(1.5, 1.2, 1.1)?;
    let b = ADParams::new(8.0, 8.0, 8.0)?;
    let mut out = Vec::new();
    for (id, p1, p2) in [("4a", a, b), ("4b", b, a)] {
        let w4 = ad_compose_check(&p1, &p2, &GridWindow::unit(1, 0, 4)?)?.worst;
        let w6 = ad_compose_check(&p1, &p2, &GridWindow::unit(1, 0, 6)?)?.worst;
        let g = w6 / w4;
        out.push(check(
            id,
            g <= 1.5,
            format!("({}, {}, {}) then ({}, {}, {}): worst {w4:.4e} → {w6:.4e}, growth ×{g:.3} (≤ ×1.5)", p1.d, p1.e, p1.f, p2.d, p2.e, p2.f),
        ));
    }
    Ok(out)
}

fn c5_p22() -> Result<Vec<Check>> {
    let res = p22_experiment(2.0, 0.05, &(4..=11).collect::<Vec<_>>(), 4096)?;
    Ok(vec![
        check("5a", res.lhs_slope >= 0.25, format!("LHS slope {:.4} (≥ 0.25)", res.lhs_slope)),
        check("5b", res.rhs_slope.abs() <= 0.05, format!("RHS slope {:.4} (|·| ≤ 0.05)", res.rhs_slope)),
    ])
}

fn c6_sharp_ad() -> Result<Vec<Check>> {
    let res = sharp_ad_experiment(2.0, 1.8, &(3..=9).collect::<Vec<_>>())?;
    let norm = |m: u32| res.rows.iter().find(|r| r.m == m).unwrap().norm;
    let growth = norm(9) / norm(6) - 1.0;
    Ok(vec![
        check("6a", (0.24..=0.56).contains(&res.slope), format!("slope of log2(M·LHS) {:.4} (in [0.24, 0.56]); raw {:.4}", res.slope, res.raw_slope)),
        check("6b", growth < 0.05, format!("norm {:.4} → {:.4} from M=6 to M=9, +{:.1}% (< 5%)", norm(6), norm(9), 100.0 * growth)),
    ])
}

fn c7_normal_sup() -> Result<Vec<Check>> {
    let js: Vec<u32> = (2..=10).map(|k| 1u32 << k).collect();
    let rows = normal_sup_experiment(2.0, &js, 100_000, SEED)?;
    let monotone = rows.windows(2).all(|w| w[1].s >= w[0].s - 3.0 * w[0].stderr.hypot(w[1].stderr));
    let (first, last) = (rows.first().unwrap(), rows.last().unwrap());
    Ok(vec![check(
        "7",
        monotone && last.s >= 2.0 * first.s,
        format!("S(4) = {:.3}, S(1024) = {:.3}, monotone within 3 s.e.: {monotone}", first.s, last.s),
    )])
}

fn c8_ap() -> Result<Vec<Check>> {
    let quad = Quadrature::default();
    let id = WeightModel::identity(1, TargetSpace::new(3, 2.0)?);
    let v_id = ap_constant_estimate(&id, 2.0, &GridWindow::unit(1, 0, 4)?, &quad)?.value;
    let quarter = WeightModel::scalar_power(0.0, 0.25);
    let (v_q, _) = local_ap(&quarter, &DyadicCube::unit(1), 2.0, &quad)?;
    let dp = power_weight();
    let a4 = ap_constant_estimate(&dp, 2.0, &GridWindow::unit(1, 0, 4)?, &quad)?.value;
    let a8 = ap_constant_estimate(&dp, 2.0, &GridWindow::unit(1, 0, 8)?, &quad)?.value;
    let want = (4.0f64 / 3.0).sqrt();
    Ok(vec![
        check("8a", (v_id - 1.0).abs() <= 1e-9, format!("identity {v_id:.12} (1 ± 1e-9)")),
        check("8b", (v_q - want).abs() <= 1e-6, format!("|x|^(1/4) on [0,1) {v_q:.9} vs √(4/3) = {want:.9} (± 1e-6)")),
        check("8c", a8 / a4 <= 1.2, format!("diagonal power {a4:.5} on [0,4] → {a8:.5} on [0,8], ×{:.4} (≤ ×1.2)", a8 / a4)),
    ])
}

fn c9_dual_oracle() -> Result<Vec<Check>> {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let search = SphereSearch::default();
    let mut w: f64 = 0.0;
    for _ in 0..10 {
        let m = 3;
        let p: f64 = rng.random_range(1.2..4.0);
        let centers = (0..m).map(|_| vec![rng.random_range(0.0..1.0)]).collect();
        let exps = (0..m)
            .map(|_| {
                let t: f64 = rng.random_range(-0.9..0.9);
                if t < 0.0 { t / p } else { t * (1.0 - 1.0 / p) }
            })
            .collect();
        let v = WeightModel::diagonal_power(1, p, centers, exps)?;
        let j = rng.random_range(0..4);
        let q = DyadicCube::new(j, vec![rng.random_range(0..1i64 << j)]);
        let local = LocalNorm::new(&v, &q, p, Side::Primal, &Quadrature::default())?;
        let es: Vec<f64> = (0..m).map(|_| rng.random_range(-1.0..1.0)).collect();
        w = w.max(rel(local.dual(&es, &search).value, local.dual_search(&es, &search).value));
    }
    Ok(vec![check("9", w <= 0.01, format!("closed form vs sphere search, max rel diff {w:.3e} (≤ 1%)"))])
}

fn c10_average() -> Result<Vec<Check>> {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let quad = Quadrature::default();
    let q = DyadicCube::unit(1);
    let mut w: f64 = 0.0;
    for i in 0..10 {
        let c: f64 = rng.random_range(0.0..1.0);
        let g: f64 = rng.random_range(-0.4..0.4);
        let p: f64 = rng.random_range(1.5..3.0);
        let v = WeightModel::scalar_power(c, g);
        let rhs = averaging_norm_rhs(&v, p, &q, &quad)?.value;
        let oracle = averaging_norm_oracle(&v, p, &q, 1024, &quad, SEED + i)?.value;
        w = w.max(rel(rhs, oracle));
    }
    Ok(vec![check("10", w <= 0.02, format!("oracle vs closed form, max rel diff {w:.3e} over 10 weights (≤ 2%)"))])
}

fn c11_ad_separation() -> Result<Vec<Check>> {
    let v = WeightModel::diagonal_power(1, 2.0, vec![vec![1.0 / 3.0], vec![0.7]], vec![0.2, 0.1])?;
    let fam = NormFamily::weighted(v, 2.0, Quadrature::default()).with_meta(UabcMeta { u: 1.0, a: 0.25, b: 0.2, c: 0.45 });
    let params = SpaceParams::besov(1, 0.0, 2.0, 2.0)?;
    let growth = |ad: ADParams| -> Result<(f64, f64)> {
        let mut vals = Vec::new();
        for j1 in [3, 5] {
            let w = unit_window(0, j1);
            let norms = PreparedNorms::new(&fam, w.clone())?;
            vals.push(ad_opnorm_estimate(&canonical_ad_matrix(ad, w), &params, &norms, 2, SEED)?.value);
        }
        Ok((vals[0], vals[1]))
    };
    let (i3, i5) = growth(ADParams::new(4.0, 3.0, 3.0)?)?;
    let (v3, v5) = growth(ADParams::new(4.0, -0.25, 3.0)?)?;
    Ok(vec![
        check("11a", i5 / i3 <= 1.10, format!("inside (4, 3, 3): {i3:.4} → {i5:.4}, ×{:.4} (≤ ×1.10)", i5 / i3)),
        check("11b", v5 / v3 >= 2.0, format!("E violated by 1, (4, -0.25, 3): {v3:.4} → {v5:.4}, ×{:.3} (≥ ×2)", v5 / v3)),
    ])
}

fn c12_lp() -> Result<Vec<Check>> {
    let pair = build_lp_pair(5.0 / 3.0, 2.0, FrequencyGrid::default())?;
    let dev = partition_check(&pair);
    let disjoint = conv_decay_check(&pair, 0, 4, 5.0)?.sup;
    let prof = decay_profile(&pair, 0, 3, 5.0)?;
    Ok(vec![
        check("12a", dev <= 1e-8, format!("partition deviation {dev:.3e} (≤ 1e-8)")),
        check("12b", disjoint <= 1e-10, format!("sup |φ_0 * ψ_4| = {disjoint:.3e} (≤ 1e-10)")),
        check("12c", prof.slope <= -4.0, format!("decay slope {} for M = 5 (≤ -4)", prof.slope)),
    ])
}

type Criterion = (&'static str, fn() -> Result<Vec<Check>>, Option<Duration>);

#[test]
fn acceptance() {
    let criteria: [Criterion; 12] = [
        ("average identity", c1_average_identity, Some(Duration::from_secs(10))),
        ("rescale identity", c2_rescale, Some(Duration::from_secs(5))),
        ("sequence trace", c3_trace, Some(Duration::from_secs(20))),
        ("almost-diagonal composition", c4_compose, Some(Duration::from_secs(60))),
        ("diagonal counterexample", c5_p22, Some(Duration::from_secs(60))),
        ("sharp almost-diagonal", c6_sharp_ad, Some(Duration::from_secs(90))),
        ("normal-sup mechanism", c7_normal_sup, Some(Duration::from_secs(30))),
        ("A_p estimator", c8_ap, None),
        ("dual-norm oracle", c9_dual_oracle, None),
        ("averaging norm", c10_average, Some(Duration::from_secs(60))),
        ("AD boundedness separation", c11_ad_separation, None),
        ("LP filters", c12_lp, None),
    ];
    // Start on a fresh line after libtest's `test acceptance ...` prefix.
    emit("");
    let mut failed = Vec::new();
    for (i, (name, run, limit)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let result = run();
        let secs = start.elapsed().as_secs_f64();
        let in_time = limit.is_none_or(|l| start.elapsed() < l);
        let budget = limit.map_or(String::new(), |l| format!(" / {}s", l.as_secs()));
        match result {
            Ok(checks) => {
                for c in checks {
                    let pass = c.pass && in_time;
                    emit(&format!("{} criterion {:<4} {name}: {} [{secs:.1}s{budget}]", if pass { "PASS" } else { "FAIL" }, c.id, c.detail));
                    if !pass {
                        failed.push(c.id);
                    }
                }
            }
            Err(e) => {
                emit(&format!("FAIL criterion {:<4} {name}: error {e} [{secs:.1}s{budget}]", i + 1));
                failed.push(name);
            }
        }
    }
    assert!(failed.is_empty(), "failing criteria: {failed:?}");
}
