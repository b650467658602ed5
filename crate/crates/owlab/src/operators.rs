//! Averaging and sparse operators on weighted `L^p`, and the two counterexample experiments.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::dyadic::DyadicCube;
use crate::error::{Error, Result};
use crate::quad::power_integral;
use crate::weights::{conjugate, least_squares, local_ap, LocalNorm, Quadrature, Side, WeightModel};

#[derive(Clone, Copy, Debug)]
pub struct AvgNorm {
    pub value: f64,
    pub converged: bool,
}

/// `sup_e ρ_{Ł^p(Q,V)}(e) / ρ*_{Ł^{p'}(Q,V^{-*})}(e)`, the norm of `f ↦ 1_Q⟨f⟩_Q`.
///
/// Evaluated through the adjoint form `sup_{e*} ρ_{Ł^{p'}(Q,V^{-*})}(e*) / ρ*_{Ł^p(Q,V)}(e*)`,
/// which has the same value and the closed forms of the 𝒜_p estimator.
pub fn averaging_norm_rhs(v: &WeightModel, p: f64, q: &DyadicCube, quad: &Quadrature) -> Result<AvgNorm> {
    if !(p > 1.0 && p.is_finite()) {
        return Err(Error::Precondition(format!("p must lie in (1,∞), got {p}")));
    }
    let (value, converged) = match local_ap(v, q, p, quad) {
        Ok(r) => r,
        Err(Error::QuadratureOverflow { cube }) => {
            return Err(Error::Precondition(format!("V or V^(-*) is not integrable on {cube}")))
        }
        Err(e) => return Err(e),
    };
    if !value.is_finite() {
        return Err(Error::Precondition(format!("V or V^(-*) is not integrable on {q}")));
    }
    Ok(AvgNorm { value, converged })
}

/// Brute-force `sup_f ‖v 1_Q⟨f⟩_Q‖_p / ‖v f‖_p` over `f` constant on the
/// `cells` dyadic subcubes of `Q`, by coordinate ascent from several starts.
pub fn averaging_norm_oracle(v: &WeightModel, p: f64, q: &DyadicCube, cells: usize, quad: &Quadrature, seed: u64) -> Result<AvgNorm> {
    if v.m() != 1 || v.n != 1 {
        return Err(Error::Precondition("the oracle needs a scalar weight on the line".into()));
    }
    if !(p > 1.0 && p.is_finite()) {
        return Err(Error::Precondition(format!("p must lie in (1,∞), got {p}")));
    }
    if cells < 16 || !cells.is_power_of_two() {
        return Err(Error::Precondition(format!("cells must be a power of two ≥ 16, got {cells}")));
    }
    let depth = cells.trailing_zeros() as i32;
    let j = q.level + depth;
    let base = q.offset[0] << depth;
    // w_k = ∫_{c_k} v^p, up to the common factor |c_k|
    let w: Vec<f64> = (0..cells as i64)
        .into_par_iter()
        .map(|k| {
            let c = DyadicCube::new(j, vec![base + k]);
            Ok(LocalNorm::new(v, &c, p, Side::Primal, quad)?.rho(&[1.0]).powf(p))
        })
        .collect::<Result<_>>()?;
    if w.iter().any(|x| !x.is_finite() || *x <= 0.0) {
        return Err(Error::Precondition("v^p must be integrable and positive on every cell".into()));
    }
    let total: f64 = w.iter().sum::<f64>() / cells as f64;
    let n = cells as f64;
    let ratio = |f: &[f64]| {
        let avg = f.iter().sum::<f64>() / n;
        let den: f64 = f.iter().zip(&w).map(|(x, wk)| x.abs().powf(p) * wk).sum::<f64>() / n;
        (avg.abs().powf(p) * total / den).powf(1.0 / p)
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let starts: Vec<Vec<f64>> = (0..4)
        .map(|s| if s == 0 { vec![1.0; cells] } else { (0..cells).map(|_| rng.random_range(0.1..1.0)).collect() })
        .collect();
    let mut best = AvgNorm { value: 0.0, converged: true };
    for mut f in starts {
        let mut prev = ratio(&f);
        let mut converged = false;
        for _ in 0..10_000 {
            // The exact 1D maximizer in f_k with the others fixed:
            // f_k = (T / (N S w_k))^{1/(p-1)}, S = Σ_{i≠k} f_i / N, T = Σ_{i≠k} f_i^p w_i.
            let mut s: f64 = f.iter().sum::<f64>() / n;
            let mut t: f64 = f.iter().zip(&w).map(|(x, wk)| x.powf(p) * wk).sum();
            for k in 0..cells {
                s -= f[k] / n;
                t -= f[k].powf(p) * w[k];
                let fk = if s > 0.0 && t > 0.0 { (t / (n * s * w[k])).powf(1.0 / (p - 1.0)) } else { f[k] };
                f[k] = fk;
                s += fk / n;
                t += fk.powf(p) * w[k];
            }
            let cur = ratio(&f);
            if (cur - prev).abs() <= 1e-13 * cur {
                converged = true;
                prev = cur;
                break;
            }
            prev = cur;
        }
        best.converged &= converged;
        best.value = best.value.max(prev);
    }
    Ok(best)
}

/// Vector values on the level-`level` dyadic cells of a box.
#[derive(Clone, Debug, PartialEq)]
pub struct SampledFunction {
    pub level: i32,
    /// Offset of the first cell along each axis.
    pub origin: Vec<i64>,
    pub counts: Vec<usize>,
    pub m: usize,
    /// Cell-major, `m` values per cell, cells ordered lexicographically (last axis fastest).
    pub values: Vec<f64>,
}

impl SampledFunction {
    pub fn zeros(level: i32, origin: Vec<i64>, counts: Vec<usize>, m: usize) -> Self {
        let cells: usize = counts.iter().product();
        SampledFunction { level, origin, counts, m, values: vec![0.0; cells * m] }
    }

    pub fn n(&self) -> usize {
        self.origin.len()
    }

    pub fn cells(&self) -> usize {
        self.counts.iter().product()
    }

    pub fn cell(&self, idx: usize) -> DyadicCube {
        let mut off = vec![0i64; self.n()];
        let mut r = idx;
        for a in (0..self.n()).rev() {
            off[a] = self.origin[a] + (r % self.counts[a]) as i64;
            r /= self.counts[a];
        }
        DyadicCube::new(self.level, off)
    }

    pub fn value(&self, idx: usize) -> &[f64] {
        &self.values[idx * self.m..(idx + 1) * self.m]
    }

    /// Indices of the cells inside `q`, or an error if the grid does not refine `q`.
    pub fn cells_in(&self, q: &DyadicCube) -> Result<Vec<usize>> {
        if q.dim() != self.n() || q.level > self.level {
            return Err(Error::Misaligned(format!("grid level {} does not refine {q}", self.level)));
        }
        let sh = (self.level - q.level) as u32;
        let mut ranges = Vec::with_capacity(self.n());
        for a in 0..self.n() {
            let lo = (q.offset[a] << sh) - self.origin[a];
            let hi = lo + (1i64 << sh);
            if lo < 0 || hi > self.counts[a] as i64 {
                return Err(Error::Misaligned(format!("{q} is not inside the sampling box")));
            }
            ranges.push((lo as usize, hi as usize));
        }
        let mut out = Vec::new();
        let mut k: Vec<usize> = ranges.iter().map(|r| r.0).collect();
        'cells: loop {
            let mut idx = 0;
            for a in 0..self.n() {
                idx = idx * self.counts[a] + k[a];
            }
            out.push(idx);
            for a in (0..self.n()).rev() {
                if k[a] + 1 < ranges[a].1 {
                    k[a] += 1;
                    continue 'cells;
                }
                k[a] = ranges[a].0;
            }
            return Ok(out);
        }
    }

    /// `‖f‖_{L^p(V)} = (Σ_cells |P| ρ_{Ł^p(P,V)}(f_P)^p)^{1/p}`.
    pub fn lp_norm(&self, v: &WeightModel, p: f64, quad: &Quadrature) -> Result<f64> {
        if v.m() != self.m {
            return Err(Error::DimensionMismatch { expected: v.m(), got: self.m });
        }
        let parts: Vec<f64> = (0..self.cells())
            .into_par_iter()
            .map(|i| {
                let c = self.cell(i);
                Ok(c.volume() * LocalNorm::new(v, &c, p, Side::Primal, quad)?.rho(self.value(i)).powf(p))
            })
            .collect::<Result<_>>()?;
        Ok(parts.iter().sum::<f64>().powf(1.0 / p))
    }
}

pub type Coefficient = std::sync::Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// One member `Q` of a sparse family with its coefficient functions.
#[derive(Clone)]
pub struct SparseCube {
    pub cube: DyadicCube,
    pub a: Coefficient,
    pub b: Coefficient,
}

/// A box `E(Q) ⊆ Q` given by lower and upper corners.
#[derive(Clone, Debug, PartialEq)]
pub struct Witness {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Witness {
    fn volume(&self) -> f64 {
        self.lower.iter().zip(&self.upper).map(|(l, u)| u - l).product()
    }

    fn overlaps(&self, other: &Witness) -> bool {
        self.lower.iter().zip(&self.upper).zip(other.lower.iter().zip(&other.upper)).all(|((l1, u1), (l2, u2))| l1 < u2 && l2 < u1)
    }
}

/// Cubes with pairwise disjoint witness sets `E(Q)`, `|E(Q)| ≥ η|Q|`.
#[derive(Clone)]
pub struct SparseFamily {
    members: Vec<SparseCube>,
    witnesses: Vec<Witness>,
    eta: f64,
}

impl SparseFamily {
    pub fn new(members: Vec<SparseCube>, witnesses: Vec<Witness>, eta: f64) -> Result<Self> {
        if !(eta > 0.0 && eta <= 1.0) {
            return Err(Error::InvalidParameter(format!("η must lie in (0,1], got {eta}")));
        }
        if members.len() != witnesses.len() {
            return Err(Error::DimensionMismatch { expected: members.len(), got: witnesses.len() });
        }
        for (s, e) in members.iter().zip(&witnesses) {
            let q = &s.cube;
            let inside = (0..q.dim()).all(|a| e.lower[a] >= q.lower(a) && e.upper[a] <= q.upper(a) && e.lower[a] < e.upper[a]);
            if !inside || e.volume() < eta * q.volume() * (1.0 - 1e-12) {
                return Err(Error::InvalidParameter(format!("witness for {q} is not a subset of measure ≥ η|Q|")));
            }
        }
        for i in 0..witnesses.len() {
            for j in i + 1..witnesses.len() {
                if witnesses[i].overlaps(&witnesses[j]) {
                    return Err(Error::InvalidParameter(format!(
                        "witnesses of {} and {} intersect",
                        members[i].cube, members[j].cube
                    )));
                }
            }
        }
        Ok(SparseFamily { members, witnesses, eta })
    }

    pub fn empty() -> Self {
        SparseFamily { members: Vec::new(), witnesses: Vec::new(), eta: 1.0 }
    }

    /// `top` plus, recursively `depth` times, the level `j+2` cubes in the first
    /// and last quarter of each member along the last axis. Witnesses are the
    /// middle-third slabs along that axis, so `η = 1/3`.
    pub fn middle_third_tree(top: &DyadicCube, depth: u32, a: Coefficient, b: Coefficient) -> Result<Self> {
        let n = top.dim();
        let mut layer = vec![top.clone()];
        let mut members = Vec::new();
        let mut witnesses = Vec::new();
        for d in 0..=depth {
            let mut next = Vec::new();
            for q in &layer {
                let (lo, side) = (q.lower(n - 1), q.side());
                let mut lower: Vec<f64> = (0..n).map(|i| q.lower(i)).collect();
                let mut upper: Vec<f64> = (0..n).map(|i| q.upper(i)).collect();
                lower[n - 1] = lo + side / 3.0;
                upper[n - 1] = lo + 2.0 * side / 3.0;
                members.push(SparseCube { cube: q.clone(), a: a.clone(), b: b.clone() });
                witnesses.push(Witness { lower, upper });
                if d < depth {
                    let sub = descendants(q, 2);
                    next.extend(sub.into_iter().filter(|c| {
                        let r = c.offset[n - 1] - (q.offset[n - 1] << 2);
                        r == 0 || r == 3
                    }));
                }
            }
            layer = next;
        }
        SparseFamily::new(members, witnesses, 1.0 / 3.0)
    }

    pub fn members(&self) -> &[SparseCube] {
        &self.members
    }

    pub fn witnesses(&self) -> &[Witness] {
        &self.witnesses
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn finest_level(&self) -> Option<i32> {
        self.members.iter().map(|s| s.cube.level).max()
    }
}

fn descendants(q: &DyadicCube, gens: u32) -> Vec<DyadicCube> {
    let mut out = vec![q.clone()];
    for _ in 0..gens {
        out = out.iter().flat_map(|c| c.children()).collect();
    }
    out
}

/// `Tf = Σ_Q a_Q ⟨b_Q f⟩_Q 1_Q`, with `a_Q`, `b_Q` sampled at cell centers.
pub fn sparse_apply(s: &SparseFamily, f: &SampledFunction) -> Result<SampledFunction> {
    let mut out = SampledFunction { values: vec![0.0; f.values.len()], ..f.clone() };
    let m = f.m;
    for member in &s.members {
        let idx = f.cells_in(&member.cube)?;
        let mut avg = vec![0.0; m];
        let mut a_vals = Vec::with_capacity(idx.len());
        for &i in &idx {
            let x = f.cell(i).center();
            let (a, b) = ((member.a)(&x), (member.b)(&x));
            if a.abs() > 1.0 || b.abs() > 1.0 || !a.is_finite() || !b.is_finite() {
                return Err(Error::InvalidParameter(format!("coefficient exceeds 1 in modulus on {}", member.cube)));
            }
            a_vals.push(a);
            for (acc, y) in avg.iter_mut().zip(f.value(i)) {
                *acc += b * y;
            }
        }
        for acc in avg.iter_mut() {
            *acc /= idx.len() as f64;
        }
        for (&i, a) in idx.iter().zip(a_vals) {
            for (o, y) in out.values[i * m..(i + 1) * m].iter_mut().zip(&avg) {
                *o += a * y;
            }
        }
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug)]
pub struct SparseRow {
    pub depth: u32,
    pub members: usize,
    pub max_ratio: f64,
}

/// Largest `‖Tf‖_{L^p(V)} / ‖f‖_{L^p(V)}` over seeded random `f`, for
/// middle-third families of growing depth under `[0,1)^n` with `a = b = 1`.
pub fn sparse_ratio_experiment(v: &WeightModel, p: f64, depths: &[u32], samples: usize, seed: u64, quad: &Quadrature) -> Result<Vec<SparseRow>> {
    let n = v.n;
    let one: Coefficient = std::sync::Arc::new(|_: &[f64]| 1.0);
    depths
        .iter()
        .map(|&d| {
            let fam = SparseFamily::middle_third_tree(&DyadicCube::unit(n), d, one.clone(), one.clone())?;
            let level = fam.finest_level().unwrap();
            let counts = vec![1usize << level; n];
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ d as u64);
            let mut best: f64 = 0.0;
            for _ in 0..samples {
                let mut f = SampledFunction::zeros(level, vec![0; n], counts.clone(), v.m());
                for x in f.values.iter_mut() {
                    *x = rng.random_range(-1.0..1.0);
                }
                let den = f.lp_norm(v, p, quad)?;
                if den > 0.0 {
                    best = best.max(sparse_apply(&fam, &f)?.lp_norm(v, p, quad)? / den);
                }
            }
            Ok(SparseRow { depth: d, members: fam.len(), max_ratio: best })
        })
        .collect()
}

#[derive(Clone, Copy, Debug)]
pub struct P22Row {
    pub n: u32,
    pub lhs: f64,
    pub rhs: f64,
}

#[derive(Clone, Debug)]
pub struct P22Result {
    pub rows: Vec<P22Row>,
    pub lhs_slope: f64,
    pub rhs_slope: f64,
}

/// Midpoints in `x` per unit length; the integrand in `x` is Hölder continuous.
pub const P22_X_NODES: usize = 256;

/// The diagonal counterexample with `v_i = |x - x_i|^{1/p' - ε}`,
/// `f_i = 1_{[0,1)}|x - x_i|^{-1+2ε}`, `λ_{2^j+k} = 2^{-j(1/p+ε)}` for `j ≤ N`, on `Q = [0,1)`.
///
/// `lhs = ∫₀¹ (∫₀¹ ‖V(x) f(y)‖_{ℓ^p} dy)^p dx` uses midpoints of a `grid`-cell
/// partition in `y` (every center is a cell boundary, so no node is singular),
/// taking the `ℓ^p` root before the `y` integral. `rhs = ∫₀¹ ‖V(y) f(y)‖^p dy` is exact.
pub fn p22_experiment(p: f64, eps: f64, n_range: &[u32], grid: usize) -> Result<P22Result> {
    if !(p > 1.0 && p.is_finite()) {
        return Err(Error::Precondition(format!("p must lie in (1,∞), got {p}")));
    }
    let pp = conjugate(p);
    if !(eps > 0.0 && eps < 1.0 / (3.0 * pp)) {
        return Err(Error::Precondition(format!("ε must lie in (0, 1/(3p')) = (0, {}), got {eps}", 1.0 / (3.0 * pp))));
    }
    if grid < 128 || !grid.is_power_of_two() {
        return Err(Error::Precondition(format!("grid must be a power of two ≥ 128, got {grid}")));
    }
    if n_range.is_empty() {
        return Err(Error::Precondition("empty N range".into()));
    }
    let n_max = *n_range.iter().max().unwrap();
    if n_max > 24 || grid < 1usize << (n_max + 1) {
        return Err(Error::Precondition(format!("grid {grid} is too coarse for N = {n_max}; need ≥ 2^(N+1)")));
    }
    let alpha = (1.0 / pp - eps) * p;
    let gamma = (-1.0 + 2.0 * eps) * p;
    let rows: Vec<P22Row> = n_range.iter().map(|&n| p22_point(p, eps, n, grid, alpha, gamma)).collect();
    let xs: Vec<f64> = rows.iter().map(|r| r.n as f64).collect();
    let (lhs_slope, rhs_slope) = if rows.len() >= 2 {
        (
            least_squares(&xs, &rows.iter().map(|r| r.lhs.log2()).collect::<Vec<_>>()).0,
            least_squares(&xs, &rows.iter().map(|r| r.rhs.log2()).collect::<Vec<_>>()).0,
        )
    } else {
        (f64::NAN, f64::NAN)
    };
    Ok(P22Result { rows, lhs_slope, rhs_slope })
}

fn p22_point(p: f64, eps: f64, n: u32, grid: usize, alpha: f64, gamma: f64) -> P22Row {
    // Distinct centers z_m = m 2^{-N}; Λ_m sums λ^p over the levels where z_m is a center.
    let centers = 1usize << n;
    let lam_p = |j: u32| (-(j as f64) * (1.0 + eps * p)).exp2();
    let big_lambda: Vec<f64> = (0..centers)
        .map(|m| {
            let jmin = if m == 0 { 0 } else { n - m.trailing_zeros().min(n) };
            (jmin..=n).map(lam_p).sum()
        })
        .collect();
    let h = 1.0 / grid as f64;
    let step = grid / centers;
    // |y_l - z_m|^γ depends only on l - step·m
    let table: Vec<f64> = (0..2 * grid)
        .map(|d| {
            let off = d as f64 - grid as f64 + 0.5;
            (off * h).abs().powf(gamma)
        })
        .collect();
    let lhs_parts: Vec<f64> = (0..P22_X_NODES)
        .into_par_iter()
        .map(|ix| {
            let x = (ix as f64 + 0.5) / P22_X_NODES as f64;
            let c: Vec<f64> = (0..centers)
                .map(|m| big_lambda[m] * (x - m as f64 / centers as f64).abs().powf(alpha))
                .collect();
            let mut inner = 0.0;
            for l in 0..grid {
                let base = l + grid;
                let s: f64 = c.iter().enumerate().map(|(m, cm)| cm * table[base - step * m]).sum();
                inner += s.powf(1.0 / p);
            }
            (inner * h).powf(p)
        })
        .collect();
    let lhs = lhs_parts.iter().sum::<f64>() / P22_X_NODES as f64;
    let mut rhs = 0.0;
    for j in 0..=n {
        let hj = (-(j as f64)).exp2();
        let level: f64 = (0..1u64 << j).map(|k| power_integral(0.0, 1.0, k as f64 * hj, alpha + gamma)).sum();
        rhs += lam_p(j) * level;
    }
    P22Row { n, lhs, rhs }
}

#[derive(Clone, Copy, Debug)]
pub struct NormalSupRow {
    pub j: u32,
    pub s: f64,
    pub stderr: f64,
}

/// Monte Carlo samples per batch; batch `b` draws from stream `b` of the master seed.
pub const MC_BATCH: usize = 4096;

/// `S(J) = ∫₀¹ sup_{1≤j≤J} |ln{2^j x} + 1|^p dx` with standard errors.
///
/// `x` is a random bit string, so `{2^j x}` stays exact far beyond double precision.
pub fn normal_sup_experiment(p: f64, j_range: &[u32], samples: usize, seed: u64) -> Result<Vec<NormalSupRow>> {
    if samples < 10_000 {
        return Err(Error::Precondition(format!("at least 10^4 samples are needed, got {samples}")));
    }
    if !(p > 0.0 && p.is_finite()) || j_range.is_empty() || j_range.contains(&0) {
        return Err(Error::Precondition("p must be positive and J ≥ 1".into()));
    }
    let j_max = *j_range.iter().max().unwrap() as usize;
    let words = j_max / 64 + 3;
    let batches = samples.div_ceil(MC_BATCH);
    let sums: Vec<(Vec<f64>, Vec<f64>)> = (0..batches)
        .into_par_iter()
        .map(|b| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(b as u64);
            let count = MC_BATCH.min(samples - b * MC_BATCH);
            let mut s1 = vec![0.0; j_range.len()];
            let mut s2 = vec![0.0; j_range.len()];
            let mut bits = vec![0u64; words];
            for _ in 0..count {
                for w in bits.iter_mut() {
                    *w = rng.random();
                }
                let mut sup: f64 = 0.0;
                let mut sups = vec![0.0; j_max + 1];
                for j in 1..=j_max {
                    sup = sup.max((frac_shift(&bits, j).ln() + 1.0).abs().powf(p));
                    sups[j] = sup;
                }
                for (i, &jj) in j_range.iter().enumerate() {
                    let v = sups[jj as usize];
                    s1[i] += v;
                    s2[i] += v * v;
                }
            }
            (s1, s2)
        })
        .collect();
    let n = samples as f64;
    Ok(j_range
        .iter()
        .enumerate()
        .map(|(i, &j)| {
            let s1: f64 = sums.iter().map(|s| s.0[i]).sum();
            let s2: f64 = sums.iter().map(|s| s.1[i]).sum();
            let mean = s1 / n;
            let var = (s2 / n - mean * mean).max(0.0) * n / (n - 1.0);
            NormalSupRow { j, s: mean, stderr: (var / n).sqrt() }
        })
        .collect())
}

/// `{2^j x}` for `x = 0.b₁b₂…` read from the bit words, using 64 bits after position `j`.
fn frac_shift(bits: &[u64], j: usize) -> f64 {
    let (w, o) = (j / 64, j % 64);
    let hi = if o == 0 { bits[w] } else { (bits[w] << o) | (bits[w + 1] >> (64 - o)) };
    // never exactly zero: the next bit string is nonzero with probability one
    ((hi as f64) + 0.5) * (-64f64).exp2()
}

/// `sup_{1≤j≤J} |ln{2^j x} + 1|^p` for a dyadic-rational-free `x` in double precision.
pub fn normal_sup_at(x: f64, p: f64, j_max: u32) -> f64 {
    let mut y = x.fract();
    let mut sup: f64 = 0.0;
    for _ in 0..j_max {
        y = (2.0 * y).fract();
        sup = sup.max((y.ln() + 1.0).abs().powf(p));
    }
    sup
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::weights::TargetSpace;

    #[test]
    fn averaging_identity_and_power() {
        let q = DyadicCube::unit(1);
        let quad = Quadrature::default();
        let id = WeightModel::identity(1, TargetSpace::new(2, 2.0).unwrap());
        assert_eq!(averaging_norm_rhs(&id, 2.0, &q, &quad).unwrap().value, 1.0);
        let v = WeightModel::scalar_power(0.5, 0.25);
        let r = averaging_norm_rhs(&v, 2.0, &q, &quad).unwrap();
        assert!((r.value - (4.0f64 / 3.0).sqrt()).abs() < 1e-12);
        // v^{-2} = 1/x is not integrable on [0,1)
        let root = WeightModel::scalar_power(0.0, 0.5);
        assert!(matches!(averaging_norm_rhs(&root, 2.0, &q, &quad), Err(Error::Precondition(_))));
    }

    #[test]
    fn oracle_constant_weight() {
        let v = WeightModel::scalar_power(0.3, 0.0);
        let r = averaging_norm_oracle(&v, 3.0, &DyadicCube::unit(1), 16, &Quadrature::default(), 1).unwrap();
        assert!((r.value - 1.0).abs() < 1e-12 && r.converged);
        assert!(averaging_norm_oracle(&v, 3.0, &DyadicCube::unit(1), 8, &Quadrature::default(), 1).is_err());
    }

    #[test]
    fn oracle_approaches_rhs() {
        let v = WeightModel::scalar_power(0.37, -0.3);
        let q = DyadicCube::unit(1);
        let quad = Quadrature::default();
        let rhs = averaging_norm_rhs(&v, 2.0, &q, &quad).unwrap().value;
        let o = averaging_norm_oracle(&v, 2.0, &q, 1024, &quad, 5).unwrap();
        assert!(o.converged && o.value <= rhs * (1.0 + 1e-12) && o.value > 0.98 * rhs);
    }

    #[test]
    fn sparse_single_cube() {
        let one: Coefficient = std::sync::Arc::new(|_: &[f64]| 1.0);
        let q = DyadicCube::new(1, vec![1]);
        let fam = SparseFamily::middle_third_tree(&q, 0, one.clone(), one).unwrap();
        let mut f = SampledFunction::zeros(3, vec![0], vec![8], 1);
        for i in 4..8 {
            f.values[i] = 2.5;
        }
        f.values[0] = 7.0;
        let t = sparse_apply(&fam, &f).unwrap();
        assert_eq!(t.values, vec![0.0, 0.0, 0.0, 0.0, 2.5, 2.5, 2.5, 2.5]);
        assert!(sparse_apply(&SparseFamily::empty(), &f).unwrap().values.iter().all(|x| *x == 0.0));
        let coarse = SampledFunction::zeros(0, vec![0], vec![1], 1);
        assert!(matches!(sparse_apply(&fam, &coarse), Err(Error::Misaligned(_))));
    }

    #[test]
    fn middle_third_witnesses_are_disjoint() {
        let one: Coefficient = std::sync::Arc::new(|_: &[f64]| 1.0);
        let fam = SparseFamily::middle_third_tree(&DyadicCube::unit(2), 2, one.clone(), one).unwrap();
        assert_eq!(fam.len(), 1 + 8 + 64);
        assert!((fam.eta() - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn p22_preconditions() {
        assert!(p22_experiment(2.0, 0.2, &[4], 128).is_err());
        assert!(p22_experiment(2.0, 0.05, &[8], 128).is_err());
        assert!(p22_experiment(2.0, 0.05, &[], 128).is_err());
        let r = p22_experiment(2.0, 0.05, &[0], 128).unwrap();
        assert!(r.rows[0].lhs <= 10.0 * r.rows[0].rhs);
    }

    #[test]
    fn normal_sup_periodic_point() {
        let a = normal_sup_at(1.0 / 3.0, 2.0, 10);
        let b = normal_sup_at(1.0 / 3.0, 2.0, 40);
        assert!((a - b).abs() < 1e-9);
        assert!(normal_sup_experiment(2.0, &[4], 100, 1).is_err());
    }
}
