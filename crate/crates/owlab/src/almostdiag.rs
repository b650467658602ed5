//! `(D,E,F)`-almost diagonal matrices on dyadic sequences.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::dyadic::{babc_raw, DyadicCube, GridWindow};
use crate::error::{Error, Result};
use crate::quad::power_integral;
use crate::seqspace::{DyadicSequence, PreparedNorms, SpaceParams};
use crate::weights::least_squares;

/// Windows up to this many cubes store their entries densely.
pub const DENSE_LIMIT: usize = 4096;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ADParams {
    pub d: f64,
    pub e: f64,
    pub f: f64,
}

impl ADParams {
    pub fn new(d: f64, e: f64, f: f64) -> Result<Self> {
        if !(d.is_finite() && e.is_finite() && f.is_finite()) {
            return Err(Error::InvalidParameter("D, E, F must be finite".into()));
        }
        Ok(ADParams { d, e, f })
    }

    /// `B_{-E,-F,-D}(Q,R)`.
    pub fn kernel(&self, q: &DyadicCube, r: &DyadicCube) -> f64 {
        babc_raw(-self.e, -self.f, -self.d, q, r)
    }

    pub fn transposed(&self) -> ADParams {
        ADParams { d: self.d, e: self.f, f: self.e }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Provenance {
    Canonical(ADParams),
    Table,
}

#[derive(Clone, Debug)]
enum Entries {
    Dense(Vec<f64>),
    Lazy(ADParams),
    Sparse(HashMap<(usize, usize), f64>),
}

/// A matrix indexed by window cubes.
#[derive(Clone, Debug)]
pub struct ADMatrix {
    window: Arc<GridWindow>,
    entries: Entries,
    provenance: Provenance,
    bound: f64,
}

/// The extremal member `b_QR = B_{-E,-F,-D}(Q,R)` of the class.
pub fn canonical_ad_matrix(params: ADParams, window: Arc<GridWindow>) -> ADMatrix {
    let len = window.len();
    let entries = if len <= DENSE_LIMIT {
        let cubes = window.cubes();
        let dense: Vec<f64> = (0..len * len)
            .into_par_iter()
            .map(|ij| params.kernel(&cubes[ij / len], &cubes[ij % len]))
            .collect();
        Entries::Dense(dense)
    } else {
        Entries::Lazy(params)
    };
    ADMatrix { window, entries, provenance: Provenance::Canonical(params), bound: 1.0 }
}

impl ADMatrix {
    pub fn identity(window: Arc<GridWindow>) -> ADMatrix {
        let entries = (0..window.len()).map(|i| ((i, i), 1.0)).collect();
        ADMatrix { window, entries: Entries::Sparse(entries), provenance: Provenance::Table, bound: f64::NAN }
    }

    /// A user table given as `(row cube, column cube, value)` triples.
    pub fn from_triples(window: Arc<GridWindow>, triples: &[(DyadicCube, DyadicCube, f64)]) -> Result<ADMatrix> {
        let mut map = HashMap::new();
        for (q, r, v) in triples {
            let i = window.index_of(q).ok_or_else(|| Error::InvalidParameter(format!("cube {q} is outside the window")))?;
            let j = window.index_of(r).ok_or_else(|| Error::InvalidParameter(format!("cube {r} is outside the window")))?;
            if !v.is_finite() {
                return Err(Error::NonFinite(format!("entry {q} {r}")));
            }
            map.insert((i, j), *v);
        }
        Ok(ADMatrix { window, entries: Entries::Sparse(map), provenance: Provenance::Table, bound: f64::NAN })
    }

    /// Record the smallest `C` with `|b_QR| ≤ C·B_{-E,-F,-D}(Q,R)`.
    pub fn with_bound_for(mut self, params: &ADParams) -> ADMatrix {
        let cubes = self.window.cubes();
        let len = cubes.len();
        self.bound = (0..len)
            .flat_map(|i| (0..len).map(move |j| (i, j)))
            .map(|(i, j)| self.entry(i, j).abs() / params.kernel(&cubes[i], &cubes[j]))
            .fold(0.0, f64::max);
        self
    }

    pub fn window(&self) -> &Arc<GridWindow> {
        &self.window
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    pub fn bound_constant(&self) -> f64 {
        self.bound
    }

    pub fn is_dense(&self) -> bool {
        matches!(self.entries, Entries::Dense(_))
    }

    /// Entry by window indices.
    pub fn entry(&self, i: usize, j: usize) -> f64 {
        match &self.entries {
            Entries::Dense(v) => v[i * self.window.len() + j],
            Entries::Lazy(p) => p.kernel(&self.window.cubes()[i], &self.window.cubes()[j]),
            Entries::Sparse(m) => m.get(&(i, j)).copied().unwrap_or(0.0),
        }
    }

    pub fn get(&self, q: &DyadicCube, r: &DyadicCube) -> Option<f64> {
        Some(self.entry(self.window.index_of(q)?, self.window.index_of(r)?))
    }

    pub fn transpose(&self) -> ADMatrix {
        let len = self.window.len();
        let entries = match &self.entries {
            Entries::Dense(v) => Entries::Dense((0..len * len).map(|ij| v[(ij % len) * len + ij / len]).collect()),
            Entries::Lazy(p) => Entries::Lazy(p.transposed()),
            Entries::Sparse(m) => Entries::Sparse(m.iter().map(|(&(i, j), &v)| ((j, i), v)).collect()),
        };
        let provenance = match &self.provenance {
            Provenance::Canonical(p) => Provenance::Canonical(p.transposed()),
            Provenance::Table => Provenance::Table,
        };
        ADMatrix { window: self.window.clone(), entries, provenance, bound: self.bound }
    }

    /// Text triplets `(j,k) (j',k') value`, one nonzero entry per line.
    pub fn dump(&self) -> String {
        let cubes = self.window.cubes();
        let len = cubes.len();
        let mut out = String::new();
        for i in 0..len {
            for j in 0..len {
                let v = self.entry(i, j);
                if v != 0.0 {
                    writeln!(out, "{} {} {v:?}", cubes[i], cubes[j]).unwrap();
                }
            }
        }
        out
    }

    pub fn load(text: &str, window: Arc<GridWindow>) -> Result<ADMatrix> {
        let mut triples = Vec::new();
        for line in text.lines().map(str::trim).filter(|l| !l.is_empty()) {
            let tok: Vec<&str> = line.split_whitespace().collect();
            if tok.len() != 3 {
                return Err(Error::Parse(format!("expected three fields: {line}")));
            }
            let v: f64 = tok[2].parse().map_err(|_| Error::Parse(format!("bad value: {line}")))?;
            triples.push((parse_cube(tok[0])?, parse_cube(tok[1])?, v));
        }
        ADMatrix::from_triples(window, &triples)
    }
}

fn parse_cube(s: &str) -> Result<DyadicCube> {
    let inner = s
        .strip_prefix('(')
        .and_then(|r| r.strip_suffix(')'))
        .ok_or_else(|| Error::Parse(format!("bad cube: {s}")))?;
    let nums: Vec<i64> = inner
        .split(',')
        .map(|x| x.trim().parse().map_err(|_| Error::Parse(format!("bad cube: {s}"))))
        .collect::<Result<_>>()?;
    if nums.len() < 2 {
        return Err(Error::Parse(format!("bad cube: {s}")));
    }
    Ok(DyadicCube::new(nums[0] as i32, nums[1..].to_vec()))
}

/// `(Bt)_Q = Σ_R b_QR t_R` over the window.
pub fn ad_apply(b: &ADMatrix, t: &DyadicSequence) -> Result<DyadicSequence> {
    if !(Arc::ptr_eq(&b.window, t.window()) || *b.window == **t.window()) {
        return Err(Error::WindowMismatch);
    }
    let m = t.m();
    let support: Vec<(usize, &Vec<f64>)> = t.iter().map(|(q, v)| (b.window.index_of(q).unwrap(), v)).collect();
    let rows: Vec<Vec<f64>> = (0..b.window.len())
        .into_par_iter()
        .map(|i| {
            let mut acc = vec![0.0; m];
            for (j, v) in &support {
                let bij = b.entry(i, *j);
                if bij != 0.0 {
                    for (a, x) in acc.iter_mut().zip(v.iter()) {
                        *a += bij * x;
                    }
                }
            }
            acc
        })
        .collect();
    let mut out = DyadicSequence::new(t.window().clone(), m);
    for (q, v) in b.window.cubes().iter().zip(rows) {
        out.insert(q.clone(), v)?;
    }
    Ok(out)
}

#[derive(Clone, Debug)]
pub struct ComposeReport {
    pub worst: f64,
    pub worst_pair: (DyadicCube, DyadicCube),
    pub combined: ADParams,
}

/// Worst ratio `Σ_P B₁(Q,P) B₂(P,R) / B_{-E,-F,-D}(Q,R)` over window pairs,
/// with `G = min(G₁, G₂)` for each of `D, E, F`.
pub fn ad_compose_check(p1: &ADParams, p2: &ADParams, window: &GridWindow) -> Result<ComposeReport> {
    let n = window.dim() as f64;
    if !(p1.d > n && p2.d > n) {
        return Err(Error::Precondition(format!("D₁ = {} and D₂ = {} must both exceed n = {n}", p1.d, p2.d)));
    }
    if p1.e == p2.e {
        return Err(Error::Precondition(format!("E₁ = E₂ = {} is excluded", p1.e)));
    }
    if p1.f == p2.f {
        return Err(Error::Precondition(format!("F₁ = F₂ = {} is excluded", p1.f)));
    }
    let dmin = p1.d.min(p2.d);
    if !(p1.e + p2.f > dmin) {
        return Err(Error::Precondition(format!("E₁ + F₂ = {} must exceed min(D₁, D₂) = {dmin}", p1.e + p2.f)));
    }
    if !(p2.e + p1.f > dmin) {
        return Err(Error::Precondition(format!("E₂ + F₁ = {} must exceed min(D₁, D₂) = {dmin}", p2.e + p1.f)));
    }
    let combined = ADParams { d: dmin, e: p1.e.min(p2.e), f: p1.f.min(p2.f) };
    let cubes = window.cubes();
    let len = cubes.len();
    if len == 0 {
        return Err(Error::EmptyWindow("compose check".into()));
    }
    let left: Vec<f64> = (0..len * len).into_par_iter().map(|ij| p1.kernel(&cubes[ij / len], &cubes[ij % len])).collect();
    let right: Vec<f64> = (0..len * len).into_par_iter().map(|ij| p2.kernel(&cubes[ij / len], &cubes[ij % len])).collect();
    let (worst, wi, wj) = (0..len * len)
        .into_par_iter()
        .map(|ij| {
            let (i, j) = (ij / len, ij % len);
            let sum: f64 = (0..len).map(|k| left[i * len + k] * right[k * len + j]).sum();
            (sum / combined.kernel(&cubes[i], &cubes[j]), i, j)
        })
        .reduce(|| (f64::NEG_INFINITY, 0, 0), |a, b| if b.0 > a.0 || (b.0 == a.0 && (b.1, b.2) < (a.1, a.2)) { b } else { a });
    Ok(ComposeReport { worst, worst_pair: (cubes[wi].clone(), cubes[wj].clone()), combined })
}

#[derive(Clone, Debug)]
pub struct OpNormEstimate {
    pub value: f64,
    pub probe: String,
    pub probes: usize,
}

/// Number of random `±1` probes.
pub const RANDOM_PROBES: usize = 8;

/// Largest `‖Bt‖/‖t‖` over a fixed probe set: coordinate basis sequences,
/// random `±1` sequences and single-level stacks of ones.
pub fn ad_opnorm_estimate(b: &ADMatrix, params: &SpaceParams, norms: &PreparedNorms, m: usize, seed: u64) -> Result<OpNormEstimate> {
    let window = b.window.clone();
    let mut probes: Vec<(String, DyadicSequence)> = Vec::new();
    for q in window.cubes() {
        for c in 0..m {
            let mut t = DyadicSequence::new(window.clone(), m);
            let mut v = vec![0.0; m];
            v[c] = 1.0;
            t.insert(q.clone(), v)?;
            probes.push((format!("basis {q} coordinate {c}"), t));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for r in 0..RANDOM_PROBES {
        let mut t = DyadicSequence::new(window.clone(), m);
        for q in window.cubes() {
            let v: Vec<f64> = (0..m).map(|_| if rng.random_bool(0.5) { 1.0 } else { -1.0 }).collect();
            t.insert(q.clone(), v)?;
        }
        probes.push((format!("random sign {r}"), t));
    }
    for j in window.j_min()..=window.j_max() {
        let mut t = DyadicSequence::new(window.clone(), m);
        for q in window.level(j) {
            t.insert(q.clone(), vec![1.0; m])?;
        }
        probes.push((format!("level stack {j}"), t));
    }
    let count = probes.len();
    let ratios: Vec<Option<f64>> = probes
        .par_iter()
        .map(|(_, t)| -> Result<Option<f64>> {
            let den = norms.seq_norm(t, params)?;
            if den == 0.0 {
                return Ok(None);
            }
            Ok(Some(norms.seq_norm(&ad_apply(b, t)?, params)? / den))
        })
        .collect::<Result<_>>()?;
    let mut best = (0.0, String::from("none"));
    for ((name, _), r) in probes.iter().zip(ratios) {
        if let Some(r) = r {
            if r > best.0 {
                best = (r, name.clone());
            }
        }
    }
    Ok(OpNormEstimate { value: best.0, probe: best.1, probes: count })
}

#[derive(Clone, Copy, Debug)]
pub struct SharpAdRow {
    pub m: u32,
    pub lhs: f64,
    pub norm: f64,
}

#[derive(Clone, Debug)]
pub struct SharpAdResult {
    pub rows: Vec<SharpAdRow>,
    /// Slope of `log₂(M·LHS_M)` against `M`.
    pub slope: f64,
    /// Slope of `log₂ LHS_M` without the `M` factor.
    pub raw_slope: f64,
}

/// Midpoint nodes per level-`M` cell for the `x` integral.
pub const SHARP_AD_NODES: usize = 64;

/// The lower-bound construction with `v(x) = |x|^{(β-1)/p}` and the diagonal
/// weight `V = diag(v(· - x_i))`, `x_{2^j+k} = 2^{-j}k`.
///
/// For each `M` the left side is the level-`M` layer of the ball-averaged
/// quantity, `(∫₀¹ [∫₀¹ ‖V(x)t_M(y)‖ dy]^p dx)^{1/p}` with `u = 1` (the ball of
/// radius 1 clipped to `[0,1]`), and the norm is `‖t‖_{ḃ⁰_{p,p}(V)}` of `t`
/// truncated to levels `3..=M`.
pub fn sharp_ad_experiment(p: f64, beta: f64, m_range: &[u32]) -> Result<SharpAdResult> {
    if !(p > 1.0 && p.is_finite()) {
        return Err(Error::Precondition(format!("p must lie in (1,∞), got {p}")));
    }
    if !(beta > 1.0 && beta < p) {
        return Err(Error::Precondition(format!("β must lie in (1, p), got {beta}")));
    }
    if m_range.len() < 4 {
        return Err(Error::Precondition("at least four values of M are needed for the fit".into()));
    }
    if m_range.iter().any(|&m| !(3..=20).contains(&m)) {
        return Err(Error::Precondition("M must lie in 3..=20".into()));
    }
    let g = beta - 1.0;
    let lambda = |j: u32| (j as f64 * g / p).exp2() / j as f64;
    let rows: Vec<SharpAdRow> = m_range
        .par_iter()
        .map(|&m| {
            let cells = 1usize << m;
            let h = 1.0 / cells as f64;
            let nx = cells * SHARP_AD_NODES;
            let mut acc = 0.0;
            let mut a = vec![0.0; cells];
            for ix in 0..nx {
                let x = (ix as f64 + 0.5) / nx as f64;
                for (l, al) in a.iter_mut().enumerate() {
                    *al = (x - l as f64 * h).abs().powf(g);
                }
                // Σ_k (Σ_{|ℓ-k| ≤ 4} a_ℓ)^{1/p} with a sliding window
                let mut win: f64 = a[..cells.min(5)].iter().sum();
                let mut inner = 0.0;
                for k in 0..cells {
                    inner += win.max(0.0).powf(1.0 / p);
                    if k + 5 < cells {
                        win += a[k + 5];
                    }
                    if k >= 4 {
                        win -= a[k - 4];
                    }
                }
                let val = h * lambda(m) * inner;
                acc += val.powf(p);
            }
            let lhs = (acc / nx as f64).powf(1.0 / p);
            let mut norm_p = 0.0;
            for j in 3..=m {
                let hj = (-(j as f64)).exp2();
                let nj = 1i64 << j;
                let mut level = 0.0;
                for k in 0..nj {
                    for l in (k - 4).max(0)..=(k + 4).min(nj - 1) {
                        level += power_integral(k as f64 * hj, (k + 1) as f64 * hj, l as f64 * hj, g);
                    }
                }
                norm_p += lambda(j).powf(p) * level;
            }
            SharpAdRow { m, lhs, norm: norm_p.powf(1.0 / p) }
        })
        .collect();
    let xs: Vec<f64> = rows.iter().map(|r| r.m as f64).collect();
    let corrected: Vec<f64> = rows.iter().map(|r| (r.m as f64 * r.lhs).log2()).collect();
    let raw: Vec<f64> = rows.iter().map(|r| r.lhs.log2()).collect();
    Ok(SharpAdResult { slope: least_squares(&xs, &corrected).0, raw_slope: least_squares(&xs, &raw).0, rows })
}
