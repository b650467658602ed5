//! Dyadic sequences and weighted Besov / Triebel–Lizorkin sequence norms.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::dyadic::{DyadicCube, GridWindow};
use crate::error::{Error, Result};
use crate::weights::{lu_norm, LocalNorm, Quadrature, Side, WeightModel};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SpaceKind {
    Besov,
    TriebelLizorkin,
}

/// `(s, p, q)` and the Besov/TL switch, in dimension `n`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SpaceParams {
    pub n: usize,
    pub s: f64,
    pub p: f64,
    pub q: f64,
    pub kind: SpaceKind,
}

impl SpaceParams {
    pub fn new(n: usize, s: f64, p: f64, q: f64, kind: SpaceKind) -> Result<Self> {
        if !(p > 0.0 && p.is_finite()) {
            return Err(Error::InvalidParameter(format!("p must lie in (0,∞), got {p}")));
        }
        if !(q > 0.0) {
            return Err(Error::InvalidParameter(format!("q must lie in (0,∞], got {q}")));
        }
        if !s.is_finite() || n == 0 {
            return Err(Error::InvalidParameter("s must be finite and n positive".into()));
        }
        Ok(SpaceParams { n, s, p, q, kind })
    }

    pub fn besov(n: usize, s: f64, p: f64, q: f64) -> Result<Self> {
        SpaceParams::new(n, s, p, q, SpaceKind::Besov)
    }

    pub fn tl(n: usize, s: f64, p: f64, q: f64) -> Result<Self> {
        SpaceParams::new(n, s, p, q, SpaceKind::TriebelLizorkin)
    }

    /// `J = n / min(1, p)` (Besov) or `n / min(1, p, q)` (TL).
    pub fn j_const(&self) -> f64 {
        self.j_u(1.0)
    }

    /// `J^{(u)} = n / min(p, u)` (Besov) or `n / min(p, q, u)` (TL).
    pub fn j_u(&self, u: f64) -> f64 {
        let mut m = self.p.min(u);
        if self.kind == SpaceKind::TriebelLizorkin {
            m = m.min(self.q);
        }
        self.n as f64 / m
    }
}

/// A finitely supported sequence `{t_Q}` of vectors in `R^m` over a window.
#[derive(Clone, Debug)]
pub struct DyadicSequence {
    window: Arc<GridWindow>,
    m: usize,
    values: BTreeMap<DyadicCube, Vec<f64>>,
}

impl DyadicSequence {
    pub fn new(window: Arc<GridWindow>, m: usize) -> Self {
        DyadicSequence { window, m, values: BTreeMap::new() }
    }

    pub fn window(&self) -> &Arc<GridWindow> {
        &self.window
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn insert(&mut self, q: DyadicCube, v: Vec<f64>) -> Result<()> {
        if v.len() != self.m {
            return Err(Error::DimensionMismatch { expected: self.m, got: v.len() });
        }
        if !self.window.contains(&q) {
            return Err(Error::InvalidParameter(format!("cube {q} is outside the window")));
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite(format!("value at {q}")));
        }
        if v.iter().all(|x| *x == 0.0) {
            self.values.remove(&q);
        } else {
            self.values.insert(q, v);
        }
        Ok(())
    }

    pub fn get(&self, q: &DyadicCube) -> Option<&[f64]> {
        self.values.get(q).map(|v| v.as_slice())
    }

    pub fn remove(&mut self, q: &DyadicCube) -> Option<Vec<f64>> {
        self.values.remove(q)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&DyadicCube, &Vec<f64>)> {
        self.values.iter()
    }

    pub fn support_len(&self) -> usize {
        self.values.len()
    }

    pub fn is_zero(&self) -> bool {
        self.values.is_empty()
    }

    pub fn scaled(&self, c: f64) -> DyadicSequence {
        let mut out = DyadicSequence::new(self.window.clone(), self.m);
        if c != 0.0 {
            for (q, v) in &self.values {
                out.values.insert(q.clone(), v.iter().map(|x| c * x).collect());
            }
        }
        out
    }

    pub fn add(&self, other: &DyadicSequence) -> Result<DyadicSequence> {
        if *self.window != *other.window || self.m != other.m {
            return Err(Error::WindowMismatch);
        }
        let mut out = self.clone();
        for (q, v) in &other.values {
            let cur = out.values.get(q).cloned().unwrap_or_else(|| vec![0.0; self.m]);
            out.insert(q.clone(), cur.iter().zip(v).map(|(a, b)| a + b).collect())?;
        }
        Ok(out)
    }

    /// Uniform `[-1, 1]` entries on every window cube.
    pub fn random(window: Arc<GridWindow>, m: usize, seed: u64) -> DyadicSequence {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut t = DyadicSequence::new(window.clone(), m);
        for q in window.cubes() {
            let v: Vec<f64> = (0..m).map(|_| rng.random_range(-1.0..1.0)).collect();
            t.values.insert(q.clone(), v);
        }
        t
    }
}

/// `t_j(x) = t_Q / |Q|^{1/2}` for the level-`j` cube `Q` containing `x`.
pub fn layer_eval(t: &DyadicSequence, j: i32, x: &[f64]) -> Result<Vec<f64>> {
    if !t.window.box_contains(x) {
        return Err(Error::InvalidParameter("point outside the window box".into()));
    }
    let q = DyadicCube::containing(j, x);
    Ok(match t.get(&q) {
        Some(v) => {
            let s = q.volume().sqrt();
            v.iter().map(|a| a / s).collect()
        }
        None => vec![0.0; t.m],
    })
}

/// `(u, a, b, c)` metadata of a norm family.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct UabcMeta {
    pub u: f64,
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

pub type NormFn = Arc<dyn Fn(&DyadicCube, &[f64]) -> f64 + Send + Sync>;

#[derive(Clone)]
pub enum FamilyKind {
    /// `ρ_Q = ρ_{Ł^r(Q,V)}`.
    Weighted { weight: WeightModel, r: f64, quad: Quadrature },
    /// The same `ℓ^u` norm on every cube.
    Unweighted { u: f64 },
    /// Arbitrary per-cube norms.
    Table(NormFn),
    /// `d_I(e) = ρ_{Q(I,k)}(e)` on `R^{n-1}`, pulled back from a family on `R^n`.
    Pullback { base: Box<NormFamily>, k: i64 },
}

/// A per-cube quasi-norm assignment `Q ↦ ρ_Q`.
#[derive(Clone)]
pub struct NormFamily {
    pub kind: FamilyKind,
    pub meta: Option<UabcMeta>,
}

impl std::fmt::Debug for NormFamily {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let k = match &self.kind {
            FamilyKind::Weighted { r, .. } => format!("Weighted(r={r})"),
            FamilyKind::Unweighted { u } => format!("Unweighted(u={u})"),
            FamilyKind::Table(_) => "Table".into(),
            FamilyKind::Pullback { k, .. } => format!("Pullback(k={k})"),
        };
        f.debug_struct("NormFamily").field("kind", &k).field("meta", &self.meta).finish()
    }
}

/// A family member prepared for repeated evaluation on one cube.
pub enum CubeNorm {
    Local(LocalNorm),
    Unweighted(f64),
    Table(NormFn, DyadicCube),
}

impl CubeNorm {
    pub fn rho(&self, e: &[f64]) -> f64 {
        match self {
            CubeNorm::Local(l) => l.rho(e),
            CubeNorm::Unweighted(u) => lu_norm(e, *u),
            CubeNorm::Table(f, q) => f(q, e),
        }
    }
}

impl NormFamily {
    pub fn weighted(weight: WeightModel, r: f64, quad: Quadrature) -> Self {
        NormFamily { kind: FamilyKind::Weighted { weight, r, quad }, meta: None }
    }

    /// Absolute value on scalars, Euclidean norm on vectors.
    pub fn euclidean() -> Self {
        NormFamily { kind: FamilyKind::Unweighted { u: 2.0 }, meta: None }
    }

    pub fn unweighted(u: f64) -> Self {
        NormFamily { kind: FamilyKind::Unweighted { u }, meta: None }
    }

    pub fn table(f: NormFn) -> Self {
        NormFamily { kind: FamilyKind::Table(f), meta: None }
    }

    pub fn pullback(base: NormFamily, k: i64) -> Self {
        NormFamily { kind: FamilyKind::Pullback { base: Box::new(base), k }, meta: None }
    }

    pub fn with_meta(mut self, meta: UabcMeta) -> Self {
        self.meta = Some(meta);
        self
    }

    pub fn at(&self, q: &DyadicCube) -> Result<CubeNorm> {
        Ok(match &self.kind {
            FamilyKind::Weighted { weight, r, quad } => CubeNorm::Local(LocalNorm::new(weight, q, *r, Side::Primal, quad)?),
            FamilyKind::Unweighted { u } => CubeNorm::Unweighted(*u),
            FamilyKind::Table(f) => CubeNorm::Table(f.clone(), q.clone()),
            FamilyKind::Pullback { base, k } => base.at(&slab_cube(q, *k))?,
        })
    }

    pub fn rho(&self, q: &DyadicCube, e: &[f64]) -> Result<f64> {
        Ok(self.at(q)?.rho(e))
    }
}

/// `Q(I,k) = I × [kℓ(I), (k+1)ℓ(I))`.
pub fn slab_cube(i: &DyadicCube, k: i64) -> DyadicCube {
    let mut off = i.offset.clone();
    off.push(k);
    DyadicCube::new(i.level, off)
}

/// Where the per-cube sizes come from.
#[derive(Clone, Copy)]
pub enum NormSource<'a> {
    Family(&'a NormFamily),
    /// Integrate `‖V(x) t_Q‖` directly against the weight.
    Pointwise { weight: &'a WeightModel, quad: &'a Quadrature },
}

/// `‖t‖_{ȧ^s_{p,q}}` for the given norm source.
pub fn seq_norm(t: &DyadicSequence, params: &SpaceParams, source: NormSource<'_>) -> Result<f64> {
    if t.window.dim() != params.n {
        return Err(Error::DimensionMismatch { expected: params.n, got: t.window.dim() });
    }
    match source {
        NormSource::Family(f) => {
            let entries = cube_sizes(t, f)?;
            scalar_norm(params, &t.window, &entries)
        }
        NormSource::Pointwise { weight, quad } => pointwise_norm(t, params, weight, quad),
    }
}

/// `ρ_Q(t_Q)` for every supported cube.
pub fn cube_sizes(t: &DyadicSequence, f: &NormFamily) -> Result<Vec<(DyadicCube, f64)>> {
    let items: Vec<(&DyadicCube, &Vec<f64>)> = t.iter().collect();
    items
        .par_iter()
        .map(|(q, v)| Ok(((*q).clone(), f.at(q)?.rho(v))))
        .collect()
}

/// Family members for every window cube, for repeated norm evaluation.
pub struct PreparedNorms {
    window: Arc<GridWindow>,
    norms: Vec<CubeNorm>,
}

impl PreparedNorms {
    pub fn new(family: &NormFamily, window: Arc<GridWindow>) -> Result<Self> {
        let norms = window.cubes().par_iter().map(|q| family.at(q)).collect::<Result<Vec<_>>>()?;
        Ok(PreparedNorms { window, norms })
    }

    pub fn rho(&self, q: &DyadicCube, e: &[f64]) -> Option<f64> {
        self.window.index_of(q).map(|i| self.norms[i].rho(e))
    }

    /// Same value as [`seq_norm`] with the family source.
    pub fn seq_norm(&self, t: &DyadicSequence, params: &SpaceParams) -> Result<f64> {
        if *t.window != *self.window {
            return Err(Error::WindowMismatch);
        }
        let entries: Vec<(DyadicCube, f64)> = t
            .iter()
            .map(|(q, v)| (q.clone(), self.norms[self.window.index_of(q).unwrap()].rho(v)))
            .collect();
        scalar_norm(params, &self.window, &entries)
    }
}

/// Norm of the scalar sequence `{r_Q}` with the unweighted absolute value.
///
/// Everything is accumulated relative to the largest `log(2^{js}|Q|^{-1/2} r_Q)`,
/// so extreme `s·j` cannot overflow.
pub fn scalar_norm(params: &SpaceParams, window: &GridWindow, entries: &[(DyadicCube, f64)]) -> Result<f64> {
    let (s, p, q) = (params.s, params.p, params.q);
    let ln2 = std::f64::consts::LN_2;
    let logs: Vec<(usize, f64)> = entries
        .iter()
        .enumerate()
        .filter(|(_, (_, r))| *r > 0.0)
        .map(|(i, (c, r))| {
            let j = c.level as f64;
            (i, j * s * ln2 + 0.5 * j * params.n as f64 * ln2 + r.ln())
        })
        .collect();
    if entries.iter().any(|(_, r)| !r.is_finite() || r.is_nan()) {
        return Err(Error::NonFinite("cube size".into()));
    }
    if logs.is_empty() {
        return Ok(0.0);
    }
    let shift = logs.iter().map(|x| x.1).fold(f64::NEG_INFINITY, f64::max);
    let value = match params.kind {
        SpaceKind::Besov => {
            // per level: Σ |Q| (scaled size)^p
            let mut levels: BTreeMap<i32, f64> = BTreeMap::new();
            for (i, l) in &logs {
                let c = &entries[*i].0;
                *levels.entry(c.level).or_insert(0.0) += c.volume() * (p * (l - shift)).exp();
            }
            if q.is_infinite() {
                levels.values().fold(0.0f64, |m, v| m.max(v.powf(1.0 / p)))
            } else {
                levels.values().map(|v| v.powf(q / p)).sum::<f64>().powf(1.0 / q)
            }
        }
        SpaceKind::TriebelLizorkin => {
            let jf = window.j_max();
            let cells = window.level(jf);
            let n = params.n;
            let lo: Vec<i64> = (0..n).map(|a| cells.iter().map(|c| c.offset[a]).min().unwrap()).collect();
            let hi: Vec<i64> = (0..n).map(|a| cells.iter().map(|c| c.offset[a]).max().unwrap()).collect();
            let ext: Vec<usize> = (0..n).map(|a| (hi[a] - lo[a] + 1) as usize).collect();
            let mut stack = vec![0.0f64; ext.iter().product()];
            for (i, l) in &logs {
                let c = &entries[*i].0;
                let v = l - shift;
                let val = if q.is_infinite() { v.exp() } else { (q * v).exp() };
                let sh = (jf - c.level) as u32;
                let ranges: Vec<(i64, i64)> = (0..n)
                    .map(|a| {
                        let a0 = (c.offset[a] << sh).max(lo[a]);
                        let a1 = (((c.offset[a] + 1) << sh) - 1).min(hi[a]);
                        (a0, a1)
                    })
                    .collect();
                if ranges.iter().any(|r| r.0 > r.1) {
                    continue;
                }
                let mut k: Vec<i64> = ranges.iter().map(|r| r.0).collect();
                'cells: loop {
                    let mut idx = 0usize;
                    for a in 0..n {
                        idx = idx * ext[a] + (k[a] - lo[a]) as usize;
                    }
                    if q.is_infinite() {
                        stack[idx] = stack[idx].max(val);
                    } else {
                        stack[idx] += val;
                    }
                    for a in (0..n).rev() {
                        if k[a] < ranges[a].1 {
                            k[a] += 1;
                            continue 'cells;
                        }
                        k[a] = ranges[a].0;
                    }
                    break;
                }
            }
            let vol = (-(jf as f64) * n as f64).exp2();
            let e = if q.is_infinite() { p } else { p / q };
            (stack.iter().filter(|x| **x > 0.0).map(|x| x.powf(e)).sum::<f64>() * vol).powf(1.0 / p)
        }
    };
    Ok(value * shift.exp())
}

fn pointwise_norm(t: &DyadicSequence, params: &SpaceParams, weight: &WeightModel, quad: &Quadrature) -> Result<f64> {
    if t.m != weight.m() {
        return Err(Error::DimensionMismatch { expected: weight.m(), got: t.m });
    }
    let (s, p, q) = (params.s, params.p, params.q);
    let u = weight.target.u;
    let norm_at = |x: &[f64], e: &[f64]| -> f64 {
        let a = weight.matrix_at(x);
        let m = e.len();
        let v: Vec<f64> = (0..m).map(|i| a[i * m..(i + 1) * m].iter().zip(e).map(|(x, y)| x * y).sum()).collect();
        lu_norm(&v, u)
    };
    match params.kind {
        SpaceKind::Besov => {
            // fint_Q ‖V t_Q‖^p per cube, then the ρ-source formula with r_Q = (fint)^{1/p}
            let items: Vec<(&DyadicCube, &Vec<f64>)> = t.iter().collect();
            let entries: Vec<(DyadicCube, f64)> = items
                .par_iter()
                .map(|(c, v)| {
                    let rule = quad.cube_rule(weight, c);
                    let avg = rule.average(|x| norm_at(x, v).powf(p));
                    ((*c).clone(), avg.powf(1.0 / p))
                })
                .collect();
            scalar_norm(params, &t.window, &entries)
        }
        SpaceKind::TriebelLizorkin => {
            let jf = t.window.j_max();
            let cells = t.window.level(jf).to_vec();
            let n = params.n;
            let per_cell: Vec<f64> = cells
                .par_iter()
                .map(|cell| {
                    let anc: Vec<(&DyadicCube, &Vec<f64>, f64)> = (t.window.j_min()..=jf)
                        .filter_map(|j| {
                            let a = cell.ancestor(j);
                            let (key, v) = t.values.get_key_value(&a)?;
                            let scale = (j as f64 * (s + 0.5 * n as f64)).exp2();
                            Some((key, v, scale))
                        })
                        .collect();
                    if anc.is_empty() {
                        return 0.0;
                    }
                    let rule = quad.cube_rule(weight, cell);
                    rule.average(|x| {
                        if q.is_infinite() {
                            anc.iter().map(|(_, v, sc)| sc * norm_at(x, v)).fold(0.0, f64::max).powf(p)
                        } else {
                            anc.iter().map(|(_, v, sc)| (sc * norm_at(x, v)).powf(q)).sum::<f64>().powf(p / q)
                        }
                    }) * cell.volume()
                })
                .collect();
            let total: f64 = per_cell.iter().sum();
            if !total.is_finite() {
                return Err(Error::NonFinite("pointwise TL integral".into()));
            }
            Ok(total.powf(1.0 / p))
        }
    }
}

/// `{ρ_Q(t_Q)^u ℓ(Q)^{n(1-u)/2}}` as a scalar sequence.
pub fn rescale_map(t: &DyadicSequence, rho: &NormFamily, u: f64) -> Result<DyadicSequence> {
    if !(u > 0.0 && u.is_finite()) {
        return Err(Error::InvalidParameter(format!("u must lie in (0,∞), got {u}")));
    }
    let n = t.window.dim() as f64;
    let mut out = DyadicSequence::new(t.window.clone(), 1);
    for (q, r) in cube_sizes(t, rho)? {
        let v = r.powf(u) * q.side().powf(n * (1.0 - u) / 2.0);
        out.insert(q, vec![v])?;
    }
    Ok(out)
}

/// Parameters `(su, p/u, q/u)` on the rescaled side.
pub fn rescaled_params(params: &SpaceParams, u: f64) -> SpaceParams {
    SpaceParams { s: params.s * u, p: params.p / u, q: params.q / u, ..*params }
}

#[derive(Clone, Copy, Debug)]
pub struct SingleCubeBound {
    pub holds: bool,
    pub lhs: f64,
    pub rhs: f64,
}

/// `ρ_R(t_R) ≤ ℓ(R)^s |R|^{1/2-1/p} ‖t‖`.
pub fn single_cube_bound(t: &DyadicSequence, r: &DyadicCube, rho: &NormFamily, params: &SpaceParams) -> Result<SingleCubeBound> {
    if !t.window.contains(r) {
        return Err(Error::InvalidParameter(format!("cube {r} is outside the window")));
    }
    let lhs = match t.get(r) {
        Some(v) => rho.rho(r, v)?,
        None => 0.0,
    };
    let norm = seq_norm(t, params, NormSource::Family(rho))?;
    let rhs = r.side().powf(params.s) * r.volume().powf(0.5 - 1.0 / params.p) * norm;
    Ok(SingleCubeBound { holds: lhs <= rhs * (1.0 + 1e-12), lhs, rhs })
}

/// Text form: a header line, then `j k1 .. kn v1 .. vm` per supported cube.
pub fn write_sequence(t: &DyadicSequence) -> String {
    let w = &t.window;
    let mut out = String::new();
    let join = |v: &[f64]| v.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(",");
    writeln!(
        out,
        "# n={} m={} levels={},{} lo={} hi={}",
        w.dim(),
        t.m,
        w.j_min(),
        w.j_max(),
        join(w.box_lo()),
        join(w.box_hi())
    )
    .unwrap();
    for (q, v) in t.iter() {
        write!(out, "{}", q.level).unwrap();
        for k in &q.offset {
            write!(out, " {k}").unwrap();
        }
        for x in v {
            write!(out, " {x:?}").unwrap();
        }
        out.push('\n');
    }
    out
}

pub fn read_sequence(text: &str) -> Result<DyadicSequence> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines.next().ok_or_else(|| Error::Parse("missing header".into()))?;
    let body = header.trim_start_matches('#').trim();
    let field = |name: &str| -> Result<String> {
        body.split_whitespace()
            .find_map(|kv| kv.strip_prefix(name).and_then(|r| r.strip_prefix('=')))
            .map(str::to_owned)
            .ok_or_else(|| Error::Parse(format!("header lacks {name}")))
    };
    let num = |s: &str| s.trim().parse::<f64>().map_err(|e| Error::Parse(format!("{s}: {e}")));
    let n: usize = field("n")?.parse().map_err(|_| Error::Parse("bad n".into()))?;
    let m: usize = field("m")?.parse().map_err(|_| Error::Parse("bad m".into()))?;
    let levels: Vec<i32> = field("levels")?
        .split(',')
        .map(|s| s.parse().map_err(|_| Error::Parse("bad levels".into())))
        .collect::<Result<_>>()?;
    let lo: Vec<f64> = field("lo")?.split(',').map(num).collect::<Result<_>>()?;
    let hi: Vec<f64> = field("hi")?.split(',').map(num).collect::<Result<_>>()?;
    if levels.len() != 2 {
        return Err(Error::Parse("levels needs two values".into()));
    }
    let window = Arc::new(GridWindow::new(n, levels[0], levels[1], &lo, &hi)?);
    let mut t = DyadicSequence::new(window, m);
    for line in lines {
        let tok: Vec<&str> = line.split_whitespace().collect();
        if tok.len() != 1 + n + m {
            return Err(Error::Parse(format!("expected {} fields: {line}", 1 + n + m)));
        }
        let j: i32 = tok[0].parse().map_err(|_| Error::Parse(format!("bad level: {line}")))?;
        let k: Vec<i64> = tok[1..=n]
            .iter()
            .map(|s| s.parse().map_err(|_| Error::Parse(format!("bad offset: {line}"))))
            .collect::<Result<_>>()?;
        let v: Vec<f64> = tok[1 + n..].iter().map(|s| num(s)).collect::<Result<_>>()?;
        t.insert(DyadicCube::new(j, k), v)?;
    }
    Ok(t)
}
