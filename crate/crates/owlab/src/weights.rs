//! Finite-dimensional matrix weights, their cube quasi-norms and the
//! constants attached to them (𝒜_p, reverse Hölder, doubling).

use std::collections::BTreeSet;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::dyadic::{DyadicCube, GridWindow};
use crate::error::{Error, Result};
use crate::optim::{random_unit, SphereSearch};
use crate::quad;

/// Hölder conjugate, with `p' = ∞` for `p <= 1`.
pub fn conjugate(p: f64) -> f64 {
    if p <= 1.0 {
        f64::INFINITY
    } else if p.is_infinite() {
        1.0
    } else {
        p / (p - 1.0)
    }
}

/// `(Σ|v_i|^u)^{1/u}`; `u = ∞` is the max norm. Works for `u < 1` as a quasi-norm.
pub fn lu_norm(v: &[f64], u: f64) -> f64 {
    if u.is_infinite() {
        return v.iter().fold(0.0, |m, x| m.max(x.abs()));
    }
    if u == 2.0 {
        return v.iter().map(|x| x * x).sum::<f64>().sqrt();
    }
    if u == 1.0 {
        return v.iter().map(|x| x.abs()).sum();
    }
    v.iter().map(|x| x.abs().powf(u)).sum::<f64>().powf(1.0 / u)
}

/// `ℓ^u` on `m` coordinates.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TargetSpace {
    pub m: usize,
    pub u: f64,
}

impl TargetSpace {
    pub fn new(m: usize, u: f64) -> Result<Self> {
        if m == 0 {
            return Err(Error::InvalidParameter("target dimension must be positive".into()));
        }
        if !(u >= 1.0) {
            return Err(Error::InvalidParameter(format!("target exponent must be >= 1, got {u}")));
        }
        Ok(TargetSpace { m, u })
    }

    pub fn norm(&self, v: &[f64]) -> f64 {
        lu_norm(v, self.u)
    }

    /// The dual target `ℓ^{u'}`.
    pub fn dual(&self) -> TargetSpace {
        TargetSpace { m: self.m, u: if self.u == 1.0 { f64::INFINITY } else { conjugate(self.u) } }
    }
}

/// Piecewise-constant matrices on a uniform grid of cells over a box.
/// Points outside the box use the nearest cell.
#[derive(Clone, Debug)]
pub struct PiecewiseGrid {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub cells: Vec<usize>,
    /// Row-major `m×m` matrices, cells in lexicographic order.
    pub mats: Vec<Vec<f64>>,
}

impl PiecewiseGrid {
    fn cell_of(&self, x: &[f64]) -> usize {
        let mut idx = 0;
        for a in 0..self.cells.len() {
            let h = (self.hi[a] - self.lo[a]) / self.cells[a] as f64;
            let i = ((x[a] - self.lo[a]) / h).floor();
            let i = i.clamp(0.0, (self.cells[a] - 1) as f64) as usize;
            idx = idx * self.cells[a] + i;
        }
        idx
    }

    fn breaks(&self, axis: usize) -> Vec<f64> {
        let h = (self.hi[axis] - self.lo[axis]) / self.cells[axis] as f64;
        (1..self.cells[axis]).map(|i| self.lo[axis] + i as f64 * h).collect()
    }
}

#[derive(Clone, Debug)]
pub enum WeightKind {
    Identity,
    /// `V(x) = diag(|x - x_i|^{β_i})`.
    DiagonalPower { centers: Vec<Vec<f64>>, exponents: Vec<f64> },
    /// `V(x) = diag(log|x - x_i|)`; meant as the inner block of [`WeightKind::BlockBmo`].
    DiagonalLog { centers: Vec<Vec<f64>> },
    /// `V = [[I, 0], [B, I]]` with `B` the inner model.
    BlockBmo { inner: Box<WeightModel> },
    PiecewiseConstant(PiecewiseGrid),
}

#[derive(Clone, Debug)]
pub struct WeightModel {
    pub n: usize,
    pub target: TargetSpace,
    pub kind: WeightKind,
}

impl WeightModel {
    pub fn identity(n: usize, target: TargetSpace) -> Self {
        WeightModel { n, target, kind: WeightKind::Identity }
    }

    pub fn diagonal_power(n: usize, u: f64, centers: Vec<Vec<f64>>, exponents: Vec<f64>) -> Result<Self> {
        if centers.len() != exponents.len() || centers.is_empty() {
            return Err(Error::InvalidParameter("one center and one exponent per coordinate".into()));
        }
        if let Some(c) = centers.iter().find(|c| c.len() != n) {
            return Err(Error::DimensionMismatch { expected: n, got: c.len() });
        }
        let target = TargetSpace::new(exponents.len(), u)?;
        Ok(WeightModel { n, target, kind: WeightKind::DiagonalPower { centers, exponents } })
    }

    /// Scalar power weight `|x - c|^β` in one dimension.
    pub fn scalar_power(c: f64, beta: f64) -> Self {
        WeightModel::diagonal_power(1, 2.0, vec![vec![c]], vec![beta]).expect("valid scalar weight")
    }

    pub fn diagonal_log(n: usize, u: f64, centers: Vec<Vec<f64>>) -> Result<Self> {
        if centers.is_empty() {
            return Err(Error::InvalidParameter("need at least one center".into()));
        }
        if let Some(c) = centers.iter().find(|c| c.len() != n) {
            return Err(Error::DimensionMismatch { expected: n, got: c.len() });
        }
        let target = TargetSpace::new(centers.len(), u)?;
        Ok(WeightModel { n, target, kind: WeightKind::DiagonalLog { centers } })
    }

    pub fn piecewise_constant(u: f64, grid: PiecewiseGrid) -> Result<Self> {
        let n = grid.cells.len();
        if n == 0 || grid.lo.len() != n || grid.hi.len() != n {
            return Err(Error::InvalidParameter("grid box and cell counts disagree".into()));
        }
        let count: usize = grid.cells.iter().product();
        if grid.mats.len() != count || count == 0 {
            return Err(Error::InvalidParameter(format!("expected {count} cell matrices, got {}", grid.mats.len())));
        }
        let m2 = grid.mats[0].len();
        let m = (m2 as f64).sqrt().round() as usize;
        if m * m != m2 || grid.mats.iter().any(|a| a.len() != m2) {
            return Err(Error::InvalidParameter("cell matrices must be square and equal-sized".into()));
        }
        for (i, a) in grid.mats.iter().enumerate() {
            let d = DMatrix::from_row_slice(m, m, a).determinant();
            if !(d.abs() > 1e-300) {
                return Err(Error::InvalidParameter(format!("cell {i} matrix is singular")));
            }
        }
        let target = TargetSpace::new(m, u)?;
        Ok(WeightModel { n, target, kind: WeightKind::PiecewiseConstant(grid) })
    }

    pub fn m(&self) -> usize {
        self.target.m
    }

    pub fn is_diagonal(&self) -> bool {
        match &self.kind {
            WeightKind::Identity | WeightKind::DiagonalPower { .. } | WeightKind::DiagonalLog { .. } => true,
            WeightKind::PiecewiseConstant(g) => {
                let m = self.m();
                g.mats.iter().all(|a| (0..m).all(|i| (0..m).all(|j| i == j || a[i * m + j] == 0.0)))
            }
            WeightKind::BlockBmo { .. } => false,
        }
    }

    /// `V(x)` as a row-major `m×m` matrix.
    pub fn matrix_at(&self, x: &[f64]) -> Vec<f64> {
        let m = self.m();
        match &self.kind {
            WeightKind::Identity => diag_matrix(&vec![1.0; m]),
            WeightKind::DiagonalPower { .. } | WeightKind::DiagonalLog { .. } => {
                diag_matrix(&self.diagonal_at(x).expect("diagonal kind"))
            }
            WeightKind::BlockBmo { inner } => {
                let k = inner.m();
                let b = inner.matrix_at(x);
                let mut v = diag_matrix(&vec![1.0; m]);
                for i in 0..k {
                    for j in 0..k {
                        v[(k + i) * m + j] = b[i * k + j];
                    }
                }
                v
            }
            WeightKind::PiecewiseConstant(g) => g.mats[g.cell_of(x)].clone(),
        }
    }

    /// Diagonal entries for diagonal kinds.
    pub fn diagonal_at(&self, x: &[f64]) -> Option<Vec<f64>> {
        match &self.kind {
            WeightKind::Identity => Some(vec![1.0; self.m()]),
            WeightKind::DiagonalPower { centers, exponents } => Some(
                centers
                    .iter()
                    .zip(exponents)
                    .map(|(c, &b)| euclid(x, c).powf(b))
                    .collect(),
            ),
            WeightKind::DiagonalLog { centers } => Some(centers.iter().map(|c| euclid(x, c).ln()).collect()),
            _ => None,
        }
    }

    /// `V(x)^{-1}`, or `None` when it is numerically singular.
    pub fn inverse_at(&self, x: &[f64]) -> Option<Vec<f64>> {
        let m = self.m();
        match &self.kind {
            WeightKind::BlockBmo { inner } => {
                let k = inner.m();
                let b = inner.matrix_at(x);
                let mut v = diag_matrix(&vec![1.0; m]);
                for i in 0..k {
                    for j in 0..k {
                        v[(k + i) * m + j] = -b[i * k + j];
                    }
                }
                v.iter().all(|t| t.is_finite()).then_some(v)
            }
            WeightKind::PiecewiseConstant(_) => {
                let a = DMatrix::from_row_slice(m, m, &self.matrix_at(x));
                let inv = a.try_inverse()?;
                Some((0..m).flat_map(|i| (0..m).map(move |j| (i, j))).map(|(i, j)| inv[(i, j)]).collect())
            }
            _ => {
                let d = self.diagonal_at(x)?;
                if d.iter().any(|v| !(v.abs() > 1e-300) || !v.is_finite()) {
                    return None;
                }
                Some(diag_matrix(&d.iter().map(|v| 1.0 / v).collect::<Vec<_>>()))
            }
        }
    }

    /// Coordinates along `axis` where the weight is singular or jumps.
    pub fn breakpoints(&self, axis: usize) -> Vec<f64> {
        let mut v = match &self.kind {
            WeightKind::Identity => vec![],
            WeightKind::DiagonalPower { centers, .. } | WeightKind::DiagonalLog { centers } => {
                centers.iter().map(|c| c[axis]).collect()
            }
            WeightKind::BlockBmo { inner } => inner.breakpoints(axis),
            WeightKind::PiecewiseConstant(g) => g.breaks(axis),
        };
        v.sort_by(|a, b| a.partial_cmp(b).unwrap());
        v.dedup();
        v
    }
}

fn euclid(x: &[f64], c: &[f64]) -> f64 {
    if x.len() == 1 {
        return (x[0] - c[0]).abs();
    }
    x.iter().zip(c).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()
}

fn diag_matrix(d: &[f64]) -> Vec<f64> {
    let m = d.len();
    let mut a = vec![0.0; m * m];
    for i in 0..m {
        a[i * m + i] = d[i];
    }
    a
}

/// `[[I, 0], [B(x), I]]` from an inner model `B`.
pub fn make_bmo_block_weight(inner: WeightModel) -> WeightModel {
    let target = TargetSpace { m: 2 * inner.m(), u: inner.target.u };
    WeightModel { n: inner.n, target, kind: WeightKind::BlockBmo { inner: Box::new(inner) } }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum QuadRule {
    /// Composite midpoint, split at the weight's singular coordinates.
    Midpoint,
    /// Tanh-sinh per piece between singular coordinates.
    TanhSinh,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Quadrature {
    /// Nodes per cube and axis (midpoint rule).
    pub nodes: usize,
    pub rule: QuadRule,
    /// Use exact power integrals when the weight allows it.
    pub closed_form: bool,
}

impl Default for Quadrature {
    fn default() -> Self {
        Quadrature { nodes: 64, rule: QuadRule::Midpoint, closed_form: true }
    }
}

impl Quadrature {
    pub fn new(nodes: usize, rule: QuadRule) -> Result<Self> {
        if nodes < 2 {
            return Err(Error::InvalidParameter("quadrature needs at least 2 nodes".into()));
        }
        Ok(Quadrature { nodes, rule, closed_form: true })
    }

    pub fn sampled_only(mut self) -> Self {
        self.closed_form = false;
        self
    }

    /// Nodes and probability weights on `Q` for integrating functions of `V(x)`.
    pub fn cube_rule(&self, v: &WeightModel, q: &DyadicCube) -> CubeRule {
        let n = q.dim();
        if let WeightKind::Identity = v.kind {
            return CubeRule { n, points: q.center(), weights: vec![1.0] };
        }
        let exact_pieces = matches!(v.kind, WeightKind::PiecewiseConstant(_));
        let axes: Vec<(Vec<f64>, Vec<f64>)> = (0..n)
            .map(|a| {
                let (lo, hi) = (q.lower(a), q.upper(a));
                let mut cuts = vec![lo];
                cuts.extend(v.breakpoints(a).into_iter().filter(|&c| c > lo && c < hi));
                cuts.push(hi);
                let mut xs = Vec::new();
                let mut ws = Vec::new();
                for w in cuts.windows(2) {
                    let (x, wt) = if exact_pieces {
                        (vec![0.5 * (w[0] + w[1])], vec![w[1] - w[0]])
                    } else {
                        match self.rule {
                            QuadRule::Midpoint => {
                                let share = ((w[1] - w[0]) / (hi - lo) * self.nodes as f64).round() as usize;
                                quad::midpoint(w[0], w[1], share.max(1))
                            }
                            QuadRule::TanhSinh => quad::tanh_sinh(w[0], w[1], 1.0 / 16.0),
                        }
                    };
                    xs.extend(x);
                    ws.extend(wt);
                }
                let len = hi - lo;
                ws.iter_mut().for_each(|w| *w /= len);
                (xs, ws)
            })
            .collect();
        // tensor product, last axis fastest
        let total: usize = axes.iter().map(|a| a.0.len()).product();
        let mut points = Vec::with_capacity(total * n);
        let mut weights = Vec::with_capacity(total);
        let mut idx = vec![0usize; n];
        for _ in 0..total {
            let mut w = 1.0;
            for a in 0..n {
                points.push(axes[a].0[idx[a]]);
                w *= axes[a].1[idx[a]];
            }
            weights.push(w);
            for a in (0..n).rev() {
                idx[a] += 1;
                if idx[a] < axes[a].0.len() {
                    break;
                }
                idx[a] = 0;
            }
        }
        CubeRule { n, points, weights }
    }
}

/// A probability rule on a cube: `fint_Q f ≈ Σ w_k f(x_k)`.
#[derive(Clone, Debug)]
pub struct CubeRule {
    pub n: usize,
    pub points: Vec<f64>,
    pub weights: Vec<f64>,
}

impl CubeRule {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn point(&self, k: usize) -> &[f64] {
        &self.points[k * self.n..(k + 1) * self.n]
    }

    pub fn average<F: Fn(&[f64]) -> f64>(&self, f: F) -> f64 {
        (0..self.len()).map(|k| self.weights[k] * f(self.point(k))).sum()
    }
}

/// Which matrix function a local norm uses: `V` or `V^{-*}`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Side {
    Primal,
    DualInverse,
}

#[derive(Clone, Debug)]
enum Repr {
    Unweighted,
    /// `ρ(e)^p = Σ c_i |e_i|^p`.
    Diagonal { coeff: Vec<f64> },
    /// Node matrices `M_k` (row-major) with probability weights.
    Sampled { w: Vec<f64>, mats: Vec<f64>, diag: bool },
}

/// `ρ_{Ł^p(Q,W)}` for `W = V` or `W = V^{-*}` on one cube, ready for repeated evaluation.
#[derive(Clone, Debug)]
pub struct LocalNorm {
    pub p: f64,
    pub u: f64,
    pub m: usize,
    repr: Repr,
}

impl LocalNorm {
    pub fn new(v: &WeightModel, q: &DyadicCube, p: f64, side: Side, quad: &Quadrature) -> Result<Self> {
        check_cube(v, q)?;
        if !(p > 0.0) {
            return Err(Error::InvalidParameter(format!("exponent must be positive, got {p}")));
        }
        let target = match side {
            Side::Primal => v.target,
            Side::DualInverse => v.target.dual(),
        };
        let (m, u) = (target.m, target.u);
        if let WeightKind::Identity = v.kind {
            return Ok(LocalNorm { p, u, m, repr: Repr::Unweighted });
        }
        if quad.closed_form && p.is_finite() && (u == p || m == 1) && v.n == 1 {
            if let WeightKind::DiagonalPower { centers, exponents } = &v.kind {
                let sign = if side == Side::Primal { 1.0 } else { -1.0 };
                let (lo, hi) = (q.lower(0), q.upper(0));
                let coeff = centers
                    .iter()
                    .zip(exponents)
                    .map(|(c, &b)| quad::power_integral(lo, hi, c[0], sign * b * p) / (hi - lo))
                    .collect();
                return Ok(LocalNorm { p, u, m, repr: Repr::Diagonal { coeff } });
            }
        }
        Self::sampled(v, q, p, side, quad)
    }

    /// Always build the node representation (needed for ess inf and oracle checks).
    pub fn sampled(v: &WeightModel, q: &DyadicCube, p: f64, side: Side, quad: &Quadrature) -> Result<Self> {
        check_cube(v, q)?;
        let target = match side {
            Side::Primal => v.target,
            Side::DualInverse => v.target.dual(),
        };
        let (m, u) = (target.m, target.u);
        let rule = quad.cube_rule(v, q);
        let mut mats = Vec::with_capacity(rule.len() * m * m);
        for k in 0..rule.len() {
            let x = rule.point(k);
            match side {
                Side::Primal => {
                    let a = v.matrix_at(x);
                    if a.iter().any(|t| !t.is_finite()) {
                        return Err(Error::QuadratureOverflow { cube: q.to_string() });
                    }
                    mats.extend(a);
                }
                Side::DualInverse => {
                    let inv = v.inverse_at(x).ok_or_else(|| Error::NearSingular { cube: q.to_string(), node: k })?;
                    for i in 0..m {
                        for j in 0..m {
                            mats.push(inv[j * m + i]);
                        }
                    }
                }
            }
        }
        Ok(LocalNorm { p, u, m, repr: Repr::Sampled { w: rule.weights, mats, diag: v.is_diagonal() } })
    }

    pub fn is_closed_form(&self) -> bool {
        !matches!(self.repr, Repr::Sampled { .. })
    }

    /// `ρ(e)`; may be `+∞` when the weight is not locally integrable.
    pub fn rho(&self, e: &[f64]) -> f64 {
        match &self.repr {
            Repr::Unweighted => lu_norm(e, self.u),
            Repr::Diagonal { coeff } => {
                let s: f64 = coeff
                    .iter()
                    .zip(e)
                    .filter(|(_, &x)| x != 0.0)
                    .map(|(c, x)| c * x.abs().powf(self.p))
                    .sum();
                s.powf(1.0 / self.p)
            }
            Repr::Sampled { w, mats, diag } => {
                let m = self.m;
                let mut buf = vec![0.0; m];
                let mut acc = 0.0f64;
                for (k, wk) in w.iter().enumerate() {
                    let a = &mats[k * m * m..(k + 1) * m * m];
                    apply(a, e, *diag, &mut buf);
                    let r = lu_norm(&buf, self.u);
                    if self.p.is_infinite() {
                        acc = acc.max(r);
                    } else {
                        acc += wk * r.powf(self.p);
                    }
                }
                if self.p.is_infinite() {
                    acc
                } else {
                    acc.powf(1.0 / self.p)
                }
            }
        }
    }

    /// `min_k ‖M_k e‖` over the nodes (the ess inf on the sample).
    pub fn min_over_nodes(&self, e: &[f64]) -> f64 {
        match &self.repr {
            Repr::Sampled { w, mats, diag } => {
                let m = self.m;
                let mut buf = vec![0.0; m];
                (0..w.len())
                    .map(|k| {
                        apply(&mats[k * m * m..(k + 1) * m * m], e, *diag, &mut buf);
                        lu_norm(&buf, self.u)
                    })
                    .fold(f64::INFINITY, f64::min)
            }
            Repr::Unweighted => lu_norm(e, self.u),
            Repr::Diagonal { .. } => panic!("min_over_nodes needs a sampled norm"),
        }
    }

    /// The dual norm `ρ*(e*) = sup |⟨e*, e⟩| / ρ(e)`.
    pub fn dual(&self, e_star: &[f64], search: &SphereSearch) -> DualValue {
        match &self.repr {
            Repr::Unweighted => DualValue { value: lu_norm(e_star, dual_exponent(self.u)), converged: true },
            Repr::Diagonal { coeff } => {
                let z: Vec<f64> = coeff.iter().zip(e_star).map(|(c, x)| x * c.powf(-1.0 / self.p)).collect();
                DualValue { value: lu_norm(&z, dual_exponent(self.p.max(1.0))), converged: true }
            }
            Repr::Sampled { .. } => self.dual_search(e_star, search),
        }
    }

    /// Dual norm by sphere search regardless of representation.
    pub fn dual_search(&self, e_star: &[f64], search: &SphereSearch) -> DualValue {
        // the maximizer of <e*, e> / ‖e‖_u is the u-duality start
        let q = dual_exponent(self.u);
        let start: Vec<f64> = if q.is_infinite() {
            let i = argmax_abs(e_star);
            let mut s = vec![0.0; self.m];
            s[i] = e_star[i].signum();
            s
        } else {
            e_star.iter().map(|x| x.signum() * x.abs().powf(q - 1.0)).collect()
        };
        let r = search.maximize(self.m, &[start], |e| {
            let num: f64 = e.iter().zip(e_star).map(|(a, b)| a * b).sum();
            num.abs() / self.rho(e)
        });
        DualValue { value: r.value, converged: r.converged }
    }

    /// Gram matrix `A` with `ρ(e)^2 = e^T A e`, available when `p = u = 2`.
    pub fn gram(&self) -> Option<DMatrix<f64>> {
        let m = self.m;
        match &self.repr {
            Repr::Unweighted if self.u == 2.0 => Some(DMatrix::identity(m, m)),
            Repr::Diagonal { coeff } if self.p == 2.0 && (self.u == 2.0 || m == 1) => {
                Some(DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(coeff)))
            }
            Repr::Sampled { w, mats, .. } if self.p == 2.0 && self.u == 2.0 => {
                let mut g = DMatrix::zeros(m, m);
                for (k, wk) in w.iter().enumerate() {
                    let a = DMatrix::from_row_slice(m, m, &mats[k * m * m..(k + 1) * m * m]);
                    g += (a.transpose() * &a) * *wk;
                }
                Some(g)
            }
            _ => None,
        }
    }

    fn diag_coeff(&self) -> Option<&[f64]> {
        match &self.repr {
            Repr::Diagonal { coeff } => Some(coeff),
            _ => None,
        }
    }
}

fn dual_exponent(u: f64) -> f64 {
    if u == 1.0 {
        f64::INFINITY
    } else {
        conjugate(u)
    }
}

fn argmax_abs(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > v[best].abs() {
            best = i;
        }
    }
    best
}

fn apply(a: &[f64], e: &[f64], diag: bool, out: &mut [f64]) {
    let m = e.len();
    if diag {
        for i in 0..m {
            out[i] = a[i * m + i] * e[i];
        }
    } else {
        for i in 0..m {
            out[i] = a[i * m..(i + 1) * m].iter().zip(e).map(|(x, y)| x * y).sum();
        }
    }
}

fn check_cube(v: &WeightModel, q: &DyadicCube) -> Result<()> {
    if q.dim() != v.n {
        return Err(Error::DimensionMismatch { expected: v.n, got: q.dim() });
    }
    Ok(())
}

fn check_vector(v: &WeightModel, e: &[f64]) -> Result<()> {
    if e.len() != v.m() {
        return Err(Error::DimensionMismatch { expected: v.m(), got: e.len() });
    }
    Ok(())
}

#[derive(Clone, Copy, Debug)]
pub struct DualValue {
    pub value: f64,
    pub converged: bool,
}

/// `ρ_{Ł^p(Q,V)}(e) = (fint_Q ‖V(x)e‖^p dx)^{1/p}`.
pub fn rho_lp(v: &WeightModel, q: &DyadicCube, p: f64, e: &[f64], quad: &Quadrature) -> Result<f64> {
    check_vector(v, e)?;
    let local = LocalNorm::new(v, q, p, Side::Primal, quad)?;
    let r = local.rho(e);
    if !r.is_finite() {
        return Err(if local.is_closed_form() {
            Error::NonFinite(format!("rho_lp on {q}"))
        } else {
            Error::QuadratureOverflow { cube: q.to_string() }
        });
    }
    Ok(r)
}

/// `ρ*_{Ł^p(Q,V)}(e*)`.
pub fn rho_dual(v: &WeightModel, q: &DyadicCube, p: f64, e_star: &[f64], quad: &Quadrature) -> Result<f64> {
    check_vector(v, e_star)?;
    let local = LocalNorm::new(v, q, p, Side::Primal, quad)?;
    let d = local.dual(e_star, &SphereSearch::default());
    if !d.converged {
        return Err(Error::NotConverged { best: d.value });
    }
    if !d.value.is_finite() {
        return Err(Error::NonFinite(format!("rho_dual on {q}")));
    }
    Ok(d.value)
}

/// The window-restricted 𝒜_p constant and the cube attaining it.
#[derive(Clone, Debug)]
pub struct ApEstimate {
    pub value: f64,
    pub worst: DyadicCube,
    pub cubes: usize,
    pub converged: bool,
}

/// Window cubes plus dyadic ancestors down to level `j_min - depth`.
pub fn with_ancestors(window: &GridWindow, depth: i32) -> Vec<DyadicCube> {
    let mut set: BTreeSet<DyadicCube> = window.cubes().iter().cloned().collect();
    for q in window.level(window.j_min()) {
        for d in 1..=depth {
            set.insert(q.ancestor(window.j_min() - d));
        }
    }
    set.into_iter().collect()
}

/// Local 𝒜_p ratio on one cube.
pub fn local_ap(v: &WeightModel, q: &DyadicCube, p: f64, quad: &Quadrature) -> Result<(f64, bool)> {
    let search = SphereSearch::default();
    if p > 1.0 {
        let pp = conjugate(p);
        let primal = LocalNorm::new(v, q, p, Side::Primal, quad)?;
        let dualw = LocalNorm::new(v, q, pp, Side::DualInverse, quad)?;
        if let (Repr::Unweighted, Repr::Unweighted) = (&primal.repr, &dualw.repr) {
            return Ok((1.0, true));
        }
        if let (Some(a), Some(b)) = (primal.diag_coeff(), dualw.diag_coeff()) {
            let r = a
                .iter()
                .zip(b)
                .map(|(a, b)| a.powf(1.0 / p) * b.powf(1.0 / pp))
                .fold(0.0, f64::max);
            return Ok((r, true));
        }
        if let (Some(a), Some(g)) = (primal.gram(), dualw.gram()) {
            return Ok((hilbert_sup(&a, &g)?.sqrt(), true));
        }
        let ok = std::cell::Cell::new(true);
        let r = search.maximize(v.m(), &[], |es| {
            let d = primal.dual(es, &search);
            if !d.converged {
                ok.set(false);
            }
            dualw.rho(es) / d.value
        });
        Ok((r.value, ok.get() && r.converged))
    } else {
        let primal = LocalNorm::new(v, q, p, Side::Primal, quad)?;
        let nodes = LocalNorm::sampled(v, q, p, Side::Primal, quad)?;
        let r = search.maximize(v.m(), &[], |e| primal.rho(e) / nodes.min_over_nodes(e));
        Ok((r.value, r.converged))
    }
}

/// `sup_z z^T L^T G L z / |z|^2` where `A = L L^T`: the Hilbert closed form of
/// `sup_{e*} ρ_G(e*)^2 / ρ*_A(e*)^2`.
fn hilbert_sup(a: &DMatrix<f64>, g: &DMatrix<f64>) -> Result<f64> {
    let l = a
        .clone()
        .cholesky()
        .ok_or_else(|| Error::NonFinite("gram matrix not positive definite".into()))?
        .l();
    let s = l.transpose() * g * &l;
    let s = (&s + s.transpose()) * 0.5;
    Ok(SymmetricEigen::new(s).eigenvalues.max())
}

/// Estimate `[V]_{𝒜_p}` over the window cubes and three ancestor generations.
pub fn ap_constant_estimate(v: &WeightModel, p: f64, window: &GridWindow, quad: &Quadrature) -> Result<ApEstimate> {
    if !(p > 0.0 && p.is_finite()) {
        return Err(Error::InvalidParameter(format!("p must lie in (0,∞), got {p}")));
    }
    if window.dim() != v.n {
        return Err(Error::DimensionMismatch { expected: v.n, got: window.dim() });
    }
    let cubes = with_ancestors(window, 3);
    let vals: Vec<Result<(f64, bool)>> = cubes.par_iter().map(|q| local_ap(v, q, p, quad)).collect();
    let mut best = ApEstimate { value: f64::NEG_INFINITY, worst: cubes[0].clone(), cubes: cubes.len(), converged: true };
    for (q, r) in cubes.iter().zip(vals) {
        let (val, ok) = r?;
        best.converged &= ok;
        if !val.is_finite() {
            return Err(Error::NonFinite(format!("𝒜_p ratio on {q}")));
        }
        if val > best.value {
            best.value = val;
            best.worst = q.clone();
        }
    }
    Ok(best)
}

/// Sampled test directions: coordinate vectors, then seeded random unit vectors.
pub fn test_directions(m: usize, random: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut out: Vec<Vec<f64>> = (0..m)
        .map(|i| {
            let mut e = vec![0.0; m];
            e[i] = 1.0;
            e
        })
        .collect();
    if m > 1 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        out.extend((0..random).map(|_| random_unit(&mut rng, m)));
    }
    out
}

#[derive(Clone, Debug)]
pub struct RHIEstimate {
    pub eps: f64,
    /// `+∞` when `p <= 1`, where the dual-side condition is vacuous.
    pub eta: f64,
    /// `(ε, worst ratio over sampled cubes and directions)`.
    pub eps_ratios: Vec<(f64, f64)>,
    pub eta_ratios: Vec<(f64, f64)>,
    /// Worst ratio per cube at the reported `eps`.
    pub cube_ratios: Vec<(DyadicCube, f64)>,
    /// No positive grid value passed the threshold.
    pub degenerate: bool,
}

/// Largest grid `ε` keeping `ρ_{p+ε}/ρ_p` under `threshold`, and the analogue
/// `η` for `V^{-*}` at `p'`.
pub fn rhi_index_estimate(
    v: &WeightModel,
    p: f64,
    window: &GridWindow,
    eps_grid: &[f64],
    threshold: f64,
    quad: &Quadrature,
) -> Result<RHIEstimate> {
    let mut grid: Vec<f64> = eps_grid.iter().copied().filter(|e| *e >= 0.0).collect();
    grid.sort_by(|a, b| a.partial_cmp(b).unwrap());
    grid.dedup();
    if grid.is_empty() {
        return Err(Error::InvalidParameter("empty eps grid".into()));
    }
    let dirs = test_directions(v.m(), 4, 0x5eed);
    let scan = |side: Side, base: f64| -> Result<Vec<Vec<f64>>> {
        // rows: cubes, columns: grid values
        window
            .cubes()
            .par_iter()
            .map(|q| {
                let b = LocalNorm::new(v, q, base, side, quad)?;
                let lifted: Vec<LocalNorm> = grid
                    .iter()
                    .map(|e| LocalNorm::new(v, q, base + e, side, quad))
                    .collect::<Result<_>>()?;
                Ok(lifted
                    .iter()
                    .map(|l| {
                        dirs.iter()
                            .map(|e| {
                                let r = l.rho(e) / b.rho(e);
                                if r.is_nan() { f64::INFINITY } else { r }
                            })
                            .fold(0.0, f64::max)
                    })
                    .collect())
            })
            .collect()
    };
    let pick = |rows: &[Vec<f64>]| -> (f64, Vec<(f64, f64)>, usize) {
        let worst: Vec<(f64, f64)> = grid
            .iter()
            .enumerate()
            .map(|(i, &e)| (e, rows.iter().map(|r| r[i]).fold(0.0, f64::max)))
            .collect();
        let mut chosen = None;
        for (i, (_, w)) in worst.iter().enumerate() {
            if *w <= threshold {
                chosen = Some(i);
            } else {
                break;
            }
        }
        match chosen {
            Some(i) => (grid[i], worst, i),
            None => (0.0, worst, usize::MAX),
        }
    };
    let rows = scan(Side::Primal, p)?;
    let (eps, eps_ratios, idx) = pick(&rows);
    let cube_ratios = if idx == usize::MAX {
        vec![]
    } else {
        window.cubes().iter().cloned().zip(rows.iter().map(|r| r[idx])).collect()
    };
    let (eta, eta_ratios) = if p > 1.0 {
        let rows = scan(Side::DualInverse, conjugate(p))?;
        let (eta, r, _) = pick(&rows);
        (eta, r)
    } else {
        (f64::INFINITY, vec![])
    };
    Ok(RHIEstimate { eps, eta, eps_ratios, eta_ratios, cube_ratios, degenerate: eps == 0.0 })
}

#[derive(Clone, Debug)]
pub struct DoublingEstimate {
    pub beta: f64,
    pub residual: f64,
}

/// Fit `β` in `∫_S ‖Ve‖^p ≲ (ℓ(S)/ℓ(Q))^β ∫_Q ‖Ve‖^p` over nested window pairs.
///
/// For each direction and each level gap `d`, the worst log-ratio over all
/// pairs `Q ⊂ S` with that gap is regressed on `d log 2`.
pub fn doubling_dimension_estimate(v: &WeightModel, p: f64, window: &GridWindow, quad: &Quadrature) -> Result<DoublingEstimate> {
    let depth = window.j_max() - window.j_min();
    if depth < 2 {
        return Err(Error::Precondition(format!("need at least 3 levels, window has {}", depth + 1)));
    }
    let dirs = test_directions(v.m(), 4, 0xd0b1);
    let locals: Vec<LocalNorm> = window
        .cubes()
        .par_iter()
        .map(|q| LocalNorm::new(v, q, p, Side::Primal, quad))
        .collect::<Result<_>>()?;
    let mass = |i: usize, e: &[f64]| window.cubes()[i].volume() * locals[i].rho(e).powf(p);
    let mut best = DoublingEstimate { beta: f64::NEG_INFINITY, residual: 0.0 };
    for e in &dirs {
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for d in 1..=depth {
            let mut worst = f64::NEG_INFINITY;
            for (i, q) in window.cubes().iter().enumerate() {
                if q.level - d < window.j_min() {
                    continue;
                }
                let Some(si) = window.index_of(&q.ancestor(q.level - d)) else { continue };
                let (mq, ms) = (mass(i, e), mass(si, e));
                if mq > 0.0 && ms.is_finite() {
                    worst = worst.max((ms / mq).ln());
                }
            }
            if worst.is_finite() {
                xs.push(d as f64 * std::f64::consts::LN_2);
                ys.push(worst);
            }
        }
        if xs.len() < 2 {
            continue;
        }
        let (slope, resid) = least_squares(&xs, &ys);
        if slope > best.beta {
            best = DoublingEstimate { beta: slope, residual: resid };
        }
    }
    if !best.beta.is_finite() {
        return Err(Error::NonFinite("doubling fit".into()));
    }
    best.beta = best.beta.max(v.n as f64);
    Ok(best)
}

/// Slope and RMS residual of the least-squares line through `(x, y)`.
pub fn least_squares(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let slope = sxy / sxx;
    let resid = (x
        .iter()
        .zip(y)
        .map(|(a, b)| {
            let r = b - my - slope * (a - mx);
            r * r
        })
        .sum::<f64>()
        / n)
        .sqrt();
    (slope, resid)
}

/// `sup_e ρ_{Ł^p(Q,V)}(e) / ρ_{Ł^p(R,V)}(e)`.
pub fn norm_ratio(v: &WeightModel, p: f64, q: &DyadicCube, r: &DyadicCube, quad: &Quadrature) -> Result<f64> {
    if q == r {
        return Ok(1.0);
    }
    let nq = LocalNorm::new(v, q, p, Side::Primal, quad)?;
    let nr = LocalNorm::new(v, r, p, Side::Primal, quad)?;
    if let (Repr::Unweighted, Repr::Unweighted) = (&nq.repr, &nr.repr) {
        return Ok(1.0);
    }
    if let (Some(a), Some(b)) = (nq.diag_coeff(), nr.diag_coeff()) {
        return Ok(a.iter().zip(b).map(|(a, b)| (a / b).powf(1.0 / p)).fold(0.0, f64::max));
    }
    if let (Some(a), Some(b)) = (nq.gram(), nr.gram()) {
        // sup e^T A e / e^T B e
        let l = b.cholesky().ok_or_else(|| Error::NonFinite("gram matrix not positive definite".into()))?.l();
        let li = l.try_inverse().ok_or_else(|| Error::NonFinite("gram factor".into()))?;
        let s = &li * a * li.transpose();
        let s = (&s + s.transpose()) * 0.5;
        return Ok(SymmetricEigen::new(s).eigenvalues.max().sqrt());
    }
    let r = SphereSearch::default().maximize(v.m(), &[], |e| nq.rho(e) / nr.rho(e));
    if !r.converged {
        return Err(Error::NotConverged { best: r.value });
    }
    Ok(r.value)
}
