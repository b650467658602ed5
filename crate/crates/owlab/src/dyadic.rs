//! Dyadic cubes, finite grid windows and the comparison kernel `B_{a,b,c}`.

use std::cmp::Ordering;
use std::collections::HashMap;
use std::fmt;

use crate::error::{Error, Result};

/// The cube `2^{-j}([0,1)^n + k)`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct DyadicCube {
    pub level: i32,
    pub offset: Vec<i64>,
}

impl Ord for DyadicCube {
    fn cmp(&self, other: &Self) -> Ordering {
        self.level
            .cmp(&other.level)
            .then_with(|| self.offset.cmp(&other.offset))
    }
}

impl PartialOrd for DyadicCube {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for DyadicCube {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}", self.level)?;
        for k in &self.offset {
            write!(f, ",{}", k)?;
        }
        write!(f, ")")
    }
}

impl DyadicCube {
    pub fn new(level: i32, offset: Vec<i64>) -> Self {
        assert!(!offset.is_empty(), "a cube needs at least one axis");
        DyadicCube { level, offset }
    }

    pub fn unit(n: usize) -> Self {
        DyadicCube::new(0, vec![0; n])
    }

    pub fn dim(&self) -> usize {
        self.offset.len()
    }

    /// Side length `ℓ(Q) = 2^{-j}`.
    pub fn side(&self) -> f64 {
        (-self.level as f64).exp2()
    }

    pub fn volume(&self) -> f64 {
        (-(self.level as f64) * self.dim() as f64).exp2()
    }

    /// Lower-left corner `x_Q = 2^{-j} k`.
    pub fn anchor(&self) -> Vec<f64> {
        let l = self.side();
        self.offset.iter().map(|&k| k as f64 * l).collect()
    }

    pub fn lower(&self, axis: usize) -> f64 {
        self.offset[axis] as f64 * self.side()
    }

    pub fn upper(&self, axis: usize) -> f64 {
        (self.offset[axis] + 1) as f64 * self.side()
    }

    pub fn center(&self) -> Vec<f64> {
        let l = self.side();
        self.offset.iter().map(|&k| (k as f64 + 0.5) * l).collect()
    }

    pub fn parent(&self) -> DyadicCube {
        DyadicCube {
            level: self.level - 1,
            offset: self.offset.iter().map(|k| k.div_euclid(2)).collect(),
        }
    }

    /// The ancestor at level `j <= self.level`.
    pub fn ancestor(&self, j: i32) -> DyadicCube {
        assert!(j <= self.level);
        let shift = (self.level - j) as u32;
        DyadicCube {
            level: j,
            offset: self
                .offset
                .iter()
                .map(|k| k.div_euclid(1i64 << shift))
                .collect(),
        }
    }

    pub fn children(&self) -> Vec<DyadicCube> {
        let n = self.dim();
        (0..1usize << n)
            .map(|bits| DyadicCube {
                level: self.level + 1,
                offset: (0..n)
                    .map(|a| 2 * self.offset[a] + ((bits >> (n - 1 - a)) & 1) as i64)
                    .collect(),
            })
            .collect()
    }

    /// Whether `other` is contained in `self` (dyadic cubes nest or are disjoint).
    pub fn contains(&self, other: &DyadicCube) -> bool {
        other.dim() == self.dim() && other.level >= self.level && other.ancestor(self.level) == *self
    }

    pub fn contains_point(&self, x: &[f64]) -> bool {
        (0..self.dim()).all(|a| x[a] >= self.lower(a) && x[a] < self.upper(a))
    }

    /// The level-`j` cube containing `x`.
    pub fn containing(j: i32, x: &[f64]) -> DyadicCube {
        let scale = (j as f64).exp2();
        DyadicCube {
            level: j,
            offset: x.iter().map(|&xi| (xi * scale).floor() as i64).collect(),
        }
    }

    /// Translate by an integer multiple of the cube's own side.
    pub fn shifted(&self, by: &[i64]) -> DyadicCube {
        DyadicCube {
            level: self.level,
            offset: self.offset.iter().zip(by).map(|(k, d)| k + d).collect(),
        }
    }
}

/// Parameters of the comparison kernel.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BabcParams {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl BabcParams {
    pub fn new(a: f64, b: f64, c: f64) -> Result<Self> {
        if !(a >= 0.0 && b >= 0.0 && c >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "kernel exponents must be nonnegative, got ({a}, {b}, {c})"
            )));
        }
        Ok(BabcParams { a, b, c })
    }

    pub fn swapped(&self) -> BabcParams {
        BabcParams { a: self.b, b: self.a, c: self.c }
    }
}

/// `(1+ℓ(R)/ℓ(Q))^a (1+ℓ(Q)/ℓ(R))^b (1+|x_Q-x_R|/max(ℓ(Q),ℓ(R)))^c`.
pub fn babc_kernel(params: &BabcParams, q: &DyadicCube, r: &DyadicCube) -> Result<f64> {
    if q.dim() != r.dim() {
        return Err(Error::DimensionMismatch { expected: q.dim(), got: r.dim() });
    }
    Ok(babc_raw(params.a, params.b, params.c, q, r))
}

/// Kernel with arbitrary real exponents; the almost-diagonal class uses
/// `B_{-E,-F,-D}`. Dimensions are assumed equal.
pub fn babc_raw(a: f64, b: f64, c: f64, q: &DyadicCube, r: &DyadicCube) -> f64 {
    // Side ratio ℓ(R)/ℓ(Q) is exact as a power of two.
    let ratio = ((q.level - r.level) as f64).exp2();
    let lmax = q.side().max(r.side());
    let dist = anchor_distance(q, r) / lmax;
    (1.0 + ratio).powf(a) * (1.0 + 1.0 / ratio).powf(b) * (1.0 + dist).powf(c)
}

/// Euclidean distance between anchors.
pub fn anchor_distance(q: &DyadicCube, r: &DyadicCube) -> f64 {
    let (lq, lr) = (q.side(), r.side());
    q.offset
        .iter()
        .zip(&r.offset)
        .map(|(&kq, &kr)| {
            let d = kq as f64 * lq - kr as f64 * lr;
            d * d
        })
        .sum::<f64>()
        .sqrt()
}

/// An axis-aligned cube that need not be dyadic.
#[derive(Clone, Debug, PartialEq)]
pub struct AxisCube {
    pub lower: Vec<f64>,
    pub side: f64,
}

/// Smallest axis-aligned cube containing `Q ∪ R`, placed at the lower corner
/// of the bounding box.
pub fn min_containing(q: &DyadicCube, r: &DyadicCube) -> Result<AxisCube> {
    if q.dim() != r.dim() {
        return Err(Error::DimensionMismatch { expected: q.dim(), got: r.dim() });
    }
    let n = q.dim();
    let lower: Vec<f64> = (0..n).map(|a| q.lower(a).min(r.lower(a))).collect();
    let side = (0..n)
        .map(|a| q.upper(a).max(r.upper(a)) - lower[a])
        .fold(0.0, f64::max);
    Ok(AxisCube { lower, side })
}

/// All cubes with levels in `[j_min, j_max]` meeting a fixed box.
#[derive(Clone, Debug)]
pub struct GridWindow {
    n: usize,
    j_min: i32,
    j_max: i32,
    lo: Vec<f64>,
    hi: Vec<f64>,
    cubes: Vec<DyadicCube>,
    index: HashMap<DyadicCube, usize>,
    level_starts: Vec<usize>,
}

impl PartialEq for GridWindow {
    fn eq(&self, other: &Self) -> bool {
        self.n == other.n
            && self.j_min == other.j_min
            && self.j_max == other.j_max
            && self.lo == other.lo
            && self.hi == other.hi
    }
}

/// Build a window; cubes are ordered by level, then lexicographically by offset.
pub fn build_window(n: usize, j_min: i32, j_max: i32, lo: &[f64], hi: &[f64]) -> Result<GridWindow> {
    GridWindow::new(n, j_min, j_max, lo, hi)
}

impl GridWindow {
    pub fn new(n: usize, j_min: i32, j_max: i32, lo: &[f64], hi: &[f64]) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidParameter("dimension must be positive".into()));
        }
        if lo.len() != n || hi.len() != n {
            return Err(Error::DimensionMismatch { expected: n, got: lo.len().min(hi.len()) });
        }
        if j_min > j_max {
            return Err(Error::EmptyWindow(format!("level range [{j_min}, {j_max}]")));
        }
        if lo.iter().zip(hi).any(|(a, b)| !(a < b) || !a.is_finite() || !b.is_finite()) {
            return Err(Error::EmptyWindow("degenerate box".into()));
        }
        let mut cubes = Vec::new();
        let mut level_starts = Vec::new();
        for j in j_min..=j_max {
            level_starts.push(cubes.len());
            let scale = (j as f64).exp2();
            let ranges: Vec<(i64, i64)> = (0..n)
                .map(|a| {
                    let k0 = (lo[a] * scale).floor() as i64;
                    let k1 = (hi[a] * scale).ceil() as i64 - 1;
                    (k0, k1)
                })
                .collect();
            let mut k: Vec<i64> = ranges.iter().map(|r| r.0).collect();
            'outer: loop {
                cubes.push(DyadicCube { level: j, offset: k.clone() });
                for a in (0..n).rev() {
                    if k[a] < ranges[a].1 {
                        k[a] += 1;
                        continue 'outer;
                    }
                    k[a] = ranges[a].0;
                }
                break;
            }
        }
        level_starts.push(cubes.len());
        let index = cubes.iter().cloned().enumerate().map(|(i, q)| (q, i)).collect();
        Ok(GridWindow {
            n,
            j_min,
            j_max,
            lo: lo.to_vec(),
            hi: hi.to_vec(),
            cubes,
            index,
            level_starts,
        })
    }

    /// Window over the unit box `[0,1)^n`.
    pub fn unit(n: usize, j_min: i32, j_max: i32) -> Result<Self> {
        GridWindow::new(n, j_min, j_max, &vec![0.0; n], &vec![1.0; n])
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn j_min(&self) -> i32 {
        self.j_min
    }

    pub fn j_max(&self) -> i32 {
        self.j_max
    }

    pub fn box_lo(&self) -> &[f64] {
        &self.lo
    }

    pub fn box_hi(&self) -> &[f64] {
        &self.hi
    }

    pub fn cubes(&self) -> &[DyadicCube] {
        &self.cubes
    }

    pub fn len(&self) -> usize {
        self.cubes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cubes.is_empty()
    }

    pub fn index_of(&self, q: &DyadicCube) -> Option<usize> {
        self.index.get(q).copied()
    }

    pub fn contains(&self, q: &DyadicCube) -> bool {
        self.index.contains_key(q)
    }

    pub fn level(&self, j: i32) -> &[DyadicCube] {
        if j < self.j_min || j > self.j_max {
            return &[];
        }
        let i = (j - self.j_min) as usize;
        &self.cubes[self.level_starts[i]..self.level_starts[i + 1]]
    }

    /// Same box, different level range.
    pub fn with_levels(&self, j_min: i32, j_max: i32) -> Result<Self> {
        GridWindow::new(self.n, j_min, j_max, &self.lo, &self.hi)
    }

    pub fn box_contains(&self, x: &[f64]) -> bool {
        x.len() == self.n && (0..self.n).all(|a| x[a] >= self.lo[a] && x[a] < self.hi[a])
    }
}
