//! Sequence-level lift and restriction between `R^{n-1}` and `R^n` slabs.

use std::sync::Arc;

use crate::dyadic::{DyadicCube, GridWindow};
use crate::error::{Error, Result};
use crate::seqspace::{seq_norm, slab_cube, NormFamily, NormSource, SpaceKind, SpaceParams};
use crate::seqspace::DyadicSequence;
use crate::weights::test_directions;

/// Slab index `k` in `Q(I,k) = I × [kℓ(I), (k+1)ℓ(I))`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TraceOffset(pub i64);

/// Window in `R^n` holding every `Q(I,k)` for `I` in `source`.
pub fn lifted_window(source: &GridWindow, k: TraceOffset) -> Result<GridWindow> {
    let k = k.0 as f64;
    let (coarse, fine) = ((-(source.j_min() as f64)).exp2(), (-(source.j_max() as f64)).exp2());
    let (lo_t, hi_t) = if k >= 0.0 { (k * fine, (k + 1.0) * coarse) } else { (k * coarse, (k + 1.0) * fine) };
    let mut lo = source.box_lo().to_vec();
    let mut hi = source.box_hi().to_vec();
    lo.push(lo_t);
    hi.push(hi_t);
    GridWindow::new(source.dim() + 1, source.j_min(), source.j_max(), &lo, &hi)
}

/// The source window of a lifted window.
pub fn restricted_window(target: &GridWindow) -> Result<GridWindow> {
    let n = target.dim();
    if n < 2 {
        return Err(Error::InvalidParameter("restriction needs n ≥ 2".into()));
    }
    GridWindow::new(n - 1, target.j_min(), target.j_max(), &target.box_lo()[..n - 1], &target.box_hi()[..n - 1])
}

/// `û_{Q(I,k)} = ℓ(I)^{1/2} u_I`, zero elsewhere.
pub fn lift_sequence(u: &DyadicSequence, k: TraceOffset) -> Result<DyadicSequence> {
    let window = Arc::new(lifted_window(u.window(), k)?);
    let mut out = DyadicSequence::new(window, u.m());
    for (i, v) in u.iter() {
        let s = i.side().sqrt();
        out.insert(slab_cube(i, k.0), v.iter().map(|x| s * x).collect())?;
    }
    Ok(out)
}

/// `u_I = ℓ(I)^{-1/2} t_{Q(I,k)}`; the left inverse of [`lift_sequence`].
pub fn restrict_sequence(t: &DyadicSequence, k: TraceOffset) -> Result<DyadicSequence> {
    let window = Arc::new(restricted_window(t.window())?);
    let n = t.window().dim();
    let mut out = DyadicSequence::new(window, t.m());
    for (q, v) in t.iter() {
        if q.offset[n - 1] != k.0 {
            continue;
        }
        let i = DyadicCube::new(q.level, q.offset[..n - 1].to_vec());
        if !out.window().contains(&i) {
            continue;
        }
        let s = 1.0 / i.side().sqrt();
        out.insert(i, v.iter().map(|x| s * x).collect())?;
    }
    Ok(out)
}

/// `(s - 1/p, p, r)` on `R^{n-1}`, `r = q` for Besov and `r = p` for TL; always Besov.
pub fn trace_source_params(target: &SpaceParams) -> Result<SpaceParams> {
    if target.n < 2 {
        return Err(Error::InvalidParameter("the target dimension must be at least 2".into()));
    }
    let r = match target.kind {
        SpaceKind::Besov => target.q,
        SpaceKind::TriebelLizorkin => target.p,
    };
    SpaceParams::besov(target.n - 1, target.s - 1.0 / target.p, target.p, r)
}

#[derive(Clone, Debug)]
pub struct TraceReport {
    /// `‖û^{(k)}‖_{ȧ^s_{p,q}(ρ, R^n)}`.
    pub lifted: f64,
    /// `‖u‖_{ḃ^{s-1/p}_{p,r}(d, R^{n-1})}`.
    pub source: f64,
    pub ratio: f64,
    /// Extremes of `d_I(e) / ρ_{Q(I,0)}(e)` over source cubes and test directions.
    pub transfer_min: f64,
    pub transfer_max: f64,
}

/// Number of seeded random test directions in the transfer check.
pub const TRANSFER_DIRECTIONS: usize = 8;

/// Both sides of the sequence trace equivalence for one `u`.
pub fn trace_norm_check(
    u: &DyadicSequence,
    k: TraceOffset,
    target: &SpaceParams,
    source: &SpaceParams,
    d: &NormFamily,
    rho: &NormFamily,
) -> Result<TraceReport> {
    let want = trace_source_params(target)?;
    if *source != want {
        return Err(Error::InvalidParameter(format!(
            "source parameters must be (s - 1/p, p, r) = ({}, {}, {}) Besov in dimension {}",
            want.s, want.p, want.q, want.n
        )));
    }
    if u.window().dim() != source.n {
        return Err(Error::DimensionMismatch { expected: source.n, got: u.window().dim() });
    }
    let lifted = seq_norm(&lift_sequence(u, k)?, target, NormSource::Family(rho))?;
    let src = seq_norm(u, source, NormSource::Family(d))?;
    let dirs = test_directions(u.m(), TRANSFER_DIRECTIONS, 0xA9);
    let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
    for i in u.window().cubes() {
        let di = d.at(i)?;
        let r0 = rho.at(&slab_cube(i, 0))?;
        for e in &dirs {
            let t = di.rho(e) / r0.rho(e);
            lo = lo.min(t);
            hi = hi.max(t);
        }
    }
    let ratio = if src == 0.0 { if lifted == 0.0 { 1.0 } else { f64::INFINITY } } else { lifted / src };
    Ok(TraceReport { lifted, source: src, ratio, transfer_min: lo, transfer_max: hi })
}
