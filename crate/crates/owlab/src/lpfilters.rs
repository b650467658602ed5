//! One-dimensional Littlewood–Paley filter pairs on a uniform frequency grid.

use std::f64::consts::{PI, SQRT_2};
use std::sync::OnceLock;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::quad::gauss_legendre;
use crate::weights::least_squares;

/// Uniform symmetric frequency grid `ξ_m = (m - N/2) h`, `h = 2·cutoff / N`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FrequencyGrid {
    pub nodes: usize,
    pub cutoff: f64,
}

impl Default for FrequencyGrid {
    fn default() -> Self {
        FrequencyGrid { nodes: 1 << 14, cutoff: 64.0 }
    }
}

impl FrequencyGrid {
    pub fn new(nodes: usize, cutoff: f64) -> Result<Self> {
        if nodes < 16 || !nodes.is_power_of_two() || !(cutoff > 0.0 && cutoff.is_finite()) {
            return Err(Error::InvalidParameter(format!("grid needs a power-of-two node count ≥ 16 and a positive cutoff, got {nodes}, {cutoff}")));
        }
        Ok(FrequencyGrid { nodes, cutoff })
    }

    pub fn resolution(&self) -> f64 {
        2.0 * self.cutoff / self.nodes as f64
    }

    pub fn xi(&self, m: usize) -> f64 {
        (m as f64 - (self.nodes / 2) as f64) * self.resolution()
    }

    pub fn points(&self) -> Vec<f64> {
        (0..self.nodes).map(|m| self.xi(m)).collect()
    }
}

/// An `(α,β)` pair `(φ̂, ψ̂)` with `Σ_j φ̂(-2^jξ) ψ̂(2^jξ) = 1` for `ξ ≠ 0`.
#[derive(Clone, Debug)]
pub struct FilterPair {
    pub alpha: f64,
    pub beta: f64,
    pub grid: FrequencyGrid,
    pub phi: Vec<f64>,
    pub psi: Vec<f64>,
}

/// Smallest admissible value of `Σ_k |φ̂(2^k ξ)|²`.
pub const DENOMINATOR_FLOOR: f64 = 1e-12;

/// Gauss–Legendre nodes for the transition integral.
const TRANSITION_NODES: usize = 48;

fn gl() -> &'static (Vec<f64>, Vec<f64>) {
    static GL: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    GL.get_or_init(|| gauss_legendre(TRANSITION_NODES))
}

// η(s) = exp(1 - 1/(1 - s²)) on (-1, 1)
fn mollifier(s: f64) -> f64 {
    if s.abs() >= 1.0 {
        0.0
    } else {
        (1.0 - 1.0 / (1.0 - s * s)).exp()
    }
}

// ∫_a^b η by Gauss–Legendre; η is flat at ±1, so this converges fast
fn mollifier_integral(a: f64, b: f64) -> f64 {
    let (x, w) = gl();
    let (mid, half) = (0.5 * (a + b), 0.5 * (b - a));
    x.iter().zip(w).map(|(xi, wi)| wi * mollifier(mid + half * xi)).sum::<f64>() * half
}

/// Smooth step from 1 at `t = 0` to 0 at `t = 1`: the normalized integral of η
/// over `[2t-1, 1]`, flat to all orders at both ends.
pub fn transition(t: f64) -> f64 {
    if t <= 0.0 {
        1.0
    } else if t >= 1.0 {
        0.0
    } else if t <= 0.5 {
        1.0 - mollifier_integral(-1.0, 2.0 * t - 1.0) / total_mass()
    } else {
        mollifier_integral(2.0 * t - 1.0, 1.0) / total_mass()
    }
}

fn total_mass() -> f64 {
    static MASS: OnceLock<f64> = OnceLock::new();
    *MASS.get_or_init(|| mollifier_integral(-1.0, 0.0) + mollifier_integral(0.0, 1.0))
}

/// Even bump: 1 on `1/α ≤ |ξ| ≤ α`, 0 outside `1/β < |ξ| < β`.
pub fn bump(alpha: f64, beta: f64, xi: f64) -> f64 {
    let a = xi.abs();
    if a <= 1.0 / beta || a >= beta {
        0.0
    } else if a < 1.0 / alpha {
        transition((1.0 / alpha - a) / (1.0 / alpha - 1.0 / beta))
    } else if a > alpha {
        transition((a - alpha) / (beta - alpha))
    } else {
        1.0
    }
}

/// Dilation exponents `k` with `2^k |ξ|` inside `(1/β, β)`.
fn active_scales(beta: f64, xi: f64) -> std::ops::RangeInclusive<i32> {
    let c = -xi.abs().log2();
    let w = beta.log2();
    ((c - w).floor() as i32)..=((c + w).ceil() as i32)
}

impl FilterPair {
    pub fn phi_hat(&self, xi: f64) -> f64 {
        bump(self.alpha, self.beta, xi)
    }

    /// `Σ_k |φ̂(2^k ξ)|²`, invariant under `ξ ↦ 2ξ`.
    pub fn denominator(&self, xi: f64) -> f64 {
        if xi == 0.0 {
            return 0.0;
        }
        active_scales(self.beta, xi).map(|k| self.phi_hat(xi * (k as f64).exp2()).powi(2)).sum()
    }

    /// `ψ̂(ξ) = φ̂(-ξ) / Σ_k |φ̂(2^k ξ)|²`.
    pub fn psi_hat(&self, xi: f64) -> f64 {
        let num = self.phi_hat(-xi);
        if num == 0.0 {
            0.0
        } else {
            num / self.denominator(xi)
        }
    }

    /// CSV rows `(ξ, φ̂, ψ̂)` over the grid.
    pub fn rows(&self) -> Vec<[f64; 3]> {
        (0..self.grid.nodes).map(|m| [self.grid.xi(m), self.phi[m], self.psi[m]]).collect()
    }
}

pub fn build_lp_pair(alpha: f64, beta: f64, grid: FrequencyGrid) -> Result<FilterPair> {
    if !(SQRT_2 < alpha && alpha < beta && beta < PI) {
        return Err(Error::Precondition(format!("need √2 < α < β < π, got α = {alpha}, β = {beta}")));
    }
    let mut pair = FilterPair { alpha, beta, grid, phi: Vec::new(), psi: Vec::new() };
    for m in 0..grid.nodes {
        let xi = grid.xi(m);
        if xi != 0.0 && pair.denominator(xi) < DENOMINATOR_FLOOR {
            return Err(Error::Precondition(format!("Σ_k |φ̂(2^k ξ)|² vanishes at ξ = {xi}")));
        }
    }
    pair.phi = (0..grid.nodes).map(|m| pair.phi_hat(grid.xi(m))).collect();
    pair.psi = (0..grid.nodes).map(|m| pair.psi_hat(grid.xi(m))).collect();
    Ok(pair)
}

/// `max_{ξ ≠ 0} |Σ_j φ̂(-2^jξ) ψ̂(2^jξ) - 1|` over the grid for arbitrary `φ̂`, `ψ̂`
/// supported in `1/β ≤ |ξ| ≤ β`.
pub fn partition_deviation(grid: &FrequencyGrid, beta: f64, phi: impl Fn(f64) -> f64, psi: impl Fn(f64) -> f64) -> f64 {
    (0..grid.nodes)
        .map(|m| grid.xi(m))
        .filter(|xi| *xi != 0.0)
        .map(|xi| {
            let s: f64 = active_scales(beta, xi)
                .map(|j| {
                    let y = xi * (j as f64).exp2();
                    phi(-y) * psi(y)
                })
                .sum();
            (s - 1.0).abs()
        })
        .fold(0.0, f64::max)
}

pub fn partition_check(pair: &FilterPair) -> f64 {
    partition_deviation(&pair.grid, pair.beta, |x| pair.phi_hat(x), |x| pair.psi_hat(x))
}

#[derive(Clone, Debug)]
pub struct ConvDecay {
    /// Smallest `C` with `|φ_i * ψ_j(x)| ≤ C 2^{-|i-j|M} φ_{min(i,j)}(x)` on the space grid.
    pub constant: f64,
    /// `max_x |φ_i * ψ_j(x)|`.
    pub sup: f64,
}

/// `φ_i * ψ_j` on the spatial grid dual to the frequency grid, by inverse FFT of
/// `φ̂(2^{-i}ξ) ψ̂(2^{-j}ξ)`. Returns `(x, value)` pairs with `x` in `[-L/2, L/2)`.
pub fn convolution(pair: &FilterPair, i: i32, j: i32) -> Result<Vec<(f64, f64)>> {
    let grid = pair.grid;
    let top = pair.beta * (i.max(j) as f64).exp2();
    if top >= grid.cutoff {
        return Err(Error::Aliasing { support: top, cutoff: grid.cutoff });
    }
    let n = grid.nodes;
    let h = grid.resolution();
    let (si, sj) = ((-(i as f64)).exp2(), (-(j as f64)).exp2());
    let mut buf: Vec<Complex<f64>> = (0..n)
        .map(|m| {
            let xi = grid.xi(m);
            Complex::new(pair.phi_hat(xi * si) * pair.psi_hat(xi * sj), 0.0)
        })
        .collect();
    FftPlanner::new().plan_fft_inverse(n).process(&mut buf);
    let dx = 2.0 * PI / (n as f64 * h);
    // e^{i x_l ξ_m} = (-1)^l e^{2πi l m / N}
    Ok((0..n)
        .map(|l| {
            let sign = if l % 2 == 0 { 1.0 } else { -1.0 };
            let x = if l < n / 2 { l as f64 * dx } else { (l as f64 - n as f64) * dx };
            (x, sign * buf[l].re * h / (2.0 * PI))
        })
        .collect())
}

/// `φ_j(x) = 2^j (1 + 2^j |x|)^{-M}`.
pub fn majorant(j: i32, m: f64, x: f64) -> f64 {
    let s = (j as f64).exp2();
    s * (1.0 + s * x.abs()).powf(-m)
}

pub fn conv_decay_check(pair: &FilterPair, i: i32, j: i32, m: f64) -> Result<ConvDecay> {
    let vals = convolution(pair, i, j)?;
    let lo = i.min(j);
    let gap = ((i - j).abs() as f64 * -m).exp2();
    let mut constant: f64 = 0.0;
    let mut sup: f64 = 0.0;
    for (x, v) in vals {
        sup = sup.max(v.abs());
        constant = constant.max(v.abs() / (gap * majorant(lo, m, x)));
    }
    if !constant.is_finite() {
        return Err(Error::NonFinite("decay constant".into()));
    }
    Ok(ConvDecay { constant, sup })
}

#[derive(Clone, Debug)]
pub struct DecayProfile {
    /// `(|i-j|, max_x |φ_i*ψ_j(x)| / φ_{min(i,j)}(x))`.
    pub points: Vec<(u32, f64)>,
    /// Least-squares slope of `log₂` of the profile; `-∞` once it vanishes exactly.
    pub slope: f64,
}

/// Decay of `φ_i * ψ_{i+d}` relative to `φ_i` for `d` in `0..=max_gap`.
pub fn decay_profile(pair: &FilterPair, i: i32, max_gap: u32, m: f64) -> Result<DecayProfile> {
    let points: Vec<(u32, f64)> = (0..=max_gap)
        .map(|d| {
            let c = conv_decay_check(pair, i, i + d as i32, m)?;
            Ok((d, c.constant * (d as f64 * -m).exp2()))
        })
        .collect::<Result<_>>()?;
    let slope = if points.iter().any(|p| p.1 == 0.0) {
        f64::NEG_INFINITY
    } else {
        let xs: Vec<f64> = points.iter().map(|p| p.0 as f64).collect();
        let ys: Vec<f64> = points.iter().map(|p| p.1.log2()).collect();
        least_squares(&xs, &ys).0
    };
    Ok(DecayProfile { points, slope })
}
