//! One-dimensional integration primitives used by the weight and experiment code.

use std::f64::consts::FRAC_PI_2;

/// `∫_a^b |x - c|^γ dx`, exact. Returns `+∞` when the integral diverges.
pub fn power_integral(a: f64, b: f64, c: f64, gamma: f64) -> f64 {
    if b <= a {
        return 0.0;
    }
    if gamma == 0.0 {
        return b - a;
    }
    if c <= a {
        one_sided(a - c, b - a, gamma)
    } else if c >= b {
        one_sided(c - b, b - a, gamma)
    } else {
        from_zero(c - a, gamma) + from_zero(b - c, gamma)
    }
}

// ∫_0^t s^γ ds
fn from_zero(t: f64, gamma: f64) -> f64 {
    if gamma <= -1.0 {
        f64::INFINITY
    } else {
        t.powf(gamma + 1.0) / (gamma + 1.0)
    }
}

// ∫_d^{d+h} s^γ ds for d >= 0, written to avoid cancellation when h << d.
fn one_sided(d: f64, h: f64, gamma: f64) -> f64 {
    if d == 0.0 {
        return from_zero(h, gamma);
    }
    let g1 = gamma + 1.0;
    let lr = (h / d).ln_1p();
    if g1 == 0.0 {
        lr
    } else {
        d.powf(g1) * (g1 * lr).exp_m1() / g1
    }
}

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p1, mut p2) = (1.0, 0.0);
            for k in 0..n {
                let p3 = p2;
                p2 = p1;
                p1 = ((2 * k + 1) as f64 * z * p2 - k as f64 * p3) / (k + 1) as f64;
            }
            dp = n as f64 * (z * p1 - p2) / (z * z - 1.0);
            let dz = p1 / dp;
            z -= dz;
            if dz.abs() < 1e-15 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
        w[n - 1 - i] = w[i];
    }
    (x, w)
}

/// Composite midpoint nodes on `[a, b]` with unnormalized weights.
pub fn midpoint(a: f64, b: f64, n: usize) -> (Vec<f64>, Vec<f64>) {
    let h = (b - a) / n as f64;
    ((0..n).map(|i| a + (i as f64 + 0.5) * h).collect(), vec![h; n])
}

/// Double-exponential (tanh-sinh) nodes on `[a, b]` with unnormalized weights.
///
/// Nodes near an endpoint are formed as `endpoint ± offset` so that algebraic
/// endpoint singularities are resolved down to the spacing of floats there.
/// Nodes that round onto an endpoint are dropped.
pub fn tanh_sinh(a: f64, b: f64, h: f64) -> (Vec<f64>, Vec<f64>) {
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    let mut xs = Vec::new();
    let mut ws = Vec::new();
    let kmax = (4.0 / h).ceil() as i64;
    for k in -kmax..=kmax {
        let t = k as f64 * h;
        let u = FRAC_PI_2 * t.sinh();
        let cu = u.cosh();
        let w = h * half * FRAC_PI_2 * t.cosh() / (cu * cu);
        if w < 1e-300 {
            continue;
        }
        // distance from the nearer endpoint, in units of the half-width
        let off = 2.0 / (1.0 + (2.0 * u.abs()).exp());
        let x = if k == 0 {
            mid
        } else if u > 0.0 {
            b - half * off
        } else {
            a + half * off
        };
        if x <= a || x >= b {
            continue;
        }
        xs.push(x);
        ws.push(w);
    }
    (xs, ws)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn power_integral_matches_antiderivative() {
        assert!((power_integral(0.0, 1.0, 0.0, 2.0) - 1.0 / 3.0).abs() < 1e-15);
        assert!((power_integral(0.0, 1.0, 0.5, 0.5) - 2.0 * (0.5f64.powf(1.5) / 1.5)).abs() < 1e-15);
        assert!((power_integral(2.0, 3.0, 0.0, -1.0) - (1.5f64).ln()).abs() < 1e-15);
        assert!(power_integral(0.0, 1.0, 0.0, -1.0).is_infinite());
        assert!(power_integral(0.0, 1.0, 0.3, -1.5).is_infinite());
        assert!(power_integral(1.0, 2.0, 0.0, -1.5).is_finite());
    }

    #[test]
    fn power_integral_short_far_interval() {
        // h << d: compare against a series-free reference computed in two halves
        let (a, b, c, g): (f64, f64, f64, f64) = (10.0, 10.0 + 1e-9, 0.0, 2.5);
        let h = b - a;
        let exact = h * (a + 0.5 * h).powf(g) * (1.0 + g * (g - 1.0) / 24.0 * (h / a).powi(2));
        assert!((power_integral(a, b, c, g) / exact - 1.0).abs() < 1e-9);
    }

    #[test]
    fn gauss_legendre_exact_on_polynomials() {
        let (x, w) = gauss_legendre(6);
        let s: f64 = w.iter().sum();
        assert!((s - 2.0).abs() < 1e-14);
        let m10: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(10)).sum();
        assert!((m10 - 2.0 / 11.0).abs() < 1e-14);
    }

    #[test]
    fn tanh_sinh_resolves_endpoint_singularity() {
        let (x, w) = tanh_sinh(0.0, 1.0, 1.0 / 32.0);
        let got: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powf(-0.5)).sum();
        assert!((got - 2.0).abs() < 1e-9, "{got}");
        let got: f64 = x.iter().zip(&w).map(|(x, w)| w * (1.0 - x).powf(-0.3)).sum();
        assert!((got - 1.0 / 0.7).abs() < 1e-9, "{got}");
    }
}
