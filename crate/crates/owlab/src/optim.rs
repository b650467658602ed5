//! Multi-start projected gradient ascent on the Euclidean unit sphere.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Clone, Debug)]
pub struct SphereSearch {
    pub random_starts: usize,
    pub tol: f64,
    pub max_steps: usize,
    pub seed: u64,
}

impl Default for SphereSearch {
    fn default() -> Self {
        SphereSearch { random_starts: 16, tol: 1e-6, max_steps: 500, seed: 0xA9 }
    }
}

#[derive(Clone, Debug)]
pub struct SearchResult {
    pub value: f64,
    pub arg: Vec<f64>,
    pub converged: bool,
}

fn normalize(v: &mut [f64]) -> bool {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if !(n > 0.0) || !n.is_finite() {
        return false;
    }
    v.iter_mut().for_each(|x| *x /= n);
    true
}

pub fn random_unit(rng: &mut ChaCha8Rng, m: usize) -> Vec<f64> {
    loop {
        let mut v: Vec<f64> = (0..m).map(|_| rng.random_range(-1.0..1.0)).collect();
        let r2: f64 = v.iter().map(|x| x * x).sum();
        if r2 > 1e-4 && r2 <= 1.0 && normalize(&mut v) {
            return v;
        }
    }
}

impl SphereSearch {
    /// Maximize `f` over unit vectors in `R^m`. `extra` starts are tried before
    /// the random ones.
    pub fn maximize<F: Fn(&[f64]) -> f64>(&self, m: usize, extra: &[Vec<f64>], f: F) -> SearchResult {
        if m == 1 {
            let (a, b) = (f(&[1.0]), f(&[-1.0]));
            let (value, arg) = if b > a { (b, vec![-1.0]) } else { (a, vec![1.0]) };
            return SearchResult { value, arg, converged: true };
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let mut starts: Vec<Vec<f64>> = extra
            .iter()
            .filter_map(|s| {
                let mut s = s.clone();
                normalize(&mut s).then_some(s)
            })
            .collect();
        for _ in 0..self.random_starts {
            starts.push(random_unit(&mut rng, m));
        }
        let mut best = SearchResult { value: f64::NEG_INFINITY, arg: starts[0].clone(), converged: false };
        for s in starts {
            let r = self.ascend(s, &f);
            if r.value > best.value || (r.value == best.value && r.converged && !best.converged) {
                best = r;
            }
        }
        best
    }

    fn ascend<F: Fn(&[f64]) -> f64>(&self, mut x: Vec<f64>, f: &F) -> SearchResult {
        let m = x.len();
        let mut fx = f(&x);
        let mut step = 0.25;
        let h = 1e-7;
        let mut g = vec![0.0; m];
        let mut trial = vec![0.0; m];
        for _ in 0..self.max_steps {
            // central differences in the ambient space, then project
            for i in 0..m {
                let xi = x[i];
                x[i] = xi + h;
                let fp = f(&x);
                x[i] = xi - h;
                let fm = f(&x);
                x[i] = xi;
                g[i] = (fp - fm) / (2.0 * h);
            }
            let radial: f64 = g.iter().zip(&x).map(|(g, x)| g * x).sum();
            g.iter_mut().zip(&x).for_each(|(g, x)| *g -= radial * x);
            let gn = g.iter().map(|v| v * v).sum::<f64>().sqrt();
            if !(gn > 1e-14 * fx.abs().max(1e-300)) {
                return SearchResult { value: fx, arg: x, converged: true };
            }
            loop {
                for i in 0..m {
                    trial[i] = x[i] + step * g[i] / gn;
                }
                normalize(&mut trial);
                let ft = f(&trial);
                if ft > fx {
                    let rel = (ft - fx) / fx.abs().max(1e-300);
                    x.copy_from_slice(&trial);
                    fx = ft;
                    step = (step * 1.5).min(1.0);
                    if rel < self.tol {
                        return SearchResult { value: fx, arg: x, converged: true };
                    }
                    break;
                }
                step *= 0.5;
                if step < 1e-12 {
                    return SearchResult { value: fx, arg: x, converged: true };
                }
            }
        }
        SearchResult { value: fx, arg: x, converged: false }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn finds_largest_eigenvalue() {
        // Rayleigh quotient of diag(1, 3, 2)
        let r = SphereSearch::default().maximize(3, &[], |e| e[0] * e[0] + 3.0 * e[1] * e[1] + 2.0 * e[2] * e[2]);
        assert!((r.value - 3.0).abs() < 1e-6);
        assert!(r.converged);
    }

    #[test]
    fn handles_l1_corner() {
        // sup of |<a, e>| / ||e||_1 is ||a||_inf, attained at a corner
        let a = [0.3, -2.0, 1.1];
        let r = SphereSearch::default().maximize(3, &[], |e| {
            e.iter().zip(&a).map(|(e, a)| e * a).sum::<f64>().abs() / e.iter().map(|x| x.abs()).sum::<f64>()
        });
        assert!((r.value - 2.0).abs() < 1e-4, "{}", r.value);
    }
}
