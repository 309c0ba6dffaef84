//! Quadrature rules: Gauss-Legendre, Gauss-Hermite, adaptive Gauss-Kronrod and
//! Chebyshev-Lobatto spectral integration.

use crate::error::{Error, Result};
use num_complex::Complex64;
use std::f64::consts::PI;

/// Nodes and weights of a one-dimensional rule.
#[derive(Debug, Clone)]
pub struct Rule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl Rule {
    /// Maps a rule given on [-1, 1] onto [a, b].
    pub fn mapped(&self, a: f64, b: f64) -> Rule {
        let h = 0.5 * (b - a);
        let c = 0.5 * (b + a);
        Rule {
            nodes: self.nodes.iter().map(|x| c + h * x).collect(),
            weights: self.weights.iter().map(|w| w * h).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.nodes.iter().copied().zip(self.weights.iter().copied())
    }
}

/// Gauss-Legendre rule with `n` points on [-1, 1].
pub fn gauss_legendre(n: usize) -> Rule {
    assert!(n > 0, "gauss_legendre needs at least one node");
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, x);
        if d != 0.0 {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    Rule { nodes, weights }
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Gauss-Hermite rule for the weight `exp(-x^2)` with `n` points.
pub fn gauss_hermite(n: usize) -> Rule {
    assert!(n > 0, "gauss_hermite needs at least one node");
    let pim4 = PI.powf(-0.25);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    let nf = n as f64;
    let mut z = 0.0;
    for i in 0..m {
        z = match i {
            0 => (2.0 * nf + 1.0).sqrt() - 1.85575 * (2.0 * nf + 1.0).powf(-1.0 / 6.0),
            1 => z - 1.14 * nf.powf(0.426) / z,
            2 => 1.86 * z - 0.86 * nodes[0],
            3 => 1.91 * z - 0.91 * nodes[1],
            _ => 2.0 * z - nodes[i - 2],
        };
        let mut pp = 0.0;
        for _ in 0..200 {
            let mut p1 = pim4;
            let mut p2 = 0.0;
            for j in 1..=n {
                let p3 = p2;
                p2 = p1;
                let jf = j as f64;
                p1 = z * (2.0 / jf).sqrt() * p2 - ((jf - 1.0) / jf).sqrt() * p3;
            }
            pp = (2.0 * nf).sqrt() * p2;
            let dz = p1 / pp;
            z -= dz;
            if dz.abs() <= 1e-15 * z.abs().max(1.0) {
                break;
            }
        }
        nodes[i] = z;
        weights[i] = 2.0 / (pp * pp);
    }
    let mut rule_nodes = vec![0.0; n];
    let mut rule_weights = vec![0.0; n];
    for i in 0..m {
        rule_nodes[i] = -nodes[i];
        rule_weights[i] = weights[i];
        rule_nodes[n - 1 - i] = nodes[i];
        rule_weights[n - 1 - i] = weights[i];
    }
    Rule {
        nodes: rule_nodes,
        weights: rule_weights,
    }
}

/// Composite Gauss-Legendre rule: `panels` equal panels of `order` points on [a, b].
pub fn composite_gl(a: f64, b: f64, panels: usize, order: usize) -> Rule {
    let base = gauss_legendre(order);
    let h = (b - a) / panels as f64;
    let mut nodes = Vec::with_capacity(panels * order);
    let mut weights = Vec::with_capacity(panels * order);
    for p in 0..panels {
        let r = base.mapped(a + p as f64 * h, a + (p + 1) as f64 * h);
        nodes.extend(r.nodes);
        weights.extend(r.weights);
    }
    Rule { nodes, weights }
}

/// Gauss-Legendre rule on [a, b] that is split at the given interior breakpoints.
pub fn piecewise_gl(a: f64, b: f64, breaks: &[f64], order: usize) -> Rule {
    let base = gauss_legendre(order);
    let mut cuts: Vec<f64> = breaks
        .iter()
        .copied()
        .filter(|&x| x > a && x < b)
        .collect();
    cuts.push(a);
    cuts.push(b);
    cuts.sort_by(f64::total_cmp);
    let mut nodes = Vec::new();
    let mut weights = Vec::new();
    for w in cuts.windows(2) {
        if w[1] - w[0] <= 0.0 {
            continue;
        }
        let r = base.mapped(w[0], w[1]);
        nodes.extend(r.nodes);
        weights.extend(r.weights);
    }
    Rule { nodes, weights }
}

const GK_NODES: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const GK_WK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const GK_WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gk15<F: FnMut(f64) -> Complex64>(f: &mut F, a: f64, b: f64) -> (Complex64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kron = fc * GK_WK[7];
    let mut gauss = fc * GK_WG[3];
    for j in 0..7 {
        let x = h * GK_NODES[j];
        let s = f(c - x) + f(c + x);
        kron += s * GK_WK[j];
        if j % 2 == 1 {
            gauss += s * GK_WG[j / 2];
        }
    }
    let k = kron * h;
    let g = gauss * h;
    (k, (k - g).norm())
}

/// Tolerances for [`adaptive`].
#[derive(Debug, Clone, Copy)]
pub struct AdaptiveOpts {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_intervals: usize,
}

impl Default for AdaptiveOpts {
    fn default() -> Self {
        AdaptiveOpts {
            abs_tol: 1e-12,
            rel_tol: 1e-10,
            max_intervals: 2000,
        }
    }
}

/// Globally adaptive Gauss-Kronrod (7/15) integration of a complex integrand.
pub fn adaptive<F: FnMut(f64) -> Complex64>(
    mut f: F,
    a: f64,
    b: f64,
    opts: AdaptiveOpts,
) -> Result<Complex64> {
    if a == b {
        return Ok(Complex64::new(0.0, 0.0));
    }
    let (v, e) = gk15(&mut f, a, b);
    let mut parts = vec![(a, b, v, e)];
    loop {
        let total: Complex64 = parts.iter().map(|p| p.2).sum();
        let err: f64 = parts.iter().map(|p| p.3).sum();
        let target = opts.abs_tol.max(opts.rel_tol * total.norm());
        if err <= target {
            return Ok(total);
        }
        if parts.len() >= opts.max_intervals {
            return Err(Error::QuadratureTolerance {
                tol: target,
                estimate: err,
            });
        }
        let (idx, _) = parts
            .iter()
            .enumerate()
            .max_by(|x, y| x.1 .3.total_cmp(&y.1 .3))
            .expect("non-empty");
        let (lo, hi, _, _) = parts.swap_remove(idx);
        let mid = 0.5 * (lo + hi);
        let (v1, e1) = gk15(&mut f, lo, mid);
        let (v2, e2) = gk15(&mut f, mid, hi);
        parts.push((lo, mid, v1, e1));
        parts.push((mid, hi, v2, e2));
    }
}

/// Real-valued convenience wrapper around [`adaptive`].
pub fn adaptive_real<F: FnMut(f64) -> f64>(
    mut f: F,
    a: f64,
    b: f64,
    opts: AdaptiveOpts,
) -> Result<f64> {
    adaptive(|x| Complex64::new(f(x), 0.0), a, b, opts).map(|z| z.re)
}

/// Chebyshev-Lobatto nodes on [0, 1] with a spectral cumulative-integration matrix.
///
/// `cumulative[i][j]` integrates the j-th Lagrange basis polynomial from 0 to
/// `nodes[i]`; its last row is the Clenshaw-Curtis weight vector.
#[derive(Debug, Clone)]
pub struct ChebyshevGrid {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
    pub cumulative: Vec<Vec<f64>>,
}

impl ChebyshevGrid {
    /// Builds a grid with `n + 1` nodes.
    pub fn new(n: usize) -> ChebyshevGrid {
        assert!(n >= 1);
        let nodes: Vec<f64> = (0..=n)
            .map(|j| 0.5 * (1.0 - (PI * j as f64 / n as f64).cos()))
            .collect();
        let bary: Vec<f64> = (0..=n)
            .map(|j| {
                let s = if j % 2 == 0 { 1.0 } else { -1.0 };
                if j == 0 || j == n {
                    0.5 * s
                } else {
                    s
                }
            })
            .collect();
        let gl = gauss_legendre(n / 2 + 2);
        let mut basis = vec![0.0; n + 1];
        let mut cumulative = vec![vec![0.0; n + 1]; n + 1];
        for (i, row) in cumulative.iter_mut().enumerate().skip(1) {
            let r = gl.mapped(0.0, nodes[i]);
            for (x, w) in r.iter() {
                lagrange_basis(&nodes, &bary, x, &mut basis);
                for (c, b) in row.iter_mut().zip(&basis) {
                    *c += w * b;
                }
            }
        }
        let weights = cumulative[n].clone();
        ChebyshevGrid {
            nodes,
            weights,
            cumulative,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}

fn lagrange_basis(nodes: &[f64], bary: &[f64], x: f64, out: &mut [f64]) {
    if let Some(k) = nodes.iter().position(|&xn| xn == x) {
        out.iter_mut().for_each(|o| *o = 0.0);
        out[k] = 1.0;
        return;
    }
    let mut denom = 0.0;
    for ((o, &xn), &b) in out.iter_mut().zip(nodes).zip(bary) {
        *o = b / (x - xn);
        denom += *o;
    }
    out.iter_mut().for_each(|o| *o /= denom);
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn legendre_integrates_polynomials() {
        let r = gauss_legendre(7);
        for p in 0..14 {
            let s: f64 = r.iter().map(|(x, w)| w * x.powi(p)).sum();
            let exact = if p % 2 == 0 { 2.0 / (p as f64 + 1.0) } else { 0.0 };
            assert_abs_diff_eq!(s, exact, epsilon = 1e-14);
        }
    }

    #[test]
    fn hermite_moments() {
        let r = gauss_hermite(40);
        let m0: f64 = r.weights.iter().sum();
        let m2: f64 = r.iter().map(|(x, w)| w * x * x).sum();
        let m4: f64 = r.iter().map(|(x, w)| w * x.powi(4)).sum();
        let sp = PI.sqrt();
        assert_abs_diff_eq!(m0, sp, epsilon = 1e-13);
        assert_abs_diff_eq!(m2, sp / 2.0, epsilon = 1e-13);
        assert_abs_diff_eq!(m4, 0.75 * sp, epsilon = 1e-12);
        let c: f64 = r.iter().map(|(x, w)| w * (2.0 * x).cos()).sum();
        assert_abs_diff_eq!(c, sp * (-1.0f64).exp(), epsilon = 1e-13);
    }

    #[test]
    fn adaptive_handles_oscillation() {
        let v = adaptive_real(|x| (50.0 * x).cos(), 0.0, 3.0, AdaptiveOpts::default()).unwrap();
        assert_abs_diff_eq!(v, (150.0f64).sin() / 50.0, epsilon = 1e-11);
    }

    #[test]
    fn adaptive_reports_failure() {
        let opts = AdaptiveOpts {
            max_intervals: 3,
            ..AdaptiveOpts::default()
        };
        assert!(adaptive_real(|x| (400.0 * x).sin(), 0.0, 10.0, opts).is_err());
    }

    #[test]
    fn chebyshev_cumulative_is_exact_for_exponentials() {
        let g = ChebyshevGrid::new(40);
        let f: Vec<Complex64> = g
            .nodes
            .iter()
            .map(|&z| Complex64::new(0.0, 12.0 * z).exp())
            .collect();
        for (i, &z) in g.nodes.iter().enumerate() {
            let s: Complex64 = g.cumulative[i].iter().zip(&f).map(|(w, v)| v * *w).sum();
            let exact = (Complex64::new(0.0, 12.0 * z).exp() - 1.0) / Complex64::new(0.0, 12.0);
            assert!((s - exact).norm() < 1e-12, "node {i}: {s} vs {exact}");
        }
    }
}
