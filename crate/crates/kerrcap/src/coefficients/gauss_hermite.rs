//! Second-order coefficients in the rotated four-fold form.
//!
//! The integrand is a product of six `E` functions with complex-shifted
//! arguments. The shift is integrated against `exp(-z^2)` with a Gauss-Hermite
//! rule, the spectral variable with truncated composite Gauss-Legendre panels.

use std::f64::consts::{FRAC_PI_4, PI};

use num_complex::Complex64;

use crate::error::{invalid, Error, Result};
use crate::exec::ExecPolicy;
use crate::quad::{composite_gl, gauss_hermite, gauss_legendre, Rule};
use crate::specfun::{SalzerTable, SALZER_MAX_B};

/// Points per panel of the truncated spectral rule.
const ALPHA_PANEL_ORDER: usize = 8;

/// Dispersion above which the Salzer path is not trusted.
pub const SALZER_BETA_LIMIT: f64 = 7.5;

/// Quadrature orders for the rotated four-fold form.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureSpec {
    /// Gauss-Legendre points per unit-interval dimension.
    pub legendre_order: usize,
    /// Gauss-Hermite points for the `exp(-z^2)` weight.
    pub hermite_order: usize,
    /// The spectral variable is integrated over `[-alpha_truncation, alpha_truncation]`.
    pub alpha_truncation: f64,
    /// Number of Gauss-Legendre panels on the truncated spectral range.
    pub alpha_order: usize,
    /// Largest accepted relative change between the coarse and the full rule.
    pub target_rel_tol: f64,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        QuadratureSpec {
            legendre_order: 48,
            hermite_order: 40,
            alpha_truncation: 2.0 * PI * 11.0,
            alpha_order: 64,
            target_rel_tol: 1e-5,
        }
    }
}

impl QuadratureSpec {
    /// Default orders with the spectral range sized for indices up to `reach`.
    pub fn for_reach(reach: usize) -> QuadratureSpec {
        let alpha_truncation = 2.0 * PI * (reach as f64 + 6.0);
        QuadratureSpec {
            alpha_truncation,
            alpha_order: ((alpha_truncation / 2.0).ceil() as usize).max(16),
            ..QuadratureSpec::default()
        }
    }

    /// Checks the orders and that the spectral range covers indices up to `reach`.
    pub fn validate(&self, reach: i64) -> Result<()> {
        if self.legendre_order < 8 || self.hermite_order < 8 || self.alpha_order < 8 {
            return Err(invalid("quadrature orders must be at least 8"));
        }
        let need = 2.0 * PI * (reach as f64 + 2.0);
        if self.alpha_truncation <= need {
            return Err(invalid(format!(
                "alpha truncation {} must exceed {need:.3} for indices up to {reach}",
                self.alpha_truncation
            )));
        }
        if !(self.target_rel_tol > 0.0) {
            return Err(invalid("target_rel_tol must be positive"));
        }
        Ok(())
    }

    /// Rule with every order scaled down to three quarters, used as the refinement check.
    fn coarse(&self) -> QuadratureSpec {
        let shrink = |n: usize| (n * 3 / 4).max(8);
        QuadratureSpec {
            legendre_order: shrink(self.legendre_order),
            hermite_order: shrink(self.hermite_order),
            alpha_order: shrink(self.alpha_order),
            ..*self
        }
    }
}

/// `E(a, b)` evaluator for one fixed `b`.
#[derive(Debug, Clone)]
enum Fresnel {
    Salzer(SalzerTable),
    /// Gauss-Legendre nodes on [-1/2, 1/2] with `exp(i b y^2)` folded into the weights.
    Nodes { y: Vec<f64>, w: Vec<Complex64> },
}

impl Fresnel {
    fn new(b: f64, beta: f64) -> Fresnel {
        if beta < SALZER_BETA_LIMIT && b.abs() <= SALZER_MAX_B {
            if let Ok(t) = SalzerTable::new(b) {
                return Fresnel::Salzer(t);
            }
        }
        let r = gauss_legendre(96).mapped(-0.5, 0.5);
        let w = r
            .iter()
            .map(|(y, w)| Complex64::from_polar(w, b * y * y))
            .collect();
        Fresnel::Nodes { y: r.nodes, w }
    }

    fn eval(&self, a: Complex64) -> Complex64 {
        match self {
            Fresnel::Salzer(t) => t.eval(a),
            Fresnel::Nodes { y, w } => y
                .iter()
                .zip(w)
                .map(|(&y, &w)| w * (Complex64::i() * a * y).exp())
                .sum(),
        }
    }

    fn eval_tilde(&self, a: Complex64) -> Complex64 {
        self.eval(a.conj()).conj()
    }
}

/// One of the six `E` factors.
#[derive(Debug, Clone, Copy)]
struct Slot {
    /// Fixed index, or `None` for the summed index.
    index: Option<i64>,
    /// Sign of the complex shift.
    plus: bool,
    /// Which of the two `b` parameters the factor uses.
    table: usize,
    tilde: bool,
}

impl Slot {
    const fn new(index: Option<i64>, plus: bool, table: usize, tilde: bool) -> Slot {
        Slot {
            index,
            plus,
            table,
            tilde,
        }
    }

    fn eval(&self, tables: &[Fresnel; 2], idx: i64, alpha: f64, shift: Complex64) -> Complex64 {
        let base = Complex64::new(2.0 * PI * idx as f64 + alpha, 0.0);
        let a = if self.plus { base + shift } else { base - shift };
        let t = &tables[self.table];
        if self.tilde {
            t.eval_tilde(a)
        } else {
            t.eval(a)
        }
    }
}

/// Six factors plus the range of the summed index.
#[derive(Debug, Clone, Copy)]
struct Layout {
    slots: [Slot; 6],
    sum_reach: i64,
}

/// Rules shared by all outer nodes.
struct InnerRules {
    alpha: Rule,
    hermite: Rule,
}

impl InnerRules {
    fn new(spec: &QuadratureSpec) -> InnerRules {
        let a = spec.alpha_truncation;
        InnerRules {
            alpha: composite_gl(-a, a, spec.alpha_order, ALPHA_PANEL_ORDER),
            hermite: gauss_hermite(spec.hermite_order),
        }
    }
}

/// `int dalpha/2pi int dz exp(-z^2)/sqrt(pi)` of the six-factor product with shift `z * scale`.
fn inner(layout: &Layout, tables: &[Fresnel; 2], scale: Complex64, rules: &InnerRules) -> Complex64 {
    let (fixed, summed): (Vec<&Slot>, Vec<&Slot>) =
        layout.slots.iter().partition(|s| s.index.is_some());
    let mut total = Complex64::new(0.0, 0.0);
    for (z, wz) in rules.hermite.iter() {
        let shift = scale * z;
        let mut acc = Complex64::new(0.0, 0.0);
        for (alpha, wa) in rules.alpha.iter() {
            let mut prod = Complex64::new(wa, 0.0);
            for s in &fixed {
                prod *= s.eval(tables, s.index.unwrap_or(0), alpha, shift);
            }
            if !summed.is_empty() {
                let mut pair = Complex64::new(0.0, 0.0);
                for r in -layout.sum_reach..=layout.sum_reach {
                    let mut p = Complex64::new(1.0, 0.0);
                    for s in &summed {
                        p *= s.eval(tables, r, alpha, shift);
                    }
                    pair += p;
                }
                prod *= pair;
            }
            acc += prod;
        }
        total += acc * wz;
    }
    total / (2.0 * PI * PI.sqrt())
}

/// A2 layout: inner vertex factors use `b = 2 beta t1 (1 - t2)`, outer ones `b = 2 beta t1`.
fn a2_slots(m: [Option<i64>; 6]) -> [Slot; 6] {
    [
        Slot::new(m[0], false, 0, false),
        Slot::new(m[1], false, 0, false),
        Slot::new(m[2], true, 1, false),
        Slot::new(m[3], false, 0, true),
        Slot::new(m[4], true, 1, true),
        Slot::new(m[5], true, 1, true),
    ]
}

fn a2_layout_eval(layout: &Layout, beta: f64, spec: &QuadratureSpec, policy: ExecPolicy) -> Complex64 {
    let t = gauss_legendre(spec.legendre_order).mapped(0.0, 1.0);
    let rules = InnerRules::new(spec);
    let rot = Complex64::from_polar(1.0, -FRAC_PI_4);
    let per_t1 = policy.map(t.len(), |i| {
        let (t1, w1) = (t.nodes[i], t.weights[i]);
        let outer = Fresnel::new(2.0 * beta * t1, beta);
        let mut acc = Complex64::new(0.0, 0.0);
        for (t2, w2) in t.iter() {
            let tables = [Fresnel::new(2.0 * beta * t1 * (1.0 - t2), beta), outer.clone()];
            let scale = rot * (2.0 * t1 * t2 * beta).sqrt();
            acc += inner(layout, &tables, scale, &rules) * w2;
        }
        acc * (w1 * t1)
    });
    per_t1.into_iter().sum()
}

fn b2_layout_eval(layout: &Layout, beta: f64, spec: &QuadratureSpec, policy: ExecPolicy) -> Complex64 {
    // Split the unit square along the diagonal; on each triangle the smaller
    // variable is `x * u` so the min weight and the shift stay smooth.
    let g = gauss_legendre(spec.legendre_order).mapped(0.0, 1.0);
    let rules = InnerRules::new(spec);
    let per_x = policy.map(g.len(), |i| {
        let (x, wx) = (g.nodes[i], g.weights[i]);
        let mut acc = Complex64::new(0.0, 0.0);
        for (u, wu) in g.iter() {
            let y = x * u;
            // (zeta1, zeta2) = (x, y) and (y, x)
            for (z1, z2) in [(x, y), (y, x)] {
                let tables = [Fresnel::new(2.0 * beta * z1, beta), Fresnel::new(2.0 * beta * z2, beta)];
                let d = z2 - z1;
                let phase = if d >= 0.0 { FRAC_PI_4 } else { -FRAC_PI_4 };
                let scale = Complex64::from_polar((2.0 * beta * d.abs()).sqrt(), phase);
                acc += inner(layout, &tables, scale, &rules) * (wu * y);
            }
        }
        acc * (wx * x)
    });
    per_x.into_iter().sum()
}

fn refined<F>(spec: &QuadratureSpec, eval: F) -> Result<Complex64>
where
    F: Fn(&QuadratureSpec) -> Complex64,
{
    let fine = eval(spec);
    let coarse = eval(&spec.coarse());
    let estimate = (fine - coarse).norm() / fine.norm().max(1e-300);
    if estimate > spec.target_rel_tol {
        return Err(Error::QuadratureTolerance {
            tol: spec.target_rel_tol,
            estimate,
        });
    }
    Ok(fine)
}

fn reach_of(idx: &[i64]) -> i64 {
    idx.iter().map(|v| v.abs()).max().unwrap_or(0)
}

fn check_beta(beta: f64) -> Result<()> {
    if !beta.is_finite() || beta < 0.0 {
        return Err(invalid(format!("dispersion must be finite and non-negative, got {beta}")));
    }
    Ok(())
}

/// Single `A2^{m1,m2,m3; m4,m5,m6}` coefficient without the refinement check.
pub fn a2_single_raw(m: [i64; 6], beta: f64, spec: &QuadratureSpec, policy: ExecPolicy) -> Result<Complex64> {
    check_beta(beta)?;
    // shift invariance lets the spectral window centre on the indices
    let lo = *m.iter().min().unwrap_or(&0);
    let hi = *m.iter().max().unwrap_or(&0);
    let centre = (lo + hi).div_euclid(2);
    let shifted = m.map(|v| v - centre);
    spec.validate(reach_of(&shifted))?;
    let layout = Layout {
        slots: a2_slots(shifted.map(Some)),
        sum_reach: 0,
    };
    Ok(a2_layout_eval(&layout, beta, spec, policy))
}

/// `A2^{m1,m2,m3; m4,m5,m6}` with the coarse/full refinement check.
pub fn a2_single(m: [i64; 6], beta: f64, spec: &QuadratureSpec, policy: ExecPolicy) -> Result<Complex64> {
    a2_single_raw(m, beta, spec, policy)?;
    refined(spec, |s| a2_single_raw(m, beta, s, policy).unwrap_or(Complex64::new(f64::NAN, 0.0)))
}

/// Which pair of `A2` slots carries the summed index.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Contraction {
    /// `sum_r A2^{r,s1,s2; s3,s4,r}`
    Left,
    /// `sum_r A2^{s1,s2,r; r,s3,s4}`
    Pair,
}

/// Contracted `A2` with the index sum folded under the integral.
pub fn a2_contracted(
    kind: Contraction,
    s: [i64; 4],
    m_max: usize,
    beta: f64,
    spec: &QuadratureSpec,
    policy: ExecPolicy,
) -> Result<Complex64> {
    check_beta(beta)?;
    let m_max = m_max as i64;
    spec.validate(reach_of(&s).max(m_max))?;
    let idx = match kind {
        Contraction::Left => [None, Some(s[0]), Some(s[1]), Some(s[2]), Some(s[3]), None],
        Contraction::Pair => [Some(s[0]), Some(s[1]), None, None, Some(s[2]), Some(s[3])],
    };
    let layout = Layout {
        slots: a2_slots(idx),
        sum_reach: m_max,
    };
    refined(spec, |q| a2_layout_eval(&layout, beta, q, policy))
}

fn b2_layout(k: [i64; 4], m_max: i64) -> Layout {
    // table 0 uses b = 2 beta zeta1, table 1 uses b = 2 beta zeta2
    Layout {
        slots: [
            Slot::new(None, true, 0, false),
            Slot::new(None, false, 1, true),
            Slot::new(Some(k[0]), false, 1, false),
            Slot::new(Some(k[1]), false, 1, false),
            Slot::new(Some(k[2]), true, 0, true),
            Slot::new(Some(k[3]), true, 0, true),
        ],
        sum_reach: m_max,
    }
}

/// `b2^{k1,k2; k3,k4}` without the refinement check.
pub fn b2_rotated_raw(k: [i64; 4], m_max: usize, beta: f64, spec: &QuadratureSpec, policy: ExecPolicy) -> Result<Complex64> {
    check_beta(beta)?;
    spec.validate(reach_of(&k).max(m_max as i64))?;
    Ok(b2_layout_eval(&b2_layout(k, m_max as i64), beta, spec, policy))
}

/// `b2^{k1,k2; k3,k4}` in the rotated form with the refinement check.
pub fn b2_rotated(k: [i64; 4], m_max: usize, beta: f64, spec: &QuadratureSpec, policy: ExecPolicy) -> Result<Complex64> {
    b2_rotated_raw(k, m_max, beta, spec, policy)?;
    let layout = b2_layout(k, m_max as i64);
    refined(spec, |q| b2_layout_eval(&layout, beta, q, policy))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> QuadratureSpec {
        QuadratureSpec {
            legendre_order: 8,
            hermite_order: 8,
            alpha_truncation: 2.0 * PI * 8.0,
            alpha_order: 32,
            target_rel_tol: 1e-3,
        }
    }

    #[test]
    fn zero_beta_all_zero_is_eleven_fortieths() {
        let v = a2_single_raw([0; 6], 0.0, &small(), ExecPolicy::Sequential).unwrap();
        assert!((v - Complex64::new(11.0 / 40.0, 0.0)).norm() < 1e-6, "{v}");
    }

    #[test]
    fn zero_beta_b2_single_symbol() {
        let v = b2_rotated_raw([0; 4], 0, 0.0, &small(), ExecPolicy::Sequential).unwrap();
        assert!((v - Complex64::new(11.0 / 60.0, 0.0)).norm() < 1e-6, "{v}");
    }

    #[test]
    fn spec_rejects_narrow_window() {
        let spec = QuadratureSpec {
            alpha_truncation: 1.0,
            ..QuadratureSpec::default()
        };
        assert!(spec.validate(0).is_err());
        assert!(QuadratureSpec::for_reach(5).validate(5).is_ok());
    }
}
