//! First representation of the second-order kernels: nine four-fold
//! integrals over the diagonalised frequency variables `y1..y5`.
//!
//! The propagation integrals are done in closed form (`G2` for the ordered
//! weight, `G3` for the `min` weight), and the outer variable `y5` was
//! integrated by parts, which leaves nine polytope integrals. Every limit
//! is a max or min of affine forms, so the integrand of each nested level
//! is smooth between finitely many kinks. The kinks are found symbolically
//! and each smooth piece gets its own Gauss-Legendre rule.

use crate::coefficients::lattice::ZetaWeight;
use crate::error::{invalid, Result};
use crate::quad::{gauss_legendre, Rule};
use crate::specfun::{cal_g2, cal_g3};
use num_complex::Complex64;
use std::f64::consts::PI;

/// Affine form `c[0] + sum_i c[i] y_i` over the variables `y1..y5`.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Affine([f64; 6]);

impl Affine {
    const fn new(c: [f64; 6]) -> Affine {
        Affine(c)
    }

    fn eval(&self, v: &[f64; 6]) -> f64 {
        self.0[0] + (1..6).map(|i| self.0[i] * v[i]).sum::<f64>()
    }

    fn sub(&self, o: &Affine) -> Affine {
        let mut c = [0.0; 6];
        for (i, ci) in c.iter_mut().enumerate() {
            *ci = self.0[i] - o.0[i];
        }
        Affine(c)
    }

    fn neg(&self) -> Affine {
        Affine(self.0.map(|x| -x))
    }

    fn is_constant(&self) -> bool {
        self.0[1..].iter().all(|c| c.abs() < 1e-14)
    }

    /// Solves `self = 0` for variable `var`, returning the root as an affine
    /// form in the remaining variables.
    fn root(&self, var: usize) -> Option<Affine> {
        let a = self.0[var];
        if a.abs() < 1e-14 {
            return None;
        }
        let mut c = self.0.map(|x| -x / a);
        c[var] = 0.0;
        Some(Affine(c))
    }

    /// Scale-free key for de-duplication.
    fn normalized(&self) -> Option<Affine> {
        let lead = self.0[1..].iter().copied().find(|c| c.abs() > 1e-14)?;
        Some(Affine(self.0.map(|x| x / lead)))
    }
}

fn push_unique(list: &mut Vec<Affine>, f: Affine) {
    if f.is_constant() {
        return;
    }
    let Some(n) = f.normalized() else { return };
    if !list
        .iter()
        .any(|g| g.0.iter().zip(&n.0).all(|(a, b)| (a - b).abs() < 1e-12))
    {
        list.push(n);
    }
}

/// One integration level: variable index and max/min limit forms.
#[derive(Debug, Clone)]
struct Level {
    var: usize,
    lower: Vec<Affine>,
    upper: Vec<Affine>,
    /// Roots of inner kinks, solved for `var`.
    breaks: Vec<Affine>,
}

/// A nested polytope integral with precomputed kink locations.
#[derive(Debug, Clone)]
struct Nest {
    levels: Vec<Level>,
}

impl Nest {
    /// `levels` are listed outermost first; `kinks` are forms whose zero set
    /// is a kink or jump of the integrand.
    fn new(levels: Vec<(usize, Vec<Affine>, Vec<Affine>)>, kinks: Vec<Affine>) -> Nest {
        let mut pending: Vec<Affine> = Vec::new();
        for k in kinks {
            push_unique(&mut pending, k);
        }
        let mut built: Vec<Level> = Vec::new();
        for (var, lower, upper) in levels.into_iter().rev() {
            let mut breaks = Vec::new();
            let mut next = Vec::new();
            for f in &pending {
                match f.root(var) {
                    Some(r) => push_unique_raw(&mut breaks, r),
                    None => push_unique(&mut next, *f),
                }
            }
            let own: Vec<Affine> = lower.iter().chain(upper.iter()).copied().collect();
            for r in &breaks {
                for o in &own {
                    push_unique(&mut next, r.sub(o));
                }
            }
            for (i, r) in breaks.iter().enumerate() {
                for s in &breaks[i + 1..] {
                    push_unique(&mut next, r.sub(s));
                }
            }
            for (i, a) in own.iter().enumerate() {
                for b in &own[i + 1..] {
                    push_unique(&mut next, a.sub(b));
                }
            }
            pending = next;
            built.push(Level {
                var,
                lower,
                upper,
                breaks,
            });
        }
        built.reverse();
        Nest { levels: built }
    }

    fn integrate<F: FnMut(&[f64; 6]) -> Complex64>(&self, rule: &Rule, f: &mut F) -> Complex64 {
        let mut v = [1.0, 0.0, 0.0, 0.0, 0.0, 0.0];
        self.level(0, &mut v, rule, f)
    }

    fn level<F: FnMut(&[f64; 6]) -> Complex64>(
        &self,
        k: usize,
        v: &mut [f64; 6],
        rule: &Rule,
        f: &mut F,
    ) -> Complex64 {
        if k == self.levels.len() {
            return f(v);
        }
        let lev = &self.levels[k];
        let lo = lev.lower.iter().map(|a| a.eval(v)).fold(f64::NEG_INFINITY, f64::max);
        let hi = lev.upper.iter().map(|a| a.eval(v)).fold(f64::INFINITY, f64::min);
        if !(hi > lo) {
            return Complex64::new(0.0, 0.0);
        }
        let mut pts = vec![lo, hi];
        let tol = 1e-12 * (hi - lo).max(1e-300);
        for b in &lev.breaks {
            let x = b.eval(v);
            if x > lo + tol && x < hi - tol {
                pts.push(x);
            }
        }
        pts.sort_by(|a, b| a.partial_cmp(b).expect("finite limits"));
        let mut acc = Complex64::new(0.0, 0.0);
        for w in pts.windows(2) {
            let (a, b) = (w[0], w[1]);
            if b - a <= tol {
                continue;
            }
            let h = 0.5 * (b - a);
            let c = 0.5 * (b + a);
            for (x, wt) in rule.iter() {
                v[lev.var] = c + h * x;
                acc += self.level(k + 1, v, rule, f) * (wt * h);
            }
        }
        acc
    }
}

fn push_unique_raw(list: &mut Vec<Affine>, f: Affine) {
    if !list
        .iter()
        .any(|g| g.0.iter().zip(&f.0).all(|(a, b)| (a - b).abs() < 1e-12))
    {
        list.push(f);
    }
}

/// How the arguments `(Y1, Y2, Y3, Y4)` of `G` and `Ex` follow from the
/// integration variables in one of the nine terms.
#[derive(Debug, Clone)]
enum ArgMap {
    /// `Y_i = forms[i]`
    Plain([Affine; 4]),
    /// The ninth term: `Y1 = +-(1/2 - |y2 + y3 + y4 + y5|)`, both signs
    /// summed, weighted by `sign(y2 + y3 + y4 + y5)`.
    Edge,
}

/// One of the nine terms: prefactor, `y5` handling and the polytope.
#[derive(Debug, Clone)]
struct Term {
    prefactor: f64,
    /// `Some(y)`: `y5` sits at the fixed boundary value `y`; `None`: `y5` is
    /// integrated with the weight `w(y5)`.
    boundary: Option<f64>,
    args: ArgMap,
    nest: Nest,
}

const fn c(k: f64) -> Affine {
    Affine::new([k, 0.0, 0.0, 0.0, 0.0, 0.0])
}

fn var(i: usize) -> Affine {
    let mut c = [0.0; 6];
    c[i] = 1.0;
    Affine(c)
}

fn lin(terms: &[(usize, f64)], k: f64) -> Affine {
    let mut c = [0.0; 6];
    c[0] = k;
    for &(i, a) in terms {
        c[i] += a;
    }
    Affine(c)
}

/// Limits `-1/2 + |l| <= y1 <= 1/2 - |l|` written with max/min.
fn y1_level(l: Affine) -> (usize, Vec<Affine>, Vec<Affine>) {
    let half = c(0.5);
    (
        1,
        vec![l.sub(&half), l.neg().sub(&half)],
        vec![half.sub(&l), half.sub(&l.neg())],
    )
}

fn identity_args() -> [Affine; 4] {
    [var(1), var(2), var(3), var(4)]
}

fn terms() -> Vec<Term> {
    let mut out = Vec::with_capacity(9);
    // s = y3 + y4
    let s34 = lin(&[(3, 1.0), (4, 1.0)], 0.0);
    // I1
    out.push(Term {
        prefactor: 4.0,
        boundary: Some(0.5),
        args: ArgMap::Plain(identity_args()),
        nest: Nest::new(
            vec![
                (4, vec![c(-0.5)], vec![c(0.0)]),
                (3, vec![var(4)], vec![lin(&[(4, 1.0)], 1.0)]),
                (
                    2,
                    vec![lin(&[(3, -0.5), (4, -0.5)], -0.5), lin(&[(3, -1.0), (4, -1.0)], -1.0)],
                    vec![lin(&[(3, -0.5), (4, -0.5)], 0.0), s34.neg()],
                ),
                y1_level(lin(&[(2, 1.0), (3, 1.0), (4, 1.0)], 0.5)),
            ],
            vec![],
        ),
    });
    // I2
    out.push(Term {
        prefactor: -4.0,
        boundary: Some(-0.5),
        args: ArgMap::Plain(identity_args()),
        nest: Nest::new(
            vec![
                (4, vec![c(0.0)], vec![c(0.5)]),
                (3, vec![lin(&[(4, 1.0)], -1.0)], vec![var(4)]),
                (
                    2,
                    vec![lin(&[(3, -0.5), (4, -0.5)], 0.0), s34.neg()],
                    vec![lin(&[(3, -0.5), (4, -0.5)], 0.5), lin(&[(3, -1.0), (4, -1.0)], 1.0)],
                ),
                y1_level(lin(&[(2, 1.0), (3, 1.0), (4, 1.0)], -0.5)),
            ],
            vec![],
        ),
    });
    // I3, I4: y4 pinned at s (1/4 - y5/2)
    for (pref, s) in [(2.0, 1.0), (-2.0, -1.0)] {
        let (y3_lo, y3_hi) = if s > 0.0 {
            (lin(&[(5, 0.5)], -0.25), lin(&[(5, 0.5)], 0.75))
        } else {
            (lin(&[(5, 0.5)], -0.75), lin(&[(5, 0.5)], 0.25))
        };
        let q4 = |k: f64| lin(&[(3, -0.5), (5, -0.25)], k);
        let q2 = |k: f64| lin(&[(3, -1.0), (5, -0.5)], k);
        let (lo, hi) = if s > 0.0 {
            (vec![q4(-0.375), q2(-0.75)], vec![q4(0.125), q2(0.25)])
        } else {
            (vec![q4(-0.125), q2(-0.25)], vec![q4(0.375), q2(0.75)])
        };
        let l = lin(&[(2, 1.0), (3, 1.0), (5, 0.5)], 0.25 * s);
        let y4 = lin(&[(5, -0.5)], 0.25 * s);
        out.push(Term {
            prefactor: pref,
            boundary: None,
            args: ArgMap::Plain([var(1), var(2), var(3), y4]),
            nest: Nest::new(
                vec![
                    (5, vec![c(-0.5)], vec![c(0.5)]),
                    (3, vec![y3_lo], vec![y3_hi]),
                    (2, lo, hi),
                    y1_level(l),
                ],
                vec![],
            ),
        });
    }
    // I5, I6: y3 pinned at y4 + y5 +- 1/2
    let y4_lo = lin(&[(5, -0.5)], -0.25);
    let y4_hi = lin(&[(5, -0.5)], 0.25);
    for (pref, s) in [(-4.0, 1.0), (4.0, -1.0)] {
        let p1 = |k: f64| lin(&[(4, -1.0), (5, -1.0)], k);
        let p2 = |k: f64| lin(&[(4, -2.0), (5, -2.0)], k);
        let (lo, hi) = if s > 0.0 {
            (vec![p1(-0.5), p2(-1.0)], vec![p1(0.0), p2(0.0)])
        } else {
            (vec![p1(0.0), p2(0.0)], vec![p1(0.5), p2(1.0)])
        };
        let l = lin(&[(2, 1.0), (4, 2.0), (5, 2.0)], 0.5 * s);
        let y3 = lin(&[(4, 1.0), (5, 1.0)], 0.5 * s);
        out.push(Term {
            prefactor: pref,
            boundary: None,
            args: ArgMap::Plain([var(1), var(2), y3, var(4)]),
            nest: Nest::new(
                vec![
                    (5, vec![c(-0.5)], vec![c(0.5)]),
                    (4, vec![y4_lo], vec![y4_hi]),
                    (2, lo, hi),
                    y1_level(l),
                ],
                vec![],
            ),
        });
    }
    // I7, I8: y2 pinned at +-1/4 - (y3 + y4 + y5)/2
    for (pref, s) in [(2.0, 1.0), (-2.0, -1.0)] {
        let base_lo = lin(&[(4, 1.0), (5, 1.0)], -0.5);
        let base_hi = lin(&[(4, 1.0), (5, 1.0)], 0.5);
        let (lo, hi) = if s > 0.0 {
            (vec![base_lo], vec![base_hi, lin(&[(4, -1.0), (5, -1.0)], 0.5)])
        } else {
            (vec![base_lo, lin(&[(4, -1.0), (5, -1.0)], -0.5)], vec![base_hi])
        };
        let l = lin(&[(3, 0.5), (4, 0.5), (5, 0.5)], 0.25 * s);
        let y2 = lin(&[(3, -0.5), (4, -0.5), (5, -0.5)], 0.25 * s);
        out.push(Term {
            prefactor: pref,
            boundary: None,
            args: ArgMap::Plain([var(1), y2, var(3), var(4)]),
            nest: Nest::new(
                vec![
                    (5, vec![c(-0.5)], vec![c(0.5)]),
                    (4, vec![y4_lo], vec![y4_hi]),
                    (3, lo, hi),
                    y1_level(l),
                ],
                vec![],
            ),
        });
    }
    // I9: y1 pinned at the edge +-(1/2 - |y2 + y3 + y4 + y5|)
    let r = |k: f64| lin(&[(3, -0.5), (4, -0.5), (5, -0.5)], k);
    let q = |k: f64| lin(&[(3, -1.0), (4, -1.0), (5, -1.0)], k);
    out.push(Term {
        prefactor: 4.0,
        boundary: None,
        args: ArgMap::Edge,
        nest: Nest::new(
            vec![
                (5, vec![c(-0.5)], vec![c(0.5)]),
                (4, vec![y4_lo], vec![y4_hi]),
                (3, vec![lin(&[(4, 1.0), (5, 1.0)], -0.5)], vec![lin(&[(4, 1.0), (5, 1.0)], 0.5)]),
                (2, vec![r(-0.25), q(-0.5)], vec![r(0.25), q(0.5)]),
            ],
            vec![lin(&[(2, 1.0), (3, 1.0), (4, 1.0), (5, 1.0)], 0.0)],
        ),
    });
    out
}

/// Gauss-Legendre order per smooth piece.
pub const DEFAULT_PIECE_ORDER: usize = 10;

/// Evaluates the nine-term sum for a kernel with total index imbalance
/// `n_total`, propagation weight `weight`, and phase factor `ex(Y1..Y4)`.
pub fn nine_sum<E>(n_total: i64, weight: ZetaWeight, beta: f64, order: usize, ex: E) -> Result<Complex64>
where
    E: Fn([f64; 4]) -> Complex64,
{
    let kernel: fn(f64, f64, f64) -> Complex64 = match weight {
        ZetaWeight::Ordered => cal_g2,
        ZetaWeight::Min => cal_g3,
        w => return Err(invalid(format!("nine-term form supports Ordered and Min weights, not {w:?}"))),
    };
    let rule = gauss_legendre(order.max(2));
    let w5 = |y5: f64| -> Complex64 {
        if n_total == 0 {
            Complex64::new(y5, 0.0)
        } else {
            let nf = n_total as f64;
            Complex64::from_polar(1.0, 2.0 * PI * nf * y5) / Complex64::new(0.0, 2.0 * PI * nf)
        }
    };
    let mut total = Complex64::new(0.0, 0.0);
    for term in terms() {
        let val = match &term.args {
            ArgMap::Plain(forms) => {
                let mut f = |v: &[f64; 6]| {
                    let y = [forms[0].eval(v), forms[1].eval(v), forms[2].eval(v), forms[3].eval(v)];
                    let g = kernel(y[1] * y[1] - y[0] * y[0], y[3] * y[3] - y[2] * y[2], beta);
                    let wy5 = if term.boundary.is_none() { w5(v[5]) } else { Complex64::new(1.0, 0.0) };
                    g * ex(y) * wy5
                };
                term.nest.integrate(&rule, &mut f)
            }
            ArgMap::Edge => {
                let mut f = |v: &[f64; 6]| {
                    let s = v[2] + v[3] + v[4] + v[5];
                    let e = 0.5 - s.abs();
                    let sign = if s > 0.0 { 1.0 } else if s < 0.0 { -1.0 } else { 0.0 };
                    let g = kernel(v[2] * v[2] - e * e, v[4] * v[4] - v[3] * v[3], beta);
                    let sum = ex([e, v[2], v[3], v[4]]) + ex([-e, v[2], v[3], v[4]]);
                    g * sum * w5(v[5]) * sign
                };
                term.nest.integrate(&rule, &mut f)
            }
        };
        let scale = match term.boundary {
            Some(y) => w5(y),
            None => Complex64::new(1.0, 0.0),
        };
        total += val * scale * term.prefactor;
    }
    Ok(total)
}

/// Phase coefficients of `Ex` for the layout `(m1, m2, m3; m4, m5, m6)`.
fn ex_coefficients(m: [i64; 6]) -> [f64; 4] {
    let [_, m2, m3, m4, m5, m6] = m;
    [
        -(m5 - m6) as f64,
        (2 * m3 - m5 - m6) as f64,
        (m3 + m4 - m5 - m6) as f64,
        (2 * m2 + m3 - m4 - m5 - m6) as f64,
    ]
}

/// `A2` for the layout `(m1, m2, m3; m4, m5, m6)` from the nine-term form.
pub fn a2_nine(m: [i64; 6], beta: f64, order: usize) -> Result<Complex64> {
    let n_total = m[0] + m[1] + m[2] - m[3] - m[4] - m[5];
    let e = ex_coefficients(m);
    nine_sum(n_total, ZetaWeight::Ordered, beta, order, |y| {
        let ph: f64 = e.iter().zip(&y).map(|(a, b)| a * b).sum();
        Complex64::from_polar(1.0, 2.0 * PI * ph)
    })
}

/// `b2[k1, k2; k3, k4] = sum_r B2(k1, k2, r; r, k3, k4)` from the nine-term
/// form, with the sum over `|r| <= m_max` folded into the phase factor.
pub fn b2_nine(k: [i64; 4], m_max: usize, beta: f64, order: usize) -> Result<Complex64> {
    let [k1, k2, k3, k4] = k;
    let n_total = k1 + k2 - k3 - k4;
    let mm = m_max as i64;
    nine_sum(n_total, ZetaWeight::Min, beta, order, |y| {
        let fixed = -(k3 - k4) as f64 * y[0] - (k3 + k4) as f64 * (y[1] + y[2]) + (2 * k2 - k3 - k4) as f64 * y[3];
        let base = Complex64::from_polar(1.0, 2.0 * PI * fixed);
        let step = 4.0 * PI * (y[1] + y[2]);
        let sum: Complex64 = (-mm..=mm).map(|r| Complex64::from_polar(1.0, step * r as f64)).sum();
        base * sum
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coefficients::ZeroBeta;
    use crate::envelope::EnvelopeKind;

    #[test]
    fn zero_beta_matches_closed_form() {
        let zb = ZeroBeta::new(EnvelopeKind::Sinc);
        for m in [[0, 0, 0, 0, 0, 0], [1, 0, 0, 0, 0, 0], [1, 0, 0, 1, 0, 0], [1, -1, 0, 0, 1, 0]] {
            let v = a2_nine(m, 0.0, DEFAULT_PIECE_ORDER).unwrap();
            let exact = zb.a2(m);
            assert!((v.re - exact).abs() < 1e-8 && v.im.abs() < 1e-8, "{m:?}: {v} vs {exact}");
        }
    }

    #[test]
    fn b2_zero_beta_single_symbol() {
        let v = b2_nine([0, 0, 0, 0], 0, 0.0, DEFAULT_PIECE_ORDER).unwrap();
        assert!((v.re - 11.0 / 60.0).abs() < 1e-8 && v.im.abs() < 1e-8, "{v}");
    }
}
