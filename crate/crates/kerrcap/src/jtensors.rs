//! Information tensors assembled from the coefficient tensors.
//!
//! `J` comes from the Jacobian of the noiseless map, `J_Lambda` from the
//! normalisation of the conditional density, and `J_I = J + J_Lambda`
//! controls the second-order correction to the mutual information.

use num_complex::Complex64;

use crate::coefficients::{build_coefficients, CoefficientSet, Coverage, Tensor4, TensorKind, TensorMeta};
use crate::envelope::EnvelopeKind;
use crate::error::{invalid, Result};
use crate::exec::ExecPolicy;

/// `J`, `J_Lambda`, `J_I` and the crossed trace `J_Sigma` for one `(M, beta)`.
#[derive(Debug, Clone)]
pub struct JTensorSet {
    pub m: usize,
    pub beta: f64,
    pub j: Tensor4,
    pub j_lambda: Tensor4,
    pub j_info: Tensor4,
    pub j_sigma: f64,
}

fn check_shared(set: &CoefficientSet) -> Result<()> {
    for t in set.tensors() {
        if t.order() != set.m || t.meta.beta != set.beta {
            return Err(crate::error::Error::CacheMismatch(format!(
                "{} tensor has M={} beta={}, set has M={} beta={}",
                t.meta.kind,
                t.order(),
                t.meta.beta,
                set.m,
                set.beta
            )));
        }
    }
    Ok(())
}

fn meta_for(kind: TensorKind, set: &CoefficientSet) -> TensorMeta {
    let tol = set.tensors().iter().map(|t| t.meta.tolerance).fold(0.0, f64::max);
    TensorMeta {
        kind,
        beta: set.beta,
        envelope: set.envelope.tag(),
        method: format!("assembled ({})", set.coverage.tag()),
        tolerance: tol,
    }
}

/// Jacobian tensor `J`.
pub fn build_j(set: &CoefficientSet, policy: ExecPolicy) -> Result<Tensor4> {
    check_shared(set)?;
    let m = set.m as i64;
    let a = &set.a1;
    let (left, pair) = (&set.a2_left, &set.a2_pair);
    let second = |s: [i64; 4]| {
        let [s1, s2, s3, s4] = s;
        pair.get(s1, s2, s3, s4)
            - left.get(s1, s2, s3, s4)
            - left.get(s2, s1, s3, s4)
            - left.get(s1, s2, s4, s3)
            - left.get(s2, s1, s4, s3)
    };
    let tuples: Vec<[i64; 4]> = crate::coefficients::index_tuples(set.m).collect();
    let values = policy.map_slice(&tuples, |&s| {
        if !set.coverage.wants(s) {
            return Complex64::new(0.0, 0.0);
        }
        let [s1, s2, s3, s4] = s;
        let mut bilinear = Complex64::new(0.0, 0.0);
        for r in -m..=m {
            for q in -m..=m {
                bilinear += 2.0 * a.get(q, s1, s3, r) * a.get(r, s2, s4, q)
                    + 2.0 * a.get(q, s2, s3, r) * a.get(r, s1, s4, q)
                    - a.get(s1, s2, r, q) * a.get(r, q, s3, s4);
            }
        }
        bilinear + second(s) + second([s3, s4, s1, s2]).conj()
    });
    Tensor4::from_values(set.m, meta_for(TensorKind::J, set), values)
}

/// Normalisation tensor `J_Lambda = 2 b1 b1 - 2 b2`.
pub fn build_j_lambda(set: &CoefficientSet, policy: ExecPolicy) -> Result<Tensor4> {
    check_shared(set)?;
    let m = set.m as i64;
    let b1 = &set.b1;
    let tuples: Vec<[i64; 4]> = crate::coefficients::index_tuples(set.m).collect();
    let values = policy.map_slice(&tuples, |&s| {
        if !set.coverage.wants(s) {
            return Complex64::new(0.0, 0.0);
        }
        let [s1, s2, s3, s4] = s;
        let mut acc = Complex64::new(0.0, 0.0);
        for r in -m..=m {
            for q in -m..=m {
                acc += b1.get(s1, s2, r, q) * b1.get(q, r, s3, s4);
            }
        }
        2.0 * acc - 2.0 * set.b2.get(s1, s2, s3, s4)
    });
    Tensor4::from_values(set.m, meta_for(TensorKind::JLambda, set), values)
}

/// `(sum_{r,s} J_I[r,s;r,s] + J_I[r,s;s,r]) / (2M + 1)`; the real part, since
/// the imaginary part cancels between conjugate entries.
pub fn j_sigma(j_info: &Tensor4) -> f64 {
    let m = j_info.order() as i64;
    let mut acc = 0.0;
    for r in -m..=m {
        for s in -m..=m {
            acc += (j_info.get(r, s, r, s) + j_info.get(r, s, s, r)).re;
        }
    }
    acc / (2 * m + 1) as f64
}

/// Assembles all information tensors from a coefficient set.
pub fn build_jtensors(set: &CoefficientSet, policy: ExecPolicy) -> Result<JTensorSet> {
    let j = build_j(set, policy)?;
    let j_lambda = build_j_lambda(set, policy)?;
    let values = j.values().iter().zip(j_lambda.values()).map(|(a, b)| a + b).collect();
    let j_info = Tensor4::from_values(set.m, meta_for(TensorKind::JInfo, set), values)?;
    let j_sigma = j_sigma(&j_info);
    Ok(JTensorSet {
        m: set.m,
        beta: set.beta,
        j,
        j_lambda,
        j_info,
        j_sigma,
    })
}

/// `J_Sigma` from only the crossed-diagonal coefficient entries.
pub fn j_sigma_contracted(beta: f64, m: usize, envelope: EnvelopeKind, policy: ExecPolicy) -> Result<f64> {
    let set = build_coefficients(m, beta, envelope, Coverage::CrossedDiagonal, policy)?;
    Ok(build_jtensors(&set, policy)?.j_sigma)
}

/// Average of `T` over the swaps `s1 <-> s2` and `s3 <-> s4`.
pub fn symmetrized(t: &Tensor4) -> Tensor4 {
    let mut meta = t.meta.clone();
    if !meta.method.ends_with(", symmetrized") {
        meta.method.push_str(", symmetrized");
    }
    Tensor4::from_fn(t.order(), meta, |a, b, c, d| {
        (t.get(a, b, c, d) + t.get(b, a, c, d) + t.get(a, b, d, c) + t.get(b, a, d, c)) * 0.25
    })
}

/// `sum T[s1,s2;s3,s4] C_s1 C_s2 conj(C_s3) conj(C_s4)`.
pub fn contract_quartic(t: &Tensor4, c: &[Complex64]) -> Result<Complex64> {
    let m = t.order() as i64;
    if c.len() != t.dim() {
        return Err(invalid(format!("sequence length {} does not match M={m}", c.len())));
    }
    let at = |k: i64| c[(k + m) as usize];
    let mut acc = Complex64::new(0.0, 0.0);
    for s1 in -m..=m {
        for s2 in -m..=m {
            let up = at(s1) * at(s2);
            for s3 in -m..=m {
                for s4 in -m..=m {
                    acc += t.get(s1, s2, s3, s4) * up * (at(s3) * at(s4)).conj();
                }
            }
        }
    }
    Ok(acc)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn zero_set(m: usize, env: EnvelopeKind) -> CoefficientSet {
        build_coefficients(m, 0.0, env, Coverage::Full, ExecPolicy::Sequential).unwrap()
    }

    #[test]
    fn single_symbol_values() {
        let set = zero_set(0, EnvelopeKind::Sinc);
        let jt = build_jtensors(&set, ExecPolicy::Sequential).unwrap();
        // a1 = 2/3, A2 = 11/40, b1 = 1/3, b2 = 11/60
        assert!((jt.j.get(0, 0, 0, 0).re + 19.0 / 60.0).abs() < 1e-9);
        assert!((jt.j_lambda.get(0, 0, 0, 0).re + 13.0 / 90.0).abs() < 1e-9);
        assert!((jt.j_sigma + 83.0 / 90.0).abs() < 1e-9);
    }

    #[test]
    fn rect_gives_minus_one_third() {
        let set = zero_set(2, EnvelopeKind::Rect);
        let jt = build_jtensors(&set, ExecPolicy::Sequential).unwrap();
        assert!((jt.j_sigma + 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn symmetrize_is_idempotent() {
        let set = zero_set(1, EnvelopeKind::Sinc);
        let jt = build_jtensors(&set, ExecPolicy::Sequential).unwrap();
        let once = symmetrized(&jt.j_info);
        let twice = symmetrized(&once);
        assert!(once.max_abs_diff(&twice) < 1e-15);
        assert!(once.max_abs_diff(&jt.j_info) < 1e-12);
    }

    #[test]
    fn contraction_of_j_info_is_real() {
        let set = zero_set(1, EnvelopeKind::Sinc);
        let jt = build_jtensors(&set, ExecPolicy::Sequential).unwrap();
        let c = [Complex64::new(0.3, -1.1), Complex64::new(-0.7, 0.2), Complex64::new(1.4, 0.5)];
        let v = contract_quartic(&jt.j_info, &c).unwrap();
        assert!(v.im.abs() < 1e-9 * v.norm().max(1.0));
    }
}
