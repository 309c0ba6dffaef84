//! Dense coefficient tensors for one `(M, beta)` pair.

use std::collections::HashMap;
use std::path::Path;

use num_complex::Complex64;

use super::cache::{file_name, read_tensor, write_tensor};
use super::first_order::{first_order, FirstOrderWeight};
use super::lattice::{richardson, Lattice, LatticeSpec, TripleTable, ZetaWeight};
use super::tensor4::{index_tuples, Tensor4, TensorKind, TensorMeta};
use super::zero_beta::ZeroBeta;
use crate::envelope::EnvelopeKind;
use crate::error::{invalid, Error, Result};
use crate::exec::ExecPolicy;

/// Which entries of the second-order tensors get evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Coverage {
    /// Every index tuple.
    Full,
    /// Only tuples whose upper and lower index pairs agree as multisets,
    /// which is all the crossed trace of `J_I` needs. Other entries stay zero.
    CrossedDiagonal,
}

impl Coverage {
    pub fn wants(self, s: [i64; 4]) -> bool {
        match self {
            Coverage::Full => true,
            Coverage::CrossedDiagonal => {
                (s[0] == s[2] && s[1] == s[3]) || (s[0] == s[3] && s[1] == s[2])
            }
        }
    }

    pub fn tag(self) -> &'static str {
        match self {
            Coverage::Full => "full",
            Coverage::CrossedDiagonal => "crossed-diagonal",
        }
    }
}

/// First- and second-order coefficient tensors sharing `(M, beta, envelope)`.
#[derive(Debug, Clone)]
pub struct CoefficientSet {
    pub m: usize,
    pub beta: f64,
    pub envelope: EnvelopeKind,
    pub coverage: Coverage,
    pub a1: Tensor4,
    pub b1: Tensor4,
    pub b2: Tensor4,
    pub a2_left: Tensor4,
    pub a2_pair: Tensor4,
}

impl CoefficientSet {
    pub fn tensor(&self, kind: TensorKind) -> Option<&Tensor4> {
        match kind {
            TensorKind::A1 => Some(&self.a1),
            TensorKind::B1 => Some(&self.b1),
            TensorKind::B2 => Some(&self.b2),
            TensorKind::A2Left => Some(&self.a2_left),
            TensorKind::A2Pair => Some(&self.a2_pair),
            _ => None,
        }
    }

    pub fn tensors(&self) -> [&Tensor4; 5] {
        [&self.a1, &self.b1, &self.b2, &self.a2_left, &self.a2_pair]
    }
}

fn meta(kind: TensorKind, beta: f64, envelope: EnvelopeKind, method: String, tolerance: f64) -> TensorMeta {
    TensorMeta {
        kind,
        beta,
        envelope: envelope.tag(),
        method,
        tolerance,
    }
}

/// Builds every coefficient tensor for `(M, beta)`.
///
/// `beta = 0` uses the closed forms for any envelope; `beta > 0` needs the
/// sinc envelope and runs the periodic lattice at two sizes followed by
/// Richardson extrapolation.
pub fn build_coefficients(
    m: usize,
    beta: f64,
    envelope: EnvelopeKind,
    coverage: Coverage,
    policy: ExecPolicy,
) -> Result<CoefficientSet> {
    if !beta.is_finite() || beta < 0.0 {
        return Err(invalid(format!("dispersion must be finite and non-negative, got {beta}")));
    }
    if beta == 0.0 {
        return Ok(zero_beta_set(m, envelope, coverage));
    }
    if envelope != EnvelopeKind::Sinc {
        return Err(invalid("dispersive coefficients are only available for the sinc envelope"));
    }
    let (a1, b1) = first_order_tensors(m, beta, policy);
    let second = lattice_second_order(m, beta, coverage, policy)?;
    Ok(CoefficientSet {
        m,
        beta,
        envelope,
        coverage,
        a1,
        b1,
        b2: second[2].clone(),
        a2_left: second[0].clone(),
        a2_pair: second[1].clone(),
    })
}

/// Like [`build_coefficients`] but reads and writes the five tensors under `dir`.
pub fn cached_coefficients(
    dir: &Path,
    m: usize,
    beta: f64,
    envelope: EnvelopeKind,
    coverage: Coverage,
    policy: ExecPolicy,
) -> Result<CoefficientSet> {
    let kinds = [TensorKind::A1, TensorKind::B1, TensorKind::B2, TensorKind::A2Left, TensorKind::A2Pair];
    let env = envelope.tag();
    let paths: Vec<_> = kinds
        .iter()
        .map(|&k| dir.join(file_name(k, m, beta, &env, coverage.tag())))
        .collect();
    if paths.iter().all(|p| p.exists()) {
        let mut t = Vec::with_capacity(5);
        for (p, &k) in paths.iter().zip(&kinds) {
            let v = read_tensor(p)?;
            if v.meta.kind != k || v.order() != m || v.meta.beta != beta {
                return Err(Error::CacheMismatch(format!("{} does not hold {k} at M={m}", p.display())));
            }
            t.push(v);
        }
        let mut it = t.into_iter();
        let mut next = || it.next().expect("five tensors");
        return Ok(CoefficientSet {
            m,
            beta,
            envelope,
            coverage,
            a1: next(),
            b1: next(),
            b2: next(),
            a2_left: next(),
            a2_pair: next(),
        });
    }
    let set = build_coefficients(m, beta, envelope, coverage, policy)?;
    for (p, t) in paths.iter().zip(set.tensors()) {
        write_tensor(p, t)?;
    }
    Ok(set)
}

fn zero_beta_set(m: usize, envelope: EnvelopeKind, coverage: Coverage) -> CoefficientSet {
    let z = ZeroBeta::new(envelope);
    let method = format!("zero-beta closed form ({})", coverage.tag());
    let mk = |kind: TensorKind, second: bool, f: &dyn Fn([i64; 4]) -> f64| {
        Tensor4::from_fn(m, meta(kind, 0.0, envelope, method.clone(), 0.0), |a, b, c, d| {
            let s = [a, b, c, d];
            if second && !coverage.wants(s) {
                Complex64::new(0.0, 0.0)
            } else {
                Complex64::new(f(s), 0.0)
            }
        })
    };
    CoefficientSet {
        m,
        beta: 0.0,
        envelope,
        coverage,
        a1: mk(TensorKind::A1, false, &|s| z.a1(s[0], s[1], s[2], s[3])),
        b1: mk(TensorKind::B1, false, &|s| z.b1(s[0], s[1], s[2], s[3])),
        b2: mk(TensorKind::B2, true, &|s| z.b2(s, m)),
        a2_left: mk(TensorKind::A2Left, true, &|s| z.a2_left(s, m)),
        a2_pair: mk(TensorKind::A2Pair, true, &|s| z.a2_pair(s, m)),
    }
}

/// Shift- and swap-reduced key of a first-order tuple, plus whether the
/// stored value must be conjugated.
fn first_order_key(s: [i64; 4]) -> ([i64; 4], bool) {
    let up = [s[0].min(s[1]), s[0].max(s[1])];
    let lo = [s[2].min(s[3]), s[2].max(s[3])];
    // conj(T[n,m;p,k]) = T[p,k;n,m]
    let (first, second, conj) = if up <= lo { (up, lo, false) } else { (lo, up, true) };
    let base = first[0].min(second[0]);
    ([first[0] - base, first[1] - base, second[0] - base, second[1] - base], conj)
}

fn first_order_tensors(m: usize, beta: f64, policy: ExecPolicy) -> (Tensor4, Tensor4) {
    let tuples: Vec<[i64; 4]> = index_tuples(m).collect();
    let mut keys: Vec<[i64; 4]> = tuples.iter().map(|&s| first_order_key(s).0).collect();
    keys.sort_unstable();
    keys.dedup();
    let values = policy.map_slice(&keys, |k| {
        (
            first_order(k[0], k[1], k[2], k[3], beta, FirstOrderWeight::Flat),
            first_order(k[0], k[1], k[2], k[3], beta, FirstOrderWeight::Linear),
        )
    });
    let table: HashMap<[i64; 4], (Complex64, Complex64)> = keys.into_iter().zip(values).collect();
    let pick = |s: [i64; 4], second: bool| {
        let (key, conj) = first_order_key(s);
        let pair = table[&key];
        let v = if second { pair.1 } else { pair.0 };
        if conj {
            v.conj()
        } else {
            v
        }
    };
    let method = "two-fold triangle quadrature".to_string();
    let a1 = Tensor4::from_fn(m, meta(TensorKind::A1, beta, EnvelopeKind::Sinc, method.clone(), 1e-10), |a, b, c, d| {
        pick([a, b, c, d], false)
    });
    let b1 = Tensor4::from_fn(m, meta(TensorKind::B1, beta, EnvelopeKind::Sinc, method, 1e-10), |a, b, c, d| {
        pick([a, b, c, d], true)
    });
    (a1, b1)
}

/// `[A2L, A2P, b2]` on one lattice size.
fn lattice_pass(m: usize, beta: f64, spec: LatticeSpec, coverage: Coverage, policy: ExecPolicy) -> Result<[Vec<Complex64>; 3]> {
    let lattice = Lattice::new(beta, spec, policy)?;
    let table = TripleTable::new(lattice, 2 * m);
    let ordered = table.weighted_all(ZetaWeight::Ordered, policy);
    let min = table.weighted_all(ZetaWeight::Min, policy);
    let mi = m as i64;
    let tuples: Vec<[i64; 4]> = index_tuples(m).collect();
    let rows = policy.map_slice(&tuples, |&s| {
        let zero = Complex64::new(0.0, 0.0);
        if !coverage.wants(s) {
            return [zero; 3];
        }
        let [s1, s2, s3, s4] = s;
        let mut out = [zero; 3];
        for r in -mi..=mi {
            out[0] += table.kernel(&ordered, [r, s1, s2, s3, s4, r]);
            out[1] += table.kernel(&ordered, [s1, s2, r, r, s3, s4]);
            out[2] += table.kernel(&min, [s1, s2, r, r, s3, s4]);
        }
        out
    });
    let mut cols: [Vec<Complex64>; 3] = Default::default();
    for row in rows {
        for (c, v) in cols.iter_mut().zip(row) {
            c.push(v);
        }
    }
    Ok(cols)
}

fn lattice_second_order(m: usize, beta: f64, coverage: Coverage, policy: ExecPolicy) -> Result<[Tensor4; 3]> {
    let (s1, s2) = LatticeSpec::pair_for(beta, m);
    let coarse = lattice_pass(m, beta, s1, coverage, policy)?;
    let fine = lattice_pass(m, beta, s2, coverage, policy)?;
    let method = format!(
        "lattice T={}/{} Richardson, zeta degree {} ({})",
        s1.periods,
        s2.periods,
        s1.zeta_degree,
        coverage.tag()
    );
    let kinds = [TensorKind::A2Left, TensorKind::A2Pair, TensorKind::B2];
    let mut out = Vec::with_capacity(3);
    for ((kind, c), f) in kinds.into_iter().zip(coarse).zip(fine) {
        let mut shift = 0.0f64;
        let values: Vec<Complex64> = c
            .iter()
            .zip(&f)
            .map(|(&v1, &v2)| {
                let x = richardson(s1.periods, v1, s2.periods, v2);
                shift = shift.max((x - v2).norm());
                x
            })
            .collect();
        out.push(Tensor4::from_values(m, meta(kind, beta, EnvelopeKind::Sinc, method.clone(), shift), values)?);
    }
    let mut it = out.into_iter();
    Ok([it.next().unwrap(), it.next().unwrap(), it.next().unwrap()])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coefficients::first_order::a1;

    #[test]
    fn first_order_key_reuses_symmetric_entries() {
        let (k1, c1) = first_order_key([1, 0, -1, 1]);
        let (k2, c2) = first_order_key([0, 1, 1, -1]);
        assert_eq!(k1, k2);
        assert_eq!(c1, c2);
        let (k3, c3) = first_order_key([-1, 1, 0, 1]);
        assert_eq!(k1, k3);
        assert_ne!(c1, c3);
    }

    #[test]
    fn first_order_tensor_matches_direct_entries() {
        let (t, _) = first_order_tensors(1, 1.5, ExecPolicy::Sequential);
        for s in [[1, 0, -1, 1], [-1, 1, 1, 0], [0, 0, 1, -1]] {
            let direct = a1(s[0], s[1], s[2], s[3], 1.5);
            assert!((t.get(s[0], s[1], s[2], s[3]) - direct).norm() < 1e-12);
        }
        assert!(t.symmetry_defect() < 1e-9);
    }

    #[test]
    fn zero_beta_set_is_real_and_sparse_when_asked() {
        let set = build_coefficients(1, 0.0, EnvelopeKind::Sinc, Coverage::CrossedDiagonal, ExecPolicy::Sequential).unwrap();
        assert_eq!(set.a2_pair.get(1, 0, 0, 0), Complex64::new(0.0, 0.0));
        assert!(set.a2_pair.get(1, 0, 0, 1).re > 0.0);
        assert!(set.a1.get(1, 0, 0, 0).re.abs() > 0.0);
    }
}
