use crate::error::{invalid, Error, Result};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

/// Symmetry class audited on a four-index tensor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SymmetryClass {
    A1Like,
    B2Like,
    JLike,
    None,
}

/// Which coefficient family a tensor holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TensorKind {
    A1,
    B1,
    B2,
    A2Left,
    A2Pair,
    J,
    JLambda,
    JInfo,
}

impl TensorKind {
    pub fn symmetry(self) -> SymmetryClass {
        match self {
            TensorKind::A1 | TensorKind::B1 => SymmetryClass::A1Like,
            TensorKind::B2 => SymmetryClass::B2Like,
            TensorKind::J | TensorKind::JLambda | TensorKind::JInfo => SymmetryClass::JLike,
            TensorKind::A2Left | TensorKind::A2Pair => SymmetryClass::None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            TensorKind::A1 => "a1",
            TensorKind::B1 => "b1",
            TensorKind::B2 => "b2",
            TensorKind::A2Left => "A2L",
            TensorKind::A2Pair => "A2P",
            TensorKind::J => "J",
            TensorKind::JLambda => "JL",
            TensorKind::JInfo => "JI",
        }
    }
}

impl fmt::Display for TensorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TensorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "a1" => TensorKind::A1,
            "b1" => TensorKind::B1,
            "b2" => TensorKind::B2,
            "A2L" => TensorKind::A2Left,
            "A2P" => TensorKind::A2Pair,
            "J" => TensorKind::J,
            "JL" => TensorKind::JLambda,
            "JI" => TensorKind::JInfo,
            _ => return Err(invalid(format!("unknown tensor kind '{s}'"))),
        })
    }
}

/// Provenance recorded with every tensor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorMeta {
    pub kind: TensorKind,
    pub beta: f64,
    pub envelope: String,
    pub method: String,
    pub tolerance: f64,
}

/// Dense complex tensor over `(s1, s2, s3, s4)` in `[-M, M]^4`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor4 {
    m: usize,
    values: Vec<Complex64>,
    pub meta: TensorMeta,
}

impl Tensor4 {
    pub fn zeros(m: usize, meta: TensorMeta) -> Tensor4 {
        let d = 2 * m + 1;
        Tensor4 {
            m,
            values: vec![Complex64::new(0.0, 0.0); d * d * d * d],
            meta,
        }
    }

    /// Fills every entry from `f(s1, s2, s3, s4)`.
    pub fn from_fn<F: FnMut(i64, i64, i64, i64) -> Complex64>(
        m: usize,
        meta: TensorMeta,
        mut f: F,
    ) -> Tensor4 {
        let mut t = Tensor4::zeros(m, meta);
        for (i, s) in index_tuples(m).enumerate() {
            t.values[i] = f(s[0], s[1], s[2], s[3]);
        }
        t
    }

    pub fn from_values(m: usize, meta: TensorMeta, values: Vec<Complex64>) -> Result<Tensor4> {
        let d = 2 * m + 1;
        if values.len() != d.pow(4) {
            return Err(invalid(format!(
                "expected {} values for M={m}, got {}",
                d.pow(4),
                values.len()
            )));
        }
        Ok(Tensor4 { m, values, meta })
    }

    pub fn order(&self) -> usize {
        self.m
    }

    pub fn dim(&self) -> usize {
        2 * self.m + 1
    }

    pub fn symmetry(&self) -> SymmetryClass {
        self.meta.kind.symmetry()
    }

    fn offset(&self, s1: i64, s2: i64, s3: i64, s4: i64) -> usize {
        let m = self.m as i64;
        let d = self.dim();
        debug_assert!([s1, s2, s3, s4].iter().all(|s| s.abs() <= m));
        (((s1 + m) as usize * d + (s2 + m) as usize) * d + (s3 + m) as usize) * d + (s4 + m) as usize
    }

    pub fn get(&self, s1: i64, s2: i64, s3: i64, s4: i64) -> Complex64 {
        self.values[self.offset(s1, s2, s3, s4)]
    }

    pub fn set(&mut self, s1: i64, s2: i64, s3: i64, s4: i64, v: Complex64) {
        let o = self.offset(s1, s2, s3, s4);
        self.values[o] = v;
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Complex64] {
        &mut self.values
    }

    /// Largest violation of the symmetries implied by the tensor's class.
    pub fn symmetry_defect(&self) -> f64 {
        let m = self.m as i64;
        let mut worst: f64 = 0.0;
        for [a, b, c, d] in index_tuples(self.m) {
            let v = self.get(a, b, c, d);
            let mut check = |w: Complex64| worst = worst.max((v - w).norm());
            match self.symmetry() {
                SymmetryClass::A1Like | SymmetryClass::JLike => {
                    check(self.get(b, a, c, d));
                    check(self.get(a, b, d, c));
                    check(self.get(c, d, a, b).conj());
                    if self.symmetry() == SymmetryClass::A1Like {
                        let shifted = [a + 1, b + 1, c + 1, d + 1];
                        if shifted.iter().all(|s| s.abs() <= m) {
                            check(self.get(a + 1, b + 1, c + 1, d + 1));
                        }
                    }
                }
                SymmetryClass::B2Like => {
                    check(self.get(b, a, c, d));
                    check(self.get(a, b, d, c));
                    check(self.get(c, d, a, b).conj());
                }
                SymmetryClass::None => {}
            }
        }
        worst
    }

    /// `sum_{r,s} T[r,s;r,s]`.
    pub fn crossed_trace(&self) -> Complex64 {
        let m = self.m as i64;
        let mut s = Complex64::new(0.0, 0.0);
        for r in -m..=m {
            for q in -m..=m {
                s += self.get(r, q, r, q);
            }
        }
        s
    }

    pub fn max_abs_diff(&self, other: &Tensor4) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }
}

/// All `(s1, s2, s3, s4)` in `[-M, M]^4` in row-major order.
pub fn index_tuples(m: usize) -> impl Iterator<Item = [i64; 4]> {
    let mi = m as i64;
    let d = 2 * m + 1;
    (0..d.pow(4)).map(move |i| {
        let s4 = (i % d) as i64 - mi;
        let s3 = ((i / d) % d) as i64 - mi;
        let s2 = ((i / d / d) % d) as i64 - mi;
        let s1 = (i / d / d / d) as i64 - mi;
        [s1, s2, s3, s4]
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn meta(kind: TensorKind) -> TensorMeta {
        TensorMeta {
            kind,
            beta: 0.0,
            envelope: "sinc".into(),
            method: "test".into(),
            tolerance: 0.0,
        }
    }

    #[test]
    fn indexing_round_trip() {
        let t = Tensor4::from_fn(2, meta(TensorKind::A2Pair), |a, b, c, d| {
            Complex64::new((a * 1000 + b * 100 + c * 10 + d) as f64, 0.0)
        });
        assert_eq!(t.get(-2, 1, 0, 2).re, (-2000 + 100 + 2) as f64);
        let tuples: Vec<_> = index_tuples(2).collect();
        assert_eq!(tuples.len(), 625);
        assert_eq!(tuples[0], [-2, -2, -2, -2]);
        assert_eq!(tuples[624], [2, 2, 2, 2]);
    }

    #[test]
    fn symmetry_audit_detects_violation() {
        let mut t = Tensor4::from_fn(1, meta(TensorKind::J), |_, _, _, _| Complex64::new(1.0, 0.0));
        assert_eq!(t.symmetry_defect(), 0.0);
        t.set(1, 0, 0, 0, Complex64::new(2.0, 0.0));
        assert!(t.symmetry_defect() > 0.5);
    }
}
