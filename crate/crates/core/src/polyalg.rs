//! Integer polynomials with zero constant term.
//!
//! `IntPoly` stores `c_1..c_D` where `coeffs[k]` is the coefficient of `n^{k+1}`.
//! Invariant: no trailing zeros, so the zero polynomial is the empty vector.

use std::fmt;

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, Signed, ToPrimitive, Zero};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PolyError {
    #[error("scaling by {num}/{den} leaves a non-integral coefficient")]
    NonIntegralScale { num: BigInt, den: BigInt },
    #[error("operation undefined on the zero polynomial")]
    ZeroPolynomial,
}

#[derive(Clone, PartialEq, Eq, Hash, Default)]
pub struct IntPoly {
    coeffs: Vec<BigInt>,
}

impl IntPoly {
    pub fn new(mut coeffs: Vec<BigInt>) -> Self {
        while coeffs.last().is_some_and(Zero::is_zero) {
            coeffs.pop();
        }
        IntPoly { coeffs }
    }

    /// `from_i64(&[c1, c2])` is `c1 n + c2 n^2`.
    pub fn from_i64(coeffs: &[i64]) -> Self {
        Self::new(coeffs.iter().map(|&c| BigInt::from(c)).collect())
    }

    pub fn zero() -> Self {
        IntPoly { coeffs: Vec::new() }
    }

    /// The monomial `n^d` (zero for `d = 0`).
    pub fn monomial(d: usize) -> Self {
        if d == 0 {
            return Self::zero();
        }
        let mut coeffs = vec![BigInt::zero(); d];
        coeffs[d - 1] = BigInt::one();
        IntPoly { coeffs }
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    /// Degree, with 0 for the zero polynomial.
    pub fn degree(&self) -> usize {
        self.coeffs.len()
    }

    pub fn leading(&self) -> Option<&BigInt> {
        self.coeffs.last()
    }

    /// Coefficients `c_1..c_D`.
    pub fn coeffs(&self) -> &[BigInt] {
        &self.coeffs
    }

    /// Coefficient of `n^k`; zero outside `1..=degree`.
    pub fn coeff(&self, k: usize) -> BigInt {
        if k == 0 || k > self.coeffs.len() {
            BigInt::zero()
        } else {
            self.coeffs[k - 1].clone()
        }
    }

    pub fn eval(&self, n: &BigInt) -> BigInt {
        let mut acc = BigInt::zero();
        for c in self.coeffs.iter().rev() {
            acc = (acc + c) * n;
        }
        acc
    }

    /// Coefficients reduced into `0..m`, for repeated modular evaluation.
    pub fn residues(&self, m: u64) -> Vec<u64> {
        let mb = BigInt::from(m);
        self.coeffs
            .iter()
            .map(|c| c.mod_floor(&mb).to_u64().expect("residue fits u64"))
            .collect()
    }

    pub fn sub(&self, other: &IntPoly) -> IntPoly {
        let len = self.coeffs.len().max(other.coeffs.len());
        let v = (1..=len).map(|k| self.coeff(k) - other.coeff(k)).collect();
        IntPoly::new(v)
    }

    pub fn scalar_mul(&self, k: &BigInt) -> IntPoly {
        IntPoly::new(self.coeffs.iter().map(|c| c * k).collect())
    }
}

/// Evaluates a polynomial given by `residues(m)` at `n`, modulo `m`.
pub fn eval_residues(res: &[u64], n: u64, m: u64) -> u64 {
    if m == 1 {
        return 0;
    }
    let m128 = m as u128;
    let n128 = (n % m) as u128;
    let mut acc: u128 = 0;
    for &c in res.iter().rev() {
        acc = (acc + c as u128) % m128 * n128 % m128;
    }
    acc as u64
}

impl fmt::Debug for IntPoly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "IntPoly({self})")
    }
}

impl fmt::Display for IntPoly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_zero() {
            return write!(f, "0");
        }
        let mut first = true;
        for k in (1..=self.degree()).rev() {
            let c = &self.coeffs[k - 1];
            if c.is_zero() {
                continue;
            }
            let mag = c.abs();
            if c.is_negative() {
                write!(f, "-")?;
            } else if !first {
                write!(f, "+")?;
            }
            if !mag.is_one() {
                write!(f, "{mag}")?;
            }
            match k {
                1 => write!(f, "n")?,
                _ => write!(f, "n^{k}")?,
            }
            first = false;
        }
        Ok(())
    }
}

/// `p(λn + r) − p(r)`.
pub fn compose_affine(p: &IntPoly, lambda: &BigInt, r: &BigInt) -> IntPoly {
    // Horner over full coefficient vectors (index = degree, constant included).
    let mut acc: Vec<BigInt> = Vec::new();
    for c in p.coeffs.iter().rev() {
        // acc = (acc + c) * (λn + r)
        if acc.is_empty() {
            acc.push(BigInt::zero());
        }
        acc[0] += c;
        let mut next = vec![BigInt::zero(); acc.len() + 1];
        for (k, a) in acc.iter().enumerate() {
            next[k] += a * r;
            next[k + 1] += a * lambda;
        }
        acc = next;
    }
    if acc.is_empty() {
        return IntPoly::zero();
    }
    acc.remove(0);
    IntPoly::new(acc)
}

/// `(num/den)·p`, provided every scaled coefficient is an integer.
pub fn scale_exact(p: &IntPoly, num: &BigInt, den: &BigInt) -> Result<IntPoly, PolyError> {
    assert!(!num.is_zero() && !den.is_zero(), "scale factors must be nonzero");
    let mut out = Vec::with_capacity(p.coeffs.len());
    for c in &p.coeffs {
        let (q, rem) = (c * num).div_rem(den);
        if !rem.is_zero() {
            return Err(PolyError::NonIntegralScale {
                num: num.clone(),
                den: den.clone(),
            });
        }
        out.push(q);
    }
    Ok(IntPoly::new(out))
}

/// Coprime `(c_p, c_q)` with `c_p > 0` and `p/c_p = q/c_q`, if `p` and `q` are proportional.
pub fn linear_dependence(p: &IntPoly, q: &IntPoly) -> Result<Option<(BigInt, BigInt)>, PolyError> {
    let (lp, lq) = match (p.leading(), q.leading()) {
        (Some(a), Some(b)) => (a, b),
        _ => return Err(PolyError::ZeroPolynomial),
    };
    if p.degree() != q.degree() {
        return Ok(None);
    }
    let g = lp.gcd(lq);
    let (mut cp, mut cq) = (lp / &g, lq / &g);
    if cp.is_negative() {
        cp = -cp;
        cq = -cq;
    }
    let proportional = p
        .coeffs
        .iter()
        .zip(&q.coeffs)
        .all(|(a, b)| &cq * a == &cp * b);
    Ok(proportional.then_some((cp, cq)))
}

/// Smallest `λ ≥ 1` with `(λ/b)·p` integral, `b` the leading coefficient.
pub fn lambda_divisor(p: &IntPoly) -> Result<BigInt, PolyError> {
    let b = p.leading().ok_or(PolyError::ZeroPolynomial)?.abs();
    Ok(p
        .coeffs
        .iter()
        .fold(BigInt::one(), |acc, c| acc.lcm(&(&b / b.gcd(c)))))
}
