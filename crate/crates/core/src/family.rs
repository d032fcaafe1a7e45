//! Indexing data of a polynomial family and of tuples `(T_{η_j}^{ρ_j(n)})_j`.
//!
//! Positions and transformation indices are 0-based throughout this crate.

use std::collections::BTreeSet;

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, Signed, Zero};
use thiserror::Error;

use crate::polyalg::{compose_affine, linear_dependence, IntPoly};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FamilyError {
    #[error("the family is empty")]
    EmptyFamily,
    #[error("polynomial at position {0} is zero")]
    ZeroPolynomial(usize),
    #[error("tuple length {got} does not match family length {expected}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("index {index} out of range for a family of length {len}")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("position {position}: {reason}")]
    DegreeMismatch { position: usize, reason: String },
    #[error("invalid class order: {0}")]
    BadClassOrder(String),
    #[error("types have different shapes ({0:?} vs {1:?})")]
    ShapeMismatch((usize, usize), (usize, usize)),
    #[error("controllability is undefined for the basic type {0:?}")]
    BasicType(Vec<usize>),
    #[error("positions {0} and {1} carry identical terms")]
    DegeneratePair(usize, usize),
}

/// The base polynomials `p_1..p_ℓ` with their leading coefficients `a_j`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BaseFamily {
    polys: Vec<IntPoly>,
    leads: Vec<BigInt>,
}

impl BaseFamily {
    pub fn new(polys: Vec<IntPoly>) -> Result<Self, FamilyError> {
        if polys.is_empty() {
            return Err(FamilyError::EmptyFamily);
        }
        let mut leads = Vec::with_capacity(polys.len());
        for (j, p) in polys.iter().enumerate() {
            leads.push(p.leading().ok_or(FamilyError::ZeroPolynomial(j))?.clone());
        }
        Ok(BaseFamily { polys, leads })
    }

    pub fn from_i64(polys: &[&[i64]]) -> Result<Self, FamilyError> {
        Self::new(polys.iter().map(|c| IntPoly::from_i64(c)).collect())
    }

    pub fn len(&self) -> usize {
        self.polys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.polys.is_empty()
    }

    pub fn polys(&self) -> &[IntPoly] {
        &self.polys
    }

    pub fn poly(&self, j: usize) -> &IntPoly {
        &self.polys[j]
    }

    /// Leading coefficient `a_j`.
    pub fn lead(&self, j: usize) -> &BigInt {
        &self.leads[j]
    }

    pub fn max_degree(&self) -> usize {
        self.polys.iter().map(IntPoly::degree).max().unwrap_or(0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IndexingData {
    pub degree: usize,
    /// Dependence classes, the first `k2` of which make up `maxdeg`.
    pub classes: Vec<Vec<usize>>,
    pub maxdeg: Vec<usize>,
    pub k1: usize,
    pub k2: usize,
    pub k3: usize,
    class_of: Vec<usize>,
}

impl IndexingData {
    pub fn class_of(&self, j: usize) -> usize {
        self.class_of[j]
    }

    pub fn in_maxdeg(&self, j: usize) -> bool {
        self.class_of[j] < self.k2
    }
}

fn dependence_classes(base: &BaseFamily) -> Vec<Vec<usize>> {
    let mut classes: Vec<Vec<usize>> = Vec::new();
    for j in 0..base.len() {
        let found = classes.iter_mut().find(|c| {
            linear_dependence(base.poly(c[0]), base.poly(j))
                .expect("family polynomials are nonzero")
                .is_some()
        });
        match found {
            Some(c) => c.push(j),
            None => classes.push(vec![j]),
        }
    }
    classes
}

fn finish_indexing(base: &BaseFamily, classes: Vec<Vec<usize>>) -> IndexingData {
    let degree = base.max_degree();
    let maxdeg: Vec<usize> = (0..base.len())
        .filter(|&j| base.poly(j).degree() == degree)
        .collect();
    let k2 = classes
        .iter()
        .filter(|c| base.poly(c[0]).degree() == degree)
        .count();
    let mut class_of = vec![0; base.len()];
    for (t, c) in classes.iter().enumerate() {
        for &j in c {
            class_of[j] = t;
        }
    }
    IndexingData {
        degree,
        k1: classes.len(),
        k2,
        k3: maxdeg.len(),
        classes,
        maxdeg,
        class_of,
    }
}

/// Dependence partition with the default order: maximal-degree classes first,
/// then the rest, each group ordered by smallest member.
pub fn indexing_data(base: &BaseFamily) -> IndexingData {
    let d = base.max_degree();
    let mut classes = dependence_classes(base);
    // Classes are discovered in order of smallest member already.
    classes.sort_by_key(|c| (base.poly(c[0]).degree() != d, c[0]));
    finish_indexing(base, classes)
}

/// Indexing data with an explicit class order; the order must list exactly the
/// dependence classes, maximal-degree classes first.
pub fn indexing_data_with_order(
    base: &BaseFamily,
    order: &[Vec<usize>],
) -> Result<IndexingData, FamilyError> {
    let mut expected: Vec<Vec<usize>> = dependence_classes(base);
    expected.sort();
    let mut given: Vec<Vec<usize>> = order
        .iter()
        .map(|c| {
            let mut c = c.clone();
            c.sort_unstable();
            c
        })
        .collect();
    let ordered = given.clone();
    given.sort();
    if given != expected {
        return Err(FamilyError::BadClassOrder(format!(
            "{order:?} is not the dependence partition {expected:?}"
        )));
    }
    let d = base.max_degree();
    let flags: Vec<bool> = ordered.iter().map(|c| base.poly(c[0]).degree() == d).collect();
    if flags.windows(2).any(|w| !w[0] && w[1]) {
        return Err(FamilyError::BadClassOrder(
            "maximal-degree classes must come first".into(),
        ));
    }
    Ok(finish_indexing(base, ordered))
}

/// An affine iterate `offset + poly(n)`; polynomials with a constant term arise
/// once dual sequences are reparametrised.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ShiftedPoly {
    pub offset: BigInt,
    pub poly: IntPoly,
}

impl ShiftedPoly {
    pub fn from_poly(poly: IntPoly) -> Self {
        ShiftedPoly {
            offset: BigInt::zero(),
            poly,
        }
    }

    /// `n ↦ self(λn + r)`.
    pub fn reparametrise(&self, lambda: &BigInt, r: &BigInt) -> Self {
        ShiftedPoly {
            offset: &self.offset + self.poly.eval(r),
            poly: compose_affine(&self.poly, lambda, r),
        }
    }

    pub fn eval(&self, n: &BigInt) -> BigInt {
        &self.offset + self.poly.eval(n)
    }
}

/// A dual sequence attached to a tuple: `T_transform^{iterate(n)} D_{level,T_transform}(g)`.
/// Only the index of the generating observable is stored here.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DualSlot {
    pub transform: usize,
    pub level: usize,
    pub generator: usize,
    pub iterate: ShiftedPoly,
}

/// The tuple `(T_{η_j}^{ρ_j(n)})_j` tied to its base family.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TupleState {
    base: BaseFamily,
    eta: Vec<usize>,
    rhos: Vec<IntPoly>,
    duals: Vec<DualSlot>,
}

impl TupleState {
    /// Validates lengths, ranges and `deg ρ_j = deg p_j = deg p_{η_j}`.
    pub fn new(base: BaseFamily, eta: Vec<usize>, rhos: Vec<IntPoly>) -> Result<Self, FamilyError> {
        let l = base.len();
        for got in [eta.len(), rhos.len()] {
            if got != l {
                return Err(FamilyError::LengthMismatch { expected: l, got });
            }
        }
        for (j, (&e, rho)) in eta.iter().zip(&rhos).enumerate() {
            if e >= l {
                return Err(FamilyError::IndexOutOfRange { index: e, len: l });
            }
            let d = base.poly(j).degree();
            if rho.degree() != d {
                return Err(FamilyError::DegreeMismatch {
                    position: j,
                    reason: format!("deg ρ = {} but deg p = {d}", rho.degree()),
                });
            }
            if base.poly(e).degree() != d {
                return Err(FamilyError::DegreeMismatch {
                    position: j,
                    reason: format!("transformation {e} belongs to a polynomial of another degree"),
                });
            }
        }
        Ok(TupleState {
            base,
            eta,
            rhos,
            duals: Vec::new(),
        })
    }

    /// The tuple `(T_j^{p_j(n)})_j`.
    pub fn identity(base: &BaseFamily) -> Self {
        TupleState {
            eta: (0..base.len()).collect(),
            rhos: base.polys().to_vec(),
            base: base.clone(),
            duals: Vec::new(),
        }
    }

    pub fn with_duals(mut self, duals: Vec<DualSlot>) -> Self {
        self.duals = duals;
        self
    }

    pub fn base(&self) -> &BaseFamily {
        &self.base
    }

    pub fn eta(&self) -> &[usize] {
        &self.eta
    }

    pub fn rhos(&self) -> &[IntPoly] {
        &self.rhos
    }

    pub fn rho(&self, j: usize) -> &IntPoly {
        &self.rhos[j]
    }

    pub fn duals(&self) -> &[DualSlot] {
        &self.duals
    }

    pub fn len(&self) -> usize {
        self.eta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eta.is_empty()
    }

    /// Leading coefficient `b_j` of `ρ_j`.
    pub fn b(&self, j: usize) -> &BigInt {
        self.rhos[j].leading().expect("tuple polynomials are nonzero")
    }

    pub(crate) fn replaced(&self, eta: Vec<usize>, rhos: Vec<IntPoly>, duals: Vec<DualSlot>) -> Self {
        TupleState {
            base: self.base.clone(),
            eta,
            rhos,
            duals,
        }
    }
}

/// Per-class counts over maximal-degree positions; `|w| = K₃`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TypeVec {
    pub w: Vec<usize>,
}

impl TypeVec {
    pub fn new(w: Vec<usize>) -> Self {
        TypeVec { w }
    }

    pub fn k2(&self) -> usize {
        self.w.len()
    }

    pub fn k3(&self) -> usize {
        self.w.iter().sum()
    }

    /// Last class with nonzero count.
    pub fn t_w(&self) -> Option<usize> {
        self.w.iter().rposition(|&c| c > 0)
    }

    pub fn is_basic(&self) -> bool {
        self.w.iter().skip(1).all(|&c| c == 0)
    }
}

pub fn tuple_type(t: &TupleState, idx: &IndexingData) -> TypeVec {
    let mut w = vec![0; idx.k2];
    for &j in &idx.maxdeg {
        let c = idx.class_of(t.eta()[j]);
        if c < idx.k2 {
            w[c] += 1;
        }
    }
    TypeVec { w }
}

/// Strict type order; the first differing coordinate `t` decides, with
/// `w1 < w2` iff `w1_t = 0 < w2_t` or `w1_t > w2_t > 0`.
pub fn type_less(w1: &TypeVec, w2: &TypeVec) -> Result<bool, FamilyError> {
    if w1.k2() != w2.k2() || w1.k3() != w2.k3() {
        return Err(FamilyError::ShapeMismatch(
            (w1.k2(), w1.k3()),
            (w2.k2(), w2.k3()),
        ));
    }
    let Some(t) = (0..w1.k2()).find(|&t| w1.w[t] != w2.w[t]) else {
        return Ok(false);
    };
    let (a, b) = (w1.w[t], w2.w[t]);
    Ok((a == 0 && b > 0) || (a > b && b > 0))
}

/// Positions `m` in the last nonzero class whose term `(η_m, ρ_m)` is not repeated.
pub fn controllable_indices(t: &TupleState, idx: &IndexingData) -> Result<Vec<usize>, FamilyError> {
    let w = tuple_type(t, idx);
    if w.is_basic() {
        return Err(FamilyError::BasicType(w.w));
    }
    let tw = w.t_w().expect("non-basic type has a nonzero class");
    let eta = t.eta();
    Ok((0..t.len())
        .filter(|&m| idx.class_of(eta[m]) == tw)
        .filter(|&m| (0..t.len()).all(|i| i == m || eta[i] != eta[m] || t.rho(i) != t.rho(m)))
        .collect())
}

/// `I(T_a^{β_a} T_b^{-β_b}) = I(T_a) ∩ I(T_b)` for transformations `a < b`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ErgodicityObligation {
    pub pair: (usize, usize),
    pub exps: (BigInt, BigInt),
    pub vector: Vec<BigInt>,
}

/// Sign- and gcd-normalised form used to compare composition vectors.
pub fn normalise_vector(v: &[BigInt]) -> Vec<BigInt> {
    let g = v.iter().fold(BigInt::zero(), |g, x| g.gcd(x));
    if g.is_zero() {
        return v.to_vec();
    }
    let sign = match v.iter().find(|x| !x.is_zero()) {
        Some(x) if x.is_negative() => -BigInt::one(),
        _ => BigInt::one(),
    };
    v.iter().map(|x| x / &g * &sign).collect()
}

pub fn goodness_obligations(t: &TupleState, idx: &IndexingData) -> Vec<ErgodicityObligation> {
    let l = t.len();
    let eta = t.eta();
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for j1 in 0..l {
        for j2 in 0..l {
            let (e1, e2) = (eta[j1], eta[j2]);
            if e1 >= e2 || idx.class_of(e1) != idx.class_of(e2) {
                continue;
            }
            let (b1, b2) = (t.b(j1), t.b(j2));
            let g = b1.gcd(b2);
            let (beta1, beta2) = (b1 / &g, b2 / &g);
            let mut vector = vec![BigInt::zero(); l];
            vector[e1] = beta1.clone();
            vector[e2] = -beta2.clone();
            if seen.insert(normalise_vector(&vector)) {
                out.push(ErgodicityObligation {
                    pair: (e1, e2),
                    exps: (beta1, beta2),
                    vector,
                });
            }
        }
    }
    out
}

/// Candidate PET vectors `c_m e_{η_m} − c_j e_{η_j}` read at degree
/// `deg(ρ_m e_{η_m} − ρ_j e_{η_j})`, for `j` ranging over the other positions
/// and the zero term.
pub fn pet_candidate_vectors(t: &TupleState, m: usize) -> Result<Vec<Vec<BigInt>>, FamilyError> {
    let l = t.len();
    if m >= l {
        return Err(FamilyError::IndexOutOfRange { index: m, len: l });
    }
    let eta = t.eta();
    let rm = t.rho(m);
    let mut set = BTreeSet::new();
    let mut push = |v: Vec<BigInt>| {
        if v.iter().any(|x| !x.is_zero()) {
            set.insert(v);
        }
    };
    let mut zero_term = vec![BigInt::zero(); l];
    zero_term[eta[m]] = t.b(m).clone();
    push(zero_term);
    for j in (0..l).filter(|&j| j != m) {
        let rj = t.rho(j);
        let d = if eta[j] == eta[m] {
            let diff = rm.sub(rj);
            if diff.is_zero() {
                return Err(FamilyError::DegeneratePair(m, j));
            }
            diff.degree()
        } else {
            rm.degree().max(rj.degree())
        };
        let mut v = vec![BigInt::zero(); l];
        v[eta[m]] += rm.coeff(d);
        v[eta[j]] -= rj.coeff(d);
        push(v);
    }
    Ok(set.into_iter().collect())
}
