//! Finite measure-preserving systems: weighted point sets with commuting
//! permutations.
//!
//! Convention: `(T f)(x) = f(T x)`. Translation systems live on
//! `ℤ_{q_1} × … × ℤ_{q_k}` with points encoded row-major (last coordinate fastest).

use std::f64::consts::TAU;

use num_bigint::BigInt;
use num_complex::Complex64;
use num_integer::Integer;
use num_rational::Ratio;
use num_traits::{ToPrimitive, Zero};
use thiserror::Error;

use crate::family::ErgodicityObligation;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FinsysError {
    #[error("moduli must be positive and nonempty")]
    EmptyModulus,
    #[error("shift {index} has {got} coordinates, expected {expected}")]
    DimensionMismatch { index: usize, expected: usize, got: usize },
    #[error("transform {0} is not a permutation of the point set")]
    NotAPermutation(usize),
    #[error("transforms {0} and {1} do not commute")]
    NotCommuting(usize, usize),
    #[error("transform {0} does not preserve the weights")]
    WeightsNotPreserved(usize),
    #[error("invalid weights: {0}")]
    BadWeights(String),
    #[error("operation needs a translation system")]
    NotTranslation,
    #[error("system has no transforms")]
    NoTransforms,
}

pub type Perm = Vec<usize>;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SystemKind {
    Translation { moduli: Vec<u64>, shifts: Vec<Vec<i64>> },
    Permutation,
}

/// Cycle decomposition of a permutation, for O(1) evaluation of powers.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PermCycles {
    cycle_of: Vec<usize>,
    pos: Vec<usize>,
    cycles: Vec<Vec<usize>>,
}

impl PermCycles {
    pub fn of(perm: &[usize]) -> Self {
        let n = perm.len();
        let mut cycle_of = vec![usize::MAX; n];
        let mut pos = vec![0; n];
        let mut cycles = Vec::new();
        for start in 0..n {
            if cycle_of[start] != usize::MAX {
                continue;
            }
            let id = cycles.len();
            let mut cyc = Vec::new();
            let mut x = start;
            while cycle_of[x] == usize::MAX {
                cycle_of[x] = id;
                pos[x] = cyc.len();
                cyc.push(x);
                x = perm[x];
            }
            cycles.push(cyc);
        }
        PermCycles {
            cycle_of,
            pos,
            cycles,
        }
    }

    pub fn order(&self) -> u64 {
        self.cycles
            .iter()
            .fold(1u64, |acc, c| acc.lcm(&(c.len() as u64)))
    }

    pub fn cycles(&self) -> &[Vec<usize>] {
        &self.cycles
    }

    /// `π^e x` for `e ≥ 0`.
    pub fn apply(&self, e: u64, x: usize) -> usize {
        let cyc = &self.cycles[self.cycle_of[x]];
        let len = cyc.len() as u64;
        cyc[((self.pos[x] as u64 + e % len) % len) as usize]
    }

    pub fn power(&self, e: u64) -> Perm {
        (0..self.cycle_of.len()).map(|x| self.apply(e, x)).collect()
    }
}

/// Order of a permutation (lcm of its cycle lengths).
pub fn perm_order(perm: &[usize]) -> u64 {
    PermCycles::of(perm).order()
}

/// `exp(2πi k/q)`.
pub fn e_frac(k: u64, q: u64) -> Complex64 {
    let k = k % q;
    Complex64::from_polar(1.0, TAU * k as f64 / q as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct FiniteSystem {
    kind: SystemKind,
    weights: Vec<f64>,
    transforms: Vec<Perm>,
    cycles: Vec<PermCycles>,
    orders: Vec<u64>,
}

fn check_perm(p: &[usize], n: usize) -> bool {
    let mut seen = vec![false; n];
    p.len() == n && p.iter().all(|&x| x < n && !std::mem::replace(&mut seen[x], true))
}

impl FiniteSystem {
    /// Uniform measure on `∏ ℤ_{q_i}` with `T_j` the translation by `shifts[j]`.
    pub fn translation(moduli: &[u64], shifts: &[Vec<i64>]) -> Result<Self, FinsysError> {
        if moduli.is_empty() || moduli.contains(&0) {
            return Err(FinsysError::EmptyModulus);
        }
        let size: u64 = moduli.iter().product();
        let n = usize::try_from(size).map_err(|_| FinsysError::EmptyModulus)?;
        let mut transforms = Vec::with_capacity(shifts.len());
        for (index, a) in shifts.iter().enumerate() {
            if a.len() != moduli.len() {
                return Err(FinsysError::DimensionMismatch {
                    index,
                    expected: moduli.len(),
                    got: a.len(),
                });
            }
            let perm = (0..n)
                .map(|x| {
                    let c = coords_of(moduli, x);
                    let moved: Vec<u64> = c
                        .iter()
                        .zip(a)
                        .zip(moduli)
                        .map(|((&ci, &ai), &q)| (ci as i64 + ai).rem_euclid(q as i64) as u64)
                        .collect();
                    index_of(moduli, &moved)
                })
                .collect();
            transforms.push(perm);
        }
        Ok(Self::assemble(
            SystemKind::Translation {
                moduli: moduli.to_vec(),
                shifts: shifts.to_vec(),
            },
            vec![1.0 / n as f64; n],
            transforms,
        ))
    }

    /// General commuting permutations; weights default to uniform.
    pub fn permutation(perms: Vec<Perm>, weights: Option<Vec<f64>>) -> Result<Self, FinsysError> {
        let n = perms
            .first()
            .map(Vec::len)
            .or_else(|| weights.as_ref().map(Vec::len))
            .ok_or(FinsysError::NoTransforms)?;
        if n == 0 {
            return Err(FinsysError::BadWeights("empty point set".into()));
        }
        for (j, p) in perms.iter().enumerate() {
            if !check_perm(p, n) {
                return Err(FinsysError::NotAPermutation(j));
            }
        }
        for i in 0..perms.len() {
            for j in i + 1..perms.len() {
                if (0..n).any(|x| perms[i][perms[j][x]] != perms[j][perms[i][x]]) {
                    return Err(FinsysError::NotCommuting(i, j));
                }
            }
        }
        let weights = weights.unwrap_or_else(|| vec![1.0 / n as f64; n]);
        if weights.len() != n || weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(FinsysError::BadWeights("need one nonnegative weight per point".into()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(FinsysError::BadWeights(format!("weights sum to {total}")));
        }
        for (j, p) in perms.iter().enumerate() {
            if (0..n).any(|x| (weights[p[x]] - weights[x]).abs() > 1e-15) {
                return Err(FinsysError::WeightsNotPreserved(j));
            }
        }
        Ok(Self::assemble(SystemKind::Permutation, weights, perms))
    }

    fn assemble(kind: SystemKind, weights: Vec<f64>, transforms: Vec<Perm>) -> Self {
        let cycles: Vec<PermCycles> = transforms.iter().map(|p| PermCycles::of(p)).collect();
        let orders = cycles.iter().map(PermCycles::order).collect();
        FiniteSystem {
            kind,
            weights,
            transforms,
            cycles,
            orders,
        }
    }

    pub fn kind(&self) -> &SystemKind {
        &self.kind
    }

    pub fn moduli(&self) -> Option<&[u64]> {
        match &self.kind {
            SystemKind::Translation { moduli, .. } => Some(moduli),
            SystemKind::Permutation => None,
        }
    }

    pub fn size(&self) -> usize {
        self.weights.len()
    }

    pub fn num_transforms(&self) -> usize {
        self.transforms.len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn transform(&self, j: usize) -> &[usize] {
        &self.transforms[j]
    }

    pub fn order(&self, j: usize) -> u64 {
        self.orders[j]
    }

    pub fn cycles(&self, j: usize) -> &[Vec<usize>] {
        &self.cycles[j].cycles
    }

    pub fn perm_cycles(&self, j: usize) -> &PermCycles {
        &self.cycles[j]
    }

    /// `T_j^e x` for `e ≥ 0`.
    pub fn apply_power(&self, j: usize, e: u64, x: usize) -> usize {
        self.cycles[j].apply(e, x)
    }

    /// `T_j^e` as a permutation, for any integer `e`.
    pub fn power(&self, j: usize, e: &BigInt) -> Perm {
        let r = e
            .mod_floor(&BigInt::from(self.orders[j]))
            .to_u64()
            .expect("reduced exponent fits u64");
        (0..self.size()).map(|x| self.apply_power(j, r, x)).collect()
    }

    /// `T^b = T_1^{b_1} ⋯ T_ℓ^{b_ℓ}`.
    pub fn power_compose(&self, b: &[BigInt]) -> Perm {
        assert_eq!(b.len(), self.num_transforms(), "exponent vector length");
        let mut out: Perm = (0..self.size()).collect();
        for (j, e) in b.iter().enumerate() {
            if e.is_zero() {
                continue;
            }
            let r = e
                .mod_floor(&BigInt::from(self.orders[j]))
                .to_u64()
                .expect("reduced exponent fits u64");
            for y in out.iter_mut() {
                *y = self.apply_power(j, r, *y);
            }
        }
        out
    }

    pub fn power_compose_i64(&self, b: &[i64]) -> Perm {
        let b: Vec<BigInt> = b.iter().map(|&x| BigInt::from(x)).collect();
        self.power_compose(&b)
    }

    pub fn coords(&self, x: usize) -> Option<Vec<u64>> {
        self.moduli().map(|m| coords_of(m, x))
    }

    pub fn point(&self, c: &[u64]) -> Option<usize> {
        self.moduli().map(|m| index_of(m, c))
    }

    pub fn integral(&self, f: &Observable) -> Complex64 {
        self.weights.iter().zip(&f.values).map(|(w, v)| v * w).sum()
    }

    /// `∫ f ḡ dμ`.
    pub fn inner(&self, f: &Observable, g: &Observable) -> Complex64 {
        self.weights
            .iter()
            .zip(f.values.iter().zip(&g.values))
            .map(|(w, (a, b))| a * b.conj() * w)
            .sum()
    }

    pub fn l2_norm(&self, f: &Observable) -> f64 {
        self.weights
            .iter()
            .zip(&f.values)
            .map(|(w, v)| w * v.norm_sqr())
            .sum::<f64>()
            .sqrt()
    }
}

fn coords_of(moduli: &[u64], mut x: usize) -> Vec<u64> {
    let mut c = vec![0; moduli.len()];
    for (i, &q) in moduli.iter().enumerate().rev() {
        c[i] = (x as u64) % q;
        x /= q as usize;
    }
    c
}

fn index_of(moduli: &[u64], c: &[u64]) -> usize {
    c.iter()
        .zip(moduli)
        .fold(0usize, |acc, (&ci, &q)| acc * q as usize + (ci % q) as usize)
}

/// Complex values on the points of a system.
#[derive(Debug, Clone, PartialEq)]
pub struct Observable {
    pub values: Vec<Complex64>,
}

impl Observable {
    pub fn new(values: Vec<Complex64>) -> Self {
        Observable { values }
    }

    pub fn constant(n: usize, c: Complex64) -> Self {
        Observable { values: vec![c; n] }
    }

    pub fn from_real(v: &[f64]) -> Self {
        Observable {
            values: v.iter().map(|&x| Complex64::new(x, 0.0)).collect(),
        }
    }

    pub fn indicator(n: usize, set: &[usize]) -> Self {
        let mut values = vec![Complex64::new(0.0, 0.0); n];
        for &x in set {
            values[x] = Complex64::new(1.0, 0.0);
        }
        Observable { values }
    }

    /// `χ_ξ(x) = e(Σ ξ_i x_i / q_i)` on a translation system.
    pub fn character(sys: &FiniteSystem, xi: &[i64]) -> Result<Self, FinsysError> {
        let moduli = sys.moduli().ok_or(FinsysError::NotTranslation)?;
        if xi.len() != moduli.len() {
            return Err(FinsysError::DimensionMismatch {
                index: 0,
                expected: moduli.len(),
                got: xi.len(),
            });
        }
        let q = moduli.iter().fold(1u64, |a, &m| a.lcm(&m));
        let values = (0..sys.size())
            .map(|x| {
                let c = coords_of(moduli, x);
                let k = c.iter().zip(xi).zip(moduli).fold(0i128, |acc, ((&ci, &xi), &m)| {
                    (acc + ci as i128 * xi as i128 * (q / m) as i128).rem_euclid(q as i128)
                });
                e_frac(k as u64, q)
            })
            .collect();
        Ok(Observable { values })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn conj(&self) -> Self {
        Observable {
            values: self.values.iter().map(Complex64::conj).collect(),
        }
    }

    pub fn mul(&self, other: &Observable) -> Self {
        Observable {
            values: self.values.iter().zip(&other.values).map(|(a, b)| a * b).collect(),
        }
    }

    pub fn sub(&self, other: &Observable) -> Self {
        Observable {
            values: self.values.iter().zip(&other.values).map(|(a, b)| a - b).collect(),
        }
    }

    pub fn scale(&self, c: Complex64) -> Self {
        Observable {
            values: self.values.iter().map(|a| a * c).collect(),
        }
    }

    /// `x ↦ f(π x)`.
    pub fn compose(&self, perm: &[usize]) -> Self {
        Observable {
            values: perm.iter().map(|&y| self.values[y]).collect(),
        }
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn max_abs_diff(&self, other: &Observable) -> f64 {
        self.sub(other).sup_norm()
    }
}

/// Orbits of a group of permutations, in canonical form.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OrbitPartition {
    blocks: Vec<Vec<usize>>,
    block_of: Vec<usize>,
}

impl OrbitPartition {
    /// Orbits of the group generated by `perms` on `0..n`.
    pub fn of_perms(n: usize, perms: &[&[usize]]) -> Self {
        let mut parent: Vec<usize> = (0..n).collect();
        fn find(p: &mut [usize], mut x: usize) -> usize {
            while p[x] != x {
                p[x] = p[p[x]];
                x = p[x];
            }
            x
        }
        for perm in perms {
            for x in 0..n {
                let (a, b) = (find(&mut parent, x), find(&mut parent, perm[x]));
                if a != b {
                    let (lo, hi) = if a < b { (a, b) } else { (b, a) };
                    parent[hi] = lo;
                }
            }
        }
        let mut block_of = vec![usize::MAX; n];
        let mut blocks: Vec<Vec<usize>> = Vec::new();
        let mut root_block = vec![usize::MAX; n];
        for x in 0..n {
            let r = find(&mut parent, x);
            if root_block[r] == usize::MAX {
                root_block[r] = blocks.len();
                blocks.push(Vec::new());
            }
            block_of[x] = root_block[r];
            blocks[root_block[r]].push(x);
        }
        OrbitPartition { blocks, block_of }
    }

    pub fn blocks(&self) -> &[Vec<usize>] {
        &self.blocks
    }

    pub fn block_of(&self, x: usize) -> usize {
        self.block_of[x]
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    /// Every block of `self` lies inside a block of `coarser`.
    pub fn refines(&self, coarser: &OrbitPartition) -> bool {
        self.blocks
            .iter()
            .all(|b| b.iter().all(|&x| coarser.block_of[x] == coarser.block_of[b[0]]))
    }
}

/// Orbits of `⟨T^b : b ∈ generators⟩`; functions invariant under the group are
/// exactly the block-constant ones.
pub fn invariant_partition(sys: &FiniteSystem, generators: &[Vec<BigInt>]) -> OrbitPartition {
    let perms: Vec<Perm> = generators.iter().map(|b| sys.power_compose(b)).collect();
    let refs: Vec<&[usize]> = perms.iter().map(Vec::as_slice).collect();
    OrbitPartition::of_perms(sys.size(), &refs)
}

pub fn invariant_partition_i64(sys: &FiniteSystem, generators: &[Vec<i64>]) -> OrbitPartition {
    let g: Vec<Vec<BigInt>> = generators
        .iter()
        .map(|b| b.iter().map(|&x| BigInt::from(x)).collect())
        .collect();
    invariant_partition(sys, &g)
}

/// Weighted block averages; zero-measure blocks map to 0.
pub fn cond_expectation(sys: &FiniteSystem, f: &Observable, part: &OrbitPartition) -> Observable {
    let w = sys.weights();
    let means: Vec<Complex64> = part
        .blocks()
        .iter()
        .map(|b| {
            let mass: f64 = b.iter().map(|&x| w[x]).sum();
            if mass == 0.0 {
                Complex64::new(0.0, 0.0)
            } else {
                b.iter().map(|&x| f.values[x] * w[x]).sum::<Complex64>() / mass
            }
        })
        .collect();
    Observable {
        values: (0..sys.size()).map(|x| means[part.block_of(x)]).collect(),
    }
}

fn unit_vector(l: usize, k: usize) -> Vec<BigInt> {
    let mut v = vec![BigInt::zero(); l];
    v[k] = BigInt::from(1);
    v
}

/// `I(T^v) = I(T_a) ∩ I(T_b)` for the obligation's vector `v` and pair `(a, b)`.
pub fn check_obligation(sys: &FiniteSystem, ob: &ErgodicityObligation) -> bool {
    let l = sys.num_transforms();
    let left = invariant_partition(sys, std::slice::from_ref(&ob.vector));
    let right = invariant_partition(sys, &[unit_vector(l, ob.pair.0), unit_vector(l, ob.pair.1)]);
    left == right
}

/// As [`check_obligation`], with `T^v` additionally ergodic.
pub fn check_obligation_very_good(sys: &FiniteSystem, ob: &ErgodicityObligation) -> bool {
    let left = invariant_partition(sys, std::slice::from_ref(&ob.vector));
    left.len() == 1 && check_obligation(sys, ob)
}

pub fn is_ergodic(sys: &FiniteSystem, j: usize) -> bool {
    sys.cycles(j).len() == 1
}

/// An eigenvalue `e(α)` of a translation together with the characters having it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SpectralValue {
    pub alpha: Ratio<i64>,
    pub witnesses: Vec<Vec<i64>>,
}

fn frac(r: Ratio<i64>) -> Ratio<i64> {
    r - r.floor()
}

/// Spectrum of `T_j` on a translation system: `α = Σ ξ_i a_i / q_i mod 1` over all characters `ξ`.
pub fn spectrum_cyclic(sys: &FiniteSystem, j: usize) -> Result<Vec<SpectralValue>, FinsysError> {
    let SystemKind::Translation { moduli, shifts } = sys.kind() else {
        return Err(FinsysError::NotTranslation);
    };
    let a = &shifts[j];
    let mut out: Vec<SpectralValue> = Vec::new();
    for x in 0..sys.size() {
        let xi: Vec<i64> = coords_of(moduli, x).iter().map(|&c| c as i64).collect();
        let alpha = frac(
            xi.iter()
                .zip(a)
                .zip(moduli)
                .map(|((&x, &s), &q)| Ratio::new((x * s).rem_euclid(q as i64), q as i64))
                .fold(Ratio::zero(), |acc, r| acc + r),
        );
        match out.iter_mut().find(|s| s.alpha == alpha) {
            Some(s) => s.witnesses.push(xi),
            None => out.push(SpectralValue {
                alpha,
                witnesses: vec![xi],
            }),
        }
    }
    out.sort_by_key(|p| p.alpha);
    Ok(out)
}

/// An eigenfunction of `T_j` supported on one cycle, extended by zero.
#[derive(Debug, Clone, PartialEq)]
pub struct CycleEigen {
    pub alpha: Ratio<i64>,
    pub cycle: usize,
    pub witness: Observable,
}

/// Per-cycle characters of `T_j`; they span all (nonergodic) eigenfunctions.
pub fn cycle_spectrum(sys: &FiniteSystem, j: usize) -> Vec<CycleEigen> {
    let mut out = Vec::new();
    for (c, cyc) in sys.cycles(j).iter().enumerate() {
        let len = cyc.len() as u64;
        for u in 0..len {
            let mut values = vec![Complex64::new(0.0, 0.0); sys.size()];
            for (k, &x) in cyc.iter().enumerate() {
                values[x] = e_frac(k as u64 * u, len);
            }
            out.push(CycleEigen {
                alpha: Ratio::new(u as i64, len as i64),
                cycle: c,
                witness: Observable { values },
            });
        }
    }
    out
}
