//! Multiple ergodic averages, box and Gowers–Host–Kra seminorms, dual
//! functions, Weyl means, and the joint-ergodicity verifiers.
//!
//! Every "exact" value is a mean over a certified full period: `n ↦ T^{p(n)}`
//! on a finite system is periodic with period dividing the transform order, so
//! Cesàro limits equal period means. `[H]` denotes `{1, …, H}`.

use num_bigint::BigInt;
use num_complex::Complex64;
use num_integer::Integer;
use num_rational::Ratio;
use num_traits::{ToPrimitive, Zero};
use thiserror::Error;

use crate::family::{
    goodness_obligations, indexing_data, BaseFamily, DualSlot, ErgodicityObligation, ShiftedPoly,
    TupleState,
};
use crate::finsys::{
    check_obligation, check_obligation_very_good, cond_expectation, cycle_spectrum, e_frac,
    is_ergodic, spectrum_cyclic, FiniteSystem, FinsysError, Observable, OrbitPartition,
    PermCycles, SystemKind,
};
use crate::parallel::{sum_complex, sum_vectors};
use crate::polyalg::{eval_residues, IntPoly};

/// Tolerance for identities that hold exactly in exact arithmetic.
pub const EXACT_TOL: f64 = 1e-9;
/// Tolerance for inequalities between products of `2^s` floating factors.
pub const INEQUALITY_TOL: f64 = 1e-6;
/// Default cap on enumerated tuples and product-space cells.
pub const DEFAULT_BUDGET: usize = 1 << 22;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AveragesError {
    #[error(transparent)]
    Finsys(#[from] FinsysError),
    #[error("length mismatch: {0}")]
    LengthMismatch(String),
    #[error("invalid seminorm spec: {0}")]
    BadSpec(String),
    #[error("averaged derivative is {0}, below -tolerance")]
    NegativeBeyondTolerance(f64),
    #[error("no spanning test family supplied for a permutation system")]
    SpanNotCertified,
    #[error("{cells} cells exceed the budget of {budget}")]
    ProductTooLarge { cells: u128, budget: usize },
    #[error("averaging range must be positive")]
    EmptyRange,
}

fn zero() -> Complex64 {
    Complex64::new(0.0, 0.0)
}

fn one() -> Complex64 {
    Complex64::new(1.0, 0.0)
}

/// Vectors `b_1, …, b_s` in `ℤ^ℓ` along which a box seminorm is taken.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SeminormSpec {
    pub vectors: Vec<Vec<BigInt>>,
}

impl SeminormSpec {
    pub fn new(vectors: Vec<Vec<BigInt>>) -> Result<Self, AveragesError> {
        let Some(first) = vectors.first() else {
            return Err(AveragesError::BadSpec("need at least one vector".into()));
        };
        if vectors.iter().any(|v| v.len() != first.len()) {
            return Err(AveragesError::BadSpec("vectors differ in length".into()));
        }
        Ok(SeminormSpec { vectors })
    }

    pub fn from_i64(vectors: &[Vec<i64>]) -> Result<Self, AveragesError> {
        Self::new(
            vectors
                .iter()
                .map(|v| v.iter().map(|&x| BigInt::from(x)).collect())
                .collect(),
        )
    }

    /// `v^{×s}`.
    pub fn repeated(v: Vec<BigInt>, s: usize) -> Result<Self, AveragesError> {
        Self::new(vec![v; s])
    }

    /// `e_j^{×s}` in `ℤ^ℓ`.
    pub fn unit(l: usize, j: usize, s: usize) -> Result<Self, AveragesError> {
        let mut v = vec![BigInt::zero(); l];
        v[j] = BigInt::from(1);
        Self::repeated(v, s)
    }

    pub fn s(&self) -> usize {
        self.vectors.len()
    }

    fn check(&self, sys: &FiniteSystem) -> Result<(), AveragesError> {
        if self.vectors[0].len() != sys.num_transforms() {
            return Err(AveragesError::LengthMismatch(format!(
                "spec vectors have {} entries, system has {} transforms",
                self.vectors[0].len(),
                sys.num_transforms()
            )));
        }
        Ok(())
    }
}

/// A box seminorm value with its exactness certificate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeminormValue {
    pub value: f64,
    /// The averaged quantity before the root, i.e. `value^{2^s}` up to clamping.
    pub power: f64,
    pub exact: bool,
    pub period: u64,
}

/// A cube average `E_h ∫ ∏_ε C^{|ε|} T^{ε·h} f_ε dμ` with its exactness certificate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CubeAverage {
    pub value: Complex64,
    pub exact: bool,
    pub period: u64,
}

/// `T^{b_i h}` for `h ∈ [H]`, one table per spec vector.
struct BoxPowers {
    tables: Vec<Vec<Vec<usize>>>,
    period: u64,
}

impl BoxPowers {
    fn new(sys: &FiniteSystem, vectors: &[Vec<BigInt>], h: u64) -> Self {
        let mut period = 1u64;
        let tables = vectors
            .iter()
            .map(|b| {
                let cyc = PermCycles::of(&sys.power_compose(b));
                period = period.lcm(&cyc.order());
                (1..=h).map(|k| cyc.power(k)).collect()
            })
            .collect();
        BoxPowers { tables, period }
    }

    /// Fills `pts[ε] = T^{Σ ε_i h_i b_i} x`.
    fn corners(&self, hi: &[usize], x: usize, pts: &mut [usize]) {
        pts[0] = x;
        for e in 1..pts.len() {
            let i = usize::BITS as usize - 1 - e.leading_zeros() as usize;
            pts[e] = self.tables[i][hi[i]][pts[e ^ (1 << i)]];
        }
    }
}

fn decode(mut k: usize, h: usize, out: &mut [usize]) {
    for slot in out.iter_mut() {
        *slot = k % h;
        k /= h;
    }
}

fn grid_size(h: u64, s: usize) -> Result<usize, AveragesError> {
    if h == 0 {
        return Err(AveragesError::EmptyRange);
    }
    let cells = (h as u128).checked_pow(s as u32).unwrap_or(u128::MAX);
    usize::try_from(cells)
        .ok()
        .filter(|&c| c <= DEFAULT_BUDGET * 16)
        .ok_or(AveragesError::ProductTooLarge {
            cells,
            budget: DEFAULT_BUDGET * 16,
        })
}

fn conj_if_odd(f: &Observable, e: usize) -> Observable {
    if e.count_ones() % 2 == 1 {
        f.conj()
    } else {
        f.clone()
    }
}

/// `E_{h∈[H]^s} ∫ ∏_{ε∈{0,1}^s} C^{|ε|} T^{Σ ε_i h_i b_i} f_ε dμ`, with `fs` indexed by `ε` as a bit mask.
pub fn box_cube_average(
    sys: &FiniteSystem,
    fs: &[Observable],
    spec: &SeminormSpec,
    h: u64,
) -> Result<CubeAverage, AveragesError> {
    spec.check(sys)?;
    let s = spec.s();
    if fs.len() != 1 << s {
        return Err(AveragesError::LengthMismatch(format!(
            "need {} functions for s = {s}, got {}",
            1 << s,
            fs.len()
        )));
    }
    let cells = grid_size(h, s)?;
    let powers = BoxPowers::new(sys, &spec.vectors, h);
    let gs: Vec<Observable> = fs.iter().enumerate().map(|(e, f)| conj_if_odd(f, e)).collect();
    let w = sys.weights();
    let total = sum_complex(cells, |k| {
        let mut hi = vec![0; s];
        decode(k, h as usize, &mut hi);
        let mut pts = vec![0; 1 << s];
        let mut acc = zero();
        for (x, &wx) in w.iter().enumerate() {
            if wx == 0.0 {
                continue;
            }
            powers.corners(&hi, x, &mut pts);
            let prod = pts
                .iter()
                .zip(&gs)
                .fold(one(), |p, (&y, g)| p * g.values[y]);
            acc += prod * wx;
        }
        acc
    });
    Ok(CubeAverage {
        value: total / cells as f64,
        exact: h.is_multiple_of(powers.period),
        period: powers.period,
    })
}

fn root_of_power(power: Complex64, s: usize) -> Result<(f64, f64), AveragesError> {
    let p = power.re;
    if p < -EXACT_TOL {
        return Err(AveragesError::NegativeBeyondTolerance(p));
    }
    let p = p.max(0.0);
    Ok((p.powf(1.0 / (1u64 << s) as f64), p))
}

/// `⟦f⟧_{b_1,…,b_s}` truncated at `H`; exact when `H` is a multiple of every period.
pub fn box_seminorm(
    sys: &FiniteSystem,
    f: &Observable,
    spec: &SeminormSpec,
    h: u64,
) -> Result<SeminormValue, AveragesError> {
    let fs = vec![f.clone(); 1 << spec.s()];
    let avg = box_cube_average(sys, &fs, spec, h)?;
    let (value, power) = root_of_power(avg.value, spec.s())?;
    Ok(SeminormValue {
        value,
        power,
        exact: avg.exact,
        period: avg.period,
    })
}

/// `⟦f⟧_{s,T_j}`; for `s = 0` this is `|∫f dμ|`, with the modulus taken so the value is nonnegative.
pub fn ghk_seminorm(
    sys: &FiniteSystem,
    f: &Observable,
    j: usize,
    s: usize,
    h: u64,
) -> Result<SeminormValue, AveragesError> {
    if s == 0 {
        let v = sys.integral(f).norm();
        return Ok(SeminormValue {
            value: v,
            power: v,
            exact: true,
            period: 1,
        });
    }
    box_seminorm(sys, f, &SeminormSpec::unit(sys.num_transforms(), j, s)?, h)
}

/// `∏_{ε∈{0,1}^s} C^{|ε|} T^{Σ ε_i h_i b_i} f` for `h ∈ ℕ^s`.
pub fn multiplicative_derivative(
    sys: &FiniteSystem,
    f: &Observable,
    vectors: &[Vec<BigInt>],
    h: &[u64],
) -> Observable {
    let s = vectors.len();
    let perms: Vec<Vec<usize>> = vectors
        .iter()
        .zip(h)
        .map(|(b, &hi)| {
            let scaled: Vec<BigInt> = b.iter().map(|c| c * hi).collect();
            sys.power_compose(&scaled)
        })
        .collect();
    let gs: Vec<Observable> = (0..1usize << s).map(|e| conj_if_odd(f, e)).collect();
    let mut pts = vec![0; 1 << s];
    let values = (0..sys.size())
        .map(|x| {
            pts[0] = x;
            for e in 1..pts.len() {
                let i = usize::BITS as usize - 1 - e.leading_zeros() as usize;
                pts[e] = perms[i][pts[e ^ (1 << i)]];
            }
            pts.iter().zip(&gs).fold(one(), |p, (&y, g)| p * g.values[y])
        })
        .collect();
    Observable::new(values)
}

/// `⟦f⟧_{b_1..b_s}` evaluated as `E_{h∈[H]^{s−s'}} ⟦Δ_{b_{s'+1},…,b_s; h} f⟧_{b_1..b_{s'}}^{2^{s'}}`.
pub fn inductive_box_seminorm(
    sys: &FiniteSystem,
    f: &Observable,
    spec: &SeminormSpec,
    s_prime: usize,
    h: u64,
) -> Result<SeminormValue, AveragesError> {
    let s = spec.s();
    if s_prime == 0 || s_prime > s {
        return Err(AveragesError::BadSpec(format!("need 1 ≤ s' ≤ {s}, got {s_prime}")));
    }
    if s_prime == s {
        return box_seminorm(sys, f, spec, h);
    }
    let inner = SeminormSpec::new(spec.vectors[..s_prime].to_vec())?;
    let outer = &spec.vectors[s_prime..];
    let cells = grid_size(h, s - s_prime)?;
    let mut total = 0.0;
    let mut exact = true;
    let mut period = 1u64;
    let mut hi = vec![0; s - s_prime];
    for k in 0..cells {
        decode(k, h as usize, &mut hi);
        let hs: Vec<u64> = hi.iter().map(|&x| x as u64 + 1).collect();
        let d = multiplicative_derivative(sys, f, outer, &hs);
        let v = box_seminorm(sys, &d, &inner, h)?;
        total += v.power;
        exact &= v.exact;
        period = period.lcm(&v.period);
    }
    for b in outer {
        period = period.lcm(&PermCycles::of(&sys.power_compose(b)).order());
    }
    let (value, power) = root_of_power(Complex64::new(total / cells as f64, 0.0), s)?;
    Ok(SeminormValue {
        value,
        power,
        exact: exact && h.is_multiple_of(period),
        period,
    })
}

fn oracle_power(sys: &FiniteSystem, f: &Observable, cyc: &PermCycles, part: &OrbitPartition, s: usize) -> f64 {
    if s == 1 {
        let e = cond_expectation(sys, f, part);
        return sys.l2_norm(&e).powi(2);
    }
    let p = cyc.order();
    let total: f64 = (1..=p)
        .map(|h| {
            let shifted = f.compose(&cyc.power(h));
            oracle_power(sys, &f.mul(&shifted.conj()), cyc, part, s - 1)
        })
        .sum();
    total / p as f64
}

/// Independent recursive evaluation of `⟦f⟧_{s,T_j}`: average `⟦Δ_h f⟧_{s−1}^{2^{s−1}}`
/// over one full period, bottoming out at `‖E(f | I(T_j))‖₂`.
pub fn gowers_oracle(sys: &FiniteSystem, f: &Observable, j: usize, s: usize) -> f64 {
    if s == 0 {
        return sys.integral(f).norm();
    }
    let cyc = sys.perm_cycles(j);
    let part = OrbitPartition::of_perms(sys.size(), &[sys.transform(j)]);
    oracle_power(sys, f, cyc, &part, s)
        .max(0.0)
        .powf(1.0 / (1u64 << s) as f64)
}

/// `E_{m∈[M]^s} ∏_{ε≠0} C^{|ε|} T^{Σ ε_i m_i b_i} f`.
pub fn dual_function_box(
    sys: &FiniteSystem,
    f: &Observable,
    spec: &SeminormSpec,
    m: u64,
) -> Result<(Observable, bool), AveragesError> {
    spec.check(sys)?;
    let s = spec.s();
    let cells = grid_size(m, s)?;
    let powers = BoxPowers::new(sys, &spec.vectors, m);
    let gs: Vec<Observable> = (0..1usize << s).map(|e| conj_if_odd(f, e)).collect();
    let n = sys.size();
    let total = sum_vectors(cells, n, |k, out| {
        let mut hi = vec![0; s];
        decode(k, m as usize, &mut hi);
        let mut pts = vec![0; 1 << s];
        for (x, slot) in out.iter_mut().enumerate() {
            powers.corners(&hi, x, &mut pts);
            *slot = pts[1..]
                .iter()
                .zip(&gs[1..])
                .fold(one(), |p, (&y, g)| p * g.values[y]);
        }
    });
    let scale = 1.0 / cells as f64;
    Ok((
        Observable::new(total.into_iter().map(|z| z * scale).collect()),
        m.is_multiple_of(powers.period),
    ))
}

/// `D_{s,T_j}(f)` truncated at `M`; the flag certifies a full-period average.
pub fn dual_function(
    sys: &FiniteSystem,
    f: &Observable,
    j: usize,
    s: usize,
    m: u64,
) -> Result<(Observable, bool), AveragesError> {
    dual_function_box(sys, f, &SeminormSpec::unit(sys.num_transforms(), j, s)?, m)
}

/// A dual sequence `n ↦ T_transform^{iterate(n)} D_{level,T_transform}(generator)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DualTerm {
    pub transform: usize,
    pub level: usize,
    pub generator: Observable,
    pub iterate: ShiftedPoly,
}

impl DualTerm {
    pub fn from_slot(slot: &DualSlot, generators: &[Observable]) -> Self {
        DualTerm {
            transform: slot.transform,
            level: slot.level,
            generator: generators[slot.generator].clone(),
            iterate: slot.iterate.clone(),
        }
    }
}

/// Result of an averaging run.
#[derive(Debug, Clone, PartialEq)]
pub struct AverageReport {
    pub value: Observable,
    pub n: u64,
    pub period: u64,
    /// `n` is a multiple of `period`, so `value` is the Cesàro limit.
    pub exact: bool,
    pub deviation: Option<f64>,
}

/// One factor `n ↦ g(T^{e(n)} x)` with `e(n)` tracked modulo the transform order.
struct Iterate<'a> {
    g: Observable,
    cyc: &'a PermCycles,
    res: Vec<u64>,
    offset: u64,
    ord: u64,
}

impl Iterate<'_> {
    fn exponent(&self, n: u64) -> u64 {
        (self.offset + eval_residues(&self.res, n, self.ord)) % self.ord
    }
}

fn build_iterates<'a>(
    sys: &'a FiniteSystem,
    t: &TupleState,
    fns: &[Observable],
    duals: &[DualTerm],
) -> Result<Vec<Iterate<'a>>, AveragesError> {
    if t.base().len() != sys.num_transforms() {
        return Err(AveragesError::LengthMismatch(format!(
            "family has {} polynomials, system has {} transforms",
            t.base().len(),
            sys.num_transforms()
        )));
    }
    if fns.len() != t.len() {
        return Err(AveragesError::LengthMismatch(format!(
            "{} observables for a tuple of length {}",
            fns.len(),
            t.len()
        )));
    }
    if fns.iter().chain(duals.iter().map(|d| &d.generator)).any(|f| f.len() != sys.size()) {
        return Err(AveragesError::LengthMismatch("observable size differs from the system".into()));
    }
    let mut out = Vec::new();
    for (j, f) in fns.iter().enumerate() {
        let k = t.eta()[j];
        let ord = sys.order(k);
        out.push(Iterate {
            g: f.clone(),
            cyc: sys.perm_cycles(k),
            res: t.rho(j).residues(ord),
            offset: 0,
            ord,
        });
    }
    for d in duals {
        if d.transform >= sys.num_transforms() || d.level == 0 {
            return Err(AveragesError::BadSpec(format!(
                "dual term on transform {} at level {}",
                d.transform, d.level
            )));
        }
        let ord = sys.order(d.transform);
        let (g, _) = dual_function(sys, &d.generator, d.transform, d.level, ord)?;
        out.push(Iterate {
            g,
            cyc: sys.perm_cycles(d.transform),
            res: d.iterate.poly.residues(ord),
            offset: d.iterate.offset.mod_floor(&BigInt::from(ord)).to_u64().expect("reduced"),
            ord,
        });
    }
    Ok(out)
}

fn iterate_period(its: &[Iterate<'_>]) -> u64 {
    its.iter().fold(1u64, |p, it| p.lcm(&it.ord))
}

fn evaluate_at(its: &[Iterate<'_>], n: u64, out: &mut [Complex64]) {
    let exps: Vec<u64> = its.iter().map(|it| it.exponent(n)).collect();
    for (x, slot) in out.iter_mut().enumerate() {
        *slot = its
            .iter()
            .zip(&exps)
            .fold(one(), |p, (it, &e)| p * it.g.values[it.cyc.apply(e, x)]);
    }
}

/// `x ↦ (1/N) Σ_{n=1}^{N} ∏_j f_j(T_{η_j}^{ρ_j(n)} x) · ∏_d D_d(q_d(n))(x)`.
pub fn multi_average(
    sys: &FiniteSystem,
    t: &TupleState,
    fns: &[Observable],
    duals: &[DualTerm],
    n: u64,
) -> Result<AverageReport, AveragesError> {
    if n == 0 {
        return Err(AveragesError::EmptyRange);
    }
    let its = build_iterates(sys, t, fns, duals)?;
    let period = iterate_period(&its);
    let total = sum_vectors(n as usize, sys.size(), |k, out| evaluate_at(&its, k as u64 + 1, out));
    let scale = 1.0 / n as f64;
    Ok(AverageReport {
        value: Observable::new(total.into_iter().map(|z| z * scale).collect()),
        n,
        period,
        exact: n.is_multiple_of(period),
        deviation: None,
    })
}

/// The Cesàro limit of [`multi_average`], computed as one full-period mean.
pub fn exact_limit_average(
    sys: &FiniteSystem,
    t: &TupleState,
    fns: &[Observable],
    duals: &[DualTerm],
) -> Result<AverageReport, AveragesError> {
    let its = build_iterates(sys, t, fns, duals)?;
    let period = iterate_period(&its);
    multi_average(sys, t, fns, duals, period)
}

/// `‖A_n − lim A‖₂` for `n = 1..=N`, where `A_n` is the running average.
pub fn running_deviation(
    sys: &FiniteSystem,
    t: &TupleState,
    fns: &[Observable],
    duals: &[DualTerm],
    n: u64,
) -> Result<Vec<f64>, AveragesError> {
    let limit = exact_limit_average(sys, t, fns, duals)?.value;
    let its = build_iterates(sys, t, fns, duals)?;
    let mut acc = vec![zero(); sys.size()];
    let mut buf = vec![zero(); sys.size()];
    let mut out = Vec::with_capacity(n as usize);
    for k in 1..=n {
        evaluate_at(&its, k, &mut buf);
        for (a, b) in acc.iter_mut().zip(&buf) {
            *a += b;
        }
        let avg = Observable::new(acc.iter().map(|z| z / k as f64).collect());
        out.push(sys.l2_norm(&avg.sub(&limit)));
    }
    Ok(out)
}

/// Exact Cesàro mean of `e(Σ α_j p_j(n))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeylMean {
    pub value: Complex64,
    pub period: u64,
    pub vanishes: bool,
}

/// Mean of `e(Σ α_j p_j(n))` over one period `q = lcm` of the denominators, with the phase
/// reduced exactly modulo `q` before exponentiation.
pub fn weyl_mean(polys: &[IntPoly], alphas: &[Ratio<i64>]) -> Result<WeylMean, AveragesError> {
    if polys.len() != alphas.len() {
        return Err(AveragesError::LengthMismatch(format!(
            "{} polynomials, {} frequencies",
            polys.len(),
            alphas.len()
        )));
    }
    let q = alphas.iter().fold(1u64, |acc, a| acc.lcm(&(*a.denom() as u64)));
    let terms: Vec<(Vec<u64>, u64)> = polys
        .iter()
        .zip(alphas)
        .map(|(p, a)| {
            let scale = (*a.numer() as i128 * (q / *a.denom() as u64) as i128).rem_euclid(q as i128) as u64;
            (p.residues(q), scale)
        })
        .collect();
    let total = sum_complex(q as usize, |k| {
        let n = k as u64 + 1;
        let phase = terms.iter().fold(0u128, |acc, (res, scale)| {
            (acc + eval_residues(res, n, q) as u128 * *scale as u128) % q as u128
        });
        e_frac(phase as u64, q)
    });
    let value = total / q as f64;
    Ok(WeylMean {
        value,
        period: q,
        vanishes: value.norm() <= EXACT_TOL,
    })
}

/// Options shared by the joint-ergodicity verifiers.
#[derive(Debug, Clone, PartialEq)]
pub struct VerifyOptions {
    pub tol: f64,
    /// Cap on enumerated tuples and on product-space cells.
    pub budget: usize,
    /// Tuples `(f_1, …, f_ℓ)` spanning the observables of interest; required for permutation systems.
    pub test_family: Option<Vec<Vec<Observable>>>,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        VerifyOptions {
            tol: EXACT_TOL,
            budget: DEFAULT_BUDGET,
            test_family: None,
        }
    }
}

/// An eigenfunction tuple violating a spectral criterion.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenWitness {
    pub alphas: Vec<Ratio<i64>>,
    /// Characters `ξ_j` (translation systems) realising the eigenvalues.
    pub characters: Option<Vec<Vec<i64>>>,
    /// Supporting cycles of the per-cycle eigenfunctions (permutation systems).
    pub cycles: Option<Vec<usize>>,
    /// The Weyl mean `lim E_n e(Σ α_j p_j(n))`, when the criterion is evaluated through it.
    pub mean: Option<Complex64>,
    pub deviation: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeakJointReport {
    pub criterion_i: bool,
    pub failing_obligations: Vec<ErgodicityObligation>,
    pub criterion_ii: bool,
    /// Sorted by decreasing deviation.
    pub failing_eigen: Vec<EigenWitness>,
    /// `max ‖lim − ∏ E(f_j | I(T_j))‖₂` over the test family.
    pub direct: f64,
    pub direct_witness: Option<usize>,
    pub tuples_checked: usize,
    pub period: u64,
    /// `(criterion_i ∧ criterion_ii) ⟺ direct ≤ tol`.
    pub agreement: bool,
}

impl WeakJointReport {
    pub fn verdict(&self) -> bool {
        self.criterion_i && self.criterion_ii
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct JointReport {
    pub ergodic: Vec<bool>,
    pub criterion_i: bool,
    pub failing_obligations: Vec<ErgodicityObligation>,
    pub criterion_ii: bool,
    pub failing_eigen: Vec<EigenWitness>,
    /// `max ‖lim − ∏ ∫f_j‖₂` over the test family.
    pub direct: f64,
    pub direct_witness: Option<usize>,
    pub tuples_checked: usize,
    pub period: u64,
    pub agreement: bool,
}

impl JointReport {
    pub fn verdict(&self) -> bool {
        self.criterion_i && self.criterion_ii
    }
}

fn check_budget(cells: u128, budget: usize) -> Result<(), AveragesError> {
    if cells > budget as u128 {
        return Err(AveragesError::ProductTooLarge { cells, budget });
    }
    Ok(())
}

/// Odometer over `∏ 0..sizes[j]`.
fn for_each_tuple(sizes: &[usize], mut f: impl FnMut(&[usize])) {
    if sizes.contains(&0) {
        return;
    }
    let mut idx = vec![0; sizes.len()];
    loop {
        f(&idx);
        let mut j = 0;
        loop {
            if j == sizes.len() {
                return;
            }
            idx[j] += 1;
            if idx[j] < sizes[j] {
                break;
            }
            idx[j] = 0;
            j += 1;
        }
    }
}

/// Per slot, one character per eigenvalue (nonzero when possible) plus the trivial character.
/// The deviations in both verifiers depend only on `α_j` and on whether `ξ_j = 0`.
fn character_representatives(sys: &FiniteSystem, j: usize) -> Result<Vec<(Ratio<i64>, Vec<i64>)>, AveragesError> {
    let dim = sys.moduli().ok_or(FinsysError::NotTranslation)?.len();
    let zero_xi = vec![0i64; dim];
    let mut reps = Vec::new();
    for sv in spectrum_cyclic(sys, j)? {
        if let Some(xi) = sv.witnesses.iter().find(|xi| **xi != zero_xi) {
            reps.push((sv.alpha, xi.clone()));
        }
        if sv.alpha.is_zero() {
            reps.push((sv.alpha, zero_xi.clone()));
        }
    }
    Ok(reps)
}

fn spectral_alphas(sys: &FiniteSystem, j: usize) -> Vec<Ratio<i64>> {
    let mut alphas: Vec<Ratio<i64>> = match spectrum_cyclic(sys, j) {
        Ok(spec) => spec.into_iter().map(|v| v.alpha).collect(),
        Err(_) => cycle_spectrum(sys, j).into_iter().map(|c| c.alpha).collect(),
    };
    alphas.sort();
    alphas.dedup();
    alphas
}

enum Target {
    ProductOfConditional(Vec<OrbitPartition>),
    ProductOfIntegrals,
}

fn direct_deviation(
    sys: &FiniteSystem,
    t: &TupleState,
    tuples: &[Vec<Observable>],
    target: &Target,
) -> Result<(f64, Option<usize>), AveragesError> {
    let mut worst = (0.0f64, None);
    for (k, fs) in tuples.iter().enumerate() {
        let lim = exact_limit_average(sys, t, fs, &[])?.value;
        let tgt = match target {
            Target::ProductOfConditional(parts) => fs
                .iter()
                .zip(parts)
                .map(|(f, p)| cond_expectation(sys, f, p))
                .fold(Observable::constant(sys.size(), one()), |a, b| a.mul(&b)),
            Target::ProductOfIntegrals => {
                let c = fs.iter().fold(one(), |a, f| a * sys.integral(f));
                Observable::constant(sys.size(), c)
            }
        };
        let d = sys.l2_norm(&lim.sub(&tgt));
        if worst.1.is_none() || d > worst.0 {
            worst = (d, Some(k));
        }
    }
    Ok(worst)
}

fn character_tuples(sys: &FiniteSystem, budget: usize) -> Result<Vec<Vec<Observable>>, AveragesError> {
    let l = sys.num_transforms();
    let reps: Vec<Vec<Observable>> = (0..l)
        .map(|j| {
            character_representatives(sys, j)?
                .into_iter()
                .map(|(_, xi)| Observable::character(sys, &xi).map_err(AveragesError::from))
                .collect()
        })
        .collect::<Result<_, AveragesError>>()?;
    let sizes: Vec<usize> = reps.iter().map(Vec::len).collect();
    check_budget(sizes.iter().map(|&s| s as u128).product(), budget)?;
    let mut out = Vec::new();
    for_each_tuple(&sizes, |idx| {
        out.push(idx.iter().enumerate().map(|(j, &i)| reps[j][i].clone()).collect());
    });
    Ok(out)
}

fn test_tuples(sys: &FiniteSystem, opts: &VerifyOptions) -> Result<Vec<Vec<Observable>>, AveragesError> {
    match (&opts.test_family, sys.kind()) {
        (Some(fam), _) => Ok(fam.clone()),
        (None, SystemKind::Translation { .. }) => character_tuples(sys, opts.budget),
        (None, SystemKind::Permutation) => Err(AveragesError::SpanNotCertified),
    }
}

fn sort_witnesses(w: &mut [EigenWitness]) {
    w.sort_by(|a, b| b.deviation.total_cmp(&a.deviation));
}

/// Weyl-mean test over all eigenvalue tuples: the limit is `W(α)` times a unimodular
/// function, to be compared with `expected(α)`.
fn weyl_criterion(
    sys: &FiniteSystem,
    base: &BaseFamily,
    budget: usize,
    tol: f64,
    expected: impl Fn(&[Ratio<i64>]) -> Complex64,
) -> Result<Vec<EigenWitness>, AveragesError> {
    let per_slot: Vec<Vec<Ratio<i64>>> = (0..base.len()).map(|j| spectral_alphas(sys, j)).collect();
    let sizes: Vec<usize> = per_slot.iter().map(Vec::len).collect();
    check_budget(sizes.iter().map(|&s| s as u128).product(), budget)?;
    let mut failing = Vec::new();
    let mut err = None;
    for_each_tuple(&sizes, |idx| {
        if err.is_some() {
            return;
        }
        let alphas: Vec<Ratio<i64>> = idx.iter().enumerate().map(|(j, &i)| per_slot[j][i]).collect();
        match weyl_mean(base.polys(), &alphas) {
            Ok(w) => {
                let deviation = (w.value - expected(&alphas)).norm();
                if deviation > tol {
                    failing.push(EigenWitness {
                        alphas,
                        characters: None,
                        cycles: None,
                        mean: Some(w.value),
                        deviation,
                    });
                }
            }
            Err(e) => err = Some(e),
        }
    });
    if let Some(e) = err {
        return Err(e);
    }
    Ok(failing)
}

fn attach_characters(sys: &FiniteSystem, w: &mut [EigenWitness]) -> Result<(), AveragesError> {
    if sys.moduli().is_none() {
        return Ok(());
    }
    let spectra: Vec<_> = (0..sys.num_transforms())
        .map(|j| spectrum_cyclic(sys, j))
        .collect::<Result<_, _>>()?;
    for wit in w {
        let xis = wit
            .alphas
            .iter()
            .enumerate()
            .map(|(j, a)| {
                let sv = spectra[j].iter().find(|v| v.alpha == *a).expect("alpha from spectrum");
                sv.witnesses.iter().find(|xi| xi.iter().any(|&c| c != 0)).unwrap_or(&sv.witnesses[0]).clone()
            })
            .collect();
        wit.characters = Some(xis);
    }
    Ok(())
}

/// Per-cycle eigenfunction tuples against `∏ E(χ_j | I(T_j))`, by full-period brute force.
fn cycle_criterion(
    sys: &FiniteSystem,
    t: &TupleState,
    parts: &[OrbitPartition],
    budget: usize,
    tol: f64,
) -> Result<Vec<EigenWitness>, AveragesError> {
    let eig: Vec<_> = (0..t.len()).map(|j| cycle_spectrum(sys, j)).collect();
    let sizes: Vec<usize> = eig.iter().map(Vec::len).collect();
    check_budget(sizes.iter().map(|&s| s as u128).product(), budget)?;
    let mut tuples = Vec::new();
    for_each_tuple(&sizes, |idx| tuples.push(idx.to_vec()));
    let mut failing = Vec::new();
    for idx in tuples {
        let fs: Vec<Observable> = idx.iter().enumerate().map(|(j, &i)| eig[j][i].witness.clone()).collect();
        let (d, _) = direct_deviation(sys, t, &[fs], &Target::ProductOfConditional(parts.to_vec()))?;
        if d > tol {
            failing.push(EigenWitness {
                alphas: idx.iter().enumerate().map(|(j, &i)| eig[j][i].alpha).collect(),
                characters: None,
                cycles: Some(idx.iter().enumerate().map(|(j, &i)| eig[j][i].cycle).collect()),
                mean: None,
                deviation: d,
            });
        }
    }
    Ok(failing)
}

fn transform_partitions(sys: &FiniteSystem) -> Vec<OrbitPartition> {
    (0..sys.num_transforms())
        .map(|j| OrbitPartition::of_perms(sys.size(), &[sys.transform(j)]))
        .collect()
}

/// Weak joint ergodicity of `(T_j^{p_j(n)})` via the good ergodicity property (i), the
/// eigenfunction criterion (ii), and a direct full-period check on a spanning family.
pub fn verify_weak_joint_ergodicity(
    sys: &FiniteSystem,
    base: &BaseFamily,
    opts: &VerifyOptions,
) -> Result<WeakJointReport, AveragesError> {
    let t = TupleState::identity(base);
    let tuples = test_tuples(sys, opts)?;
    let idx = indexing_data(base);
    let failing_obligations: Vec<ErgodicityObligation> = goodness_obligations(&t, &idx)
        .into_iter()
        .filter(|ob| !check_obligation(sys, ob))
        .collect();
    let parts = transform_partitions(sys);
    let mut failing_eigen = match sys.kind() {
        SystemKind::Translation { .. } => {
            let mut w = weyl_criterion(sys, base, opts.budget, opts.tol, |a| {
                if a.iter().all(Zero::is_zero) {
                    one()
                } else {
                    zero()
                }
            })?;
            attach_characters(sys, &mut w)?;
            w
        }
        SystemKind::Permutation => cycle_criterion(sys, &t, &parts, opts.budget, opts.tol)?,
    };
    sort_witnesses(&mut failing_eigen);
    let (direct, direct_witness) =
        direct_deviation(sys, &t, &tuples, &Target::ProductOfConditional(parts))?;
    let criterion_i = failing_obligations.is_empty();
    let criterion_ii = failing_eigen.is_empty();
    Ok(WeakJointReport {
        criterion_i,
        failing_obligations,
        criterion_ii,
        failing_eigen,
        direct,
        direct_witness,
        tuples_checked: tuples.len(),
        period: (0..sys.num_transforms()).fold(1u64, |p, j| p.lcm(&sys.order(j))),
        agreement: (criterion_i && criterion_ii) == (direct <= opts.tol),
    })
}

/// Joint ergodicity: every `T_j` ergodic with the very good ergodicity property (i), and
/// `lim E_n e(Σ α_j p_j(n)) = 0` for every eigenvalue tuple other than `α = 0` (ii).
pub fn verify_joint_ergodicity(
    sys: &FiniteSystem,
    base: &BaseFamily,
    opts: &VerifyOptions,
) -> Result<JointReport, AveragesError> {
    let t = TupleState::identity(base);
    let tuples = test_tuples(sys, opts)?;
    let idx = indexing_data(base);
    let ergodic: Vec<bool> = (0..sys.num_transforms()).map(|j| is_ergodic(sys, j)).collect();
    let failing_obligations: Vec<ErgodicityObligation> = goodness_obligations(&t, &idx)
        .into_iter()
        .filter(|ob| !check_obligation_very_good(sys, ob))
        .collect();
    let mut failing_eigen = weyl_criterion(sys, base, opts.budget, opts.tol, |a| {
        if a.iter().all(Zero::is_zero) {
            one()
        } else {
            zero()
        }
    })?;
    attach_characters(sys, &mut failing_eigen)?;
    sort_witnesses(&mut failing_eigen);
    let (direct, direct_witness) = direct_deviation(sys, &t, &tuples, &Target::ProductOfIntegrals)?;
    let criterion_i = ergodic.iter().all(|&e| e) && failing_obligations.is_empty();
    let criterion_ii = failing_eigen.is_empty();
    Ok(JointReport {
        ergodic,
        criterion_i,
        failing_obligations,
        criterion_ii,
        failing_eigen,
        direct,
        direct_witness,
        tuples_checked: tuples.len(),
        period: (0..sys.num_transforms()).fold(1u64, |p, j| p.lcm(&sys.order(j))),
        agreement: (criterion_i && criterion_ii) == (direct <= opts.tol),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct DksReport {
    /// For each pair `i < j`: `(T_i^{p_i(n)} T_j^{−p_j(n)})` is ergodic.
    pub cond_i: Vec<((usize, usize), bool)>,
    /// `(T_1^{p_1(n)} × ⋯ × T_ℓ^{p_ℓ(n)})` is ergodic on the product system.
    pub cond_ii: bool,
    pub jointly_ergodic: bool,
    /// `(cond_i ∧ cond_ii) ⟺ jointly_ergodic`.
    pub equivalence: bool,
}

/// Whether `E_{n∈[P]} f(S_n x) = ∫ f` for every indicator `f` and every `x` of positive mass,
/// i.e. the sequence `S_n` is ergodic.
fn sequence_is_ergodic(weights: &[f64], period: u64, step: impl Fn(u64, usize) -> usize + Sync, tol: f64) -> bool {
    use rayon::prelude::*;
    let n = weights.len();
    (0..n).into_par_iter().all(|x| {
        if weights[x] == 0.0 {
            return true;
        }
        let mut counts = vec![0u64; n];
        for k in 1..=period {
            counts[step(k, x)] += 1;
        }
        counts
            .iter()
            .zip(weights)
            .all(|(&c, &w)| (c as f64 / period as f64 - w).abs() <= tol)
    })
}

fn exponent_table(sys: &FiniteSystem, p: &IntPoly, j: usize, period: u64) -> Vec<u64> {
    let ord = sys.order(j);
    let res = p.residues(ord);
    (0..=period).map(|n| eval_residues(&res, n, ord)).collect()
}

/// Pairwise and product ergodicity conditions, compared with the joint-ergodicity verdict.
pub fn verify_dks_conditions(
    sys: &FiniteSystem,
    base: &BaseFamily,
    budget: usize,
) -> Result<DksReport, AveragesError> {
    let l = base.len();
    if l != sys.num_transforms() {
        return Err(AveragesError::LengthMismatch(format!(
            "family has {l} polynomials, system has {} transforms",
            sys.num_transforms()
        )));
    }
    let n = sys.size();
    let cells = (n as u128).checked_pow(l as u32).unwrap_or(u128::MAX);
    check_budget(cells, budget)?;
    let tol = EXACT_TOL;
    let mut cond_i = Vec::new();
    for i in 0..l {
        for j in i + 1..l {
            let period = sys.order(i).lcm(&sys.order(j));
            let ei = exponent_table(sys, base.poly(i), i, period);
            let ej = exponent_table(sys, base.poly(j), j, period);
            let (ci, cj) = (sys.perm_cycles(i), sys.perm_cycles(j));
            let oj = sys.order(j);
            let ok = sequence_is_ergodic(
                sys.weights(),
                period,
                |k, x| ci.apply(ei[k as usize], cj.apply((oj - ej[k as usize]) % oj, x)),
                tol,
            );
            cond_i.push(((i, j), ok));
        }
    }
    let period = (0..l).fold(1u64, |p, j| p.lcm(&sys.order(j)));
    let tables: Vec<Vec<u64>> = (0..l).map(|j| exponent_table(sys, base.poly(j), j, period)).collect();
    let cells = cells as usize;
    let weights: Vec<f64> = (0..cells)
        .map(|c| {
            let mut c = c;
            let mut w = 1.0;
            for _ in 0..l {
                w *= sys.weights()[c % n];
                c /= n;
            }
            w
        })
        .collect();
    let cond_ii = sequence_is_ergodic(
        &weights,
        period,
        |k, c| {
            let mut c = c;
            let mut out = 0;
            let mut radix = 1;
            for (j, table) in tables.iter().enumerate() {
                let x = c % n;
                c /= n;
                out += sys.perm_cycles(j).apply(table[k as usize], x) * radix;
                radix *= n;
            }
            out
        },
        tol,
    );
    let opts = match sys.kind() {
        SystemKind::Translation { .. } => VerifyOptions {
            budget,
            ..VerifyOptions::default()
        },
        SystemKind::Permutation => VerifyOptions {
            budget,
            test_family: Some(indicator_tuples(n, l, budget)?),
            ..VerifyOptions::default()
        },
    };
    let joint = verify_joint_ergodicity(sys, base, &opts)?;
    let both = cond_i.iter().all(|(_, ok)| *ok) && cond_ii;
    Ok(DksReport {
        cond_i,
        cond_ii,
        jointly_ergodic: joint.verdict(),
        equivalence: both == joint.verdict(),
    })
}

/// All tuples of point indicators: a spanning family on any finite system.
pub fn indicator_tuples(n: usize, l: usize, budget: usize) -> Result<Vec<Vec<Observable>>, AveragesError> {
    check_budget((n as u128).checked_pow(l as u32).unwrap_or(u128::MAX), budget)?;
    let ind: Vec<Observable> = (0..n).map(|x| Observable::indicator(n, &[x])).collect();
    let mut out = Vec::new();
    for_each_tuple(&vec![n; l], |idx| out.push(idx.iter().map(|&i| ind[i].clone()).collect()));
    Ok(out)
}

/// Both sides of `E_{h,h'∈[H]^s} a_{h−h'} ≤ E_{h∈[H]^s} a_h`, scaled by `H^{2s}`, for `a`
/// indexed by `{0,…,H−1}^s` (row-major) and extended by zero off `ℕ^s`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DifferenceBound {
    pub lhs: u128,
    pub rhs: u128,
}

impl DifferenceBound {
    pub fn holds(&self) -> bool {
        self.lhs <= self.rhs
    }
}

pub fn difference_sequence_bound(a: &[u64], h: usize, s: usize) -> Result<DifferenceBound, AveragesError> {
    let cells = grid_size(h as u64, s)?;
    if a.len() != cells {
        return Err(AveragesError::LengthMismatch(format!("need {cells} entries, got {}", a.len())));
    }
    let mut u = vec![0; s];
    let mut v = vec![0; s];
    let mut lhs: u128 = 0;
    for i in 0..cells {
        decode(i, h, &mut u);
        for k in 0..cells {
            decode(k, h, &mut v);
            if u.iter().zip(&v).all(|(x, y)| x >= y) {
                let d = u.iter().zip(&v).rev().fold(0usize, |acc, (x, y)| acc * h + (x - y));
                lhs += a[d] as u128;
            }
        }
    }
    let rhs = cells as u128 * a.iter().map(|&x| x as u128).sum::<u128>();
    Ok(DifferenceBound { lhs, rhs })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::TAU;

    fn rand_obs(rng: &mut ChaCha8Rng, n: usize) -> Observable {
        Observable::new(
            (0..n)
                .map(|_| Complex64::from_polar(rng.gen_range(0.0..1.0), rng.gen_range(0.0..TAU)))
                .collect(),
        )
    }

    fn z(n: u64) -> FiniteSystem {
        FiniteSystem::translation(&[n], &[vec![1]]).unwrap()
    }

    fn coord_translations(moduli: &[u64]) -> FiniteSystem {
        let k = moduli.len();
        let shifts: Vec<Vec<i64>> = (0..k)
            .map(|j| (0..k).map(|i| i64::from(i == j)).collect())
            .collect();
        FiniteSystem::translation(moduli, &shifts).unwrap()
    }

    // Naive DFT: f̂(ξ) = (1/N) Σ_x f(x) e(−ξx/N).
    fn fourier_l4(f: &Observable) -> f64 {
        let n = f.len();
        (0..n)
            .map(|xi| {
                let c: Complex64 = (0..n)
                    .map(|x| f.values[x] * Complex64::from_polar(1.0, -TAU * (xi * x) as f64 / n as f64))
                    .sum::<Complex64>()
                    / n as f64;
                c.norm().powi(4)
            })
            .sum::<f64>()
            .powf(0.25)
    }

    #[test]
    fn constants_have_unit_seminorms() {
        let s = coord_translations(&[3, 4]);
        let one = Observable::constant(12, Complex64::new(1.0, 0.0));
        for spec in [
            SeminormSpec::from_i64(&[vec![1, 0]]).unwrap(),
            SeminormSpec::from_i64(&[vec![1, 2], vec![0, 1], vec![3, 3]]).unwrap(),
        ] {
            for h in [1, 5, 12] {
                assert!((box_seminorm(&s, &one, &spec, h).unwrap().value - 1.0).abs() < 1e-12);
            }
        }
        for k in 0..4 {
            assert!((ghk_seminorm(&s, &one, 0, k, 12).unwrap().value - 1.0).abs() < 1e-12);
        }
        assert!((gowers_oracle(&s, &one, 1, 3) - 1.0).abs() < 1e-12);
        let (d, exact) = dual_function(&s, &one, 0, 2, 3).unwrap();
        assert!(exact);
        assert!(d.max_abs_diff(&one) < 1e-12);
    }

    #[test]
    fn character_u2_norm_is_one() {
        let s = z(16);
        let chi = Observable::character(&s, &[1]).unwrap();
        let v = ghk_seminorm(&s, &chi, 0, 2, 16).unwrap();
        assert!(v.exact);
        assert!((v.value - 1.0).abs() < 1e-12);
        let v = ghk_seminorm(&s, &chi, 0, 2, 5).unwrap();
        assert!(!v.exact);
    }

    #[test]
    fn u2_matches_fourier_and_oracle() {
        let s = z(16);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..10 {
            let f = rand_obs(&mut rng, 16);
            let a = ghk_seminorm(&s, &f, 0, 2, 16).unwrap().value;
            assert!((a - fourier_l4(&f)).abs() < 1e-9);
            assert!((a - gowers_oracle(&s, &f, 0, 2)).abs() < 1e-9);
            let b = ghk_seminorm(&s, &f, 0, 3, 16).unwrap().value;
            assert!((b - gowers_oracle(&s, &f, 0, 3)).abs() < 1e-9);
        }
    }

    #[test]
    fn degree_one_and_zero() {
        // ℤ4 shifted by 2: cycles {0,2} and {1,3}; f = 1_{0,2} − 1/2.
        let s = FiniteSystem::translation(&[4], &[vec![2]]).unwrap();
        let f = Observable::from_real(&[0.5, -0.5, 0.5, -0.5]);
        let v = ghk_seminorm(&s, &f, 0, 1, 2).unwrap();
        assert!((v.value - 0.5).abs() < 1e-12);
        assert!((gowers_oracle(&s, &f, 0, 1) - 0.5).abs() < 1e-12);

        let s = z(5);
        let f = Observable::from_real(&[1.0, -1.0, 2.0, -2.0, 0.0]);
        assert!(ghk_seminorm(&s, &f, 0, 1, 5).unwrap().value < 1e-9);
        let g = Observable::from_real(&[-1.0, -1.0, -1.0, -1.0, -1.0]);
        let v = ghk_seminorm(&s, &g, 0, 0, 1).unwrap();
        assert!((v.value - 1.0).abs() < 1e-12);
    }

    #[test]
    fn negative_inner_average_is_an_error() {
        // A mismatched cube family can average to a negative real; the root must refuse it.
        assert!(matches!(
            root_of_power(Complex64::new(-1e-3, 0.0), 2),
            Err(AveragesError::NegativeBeyondTolerance(_))
        ));
        assert_eq!(root_of_power(Complex64::new(-1e-12, 0.0), 2).unwrap().0, 0.0);
    }

    #[test]
    fn inductive_formula_matches_simultaneous() {
        let s = coord_translations(&[4, 6]);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let spec = SeminormSpec::from_i64(&[vec![1, 0], vec![0, 1], vec![1, 1]]).unwrap();
        for _ in 0..5 {
            let f = rand_obs(&mut rng, 24);
            let full = box_seminorm(&s, &f, &spec, 12).unwrap();
            assert!(full.exact);
            for sp in 1..=3 {
                let ind = inductive_box_seminorm(&s, &f, &spec, sp, 12).unwrap();
                assert!(ind.exact);
                assert!((ind.value - full.value).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn dual_identity_and_degree_one_dual() {
        let s = z(16);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..5 {
            let f = rand_obs(&mut rng, 16);
            for k in 1..=3 {
                let (d, exact) = dual_function(&s, &f, 0, k, 16).unwrap();
                assert!(exact);
                let lhs = s.integral(&f.mul(&d));
                let rhs = ghk_seminorm(&s, &f, 0, k, 16).unwrap().power;
                assert!((lhs - Complex64::new(rhs, 0.0)).norm() < 1e-9);
            }
            let (d, _) = dual_function(&s, &f, 0, 1, 16).unwrap();
            let c = s.integral(&f).conj();
            assert!(d.max_abs_diff(&Observable::constant(16, c)) < 1e-12);
        }
    }

    #[test]
    fn averages_of_characters() {
        let s = coord_translations(&[7, 7, 7]);
        let base = BaseFamily::from_i64(&[&[1], &[1], &[1]]).unwrap();
        let t = TupleState::identity(&base);
        let f1 = Observable::character(&s, &[1, 0, 0]).unwrap();
        let f2 = Observable::character(&s, &[0, -1, 0]).unwrap();
        let f3 = Observable::constant(343, one());
        let expect = f1.mul(&f2);
        for n in [1, 3, 7, 10] {
            let r = multi_average(&s, &t, &[f1.clone(), f2.clone(), f3.clone()], &[], n).unwrap();
            assert!(r.value.max_abs_diff(&expect) < 1e-12);
            assert_eq!(r.exact, n % 7 == 0);
        }

        let s = coord_translations(&[5, 7]);
        let base = BaseFamily::from_i64(&[&[1], &[1]]).unwrap();
        let t = TupleState::identity(&base);
        let f1 = Observable::character(&s, &[1, 0]).unwrap();
        let f2 = Observable::character(&s, &[0, 1]).unwrap();
        let r = multi_average(&s, &t, &[f1, f2], &[], 35).unwrap();
        assert!(r.exact);
        assert!(r.value.sup_norm() < 1e-12);

        let r = multi_average(&s, &t, &[Observable::constant(35, one()), Observable::constant(35, one())], &[], 4).unwrap();
        assert!(r.value.max_abs_diff(&Observable::constant(35, one())) < 1e-12);
    }

    #[test]
    fn gauss_sum_limit() {
        let s = z(5);
        let base = BaseFamily::from_i64(&[&[0, 1]]).unwrap();
        let t = TupleState::identity(&base);
        let chi = Observable::character(&s, &[1]).unwrap();
        let r = exact_limit_average(&s, &t, &[chi], &[]).unwrap();
        assert_eq!(r.period, 5);
        for v in &r.value.values {
            assert!((v.norm() - 5f64.sqrt().recip()).abs() < 1e-12);
        }
        let r10 = multi_average(&s, &t, &[Observable::character(&s, &[1]).unwrap()], &[], 10).unwrap();
        assert!(r10.value.max_abs_diff(&r.value) < 1e-12);
    }

    #[test]
    fn identity_transforms_give_products() {
        let s = FiniteSystem::translation(&[6], &[vec![0], vec![0]]).unwrap();
        let base = BaseFamily::from_i64(&[&[1], &[0, 1]]).unwrap();
        let t = TupleState::identity(&base);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let (f, g) = (rand_obs(&mut rng, 6), rand_obs(&mut rng, 6));
        let r = exact_limit_average(&s, &t, &[f.clone(), g.clone()], &[]).unwrap();
        assert_eq!(r.period, 1);
        assert!(r.value.max_abs_diff(&f.mul(&g)) < 1e-12);
    }

    #[test]
    fn dual_terms_enter_the_average() {
        let s = z(6);
        let base = BaseFamily::from_i64(&[&[1]]).unwrap();
        let t = TupleState::identity(&base);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let g = rand_obs(&mut rng, 6);
        let one_fn = Observable::constant(6, one());
        let dual = DualTerm {
            transform: 0,
            level: 1,
            generator: g.clone(),
            iterate: ShiftedPoly::from_poly(IntPoly::from_i64(&[1])),
        };
        // D_1(g) is the constant conj(∫g) on an ergodic rotation.
        let r = exact_limit_average(&s, &t, &[one_fn], &[dual]).unwrap();
        let c = s.integral(&g).conj();
        assert!(r.value.max_abs_diff(&Observable::constant(6, c)) < 1e-12);
    }

    #[test]
    fn weyl_means() {
        let p1 = IntPoly::from_i64(&[1]);
        let p2 = IntPoly::from_i64(&[0, 1]);
        let w = weyl_mean(std::slice::from_ref(&p1), &[Ratio::new(0, 1)]).unwrap();
        assert!((w.value - one()).norm() < 1e-12);
        assert!(weyl_mean(std::slice::from_ref(&p1), &[Ratio::new(1, 5)]).unwrap().vanishes);
        let w = weyl_mean(std::slice::from_ref(&p2), &[Ratio::new(1, 5)]).unwrap();
        assert!((w.value.norm() - 0.4472135955).abs() < 1e-9);
        assert_eq!(w.period, 5);
        // (n, n) with α = (1/5, 4/5): phase is an integer.
        let w = weyl_mean(&[p1.clone(), p1], &[Ratio::new(1, 5), Ratio::new(4, 5)]).unwrap();
        assert!((w.value - one()).norm() < 1e-12);
        assert!(weyl_mean(&[p2], &[]).is_err());
    }

    #[test]
    fn weak_joint_positive_and_negative() {
        let s = coord_translations(&[5, 7]);
        let base = BaseFamily::from_i64(&[&[1], &[1]]).unwrap();
        let r = verify_weak_joint_ergodicity(&s, &base, &VerifyOptions::default()).unwrap();
        assert!(r.criterion_i && r.criterion_ii && r.agreement);
        assert!(r.direct <= 1e-9);

        let s3 = coord_translations(&[7, 7, 7]);
        let base3 = BaseFamily::from_i64(&[&[1], &[1], &[1]]).unwrap();
        let r = verify_weak_joint_ergodicity(&s3, &base3, &VerifyOptions::default()).unwrap();
        assert!(!r.criterion_i);
        assert_eq!(r.failing_obligations[0].pair, (0, 1));
        assert!((r.direct - 1.0).abs() < 1e-9);
        assert!(r.agreement);

        let base_q = BaseFamily::from_i64(&[&[0, 1], &[1, 1]]).unwrap();
        let r = verify_weak_joint_ergodicity(&s, &base_q, &VerifyOptions::default()).unwrap();
        assert!(!r.criterion_ii);
        let top = &r.failing_eigen[0];
        assert!((top.mean.unwrap().norm() - 0.4472135955).abs() < 1e-9);
        assert!(r.direct >= 0.44);
        assert!(r.agreement);
    }

    #[test]
    fn permutation_systems_need_a_family() {
        let s = FiniteSystem::permutation(vec![vec![1, 2, 0, 3], vec![0, 1, 2, 3]], None).unwrap();
        let base = BaseFamily::from_i64(&[&[1], &[1]]).unwrap();
        assert_eq!(
            verify_weak_joint_ergodicity(&s, &base, &VerifyOptions::default()),
            Err(AveragesError::SpanNotCertified)
        );
        let opts = VerifyOptions {
            test_family: Some(indicator_tuples(4, 2, 1000).unwrap()),
            ..VerifyOptions::default()
        };
        let r = verify_weak_joint_ergodicity(&s, &base, &opts).unwrap();
        assert!(r.agreement);
        let j = verify_joint_ergodicity(&s, &base, &opts).unwrap();
        assert!(!j.criterion_i && j.agreement);
    }

    #[test]
    fn joint_ergodicity_examples() {
        let s = FiniteSystem::translation(&[5], &[vec![1], vec![2]]).unwrap();
        let base = BaseFamily::from_i64(&[&[1], &[1]]).unwrap();
        let r = verify_joint_ergodicity(&s, &base, &VerifyOptions::default()).unwrap();
        assert!(r.criterion_i);
        assert!(!r.criterion_ii);
        assert!(r.agreement);

        let single = z(5);
        let base1 = BaseFamily::from_i64(&[&[1]]).unwrap();
        let r = verify_joint_ergodicity(&single, &base1, &VerifyOptions::default()).unwrap();
        assert!(r.verdict() && r.direct <= 1e-9 && r.agreement);

        let non = FiniteSystem::translation(&[4], &[vec![2]]).unwrap();
        let r = verify_joint_ergodicity(&non, &base1, &VerifyOptions::default()).unwrap();
        assert_eq!(r.ergodic, vec![false]);
        assert!(!r.criterion_i && r.agreement);
    }

    #[test]
    fn dks_examples() {
        let base1 = BaseFamily::from_i64(&[&[1]]).unwrap();
        let r = verify_dks_conditions(&z(5), &base1, 1000).unwrap();
        assert!(r.cond_i.is_empty() && r.cond_ii && r.equivalence);

        let s = FiniteSystem::translation(&[5], &[vec![1], vec![2]]).unwrap();
        let base = BaseFamily::from_i64(&[&[1], &[1]]).unwrap();
        let r = verify_dks_conditions(&s, &base, 1000).unwrap();
        assert_eq!(r.cond_i, vec![((0, 1), true)]);
        assert!(!r.cond_ii && !r.jointly_ergodic && r.equivalence);

        let same = FiniteSystem::translation(&[5], &[vec![1], vec![1]]).unwrap();
        let r = verify_dks_conditions(&same, &base, 1000).unwrap();
        assert_eq!(r.cond_i, vec![((0, 1), false)]);
        assert!(r.equivalence);

        assert!(matches!(
            verify_dks_conditions(&s, &base, 10),
            Err(AveragesError::ProductTooLarge { .. })
        ));
    }

    #[test]
    fn difference_sequences() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for s in 1..=2 {
            for h in 1..=5usize {
                let a: Vec<u64> = (0..h.pow(s as u32)).map(|_| rng.gen_range(0..100)).collect();
                assert!(difference_sequence_bound(&a, h, s).unwrap().holds());
            }
        }
        // s = 1, H = 2, a = (a0, a1): pairs give 2a0 + a1 against 2(a0 + a1).
        let b = difference_sequence_bound(&[3, 5], 2, 1).unwrap();
        assert_eq!(b, DifferenceBound { lhs: 11, rhs: 16 });
    }

    #[test]
    fn invariant_functions_have_equal_seminorms_along_a_and_b() {
        let s = coord_translations(&[4, 6]);
        let (a, b) = (vec![1i64, 0], vec![0i64, 1]);
        let diff: Vec<i64> = a.iter().zip(&b).map(|(x, y)| x - y).collect();
        let part = crate::finsys::invariant_partition_i64(&s, &[diff]);
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let f = cond_expectation(&s, &rand_obs(&mut rng, 24), &part);
        for k in 1..=2 {
            let sa = box_seminorm(&s, &f, &SeminormSpec::from_i64(&vec![a.clone(); k]).unwrap(), 12).unwrap();
            let sb = box_seminorm(&s, &f, &SeminormSpec::from_i64(&vec![b.clone(); k]).unwrap(), 12).unwrap();
            assert!((sa.value - sb.value).abs() < 1e-9);
        }
    }
}
