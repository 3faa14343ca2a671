//! Exact coefficients: elements of the cyclotomic field Q(ζ_M) and finite
//! sums of such elements times rational powers of a formal parameter `z`.
//!
//! Every root of unity `e^{2πi r}` that shows up in a run lives in one fixed
//! field Q(ζ_M); arithmetic is reduced modulo the M-th cyclotomic polynomial,
//! so nonzero elements are invertible. Elements that happen to be rational are
//! stored with order 1 and embed into any Q(ζ_M) on demand.

use std::collections::BTreeMap;
use std::collections::HashMap;
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};
use std::sync::{Arc, Mutex, OnceLock};

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::Q;

/// Arbitrary-precision rational used for all coefficients.
pub type Rat = BigRational;

pub fn rat(n: i64, d: i64) -> Rat {
    Rat::new(BigInt::from(n), BigInt::from(d))
}

pub fn rat_from_q(q: Q) -> Rat {
    rat(*q.numer(), *q.denom())
}

/// Renders a rational as `"a/b"` (or `"a"` for integers).
pub fn rat_string(r: &Rat) -> String {
    if r.denom().is_one() {
        r.numer().to_string()
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}

pub fn q_string(q: Q) -> String {
    if *q.denom() == 1 {
        q.numer().to_string()
    } else {
        format!("{}/{}", q.numer(), q.denom())
    }
}

/// Generalized binomial coefficient C(r, m) = r(r-1)...(r-m+1)/m!.
pub fn binomial(r: Q, m: u64) -> Rat {
    let r = rat_from_q(r);
    let mut acc = Rat::one();
    for i in 0..m {
        acc = acc * (&r - Rat::from_integer(BigInt::from(i))) / Rat::from_integer(BigInt::from(i + 1));
    }
    acc
}

pub fn factorial(n: u64) -> Rat {
    let mut acc = BigInt::one();
    for i in 2..=n {
        acc *= i;
    }
    Rat::from_integer(acc)
}

fn cyclotomic_cache() -> &'static Mutex<HashMap<u32, Arc<Vec<i64>>>> {
    static CACHE: OnceLock<Mutex<HashMap<u32, Arc<Vec<i64>>>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

/// Coefficients (constant term first) of the monic M-th cyclotomic polynomial.
pub fn cyclotomic_polynomial(m: u32) -> Arc<Vec<i64>> {
    assert!(m >= 1, "cyclotomic order must be positive");
    if let Some(p) = cyclotomic_cache().lock().unwrap().get(&m) {
        return p.clone();
    }
    // x^m - 1 divided by Φ_d for every proper divisor d.
    let mut num: Vec<i128> = vec![0; m as usize + 1];
    num[0] = -1;
    num[m as usize] = 1;
    for d in 1..m {
        if m % d == 0 {
            let phi_d = cyclotomic_polynomial(d);
            num = divide_monic(&num, &phi_d);
        }
    }
    let p: Arc<Vec<i64>> = Arc::new(num.into_iter().map(|c| c as i64).collect());
    cyclotomic_cache().lock().unwrap().insert(m, p.clone());
    p
}

fn divide_monic(num: &[i128], den: &[i64]) -> Vec<i128> {
    let dn = den.len() - 1;
    let mut rem = num.to_vec();
    let qlen = num.len() - dn;
    let mut quo = vec![0i128; qlen];
    for i in (0..qlen).rev() {
        let c = rem[i + dn];
        quo[i] = c;
        for (j, &dj) in den.iter().enumerate() {
            rem[i + j] -= c * dj as i128;
        }
    }
    debug_assert!(rem.iter().all(|&c| c == 0));
    quo
}

/// Euler's totient, the degree of Q(ζ_M) over Q.
pub fn totient(m: u32) -> usize {
    cyclotomic_polynomial(m).len() - 1
}

/// An element of Q(ζ_M) in the power basis 1, ζ, ..., ζ^{φ(M)-1}.
#[derive(Clone, Debug)]
pub struct CycloRational {
    order: u32,
    coeffs: Vec<Rat>,
}

impl CycloRational {
    pub fn from_rat(r: Rat) -> Self {
        CycloRational { order: 1, coeffs: vec![r] }
    }

    pub fn from_int(n: i64) -> Self {
        Self::from_rat(rat(n, 1))
    }

    pub fn zero() -> Self {
        Self::from_int(0)
    }

    pub fn one() -> Self {
        Self::from_int(1)
    }

    /// ζ_M^k.
    pub fn zeta_power(m: u32, k: i64) -> Self {
        let k = k.rem_euclid(m as i64) as usize;
        let mut poly = vec![Rat::zero(); k + 1];
        poly[k] = Rat::one();
        Self::from_poly(m, poly)
    }

    /// Builds an element from an arbitrary polynomial in ζ_M, reducing it.
    pub fn from_poly(m: u32, poly: Vec<Rat>) -> Self {
        let phi = cyclotomic_polynomial(m);
        let deg = phi.len() - 1;
        let mut p = poly;
        if p.len() < deg {
            p.resize(deg, Rat::zero());
        }
        for i in (deg..p.len()).rev() {
            if p[i].is_zero() {
                continue;
            }
            let c = std::mem::replace(&mut p[i], Rat::zero());
            for (j, &pj) in phi.iter().enumerate().take(deg) {
                if pj != 0 {
                    p[i - deg + j] -= &c * Rat::from_integer(BigInt::from(pj));
                }
            }
        }
        p.truncate(deg);
        CycloRational { order: m, coeffs: p }.demoted()
    }

    fn demoted(self) -> Self {
        if self.order != 1 && self.coeffs[1..].iter().all(Zero::is_zero) {
            CycloRational { order: 1, coeffs: vec![self.coeffs[0].clone()] }
        } else {
            self
        }
    }

    /// Declared cyclotomic order (1 for rational elements).
    pub fn order(&self) -> u32 {
        self.order
    }

    pub fn coeffs(&self) -> &[Rat] {
        &self.coeffs
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.iter().all(Zero::is_zero)
    }

    pub fn is_one(&self) -> bool {
        self.order == 1 && self.coeffs[0].is_one()
    }

    pub fn as_rat(&self) -> Option<&Rat> {
        (self.order == 1).then(|| &self.coeffs[0])
    }

    /// Re-expresses the element in Q(ζ_m); requires `self.order() | m`.
    pub fn to_order(&self, m: u32) -> Self {
        assert!(m % self.order == 0, "Q(zeta_{}) does not embed in Q(zeta_{})", self.order, m);
        if m == self.order {
            return self.clone();
        }
        let step = (m / self.order) as usize;
        let mut poly = vec![Rat::zero(); (self.coeffs.len() - 1) * step + 1];
        for (i, c) in self.coeffs.iter().enumerate() {
            poly[i * step] = c.clone();
        }
        let phi_len = cyclotomic_polynomial(m).len() - 1;
        let mut out = Self::from_poly(m, poly);
        if out.order == 1 && m != 1 {
            let mut coeffs = vec![Rat::zero(); phi_len];
            coeffs[0] = out.coeffs[0].clone();
            out = CycloRational { order: m, coeffs };
        }
        out
    }

    /// Coefficient vector of length φ(m) in Q(ζ_m).
    pub fn coeffs_in_order(&self, m: u32) -> Vec<Rat> {
        if self.order == 1 {
            let mut v = vec![Rat::zero(); totient(m)];
            v[0] = self.coeffs[0].clone();
            return v;
        }
        self.to_order(m).coeffs
    }

    fn unify(a: &Self, b: &Self) -> (Self, Self, u32) {
        let m = a.order.lcm(&b.order);
        (a.to_order(m), b.to_order(m), m)
    }

    pub fn scale(&self, r: &Rat) -> Self {
        if r.is_zero() {
            return Self::zero();
        }
        CycloRational { order: self.order, coeffs: self.coeffs.iter().map(|c| c * r).collect() }
    }

    pub fn add_ref(&self, other: &Self) -> Self {
        if self.order == other.order {
            let coeffs = self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| a + b).collect();
            return CycloRational { order: self.order, coeffs }.demoted();
        }
        if self.order == 1 || other.order == 1 {
            let (r, c) = if self.order == 1 { (self, other) } else { (other, self) };
            let mut coeffs = c.coeffs.clone();
            coeffs[0] += &r.coeffs[0];
            return CycloRational { order: c.order, coeffs }.demoted();
        }
        let (a, b, _) = Self::unify(self, other);
        a.add_ref(&b)
    }

    pub fn neg_ref(&self) -> Self {
        CycloRational { order: self.order, coeffs: self.coeffs.iter().map(|c| -c).collect() }
    }

    pub fn mul_ref(&self, other: &Self) -> Self {
        if self.order == 1 {
            return other.scale(&self.coeffs[0]);
        }
        if other.order == 1 {
            return self.scale(&other.coeffs[0]);
        }
        if self.order != other.order {
            let (a, b, _) = Self::unify(self, other);
            return a.mul_ref(&b);
        }
        let n = self.coeffs.len();
        let mut prod = vec![Rat::zero(); 2 * n - 1];
        for (i, a) in self.coeffs.iter().enumerate() {
            if a.is_zero() {
                continue;
            }
            for (j, b) in other.coeffs.iter().enumerate() {
                if !b.is_zero() {
                    prod[i + j] += a * b;
                }
            }
        }
        Self::from_poly(self.order, prod)
    }

    /// Multiplicative inverse via the extended Euclidean algorithm modulo Φ_M.
    pub fn inverse(&self) -> Result<Self> {
        if self.is_zero() {
            return Err(Error::DivisionByZero);
        }
        if self.order == 1 {
            return Ok(Self::from_rat(self.coeffs[0].recip()));
        }
        let phi: Vec<Rat> =
            cyclotomic_polynomial(self.order).iter().map(|&c| Rat::from_integer(BigInt::from(c))).collect();
        let (g, s) = poly_ext_gcd(trim(self.coeffs.clone()), phi);
        // g is a nonzero constant because Φ_M is irreducible.
        debug_assert_eq!(g.len(), 1);
        let inv_g = g[0].recip();
        Ok(Self::from_poly(self.order, s.into_iter().map(|c| c * &inv_g).collect()))
    }

    pub fn pow(&self, e: i64) -> Result<Self> {
        let base = if e < 0 { self.inverse()? } else { self.clone() };
        let mut acc = Self::one();
        let mut b = base;
        let mut k = e.unsigned_abs();
        while k > 0 {
            if k & 1 == 1 {
                acc = acc.mul_ref(&b);
            }
            b = b.mul_ref(&b);
            k >>= 1;
        }
        Ok(acc)
    }

    pub fn to_json(&self) -> Value {
        json!({
            "order": self.order,
            "coeffs": self.coeffs.iter().map(rat_string).collect::<Vec<_>>(),
        })
    }
}

fn trim(mut p: Vec<Rat>) -> Vec<Rat> {
    while p.len() > 1 && p.last().is_some_and(Zero::is_zero) {
        p.pop();
    }
    p
}

fn poly_is_zero(p: &[Rat]) -> bool {
    p.iter().all(Zero::is_zero)
}

fn poly_sub_mul(a: &[Rat], q: &[Rat], b: &[Rat]) -> Vec<Rat> {
    let mut out = a.to_vec();
    let need = q.len() + b.len() - 1;
    if out.len() < need {
        out.resize(need, Rat::zero());
    }
    for (i, qi) in q.iter().enumerate() {
        if qi.is_zero() {
            continue;
        }
        for (j, bj) in b.iter().enumerate() {
            out[i + j] -= qi * bj;
        }
    }
    trim(out)
}

/// Polynomial division with remainder over Q.
pub(crate) fn poly_divmod(a: &[Rat], b: &[Rat]) -> (Vec<Rat>, Vec<Rat>) {
    let b = trim(b.to_vec());
    let mut r = trim(a.to_vec());
    let db = b.len() - 1;
    let lead_inv = b[db].recip();
    if r.len() < b.len() {
        return (vec![Rat::zero()], r);
    }
    let mut q = vec![Rat::zero(); r.len() - db];
    while r.len() >= b.len() && !poly_is_zero(&r) {
        let shift = r.len() - b.len();
        let c = r.last().unwrap() * &lead_inv;
        q[shift] = c.clone();
        for (j, bj) in b.iter().enumerate() {
            r[shift + j] -= &c * bj;
        }
        r.pop();
        r = trim(r);
    }
    (trim(q), r)
}

/// Returns (g, s) with s*a ≡ g (mod b), g = gcd(a, b).
fn poly_ext_gcd(a: Vec<Rat>, b: Vec<Rat>) -> (Vec<Rat>, Vec<Rat>) {
    let (mut r0, mut r1) = (a, b);
    let (mut s0, mut s1) = (vec![Rat::one()], vec![Rat::zero()]);
    while !poly_is_zero(&r1) {
        let (q, r) = poly_divmod(&r0, &r1);
        let s2 = poly_sub_mul(&s0, &q, &s1);
        r0 = std::mem::replace(&mut r1, r);
        s0 = std::mem::replace(&mut s1, s2);
    }
    (r0, s0)
}

impl PartialEq for CycloRational {
    fn eq(&self, other: &Self) -> bool {
        if self.order == other.order {
            return self.coeffs == other.coeffs;
        }
        let (a, b, _) = Self::unify(self, other);
        a.coeffs == b.coeffs
    }
}

impl Eq for CycloRational {}

impl fmt::Display for CycloRational {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.order == 1 {
            return write!(f, "{}", rat_string(&self.coeffs[0]));
        }
        let mut first = true;
        write!(f, "(")?;
        for (i, c) in self.coeffs.iter().enumerate() {
            if c.is_zero() {
                continue;
            }
            if !first {
                write!(f, " + ")?;
            }
            first = false;
            match i {
                0 => write!(f, "{}", rat_string(c))?,
                1 => write!(f, "{}*w{}", rat_string(c), self.order)?,
                _ => write!(f, "{}*w{}^{}", rat_string(c), self.order, i)?,
            }
        }
        write!(f, ")")
    }
}

/// e^{2πi r} as an element of Q(ζ_m).
pub fn root_of_unity_cyclo(r: Q, m: u32) -> Result<CycloRational> {
    let mr = r * Q::from_integer(m as i64);
    if !mr.is_integer() {
        return Err(Error::RootNotRepresentable { r, m });
    }
    Ok(CycloRational::zeta_power(m, mr.to_integer()))
}

/// Finite sum Σ c_r z^r with c_r ∈ Q(ζ_M) and rational exponents r.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Scalar {
    terms: BTreeMap<Q, CycloRational>,
}

impl Scalar {
    pub fn zero() -> Self {
        Scalar::default()
    }

    pub fn one() -> Self {
        Self::from_int(1)
    }

    pub fn from_int(n: i64) -> Self {
        Self::from_rat(rat(n, 1))
    }

    pub fn from_rat(r: Rat) -> Self {
        Self::monomial(CycloRational::from_rat(r), Q::zero())
    }

    pub fn from_q(q: Q) -> Self {
        Self::from_rat(rat_from_q(q))
    }

    pub fn from_cyclo(c: CycloRational) -> Self {
        Self::monomial(c, Q::zero())
    }

    /// c·z^r (zero if c is zero).
    pub fn monomial(c: CycloRational, r: Q) -> Self {
        let mut terms = BTreeMap::new();
        if !c.is_zero() {
            terms.insert(r, c);
        }
        Scalar { terms }
    }

    /// z^r without a lattice check; used internally once exponents are known to be valid.
    pub fn z(r: Q) -> Self {
        Self::monomial(CycloRational::one(), r)
    }

    /// z^r, requiring r ∈ (1/n)Z.
    pub fn z_power(r: Q, n: i64) -> Result<Self> {
        if n % r.denom() != 0 {
            return Err(Error::DenominatorMismatch { r, n });
        }
        Ok(Self::z(r))
    }

    /// e^{2πi r} = ζ_m^{m r mod m}.
    pub fn root_of_unity(r: Q, m: u32) -> Result<Self> {
        Ok(Self::from_cyclo(root_of_unity_cyclo(r, m)?))
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn is_one(&self) -> bool {
        self.terms.len() == 1 && self.terms.get(&Q::zero()).is_some_and(CycloRational::is_one)
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Q, &CycloRational)> {
        self.terms.iter()
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    /// Coefficient of z^r.
    pub fn coeff(&self, r: Q) -> CycloRational {
        self.terms.get(&r).cloned().unwrap_or_else(CycloRational::zero)
    }

    pub fn as_monomial(&self) -> Option<(Q, &CycloRational)> {
        if self.terms.len() == 1 {
            self.terms.iter().next().map(|(r, c)| (*r, c))
        } else {
            None
        }
    }

    /// The rational value if the scalar is a rational constant.
    pub fn as_rat(&self) -> Option<Rat> {
        if self.is_zero() {
            return Some(Rat::zero());
        }
        let (r, c) = self.as_monomial()?;
        if r.is_zero() {
            c.as_rat().cloned()
        } else {
            None
        }
    }

    fn add_term(&mut self, r: Q, c: CycloRational) {
        if c.is_zero() {
            return;
        }
        match self.terms.get_mut(&r) {
            Some(old) => {
                let s = old.add_ref(&c);
                if s.is_zero() {
                    self.terms.remove(&r);
                } else {
                    *old = s;
                }
            }
            None => {
                self.terms.insert(r, c);
            }
        }
    }

    pub fn add_assign_ref(&mut self, other: &Scalar) {
        for (r, c) in &other.terms {
            self.add_term(*r, c.clone());
        }
    }

    /// self += a * b.
    pub fn add_mul(&mut self, a: &Scalar, b: &Scalar) {
        for (ra, ca) in &a.terms {
            for (rb, cb) in &b.terms {
                self.add_term(ra + rb, ca.mul_ref(cb));
            }
        }
    }

    pub fn scale_rat(&self, r: &Rat) -> Scalar {
        if r.is_zero() {
            return Scalar::zero();
        }
        Scalar { terms: self.terms.iter().map(|(e, c)| (*e, c.scale(r))).collect() }
    }

    /// Multiplies by z^r.
    pub fn shift(&self, r: Q) -> Scalar {
        Scalar { terms: self.terms.iter().map(|(e, c)| (e + r, c.clone())).collect() }
    }

    /// c^{-1} z^{-r} for a nonzero monomial c z^r.
    pub fn monomial_inverse(&self) -> Result<Scalar> {
        let (r, c) = self.as_monomial().ok_or(if self.is_zero() { Error::DivisionByZero } else { Error::NotMonomial })?;
        Ok(Scalar::monomial(c.inverse()?, -r))
    }

    /// Integer power; negative powers need a monomial.
    pub fn pow(&self, e: i64) -> Result<Scalar> {
        let base = if e < 0 { self.monomial_inverse()? } else { self.clone() };
        let mut acc = Scalar::one();
        for _ in 0..e.unsigned_abs() {
            acc = &acc * &base;
        }
        Ok(acc)
    }

    /// Smallest and largest z-exponent.
    pub fn exponent_range(&self) -> Option<(Q, Q)> {
        Some((*self.terms.keys().next()?, *self.terms.keys().next_back()?))
    }

    /// Exact quotient in the Laurent ring Q(ζ)[z^{±1/L}], if one exists.
    pub fn div_exact(&self, d: &Scalar) -> Result<Option<Scalar>> {
        if d.is_zero() {
            return Err(Error::DivisionByZero);
        }
        if let Some((r, c)) = d.as_monomial() {
            let inv = Scalar::monomial(c.inverse()?, -r);
            return Ok(Some(self * &inv));
        }
        let (d_lo, d_hi) = d.exponent_range().unwrap();
        let (lead_exp, lead_c) = d.terms.iter().next_back().map(|(r, c)| (*r, c.clone())).unwrap();
        let lead_inv = lead_c.inverse()?;
        let mut rem = self.clone();
        let mut quo = Scalar::zero();
        let span = d_hi - d_lo;
        while let Some((r_lo, r_hi)) = rem.exponent_range() {
            if r_hi - r_lo < span {
                return Ok(None);
            }
            let c = rem.terms[&r_hi].mul_ref(&lead_inv);
            let t = Scalar::monomial(c, r_hi - lead_exp);
            rem = &rem - &(&t * d);
            quo.add_assign_ref(&t);
        }
        Ok(Some(quo))
    }

    /// Re-expresses every coefficient in Q(ζ_m).
    pub fn to_json(&self, m: u32) -> Value {
        Value::Array(
            self.terms
                .iter()
                .map(|(r, c)| {
                    json!({
                        "z": q_string(*r),
                        "order": m,
                        "coeffs": c.coeffs_in_order(m).iter().map(rat_string).collect::<Vec<_>>(),
                    })
                })
                .collect(),
        )
    }

    /// Numerical magnitude proxy used only for bounded-height sampling checks.
    pub fn height(&self) -> u64 {
        self.terms
            .values()
            .flat_map(|c| c.coeffs.iter())
            .map(|r| r.numer().abs().max(r.denom().abs()).to_u64().unwrap_or(u64::MAX))
            .max()
            .unwrap_or(0)
    }
}

/// The exact field in use: z-exponents in (1/n)Z, roots of unity of order m.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Field {
    pub n: i64,
    pub m: u32,
}

impl Field {
    /// Field for momenta in (1/d)Z: n = d², m = 4n.
    pub fn for_denominator(d: i64) -> Self {
        Field { n: d * d, m: 4 * (d * d) as u32 }
    }

    pub fn z(&self, r: Q) -> Result<Scalar> {
        Scalar::z_power(r, self.n)
    }

    /// e^{2πi r}.
    pub fn phase(&self, r: Q) -> Result<Scalar> {
        Scalar::root_of_unity(r, self.m)
    }

    /// e^{r·l_p(z)} = z^r e^{2πi p r}.
    pub fn exp_lp(&self, r: Q, p: i64) -> Result<Scalar> {
        Ok(&self.z(r)? * &self.phase(r * p)?)
    }
}

impl fmt::Display for Scalar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        let mut first = true;
        for (r, c) in &self.terms {
            if !first {
                write!(f, " + ")?;
            }
            first = false;
            if r.is_zero() {
                write!(f, "{c}")?;
            } else {
                write!(f, "{c}*z^({})", q_string(*r))?;
            }
        }
        Ok(())
    }
}

impl Add for &Scalar {
    type Output = Scalar;
    fn add(self, rhs: &Scalar) -> Scalar {
        let mut out = self.clone();
        out.add_assign_ref(rhs);
        out
    }
}

impl Sub for &Scalar {
    type Output = Scalar;
    fn sub(self, rhs: &Scalar) -> Scalar {
        let mut out = self.clone();
        for (r, c) in &rhs.terms {
            out.add_term(*r, c.neg_ref());
        }
        out
    }
}

impl Neg for &Scalar {
    type Output = Scalar;
    fn neg(self) -> Scalar {
        Scalar { terms: self.terms.iter().map(|(r, c)| (*r, c.neg_ref())).collect() }
    }
}

impl Mul for &Scalar {
    type Output = Scalar;
    fn mul(self, rhs: &Scalar) -> Scalar {
        let mut out = Scalar::zero();
        out.add_mul(self, rhs);
        out
    }
}

macro_rules! forward_owned {
    ($tr:ident, $m:ident) => {
        impl $tr for Scalar {
            type Output = Scalar;
            fn $m(self, rhs: Scalar) -> Scalar {
                (&self).$m(&rhs)
            }
        }
    };
}
forward_owned!(Add, add);
forward_owned!(Sub, sub);
forward_owned!(Mul, mul);

impl Neg for Scalar {
    type Output = Scalar;
    fn neg(self) -> Scalar {
        -&self
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn q(n: i64, d: i64) -> Q {
        Q::new(n, d)
    }

    #[test]
    fn cyclotomic_polynomials_small_orders() {
        assert_eq!(*cyclotomic_polynomial(1), vec![-1, 1]);
        assert_eq!(*cyclotomic_polynomial(4), vec![1, 0, 1]);
        assert_eq!(*cyclotomic_polynomial(6), vec![1, -1, 1]);
        assert_eq!(*cyclotomic_polynomial(8), vec![1, 0, 0, 0, 1]);
        assert_eq!(*cyclotomic_polynomial(12), vec![1, 0, -1, 0, 1]);
        assert_eq!(totient(16), 8);
        assert_eq!(totient(15), 8);
    }

    #[test]
    fn roots_of_unity_examples() {
        assert!(Scalar::root_of_unity(q(0, 1), 8).unwrap().is_one());
        assert_eq!(Scalar::root_of_unity(q(1, 2), 8).unwrap(), Scalar::from_int(-1));
        let i = Scalar::root_of_unity(q(1, 4), 8).unwrap();
        assert_eq!(&i * &i, Scalar::from_int(-1));
        assert!(matches!(Scalar::root_of_unity(q(1, 3), 8), Err(Error::RootNotRepresentable { .. })));
        let zeta = Scalar::root_of_unity(q(1, 8), 8).unwrap();
        let zeta_last = Scalar::root_of_unity(q(7, 8), 8).unwrap();
        assert!((&zeta * &zeta_last).is_one());
    }

    #[test]
    fn zeta_power_satisfies_minimal_polynomial() {
        for m in [3u32, 5, 8, 12, 16, 24] {
            let phi = cyclotomic_polynomial(m);
            let mut acc = CycloRational::zero();
            for (k, &c) in phi.iter().enumerate() {
                acc = acc.add_ref(&CycloRational::zeta_power(m, k as i64).scale(&rat(c, 1)));
            }
            assert!(acc.is_zero(), "Phi_{m}(zeta) != 0");
            assert!(CycloRational::zeta_power(m, m as i64).is_one());
        }
    }

    #[test]
    fn z_power_examples() {
        assert!(Scalar::z_power(q(0, 1), 4).unwrap().is_one());
        let h = Scalar::z_power(q(1, 2), 4).unwrap();
        assert_eq!(&h * &h, Scalar::z(q(1, 1)));
        assert!(matches!(Scalar::z_power(q(1, 3), 4), Err(Error::DenominatorMismatch { .. })));
        assert_eq!(Scalar::z_power(q(-2, 1), 1).unwrap(), Scalar::z(q(-2, 1)));
    }

    #[test]
    fn ring_examples() {
        let one_plus = &Scalar::one() + &Scalar::z(q(1, 1));
        let one_minus = &Scalar::one() - &Scalar::z(q(1, 1));
        assert_eq!(&one_plus * &one_minus, &Scalar::one() - &Scalar::z(q(2, 1)));
        let two_z3 = Scalar::monomial(CycloRational::from_int(2), q(3, 1));
        let inv = two_z3.monomial_inverse().unwrap();
        assert_eq!(inv, Scalar::monomial(CycloRational::from_rat(rat(1, 2)), q(-3, 1)));
        assert_eq!(one_plus.monomial_inverse(), Err(Error::NotMonomial));
        assert_eq!(Scalar::zero().monomial_inverse(), Err(Error::DivisionByZero));
    }

    #[test]
    fn generalized_binomials() {
        assert_eq!(binomial(q(1, 2), 2), rat(-1, 8));
        assert_eq!(binomial(q(-1, 1), 5), rat(-1, 1));
        assert_eq!(binomial(q(5, 1), 2), rat(10, 1));
        assert_eq!(binomial(q(3, 1), 4), rat(0, 1));
    }

    #[test]
    fn exact_division() {
        let a = &Scalar::one() + &Scalar::z(q(1, 2));
        let b = &Scalar::from_int(3) - &Scalar::z(q(-1, 2));
        let p = &a * &b;
        assert_eq!(p.div_exact(&a).unwrap(), Some(b.clone()));
        assert_eq!(p.div_exact(&b).unwrap(), Some(a.clone()));
        let c = &Scalar::one() + &Scalar::z(q(1, 1));
        assert_eq!(a.div_exact(&c).unwrap(), None);
    }

    fn arb_cyclo(m: u32) -> impl Strategy<Value = CycloRational> {
        prop::collection::vec((-5i64..=5, 1i64..=4), totient(m))
            .prop_map(move |v| CycloRational::from_poly(m, v.into_iter().map(|(n, d)| rat(n, d)).collect()))
    }

    fn arb_scalar() -> impl Strategy<Value = Scalar> {
        prop::collection::vec((arb_cyclo(8), -4i64..=4), 0..3).prop_map(|v| {
            let mut s = Scalar::zero();
            for (c, e) in v {
                s.add_assign_ref(&Scalar::monomial(c, Q::new(e, 2)));
            }
            s
        })
    }

    proptest! {
        #[test]
        fn ring_axioms(a in arb_scalar(), b in arb_scalar(), c in arb_scalar()) {
            prop_assert_eq!(&(&a * &b) * &c, &a * &(&b * &c));
            prop_assert_eq!(&a * &b, &b * &a);
            prop_assert_eq!(&a + &b, &b + &a);
            prop_assert_eq!(&a * &(&b + &c), &(&a * &b) + &(&a * &c));
            prop_assert_eq!(&(&a + &b) + &c, &a + &(&b + &c));
            prop_assert!((&a - &a).is_zero());
        }

        #[test]
        fn roots_multiply(r in -20i64..20, s in -20i64..20) {
            let m = 16;
            let ru = |k: i64| Scalar::root_of_unity(Q::new(k, 16), m).unwrap();
            prop_assert_eq!(&ru(r) * &ru(s), ru(r + s));
            let den = *Q::new(r, 16).denom();
            prop_assert!(ru(r).pow(den).unwrap().is_one());
        }

        #[test]
        fn field_inverse(c in arb_cyclo(12)) {
            prop_assume!(!c.is_zero());
            prop_assert!(c.mul_ref(&c.inverse().unwrap()).is_one());
        }

        #[test]
        fn monomial_inverse_is_inverse(c in arb_cyclo(16), e in -6i64..6) {
            prop_assume!(!c.is_zero());
            let x = Scalar::monomial(c, Q::new(e, 4));
            prop_assert!((&x.monomial_inverse().unwrap() * &x).is_one());
        }
    }
}
