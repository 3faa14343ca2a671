//! Sparse multivariate formal series with rational exponents.
//!
//! A [`FormalSeries`] stores its terms together with a validity [`Window`]
//! (the box of exponents on which the stored terms are complete) and a
//! [`Support`] (a coarse description of where the *untruncated* series can
//! have terms). Products use the support to decide, structurally, whether
//! each output coefficient is a finite sum, and use the windows to decide
//! where the truncated result can be trusted.

use std::collections::BTreeMap;
use std::fmt;

use num_traits::{One, Signed, Zero};
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::scalars::{binomial, q_string, rat_from_q, Scalar};
use crate::Q;

pub const NVARS: usize = 6;

/// Formal variables, in the order used for lexicographic term ordering.
#[derive(Copy, Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Variable {
    X,
    X0,
    X1,
    X2,
    T,
    Y,
}

impl Variable {
    pub const ALL: [Variable; NVARS] = [Variable::X, Variable::X0, Variable::X1, Variable::X2, Variable::T, Variable::Y];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Variable::X => "x",
            Variable::X0 => "x0",
            Variable::X1 => "x1",
            Variable::X2 => "x2",
            Variable::T => "t",
            Variable::Y => "y",
        }
    }
}

impl fmt::Display for Variable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One rational exponent per variable.
#[derive(Copy, Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct ExponentVector(pub [Q; NVARS]);

impl ExponentVector {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn single(v: Variable, e: Q) -> Self {
        let mut out = Self::zero();
        out.0[v.index()] = e;
        out
    }

    pub fn from_pairs(pairs: &[(Variable, Q)]) -> Self {
        let mut out = Self::zero();
        for &(v, e) in pairs {
            out.0[v.index()] += e;
        }
        out
    }

    pub fn get(&self, v: Variable) -> Q {
        self.0[v.index()]
    }

    pub fn with(mut self, v: Variable, e: Q) -> Self {
        self.0[v.index()] = e;
        self
    }

    pub fn add(&self, o: &Self) -> Self {
        let mut out = *self;
        for k in 0..NVARS {
            out.0[k] += o.0[k];
        }
        out
    }

    pub fn sub(&self, o: &Self) -> Self {
        let mut out = *self;
        for k in 0..NVARS {
            out.0[k] -= o.0[k];
        }
        out
    }

    pub fn scale(&self, s: Q) -> Self {
        let mut out = *self;
        for k in 0..NVARS {
            out.0[k] *= s;
        }
        out
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(Zero::is_zero)
    }

    pub fn to_json(&self) -> Value {
        let mut map = serde_json::Map::new();
        for v in Variable::ALL {
            let e = self.get(v);
            if !e.is_zero() {
                map.insert(v.name().to_string(), Value::String(q_string(e)));
            }
        }
        Value::Object(map)
    }
}

impl fmt::Display for ExponentVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for v in Variable::ALL {
            let e = self.get(v);
            if e.is_zero() {
                continue;
            }
            if !first {
                write!(f, " ")?;
            }
            first = false;
            write!(f, "{}^({})", v.name(), q_string(e))?;
        }
        if first {
            write!(f, "1")?;
        }
        Ok(())
    }
}

/// Closed interval with optional (infinite) endpoints.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Default)]
pub struct Interval {
    pub lo: Option<Q>,
    pub hi: Option<Q>,
}

impl Interval {
    pub const FULL: Interval = Interval { lo: None, hi: None };

    pub fn new(lo: i64, hi: i64) -> Self {
        Interval { lo: Some(Q::from_integer(lo)), hi: Some(Q::from_integer(hi)) }
    }

    pub fn point(q: Q) -> Self {
        Interval { lo: Some(q), hi: Some(q) }
    }

    pub fn is_bounded(&self) -> bool {
        self.lo.is_some() && self.hi.is_some()
    }

    pub fn is_empty(&self) -> bool {
        matches!((self.lo, self.hi), (Some(l), Some(h)) if l > h)
    }

    pub fn contains(&self, q: Q) -> bool {
        self.lo.is_none_or(|l| l <= q) && self.hi.is_none_or(|h| q <= h)
    }

    /// `self ⊆ other`.
    pub fn within(&self, other: &Interval) -> bool {
        let lo_ok = match (other.lo, self.lo) {
            (None, _) => true,
            (Some(_), None) => false,
            (Some(o), Some(s)) => o <= s,
        };
        let hi_ok = match (other.hi, self.hi) {
            (None, _) => true,
            (Some(_), None) => false,
            (Some(o), Some(s)) => s <= o,
        };
        lo_ok && hi_ok
    }

    pub fn intersect(&self, o: &Interval) -> Interval {
        let lo = match (self.lo, o.lo) {
            (Some(a), Some(b)) => Some(a.max(b)),
            (a, b) => a.or(b),
        };
        let hi = match (self.hi, o.hi) {
            (Some(a), Some(b)) => Some(a.min(b)),
            (a, b) => a.or(b),
        };
        Interval { lo, hi }
    }

    pub fn hull(&self, o: &Interval) -> Interval {
        let lo = match (self.lo, o.lo) {
            (Some(a), Some(b)) => Some(a.min(b)),
            _ => None,
        };
        let hi = match (self.hi, o.hi) {
            (Some(a), Some(b)) => Some(a.max(b)),
            _ => None,
        };
        Interval { lo, hi }
    }

    pub fn plus(&self, o: &Interval) -> Interval {
        Interval { lo: self.lo.zip(o.lo).map(|(a, b)| a + b), hi: self.hi.zip(o.hi).map(|(a, b)| a + b) }
    }

    pub fn minus(&self, o: &Interval) -> Interval {
        Interval { lo: self.lo.zip(o.hi).map(|(a, b)| a - b), hi: self.hi.zip(o.lo).map(|(a, b)| a - b) }
    }

    pub fn times(&self, c: i64) -> Interval {
        let c = Q::from_integer(c);
        if c.is_zero() {
            return Interval::point(Q::zero());
        }
        let lo = self.lo.map(|l| l * c);
        let hi = self.hi.map(|h| h * c);
        if c.is_positive() {
            Interval { lo, hi }
        } else {
            Interval { lo: hi, hi: lo }
        }
    }

    pub fn to_json(&self) -> Value {
        json!([self.lo.map(q_string), self.hi.map(q_string)])
    }
}

impl fmt::Display for Interval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let lo = self.lo.map(q_string).unwrap_or_else(|| "-inf".into());
        let hi = self.hi.map(q_string).unwrap_or_else(|| "+inf".into());
        write!(f, "[{lo}, {hi}]")
    }
}

/// Per-variable exponent box on which stored terms are complete.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Default)]
pub struct Window(pub [Interval; NVARS]);

impl Window {
    /// No restriction in any variable.
    pub fn unbounded() -> Self {
        Window([Interval::FULL; NVARS])
    }

    pub fn with(mut self, v: Variable, lo: i64, hi: i64) -> Self {
        self.0[v.index()] = Interval::new(lo, hi);
        self
    }

    pub fn with_interval(mut self, v: Variable, iv: Interval) -> Self {
        self.0[v.index()] = iv;
        self
    }

    /// Box with the same integer range in each listed variable.
    pub fn cube(vars: &[Variable], lo: i64, hi: i64) -> Self {
        vars.iter().fold(Self::unbounded(), |w, &v| w.with(v, lo, hi))
    }

    pub fn get(&self, v: Variable) -> Interval {
        self.0[v.index()]
    }

    pub fn contains(&self, e: &ExponentVector) -> bool {
        (0..NVARS).all(|k| self.0[k].contains(e.0[k]))
    }

    pub fn within(&self, o: &Window) -> bool {
        (0..NVARS).all(|k| self.0[k].within(&o.0[k]))
    }

    pub fn intersect(&self, o: &Window) -> Window {
        let mut out = *self;
        for k in 0..NVARS {
            out.0[k] = self.0[k].intersect(&o.0[k]);
        }
        out
    }

    pub fn is_unbounded(&self) -> bool {
        self.0.iter().all(|iv| iv.lo.is_none() && iv.hi.is_none())
    }

    pub fn to_json(&self) -> Value {
        let mut map = serde_json::Map::new();
        for v in Variable::ALL {
            let iv = self.get(v);
            if iv.lo.is_some() || iv.hi.is_some() {
                map.insert(v.name().to_string(), iv.to_json());
            }
        }
        Value::Object(map)
    }
}

impl fmt::Display for Window {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut parts = Vec::new();
        for v in Variable::ALL {
            let iv = self.get(v);
            if iv.lo.is_some() || iv.hi.is_some() {
                parts.push(format!("{} in {}", v.name(), iv));
            }
        }
        if parts.is_empty() {
            write!(f, "everywhere")
        } else {
            write!(f, "{}", parts.join(", "))
        }
    }
}

/// `coeffs · e ∈ range` for every exponent e of the untruncated series.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LinearConstraint {
    pub coeffs: [i64; NVARS],
    pub range: Interval,
}

impl LinearConstraint {
    fn value(&self, e: &ExponentVector) -> Q {
        (0..NVARS).map(|k| e.0[k] * Q::from_integer(self.coeffs[k])).sum()
    }

    fn eval_box(&self, b: &[Interval; NVARS]) -> Interval {
        let mut acc = Interval::point(Q::zero());
        for k in 0..NVARS {
            if self.coeffs[k] != 0 {
                acc = acc.plus(&b[k].times(self.coeffs[k]));
            }
        }
        acc
    }
}

/// Where the untruncated series can have terms: a box plus linear constraints.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Support {
    pub bounds: [Interval; NVARS],
    pub constraints: Vec<LinearConstraint>,
}

impl Support {
    pub fn everywhere() -> Self {
        Support { bounds: [Interval::FULL; NVARS], constraints: Vec::new() }
    }

    /// Bounding box of a finite set of exponents (all-zero box if empty).
    pub fn of_terms<'a>(exps: impl Iterator<Item = &'a ExponentVector>) -> Self {
        let mut bounds: Option<[Interval; NVARS]> = None;
        for e in exps {
            let pt: [Interval; NVARS] = std::array::from_fn(|k| Interval::point(e.0[k]));
            bounds = Some(match bounds {
                None => pt,
                Some(b) => std::array::from_fn(|k| b[k].hull(&pt[k])),
            });
        }
        Support { bounds: bounds.unwrap_or([Interval::point(Q::zero()); NVARS]), constraints: Vec::new() }
    }

    /// Support of `base + Σ ℤ·free + Σ ℕ·nonneg`.
    pub fn cone(base: ExponentVector, free: &[ExponentVector], nonneg: &[ExponentVector]) -> Self {
        let mut bounds = [Interval::FULL; NVARS];
        for k in 0..NVARS {
            let free_zero = free.iter().all(|g| g.0[k].is_zero());
            let lo_ok = free_zero && nonneg.iter().all(|g| !g.0[k].is_negative());
            let hi_ok = free_zero && nonneg.iter().all(|g| !g.0[k].is_positive());
            bounds[k] = Interval { lo: lo_ok.then_some(base.0[k]), hi: hi_ok.then_some(base.0[k]) };
        }
        let gens: Vec<ExponentVector> = free.iter().chain(nonneg.iter()).copied().collect();
        let active: Vec<usize> = (0..NVARS).filter(|&k| !bounds[k].is_bounded()).collect();
        let mut constraints: Vec<LinearConstraint> = integer_nullspace(&gens, &active)
            .into_iter()
            .map(|coeffs| {
                let c = LinearConstraint { coeffs, range: Interval::FULL };
                let v = c.value(&base);
                LinearConstraint { range: Interval::point(v), ..c }
            })
            .collect();
        // Half-spaces: directions killed by the free generators on which
        // every nonnegative generator has one sign.
        for coeffs in integer_nullspace(free, &active) {
            let c = LinearConstraint { coeffs, range: Interval::FULL };
            let signs: Vec<Q> = nonneg.iter().map(|g| c.value(g)).collect();
            if signs.iter().all(Q::is_zero) {
                continue;
            }
            let v = c.value(&base);
            let range = if signs.iter().all(|s| !s.is_negative()) {
                Interval { lo: Some(v), hi: None }
            } else if signs.iter().all(|s| !s.is_positive()) {
                Interval { lo: None, hi: Some(v) }
            } else {
                continue;
            };
            constraints.push(LinearConstraint { range, ..c });
        }
        Support { bounds, constraints }
    }

    fn product(&self, o: &Support) -> Support {
        let bounds = std::array::from_fn(|k| self.bounds[k].plus(&o.bounds[k]));
        let mut constraints: Vec<LinearConstraint> = Vec::new();
        for (mine, theirs) in [(self, o), (o, self)] {
            for c in &mine.constraints {
                if constraints.iter().any(|d| d.coeffs == c.coeffs) {
                    continue;
                }
                let mut other = c.eval_box(&theirs.bounds);
                if let Some(d) = theirs.constraints.iter().find(|d| d.coeffs == c.coeffs) {
                    other = other.intersect(&d.range);
                }
                constraints.push(LinearConstraint { coeffs: c.coeffs, range: c.range.plus(&other) });
            }
        }
        Support { bounds, constraints }
    }

    fn union(&self, o: &Support) -> Support {
        let bounds = std::array::from_fn(|k| self.bounds[k].hull(&o.bounds[k]));
        let mut constraints = Vec::new();
        for c in &self.constraints {
            let mine = c.range;
            let theirs = match o.constraints.iter().find(|d| d.coeffs == c.coeffs) {
                Some(d) => d.range,
                None => c.eval_box(&o.bounds),
            };
            let range = mine.hull(&theirs);
            if range.lo.is_some() || range.hi.is_some() {
                constraints.push(LinearConstraint { coeffs: c.coeffs, range });
            }
        }
        Support { bounds, constraints }
    }

    fn shifted(&self, by: &ExponentVector) -> Support {
        let pt: [Interval; NVARS] = std::array::from_fn(|k| Interval::point(by.0[k]));
        Support {
            bounds: std::array::from_fn(|k| self.bounds[k].plus(&pt[k])),
            constraints: self
                .constraints
                .iter()
                .map(|c| LinearConstraint { coeffs: c.coeffs, range: c.range.plus(&Interval::point(c.value(by))) })
                .collect(),
        }
    }
}

/// Integer basis of { c : c·g = 0 for all g }, restricted to the `active` coordinates.
fn integer_nullspace(gens: &[ExponentVector], active: &[usize]) -> Vec<[i64; NVARS]> {
    let n = active.len();
    let mut rows: Vec<Vec<Q>> = gens.iter().map(|g| active.iter().map(|&k| g.0[k]).collect()).collect();
    let mut pivots = Vec::new();
    let mut r = 0;
    for col in 0..n {
        let Some(p) = (r..rows.len()).find(|&i| !rows[i][col].is_zero()) else { continue };
        rows.swap(r, p);
        let inv = rows[r][col].recip();
        for x in rows[r].iter_mut() {
            *x *= inv;
        }
        for i in 0..rows.len() {
            if i != r && !rows[i][col].is_zero() {
                let f = rows[i][col];
                for j in 0..n {
                    let d = rows[r][j] * f;
                    rows[i][j] -= d;
                }
            }
        }
        pivots.push(col);
        r += 1;
    }
    let mut out = Vec::new();
    for free in (0..n).filter(|c| !pivots.contains(c)) {
        let mut v = vec![Q::zero(); n];
        v[free] = Q::one();
        for (i, &pc) in pivots.iter().enumerate() {
            v[pc] = -rows[i][free];
        }
        let l = v.iter().fold(1i64, |acc, q| num_integer::lcm(acc, *q.denom()));
        let mut c = [0i64; NVARS];
        for (j, &k) in active.iter().enumerate() {
            c[k] = (v[j] * Q::from_integer(l)).to_integer();
        }
        out.push(c);
    }
    out
}

/// Coefficients a formal series may carry.
pub trait Coefficient: Clone + PartialEq + fmt::Debug {
    fn is_zero(&self) -> bool;
    fn add_assign(&mut self, other: &Self);
    fn scaled(&self, s: &Scalar) -> Self;
    fn to_json(&self, m: u32) -> Value;
    fn render(&self) -> String;
}

impl Coefficient for Scalar {
    fn is_zero(&self) -> bool {
        Scalar::is_zero(self)
    }
    fn add_assign(&mut self, other: &Self) {
        self.add_assign_ref(other)
    }
    fn scaled(&self, s: &Scalar) -> Self {
        self * s
    }
    fn to_json(&self, m: u32) -> Value {
        Scalar::to_json(self, m)
    }
    fn render(&self) -> String {
        self.to_string()
    }
}

/// A coefficient-times-monomial `c · x^e` with `c` a single-term scalar.
#[derive(Clone, Debug, PartialEq)]
pub struct Monomial {
    pub coeff: Scalar,
    pub exps: ExponentVector,
}

impl Monomial {
    pub fn new(coeff: Scalar, exps: ExponentVector) -> Self {
        Monomial { coeff, exps }
    }

    pub fn var(v: Variable) -> Self {
        Monomial { coeff: Scalar::one(), exps: ExponentVector::single(v, Q::one()) }
    }

    pub fn var_pow(v: Variable, e: i64) -> Self {
        Monomial { coeff: Scalar::one(), exps: ExponentVector::single(v, Q::from_integer(e)) }
    }

    pub fn scalar(c: Scalar) -> Self {
        Monomial { coeff: c, exps: ExponentVector::zero() }
    }

    pub fn times(&self, c: &Scalar) -> Self {
        Monomial { coeff: &self.coeff * c, exps: self.exps }
    }

    pub fn neg(&self) -> Self {
        Monomial { coeff: -&self.coeff, exps: self.exps }
    }

    fn pow(&self, r: Q) -> Result<Monomial> {
        Ok(Monomial { coeff: scalar_power(&self.coeff, r)?, exps: self.exps.scale(r) })
    }
}

/// c^r for a single-term scalar; rational r requires a unit coefficient.
pub fn scalar_power(c: &Scalar, r: Q) -> Result<Scalar> {
    let (ze, cc) = c.as_monomial().ok_or(Error::NotMonomial)?;
    if r.is_integer() {
        return Ok(Scalar::from_cyclo(cc.pow(r.to_integer())?).shift(ze * r));
    }
    if cc.is_one() {
        Ok(Scalar::z(ze * r))
    } else {
        Err(Error::NotMonomial)
    }
}

/// First exponent (in term order) at which two series differ.
#[derive(Clone, Debug, PartialEq)]
pub struct Witness<C> {
    pub exponent: ExponentVector,
    pub left: Option<C>,
    pub right: Option<C>,
}

impl<C: Coefficient> Witness<C> {
    pub fn to_json(&self, m: u32) -> Value {
        json!({
            "exponent": self.exponent.to_json(),
            "left": self.left.as_ref().map(|c| c.to_json(m)).unwrap_or(Value::Null),
            "right": self.right.as_ref().map(|c| c.to_json(m)).unwrap_or(Value::Null),
        })
    }

    pub fn describe(&self) -> String {
        let show = |c: &Option<C>| c.as_ref().map(|c| c.render()).unwrap_or_else(|| "0".into());
        format!("at {}: {} vs {}", self.exponent, show(&self.left), show(&self.right))
    }
}

/// Sparse multivariate series with a validity window.
#[derive(Clone, Debug, PartialEq)]
pub struct FormalSeries<C = Scalar> {
    terms: BTreeMap<ExponentVector, C>,
    window: Window,
    support: Support,
}

impl<C: Coefficient> FormalSeries<C> {
    pub fn zero() -> Self {
        FormalSeries { terms: BTreeMap::new(), window: Window::unbounded(), support: Support::of_terms(std::iter::empty()) }
    }

    /// A finite series that is known everywhere.
    pub fn exact(terms: impl IntoIterator<Item = (ExponentVector, C)>) -> Self {
        let mut out = BTreeMap::new();
        for (e, c) in terms {
            add_into(&mut out, e, &c);
        }
        let support = Support::of_terms(out.keys());
        FormalSeries { terms: out, window: Window::unbounded(), support }
    }

    /// Builds a truncated series; terms outside `window` are dropped.
    pub fn truncated(terms: impl IntoIterator<Item = (ExponentVector, C)>, window: Window, support: Support) -> Self {
        let mut out = BTreeMap::new();
        for (e, c) in terms {
            if window.contains(&e) {
                add_into(&mut out, e, &c);
            }
        }
        FormalSeries { terms: out, window, support }
    }

    /// Tabulates `f` on the lattice `offset + ℤ` of each listed variable,
    /// inside `window` and the support box. Listed variables need bounded
    /// windows once intersected with the support; unlisted ones stay at 0.
    pub fn from_fn(
        vars: &[(Variable, Q)],
        window: Window,
        support: Support,
        mut f: impl FnMut(&ExponentVector) -> Result<C>,
    ) -> Result<Self> {
        let mut ranges = Vec::new();
        for &(v, off) in vars {
            let iv = window.get(v).intersect(&support.bounds[v.index()]);
            if iv.is_empty() {
                return Ok(FormalSeries { terms: BTreeMap::new(), window, support });
            }
            let (Some(lo), Some(hi)) = (iv.lo, iv.hi) else {
                return Err(Error::Window(format!("tabulation needs a bounded window in {v}")));
            };
            let first = (lo - off).ceil().to_integer();
            let last = (hi - off).floor().to_integer();
            ranges.push((v, off, first, last));
        }
        let mut terms = BTreeMap::new();
        let mut idx: Vec<i64> = ranges.iter().map(|r| r.2).collect();
        if ranges.iter().any(|r| r.2 > r.3) {
            return Ok(FormalSeries { terms, window, support });
        }
        loop {
            let mut e = ExponentVector::zero();
            for (k, r) in ranges.iter().enumerate() {
                e = e.with(r.0, r.1 + Q::from_integer(idx[k]));
            }
            if support.constraints.iter().all(|c| c.range.contains(c.value(&e))) {
                let c = f(&e)?;
                if !c.is_zero() {
                    terms.insert(e, c);
                }
            }
            let mut k = 0;
            loop {
                if k == ranges.len() {
                    return Ok(FormalSeries { terms, window, support });
                }
                if idx[k] < ranges[k].3 {
                    idx[k] += 1;
                    break;
                }
                idx[k] = ranges[k].2;
                k += 1;
            }
        }
    }

    pub fn terms(&self) -> impl Iterator<Item = (&ExponentVector, &C)> {
        self.terms.iter()
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn window(&self) -> Window {
        self.window
    }

    pub fn support(&self) -> &Support {
        &self.support
    }

    /// True when the stored terms are the whole series.
    pub fn is_exact(&self) -> bool {
        self.window.is_unbounded()
    }

    pub fn coeff(&self, e: &ExponentVector) -> Option<&C> {
        self.terms.get(e)
    }

    /// Narrows the validity window, dropping terms outside it.
    pub fn restrict(&self, w: &Window) -> Self {
        let window = self.window.intersect(w);
        FormalSeries {
            terms: self.terms.iter().filter(|(e, _)| window.contains(e)).map(|(e, c)| (*e, c.clone())).collect(),
            window,
            support: self.support.clone(),
        }
    }

    /// Replaces the declared support (used when a bound is known from elsewhere).
    pub fn with_support(mut self, s: Support) -> Self {
        self.support = s;
        self
    }

    pub fn add(&self, o: &Self) -> Self {
        let window = self.window.intersect(&o.window);
        let mut terms = BTreeMap::new();
        for (e, c) in self.terms.iter().chain(o.terms.iter()) {
            if window.contains(e) {
                add_into(&mut terms, *e, c);
            }
        }
        FormalSeries { terms, window, support: self.support.union(&o.support) }
    }

    pub fn scale(&self, s: &Scalar) -> Self {
        let mut terms = BTreeMap::new();
        for (e, c) in &self.terms {
            add_into(&mut terms, *e, &c.scaled(s));
        }
        FormalSeries { terms, window: self.window, support: self.support.clone() }
    }

    pub fn neg(&self) -> Self {
        self.scale(&Scalar::from_int(-1))
    }

    pub fn sub(&self, o: &Self) -> Self {
        self.add(&o.neg())
    }

    /// Multiplies by the monomial `m`.
    pub fn shift(&self, m: &Monomial) -> Self {
        let mut window = self.window;
        for k in 0..NVARS {
            window.0[k] = window.0[k].plus(&Interval::point(m.exps.0[k]));
        }
        let mut terms = BTreeMap::new();
        for (e, c) in &self.terms {
            add_into(&mut terms, e.add(&m.exps), &c.scaled(&m.coeff));
        }
        FormalSeries { terms, window, support: self.support.shifted(&m.exps) }
    }

    /// Coefficient of `v^{-1}`, as a series in the remaining variables.
    pub fn residue(&self, v: Variable) -> Result<Self> {
        let k = v.index();
        if !self.window.0[k].contains(-Q::one()) {
            return Err(Error::Window(format!("residue in {v} needs exponent -1 inside {}", self.window.0[k])));
        }
        let mut terms = BTreeMap::new();
        for (e, c) in &self.terms {
            if e.0[k] == -Q::one() {
                add_into(&mut terms, e.with(v, Q::zero()), c);
            }
        }
        let mut window = self.window;
        window.0[k] = Interval::FULL;
        let mut support = self.support.clone();
        support.bounds[k] = Interval::point(Q::zero());
        support.constraints.retain(|c| c.coeffs[k] == 0);
        Ok(FormalSeries { terms, window, support })
    }

    /// Term-by-term d/dv.
    pub fn derivative(&self, v: Variable) -> Self {
        let k = v.index();
        let mut terms = BTreeMap::new();
        for (e, c) in &self.terms {
            let n = e.0[k];
            if n.is_zero() {
                continue;
            }
            let s = Scalar::from_rat(rat_from_q(n));
            add_into(&mut terms, e.with(v, n - Q::one()), &c.scaled(&s));
        }
        let by = ExponentVector::single(v, -Q::one());
        let mut window = self.window;
        window.0[k] = window.0[k].plus(&Interval::point(-Q::one()));
        FormalSeries { terms, window, support: self.support.shifted(&by) }
    }

    /// Substitutes `v ↦ image` (a scalar monomial times a monomial in other variables,
    /// or a power of `v` itself).
    pub fn substitute_monomial(&self, v: Variable, image: &Monomial) -> Result<Self> {
        let k = v.index();
        let others: Vec<usize> = (0..NVARS).filter(|&j| j != k && !image.exps.0[j].is_zero()).collect();
        for &j in &others {
            if self.support.bounds[j] != Interval::point(Q::zero()) {
                return Err(Error::Window(format!(
                    "substitution image uses {}, which already occurs in the series",
                    Variable::ALL[j]
                )));
            }
        }
        let mut terms = BTreeMap::new();
        for (e, c) in &self.terms {
            let n = e.0[k];
            let img = image.pow(n)?;
            let target = e.with(v, Q::zero()).add(&img.exps);
            add_into(&mut terms, target, &c.scaled(&img.coeff));
        }
        let src = self.window.0[k];
        let src_sup = self.support.bounds[k];
        let mut window = self.window;
        let mut bounds = self.support.bounds;
        window.0[k] = Interval::FULL;
        bounds[k] = Interval::point(Q::zero());
        let own = image.exps.0[k];
        let mut touched: Vec<usize> = others.clone();
        if !own.is_zero() {
            touched.push(k);
        }
        for &j in &touched {
            let c = image.exps.0[j];
            let scale = |iv: Interval| {
                let s = Interval { lo: iv.lo.map(|x| x * c), hi: iv.hi.map(|x| x * c) };
                if c.is_negative() { Interval { lo: s.hi, hi: s.lo } } else { s }
            };
            window.0[j] = scale(src);
            bounds[j] = scale(src_sup);
        }
        let mut constraints: Vec<LinearConstraint> =
            self.support.constraints.iter().filter(|c| c.coeffs[k] == 0).cloned().collect();
        for pair in touched.windows(2) {
            let (a, b) = (pair[0], pair[1]);
            let (ca, cb) = (image.exps.0[a], image.exps.0[b]);
            let l = num_integer::lcm(*ca.denom(), *cb.denom());
            let mut coeffs = [0i64; NVARS];
            coeffs[a] = (cb * Q::from_integer(l)).to_integer();
            coeffs[b] = -(ca * Q::from_integer(l)).to_integer();
            constraints.push(LinearConstraint { coeffs, range: Interval::point(Q::zero()) });
        }
        Ok(FormalSeries { terms, window, support: Support { bounds, constraints } })
    }

    /// `x^n ↦ e^{n l_p(z)} = z^n e^{2πi p n}` for `v = x`, folding `v` away.
    pub fn eval_exp_lp(&self, v: Variable, p: i64, m: u32) -> Result<Self> {
        let k = v.index();
        if !self.support.bounds[k].within(&self.window.0[k]) {
            return Err(Error::Window(format!(
                "evaluating {v} at e^(l_p(z)) needs every {v}-term, window is {}",
                self.window.0[k]
            )));
        }
        let mut terms = BTreeMap::new();
        for (e, c) in &self.terms {
            let n = e.0[k];
            let factor = &Scalar::z(n) * &Scalar::root_of_unity(n * Q::from_integer(p), m)?;
            add_into(&mut terms, e.with(v, Q::zero()), &c.scaled(&factor));
        }
        let mut window = self.window;
        window.0[k] = Interval::FULL;
        let mut support = self.support.clone();
        support.bounds[k] = Interval::point(Q::zero());
        support.constraints.retain(|c| c.coeffs[k] == 0);
        Ok(FormalSeries { terms, window, support })
    }

    /// Compares coefficients on `w`; `None` means equal.
    pub fn equal_on_window(&self, o: &Self, w: &Window) -> Result<Option<Witness<C>>> {
        if !w.within(&self.window) || !w.within(&o.window) {
            return Err(Error::Window(format!(
                "comparison window {w} not inside operand windows {} and {}",
                self.window, o.window
            )));
        }
        let mut keys: Vec<&ExponentVector> =
            self.terms.keys().chain(o.terms.keys()).filter(|e| w.contains(e)).collect();
        keys.sort();
        keys.dedup();
        for e in keys {
            let a = self.terms.get(e);
            let b = o.terms.get(e);
            if a != b {
                return Ok(Some(Witness { exponent: *e, left: a.cloned(), right: b.cloned() }));
            }
        }
        Ok(None)
    }

    pub fn to_json(&self, m: u32) -> Value {
        json!({
            "window": self.window.to_json(),
            "exact": self.is_exact(),
            "terms": self.terms.iter().map(|(e, c)| json!({"exponent": e.to_json(), "coeff": c.to_json(m)})).collect::<Vec<_>>(),
        })
    }

    pub fn to_text(&self) -> String {
        let body: Vec<String> = self.terms.iter().map(|(e, c)| format!("({}) {}", c.render(), e)).collect();
        format!("{} on {}", if body.is_empty() { "0".into() } else { body.join(" + ") }, self.window)
    }
}

fn add_into<C: Coefficient>(map: &mut BTreeMap<ExponentVector, C>, e: ExponentVector, c: &C) {
    if c.is_zero() {
        return;
    }
    match map.get_mut(&e) {
        Some(old) => {
            old.add_assign(c);
            if old.is_zero() {
                map.remove(&e);
            }
        }
        None => {
            map.insert(e, c.clone());
        }
    }
}

/// Box of exponents `e1` of the first factor that can pair with some `e2`
/// of the second factor to land in `w`; errors if that set is unbounded.
fn contribution_box(a: &Support, b: &Support, w: &Window) -> Result<([Interval; NVARS], [Interval; NVARS])> {
    let mut e1: [Interval; NVARS] = std::array::from_fn(|k| a.bounds[k].intersect(&w.0[k].minus(&b.bounds[k])));
    let mut cons: Vec<LinearConstraint> = a.constraints.clone();
    for c in &b.constraints {
        let cw = c.eval_box(&w.0);
        cons.push(LinearConstraint { coeffs: c.coeffs, range: cw.minus(&c.range) });
    }
    for _ in 0..8 {
        let mut changed = false;
        for c in &cons {
            for k in 0..NVARS {
                let ck = c.coeffs[k];
                if ck == 0 {
                    continue;
                }
                let mut rest = Interval::point(Q::zero());
                for j in 0..NVARS {
                    if j != k && c.coeffs[j] != 0 {
                        rest = rest.plus(&e1[j].times(c.coeffs[j]));
                    }
                }
                let scaled = c.range.minus(&rest);
                let inv = Q::new(1, ck);
                let bound = Interval { lo: scaled.lo.map(|x| x * inv), hi: scaled.hi.map(|x| x * inv) };
                let bound = if ck < 0 { Interval { lo: bound.hi, hi: bound.lo } } else { bound };
                let new = e1[k].intersect(&bound);
                if new != e1[k] {
                    e1[k] = new;
                    changed = true;
                }
            }
        }
        if !changed {
            break;
        }
    }
    if e1.iter().any(Interval::is_empty) {
        return Ok((e1, e1));
    }
    if let Some(k) = (0..NVARS).find(|&k| !e1[k].is_bounded()) {
        return Err(Error::IllDefined { at: format!("{} (unbounded in {})", w, Variable::ALL[k]) });
    }
    let e2 = std::array::from_fn(|k| b.bounds[k].intersect(&w.0[k].minus(&e1[k])));
    Ok((e1, e2))
}

/// Windows on which the two factors of `a·b` must be known for the product
/// to be exact on `w`; `None` when no pair of terms can land in `w`.
pub fn factor_windows(a: &Support, b: &Support, w: &Window) -> Result<Option<(Window, Window)>> {
    let (e1, e2) = contribution_box(a, b, w)?;
    if e1.iter().any(Interval::is_empty) || e2.iter().any(Interval::is_empty) {
        return Ok(None);
    }
    Ok(Some((Window(e1), Window(e2))))
}

/// `a·b` on `w`, building each factor only on the window it must cover.
/// `a` is first built on `w` to learn its support.
pub fn product_with<C: Coefficient>(
    a: impl Fn(&Window) -> Result<FormalSeries>,
    b_support: &Support,
    b: impl FnOnce(&Window) -> Result<FormalSeries<C>>,
    w: &Window,
) -> Result<FormalSeries<C>> {
    let probe = a(w)?;
    match factor_windows(probe.support(), b_support, w)? {
        None => Ok(FormalSeries { terms: BTreeMap::new(), window: *w, support: probe.support.product(b_support) }),
        Some((wa, wb)) => {
            let fa = if box_within(&wa.0, &probe.window) { probe } else { a(&wa)? };
            let fb = b(&wb)?;
            mul_on(&fa, &fb, w)
        }
    }
}

/// Support in one variable, every other exponent fixed at zero.
pub fn support_1d(v: Variable, lo: Option<Q>, hi: Option<Q>) -> Support {
    let mut s = Support { bounds: [Interval::point(Q::zero()); NVARS], constraints: Vec::new() };
    s.bounds[v.index()] = Interval { lo, hi };
    s
}

fn box_within(b: &[Interval; NVARS], w: &Window) -> bool {
    (0..NVARS).all(|k| b[k].is_empty() || b[k].within(&w.0[k]))
}

/// Product `a·b` on the output window `w`.
///
/// Errors with [`Error::IllDefined`] when some coefficient in `w` would be an
/// infinite sum, and with [`Error::Window`] when the truncated factors do not
/// contain every contributing term.
pub fn mul_on<C: Coefficient>(a: &FormalSeries<Scalar>, b: &FormalSeries<C>, w: &Window) -> Result<FormalSeries<C>> {
    let (e1, e2) = contribution_box(&a.support, &b.support, w)?;
    let empty = e1.iter().any(Interval::is_empty) || e2.iter().any(Interval::is_empty);
    if !empty {
        if !box_within(&e1, &a.window) {
            return Err(Error::Window(format!("first factor known on {}, product on {w} needs more", a.window)));
        }
        if !box_within(&e2, &b.window) {
            return Err(Error::Window(format!("second factor known on {}, product on {w} needs more", b.window)));
        }
    }
    let in_box = |e: &ExponentVector, bx: &[Interval; NVARS]| (0..NVARS).all(|k| bx[k].contains(e.0[k]));
    let left: Vec<_> = a.terms.iter().filter(|(e, _)| in_box(e, &e1)).collect();
    let right: Vec<_> = b.terms.iter().filter(|(e, _)| in_box(e, &e2)).collect();
    let mut terms = BTreeMap::new();
    if !empty {
        for (ea, ca) in &left {
            for (eb, cb) in &right {
                let e = ea.add(eb);
                if w.contains(&e) {
                    add_into(&mut terms, e, &cb.scaled(ca));
                }
            }
        }
    }
    Ok(FormalSeries { terms, window: *w, support: a.support.product(&b.support) })
}

/// Product on the largest window the factors certify, variable by variable.
pub fn mul<C: Coefficient>(a: &FormalSeries<Scalar>, b: &FormalSeries<C>) -> Result<FormalSeries<C>> {
    let mut w = Window::unbounded();
    for k in 0..NVARS {
        let (wa, sa, wb, sb) = (a.window.0[k], a.support.bounds[k], b.window.0[k], b.support.bounds[k]);
        let lo_a_cut = wa.lo.is_some() && !sa.lo.zip(wa.lo).is_some_and(|(s, w)| s >= w);
        let lo_b_cut = wb.lo.is_some() && !sb.lo.zip(wb.lo).is_some_and(|(s, w)| s >= w);
        let hi_a_cut = wa.hi.is_some() && !sa.hi.zip(wa.hi).is_some_and(|(s, w)| s <= w);
        let hi_b_cut = wb.hi.is_some() && !sb.hi.zip(wb.hi).is_some_and(|(s, w)| s <= w);
        let mut lo: Option<Option<Q>> = None;
        let mut hi: Option<Option<Q>> = None;
        let need = |slot: &mut Option<Option<Q>>, v: Option<Q>, pick_max: bool| {
            *slot = Some(match (*slot, v) {
                (None, v) => v,
                (Some(Some(o)), Some(n)) => Some(if pick_max { o.max(n) } else { o.min(n) }),
                _ => None,
            });
        };
        if lo_a_cut {
            need(&mut lo, wa.lo.zip(sb.hi).map(|(x, y)| x + y), true);
        }
        if lo_b_cut {
            need(&mut lo, wb.lo.zip(sa.hi).map(|(x, y)| x + y), true);
        }
        if hi_a_cut {
            need(&mut hi, wa.hi.zip(sb.lo).map(|(x, y)| x + y), false);
        }
        if hi_b_cut {
            need(&mut hi, wb.hi.zip(sa.lo).map(|(x, y)| x + y), false);
        }
        if lo == Some(None) || hi == Some(None) {
            return Err(Error::Window(format!("no certifiable window in {}", Variable::ALL[k])));
        }
        w.0[k] = Interval { lo: lo.flatten(), hi: hi.flatten() };
    }
    mul_on(a, b, &w)
}

/// δ(v) = Σ_{n∈ℤ} v^n restricted to the window of `v`.
pub fn delta(v: Variable, window: Interval) -> Result<FormalSeries> {
    let (Some(lo), Some(hi)) = (window.lo, window.hi) else {
        return Err(Error::Window(format!("delta({v}) needs a bounded window")));
    };
    let lo = lo.ceil().to_integer();
    let hi = hi.floor().to_integer();
    let terms = (lo..=hi).map(|n| (ExponentVector::single(v, Q::from_integer(n)), Scalar::one()));
    let support = Support::cone(ExponentVector::zero(), &[ExponentVector::single(v, Q::one())], &[]);
    Ok(FormalSeries::truncated(terms, Window::unbounded().with_interval(v, window), support))
}

/// ι₊(a + b)^r = Σ_{m≥0} C(r, m) a^{r-m} b^m, expanded in nonnegative powers of `b`.
pub fn iota_plus_binomial(a: &Monomial, b: &Monomial, r: Q, window: &Window) -> Result<FormalSeries> {
    let diff = b.exps.sub(&a.exps);
    let base = a.exps.scale(r);
    let terminating = r.is_integer() && !r.is_negative();
    let m_max = m_limit(&base, &diff, window, terminating.then(|| r.to_integer()))?;
    let mut terms = Vec::new();
    for m in 0..=m_max {
        let c = binomial(r, m as u64);
        if c.is_zero() {
            continue;
        }
        let mq = Q::from_integer(m);
        let e = base.add(&diff.scale(mq));
        if !window.contains(&e) {
            continue;
        }
        let coeff = &(&scalar_power(&a.coeff, r - mq)? * &scalar_power(&b.coeff, mq)?) * &Scalar::from_rat(c);
        terms.push((e, coeff));
    }
    let support = if terminating {
        Support::of_terms([base, base.add(&diff.scale(r))].iter())
    } else {
        Support::cone(base, &[], &[diff])
    };
    let window = if terminating { Window::unbounded() } else { *window };
    Ok(FormalSeries::truncated(terms, window, support))
}

/// Largest m with `base + m·diff` possibly inside `window`.
fn m_limit(base: &ExponentVector, diff: &ExponentVector, window: &Window, cap: Option<i64>) -> Result<i64> {
    let mut best: Option<i64> = cap;
    for k in 0..NVARS {
        let d = diff.0[k];
        if d.is_zero() {
            continue;
        }
        let iv = window.0[k];
        let bound = if d.is_positive() { iv.hi } else { iv.lo };
        if let Some(bd) = bound {
            let m = ((bd - base.0[k]) / d).floor().to_integer().max(-1);
            best = Some(best.map_or(m, |b| b.min(m)));
        }
    }
    best.ok_or_else(|| Error::IllDefined { at: format!("binomial expansion unbounded on {window}") })
}

/// `prefactor · δ((u + v)/w) = prefactor · Σ_{n∈ℤ} ι₊(u + v)^n w^{-n}` on `window`.
pub fn delta_binomial(prefactor: &Monomial, u: &Monomial, v: &Monomial, w: &Monomial, window: &Window) -> Result<FormalSeries> {
    let g_free = u.exps.sub(&w.exps);
    let g_nn = v.exps.sub(&u.exps);
    let base = prefactor.exps;
    // Solve for (n, m) on a pair of coordinates where the generators are independent.
    let mut pick = None;
    'outer: for i in 0..NVARS {
        for j in (i + 1)..NVARS {
            let det = g_free.0[i] * g_nn.0[j] - g_free.0[j] * g_nn.0[i];
            if !det.is_zero() {
                pick = Some((i, j, det));
                break 'outer;
            }
        }
    }
    let (i, j, det) = pick.ok_or_else(|| Error::Window("degenerate delta-function argument".into()))?;
    let (wi, wj) = (window.0[i], window.0[j]);
    let (Some(ilo), Some(ihi), Some(jlo), Some(jhi)) = (wi.lo, wi.hi, wj.lo, wj.hi) else {
        return Err(Error::Window(format!("delta expansion needs bounded {} and {}", Variable::ALL[i], Variable::ALL[j])));
    };
    let n_of = |ei: Q, ej: Q| ((ei - base.0[i]) * g_nn.0[j] - (ej - base.0[j]) * g_nn.0[i]) / det;
    let corners = [n_of(ilo, jlo), n_of(ilo, jhi), n_of(ihi, jlo), n_of(ihi, jhi)];
    let n_lo = corners.iter().min().unwrap().floor().to_integer();
    let n_hi = corners.iter().max().unwrap().ceil().to_integer();
    let shifted = window_minus(window, &base);
    let mut acc: Vec<(ExponentVector, Scalar)> = Vec::new();
    for n in n_lo..=n_hi {
        let nq = Q::from_integer(n);
        let w_pow = w.pow(-nq)?;
        let inner_window = window_minus(&shifted, &w_pow.exps);
        let bin = iota_plus_binomial(u, v, nq, &inner_window)?;
        let scale = &w_pow.coeff * &prefactor.coeff;
        for (e, c) in bin.terms() {
            let exps = e.add(&w_pow.exps).add(&base);
            if window.contains(&exps) {
                acc.push((exps, c * &scale));
            }
        }
    }
    let support = Support::cone(base, &[g_free], &[g_nn]);
    Ok(FormalSeries::truncated(acc, *window, support))
}

fn window_minus(w: &Window, e: &ExponentVector) -> Window {
    let mut out = *w;
    for k in 0..NVARS {
        out.0[k] = w.0[k].minus(&Interval::point(e.0[k]));
    }
    out
}

/// `w^{-1} δ((u + v)/w)`.
pub fn delta_kernel(u: &Monomial, v: &Monomial, w: &Monomial, window: &Window) -> Result<FormalSeries> {
    let pre = w.pow(-Q::one())?;
    delta_binomial(&pre, u, v, w, window)
}

/// The δ-function facts used throughout, checked on the window `[lo, hi]` in
/// every variable: `f(x)δ(x) = f(1)δ(x)` for sample Laurent polynomials `f`,
/// `x1^{-1}δ((x2+x0)/x1) = x2^{-1}δ((x1-x0)/x2)`, and
/// `x0^{-1}δ((x1-x2)/x0) - x0^{-1}δ((x2-x1)/(-x0)) = x2^{-1}δ((x1-x0)/x2)`.
pub fn check_delta_identities(lo: i64, hi: i64, m: u32) -> Result<Vec<(String, crate::report::Outcome)>> {
    use crate::report::Outcome;
    let report = |what: &str, w: Option<Witness<Scalar>>| Outcome::from_witness(w, m, what);
    let q = Q::from_integer;
    let laurent = |cs: &[(i64, Scalar)]| FormalSeries::exact(cs.iter().map(|(e, c)| (ExponentVector::single(Variable::X, q(*e)), c.clone())));
    let samples = [
        laurent(&[(1, Scalar::from_int(2)), (-2, Scalar::from_int(-3))]),
        laurent(&[(3, Scalar::z(q(1))), (-1, Scalar::one()), (0, Scalar::from_int(-5))]),
        laurent(&[(2, Scalar::from_rat(crate::scalars::rat(1, 2))), (-4, Scalar::z(Q::new(-1, 2)))]),
    ];
    let wx = Window::unbounded().with(Variable::X, lo, hi);
    let mut substitution = None;
    for f in &samples {
        let spread = f.terms().map(|(e, _)| e.get(Variable::X).abs().to_integer()).max().unwrap_or(0);
        let d = delta(Variable::X, Interval::new(lo - spread, hi + spread))?;
        let lhs = mul_on(f, &d, &wx)?;
        let f_at_one = f.terms().fold(Scalar::zero(), |acc, (_, c)| &acc + c);
        let rhs = delta(Variable::X, Interval::new(lo, hi))?.scale(&f_at_one);
        if let Some(w) = lhs.equal_on_window(&rhs, &wx)? {
            substitution = Some(w);
            break;
        }
    }
    let w3 = Window::cube(&[Variable::X0, Variable::X1, Variable::X2], lo, hi);
    let x = Monomial::var;
    let two_lhs = delta_kernel(&x(Variable::X2), &x(Variable::X0), &x(Variable::X1), &w3)?;
    let two_rhs = delta_kernel(&x(Variable::X1), &x(Variable::X0).neg(), &x(Variable::X2), &w3)?;
    let a = delta_kernel(&x(Variable::X1), &x(Variable::X2).neg(), &x(Variable::X0), &w3)?;
    let b = delta_binomial(&Monomial::var_pow(Variable::X0, -1), &x(Variable::X2), &x(Variable::X1).neg(), &x(Variable::X0).neg(), &w3)?;
    Ok(vec![
        ("substitution".into(), report("f(x)δ(x) = f(1)δ(x)", substitution)),
        ("two-term".into(), report("x1^{-1}δ((x2+x0)/x1) = x2^{-1}δ((x1-x0)/x2)", two_lhs.equal_on_window(&two_rhs, &w3)?)),
        ("three-term".into(), report("three-term δ identity", a.sub(&b).equal_on_window(&two_rhs, &w3)?)),
    ])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalars::rat;
    use proptest::prelude::*;
    use Variable::*;

    fn q(n: i64) -> Q {
        Q::from_integer(n)
    }

    fn laurent(v: Variable, cs: &[(i64, i64)]) -> FormalSeries {
        FormalSeries::exact(cs.iter().map(|&(e, c)| (ExponentVector::single(v, q(e)), Scalar::from_int(c))))
    }

    #[test]
    fn delta_basics() {
        let d = delta(X, Interval::new(-2, 2)).unwrap();
        assert_eq!(d.len(), 5);
        assert!(d.terms().all(|(_, c)| c.is_one()));
        let res = d.residue(X).unwrap();
        assert_eq!(res.coeff(&ExponentVector::zero()), Some(&Scalar::one()));
        let dd = d.derivative(X);
        assert_eq!(dd.coeff(&ExponentVector::single(X, q(1))), Some(&Scalar::from_int(2)));
        assert_eq!(dd.coeff(&ExponentVector::single(X, q(-3))), Some(&Scalar::from_int(-2)));
        assert_eq!(dd.coeff(&ExponentVector::single(X, q(-1))), None);
    }

    #[test]
    fn delta_times_delta_is_ill_defined() {
        let d = delta(X, Interval::new(-4, 4)).unwrap();
        let w = Window::unbounded().with(X, -1, 1);
        assert!(matches!(mul_on(&d, &d, &w), Err(Error::IllDefined { .. })));
        assert!(mul(&d, &d).is_err());
    }

    #[test]
    fn substitution_property_of_delta() {
        let f = laurent(X, &[(1, 2), (-2, -3)]);
        let d = delta(X, Interval::new(-8, 8)).unwrap();
        let lhs = mul(&f, &d).unwrap();
        assert_eq!(lhs.window().get(X), Interval::new(-7, 6));
        let rhs = d.scale(&Scalar::from_int(-1));
        assert_eq!(lhs.equal_on_window(&rhs, &lhs.window()).unwrap(), None);
        assert!(lhs.terms().all(|(_, c)| *c == Scalar::from_int(-1)));
    }

    #[test]
    fn polynomial_products() {
        let zx = Monomial::new(Scalar::z(q(1)), ExponentVector::single(X, q(1)));
        let a = FormalSeries::exact([(ExponentVector::zero(), Scalar::one()), (zx.exps, zx.coeff.clone())]);
        let b = FormalSeries::exact([(ExponentVector::zero(), Scalar::one()), (zx.exps, -&zx.coeff)]);
        let p = mul(&a, &b).unwrap();
        let expect = FormalSeries::exact([
            (ExponentVector::zero(), Scalar::one()),
            (ExponentVector::single(X, q(2)), -&Scalar::z(q(2))),
        ]);
        assert_eq!(p, expect);
    }

    #[test]
    fn geometric_series_from_binomial() {
        let w = Window::cube(&[X1, X2], -10, 10);
        let s = iota_plus_binomial(&Monomial::var(X1), &Monomial::var(X2).neg(), q(-1), &w).unwrap();
        // (x1 - x2)^{-1} = Σ x1^{-1-m} x2^m
        for m in 0..=9 {
            let e = ExponentVector::from_pairs(&[(X1, q(-1 - m)), (X2, q(m))]);
            assert_eq!(s.coeff(&e), Some(&Scalar::one()));
        }
        let half = iota_plus_binomial(&Monomial::var(X1), &Monomial::var(X2), Q::new(1, 2), &Window::cube(&[X1, X2], -4, 4)).unwrap();
        let e = ExponentVector::from_pairs(&[(X1, Q::new(-3, 2)), (X2, q(2))]);
        assert_eq!(half.coeff(&e), Some(&Scalar::from_rat(rat(-1, 8))));
    }

    #[test]
    fn three_variable_delta_coefficients() {
        // x0^{-1} δ((x1 - x2)/x0): coefficient of x0^{-n-1} x1^{n-m} x2^m is (-1)^m C(n, m).
        let w = Window::cube(&[X0, X1, X2], -6, 6);
        let d = delta_kernel(&Monomial::var(X1), &Monomial::var(X2).neg(), &Monomial::var(X0), &w).unwrap();
        for n in -4i64..=4 {
            for m in 0i64..=4 {
                let e = ExponentVector::from_pairs(&[(X0, q(-n - 1)), (X1, q(n - m)), (X2, q(m))]);
                if !w.contains(&e) {
                    continue;
                }
                let sign = if m % 2 == 0 { 1 } else { -1 };
                let expect = binomial(q(n), m as u64) * rat(sign, 1);
                let got = d.coeff(&e).cloned().unwrap_or_default();
                assert_eq!(got, Scalar::from_rat(expect), "n={n} m={m}");
            }
        }
        let r = d.residue(X0).unwrap();
        let one = r.restrict(&Window::cube(&[X1, X2], -5, 5));
        assert_eq!(one.len(), 1);
        assert_eq!(one.coeff(&ExponentVector::zero()), Some(&Scalar::one()));
    }

    #[test]
    fn two_term_delta_identity() {
        let w = Window::cube(&[X0, X1, X2], -8, 8);
        let lhs = delta_kernel(&Monomial::var(X2), &Monomial::var(X0), &Monomial::var(X1), &w).unwrap();
        let rhs = delta_kernel(&Monomial::var(X1), &Monomial::var(X0).neg(), &Monomial::var(X2), &w).unwrap();
        assert_eq!(lhs.equal_on_window(&rhs, &w).unwrap(), None);
    }

    #[test]
    fn three_term_delta_identity() {
        let w = Window::cube(&[X0, X1, X2], -8, 8);
        let a = delta_kernel(&Monomial::var(X1), &Monomial::var(X2).neg(), &Monomial::var(X0), &w).unwrap();
        let b = delta_binomial(&Monomial::var_pow(X0, -1), &Monomial::var(X2), &Monomial::var(X1).neg(), &Monomial::var(X0).neg(), &w).unwrap();
        let c = delta_kernel(&Monomial::var(X1), &Monomial::var(X0).neg(), &Monomial::var(X2), &w).unwrap();
        assert_eq!(a.sub(&b).equal_on_window(&c, &w).unwrap(), None);
    }

    #[test]
    fn witness_is_first_difference() {
        let w = Window::unbounded().with(X, 0, 2);
        let d = delta(X, Interval::new(0, 2)).unwrap();
        let e = d.add(&FormalSeries::exact([(ExponentVector::single(X, q(2)), Scalar::one())]));
        let wit = d.equal_on_window(&e, &w).unwrap().unwrap();
        assert_eq!(wit.exponent, ExponentVector::single(X, q(2)));
        assert_eq!(wit.right, Some(Scalar::from_int(2)));
        assert!(d.equal_on_window(&e, &Window::unbounded().with(X, 0, 5)).is_err());
    }

    #[test]
    fn substitutions() {
        let d = delta(X, Interval::new(-3, 3)).unwrap();
        let inv = d.substitute_monomial(X, &Monomial::var_pow(X, -1)).unwrap();
        assert_eq!(inv.equal_on_window(&d, &Window::unbounded().with(X, -3, 3)).unwrap(), None);
        let sq = laurent(X1, &[(2, 1)]);
        let img = Monomial::new(Scalar::z(q(1)), ExponentVector::single(X0, q(1)));
        let out = sq.substitute_monomial(X1, &img).unwrap();
        assert_eq!(out.coeff(&ExponentVector::single(X0, q(2))), Some(&Scalar::z(q(2))));
        let cube = laurent(X, &[(3, 1)]);
        let img = Monomial::new(Scalar::z(q(-1)), ExponentVector::from_pairs(&[(X0, q(-1)), (X1, q(-1))]));
        let out = cube.substitute_monomial(X, &img).unwrap();
        let e = ExponentVector::from_pairs(&[(X0, q(-3)), (X1, q(-3))]);
        assert_eq!(out.coeff(&e), Some(&Scalar::z(q(-3))));
    }

    #[test]
    fn branch_evaluation() {
        let half = FormalSeries::exact([(ExponentVector::single(X, Q::new(1, 2)), Scalar::one())]);
        let p0 = half.eval_exp_lp(X, 0, 8).unwrap();
        assert_eq!(p0.coeff(&ExponentVector::zero()), Some(&Scalar::z(Q::new(1, 2))));
        let p1 = half.eval_exp_lp(X, 1, 8).unwrap();
        let oracle = &Scalar::root_of_unity(Q::new(1, 2), 8).unwrap() * &Scalar::z(Q::new(1, 2));
        assert_eq!(p1.coeff(&ExponentVector::zero()), Some(&oracle));
        let int = laurent(X, &[(3, 1), (-2, 5)]);
        assert_eq!(int.eval_exp_lp(X, 0, 8).unwrap(), int.eval_exp_lp(X, 7, 8).unwrap());
    }

    fn arb_laurent(v: Variable) -> impl Strategy<Value = FormalSeries> {
        prop::collection::vec((-3i64..=3, -4i64..=4), 0..4).prop_map(move |cs| laurent(v, &cs))
    }

    proptest! {
        #[test]
        fn delta_substitution_holds_for_laurent_polynomials(f in arb_laurent(X)) {
            let d = delta(X, Interval::new(-8, 8)).unwrap();
            let lhs = mul(&f, &d).unwrap();
            let f1: Scalar = f.terms().fold(Scalar::zero(), |acc, (_, c)| &acc + c);
            let rhs = d.scale(&f1);
            let w = lhs.window().intersect(&rhs.window());
            prop_assert_eq!(lhs.equal_on_window(&rhs, &w).unwrap(), None);
        }

        #[test]
        fn products_commute_and_associate(a in arb_laurent(X), b in arb_laurent(X), c in arb_laurent(X)) {
            prop_assert_eq!(mul(&a, &b).unwrap(), mul(&b, &a).unwrap());
            prop_assert_eq!(mul(&mul(&a, &b).unwrap(), &c).unwrap(), mul(&a, &mul(&b, &c).unwrap()).unwrap());
        }

        #[test]
        fn leibniz_rule(a in arb_laurent(X), b in arb_laurent(X)) {
            let lhs = mul(&a, &b).unwrap().derivative(X);
            let rhs = mul(&a.derivative(X), &b).unwrap().add(&mul(&a, &b.derivative(X)).unwrap());
            prop_assert_eq!(lhs.equal_on_window(&rhs, &Window::unbounded()).unwrap(), None);
        }

        #[test]
        fn branch_evaluation_is_multiplicative(a in arb_laurent(X), b in arb_laurent(X), p in -2i64..=2) {
            let half = FormalSeries::exact([(ExponentVector::single(X, Q::new(1, 4)), Scalar::one())]);
            let a = mul(&a, &half).unwrap();
            let lhs = mul(&a, &b).unwrap().eval_exp_lp(X, p, 16).unwrap();
            let rhs = mul(&a.eval_exp_lp(X, p, 16).unwrap(), &b.eval_exp_lp(X, p, 16).unwrap()).unwrap();
            prop_assert_eq!(lhs.equal_on_window(&rhs, &Window::unbounded()).unwrap(), None);
        }

        #[test]
        fn two_term_identity_on_random_windows(lo in -8i64..0, hi in 0i64..8) {
            let w = Window::cube(&[X0, X1, X2], lo, hi);
            let lhs = delta_kernel(&Monomial::var(X2), &Monomial::var(X0), &Monomial::var(X1), &w).unwrap();
            let rhs = delta_kernel(&Monomial::var(X1), &Monomial::var(X0).neg(), &Monomial::var(X2), &w).unwrap();
            prop_assert_eq!(lhs.equal_on_window(&rhs, &w).unwrap(), None);
        }
    }

    #[test]
    fn delta_suite_on_full_window() {
        for (name, o) in check_delta_identities(-8, 8, 4).unwrap() {
            assert_eq!(o.verdict, crate::report::Verdict::Pass, "{name}: {}", o.detail);
        }
    }
}
