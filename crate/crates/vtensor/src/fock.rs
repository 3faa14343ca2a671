//! Rank-one Heisenberg Fock modules `F_λ`.
//!
//! A basis vector `α(-n_1)⋯α(-n_k)e^λ` is stored as its momentum `λ` and the
//! descending partition `(n_1, …, n_k)`. The vertex algebra is `V = F_0`, with
//! conformal vector `ω = ½α(-1)²1` of central charge 1, so the basis vector
//! above has weight `λ²/2 + Σ n_i`.
//!
//! All vertex operators (and the intertwining operators of `maps`) come from
//! one normal-ordering routine, [`normal_ordered_component`], which computes
//! a single graded component exactly and caches it per basis pair.

#![allow(non_snake_case)]

use std::cell::RefCell;
use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::rc::Rc;

use num_bigint::BigInt;
use num_traits::{One, Signed, Zero};
use serde_json::{json, Value};

use crate::scalars::{binomial, factorial, q_string, rat, rat_from_q, Rat, Scalar};
use crate::series::{Coefficient, ExponentVector, FormalSeries, Interval, Support, Variable, Window};
use crate::{Error, Result, Q};

/// Descending list of positive parts.
pub type Partition = Vec<u32>;

thread_local! {
    static PARTITIONS: RefCell<HashMap<u32, Rc<Vec<Partition>>>> = RefCell::new(HashMap::new());
    static COMPONENTS: RefCell<HashMap<ComponentKey, Rc<Vec<(Partition, Rat)>>>> = RefCell::new(HashMap::new());
}

pub mod checks;

type ComponentKey = (Q, Partition, Q, Partition, u32);

/// All partitions of `n`, parts in descending order.
pub fn partitions(n: u32) -> Rc<Vec<Partition>> {
    if let Some(p) = PARTITIONS.with(|c| c.borrow().get(&n).cloned()) {
        return p;
    }
    fn rec(n: u32, max: u32, cur: &mut Partition, out: &mut Vec<Partition>) {
        if n == 0 {
            out.push(cur.clone());
            return;
        }
        for part in (1..=max.min(n)).rev() {
            cur.push(part);
            rec(n - part, part, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(n, n, &mut Vec::new(), &mut out);
    let out = Rc::new(out);
    PARTITIONS.with(|c| c.borrow_mut().insert(n, out.clone()));
    out
}

pub fn partition_count(n: u32) -> usize {
    partitions(n).len()
}

fn size(p: &[u32]) -> u32 {
    p.iter().sum()
}

fn insert_part(p: &mut Partition, r: u32) {
    let pos = p.iter().position(|&x| x < r).unwrap_or(p.len());
    p.insert(pos, r);
}

fn merged(p: &[u32], extra: &[u32]) -> Partition {
    let mut out = p.to_vec();
    for &r in extra {
        insert_part(&mut out, r);
    }
    out
}

/// Multiplicities of the distinct parts, largest part first.
fn multiplicities(p: &[u32]) -> Vec<(u32, u32)> {
    let mut out: Vec<(u32, u32)> = Vec::new();
    for &x in p {
        match out.last_mut() {
            Some((v, c)) if *v == x => *c += 1,
            _ => out.push((x, 1)),
        }
    }
    out
}

/// Vector in a single Fock module `F_momentum` (also used for the graded dual,
/// where a partition labels the dual basis vector).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FockVector {
    momentum: Q,
    terms: BTreeMap<Partition, Scalar>,
}

impl FockVector {
    pub fn zero(momentum: Q) -> Self {
        FockVector { momentum, terms: BTreeMap::new() }
    }

    pub fn basis(momentum: Q, parts: &[u32]) -> Self {
        let mut p = parts.to_vec();
        p.sort_unstable_by(|a, b| b.cmp(a));
        assert!(p.iter().all(|&x| x > 0), "partition parts must be positive");
        FockVector { momentum, terms: BTreeMap::from([(p, Scalar::one())]) }
    }

    /// `e^λ`.
    pub fn highest(momentum: Q) -> Self {
        Self::basis(momentum, &[])
    }

    /// The vacuum `1 = e^0`.
    pub fn vacuum() -> Self {
        Self::highest(Q::zero())
    }

    /// `ω = ½α(-1)²1`.
    pub fn omega() -> Self {
        Self::basis(Q::zero(), &[1, 1]).scale(&Scalar::from_rat(rat(1, 2)))
    }

    pub fn from_terms(momentum: Q, terms: impl IntoIterator<Item = (Partition, Scalar)>) -> Self {
        let mut v = Self::zero(momentum);
        for (p, c) in terms {
            v.add_term(p, &c);
        }
        v
    }

    pub fn momentum(&self) -> Q {
        self.momentum
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Partition, &Scalar)> {
        self.terms.iter()
    }

    pub fn coeff(&self, p: &[u32]) -> Scalar {
        self.terms.get(p).cloned().unwrap_or_default()
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn add_term(&mut self, p: Partition, c: &Scalar) {
        if c.is_zero() {
            return;
        }
        match self.terms.get_mut(&p) {
            Some(old) => {
                old.add_assign_ref(c);
                if old.is_zero() {
                    self.terms.remove(&p);
                }
            }
            None => {
                self.terms.insert(p, c.clone());
            }
        }
    }

    fn check_sector(&self, other: &FockVector) {
        assert!(
            self.momentum == other.momentum || self.is_zero() || other.is_zero(),
            "adding vectors of momenta {} and {}",
            self.momentum,
            other.momentum
        );
    }

    pub fn add_assign_ref(&mut self, other: &FockVector) {
        self.check_sector(other);
        if self.is_zero() {
            self.momentum = other.momentum;
        }
        for (p, c) in &other.terms {
            self.add_term(p.clone(), c);
        }
    }

    pub fn add(&self, other: &FockVector) -> FockVector {
        let mut out = self.clone();
        out.add_assign_ref(other);
        out
    }

    pub fn sub(&self, other: &FockVector) -> FockVector {
        self.add(&other.neg())
    }

    pub fn neg(&self) -> FockVector {
        self.scale(&Scalar::from_int(-1))
    }

    pub fn scale(&self, s: &Scalar) -> FockVector {
        if s.is_zero() {
            return FockVector::zero(self.momentum);
        }
        let terms = self.terms.iter().map(|(p, c)| (p.clone(), c * s)).filter(|(_, c)| !c.is_zero()).collect();
        FockVector { momentum: self.momentum, terms }
    }

    pub fn scale_rat(&self, r: &Rat) -> FockVector {
        if r.is_zero() {
            return FockVector::zero(self.momentum);
        }
        let terms = self.terms.iter().map(|(p, c)| (p.clone(), c.scale_rat(r))).collect();
        FockVector { momentum: self.momentum, terms }
    }

    /// Weight of the basis vector labelled `p` in this sector.
    pub fn weight_of(&self, p: &[u32]) -> Q {
        self.momentum * self.momentum / 2 + Q::from_integer(size(p) as i64)
    }

    /// Lowest weight `λ²/2` of the sector.
    pub fn lowest_weight(&self) -> Q {
        self.momentum * self.momentum / 2
    }

    pub fn grades(&self) -> BTreeSet<u32> {
        self.terms.keys().map(|p| size(p)).collect()
    }

    pub fn max_grade(&self) -> Option<u32> {
        self.grades().last().copied()
    }

    /// Projection onto grade `g`.
    pub fn component(&self, g: u32) -> FockVector {
        let terms = self.terms.iter().filter(|(p, _)| size(p) == g).map(|(p, c)| (p.clone(), c.clone())).collect();
        FockVector { momentum: self.momentum, terms }
    }

    /// Homogeneous components, lowest grade first.
    pub fn homogeneous_parts(&self) -> Vec<(u32, FockVector)> {
        self.grades().into_iter().map(|g| (g, self.component(g))).collect()
    }

    /// Projection onto grades `≤ g`.
    pub fn truncate(&self, g: u32) -> FockVector {
        let terms = self.terms.iter().filter(|(p, _)| size(p) <= g).map(|(p, c)| (p.clone(), c.clone())).collect();
        FockVector { momentum: self.momentum, terms }
    }

    /// Same coefficients, relabelled into another sector.
    pub fn with_momentum(&self, momentum: Q) -> FockVector {
        FockVector { momentum, terms: self.terms.clone() }
    }

    pub fn to_json(&self, m: u32) -> Value {
        json!({
            "momentum": q_string(self.momentum),
            "terms": self.terms.iter().map(|(p, c)| json!({"partition": p, "coeff": c.to_json(m)})).collect::<Vec<_>>(),
        })
    }
}

pub fn basis_label(momentum: Q, p: &[u32]) -> String {
    let mut s = String::new();
    for &n in p {
        s.push_str(&format!("a(-{n})"));
    }
    s.push_str(&format!("e^({})", q_string(momentum)));
    s
}

impl fmt::Display for FockVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        let mut first = true;
        for (p, c) in &self.terms {
            if !first {
                write!(f, " + ")?;
            }
            first = false;
            if c.is_one() {
                write!(f, "{}", basis_label(self.momentum, p))?;
            } else {
                write!(f, "({c}) {}", basis_label(self.momentum, p))?;
            }
        }
        Ok(())
    }
}

impl Coefficient for FockVector {
    fn is_zero(&self) -> bool {
        FockVector::is_zero(self)
    }
    fn add_assign(&mut self, other: &Self) {
        self.add_assign_ref(other)
    }
    fn scaled(&self, s: &Scalar) -> Self {
        self.scale(s)
    }
    fn to_json(&self, m: u32) -> Value {
        FockVector::to_json(self, m)
    }
    fn render(&self) -> String {
        self.to_string()
    }
}

/// Basis of `F_momentum` in grades `0..=max_grade`.
pub fn module_basis(momentum: Q, max_grade: u32) -> Vec<FockVector> {
    (0..=max_grade).flat_map(|g| partitions(g).iter().map(|p| FockVector::basis(momentum, p)).collect::<Vec<_>>()).collect()
}

/// Basis of `V` in weights `0..=max_weight`.
pub fn algebra_basis(max_weight: u32) -> Vec<FockVector> {
    module_basis(Q::zero(), max_weight)
}

/// `α(n)w`.
pub fn alpha(n: i64, w: &FockVector) -> FockVector {
    let mut out = FockVector::zero(w.momentum);
    for (p, c) in &w.terms {
        if n < 0 {
            out.add_term(merged(p, &[(-n) as u32]), c);
        } else if n == 0 {
            out.add_term(p.clone(), &c.scale_rat(&rat_from_q(w.momentum)));
        } else {
            let n = n as u32;
            let mult = p.iter().filter(|&&x| x == n).count() as i64;
            if mult > 0 {
                let mut q = p.clone();
                let pos = q.iter().position(|&x| x == n).unwrap();
                q.remove(pos);
                out.add_term(q, &c.scale_rat(&rat(n as i64 * mult, 1)));
            }
        }
    }
    out
}

/// Coefficient arithmetic for the component expansion. Checked `i128`
/// rationals are tried first; any overflow restarts with big rationals.
trait Exact: Clone {
    fn lift(r: &Rat) -> Option<Self>;
    fn unit() -> Self;
    fn binom(n: u32, k: u32) -> Option<Self>;
    fn mul(&self, o: &Self) -> Option<Self>;
    fn add(&self, o: &Self) -> Option<Self>;
    fn vanishes(&self) -> bool;
    fn lower(&self) -> Rat;
}

type SmallRat = num_rational::Ratio<i128>;

impl Exact for SmallRat {
    fn lift(r: &Rat) -> Option<Self> {
        Some(SmallRat::new_raw(num_traits::ToPrimitive::to_i128(r.numer())?, num_traits::ToPrimitive::to_i128(r.denom())?))
    }
    fn unit() -> Self {
        SmallRat::from_integer(1)
    }
    fn binom(n: u32, k: u32) -> Option<Self> {
        if k > n {
            return Some(SmallRat::from_integer(0));
        }
        let mut acc: i128 = 1;
        for i in 0..k as i128 {
            // Exact at every step: acc·(n-i) is divisible by i+1.
            acc = acc.checked_mul(n as i128 - i)? / (i + 1);
        }
        Some(SmallRat::from_integer(acc))
    }
    fn mul(&self, o: &Self) -> Option<Self> {
        num_traits::CheckedMul::checked_mul(self, o)
    }
    fn add(&self, o: &Self) -> Option<Self> {
        num_traits::CheckedAdd::checked_add(self, o)
    }
    fn vanishes(&self) -> bool {
        Zero::is_zero(self)
    }
    fn lower(&self) -> Rat {
        Rat::new(BigInt::from(*self.numer()), BigInt::from(*self.denom()))
    }
}

impl Exact for Rat {
    fn lift(r: &Rat) -> Option<Self> {
        Some(r.clone())
    }
    fn unit() -> Self {
        One::one()
    }
    fn binom(n: u32, k: u32) -> Option<Self> {
        Some(binomial(Q::from_integer(n as i64), k as u64))
    }
    fn mul(&self, o: &Self) -> Option<Self> {
        Some(self * o)
    }
    fn add(&self, o: &Self) -> Option<Self> {
        Some(self + o)
    }
    fn vanishes(&self) -> bool {
        Zero::is_zero(self)
    }
    fn lower(&self) -> Rat {
        self.clone()
    }
}

fn add_exact<T: Exact>(map: &mut BTreeMap<Partition, T>, p: Partition, c: T) -> Option<()> {
    if c.vanishes() {
        return Some(());
    }
    match map.entry(p) {
        std::collections::btree_map::Entry::Vacant(e) => {
            e.insert(c);
        }
        std::collections::btree_map::Entry::Occupied(mut e) => {
            let sum = e.get().add(&c)?;
            *e.get_mut() = sum;
        }
    }
    Some(())
}

/// `E^+(-λ) = exp(-λ Σ_{n>0} α(n) x^{-n}/n)` applied to a combination of
/// basis vectors, expanded completely (the grade drop fixes the x-power).
fn apply_e_plus<T: Exact>(states: BTreeMap<Partition, T>, lambda: &Rat) -> Option<BTreeMap<Partition, T>> {
    let mut out = BTreeMap::new();
    let neg_l = -lambda;
    for (p, c) in states {
        let mult = multiplicities(&p);
        let mut choices: Vec<(Partition, T)> = vec![(Vec::new(), c)];
        for (n, cnt) in mult {
            let mut next = Vec::new();
            for (q, cq) in &choices {
                for t in 0..=cnt {
                    let coef = binomial(Q::from_integer(cnt as i64), t as u64) * num_traits::pow(neg_l.clone(), t as usize);
                    if Zero::is_zero(&coef) {
                        continue;
                    }
                    let mut q2 = q.clone();
                    q2.extend(std::iter::repeat(n).take((cnt - t) as usize));
                    next.push((q2, cq.mul(&T::lift(&coef)?)?));
                }
            }
            choices = next;
        }
        for (q, cq) in choices {
            add_exact(&mut out, q, cq)?;
        }
    }
    Some(out)
}

/// Grade-`k` part of `E^-(λ) = exp(λ Σ_{n>0} α(-n) x^n/n)` acting on `1`.
fn e_minus<T: Exact>(k: u32, lambda: &Rat) -> Option<Vec<(Partition, T)>> {
    partitions(k)
        .iter()
        .map(|p| {
            let mut c = Rat::one();
            for (n, cnt) in multiplicities(p) {
                c *= num_traits::pow(lambda / rat(n as i64, 1), cnt as usize) / factorial(cnt as u64);
            }
            Some((p.clone(), T::lift(&c)?))
        })
        .collect()
}

/// Grade-`g_out` component of `𝒴(α(-u_1)⋯α(-u_k)e^λ, x) α(-w)e^μ`, where
/// `𝒴(·, x)` is the normal-ordered product
/// `:∂^{(u_1-1)}α(x)⋯∂^{(u_k-1)}α(x) E^-(λ,x) e_λ x^{λα(0)} E^+(-λ,x):`.
/// For `λ = 0` this is the module vertex operator `Y(·, x)` on `F_μ`.
/// The x-exponent of the component is `λμ + g_out - |u| - |w|`.
pub fn normal_ordered_component(lambda: Q, u: &[u32], mu: Q, w: &[u32], g_out: u32) -> Rc<Vec<(Partition, Rat)>> {
    let key = (lambda, u.to_vec(), mu, w.to_vec(), g_out);
    if let Some(hit) = COMPONENTS.with(|c| c.borrow().get(&key).cloned()) {
        return hit;
    }
    let result = expand_component::<SmallRat>(lambda, u, mu, w, g_out)
        .or_else(|| expand_component::<Rat>(lambda, u, mu, w, g_out))
        .expect("big rational arithmetic does not overflow");
    let result = Rc::new(result);
    COMPONENTS.with(|c| c.borrow_mut().insert(key, result.clone()));
    result
}

fn expand_component<T: Exact>(lambda: Q, u: &[u32], mu: Q, w: &[u32], g_out: u32) -> Option<Vec<(Partition, Rat)>> {
    let k = u.len();
    let lam = rat_from_q(lambda);
    let mu_t = T::lift(&rat_from_q(mu))?;
    let mu_zero = mu.is_zero();
    let mut out: BTreeMap<Partition, T> = BTreeMap::new();
    let mut e_minus_memo: BTreeMap<u32, Vec<(Partition, T)>> = BTreeMap::new();
    for mask in 0u32..(1 << k) {
        // Factors in `mask` contribute modes m ≥ 0 (annihilation side).
        let mut states: BTreeMap<Partition, T> = BTreeMap::from([(w.to_vec(), T::unit())]);
        let mut creators = Vec::new();
        for (i, &ui) in u.iter().enumerate() {
            if mask & (1 << i) == 0 {
                creators.push(ui);
                continue;
            }
            let j = ui - 1;
            let sign = T::lift(&rat(if j % 2 == 0 { 1 } else { -1 }, 1))?;
            let mut next = BTreeMap::new();
            for (p, c) in &states {
                if !mu_zero {
                    // C(-1, j) = (-1)^j
                    add_exact(&mut next, p.clone(), c.mul(&mu_t)?.mul(&sign)?)?;
                }
                for (m, cnt) in multiplicities(p) {
                    let mut q = p.clone();
                    let pos = q.iter().position(|&x| x == m).unwrap();
                    q.remove(pos);
                    // C(-m-1, j) = (-1)^j C(m+j, j)
                    let coef = T::binom(m + j, j)?.mul(&T::lift(&rat((m * cnt) as i64, 1))?)?.mul(&sign)?;
                    add_exact(&mut next, q, c.mul(&coef)?)?;
                }
            }
            states = next;
        }
        if !Zero::is_zero(&lam) {
            states = apply_e_plus(states, &lam)?;
        }
        let min_raise: u32 = creators.iter().sum();
        for (p, c) in states {
            let gp = size(&p);
            if gp > g_out || g_out - gp < min_raise {
                continue;
            }
            let mut raises = Vec::with_capacity(creators.len());
            let mut ok = true;
            place_creators(&creators, 0, g_out - gp, &mut raises, T::unit(), &mut |parts, rest, coef| {
                if !ok {
                    return;
                }
                let mut step = || -> Option<()> {
                    let cc = c.mul(coef?)?;
                    if Zero::is_zero(&lam) {
                        if rest == 0 {
                            add_exact(&mut out, merged(&p, parts), cc)?;
                        }
                        return Some(());
                    }
                    if !e_minus_memo.contains_key(&rest) {
                        e_minus_memo.insert(rest, e_minus(rest, &lam)?);
                    }
                    for (kappa, ck) in &e_minus_memo[&rest] {
                        let mut all = parts.to_vec();
                        all.extend_from_slice(kappa);
                        add_exact(&mut out, merged(&p, &all), cc.mul(ck)?)?;
                    }
                    Some(())
                };
                ok = step().is_some();
            });
            if !ok {
                return None;
            }
        }
    }
    Some(out.into_iter().filter(|(_, c)| !c.vanishes()).map(|(p, c)| (p, c.lower())).collect())
}

/// Distributes raises `r_i ≥ u_i` (mode `-r_i`, weight `C(r_i-1, u_i-1)`)
/// over the creation-side factors, leaving `rest` for `E^-`. An overflowing
/// coefficient is emitted as `None`.
fn place_creators<T: Exact>(
    creators: &[u32],
    idx: usize,
    budget: u32,
    raises: &mut Vec<u32>,
    coef: T,
    emit: &mut impl FnMut(&[u32], u32, Option<&T>),
) {
    if idx == creators.len() {
        emit(raises, budget, Some(&coef));
        return;
    }
    let later: u32 = creators[idx + 1..].iter().sum();
    let ui = creators[idx];
    if budget < later + ui {
        return;
    }
    for r in ui..=budget - later {
        raises.push(r);
        if ui == 1 {
            place_creators(creators, idx + 1, budget - r, raises, coef.clone(), emit);
        } else {
            match T::binom(r - 1, ui - 1).and_then(|b| coef.mul(&b)) {
                Some(c) => place_creators(creators, idx + 1, budget - r, raises, c, emit),
                None => emit(raises, 0, None),
            }
        }
        raises.pop();
    }
}

/// Coefficient of `x^e` in `𝒴(u, x)w` for `u ∈ F_λ`, `w ∈ F_μ`; lands in `F_{λ+μ}`.
pub fn intertwiner_component(u: &FockVector, w: &FockVector, e: Q) -> FockVector {
    let (lambda, mu) = (u.momentum, w.momentum);
    let mut out = FockVector::zero(lambda + mu);
    for (pu, cu) in &u.terms {
        for (pw, cw) in &w.terms {
            let g = e - lambda * mu + Q::from_integer((size(pu) + size(pw)) as i64);
            if !g.is_integer() || g.is_negative() {
                continue;
            }
            let comp = normal_ordered_component(lambda, pu, mu, pw, g.to_integer() as u32);
            if comp.is_empty() {
                continue;
            }
            let cc = cu * cw;
            for (p, r) in comp.iter() {
                out.add_term(p.clone(), &cc.scale_rat(r));
            }
        }
    }
    out
}

/// Coefficient of `x^e` in `Y(u, x)w` for `u ∈ V`.
pub fn vertex_component<'a>(u: &'a FockVector, w: &'a FockVector) -> impl Fn(i64) -> FockVector + 'a {
    assert!(u.momentum.is_zero() || u.is_zero(), "vertex operators take algebra vectors");
    move |e| intertwiner_component(u, w, Q::from_integer(e))
}

/// Mode `u_n w`, the coefficient of `x^{-n-1}` in `Y(u, x)w`.
pub fn mode(u: &FockVector, n: i64, w: &FockVector) -> FockVector {
    vertex_component(u, w)(-n - 1)
}

/// Smallest exponent that can occur in `𝒴(u, x)w`.
pub fn lowest_exponent(u: &FockVector, w: &FockVector) -> Option<Q> {
    Some(u.momentum * w.momentum - Q::from_integer((u.max_grade()? + w.max_grade()?) as i64))
}

/// `𝒴(u, x)w` (or `Y(u, x)w`) as a series in `var`, tabulated on `window`.
pub fn operator_series(u: &FockVector, w: &FockVector, var: Variable, window: Interval) -> Result<FormalSeries<FockVector>> {
    let offset = u.momentum * w.momentum;
    let lo = lowest_exponent(u, w).unwrap_or(offset);
    let mut support = Support::everywhere();
    support.bounds[var.index()] = Interval { lo: Some(lo), hi: None };
    FormalSeries::from_fn(&[(var, offset)], Window::unbounded().with_interval(var, window), support, |e| {
        Ok(intertwiner_component(u, w, e.get(var)))
    })
}

/// `L(n)w`, computed as the mode `ω_{n+1}w`.
pub fn virasoro_L(n: i64, w: &FockVector) -> FockVector {
    mode(&FockVector::omega(), n + 1, w)
}

/// `e^{cL(1)}w`; terminates because `L(1)` lowers the grade.
pub fn exp_L1(c: &Scalar, w: &FockVector) -> FockVector {
    let mut out = w.clone();
    let mut term = w.clone();
    let mut k = 1i64;
    loop {
        term = virasoro_L(1, &term).scale(&c.scale_rat(&rat(1, k)));
        if term.is_zero() {
            return out;
        }
        out.add_assign_ref(&term);
        k += 1;
    }
}

/// `L(1)^k w / k!`.
pub fn l1_divided_power(k: u32, w: &FockVector) -> FockVector {
    let mut t = w.clone();
    for i in 1..=k {
        t = virasoro_L(1, &t).scale_rat(&rat(1, i as i64));
    }
    t
}

/// Multiplies each basis vector of weight `h` by `f(h)`.
pub fn scale_L0(w: &FockVector, f: impl Fn(Q) -> Result<Scalar>) -> Result<FockVector> {
    let mut out = FockVector::zero(w.momentum);
    for (p, c) in &w.terms {
        out.add_term(p.clone(), &(c * &f(w.weight_of(p))?));
    }
    Ok(out)
}

/// `x^{L(0)} w` as a series in the formal variable `x`.
pub fn l0_power_series(w: &FockVector, x: Variable, sign: i64) -> FormalSeries<FockVector> {
    let mut by_weight: BTreeMap<Q, FockVector> = BTreeMap::new();
    for (p, c) in &w.terms {
        by_weight.entry(w.weight_of(p)).or_insert_with(|| FockVector::zero(w.momentum)).add_term(p.clone(), c);
    }
    FormalSeries::exact(by_weight.into_iter().map(|(h, v)| (ExponentVector::single(x, h * sign), v)))
}

/// Splits an algebra vector into homogeneous parts `(weight, part)`.
fn algebra_parts(v: &FockVector) -> Vec<(i64, FockVector)> {
    assert!(v.momentum.is_zero() || v.is_zero(), "expected an algebra vector");
    v.homogeneous_parts().into_iter().map(|(g, p)| (g as i64, p)).collect()
}

/// Coefficient of `x^e` in `Y*(v, x)w = Y(e^{xL(1)}(-x^{-2})^{L(0)}v, x^{-1})w`.
pub fn opposite_component(v: &FockVector, w: &FockVector, e: i64) -> FockVector {
    let mut out = FockVector::zero(w.momentum);
    for (h, vh) in algebra_parts(v) {
        let sign = if h % 2 == 0 { 1 } else { -1 };
        let mut i = 0i64;
        let mut u = vh.scale_rat(&rat(sign, 1));
        while !u.is_zero() {
            // x^{i-2h} Y(u, x^{-1}) contributes u_{q-1} x^{q+i-2h}.
            let q = e - i + 2 * h;
            out.add_assign_ref(&vertex_component(&u, w)(-q));
            i += 1;
            u = virasoro_L(1, &u).scale_rat(&rat(1, i));
        }
    }
    out
}

/// `⟨w', w⟩` with `w'` written in the dual basis of the partition basis.
pub fn pairing(w_dual: &FockVector, w: &FockVector) -> Result<Scalar> {
    if w_dual.momentum != w.momentum && !w_dual.is_zero() && !w.is_zero() {
        return Err(Error::Sector(format!(
            "cannot pair F'_{} with F_{}",
            q_string(w_dual.momentum),
            q_string(w.momentum)
        )));
    }
    let mut s = Scalar::zero();
    for (p, c) in &w_dual.terms {
        if let Some(d) = w.terms.get(p) {
            s.add_mul(c, d);
        }
    }
    Ok(s)
}

/// Coefficient of `x^e` in the contragredient operator `Y'(v, x)w'`, defined by
/// `⟨Y'(v, x)w', w⟩ = ⟨w', Y*(v, x)w⟩`.
pub fn contragredient_component(v: &FockVector, w_dual: &FockVector, e: i64) -> FockVector {
    let mut out = FockVector::zero(w_dual.momentum);
    for (h, vh) in algebra_parts(v) {
        for (g, part) in w_dual.homogeneous_parts() {
            let target = g as i64 + h + e;
            if target < 0 {
                continue;
            }
            for p in partitions(target as u32).iter() {
                let b = FockVector::basis(w_dual.momentum, p);
                let val = pairing(&part, &opposite_component(&vh, &b, e)).expect("same sector");
                out.add_term(p.clone(), &val);
            }
        }
    }
    out
}

/// `L'(n)w'`, the coefficient of `x^{-n-2}` in `Y'(ω, x)w'`.
pub fn contragredient_L(n: i64, w_dual: &FockVector) -> FockVector {
    contragredient_component(&FockVector::omega(), w_dual, -n - 2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn q(n: i64, d: i64) -> Q {
        Q::new(n, d)
    }

    fn s(n: i64, d: i64) -> Scalar {
        Scalar::from_rat(rat(n, d))
    }

    #[test]
    fn small_and_big_rational_expansions_agree() {
        let cases: [(Q, &[u32], Q, &[u32], u32); 5] = [
            (q(0, 1), &[3, 1, 1], q(1, 2), &[2, 1], 6),
            (q(0, 1), &[2, 2], q(-3, 2), &[1, 1, 1], 5),
            (q(1, 2), &[2, 1], q(1, 2), &[2], 4),
            (q(1, 1), &[], q(-1, 2), &[1, 1], 3),
            (q(3, 2), &[3], q(1, 2), &[4, 1], 7),
        ];
        for (l, u, m, w, g) in cases {
            let small = expand_component::<SmallRat>(l, u, m, w, g).unwrap();
            let big = expand_component::<Rat>(l, u, m, w, g).unwrap();
            assert_eq!(small, big);
            assert!(!big.is_empty());
        }
    }

    #[test]
    fn small_binomials_are_exact() {
        for n in 0..40u32 {
            for k in 0..=n {
                assert_eq!(<SmallRat as Exact>::binom(n, k).unwrap().lower(), binomial(q(n as i64, 1), k as u64));
            }
        }
    }

    /// Independent oracle: `L(n) = ½ Σ_j :α(j)α(n-j):` built from single modes.
    fn sugawara(n: i64, w: &FockVector) -> FockVector {
        let g = w.max_grade().unwrap_or(0) as i64;
        let mut out = FockVector::zero(w.momentum);
        for j in -(g + n.abs() + 2)..=(g + n.abs() + 2) {
            let k = n - j;
            let (a, b) = if j <= k { (j, k) } else { (k, j) };
            out.add_assign_ref(&alpha(a, &alpha(b, w)).scale_rat(&rat(1, 2)));
        }
        out
    }

    #[test]
    fn partition_counts() {
        let counts: Vec<usize> = (0..8).map(partition_count).collect();
        assert_eq!(counts, vec![1, 1, 2, 3, 5, 7, 11, 15]);
        assert_eq!(*partitions(3), vec![vec![3], vec![2, 1], vec![1, 1, 1]]);
    }

    #[test]
    fn heisenberg_modes() {
        let v = FockVector::basis(q(1, 2), &[2, 1]);
        assert_eq!(alpha(0, &v), v.scale(&s(1, 2)));
        assert_eq!(alpha(2, &v), FockVector::basis(q(1, 2), &[1]).scale(&s(2, 1)));
        assert_eq!(alpha(-3, &v), FockVector::basis(q(1, 2), &[3, 2, 1]));
        // [α(1), α(-1)] = 1
        let lhs = alpha(1, &alpha(-1, &v)).sub(&alpha(-1, &alpha(1, &v)));
        assert_eq!(lhs, v);
    }

    #[test]
    fn l0_is_weight() {
        for mom in [q(0, 1), q(1, 2), q(-3, 2)] {
            for b in module_basis(mom, 4) {
                let (p, _) = b.terms().next().unwrap();
                let h = b.weight_of(p);
                assert_eq!(virasoro_L(0, &b), b.scale(&Scalar::from_q(h)));
            }
        }
        let e = FockVector::highest(q(1, 2));
        assert_eq!(virasoro_L(0, &e), e.scale(&s(1, 8)));
    }

    #[test]
    fn virasoro_matches_sugawara_oracle() {
        for mom in [q(0, 1), q(1, 2), q(1, 1)] {
            for b in module_basis(mom, 3) {
                for n in -3..=3 {
                    assert_eq!(virasoro_L(n, &b), sugawara(n, &b), "L({n}) on {b}");
                }
            }
        }
    }

    #[test]
    fn vacuum_annihilation_and_omega() {
        let one = FockVector::vacuum();
        for n in -1..=3 {
            assert!(virasoro_L(n, &one).is_zero());
        }
        assert_eq!(virasoro_L(-2, &one), FockVector::omega());
        let v = FockVector::basis(q(0, 1), &[3, 1]);
        // creation property: Y(v, x)1 = v + O(x)
        assert_eq!(vertex_component(&v, &one)(0), v);
        assert!(vertex_component(&v, &one)(-1).is_zero());
        // vacuum property: Y(1, x) = id
        assert_eq!(vertex_component(&one, &v)(0), v);
        assert!(vertex_component(&one, &v)(1).is_zero());
    }

    #[test]
    fn virasoro_commutators() {
        for b in module_basis(q(1, 2), 3) {
            for m in -2..=2i64 {
                for n in -2..=2i64 {
                    let lhs = virasoro_L(m, &virasoro_L(n, &b)).sub(&virasoro_L(n, &virasoro_L(m, &b)));
                    let mut rhs = virasoro_L(m + n, &b).scale(&s(m - n, 1));
                    if m + n == 0 {
                        rhs = rhs.add(&b.scale(&s(m * m * m - m, 12)));
                    }
                    assert_eq!(lhs, rhs, "[L({m}),L({n})] on {b}");
                }
            }
        }
        let e = FockVector::basis(q(1, 1), &[2]);
        let comm = virasoro_L(1, &virasoro_L(-1, &e)).sub(&virasoro_L(-1, &virasoro_L(1, &e)));
        assert_eq!(comm, virasoro_L(0, &e).scale(&s(2, 1)));
    }

    #[test]
    fn translation_covariance() {
        // (L(-1)u)_n = -n u_{n-1}
        let w = FockVector::basis(q(1, 2), &[2, 1]);
        for u in algebra_basis(3) {
            let du = virasoro_L(-1, &u);
            for n in -3..=4 {
                assert_eq!(mode(&du, n, &w), mode(&u, n - 1, &w).scale(&s(-n, 1)));
            }
        }
    }

    #[test]
    fn exp_l1_and_l0_scaling() {
        let mu = q(1, 2);
        let e = FockVector::highest(mu);
        // e^{(-2 log z + πi)L(0)} e^μ = z^{-μ²} e^{πiμ²/2} e^μ
        let scaled = scale_L0(&e, |h| Ok(&Scalar::z(-h * 2) * &Scalar::root_of_unity(h / 2, 16)?)).unwrap();
        let expect = &Scalar::z(-mu * mu) * &Scalar::root_of_unity(mu * mu / 4, 16).unwrap();
        assert_eq!(scaled, e.scale(&expect));
        // [L(1), α(-n)] = nα(-n+1), so L(1)α(-2)e^μ = 2α(-1)e^μ and L(1)α(-1)e^μ = μe^μ
        let v = FockVector::basis(mu, &[2]);
        assert_eq!(virasoro_L(1, &v), FockVector::basis(mu, &[1]).scale(&s(2, 1)));
        let c = Scalar::z(q(-1, 1));
        let expect = v.add(&FockVector::basis(mu, &[1]).scale(&(&c * &s(2, 1)))).add(&e.scale(&(&(&c * &c) * &s(1, 2))));
        assert_eq!(exp_L1(&c, &v), expect);
    }

    #[test]
    fn conjugating_l1_by_l0() {
        // x^{L(0)} e^{yL(1)} x^{-L(0)} = e^{(y/x)L(1)} on a basis vector
        let w = FockVector::basis(q(1, 2), &[2, 1]);
        let mut lhs: FormalSeries<FockVector> = FormalSeries::zero();
        let mut rhs: FormalSeries<FockVector> = FormalSeries::zero();
        for k in 0..4u32 {
            let lk = l1_divided_power(k, &w);
            let yk = ExponentVector::single(Variable::Y, Q::from_integer(k as i64));
            let left = l0_power_series(&lk, Variable::X, 1)
                .shift(&crate::series::Monomial::new(Scalar::one(), yk.with(Variable::X, -w.weight_of(&[2, 1]))));
            lhs = lhs.add(&left);
            let right = FormalSeries::exact([(yk.with(Variable::X, -Q::from_integer(k as i64)), lk)]);
            rhs = rhs.add(&right);
        }
        assert_eq!(lhs, rhs);
    }

    #[test]
    fn pairing_is_dual_basis() {
        let a = FockVector::basis(q(1, 2), &[1]);
        assert!(pairing(&a, &a).unwrap().is_one());
        assert!(pairing(&a, &FockVector::basis(q(1, 2), &[2])).unwrap().is_zero());
        assert!(matches!(pairing(&a, &FockVector::basis(q(0, 1), &[1])), Err(Error::Sector(_))));
    }

    #[test]
    fn contragredient_virasoro_is_transpose() {
        // L'(n) = L(-n)^T
        let mom = q(1, 2);
        for wd in module_basis(mom, 3) {
            for n in -2..=2 {
                let lhs = contragredient_L(n, &wd);
                for g in 0..=5 {
                    for p in partitions(g).iter() {
                        let b = FockVector::basis(mom, p);
                        let want = pairing(&wd, &virasoro_L(-n, &b)).unwrap();
                        assert_eq!(pairing(&lhs, &b).unwrap(), want);
                    }
                }
            }
        }
    }

    #[test]
    fn exponential_intertwiner_lowest_term() {
        let (l, m) = (q(1, 2), q(-1, 2));
        let y = intertwiner_component(&FockVector::highest(l), &FockVector::highest(m), l * m);
        assert_eq!(y, FockVector::highest(l + m));
        // α(-1)e^{λ} ⊗ e^μ: coefficient of x^{λμ-1} is μ e^{λ+μ}
        let y = intertwiner_component(&FockVector::basis(l, &[1]), &FockVector::highest(m), l * m - 1);
        assert_eq!(y, FockVector::highest(l + m).scale(&Scalar::from_q(m)));
        // next term of 𝒴(e^λ, x)e^μ is λα(-1)e^{λ+μ} x^{λμ+1}
        let y = intertwiner_component(&FockVector::highest(l), &FockVector::highest(m), l * m + 1);
        assert_eq!(y, FockVector::basis(l + m, &[1]).scale(&Scalar::from_q(l)));
    }

    fn small_algebra_vector() -> impl Strategy<Value = FockVector> {
        (0usize..7).prop_map(|i| algebra_basis(3)[i].clone())
    }

    fn small_module_vector() -> impl Strategy<Value = FockVector> {
        (0usize..7, prop_oneof![Just(q(0, 1)), Just(q(1, 2)), Just(q(-1, 1))])
            .prop_map(|(i, m)| module_basis(m, 3)[i].clone())
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn commutator_formula(u in small_algebra_vector(), v in small_algebra_vector(), w in small_module_vector(),
                              m in -2i64..3, n in -2i64..3) {
            // [u_m, v_n] = Σ_i C(m,i) (u_i v)_{m+n-i}
            let lhs = mode(&u, m, &mode(&v, n, &w)).sub(&mode(&v, n, &mode(&u, m, &w)));
            let mut rhs = FockVector::zero(w.momentum());
            for i in 0..8i64 {
                let c = binomial(Q::from_integer(m), i as u64);
                rhs.add_assign_ref(&mode(&mode(&u, i, &v), m + n - i, &w).scale_rat(&c));
            }
            prop_assert_eq!(lhs, rhs);
        }

        #[test]
        fn skew_symmetry(u in small_algebra_vector(), v in small_algebra_vector(), n in -3i64..3) {
            // Y(u, x)v = e^{xL(-1)} Y(v, -x)u, read on the mode u_n v
            let lhs = mode(&u, n, &v);
            let mut rhs = FockVector::zero(Q::zero());
            for j in 0..10i64 {
                // term x^j/j! L(-1)^j v_m u (-x)^{-m-1}, exponent -n-1 = j - m - 1
                let m = n + j;
                let mut t = mode(&v, m, &u).scale_rat(&rat(if (m + 1) % 2 == 0 { 1 } else { -1 }, 1));
                for k in 1..=j {
                    t = virasoro_L(-1, &t).scale_rat(&rat(1, k));
                }
                rhs.add_assign_ref(&t);
            }
            prop_assert_eq!(lhs, rhs);
        }

        #[test]
        fn intertwiner_commutator(v in small_algebra_vector(), i1 in 0usize..5, i2 in 0usize..5, m in -2i64..3, e in -2i64..3) {
            // [v_m, 𝒴(w1, x)] = Σ_i C(m,i) x^{m-i} 𝒴(v_i w1, x)
            let (l, mu) = (q(1, 2), q(1, 2));
            let w1 = module_basis(l, 2)[i1 % 4].clone();
            let w2 = module_basis(mu, 2)[i2 % 4].clone();
            let ex = l * mu + Q::from_integer(e);
            let mut total_l = FockVector::zero(l + mu);
            let mut total_r = FockVector::zero(l + mu);
            total_l.add_assign_ref(&mode(&v, m, &intertwiner_component(&w1, &w2, ex)));
            total_l.add_assign_ref(&intertwiner_component(&w1, &mode(&v, m, &w2), ex).neg());
            for i in 0..6i64 {
                let c = binomial(Q::from_integer(m), i as u64);
                // x^{m-i} 𝒴(v_i w1, x): coefficient of x^{ex} uses 𝒴 at x^{ex-m+i}
                total_r.add_assign_ref(&intertwiner_component(&mode(&v, i, &w1), &w2, ex - Q::from_integer(m - i)).scale_rat(&c));
            }
            prop_assert_eq!(total_l, total_r);
        }
    }
}
