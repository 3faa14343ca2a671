//! Intertwining operators among Fock modules and the intertwining maps they
//! induce at a fixed point `z`.
//!
//! The space of intertwining operators of type `(F_{λ+μ}; F_λ F_μ)` is one
//! dimensional, spanned by the exponential operator normalized so that
//! `𝒴(e^λ, x)e^μ = x^{λμ}(e^{λ+μ} + O(x))`. Everything here is a finite
//! computation on graded pieces: a map `F` is accessed through its weight
//! projections, a Q-type map through its pairings with dual basis vectors.

#![allow(non_snake_case)]

use std::collections::BTreeMap;

use num_traits::Zero;
use serde_json::json;

use crate::fock::{
    contragredient_L, contragredient_component, intertwiner_component, l1_divided_power, module_basis,
    opposite_component, pairing, vertex_component, FockVector, Partition,
};
use crate::report::Outcome;
use crate::scalars::{rat, Field, Scalar};
use crate::series::{
    delta_binomial, product_with, support_1d, FormalSeries, Interval, Monomial, Variable, Window,
};
use crate::{Error, Result, Q};

use Variable::{X, X0, X1};

/// An intertwining operator of type `(F_{λ+μ}; F_λ F_μ)`.
#[derive(Clone, Debug, PartialEq)]
pub struct IntertwinerSpec {
    pub lambda: Q,
    pub mu: Q,
    pub normalization: Scalar,
    pub field: Field,
}

impl IntertwinerSpec {
    pub fn new(lambda: Q, mu: Q, field: Field) -> Result<Self> {
        let lm = lambda * mu;
        if field.n % lm.denom() != 0 {
            return Err(Error::DenominatorMismatch { r: lm, n: field.n });
        }
        Ok(IntertwinerSpec { lambda, mu, normalization: Scalar::one(), field })
    }

    pub fn scaled(&self, c: &Scalar) -> Self {
        IntertwinerSpec { normalization: &self.normalization * c, ..self.clone() }
    }

    pub fn target(&self) -> Q {
        self.lambda + self.mu
    }

    fn check_sectors(&self, w1: &FockVector, w2: &FockVector) -> Result<()> {
        let ok1 = w1.is_zero() || w1.momentum() == self.lambda;
        let ok2 = w2.is_zero() || w2.momentum() == self.mu;
        if ok1 && ok2 {
            Ok(())
        } else {
            Err(Error::Sector(format!(
                "intertwiner of type ({}; {} {}) applied to momenta {} and {}",
                self.target(),
                self.lambda,
                self.mu,
                w1.momentum(),
                w2.momentum()
            )))
        }
    }

    /// Coefficient of `x^e` in `𝒴(w1, x)w2`.
    pub fn component(&self, w1: &FockVector, w2: &FockVector, e: Q) -> Result<FockVector> {
        self.check_sectors(w1, w2)?;
        let w1 = w1.with_momentum(self.lambda);
        let w2 = w2.with_momentum(self.mu);
        Ok(intertwiner_component(&w1, &w2, e).scale(&self.normalization))
    }
}

/// `𝒴(w1, x)w2` tabulated on `window` in the variable `x`.
pub fn exp_intertwiner(
    spec: &IntertwinerSpec,
    w1: &FockVector,
    x: Variable,
    w2: &FockVector,
    window: Interval,
) -> Result<FormalSeries<FockVector>> {
    spec.check_sectors(w1, w2)?;
    let offset = spec.lambda * spec.mu;
    let g = w1.max_grade().unwrap_or(0) + w2.max_grade().unwrap_or(0);
    let support = support_1d(x, Some(offset - Q::from_integer(g as i64)), None);
    FormalSeries::from_fn(&[(x, offset)], Window::unbounded().with_interval(x, window), support, |e| {
        spec.component(w1, w2, e.get(x))
    })
}

/// A P(z)-type intertwining map `F: W1 ⊗ W2 → W̄3`, seen through its weight projections.
pub trait PMap {
    /// `(λ, μ)`; the target is `F_{λ+μ}`.
    fn sectors(&self) -> (Q, Q);
    fn field(&self) -> Field;
    /// Weight-`h` component of `F(w1 ⊗ w2)`.
    fn project(&self, w1: &FockVector, w2: &FockVector, h: Q) -> Result<FockVector>;
}

/// Splits a vector into homogeneous parts `(weight, part)`.
fn weighted_parts(w: &FockVector) -> Vec<(Q, FockVector)> {
    w.homogeneous_parts().into_iter().map(|(g, p)| (w.lowest_weight() + Q::from_integer(g as i64), p)).collect()
}

/// `F_{𝒴,p}(w1 ⊗ w2) = 𝒴(w1, e^{l_p(z)})w2`.
#[derive(Clone, Debug)]
pub struct FpMap {
    pub spec: IntertwinerSpec,
    pub p: i64,
}

pub fn F_P(spec: &IntertwinerSpec, p: i64) -> FpMap {
    FpMap { spec: spec.clone(), p }
}

impl PMap for FpMap {
    fn sectors(&self) -> (Q, Q) {
        (self.spec.lambda, self.spec.mu)
    }

    fn field(&self) -> Field {
        self.spec.field
    }

    fn project(&self, w1: &FockVector, w2: &FockVector, h: Q) -> Result<FockVector> {
        let mut out = FockVector::zero(self.spec.target());
        for (h1, a) in weighted_parts(w1) {
            for (h2, b) in weighted_parts(w2) {
                let e = h - h1 - h2;
                let comp = self.spec.component(&a, &b, e)?;
                if !comp.is_zero() {
                    out.add_assign_ref(&comp.scale(&self.spec.field.exp_lp(e, self.p)?));
                }
            }
        }
        Ok(out)
    }
}

impl FpMap {
    /// Values on basis pairs of grade `≤ in_grade`, truncated to output grade `≤ out_grade`.
    pub fn tabulate(&self, in_grade: u32, out_grade: u32) -> Result<IntertwiningMapTable> {
        let (l, m) = self.sectors();
        let lowest = (l + m) * (l + m) / 2;
        let mut entries = BTreeMap::new();
        for b1 in module_basis(l, in_grade) {
            for b2 in module_basis(m, in_grade) {
                let mut v = FockVector::zero(l + m);
                for g in 0..=out_grade {
                    v.add_assign_ref(&self.project(&b1, &b2, lowest + Q::from_integer(g as i64))?);
                }
                entries.insert((label(&b1), label(&b2)), v);
            }
        }
        Ok(IntertwiningMapTable { lambda: l, mu: m, field: self.spec.field, in_grade, out_grade, entries })
    }
}

fn label(b: &FockVector) -> Partition {
    b.terms().next().map(|(p, _)| p.clone()).unwrap_or_default()
}

/// Finite table of a P(z)-type map on basis pairs.
#[derive(Clone, Debug, PartialEq)]
pub struct IntertwiningMapTable {
    pub lambda: Q,
    pub mu: Q,
    pub field: Field,
    pub in_grade: u32,
    pub out_grade: u32,
    pub entries: BTreeMap<(Partition, Partition), FockVector>,
}

impl IntertwiningMapTable {
    /// Copy with `delta` added to the coefficient of `out` in the entry at `key`.
    pub fn perturbed(&self, key: &(Partition, Partition), out: &[u32], delta: &Scalar) -> Self {
        let mut t = self.clone();
        let entry = t.entries.get_mut(key).expect("key in table");
        entry.add_term(out.to_vec(), delta);
        t
    }
}

impl PMap for IntertwiningMapTable {
    fn sectors(&self) -> (Q, Q) {
        (self.lambda, self.mu)
    }

    fn field(&self) -> Field {
        self.field
    }

    fn project(&self, w1: &FockVector, w2: &FockVector, h: Q) -> Result<FockVector> {
        let target = self.lambda + self.mu;
        let g = h - target * target / 2;
        let mut out = FockVector::zero(target);
        if !g.is_integer() || g < Q::zero() {
            return Ok(out);
        }
        let g = g.to_integer() as u32;
        if g > self.out_grade {
            return Err(Error::DomainExhausted { needed: g as usize, available: self.out_grade as usize });
        }
        for (p1, c1) in w1.terms() {
            for (p2, c2) in w2.terms() {
                let need = p1.iter().chain(p2.iter()).sum::<u32>().max(0);
                let Some(v) = self.entries.get(&(p1.clone(), p2.clone())) else {
                    return Err(Error::DomainExhausted { needed: need as usize, available: self.in_grade as usize });
                };
                out.add_assign_ref(&v.component(g).scale(&(c1 * c2)));
            }
        }
        Ok(out)
    }
}

/// The intertwining operator `𝒴_{F,p}` recovered from a P(z)-type map.
pub struct Recovered<'a> {
    map: &'a dyn PMap,
    p: i64,
}

pub fn Y_from_F_P(map: &dyn PMap, p: i64) -> Recovered<'_> {
    Recovered { map, p }
}

impl Recovered<'_> {
    /// Coefficient of `x^e`: the weight `wt w1 + wt w2 + e` projection times `e^{-e·l_p(z)}`.
    pub fn component(&self, w1: &FockVector, w2: &FockVector, e: Q) -> Result<FockVector> {
        let (l, m) = self.map.sectors();
        let mut out = FockVector::zero(l + m);
        for (h1, a) in weighted_parts(w1) {
            for (h2, b) in weighted_parts(w2) {
                let proj = self.map.project(&a, &b, h1 + h2 + e)?;
                if !proj.is_zero() {
                    out.add_assign_ref(&proj.scale(&self.map.field().exp_lp(-e, self.p)?));
                }
            }
        }
        Ok(out)
    }
}

/// Compares `Y_from_F_P(F_P(𝒴, p), p)` with `𝒴` on basis pairs of grade `≤ grade`
/// and exponents `λμ + k`, `k ∈ [lo, hi]`.
pub fn round_trip_P(spec: &IntertwinerSpec, p: i64, grade: u32, lo: i64, hi: i64) -> Result<Outcome> {
    let f = F_P(spec, p);
    let rec = Y_from_F_P(&f, p);
    let base = spec.lambda * spec.mu;
    for b1 in module_basis(spec.lambda, grade) {
        for b2 in module_basis(spec.mu, grade) {
            for k in lo..=hi {
                let e = base + Q::from_integer(k);
                let want = spec.component(&b1, &b2, e)?;
                let got = rec.component(&b1, &b2, e)?;
                if want != got {
                    return Ok(Outcome::fail(
                        format!("round trip differs at {b1} ⊗ {b2}, x^{e}"),
                        json!({"w1": b1.to_json(spec.field.m), "w2": b2.to_json(spec.field.m), "exponent": e.to_string(),
                               "expected": want.to_json(spec.field.m), "recovered": got.to_json(spec.field.m)}),
                    ));
                }
            }
        }
    }
    Ok(Outcome::pass(format!("round trip exact for grades <= {grade}, exponents {base}+[{lo},{hi}]")))
}

fn algebra_weights(v: &FockVector) -> (i64, i64) {
    let g = v.grades();
    (g.first().copied().unwrap_or(0) as i64, g.last().copied().unwrap_or(0) as i64)
}

fn grade_bound(w: &FockVector) -> i64 {
    w.max_grade().unwrap_or(0) as i64
}

fn var_pow(v: Variable, e: i64) -> Monomial {
    Monomial::var_pow(v, e)
}

fn z_mono(e: i64) -> Monomial {
    Monomial::scalar(Scalar::z(Q::from_integer(e)))
}

/// `x0^{-1}δ((x1 - z)/x0)`: expansion in nonnegative powers of `z`.
pub fn delta_x1_minus_z(w: &Window) -> Result<FormalSeries> {
    delta_binomial(&var_pow(X0, -1), &Monomial::var(X1), &z_mono(1).neg(), &Monomial::var(X0), w)
}

/// `z^{-1}δ((x1 - x0)/z)`: expansion in nonnegative powers of `x0`.
pub fn delta_x1_minus_x0(w: &Window) -> Result<FormalSeries> {
    delta_binomial(&z_mono(-1), &Monomial::var(X1), &Monomial::var(X0).neg(), &z_mono(1), w)
}

/// `x0^{-1}δ((z - x1)/(-x0))`: expansion in nonnegative powers of `x1`.
pub fn delta_z_minus_x1(w: &Window) -> Result<FormalSeries> {
    delta_binomial(&var_pow(X0, -1), &z_mono(1), &Monomial::var(X1).neg(), &Monomial::var(X0).neg(), w)
}

/// Checks the P(z)-intertwining identity
/// `x0^{-1}δ((x1-z)/x0) Y3(v,x1)F(w1⊗w2) = z^{-1}δ((x1-x0)/z) F(Y1(v,x0)w1⊗w2)
///  + x0^{-1}δ((z-x1)/(-x0)) F(w1⊗Y2(v,x1)w2)`
/// on `window` in `(x0, x1)`, projected to output grades `≤ out_grade`.
pub fn check_P_intertwining(
    f: &dyn PMap,
    v: &FockVector,
    w1: &FockVector,
    w2: &FockVector,
    window: &Window,
    out_grade: u32,
) -> Result<Outcome> {
    match p_sides(f, v, w1, w2, window, out_grade) {
        Ok((lhs, rhs)) => Ok(Outcome::from_witness(lhs.equal_on_window(&rhs, window)?, f.field().m, "P(z)-intertwining identity")),
        Err(e) => Outcome::from_error(e),
    }
}

fn p_sides(
    f: &dyn PMap,
    v: &FockVector,
    w1: &FockVector,
    w2: &FockVector,
    window: &Window,
    out_grade: u32,
) -> Result<(FormalSeries<FockVector>, FormalSeries<FockVector>)> {
    let (l, m) = f.sectors();
    let target = l + m;
    let lowest = target * target / 2;
    let (hmin, hmax) = algebra_weights(v);
    let parts = v.homogeneous_parts();
    let w1 = w1.with_momentum(l);
    let w2 = w2.with_momentum(m);

    // ⟨·⟩ Y3(v, x1)F(w1 ⊗ w2), grades ≤ out_grade
    let left_support = support_1d(X1, None, Some(Q::from_integer(out_grade as i64 - hmin)));
    let left_fn = |win: &Window| {
        FormalSeries::from_fn(&[(X1, Q::zero())], *win, left_support.clone(), |e| {
            let a = e.get(X1).to_integer();
            let mut acc = FockVector::zero(target);
            for (h, vp) in &parts {
                for g3 in 0..=out_grade {
                    let h3 = lowest + Q::from_integer(g3 as i64);
                    let wt_in = h3 - Q::from_integer(*h as i64) - Q::from_integer(a);
                    if wt_in < lowest {
                        continue;
                    }
                    let u = f.project(&w1, &w2, wt_in)?;
                    if u.is_zero() {
                        continue;
                    }
                    acc.add_assign_ref(&vertex_component(vp, &u)(a).component(g3));
                }
            }
            Ok(acc)
        })
    };
    let graded = |a: &FockVector, b: &FockVector| -> Result<FockVector> {
        let mut acc = FockVector::zero(target);
        for g3 in 0..=out_grade {
            acc.add_assign_ref(&f.project(a, b, lowest + Q::from_integer(g3 as i64))?);
        }
        Ok(acc)
    };
    let first_support = support_1d(X0, Some(Q::from_integer(-(hmax + grade_bound(&w1)))), None);
    let first_fn = |win: &Window| {
        FormalSeries::from_fn(&[(X0, Q::zero())], *win, first_support.clone(), |e| {
            let a = e.get(X0).to_integer();
            graded(&vertex_component(v, &w1)(a), &w2)
        })
    };
    let second_support = support_1d(X1, Some(Q::from_integer(-(hmax + grade_bound(&w2)))), None);
    let second_fn = |win: &Window| {
        FormalSeries::from_fn(&[(X1, Q::zero())], *win, second_support.clone(), |e| {
            let a = e.get(X1).to_integer();
            graded(&w1, &vertex_component(v, &w2)(a))
        })
    };
    let lhs = product_with(delta_x1_minus_z, &left_support, left_fn, window)?;
    let r1 = product_with(delta_x1_minus_x0, &first_support, first_fn, window)?;
    let r2 = product_with(delta_z_minus_x1, &second_support, second_fn, window)?;
    Ok((lhs, r1.add(&r2)))
}

/// `B_r(𝒴)`, an intertwining operator of type `(W1'; W3' W2)`.
#[derive(Clone, Debug)]
pub struct BrIntertwiner {
    pub spec: IntertwinerSpec,
    pub r: i64,
}

pub fn B_r(spec: &IntertwinerSpec, r: i64) -> BrIntertwiner {
    BrIntertwiner { spec: spec.clone(), r }
}

impl BrIntertwiner {
    /// `⟨w1, B_r(𝒴)(w3', x)w2⟩` as `Σ c_s x^s` (finitely many terms).
    pub fn matrix_element(&self, w1: &FockVector, w3d: &FockVector, w2: &FockVector) -> Result<BTreeMap<Q, Scalar>> {
        let spec = &self.spec;
        let w1 = w1.with_momentum(spec.lambda);
        let w2 = w2.with_momentum(spec.mu);
        let w3d = w3d.with_momentum(spec.target());
        // e^{-x^{-1}L'(1)}w3' = Σ_k x^{-k} (-1)^k L'(1)^k w3'/k!
        let mut duals = Vec::new();
        let mut t = w3d.clone();
        let mut k = 0i64;
        while !t.is_zero() {
            duals.push((-k, t.clone()));
            k += 1;
            t = contragredient_L(1, &t).scale(&Scalar::from_rat(rat(-1, k)));
        }
        // e^{xL(1)}w1 = Σ_i x^i L(1)^i w1/i!
        let mut lefts = Vec::new();
        for i in 0.. {
            let a = l1_divided_power(i, &w1);
            if a.is_zero() {
                break;
            }
            lefts.push((i as i64, a));
        }
        // e^{-xL(1)} e^{(2r+1)πiL(0)} x^{-2L(0)} w2
        let mut rights: Vec<(Q, FockVector)> = Vec::new();
        for (h2, b) in weighted_parts(&w2) {
            let phase = spec.field.phase(h2 * Q::from_integer(2 * self.r + 1) / 2)?;
            for j in 0.. {
                let u = l1_divided_power(j, &b);
                if u.is_zero() {
                    break;
                }
                let sign = if j % 2 == 0 { 1 } else { -1 };
                rights.push((Q::from_integer(j as i64) - h2 * 2, u.scale(&phase.scale_rat(&rat(sign, 1)))));
            }
        }
        let mut out: BTreeMap<Q, Scalar> = BTreeMap::new();
        for (kx, c) in &duals {
            for (hc, cp) in weighted_parts(c) {
                for (ix, a) in &lefts {
                    for (ha, ap) in weighted_parts(a) {
                        for (jx, u) in &rights {
                            for (hu, up) in weighted_parts(u) {
                                let e = hc - ha - hu;
                                let val = pairing(&cp, &spec.component(&ap, &up, e)?)?;
                                if val.is_zero() {
                                    continue;
                                }
                                let s = Q::from_integer(kx + ix) + jx - e;
                                let slot = out.entry(s).or_default();
                                slot.add_assign_ref(&val);
                            }
                        }
                    }
                }
            }
        }
        out.retain(|_, c| !c.is_zero());
        Ok(out)
    }
}

/// A Q(z)-type intertwining map, seen through `⟨w3', F(w1 ⊗ w2)⟩`.
pub trait QMap {
    fn sectors(&self) -> (Q, Q);
    fn field(&self) -> Field;
    fn pair(&self, w3d: &FockVector, w1: &FockVector, w2: &FockVector) -> Result<Scalar>;
}

/// `⟨w3', F(w1⊗w2)⟩ = ⟨w1, 𝒴'(w3', e^{l_p(z)})w2⟩` with `𝒴' = B_r(𝒴)`.
#[derive(Clone, Debug)]
pub struct FqMap {
    pub op: BrIntertwiner,
    pub p: i64,
}

pub fn F_Q(op: &BrIntertwiner, p: i64) -> FqMap {
    FqMap { op: op.clone(), p }
}

impl QMap for FqMap {
    fn sectors(&self) -> (Q, Q) {
        (self.op.spec.lambda, self.op.spec.mu)
    }

    fn field(&self) -> Field {
        self.op.spec.field
    }

    fn pair(&self, w3d: &FockVector, w1: &FockVector, w2: &FockVector) -> Result<Scalar> {
        let mut acc = Scalar::zero();
        for (s, c) in self.op.matrix_element(w1, w3d, w2)? {
            acc.add_mul(&c, &self.field().exp_lp(s, self.p)?);
        }
        Ok(acc)
    }
}

/// `⟨w1, 𝒴_{F,p}(w3', x)w2⟩` recovered from a Q(z)-type map.
pub fn recover_from_F_Q(f: &dyn QMap, p: i64, w1: &FockVector, w3d: &FockVector, w2: &FockVector) -> Result<BTreeMap<Q, Scalar>> {
    let mut out = BTreeMap::new();
    for (h1, a) in weighted_parts(w1) {
        for (h3, c) in weighted_parts(w3d) {
            for (h2, b) in weighted_parts(w2) {
                let s = h1 - h2 - h3;
                let val = f.pair(&c, &a, &b)?;
                if !val.is_zero() {
                    let entry: &mut Scalar = out.entry(s).or_default();
                    entry.add_assign_ref(&(&val * &f.field().exp_lp(-s, p)?));
                }
            }
        }
    }
    out.retain(|_, c: &mut Scalar| !c.is_zero());
    Ok(out)
}

/// Checks the Q(z)-intertwining identity
/// `z^{-1}δ((x1-x0)/z) Y3*(v,x0)F(w1⊗w2) = x0^{-1}δ((x1-z)/x0) F(Y1*(v,x1)w1⊗w2)
///  - x0^{-1}δ((z-x1)/(-x0)) F(w1⊗Y2(v,x1)w2)`
/// paired with every dual basis vector of `W3'` of grade `≤ out_grade`.
pub fn check_Q_intertwining(
    f: &dyn QMap,
    v: &FockVector,
    w1: &FockVector,
    w2: &FockVector,
    window: &Window,
    out_grade: u32,
) -> Result<Outcome> {
    let (l, m) = f.sectors();
    for w3d in module_basis(l + m, out_grade) {
        let sides = q_sides(f, v, w1, w2, &w3d, window);
        let (lhs, rhs) = match sides {
            Ok(s) => s,
            Err(e) => return Outcome::from_error(e),
        };
        if let Some(w) = lhs.equal_on_window(&rhs, window)? {
            let mut o = Outcome::from_witness(Some(w), f.field().m, &format!("Q(z)-intertwining identity paired with {w3d}"));
            o.witness = Some(json!({"dual_vector": w3d.to_json(f.field().m), "difference": o.witness}));
            return Ok(o);
        }
    }
    Ok(Outcome::pass(format!("Q(z)-intertwining identity: equal on window, dual grades <= {out_grade}")))
}

fn q_sides(
    f: &dyn QMap,
    v: &FockVector,
    w1: &FockVector,
    w2: &FockVector,
    w3d: &FockVector,
    window: &Window,
) -> Result<(FormalSeries, FormalSeries)> {
    let (l, m) = f.sectors();
    let (_, hmax) = algebra_weights(v);
    let w1 = w1.with_momentum(l);
    let w2 = w2.with_momentum(m);
    let g3 = grade_bound(w3d);
    let left_support = support_1d(X0, Some(Q::from_integer(-(g3 + hmax))), None);
    let left_fn = |win: &Window| {
        FormalSeries::from_fn(&[(X0, Q::zero())], *win, left_support.clone(), |e| {
            f.pair(&contragredient_component(v, w3d, e.get(X0).to_integer()), &w1, &w2)
        })
    };
    let first_support = support_1d(X1, None, Some(Q::from_integer(grade_bound(&w1))));
    let first_fn = |win: &Window| {
        FormalSeries::from_fn(&[(X1, Q::zero())], *win, first_support.clone(), |e| {
            f.pair(w3d, &opposite_component(v, &w1, e.get(X1).to_integer()), &w2)
        })
    };
    let second_support = support_1d(X1, Some(Q::from_integer(-(hmax + grade_bound(&w2)))), None);
    let second_fn = |win: &Window| {
        FormalSeries::from_fn(&[(X1, Q::zero())], *win, second_support.clone(), |e| {
            f.pair(w3d, &w1, &vertex_component(v, &w2)(e.get(X1).to_integer()))
        })
    };
    let lhs = product_with(delta_x1_minus_x0, &left_support, left_fn, window)?;
    let r1 = product_with(delta_x1_minus_z, &first_support, first_fn, window)?;
    let r2 = product_with(delta_z_minus_x1, &second_support, second_fn, window)?;
    Ok((lhs, r1.sub(&r2)))
}

/// The window `x0 ∈ [lo, hi]`, `x1 ∈ [lo, hi]`.
pub fn square_window(lo: i64, hi: i64) -> Window {
    Window::unbounded().with(X0, lo, hi).with(X1, lo, hi).with(X, 0, 0)
}

/// Checks the exponent lattice and the L(-1)-derivative property of `𝒴` on basis pairs.
pub fn check_intertwiner_derivative(spec: &IntertwinerSpec, grade: u32, lo: i64, hi: i64) -> Result<Outcome> {
    let base = spec.lambda * spec.mu;
    for b1 in module_basis(spec.lambda, grade) {
        let db1 = crate::fock::virasoro_L(-1, &b1);
        for b2 in module_basis(spec.mu, grade) {
            for k in lo..=hi {
                let e = base + Q::from_integer(k);
                // 𝒴(L(-1)w1, x) = d/dx 𝒴(w1, x): coefficient of x^{e-1}
                let lhs = spec.component(&db1, &b2, e - 1)?;
                let rhs = spec.component(&b1, &b2, e)?.scale(&Scalar::from_q(e));
                if lhs != rhs {
                    return Ok(Outcome::fail(
                        format!("L(-1)-derivative fails at {b1} ⊗ {b2}, x^{}", e - 1),
                        json!({"w1": b1.to_json(spec.field.m), "w2": b2.to_json(spec.field.m), "exponent": (e - 1).to_string()}),
                    ));
                }
            }
        }
    }
    Ok(Outcome::pass("L(-1)-derivative property holds on window"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::report::Verdict;
    use crate::series::ExponentVector;

    fn q(n: i64, d: i64) -> Q {
        Q::new(n, d)
    }

    fn field() -> Field {
        Field::for_denominator(2)
    }

    fn spec(l: Q, m: Q) -> IntertwinerSpec {
        IntertwinerSpec::new(l, m, field()).unwrap()
    }

    #[test]
    fn exponents_lie_in_shifted_lattice() {
        let s = spec(q(1, 2), q(1, 2));
        let ser = exp_intertwiner(&s, &FockVector::basis(q(1, 2), &[1]), X, &FockVector::highest(q(1, 2)), Interval::new(-3, 3)).unwrap();
        assert!(!ser.is_empty());
        for (e, _) in ser.terms() {
            assert_eq!((e.get(X) - q(1, 4)).fract(), Q::zero());
        }
        let lowest = ser.coeff(&ExponentVector::single(X, q(1, 4) - 1)).unwrap();
        assert_eq!(*lowest, FockVector::highest(q(1, 1)).scale(&Scalar::from_q(q(1, 2))));
    }

    #[test]
    fn denominator_is_checked() {
        assert!(matches!(IntertwinerSpec::new(q(1, 3), q(1, 2), field()), Err(Error::DenominatorMismatch { .. })));
    }

    #[test]
    fn fp_lowest_component_and_branch_ratio() {
        let s = spec(q(1, 2), q(1, 2));
        let e = |m: Q| FockVector::highest(m);
        let f0 = F_P(&s, 0).project(&e(q(1, 2)), &e(q(1, 2)), q(1, 2)).unwrap();
        assert_eq!(f0, e(q(1, 1)).scale(&Scalar::z(q(1, 4))));
        let f1 = F_P(&s, 1).project(&e(q(1, 2)), &e(q(1, 2)), q(1, 2)).unwrap();
        assert_eq!(f1, f0.scale(&field().phase(q(1, 4)).unwrap()));
        // zero momentum: p-independent
        let s0 = spec(q(0, 1), q(1, 2));
        let b1 = FockVector::basis(q(0, 1), &[2]);
        let b2 = FockVector::basis(q(1, 2), &[1]);
        for h in [q(1, 8), q(9, 8), q(17, 8), q(33, 8)] {
            assert_eq!(F_P(&s0, 0).project(&b1, &b2, h).unwrap(), F_P(&s0, 1).project(&b1, &b2, h).unwrap());
        }
    }

    #[test]
    fn round_trips() {
        for (l, m) in [(q(1, 2), q(1, 2)), (q(1, 2), q(-1, 2)), (q(1, 1), q(1, 2))] {
            for p in [0, 1] {
                let o = round_trip_P(&spec(l, m), p, 2, -2, 3).unwrap();
                assert_eq!(o.verdict, Verdict::Pass, "{}", o.detail);
            }
        }
        // zero map gives the zero operator
        let t = F_P(&spec(q(1, 2), q(1, 2)), 0).tabulate(1, 2).unwrap();
        let zero = IntertwiningMapTable { entries: t.entries.keys().map(|k| (k.clone(), FockVector::zero(q(1, 1)))).collect(), ..t };
        let rec = Y_from_F_P(&zero, 0);
        assert!(rec.component(&FockVector::highest(q(1, 2)), &FockVector::highest(q(1, 2)), q(1, 4)).unwrap().is_zero());
    }

    #[test]
    fn scaling_is_linear() {
        let s = spec(q(1, 2), q(-1, 2));
        let c = Scalar::from_int(3);
        let b = FockVector::basis(q(1, 2), &[1]);
        let h = q(0, 1) + 2;
        let a = F_P(&s.scaled(&c), 1).project(&b, &b.with_momentum(q(-1, 2)), h).unwrap();
        let b2 = F_P(&s, 1).project(&b, &b.with_momentum(q(-1, 2)), h).unwrap().scale(&c);
        assert_eq!(a, b2);
    }

    #[test]
    fn intertwiner_derivative() {
        let o = check_intertwiner_derivative(&spec(q(1, 2), q(1, 2)), 2, -2, 3).unwrap();
        assert_eq!(o.verdict, Verdict::Pass);
    }

    #[test]
    fn fp_satisfies_intertwining_identity() {
        let s = spec(q(1, 2), q(1, 2));
        let f = F_P(&s, 0);
        let w = square_window(-2, 2);
        for v in [FockVector::vacuum(), FockVector::basis(q(0, 1), &[1]), FockVector::omega()] {
            for (w1, w2) in [(vec![], vec![]), (vec![1], vec![]), (vec![], vec![2])] {
                let o = check_P_intertwining(&f, &v, &FockVector::basis(q(1, 2), &w1), &FockVector::basis(q(1, 2), &w2), &w, 2).unwrap();
                assert_eq!(o.verdict, Verdict::Pass, "{v}: {}", o.detail);
            }
        }
    }

    #[test]
    fn corrupted_table_fails_with_witness() {
        let s = spec(q(1, 2), q(1, 2));
        let t = F_P(&s, 0).tabulate(4, 4).unwrap();
        let bad = t.perturbed(&(vec![], vec![]), &[1], &Scalar::from_int(1));
        let w = square_window(-1, 1);
        let v = FockVector::basis(q(0, 1), &[1]);
        let e = FockVector::highest(q(1, 2));
        let good = check_P_intertwining(&t, &v, &e, &e, &w, 2).unwrap();
        assert_eq!(good.verdict, Verdict::Pass, "{}", good.detail);
        let o = check_P_intertwining(&bad, &v, &e, &e, &w, 2).unwrap();
        assert_eq!(o.verdict, Verdict::Fail);
        assert!(o.witness.is_some());
    }

    #[test]
    fn br_lowest_weight_phase() {
        let (l, m) = (q(1, 2), q(1, 2));
        let s = spec(l, m);
        let e1 = FockVector::highest(l);
        let e2 = FockVector::highest(m);
        let d3 = FockVector::highest(l + m);
        let h2 = m * m / 2;
        for r in [0, -1] {
            let me = B_r(&s, r).matrix_element(&e1, &d3, &e2).unwrap();
            let phase = field().phase(h2 * Q::from_integer(2 * r + 1) / 2).unwrap();
            // ⟨e^λ, B_r(𝒴)((e^{λ+μ})', x)e^μ⟩ = e^{(2r+1)πi h2} x^{-2h2 - λμ}
            assert_eq!(me, BTreeMap::from([(-h2 * 2 - l * m, phase)]));
        }
        // r and r+1 differ by e^{2πi h2}
        let b2 = FockVector::basis(m, &[1]);
        let a = B_r(&s, 0).matrix_element(&FockVector::basis(l, &[1]), &FockVector::basis(l + m, &[1, 1]), &b2).unwrap();
        let b = B_r(&s, 1).matrix_element(&FockVector::basis(l, &[1]), &FockVector::basis(l + m, &[1, 1]), &b2).unwrap();
        let ratio = field().phase(m * m / 2 + 1).unwrap();
        for (s_, c) in &a {
            assert_eq!(b[s_], c * &ratio);
        }
        assert_eq!(a.len(), 1);
    }

    #[test]
    fn fq_satisfies_identity_and_round_trips() {
        let s = spec(q(1, 2), q(1, 2));
        let op = B_r(&s, 0);
        let f = F_Q(&op, 0);
        let w = square_window(-2, 2);
        for v in [FockVector::vacuum(), FockVector::basis(q(0, 1), &[1]), FockVector::omega()] {
            let o = check_Q_intertwining(&f, &v, &FockVector::basis(q(1, 2), &[1]), &FockVector::highest(q(1, 2)), &w, 2).unwrap();
            assert_eq!(o.verdict, Verdict::Pass, "{v}: {}", o.detail);
        }
        for p in [0, 1] {
            let f = F_Q(&op, p);
            for b1 in module_basis(q(1, 2), 2) {
                for b3 in module_basis(q(1, 1), 2) {
                    let b2 = FockVector::basis(q(1, 2), &[1]);
                    assert_eq!(recover_from_F_Q(&f, p, &b1, &b3, &b2).unwrap(), op.matrix_element(&b1, &b3, &b2).unwrap());
                }
            }
        }
    }
}
