//! Windowed checks of the vertex algebra axioms and of the conjugation
//! formulas for `e^{ζL(1)}`, `c^{L(0)}` acting on `Y`, `Y*`.

use serde_json::{json, Value};

use super::{
    algebra_basis, exp_L1, l1_divided_power, module_basis, opposite_component, scale_L0, vertex_component, virasoro_L,
    FockVector,
};
use crate::report::Outcome;
use crate::scalars::Scalar;
use crate::series::{
    delta_binomial, delta_kernel, iota_plus_binomial, product_with, support_1d, ExponentVector, FormalSeries, Interval,
    LinearConstraint, Monomial, Support, Variable, Window, NVARS,
};
use crate::{Result, Q};

use Variable::{X, X0, X1, X2, Y};

fn weight_bounds(v: &FockVector) -> (i64, i64) {
    let g = v.grades();
    (g.first().copied().unwrap_or(0) as i64, g.last().copied().unwrap_or(0) as i64)
}

fn grade(w: &FockVector) -> i64 {
    w.max_grade().unwrap_or(0) as i64
}

fn mismatch(what: &str, ctx: Value, exponent: Value, left: &FockVector, right: &FockVector, m: u32) -> Outcome {
    Outcome::fail(
        format!("{what} fails at {exponent}"),
        json!({"check": what, "case": ctx, "exponent": exponent, "left": left.to_json(m), "right": right.to_json(m)}),
    )
}

/// Support of `Y(a, xa)Y(b, xb)w`: `xb ≥ -(wt w + wt b)` and `xa + xb ≥ -(wt w + wt a + wt b)`.
fn iterate_support(xa: Variable, xb: Variable, lower_b: i64, lower_sum: i64) -> Support {
    let mut s = support_1d(xb, Some(Q::from_integer(lower_b)), None);
    s.bounds[xa.index()] = Interval::FULL;
    let mut coeffs = [0i64; NVARS];
    coeffs[xa.index()] = 1;
    coeffs[xb.index()] = 1;
    s.constraints.push(LinearConstraint { coeffs, range: Interval { lo: Some(Q::from_integer(lower_sum)), hi: None } });
    s
}

fn int(e: &ExponentVector, v: Variable) -> i64 {
    e.get(v).to_integer()
}

/// The Jacobi identity
/// `x0^{-1}δ((x1-x2)/x0)Y(u,x1)Y(v,x2)w - x0^{-1}δ((x2-x1)/(-x0))Y(v,x2)Y(u,x1)w
///  = x2^{-1}δ((x1-x0)/x2)Y(Y(u,x0)v,x2)w`
/// on `window`, each side built as a product of a δ-expansion with an iterate
/// of vertex operators.
pub fn check_jacobi_identity(u: &FockVector, v: &FockVector, w: &FockVector, window: &Window, m: u32) -> Result<Outcome> {
    let (hu, hv, gw) = (weight_bounds(u).1, weight_bounds(v).1, grade(w));
    let x = Monomial::var;
    let zero = Q::from_integer(0);
    // Every δ factor is homogeneous of degree -1, so only iterate terms whose two
    // exponents sum to t0 + t1 + t2 + 1 for some window point t reach the window.
    let total = [X0, X1, X2].iter().fold(Interval::point(zero), |acc, v| acc.plus(&window.get(*v)));
    let band = total.plus(&Interval::point(Q::from_integer(1)));
    let restrict = |mut s: Support, xa: Variable, xb: Variable| {
        let mut coeffs = [0i64; NVARS];
        coeffs[xa.index()] = 1;
        coeffs[xb.index()] = 1;
        s.constraints.push(LinearConstraint { coeffs, range: band });
        s
    };
    let iterate = |a: &FockVector, xa: Variable, b: &FockVector, xb: Variable, win: &Window| {
        let (ha, hb) = (weight_bounds(a).1, weight_bounds(b).1);
        let mut inner: std::collections::HashMap<i64, FockVector> = std::collections::HashMap::new();
        let support = restrict(iterate_support(xa, xb, -(gw + hb), -(gw + ha + hb)), xa, xb);
        FormalSeries::from_fn(&[(xa, zero), (xb, zero)], *win, support, |e| {
            let bw = inner.entry(int(e, xb)).or_insert_with(|| vertex_component(b, w)(int(e, xb)));
            Ok(vertex_component(a, bw)(int(e, xa)))
        })
    };
    let s_uv = restrict(iterate_support(X1, X2, -(gw + hv), -(gw + hu + hv)), X1, X2);
    let first = product_with(|win: &Window| delta_kernel(&x(X1), &x(X2).neg(), &x(X0), win), &s_uv, |win: &Window| iterate(u, X1, v, X2, win), window)?;
    let s_vu = restrict(iterate_support(X2, X1, -(gw + hu), -(gw + hu + hv)), X2, X1);
    let second = product_with(
        |win: &Window| delta_binomial(&Monomial::var_pow(X0, -1), &x(X2), &x(X1).neg(), &x(X0).neg(), win),
        &s_vu,
        |win: &Window| iterate(v, X2, u, X1, win),
        window,
    )?;
    let s_it = restrict(iterate_support(X2, X0, -(hu + hv), -(gw + hu + hv)), X2, X0);
    let mut uv: std::collections::HashMap<i64, FockVector> = std::collections::HashMap::new();
    let rhs = product_with(
        |win: &Window| delta_kernel(&x(X1), &x(X0).neg(), &x(X2), win),
        &s_it,
        |win: &Window| {
            FormalSeries::from_fn(&[(X0, zero), (X2, zero)], *win, s_it.clone(), |e| {
                let y = uv.entry(int(e, X0)).or_insert_with(|| vertex_component(u, v)(int(e, X0)));
                Ok(vertex_component(y, w)(int(e, X2)))
            })
        },
        window,
    )?;
    let lhs = first.sub(&second);
    Ok(match lhs.equal_on_window(&rhs, window)? {
        None => Outcome::pass(format!("Jacobi identity for u = {u}, v = {v} on {w}")),
        Some(wit) => Outcome::fail(
            format!("Jacobi identity for u = {u}, v = {v} on {w}: {}", wit.describe()),
            json!({"check": "Jacobi identity", "case": {"u": u.to_string(), "v": v.to_string(), "w": w.to_string()},
                   "difference": wit.to_json(m)}),
        ),
    })
}

/// `Y(1, x)w = w` for exponents in `[lo, hi]`.
pub fn check_vacuum_property(w: &FockVector, lo: i64, hi: i64, m: u32) -> Outcome {
    let one = FockVector::vacuum();
    for e in lo..=hi {
        let got = vertex_component(&one, w)(e);
        let want = if e == 0 { w.clone() } else { FockVector::zero(w.momentum()) };
        if got != want {
            return mismatch("vacuum property", json!({"w": w.to_string()}), json!({"x": e}), &got, &want, m);
        }
    }
    Outcome::pass(format!("Y(1, x){w} = {w}"))
}

/// `Y(v, x)1` has no negative powers down to `x^{lo}` and constant term `v`.
pub fn check_creation_property(v: &FockVector, lo: i64, m: u32) -> Outcome {
    let one = FockVector::vacuum();
    for e in lo..=0 {
        let got = vertex_component(v, &one)(e);
        let want = if e == 0 { v.clone() } else { FockVector::zero(Q::from_integer(0)) };
        if got != want {
            return mismatch("creation property", json!({"v": v.to_string()}), json!({"x": e}), &got, &want, m);
        }
    }
    Outcome::pass(format!("Y({v}, x)1 = {v} + O(x)"))
}

/// `d/dx Y(v, x)w = Y(L(-1)v, x)w` for exponents in `[lo, hi]`.
pub fn check_derivative_property(v: &FockVector, w: &FockVector, lo: i64, hi: i64, m: u32) -> Outcome {
    let dv = virasoro_L(-1, v);
    for e in lo..=hi {
        let left = vertex_component(v, w)(e + 1).scale(&Scalar::from_int(e + 1));
        let right = vertex_component(&dv, w)(e);
        if left != right {
            return mismatch("L(-1)-derivative property", json!({"v": v.to_string(), "w": w.to_string()}), json!({"x": e}), &left, &right, m);
        }
    }
    Outcome::pass(format!("d/dx Y({v}, x){w} = Y(L(-1){v}, x){w}"))
}

/// Runs the vacuum, creation, derivative and Jacobi checks for all algebra
/// basis vectors of weight `≤ max_weight` against basis vectors of `F_momentum`
/// of grade `≤ max_grade`; exponents of every variable range over `[lo, hi]`.
pub fn check_vertex_algebra_axioms(max_weight: u32, momentum: Q, max_grade: u32, lo: i64, hi: i64, m: u32) -> Result<Vec<(String, Outcome)>> {
    let vs = algebra_basis(max_weight);
    let ws = module_basis(momentum, max_grade);
    let window = Window::cube(&[X0, X1, X2], lo, hi);
    let first_failure = |acc: Outcome, o: Outcome| if acc.verdict == crate::report::Verdict::Pass { acc.and(o) } else { acc };
    let mut vacuum = Outcome::pass(format!("Y(1, x)w = w for {} vectors w", ws.len()));
    for w in &ws {
        vacuum = first_failure(vacuum, check_vacuum_property(w, lo, hi, m));
    }
    let mut creation = Outcome::pass(format!("Y(v, x)1 = v + O(x) for {} vectors v", vs.len()));
    let mut derivative = Outcome::pass(format!("L(-1)-derivative for {} × {} pairs", vs.len(), ws.len()));
    let mut jacobi = Outcome::pass(format!("Jacobi identity for {}² × {} triples on x0, x1, x2 ∈ [{lo}, {hi}]", vs.len(), ws.len()));
    for v in &vs {
        creation = first_failure(creation, check_creation_property(v, lo, m));
        for w in &ws {
            derivative = first_failure(derivative, check_derivative_property(v, w, lo, hi, m));
        }
    }
    'outer: for u in &vs {
        for v in &vs {
            for w in &ws {
                let o = check_jacobi_identity(u, v, w, &window, m)?;
                if o.verdict != crate::report::Verdict::Pass {
                    jacobi = o;
                    break 'outer;
                }
            }
        }
    }
    Ok(vec![
        ("vacuum".into(), vacuum),
        ("creation".into(), creation),
        ("derivative".into(), derivative),
        ("jacobi".into(), jacobi),
    ])
}

fn coefficient_at(s: &FormalSeries, e: i64) -> Scalar {
    s.coeff(&ExponentVector::single(X, Q::from_integer(e))).cloned().unwrap_or_default()
}

/// `e^{ζL(1)}Y(v, x)e^{-ζL(1)}w = Y(e^{ζ(1-ζx)L(1)}(1-ζx)^{-2L(0)}v, x/(1-ζx))w`
/// at `x^s` for `s ∈ [lo, hi]`. The right side expands `(1-ζx)^r` in powers of `x`.
pub fn check_l1_conjugation(v: &FockVector, w: &FockVector, zeta: &Scalar, lo: i64, hi: i64, m: u32) -> Result<Outcome> {
    let gw = grade(w);
    let shifted = exp_L1(&-zeta, w);
    let mzx = Monomial::new(-zeta, ExponentVector::single(X, Q::from_integer(1)));
    let one = Monomial::scalar(Scalar::one());
    for s in lo..=hi {
        let left = exp_L1(zeta, &vertex_component(v, &shifted)(s));
        let mut right = FockVector::zero(w.momentum());
        for (h, vh) in v.homogeneous_parts() {
            let h = h as i64;
            for k in 0..=h {
                let uk = l1_divided_power(k as u32, &vh);
                if uk.is_zero() {
                    continue;
                }
                let zk = zeta.pow(k)?;
                for e in -(gw + h - k)..=s {
                    let comp = vertex_component(&uk, w)(e);
                    if comp.is_zero() {
                        continue;
                    }
                    let win = Window::unbounded().with(X, s - e, s - e);
                    let bin = iota_plus_binomial(&one, &mzx, Q::from_integer(k - 2 * h - e), &win)?;
                    right.add_assign_ref(&comp.scale(&(&zk * &coefficient_at(&bin, s - e))));
                }
            }
        }
        if left != right {
            let ctx = json!({"v": v.to_string(), "w": w.to_string(), "zeta": zeta.to_json(m)});
            return Ok(mismatch("e^{ζL(1)} conjugation of Y", ctx, json!({"x": s}), &left, &right, m));
        }
    }
    Ok(Outcome::pass(format!("e^{{ζL(1)}} conjugation of Y({v}, x) on {w}, ζ = {zeta}")))
}

/// `e^{ζL(1)}Y*(v, x)e^{-ζL(1)}w = Y*(v, x-ζ)w` at `x^s`, `s ∈ [lo, hi]`.
pub fn check_opposite_translation(v: &FockVector, w: &FockVector, zeta: &Scalar, lo: i64, hi: i64, m: u32) -> Result<Outcome> {
    let (hmin, _) = weight_bounds(v);
    let top = grade(w) - hmin;
    let shifted = exp_L1(&-zeta, w);
    let x = Monomial::var(X);
    let mz = Monomial::scalar(-zeta);
    for s in lo..=hi {
        let left = exp_L1(zeta, &opposite_component(v, &shifted, s));
        let mut right = FockVector::zero(w.momentum());
        for e in s..=top.max(s) {
            let comp = opposite_component(v, w, e);
            if comp.is_zero() {
                continue;
            }
            let win = Window::unbounded().with(X, s, s);
            let bin = iota_plus_binomial(&x, &mz, Q::from_integer(e), &win)?;
            right.add_assign_ref(&comp.scale(&coefficient_at(&bin, s)));
        }
        if left != right {
            let ctx = json!({"v": v.to_string(), "w": w.to_string(), "zeta": zeta.to_json(m)});
            return Ok(mismatch("e^{ζL(1)} conjugation of Y*", ctx, json!({"x": s}), &left, &right, m));
        }
    }
    Ok(Outcome::pass(format!("e^{{ζL(1)}}Y*({v}, x)e^{{-ζL(1)}} = Y*({v}, x-ζ) on {w}, ζ = {zeta}")))
}

fn integer_power(c: &Scalar, h: Q) -> Result<Scalar> {
    if !h.is_integer() {
        return Err(crate::Error::Config(format!("c^L(0) needs integer weights, found {h}")));
    }
    c.pow(h.to_integer())
}

/// `c^{L(0)}Y*(v, x)c^{-L(0)}w = Y*(c^{-L(0)}v, c^{-1}x)w` at `x^s`, `s ∈ [lo, hi]`,
/// for `w` of integer weight.
pub fn check_opposite_scaling(v: &FockVector, w: &FockVector, c: &Scalar, lo: i64, hi: i64, m: u32) -> Result<Outcome> {
    let inv = c.monomial_inverse()?;
    let scaled_w = scale_L0(w, |h| integer_power(&inv, h))?;
    let scaled_v = scale_L0(v, |h| integer_power(&inv, h))?;
    for s in lo..=hi {
        let left = scale_L0(&opposite_component(v, &scaled_w, s), |h| integer_power(c, h))?;
        let right = opposite_component(&scaled_v, w, s).scale(&inv.pow(s)?);
        if left != right {
            let ctx = json!({"v": v.to_string(), "w": w.to_string(), "c": c.to_json(m)});
            return Ok(mismatch("c^{L(0)} conjugation of Y*", ctx, json!({"x": s}), &left, &right, m));
        }
    }
    Ok(Outcome::pass(format!("c^{{L(0)}} conjugation of Y*({v}, x) on {w}, c = {c}")))
}

/// `x^{L(0)}e^{yL(1)}x^{-L(0)}w = e^{(y/x)L(1)}w` as series in `x` and `y`.
pub fn check_l0_conjugates_l1(w: &FockVector, m: u32) -> Result<Outcome> {
    let mut lhs: FormalSeries<FockVector> = FormalSeries::zero();
    let mut rhs: FormalSeries<FockVector> = FormalSeries::zero();
    let weight = |v: &FockVector| v.terms().next().map(|(p, _)| v.weight_of(p));
    for (_, wh) in w.homogeneous_parts() {
        let Some(h) = weight(&wh) else { continue };
        let mut k = 0u32;
        loop {
            let lk = l1_divided_power(k, &wh);
            if lk.is_zero() {
                break;
            }
            let yk = ExponentVector::single(Y, Q::from_integer(k as i64));
            // x^{L(0)} acts on L(1)^k w by x^{h-k}; x^{-L(0)} on w by x^{-h}.
            let hk = weight(&lk).unwrap_or(h);
            lhs = lhs.add(&FormalSeries::exact([(yk.with(X, hk - h), lk.clone())]));
            rhs = rhs.add(&FormalSeries::exact([(yk.with(X, -Q::from_integer(k as i64)), lk)]));
            k += 1;
        }
    }
    Ok(match lhs.equal_on_window(&rhs, &Window::unbounded())? {
        None => Outcome::pass(format!("x^{{L(0)}}e^{{yL(1)}}x^{{-L(0)}} = e^{{(y/x)L(1)}} on {w}")),
        Some(wit) => Outcome::fail(
            format!("L(0)-conjugation of e^{{yL(1)}} on {w}: {}", wit.describe()),
            json!({"check": "L(0)-conjugation of e^{yL(1)}", "case": {"w": w.to_string()}, "difference": wit.to_json(m)}),
        ),
    })
}

/// The four conjugation formulas on sampled vectors: `v` in the algebra basis of
/// weight `≤ max_weight`, `w` of grade `≤ max_grade` in `F_{1/2}` (and in the
/// integer-weight sectors `F_0`, `F_2` for the `c^{L(0)}` formula), for every `ζ` in `zetas`.
pub fn check_conjugation_formulas(zetas: &[Scalar], max_weight: u32, max_grade: u32, lo: i64, hi: i64, m: u32) -> Result<Vec<(String, Outcome)>> {
    let vs = algebra_basis(max_weight);
    let ws = module_basis(Q::new(1, 2), max_grade);
    let integral: Vec<FockVector> =
        [0, 2].iter().flat_map(|&mom| module_basis(Q::from_integer(mom), max_grade)).collect();
    let mut l1y = Outcome::pass(format!("e^{{ζL(1)}} conjugation of Y for {} ζ", zetas.len()));
    let mut l1ystar = Outcome::pass(format!("e^{{ζL(1)}} conjugation of Y* for {} ζ", zetas.len()));
    let mut l0ystar = Outcome::pass(format!("c^{{L(0)}} conjugation of Y* for {} c", zetas.len()));
    let mut l0l1 = Outcome::pass("x^{L(0)} conjugation of e^{yL(1)}");
    let keep = |acc: Outcome, o: Outcome| if acc.verdict == crate::report::Verdict::Pass { acc.and(o) } else { acc };
    for zeta in zetas {
        for v in &vs {
            for w in &ws {
                l1y = keep(l1y, check_l1_conjugation(v, w, zeta, lo, hi, m)?);
                l1ystar = keep(l1ystar, check_opposite_translation(v, w, zeta, lo, hi, m)?);
            }
            for w in &integral {
                l0ystar = keep(l0ystar, check_opposite_scaling(v, w, zeta, lo, hi, m)?);
            }
        }
    }
    for w in ws.iter().chain(integral.iter()) {
        l0l1 = keep(l0l1, check_l0_conjugates_l1(w, m)?);
    }
    Ok(vec![
        ("l1-conjugation-of-Y".into(), l1y),
        ("l1-conjugation-of-Y*".into(), l1ystar),
        ("l0-conjugation-of-Y*".into(), l0ystar),
        ("l0-conjugation-of-exp-l1".into(), l0l1),
    ])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::report::Verdict;

    fn zetas() -> Vec<Scalar> {
        let zi = Scalar::z(Q::from_integer(-1));
        vec![zi.clone(), -zi, Scalar::from_int(2)]
    }

    #[test]
    fn jacobi_identity_small_cases() {
        let w = Window::cube(&[X0, X1, X2], -2, 2);
        let a = FockVector::basis(Q::from_integer(0), &[1]);
        let e = FockVector::highest(Q::new(1, 2));
        for (u, v) in [(a.clone(), a.clone()), (FockVector::omega(), a.clone()), (FockVector::vacuum(), FockVector::vacuum())] {
            let o = check_jacobi_identity(&u, &v, &e, &w, 16).unwrap();
            assert_eq!(o.verdict, Verdict::Pass, "{}", o.detail);
        }
    }

    #[test]
    fn axioms_on_small_window() {
        for (name, o) in check_vertex_algebra_axioms(2, Q::new(1, 2), 2, -2, 1, 16).unwrap() {
            assert_eq!(o.verdict, Verdict::Pass, "{name}: {}", o.detail);
        }
    }

    #[test]
    fn conjugation_formulas_hold() {
        for (name, o) in check_conjugation_formulas(&zetas(), 2, 2, -3, 2, 16).unwrap() {
            assert_eq!(o.verdict, Verdict::Pass, "{name}: {}", o.detail);
        }
    }

    #[test]
    fn scaling_formula_needs_integer_weights() {
        let v = FockVector::basis(Q::from_integer(0), &[1]);
        let w = FockVector::highest(Q::new(1, 2));
        let c = -Scalar::z(Q::from_integer(-1));
        assert!(check_opposite_scaling(&v, &w, &c, -1, 1, 16).is_err());
    }
}
