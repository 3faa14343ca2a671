use super::*;
use crate::maps::{B_r, F_P, F_Q, IntertwinerSpec};
use crate::series::ExponentVector;

fn q(n: i64, d: i64) -> Q {
    Q::new(n, d)
}

fn field() -> Field {
    Field::for_denominator(2)
}

fn half() -> Q {
    q(1, 2)
}

fn alpha() -> FockVector {
    FockVector::basis(Q::zero(), &[1])
}

fn random(seed: u64) -> DualFunctional {
    DualFunctional::random(half(), half(), field(), 3, seed, 5)
}

fn structured_p(w3d: &FockVector) -> DualFunctional {
    let spec = IntertwinerSpec::new(half(), half(), field()).unwrap();
    DualFunctional::from_pmap(Rc::new(F_P(&spec, 0)), w3d, "F_P")
}

fn structured_q(w3d: &FockVector) -> DualFunctional {
    let spec = IntertwinerSpec::new(half(), half(), field()).unwrap();
    DualFunctional::from_qmap(Rc::new(F_Q(&B_r(&spec, 0), 0)), w3d, "F_Q")
}

#[test]
fn tau_q_components_match_series_expansion() {
    let f = random(7);
    let w = Window::unbounded().with(X0, -4, 3).with(X1, -4, 3).with(X, 0, 0);
    for v in [alpha(), FockVector::omega()] {
        for zeta in [Zeta::Z, Zeta::Z_INV] {
            for (w1, w2) in evaluation_pairs(half(), half(), 1) {
                let ser = tau_q_delta_series(&f, &v, zeta, &w1, &w2, &w).unwrap();
                for a in -4..=3 {
                    for b in -4..=3 {
                        let e = ExponentVector::zero().with(X0, Q::from_integer(a)).with(X1, Q::from_integer(b));
                        let from_series = ser.coeff(&e).cloned().unwrap_or_default();
                        let direct = tau_q_value(&f, &v, -a - 1, -b - 1, zeta, &w1, &w2).unwrap();
                        assert_eq!(from_series, direct, "v={v} ζ={zeta:?} x0^{a} x1^{b} on {w1}⊗{w2}");
                    }
                }
            }
        }
    }
}

#[test]
fn yprime_p_residue_matches_series() {
    // The x0^{-1} coefficient of the τ_P series is Y'_P(v, x1)f.
    let f = random(11);
    let w = Window::unbounded().with(X0, -1, -1).with(X1, -6, 3).with(X, 0, 0);
    for v in [alpha(), FockVector::omega()] {
        for (w1, w2) in evaluation_pairs(half(), half(), 2) {
            let ser = tau_p_delta_series(&f, &v, &w1, &w2, &w).unwrap();
            for s in -6..=3 {
                let e = ExponentVector::zero().with(X0, Q::from_integer(-1)).with(X1, Q::from_integer(s));
                let a = ser.coeff(&e).cloned().unwrap_or_default();
                assert_eq!(a, yprime_p_value(&f, &v, s, &w1, &w2).unwrap(), "v={v} s={s} on {w1}⊗{w2}");
            }
        }
    }
}

#[test]
fn vacuum_acts_as_identity() {
    let o = check_yprime_vacuum(&random(3), 2, -4, 4).unwrap();
    assert_eq!(o.verdict, Verdict::Pass, "{}", o.detail);
}

#[test]
fn derivative_property_on_random_functionals() {
    for seed in 0..3 {
        for v in [alpha(), FockVector::omega()] {
            let o = check_yprime_derivative(&random(seed), &v, 2, -5, 3).unwrap();
            assert_eq!(o.verdict, Verdict::Pass, "{}", o.detail);
        }
    }
}

#[test]
fn psi_on_lowest_weight_vectors() {
    let (a, b) = psi(field(), &FockVector::highest(half()), &FockVector::highest(half())).unwrap();
    assert_eq!(a, FockVector::highest(half()));
    // μ = 1/2: z^{-1/4} e^{πi/8}
    let c = &Scalar::z(q(-1, 4)) * &field().phase(q(1, 16)).unwrap();
    assert_eq!(b, FockVector::highest(half()).scale(&c));
}

#[test]
fn psi_inverse_undoes_psi() {
    for (w1, w2) in evaluation_pairs(half(), q(-1, 2), 3) {
        let (a, b) = psi(field(), &w1, &w2).unwrap();
        let (c, d) = psi_inverse(field(), &a, &b).unwrap();
        assert_eq!((c, d), (w1, w2));
    }
    let f = random(5);
    let pairs = evaluation_pairs(half(), half(), 3);
    assert!(psi_star(&psi_star_inverse(&f)).first_difference(&f, &pairs).unwrap().is_none());
}

#[test]
fn structured_functional_is_p_compatible() {
    let cfg = CompatConfig::new(vec![alpha(), FockVector::omega()], 2, -5, 2);
    for w3d in [FockVector::highest(q(1, 1)), FockVector::basis(q(1, 1), &[1])] {
        let o = check_P_compat(&structured_p(&w3d), &cfg).unwrap();
        assert_eq!(o.verdict, Verdict::Pass, "{}", o.detail);
    }
}

#[test]
fn structured_functional_is_q_compatible() {
    let cfg = CompatConfig::new(vec![alpha(), FockVector::omega()], 2, -3, 3);
    let o = check_Q_compat(&structured_q(&FockVector::highest(q(1, 1))), Zeta::Z, &cfg).unwrap();
    assert_eq!(o.verdict, Verdict::Pass, "{}", o.detail);
}

#[test]
fn random_functional_fails_with_witness() {
    let cfg = CompatConfig::new(vec![alpha()], 2, -4, 2);
    let o = check_P_compat(&random(1), &cfg).unwrap();
    assert_eq!(o.verdict, Verdict::Fail);
    assert!(o.witness.is_some());
}

#[test]
fn conjugation_lemma_on_random_functionals() {
    for seed in 0..2 {
        for v in [alpha(), FockVector::omega()] {
            let o = verify_conjugation_lemma(&random(seed), &v, 1, &square_window(-3, 2)).unwrap();
            assert_eq!(o.verdict, Verdict::Pass, "{}", o.detail);
        }
    }
}

#[test]
fn conjugation_lemma_sides_separate_wrong_pairings() {
    let (f, g) = (random(7), random(8));
    let win = square_window(-3, 2);
    let pairs = evaluation_pairs(half(), half(), 1);
    let differs = |lhs_of: &DualFunctional, rhs_of: &DualFunctional| {
        pairs.iter().any(|(w1, w2)| {
            let lhs = tau_p_delta_series(lhs_of, &alpha(), w1, w2, &win).unwrap();
            let rhs = lemma_rhs(rhs_of, &alpha(), w1, w2, &win).unwrap();
            lhs.equal_on_window(&rhs, &win).unwrap().is_some()
        })
    };
    assert!(!differs(&psi_star(&f), &f));
    assert!(differs(&f, &f), "omitting ψ* must be detected");
    assert!(differs(&psi_star(&f), &g), "a different functional must be detected");
}

#[test]
fn grading_dimension_counts_weights() {
    let one = check_grading(&structured_p(&FockVector::highest(q(1, 1))), 2, 6).unwrap();
    assert_eq!(one.outcome.verdict, Verdict::Pass, "{}", one.outcome.detail);
    assert_eq!(one.dimension, 1);
    assert_eq!(one.eigenvalues, vec![rat(1, 2)]);
    let mixed = FockVector::highest(q(1, 1)).add(&FockVector::basis(q(1, 1), &[2]));
    let two = check_grading(&structured_p(&mixed), 2, 6).unwrap();
    assert_eq!(two.outcome.verdict, Verdict::Pass, "{}", two.outcome.detail);
    assert_eq!(two.eigenvalues, vec![rat(1, 2), rat(5, 2)]);
}

#[test]
fn rational_roots_of_integer_polynomial() {
    // (x - 1/2)(x + 3)(x - 2)
    let p = [rat(3, 1), rat(-13, 2), rat(1, 2), rat(1, 1)];
    assert_eq!(rational_roots(&p), vec![rat(-3, 1), rat(1, 2), rat(2, 1)]);
}

#[test]
fn orbit_dimensions_are_partition_counts() {
    let f = structured_p(&FockVector::highest(q(1, 1)));
    let r = check_local_grading_restriction(&f, 2, 2, 2, 2, 4).unwrap();
    assert_eq!(r.lowest_weight, Some(half()));
    let dims: Vec<usize> = (0..=2).map(|g| r.dimensions.get(&(half() + g)).copied().unwrap_or(0)).collect();
    assert_eq!(dims, vec![1, 1, 2]);
}

fn relation_config() -> RelationConfig {
    RelationConfig { pair_grade: 1, jacobi_lo: -2, jacobi_hi: 1, exp_lo: -3, exp_hi: 1, lowest: -10, nilpotency_cap: 12 }
}

#[test]
fn compatibility_equivalence_on_structured_functional() {
    let f = structured_p(&FockVector::highest(q(1, 1)));
    let cfg = CompatConfig::new(vec![alpha(), FockVector::omega()], 1, -4, 2);
    let rel = RelationConfig { lowest: cfg.probe_lo, ..relation_config() };
    let report = verify_compat_equivalence(&f, &cfg, &rel, &[(alpha(), FockVector::omega())]).unwrap();
    assert!(report.equivalent());
    assert_eq!(report.p_compat.verdict, Verdict::Pass, "{}", report.p_compat.detail);
    for (name, o) in &report.relations {
        assert_eq!(o.verdict, Verdict::Pass, "{name}: {}", o.detail);
    }
    assert_eq!(report.verdict(), Verdict::Pass);
}

#[test]
fn compatibility_equivalence_on_random_functional() {
    let cfg = CompatConfig::new(vec![alpha()], 1, -4, 2);
    let report = verify_compat_equivalence(&random(2), &cfg, &relation_config(), &[]).unwrap();
    assert_eq!(report.p_compat.verdict, Verdict::Fail);
    assert!(report.equivalent());
}

#[test]
fn operator_bridges_hold_on_random_functionals() {
    let rel = relation_config();
    let f = random(9);
    for o in [check_l1_bridge(&f, &rel).unwrap(), check_l0_bridge(&f, &rel).unwrap(), check_l_bracket(&f, &rel).unwrap()] {
        assert_eq!(o.verdict, Verdict::Pass, "{}", o.detail);
    }
}

#[test]
fn jacobi_separates_structured_from_random() {
    let f = structured_p(&FockVector::highest(q(1, 1)));
    let rel = RelationConfig { lowest: -10, ..relation_config() };
    // A random functional breaks the Jacobi identity.
    let o = check_jacobi(&random(4), &alpha(), &alpha(), &rel).unwrap();
    assert_eq!(o.verdict, Verdict::Fail);
    let o = check_jacobi(&f, &alpha(), &alpha(), &rel).unwrap();
    assert_eq!(o.verdict, Verdict::Pass, "{}", o.detail);
}
