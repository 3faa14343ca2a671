//! Batch verification harness: configuration, the suite registry, and report output.

use std::rc::Rc;
use std::time::{Duration, Instant};

use clap::{Parser, ValueEnum};
use serde_json::{json, Value};

use crate::dualact::{self, CompatConfig, DualFunctional, RelationConfig, Zeta};
use crate::fock::{self, algebra_basis, partition_count, FockVector};
use crate::maps::{self, IntertwinerSpec, PMap};
use crate::report::{Outcome, Verdict};
use crate::scalars::{q_string, Field, Scalar};
use crate::{Error, Result, Q};

/// Suite names, in the order they run and report.
pub const SUITES: [&str; 12] = [
    "delta-calculus",
    "voa-axioms",
    "conjugation-formulas",
    "intertwining-P",
    "intertwining-Q",
    "prop-12-2-roundtrip",
    "prop-13-3",
    "lemma-13-8",
    "compat-equivalence",
    "jacobi-13-29",
    "L-relations",
    "hboxtr-membership",
];

/// What each suite verifies, quoted in every report it produces.
pub fn anchor(suite: &str) -> &'static str {
    match suite {
        "delta-calculus" => "δ(x) = Σ x^n; f(x)δ(x) = f(1)δ(x); x1^{-1}δ((x2+x0)/x1) = x2^{-1}δ((x1-x0)/x2); three-term δ identity",
        "voa-axioms" => "vacuum, creation, L(-1)-derivative and Jacobi identity for Y on F_{1/2}",
        "conjugation-formulas" => {
            "e^{ζL(1)}Y(v,x)e^{-ζL(1)} = Y(e^{ζ(1-ζx)L(1)}(1-ζx)^{-2L(0)}v, x/(1-ζx)); e^{ζL(1)}Y*(v,x)e^{-ζL(1)} = Y*(v,x-ζ); \
             c^{L(0)}Y*(v,x)c^{-L(0)} = Y*(c^{-L(0)}v, c^{-1}x); x^{L(0)}e^{yL(1)}x^{-L(0)} = e^{(y/x)L(1)}"
        }
        "intertwining-P" => "x0^{-1}δ((x1-z)/x0)Y3(v,x1)F(w1⊗w2) = z^{-1}δ((x1-x0)/z)F(Y1(v,x0)w1⊗w2) + x0^{-1}δ((z-x1)/(-x0))F(w1⊗Y2(v,x1)w2)",
        "intertwining-Q" => "z^{-1}δ((x1-x0)/z)Y3*(v,x0)F(w1⊗w2) = x0^{-1}δ((x1-z)/x0)F(Y1*(v,x1)w1⊗w2) - x0^{-1}δ((z-x1)/(-x0))F(w1⊗Y2(v,x1)w2)",
        "prop-12-2-roundtrip" => "F_{𝒴,p}(w1⊗w2) = 𝒴(w1,x)w2|_{x^n = e^{n l_p(z)}} and 𝒴_{F,p} recovers 𝒴",
        "prop-13-3" => "Y'_P(1,x) = 1 and d/dx Y'_P(v,x) = Y'_P(L(-1)v,x) on (W1⊗W2)*",
        "lemma-13-8" => "τ_P(x0^{-1}δ((x1^{-1}-z)/x0)Y_t(v,x1))ψ*(f) = (zx0)^{-1}ψ*(τ_{Q(z^{-1})}(zx0x1δ((z^{-1}+x0^{-1})/(zx0x1)^{-1})Y_t(e^{zx0x1L(1)}(x0x1)^{-2L(0)}v, x0^{-1}))f)",
        "compat-equivalence" => "f satisfies the P(z)-compatibility condition iff (ψ*)^{-1}f satisfies the Q(z^{-1})-compatibility condition",
        "jacobi-13-29" => "Jacobi identity for Y'_P on P(z)-compatible functionals",
        "L-relations" => {
            "L'_{Q(z^{-1})}(1)(ψ*)^{-1}; (L'_{Q(z^{-1})}(0)+zL'_{Q(z^{-1})}(1)); [L'_P(0), L'_P(1)]f = -L'_P(1)f; \
             ψ*(Y'_{Q(z^{-1})}(v,x0^{-1})(ψ*)^{-1}f); e^{zL'_{Q(z^{-1})}(1)}Y'_{Q(z^{-1})}(v,x)"
        }
        "hboxtr-membership" => "f ∈ W1 ⊔⊓_{P(z)} W2: P(z)-compatibility, grading and local grading restriction",
        _ => "",
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Text,
}

/// Command-line interface of the `vtensor` binary.
#[derive(Clone, Debug, Parser)]
#[command(name = "vtensor", about = "Windowed exact verification of P(z)/Q(z) tensor-product identities")]
pub struct Cli {
    /// Suites to run (repeatable, or comma-separated); `all` runs every suite.
    #[arg(long, value_delimiter = ',', default_value = "all")]
    pub suite: Vec<String>,
    /// Momenta lie in (1/d)Z; z-exponents in (1/d²)Z.
    #[arg(long, default_value_t = 2)]
    pub momentum_denominator: i64,
    /// Grade window G.
    #[arg(long, default_value_t = 5)]
    pub grade: u32,
    /// Branches p of log z (repeatable, or comma-separated).
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, default_values_t = [0, 1])]
    pub branch_p: Vec<i64>,
    /// Integers r in the map from intertwining operators to Q-side operators.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, default_values_t = [0, -1])]
    pub branch_r: Vec<i64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Cyclotomic order M; must be a multiple of 4d².
    #[arg(long)]
    pub cyclotomic_order: Option<u32>,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    pub format: Format,
    /// Output file; standard output when absent.
    #[arg(long)]
    pub out: Option<std::path::PathBuf>,
    /// Adds a deliberately corrupted intertwining map to the intertwining-P suite.
    #[arg(long)]
    pub inject_corruption: bool,
}

/// Validated run parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub momentum_denominator: i64,
    pub grade: u32,
    pub branch_p: Vec<i64>,
    pub branch_r: Vec<i64>,
    pub seed: u64,
    pub field: Field,
    pub suites: Vec<String>,
    pub inject_corruption: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            momentum_denominator: 2,
            grade: 5,
            branch_p: vec![0, 1],
            branch_r: vec![0, -1],
            seed: 0,
            field: Field::for_denominator(2),
            suites: SUITES.iter().map(|s| s.to_string()).collect(),
            inject_corruption: false,
        }
    }
}

impl RunConfig {
    pub fn from_cli(cli: &Cli) -> Result<Self> {
        let d = cli.momentum_denominator;
        if d < 1 {
            return Err(Error::Config(format!("momentum denominator must be positive, got {d}")));
        }
        let auto = Field::for_denominator(d);
        let m = cli.cyclotomic_order.unwrap_or(auto.m);
        if m == 0 || m % auto.m != 0 {
            return Err(Error::Config(format!("cyclotomic order {m} is not a multiple of {}", auto.m)));
        }
        let mut suites = Vec::new();
        for s in &cli.suite {
            let s = s.trim();
            if s == "all" {
                suites.extend(SUITES.iter().map(|s| s.to_string()));
            } else if s.is_empty() {
                continue;
            } else if SUITES.contains(&s) {
                suites.push(s.to_string());
            } else {
                return Err(Error::UnknownSuite(s.to_string()));
            }
        }
        Ok(RunConfig {
            momentum_denominator: d,
            grade: cli.grade,
            branch_p: cli.branch_p.clone(),
            branch_r: cli.branch_r.clone(),
            seed: cli.seed,
            field: Field { n: auto.n, m },
            suites,
            inject_corruption: cli.inject_corruption,
        })
    }

    pub fn to_json(&self) -> Value {
        json!({
            "momentum_denominator": self.momentum_denominator,
            "grade": self.grade,
            "branch_p": self.branch_p,
            "branch_r": self.branch_r,
            "seed": self.seed,
            "N": self.field.n,
            "M": self.field.m,
            "suites": self.suites,
        })
    }

    fn d(&self) -> i64 {
        self.momentum_denominator
    }

    /// `k/d` as a momentum.
    fn momentum(&self, k: i64) -> Q {
        Q::new(k, self.d())
    }

    /// Sector pairs `(λ, μ)` used for intertwining maps: `(1,1)`, `(1,-1)`, `(2,1)` in units of `1/d`.
    fn sector_pairs(&self) -> Vec<(Q, Q)> {
        vec![(self.momentum(1), self.momentum(1)), (self.momentum(1), self.momentum(-1)), (self.momentum(2), self.momentum(1))]
    }

    fn spec(&self, l: Q, m: Q) -> Result<IntertwinerSpec> {
        IntertwinerSpec::new(l, m, self.field)
    }

    fn first_p(&self) -> i64 {
        self.branch_p.first().copied().unwrap_or(0)
    }
}

/// One verification case.
#[derive(Clone, Debug)]
pub struct VerificationReport {
    pub suite: String,
    pub case: String,
    pub anchor: String,
    pub window: Value,
    pub verdict: Verdict,
    pub detail: String,
    pub witness: Option<Value>,
    /// Sub-results and measured data supporting the verdict.
    pub evidence: Option<Value>,
    /// Excluded from serialized output.
    pub wall_time: Duration,
}

impl VerificationReport {
    pub fn to_json(&self) -> Value {
        json!({
            "suite": self.suite,
            "case": self.case,
            "anchor": self.anchor,
            "window": self.window,
            "verdict": self.verdict.as_str(),
            "detail": self.detail,
            "witness": self.witness,
            "evidence": self.evidence,
        })
    }

    pub fn to_text(&self) -> String {
        format!("[{}] {}/{}: {}", self.verdict.as_str(), self.suite, self.case, self.detail)
    }
}

struct Recorder<'a> {
    suite: &'a str,
    reports: Vec<VerificationReport>,
    started: Instant,
}

impl<'a> Recorder<'a> {
    fn new(suite: &'a str) -> Self {
        Recorder { suite, reports: Vec::new(), started: Instant::now() }
    }

    fn push(&mut self, case: impl Into<String>, window: Value, o: Outcome, evidence: Option<Value>) {
        self.reports.push(VerificationReport {
            suite: self.suite.to_string(),
            case: case.into(),
            anchor: anchor(self.suite).to_string(),
            window,
            verdict: o.verdict,
            detail: o.detail,
            witness: o.witness,
            evidence,
            wall_time: self.started.elapsed(),
        });
        self.started = Instant::now();
    }

    /// Records a negative control: PASS when `o` is a FAIL carrying a witness.
    fn push_expected_failure(&mut self, case: impl Into<String>, window: Value, o: Outcome) {
        let observed = o.to_json();
        let verdict = if o.verdict == Verdict::Fail && o.witness.is_some() {
            Outcome::pass(format!("rejected as expected: {}", o.detail))
        } else {
            Outcome::fail(format!("expected a FAIL with witness, observed {}: {}", o.verdict, o.detail), observed.clone())
        };
        self.push(case, window, verdict, Some(json!({"observed": observed})));
    }
}

fn first_non_pass(outcomes: impl IntoIterator<Item = Outcome>, summary: String) -> Outcome {
    let mut worst = Outcome::pass(summary);
    for o in outcomes {
        if o.verdict > worst.verdict {
            worst = o;
        }
    }
    worst
}

fn alpha() -> FockVector {
    FockVector::basis(Q::from_integer(0), &[1])
}

fn v_name(v: &FockVector) -> String {
    v.to_string()
}

/// Structured functionals `w3' ↦ ⟨w3', F_{𝒴,p}(w1⊗w2)⟩` for several sectors, dual vectors and branches.
pub fn structured_functionals(cfg: &RunConfig) -> Result<Vec<(String, DualFunctional)>> {
    let mut out = Vec::new();
    let (a, b) = (cfg.momentum(1), cfg.momentum(-1));
    let two = cfg.momentum(2);
    let cases: Vec<(Q, Q, Vec<u32>, Vec<u32>)> = vec![
        (a, a, vec![], vec![]),
        (a, a, vec![1], vec![]),
        (a, b, vec![], vec![]),
        (two, a, vec![], vec![]),
        (a, a, vec![], vec![2]),
    ];
    for p in [cfg.first_p(), cfg.branch_p.get(1).copied().unwrap_or(cfg.first_p() + 1)] {
        for (l, m, first, second) in &cases {
            let spec = cfg.spec(*l, *m)?;
            let target = l + m;
            let mut w3d = FockVector::basis(target, first);
            if !second.is_empty() {
                w3d = w3d.add(&FockVector::basis(target, second));
            }
            let label = format!("F'(λ={}, μ={}, p={p}, w3'={w3d})", q_string(*l), q_string(*m));
            let map: Rc<dyn PMap> = Rc::new(maps::F_P(&spec, p));
            out.push((label.clone(), DualFunctional::from_pmap(map, &w3d, label)));
        }
    }
    Ok(out)
}

/// Seeded random functionals on `F_{1/d} ⊗ F_{1/d}` supported in total grade `≤ grade`.
pub fn random_functionals(cfg: &RunConfig, count: u64, grade: u32, offset: u64) -> Vec<(String, DualFunctional)> {
    let a = cfg.momentum(1);
    (0..count)
        .map(|k| {
            let seed = cfg.seed.wrapping_mul(1_000_003).wrapping_add(offset + k);
            (format!("random(seed={seed})"), DualFunctional::random(a, a, cfg.field, grade, seed, 5))
        })
        .collect()
}

fn compat_config(cfg: &RunConfig) -> CompatConfig {
    let _ = cfg;
    CompatConfig::new(vec![alpha(), FockVector::omega()], 2, -4, 2)
}

fn relation_config(compat: &CompatConfig) -> RelationConfig {
    RelationConfig {
        pair_grade: 1,
        jacobi_lo: -2,
        jacobi_hi: 1,
        exp_lo: -3,
        exp_hi: 1,
        lowest: compat.probe_lo,
        nilpotency_cap: 12,
    }
}

fn suite_delta(cfg: &RunConfig, r: &mut Recorder) -> Result<()> {
    let window = json!({"x": [-8, 8], "x0": [-8, 8], "x1": [-8, 8], "x2": [-8, 8]});
    for (case, o) in crate::series::check_delta_identities(-8, 8, cfg.field.m)? {
        r.push(case, window.clone(), o, None);
    }
    Ok(())
}

fn suite_voa(cfg: &RunConfig, r: &mut Recorder) -> Result<()> {
    let g = cfg.grade.saturating_sub(1);
    let (lo, hi) = (-2, 1);
    let window = json!({"algebra_weight_max": g, "module": "F_1/2", "module_grade_max": g, "exponents": [lo, hi]});
    for (case, o) in fock::checks::check_vertex_algebra_axioms(g, Q::new(1, 2), g, lo, hi, cfg.field.m)? {
        r.push(case, window.clone(), o, None);
    }
    Ok(())
}

fn suite_conjugation(cfg: &RunConfig, r: &mut Recorder) -> Result<()> {
    let zi = Scalar::z(Q::from_integer(-1));
    let zetas = vec![zi.clone(), -zi, Scalar::from_int(2)];
    let (lo, hi) = (-3, 2);
    let window = json!({"algebra_weight_max": 3, "module_grade_max": 2, "exponents": [lo, hi], "zeta": ["z^-1", "-z^-1", "2"],
                        "modules": ["F_1/2", "F_0", "F_2"]});
    for (case, o) in fock::checks::check_conjugation_formulas(&zetas, 3, 2, lo, hi, cfg.field.m)? {
        r.push(case, window.clone(), o, None);
    }
    Ok(())
}

fn pair_list(l: Q, m: Q, total: u32) -> Vec<(FockVector, FockVector)> {
    dualact::evaluation_pairs(l, m, total)
}

fn suite_intertwining_p(cfg: &RunConfig, r: &mut Recorder) -> Result<()> {
    let win = maps::square_window(-2, 2);
    let window = json!({"x0": [-2, 2], "x1": [-2, 2], "v_weight_max": 3, "pairs_total_grade": 1, "output_grade_max": 2});
    let vs = algebra_basis(3);
    for (l, m) in cfg.sector_pairs() {
        let spec = cfg.spec(l, m)?;
        for &p in &cfg.branch_p {
            let f = maps::F_P(&spec, p);
            let mut outs = Vec::new();
            for v in &vs {
                for (w1, w2) in pair_list(l, m, 1) {
                    outs.push(maps::check_P_intertwining(&f, v, &w1, &w2, &win, 2)?);
                }
            }
            let n = outs.len();
            let o = first_non_pass(outs, format!("P(z)-intertwining identity on {n} cases"));
            r.push(format!("F_P(λ={}, μ={}, p={p})", q_string(l), q_string(m)), window.clone(), o, None);
        }
    }
    if cfg.inject_corruption {
        let (l, m) = cfg.sector_pairs()[0];
        let table = maps::F_P(&cfg.spec(l, m)?, cfg.first_p()).tabulate(2, 3)?;
        let bad = table.perturbed(&(vec![], vec![]), &[1], &Scalar::one());
        let e1 = FockVector::highest(l);
        let e2 = FockVector::highest(m);
        let o = maps::check_P_intertwining(&bad, &alpha(), &e1, &e2, &maps::square_window(-1, 1), 2)?;
        r.push("corrupted-table", json!({"x0": [-1, 1], "x1": [-1, 1], "output_grade_max": 2}), o, None);
    }
    Ok(())
}

fn suite_intertwining_q(cfg: &RunConfig, r: &mut Recorder) -> Result<()> {
    let win = maps::square_window(-2, 2);
    let window = json!({"x0": [-2, 2], "x1": [-2, 2], "v_weight_max": 2, "pairs_total_grade": 1, "dual_grade_max": 2});
    let (l, m) = cfg.sector_pairs()[0];
    let spec = cfg.spec(l, m)?;
    let vs = algebra_basis(2);
    for &rr in &cfg.branch_r {
        let op = maps::B_r(&spec, rr);
        for &p in &cfg.branch_p {
            let f = maps::F_Q(&op, p);
            let mut outs = Vec::new();
            for v in &vs {
                for (w1, w2) in pair_list(l, m, 1) {
                    outs.push(maps::check_Q_intertwining(&f, v, &w1, &w2, &win, 2)?);
                }
            }
            let n = outs.len();
            let o = first_non_pass(outs, format!("Q(z)-intertwining identity on {n} cases"));
            r.push(format!("F_Q(B_{rr}, p={p})"), window.clone(), o, None);
        }
    }
    Ok(())
}

fn suite_roundtrip(cfg: &RunConfig, r: &mut Recorder) -> Result<()> {
    let grade = cfg.grade.min(3);
    let window = json!({"grade": grade, "exponent_offsets": [-2, 3]});
    for (l, m) in cfg.sector_pairs() {
        for &p in &cfg.branch_p {
            let o = maps::round_trip_P(&cfg.spec(l, m)?, p, grade, -2, 3)?;
            r.push(format!("λ={}, μ={}, p={p}", q_string(l), q_string(m)), window.clone(), o, None);
        }
    }
    Ok(())
}

fn suite_vacuum_and_derivative(cfg: &RunConfig, r: &mut Recorder) -> Result<()> {
    let fs = random_functionals(cfg, 25, 3, 0);
    let (lo, hi) = (-5, 3);
    let window = json!({"functionals": 25, "pairs_total_grade": 2, "exponents": [lo, hi]});
    let mut outs = Vec::new();
    for (_, f) in &fs {
        outs.push(dualact::check_yprime_vacuum(f, 2, lo, hi)?);
    }
    r.push("identity", window.clone(), first_non_pass(outs, "Y'_P(1, x) = 1 on 25 random functionals".into()), None);
    for v in [alpha(), FockVector::omega()] {
        let mut outs = Vec::new();
        for (_, f) in &fs {
            outs.push(dualact::check_yprime_derivative(f, &v, 2, lo, hi)?);
        }
        let o = first_non_pass(outs, format!("L(-1)-derivative for v = {v} on 25 random functionals"));
        r.push(format!("derivative v={}", v_name(&v)), window.clone(), o, None);
    }
    Ok(())
}

fn suite_lemma(cfg: &RunConfig, r: &mut Recorder) -> Result<()> {
    let support = cfg.grade.saturating_sub(1);
    let fs = random_functionals(cfg, 25, support, 100);
    let win = maps::square_window(-3, 2);
    let window = json!({"functionals": 25, "functional_support_grade": support, "pairs_total_grade": support, "x0": [-3, 2], "x1": [-3, 2]});
    for v in [FockVector::vacuum(), alpha(), FockVector::omega()] {
        let mut outs = Vec::new();
        for (_, f) in &fs {
            outs.push(dualact::verify_conjugation_lemma(f, &v, support, &win)?);
        }
        let o = first_non_pass(outs, format!("conjugation lemma for v = {v} on 25 random functionals"));
        r.push(format!("v={}", v_name(&v)), window.clone(), o, None);
    }
    Ok(())
}

fn suite_equivalence(cfg: &RunConfig, r: &mut Recorder) -> Result<()> {
    let compat = compat_config(cfg);
    let window = compat.window_json();
    let mut fs: Vec<(String, DualFunctional, bool)> =
        structured_functionals(cfg)?.into_iter().map(|(n, f)| (n, f, true)).collect();
    fs.extend(random_functionals(cfg, 10, 3, 200).into_iter().map(|(n, f)| (n, f, false)));
    for (name, f, structured) in fs {
        let p = dualact::check_P_compat(&f, &compat)?;
        let q = dualact::check_Q_compat(&dualact::psi_star_inverse(&f), Zeta::Z_INV, &compat)?;
        let evidence = json!({"p_compatibility": p.to_json(), "q_compatibility_of_inverse_image": q.to_json()});
        let expected = if structured { Verdict::Pass } else { Verdict::Fail };
        let o = if p.verdict != q.verdict {
            Outcome::fail(
                format!("verdicts differ: P {} vs Q {}", p.verdict, q.verdict),
                json!({"p": p.to_json(), "q": q.to_json()}),
            )
        } else if p.verdict != expected {
            Outcome::fail(format!("both {} but {} expected", p.verdict, expected), json!({"p": p.to_json(), "q": q.to_json()}))
        } else if !structured && (p.witness.is_none() || q.witness.is_none()) {
            Outcome::fail("failures without witnesses", json!({"p": p.to_json(), "q": q.to_json()}))
        } else {
            Outcome::pass(format!("both conditions {}", p.verdict))
        };
        r.push(name, window.clone(), o, Some(evidence));
    }
    Ok(())
}

fn suite_jacobi(cfg: &RunConfig, r: &mut Recorder) -> Result<()> {
    let compat = compat_config(cfg);
    let rel = relation_config(&compat);
    let window = json!({"pairs_total_grade": rel.pair_grade, "modes": [rel.jacobi_lo, rel.jacobi_hi], "lowest": rel.lowest});
    let fs = structured_functionals(cfg)?;
    let pairs = [(FockVector::omega(), FockVector::omega()), (alpha(), FockVector::omega()), (alpha(), alpha())];
    for (u, v) in pairs {
        let mut outs = Vec::new();
        for (_, f) in &fs {
            outs.push(dualact::check_jacobi(f, &u, &v, &rel)?);
        }
        let o = first_non_pass(outs, format!("Jacobi identity for ({u}, {v}) on {} structured functionals", fs.len()));
        r.push(format!("u={}, v={}", v_name(&u), v_name(&v)), window.clone(), o, None);
    }
    Ok(())
}

fn suite_l_relations(cfg: &RunConfig, r: &mut Recorder) -> Result<()> {
    let compat = compat_config(cfg);
    let rel = relation_config(&compat);
    let window = json!({"pairs_total_grade": rel.pair_grade, "exponents": [rel.exp_lo, rel.exp_hi], "nilpotency_cap": rel.nilpotency_cap});
    let fs = structured_functionals(cfg)?;
    type Check = Box<dyn Fn(&DualFunctional) -> Result<Outcome>>;
    let rel2 = rel.clone();
    let checks: Vec<(&str, Check)> = vec![
        ("l1-bridge", Box::new(move |f| dualact::check_l1_bridge(f, &rel2))),
        ("l0-bridge", { let rel = rel.clone(); Box::new(move |f| dualact::check_l0_bridge(f, &rel)) }),
        ("l-bracket", { let rel = rel.clone(); Box::new(move |f| dualact::check_l_bracket(f, &rel)) }),
        ("conjugated-vertex-operator", {
            let rel = rel.clone();
            Box::new(move |f| {
                let outs = [alpha(), FockVector::omega()]
                    .iter()
                    .map(|v| dualact::check_conjugated_vertex_operator(f, v, &rel))
                    .collect::<Result<Vec<_>>>()?;
                Ok(first_non_pass(outs, "conjugated vertex operator".into()))
            })
        }),
        ("exponential-conjugation", {
            let rel = rel.clone();
            Box::new(move |f| {
                let outs = [alpha(), FockVector::omega()]
                    .iter()
                    .map(|v| dualact::check_exponential_conjugation(f, v, &rel))
                    .collect::<Result<Vec<_>>>()?;
                Ok(first_non_pass(outs, "exponential conjugation".into()))
            })
        }),
    ];
    for (name, check) in checks {
        let mut outs = Vec::new();
        for (_, f) in &fs {
            outs.push(check(f)?);
        }
        let o = first_non_pass(outs, format!("{name} on {} structured functionals", fs.len()));
        r.push(name, window.clone(), o, None);
    }
    Ok(())
}

fn suite_membership(cfg: &RunConfig, r: &mut Recorder) -> Result<()> {
    let depth = cfg.grade.saturating_sub(1);
    let pair_grade = depth;
    let compat = CompatConfig::new(vec![alpha(), FockVector::omega()], 1, -3, 2);
    let window = json!({"compatibility": compat.window_json(), "orbit_pairs_total_grade": pair_grade, "orbit_depth": depth, "orbit_v_weight": 2});
    for (l, m) in cfg.sector_pairs() {
        let spec = cfg.spec(l, m)?;
        for &p in &cfg.branch_p {
            let label = format!("F'((e^{})', p={p}) on F_{} ⊗ F_{}", q_string(l + m), q_string(l), q_string(m));
            let f = DualFunctional::from_pmap(Rc::new(maps::F_P(&spec, p)), &FockVector::highest(l + m), label.clone());
            let (total, parts, orbit) = membership_with(&f, &compat, pair_grade, depth)?;
            let mut evidence = json!({"checks": parts.iter().map(|(n, o)| json!({"name": n, "outcome": o.to_json()})).collect::<Vec<_>>()});
            let mut o = total;
            if let Some(orbit) = &orbit {
                evidence["orbit"] = orbit.to_json();
                let lowest = (l + m) * (l + m) / 2;
                let mut expected = Vec::new();
                let mut observed = Vec::new();
                for g in 0..=depth {
                    expected.push(partition_count(g));
                    observed.push(orbit.dimensions.get(&(lowest + Q::from_integer(g as i64))).copied().unwrap_or(0));
                }
                let below = orbit.dimensions.keys().filter(|w| **w < lowest).count();
                evidence["expected_dimensions"] = json!(expected);
                evidence["observed_dimensions"] = json!(observed);
                if observed != expected || below != 0 {
                    o = Outcome::fail(
                        format!("orbit dimensions {observed:?} differ from graded dimensions {expected:?}"),
                        json!({"expected": expected, "observed": observed, "weights_below_lowest": below}),
                    );
                }
            }
            r.push(label, window.clone(), o, Some(evidence));
        }
    }
    let (l, m) = cfg.sector_pairs()[0];
    let zero = DualFunctional::zero(l, m, cfg.field);
    let (o, _, _) = membership_with(&zero, &compat, pair_grade, depth)?;
    r.push("zero functional", window.clone(), o, None);
    let (_, f) = random_functionals(cfg, 1, 3, 300).remove(0);
    let (o, _, _) = membership_with(&f, &compat, pair_grade, depth)?;
    r.push_expected_failure("random functional", window, o);
    Ok(())
}

fn membership_with(
    f: &DualFunctional,
    compat: &CompatConfig,
    orbit_pairs: u32,
    depth: u32,
) -> Result<(Outcome, Vec<(String, Outcome)>, Option<dualact::OrbitReport>)> {
    dualact::membership(f, compat, orbit_pairs, 2, depth)
}

/// Runs one named suite.
pub fn run_suite(name: &str, cfg: &RunConfig) -> Result<Vec<VerificationReport>> {
    let Some(&suite) = SUITES.iter().find(|s| **s == name) else {
        return Err(Error::UnknownSuite(name.to_string()));
    };
    let mut r = Recorder::new(suite);
    let res = match suite {
        "delta-calculus" => suite_delta(cfg, &mut r),
        "voa-axioms" => suite_voa(cfg, &mut r),
        "conjugation-formulas" => suite_conjugation(cfg, &mut r),
        "intertwining-P" => suite_intertwining_p(cfg, &mut r),
        "intertwining-Q" => suite_intertwining_q(cfg, &mut r),
        "prop-12-2-roundtrip" => suite_roundtrip(cfg, &mut r),
        "prop-13-3" => suite_vacuum_and_derivative(cfg, &mut r),
        "lemma-13-8" => suite_lemma(cfg, &mut r),
        "compat-equivalence" => suite_equivalence(cfg, &mut r),
        "jacobi-13-29" => suite_jacobi(cfg, &mut r),
        "L-relations" => suite_l_relations(cfg, &mut r),
        _ => suite_membership(cfg, &mut r),
    };
    match res {
        Ok(()) => Ok(r.reports),
        Err(e) => {
            // A failed computation is recorded against the suite rather than aborting the run.
            let o = Outcome::from_error(e.clone()).unwrap_or_else(|_| Outcome {
                verdict: Verdict::IllDefined,
                detail: format!("computation aborted: {e}"),
                witness: None,
            });
            r.push("error", Value::Null, o, None);
            Ok(r.reports)
        }
    }
}

/// Runs every configured suite, one thread per suite; reports keep suite order.
pub fn run_all(cfg: &RunConfig) -> Result<Vec<VerificationReport>> {
    let results: Vec<Result<Vec<VerificationReport>>> = std::thread::scope(|s| {
        let handles: Vec<_> = cfg.suites.iter().map(|name| s.spawn(move || run_suite(name, cfg))).collect();
        handles
            .into_iter()
            .map(|h| h.join().unwrap_or_else(|_| Err(Error::Config("suite thread panicked".into()))))
            .collect()
    });
    let mut out = Vec::new();
    for r in results {
        out.extend(r?);
    }
    Ok(out)
}

/// Counts per verdict, plus the warning flag set by WINDOW-LIMITED results.
pub fn summary(reports: &[VerificationReport]) -> Value {
    let count = |v: Verdict| reports.iter().filter(|r| r.verdict == v).count();
    json!({
        "total": reports.len(),
        "pass": count(Verdict::Pass),
        "window_limited": count(Verdict::WindowLimited),
        "fail": count(Verdict::Fail),
        "ill_defined": count(Verdict::IllDefined),
        "warning": count(Verdict::WindowLimited) > 0,
    })
}

/// Exit status: nonzero iff some report is FAIL or ILL-DEFINED.
pub fn exit_code(reports: &[VerificationReport]) -> i32 {
    if reports.iter().any(|r| r.verdict >= Verdict::Fail) {
        1
    } else {
        0
    }
}

/// Renders reports canonically; output is byte-identical for identical configurations.
pub fn render(reports: &[VerificationReport], cfg: &RunConfig, format: Format) -> String {
    match format {
        Format::Json => {
            let doc = json!({
                "schema": "vtensor-report/1",
                "config": cfg.to_json(),
                "summary": summary(reports),
                "reports": reports.iter().map(VerificationReport::to_json).collect::<Vec<_>>(),
            });
            let mut s = serde_json::to_string_pretty(&doc).expect("reports serialize");
            s.push('\n');
            s
        }
        Format::Text => {
            let mut s = String::new();
            for r in reports {
                s.push_str(&r.to_text());
                s.push('\n');
            }
            let sm = summary(reports);
            s.push_str(&format!(
                "total {} | pass {} | window-limited {} | fail {} | ill-defined {}\n",
                sm["total"], sm["pass"], sm["window_limited"], sm["fail"], sm["ill_defined"]
            ));
            s
        }
    }
}

/// Writes the rendered reports to `path`, or standard output.
pub fn emit(text: &str, path: Option<&std::path::Path>) -> Result<()> {
    match path {
        Some(p) => std::fs::write(p, text).map_err(|e| Error::Io(format!("{}: {e}", p.display()))),
        None => {
            use std::io::Write;
            std::io::stdout().write_all(text.as_bytes()).map_err(|e| Error::Io(e.to_string()))
        }
    }
}

/// Entry point shared by the binary: parse, run, emit, and return the exit status.
pub fn main_with(cli: Cli) -> i32 {
    let cfg = match RunConfig::from_cli(&cli) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("vtensor: {e}");
            return 2;
        }
    };
    let reports = match run_all(&cfg) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("vtensor: {e}");
            return 2;
        }
    };
    if let Err(e) = emit(&render(&reports, &cfg, cli.format), cli.out.as_deref()) {
        eprintln!("vtensor: {e}");
        return 2;
    }
    let sm = summary(&reports);
    if sm["warning"] == json!(true) {
        eprintln!("vtensor: warning: {} window-limited result(s)", sm["window_limited"]);
    }
    for r in &reports {
        if r.verdict >= Verdict::Fail {
            eprintln!("vtensor: {}", r.to_text());
        }
    }
    exit_code(&reports)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cli(args: &[&str]) -> Cli {
        Cli::parse_from(std::iter::once("vtensor").chain(args.iter().copied()))
    }

    #[test]
    fn defaults() {
        let c = RunConfig::from_cli(&cli(&[])).unwrap();
        assert_eq!(c, RunConfig::default());
        assert_eq!((c.field.n, c.field.m), (4, 16));
    }

    #[test]
    fn config_validation() {
        assert!(matches!(RunConfig::from_cli(&cli(&["--suite", "nope"])), Err(Error::UnknownSuite(_))));
        assert!(matches!(RunConfig::from_cli(&cli(&["--cyclotomic-order", "24"])), Err(Error::Config(_))));
        let c = RunConfig::from_cli(&cli(&["--cyclotomic-order", "32", "--branch-r", "-1", "--suite", "delta-calculus,prop-13-3"])).unwrap();
        assert_eq!(c.field.m, 32);
        assert_eq!(c.branch_r, vec![-1]);
        assert_eq!(c.suites, vec!["delta-calculus", "prop-13-3"]);
    }

    #[test]
    fn empty_selection_gives_no_reports() {
        let c = RunConfig::from_cli(&cli(&["--suite", ""])).unwrap();
        assert!(c.suites.is_empty());
        let reports = run_all(&c).unwrap();
        assert!(reports.is_empty());
        assert_eq!(exit_code(&reports), 0);
    }

    #[test]
    fn delta_suite_passes_and_renders() {
        let c = RunConfig { suites: vec!["delta-calculus".into()], ..RunConfig::default() };
        let reports = run_all(&c).unwrap();
        assert_eq!(reports.len(), 3);
        assert!(reports.iter().all(|r| r.verdict == Verdict::Pass));
        let text = render(&reports, &c, Format::Text);
        assert!(text.starts_with("[PASS] delta-calculus/substitution"));
        assert_eq!(render(&reports, &c, Format::Json), render(&run_all(&c).unwrap(), &c, Format::Json));
    }

    #[test]
    fn corruption_gives_nonzero_exit() {
        let c = RunConfig { suites: vec!["intertwining-P".into()], inject_corruption: true, ..RunConfig::default() };
        let reports = run_all(&c).unwrap();
        let bad: Vec<_> = reports.iter().filter(|r| r.verdict == Verdict::Fail).collect();
        assert_eq!(bad.len(), 1);
        assert_eq!(bad[0].case, "corrupted-table");
        assert!(bad[0].witness.is_some());
        assert_eq!(exit_code(&reports), 1);
    }

    #[test]
    fn window_limited_only_exits_zero() {
        let r = VerificationReport {
            suite: "hboxtr-membership".into(),
            case: "x".into(),
            anchor: String::new(),
            window: Value::Null,
            verdict: Verdict::WindowLimited,
            detail: String::new(),
            witness: None,
            evidence: None,
            wall_time: Duration::ZERO,
        };
        assert_eq!(exit_code(&[r.clone()]), 0);
        assert_eq!(summary(&[r])["warning"], json!(true));
    }
}
