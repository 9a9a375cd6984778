//! Linearizability verdicts, the ten-case holonomy table and Ueda types.

use std::fmt;

use num_complex::Complex64;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::arithmetic::{
    as_rational, certified_cf, classify_rotation, is_torsion, ArithmeticKind, ArithmeticPolicy, RotationNumber,
};
use crate::error::{HolonomyError, Result};
use crate::germ::{zero_tolerance, Germ};
use crate::map::MapExpr;
use crate::orbits::{find_small_cycles, CycleSearch, Polynomial};
use crate::scalar::{Field, Scalar};

pub const REPORT_SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VerdictPolicy {
    pub arithmetic: ArithmeticPolicy,
    /// Small-cycle witness: periods are continued-fraction denominators up to this bound.
    pub witness_max_period: u64,
    pub witness_radius: f64,
    pub witness_bits: u32,
}

impl Default for VerdictPolicy {
    fn default() -> Self {
        VerdictPolicy {
            arithmetic: ArithmeticPolicy::default(),
            witness_max_period: 64,
            witness_radius: 0.1,
            witness_bits: 512,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Evidence {
    KoenigsModulus { modulus: f64 },
    FiniteOrder { order: u64, heuristic: bool },
    LinearByConstruction,
    ParabolicNonIdentity { order: u64, first_nonlinear_order: usize, heuristic: bool },
    ResonanceObstruction { order: usize },
    CoefficientGrowth { rate: f64, truncation: usize },
    Diophantine { depth: usize },
    Brjuno { partial_sum: f64, depth: usize },
    Cremer { min_value: String, at_n: String },
    SmallCycle { period: u64, radius: f64, residual: f64 },
    Inconclusive { note: String },
    UserAsserted { note: String },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VerdictKind {
    Linearizable,
    NonLinearizable,
    Unknown,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LinearizabilityVerdict {
    pub kind: VerdictKind,
    /// Formal linearizer `h` with `h∘f = λh` through the truncation.
    pub witness: Option<Germ>,
    pub witness_defect: Option<f64>,
    pub evidence: Vec<Evidence>,
    pub multiplier: Complex64,
    pub multiplier_modulus: f64,
    /// Root-of-unity order of the multiplier; `None` when non-torsion or non-unitary.
    pub torsion_order: Option<u64>,
    pub unitary: bool,
}

#[derive(Serialize, Deserialize, Clone, Debug, PartialEq)]
pub struct VerdictJson {
    pub kind: VerdictKind,
    pub multiplier: [f64; 2],
    pub multiplier_modulus: f64,
    pub unitary: bool,
    pub torsion_order: Option<u64>,
    pub witness_defect: Option<f64>,
    pub evidence: Vec<Evidence>,
}

impl LinearizabilityVerdict {
    pub fn to_json(&self) -> VerdictJson {
        VerdictJson {
            kind: self.kind,
            multiplier: [self.multiplier.re, self.multiplier.im],
            multiplier_modulus: self.multiplier_modulus,
            unitary: self.unitary,
            torsion_order: self.torsion_order,
            witness_defect: self.witness_defect,
            evidence: self.evidence.clone(),
        }
    }

    /// Replaces the computed kind with a user assertion, keeping the arithmetic data.
    pub fn asserted(mut self, kind: VerdictKind, note: &str) -> Self {
        self.kind = kind;
        self.evidence.push(Evidence::UserAsserted { note: note.to_string() });
        self
    }

    fn torsion(&self) -> bool {
        self.torsion_order.is_some()
    }
}

fn multiplier_is_unitary(lambda: &Scalar, tol: f64) -> bool {
    match lambda {
        Scalar::Exact(g) => g.norm_sqr() == 1,
        _ => (lambda.abs_f64() - 1.0).abs() <= tol.max(f64::EPSILON * 4.0),
    }
}

/// Rotation number of a unitary multiplier: the tag if present, else recovered from `λ`.
fn rotation_of(f: &Germ) -> RotationNumber {
    if let Some(t) = f.multiplier_tag() {
        return t.clone();
    }
    if let Scalar::Exact(g) = f.multiplier() {
        use crate::scalar::GaussianRational as G;
        for (u, p, q) in [(G::from_ints(1, 0), 0, 1), (G::from_ints(0, 1), 1, 4), (G::from_ints(-1, 0), 1, 2), (G::from_ints(0, -1), 3, 4)] {
            if *g == u {
                return RotationNumber::rational(p, q).expect("valid");
            }
        }
    }
    let bits = f.field().bits().max(crate::scalar::DEFAULT_FLOAT_BITS);
    RotationNumber::from_multiplier(&f.multiplier().to_complex(bits))
}

/// Torsion order and whether it rests on a numerical test.
fn torsion_of(theta: &RotationNumber, exact_field: bool, policy: &ArithmeticPolicy) -> (Option<u64>, bool) {
    if let Some(r) = as_rational(theta) {
        return (r.denom().to_u64(), false);
    }
    if exact_field && theta.is_exact() {
        return (None, false);
    }
    let check = is_torsion(theta, policy.max_q, policy.torsion_tol);
    (check.order(), !theta.is_exact())
}

/// Decision tree: Koenigs for `|λ| != 1`; finite order versus parabolic for
/// torsion; evidence-graded for non-torsion unitary multipliers.
pub fn linearizability_verdict(f: &Germ, expr: Option<&MapExpr>, policy: &VerdictPolicy) -> LinearizabilityVerdict {
    let tol = zero_tolerance(f.field());
    let lambda = f.multiplier().to_c64();
    let modulus = f.multiplier().abs_f64();
    let mut v = LinearizabilityVerdict {
        kind: VerdictKind::Unknown,
        witness: None,
        witness_defect: None,
        evidence: Vec::new(),
        multiplier: lambda,
        multiplier_modulus: modulus,
        torsion_order: None,
        unitary: multiplier_is_unitary(f.multiplier(), tol),
    };

    if !v.unitary {
        v.evidence.push(Evidence::KoenigsModulus { modulus });
        match f.formal_linearize() {
            Ok(lin) => {
                v.kind = VerdictKind::Linearizable;
                v.witness_defect = f.linearization_defect(&lin.h).ok();
                v.witness = Some(lin.h);
            }
            Err(HolonomyError::ResonanceObstruction { order }) => {
                // only reachable when |λ| rounds to a near-unit value
                v.evidence.push(Evidence::ResonanceObstruction { order });
            }
            Err(e) => v.evidence.push(Evidence::Inconclusive { note: e.to_string() }),
        }
        return v;
    }

    let theta = rotation_of(f);
    let (order, heuristic) = torsion_of(&theta, f.field().is_exact(), &policy.arithmetic);
    if let Some(q) = order {
        v.torsion_order = Some(q);
        let power = match i64::try_from(q).map_err(|_| HolonomyError::Config("torsion order too large".into())).and_then(|q| f.iterate(q)) {
            Ok(p) => p,
            Err(e) => {
                v.evidence.push(Evidence::Inconclusive { note: e.to_string() });
                return v;
            }
        };
        match power.first_nonlinear_order(tol) {
            None if power.is_identity(tol) => {
                v.kind = VerdictKind::Linearizable;
                v.evidence.push(Evidence::FiniteOrder { order: q, heuristic });
            }
            first => {
                v.kind = VerdictKind::NonLinearizable;
                v.evidence.push(Evidence::ParabolicNonIdentity {
                    order: q,
                    first_nonlinear_order: first.unwrap_or(1),
                    heuristic,
                });
            }
        }
        return v;
    }

    let linear = expr.map(MapExpr::linear_by_construction).unwrap_or(false) || f.first_nonlinear_order(tol).is_none();
    if linear {
        v.kind = VerdictKind::Linearizable;
        v.evidence.push(Evidence::LinearByConstruction);
        return v;
    }

    let arith = classify_rotation(&theta, &policy.arithmetic);
    if let Some(partial_sum) = arith.brjuno_partial_sum.filter(|b| b.is_finite()) {
        v.evidence.push(Evidence::Brjuno {
            partial_sum,
            depth: arith.depth,
        });
    }
    match f.formal_linearize() {
        Ok(lin) => v.evidence.push(Evidence::CoefficientGrowth {
            rate: lin.growth_rate(),
            truncation: f.truncation(),
        }),
        Err(HolonomyError::ResonanceObstruction { order }) => v.evidence.push(Evidence::ResonanceObstruction { order }),
        Err(e) => v.evidence.push(Evidence::Inconclusive { note: e.to_string() }),
    }
    match &arith.kind {
        ArithmeticKind::CremerEvidence { min_value, at_n } => {
            v.evidence.push(Evidence::Cremer {
                min_value: min_value.clone(),
                at_n: at_n.clone(),
            });
            if let Some(witness) = small_cycle_witness(&theta, expr, policy) {
                v.kind = VerdictKind::NonLinearizable;
                v.evidence.push(witness);
            }
        }
        ArithmeticKind::DiophantineEvidence => v.evidence.push(Evidence::Diophantine { depth: arith.depth }),
        ArithmeticKind::BrjunoEvidence { .. } | ArithmeticKind::Torsion { .. } => {}
        ArithmeticKind::Inconclusive => v.evidence.push(Evidence::Inconclusive {
            note: arith.trail.last().cloned().unwrap_or_default(),
        }),
    }
    v
}

/// A certified cycle of period `q_n` inside the witness radius, for polynomial maps.
fn small_cycle_witness(theta: &RotationNumber, expr: Option<&MapExpr>, policy: &VerdictPolicy) -> Option<Evidence> {
    let coeffs = expr?.polynomial_coeffs()?;
    let p = Polynomial::new(coeffs, policy.witness_bits).ok()?;
    let cf = certified_cf(theta, policy.arithmetic.cf_depth);
    let mut periods: Vec<u64> = cf
        .denominators()
        .filter_map(|q| q.exact().and_then(|q| q.to_u64()))
        .filter(|q| *q <= policy.witness_max_period)
        .collect();
    periods.dedup();
    let found = find_small_cycles(&p, &periods, policy.witness_radius, &CycleSearch::default());
    found.into_iter().find_map(|(period, cycles)| {
        cycles.first().map(|c| Evidence::SmallCycle {
            period,
            radius: c.radius,
            residual: c.residual,
        })
    })
}

#[derive(Clone, Debug)]
pub struct HolonomyPair {
    pub f: Germ,
    pub g: Germ,
    pub f_expr: Option<MapExpr>,
    pub g_expr: Option<MapExpr>,
    pub commutator_defect: f64,
    pub tolerance: f64,
    pub generator_labels: [String; 2],
}

impl HolonomyPair {
    /// Refuses pairs whose commutator exceeds the field tolerance.
    pub fn new(f: Germ, g: Germ) -> Result<Self> {
        if f.field() != g.field() || f.truncation() != g.truncation() {
            return Err(HolonomyError::Precondition("f and g must share field and truncation".into()));
        }
        let tolerance = zero_tolerance(f.field());
        let commutator_defect = f.commutator_defect(&g)?;
        if commutator_defect > tolerance {
            return Err(HolonomyError::NonCommuting {
                defect: commutator_defect,
                tolerance,
            });
        }
        Ok(HolonomyPair {
            f,
            g,
            f_expr: None,
            g_expr: None,
            commutator_defect,
            tolerance,
            generator_labels: ["gamma1".into(), "gamma2".into()],
        })
    }

    pub fn from_exprs(f: &MapExpr, g: &MapExpr, truncation: usize, field: Field) -> Result<Self> {
        let mut pair = Self::new(f.to_germ(truncation, field)?, g.to_germ(truncation, field)?)?;
        pair.f_expr = Some(f.clone());
        pair.g_expr = Some(g.clone());
        Ok(pair)
    }

    pub fn verdicts(&self, policy: &VerdictPolicy) -> (LinearizabilityVerdict, LinearizabilityVerdict) {
        (
            linearizability_verdict(&self.f, self.f_expr.as_ref(), policy),
            linearizability_verdict(&self.g, self.g_expr.as_ref(), policy),
        )
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum CaseTag {
    I,
    II,
    III,
    IV,
    V,
    VI,
    VII,
    VIII,
    IX,
    X,
}

impl fmt::Display for CaseTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaseLabel {
    pub tag: CaseTag,
    pub swapped: bool,
}

/// Column of the table: torsion/non-torsion times linearizable/non-linearizable.
fn table_class(v: &LinearizabilityVerdict) -> usize {
    let lin = v.kind == VerdictKind::Linearizable;
    match (v.torsion(), lin) {
        (true, true) => 0,
        (true, false) => 1,
        (false, true) => 2,
        (false, false) => 3,
    }
}

const TABLE: [[Option<CaseTag>; 4]; 4] = {
    use CaseTag::*;
    [
        [Some(I), Some(II), Some(III), Some(IV)],
        [None, Some(V), Some(VI), Some(VII)],
        [None, None, Some(VIII), Some(IX)],
        [None, None, None, Some(X)],
    ]
};

fn class_name(c: usize) -> &'static str {
    ["torsion linearizable", "torsion non-linearizable", "non-torsion linearizable", "non-torsion non-linearizable"][c]
}

pub fn classify_case(pair: &HolonomyPair, verdicts: (&LinearizabilityVerdict, &LinearizabilityVerdict)) -> Result<CaseLabel> {
    check_commuting(pair)?;
    let (vf, vg) = verdicts;
    for (name, v) in [("f", vf), ("g", vg)] {
        if !v.unitary {
            return Err(HolonomyError::OutOfTableScope(format!(
                "multiplier of {name} has modulus {}",
                v.multiplier_modulus
            )));
        }
        if v.kind == VerdictKind::Unknown {
            return Err(HolonomyError::UnclassifiedCase(format!("linearizability of {name} is undetermined")));
        }
    }
    let (a, b) = (table_class(vf), table_class(vg));
    let swapped = a > b;
    let (a, b) = if swapped { (b, a) } else { (a, b) };
    Ok(CaseLabel {
        tag: TABLE[a][b].expect("upper triangle"),
        swapped,
    })
}

fn check_commuting(pair: &HolonomyPair) -> Result<()> {
    if pair.commutator_defect > pair.tolerance {
        return Err(HolonomyError::NonCommuting {
            defect: pair.commutator_defect,
            tolerance: pair.tolerance,
        });
    }
    Ok(())
}

/// `n − 1` for the first nonlinear order `n` of a tangent-to-identity germ.
pub fn case2_type_index(g: &Germ) -> Result<u64> {
    let tol = zero_tolerance(g.field());
    let one = Scalar::one(g.field());
    let exact_one = match g.multiplier() {
        Scalar::Exact(_) => *g.multiplier() == one,
        m => m.sub(&one).is_negligible(tol),
    };
    if !exact_one {
        return Err(HolonomyError::Precondition("case II index needs multiplier 1".into()));
    }
    match g.first_nonlinear_order(tol) {
        Some(n) => Ok(n as u64 - 1),
        None => Err(HolonomyError::NotCaseII),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TypeIndex {
    Known(u64),
    Unknown,
}

impl Serialize for TypeIndex {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            TypeIndex::Known(n) => s.serialize_u64(*n),
            TypeIndex::Unknown => s.serialize_str("unknown"),
        }
    }
}

impl<'de> Deserialize<'de> for TypeIndex {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            N(u64),
            S(String),
        }
        match Raw::deserialize(d)? {
            Raw::N(n) => Ok(TypeIndex::Known(n)),
            Raw::S(s) if s == "unknown" => Ok(TypeIndex::Unknown),
            Raw::S(s) => Err(serde::de::Error::custom(format!("bad type index `{s}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum UedaType {
    Alpha { index: TypeIndex },
    Beta,
    Gamma,
    AlphaOrBeta,
    Inconsistent,
    Undetermined,
}

impl UedaType {
    pub fn is_determinate(&self) -> bool {
        !matches!(self, UedaType::Undetermined | UedaType::Inconsistent)
    }
}

impl fmt::Display for UedaType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            UedaType::Alpha { index: TypeIndex::Known(n) } => write!(f, "alpha({n})"),
            UedaType::Alpha { index: TypeIndex::Unknown } => f.write_str("alpha(?)"),
            UedaType::Beta => f.write_str("beta"),
            UedaType::Gamma => f.write_str("gamma"),
            UedaType::AlphaOrBeta => f.write_str("alpha or beta"),
            UedaType::Inconsistent => f.write_str("inconsistent"),
            UedaType::Undetermined => f.write_str("undetermined"),
        }
    }
}

/// Type index of a torsion non-linearizable germ after passing to `g^q`.
fn normalized_index(g: &Germ, order: Option<u64>, provenance: &mut Vec<String>) -> TypeIndex {
    let q = order.unwrap_or(1);
    let power = if q == 1 { Ok(g.clone()) } else { g.iterate(q as i64) };
    if q > 1 {
        provenance.push(format!("multiplier normalized to 1 by passing to the {q}-th iterate (finite cover)"));
    }
    match power.and_then(|p| case2_type_index(&p)) {
        Ok(n) => {
            provenance.push(format!("case II rule: first nonlinear order n = {}, type index n - 1 = {n}", n + 1));
            TypeIndex::Known(n)
        }
        Err(e) => {
            provenance.push(format!("case II index not computable: {e}"));
            TypeIndex::Unknown
        }
    }
}

pub fn ueda_type(case: &CaseLabel, pair: &HolonomyPair, verdicts: (&LinearizabilityVerdict, &LinearizabilityVerdict)) -> (UedaType, Vec<String>) {
    let mut provenance = Vec::new();
    let t = match case.tag {
        CaseTag::I | CaseTag::III | CaseTag::VIII => UedaType::Beta,
        CaseTag::IV | CaseTag::X => UedaType::Gamma,
        CaseTag::V => UedaType::AlphaOrBeta,
        CaseTag::VI | CaseTag::VII | CaseTag::IX => UedaType::Inconsistent,
        CaseTag::II => {
            // the torsion non-linearizable member sits in the second slot after the swap
            let (germ, v) = if case.swapped { (&pair.f, verdicts.0) } else { (&pair.g, verdicts.1) };
            UedaType::Alpha {
                index: normalized_index(germ, v.torsion_order, &mut provenance),
            }
        }
    };
    provenance.insert(0, format!("ten-case table: case {} gives type {t}", case.tag));
    (t, provenance)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub rule: String,
    pub orientation: String,
}

/// Verdict combinations that cannot occur for commuting germs, in both orientations.
pub fn consistency_check(pair: &HolonomyPair, verdicts: (&LinearizabilityVerdict, &LinearizabilityVerdict)) -> Vec<Violation> {
    let _ = pair;
    let mut out = Vec::new();
    let lin = |v: &LinearizabilityVerdict| v.kind == VerdictKind::Linearizable;
    let nonlin = |v: &LinearizabilityVerdict| v.kind == VerdictKind::NonLinearizable;
    let non_torsion = |v: &LinearizabilityVerdict| v.unitary && !v.torsion();
    let torsion = |v: &LinearizabilityVerdict| v.unitary && v.torsion();
    for (a, b, orientation) in [(verdicts.0, verdicts.1, "(f, g)"), (verdicts.1, verdicts.0, "(g, f)")] {
        // `b` plays the linearizing role, `a` the commuting partner
        if lin(b) && non_torsion(b) && nonlin(a) {
            out.push(Violation {
                rule: "a germ commuting with a linearizable germ of non-torsion multiplier is linearizable by the same map".into(),
                orientation: orientation.into(),
            });
        }
        if nonlin(b) && non_torsion(b) && non_torsion(a) && lin(a) {
            out.push(Violation {
                rule: "a linearizable germ of non-torsion multiplier forces every commuting germ to be linearizable".into(),
                orientation: orientation.into(),
            });
        }
        if nonlin(b) && non_torsion(b) && torsion(a) && nonlin(a) {
            out.push(Violation {
                rule: "a germ of torsion multiplier commuting with a non-linearizable germ of non-torsion multiplier has finite order".into(),
                orientation: orientation.into(),
            });
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportVerdicts {
    pub f: VerdictJson,
    pub g: VerdictJson,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportEvidence {
    pub commutator_defect: f64,
    pub commutator_tolerance: f64,
    pub truncation: usize,
    pub field: String,
    pub violations: Vec<Violation>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassificationReport {
    pub schema_version: u32,
    pub case: Option<CaseTag>,
    pub swapped: bool,
    pub ueda_type: UedaType,
    pub verdicts: ReportVerdicts,
    pub evidence: ReportEvidence,
    pub provenance: Vec<String>,
}

impl ClassificationReport {
    /// CLI exit code: 0 determinate, 3 undetermined, 4 inconsistent.
    pub fn exit_code(&self) -> i32 {
        match self.ueda_type {
            UedaType::Inconsistent => 4,
            UedaType::Undetermined => 3,
            _ if !self.evidence.violations.is_empty() => 4,
            _ => 0,
        }
    }
}

/// Type when one generator has identity holonomy, decided from the other alone.
fn identity_trichotomy(g: &Germ, v: &LinearizabilityVerdict, provenance: &mut Vec<String>) -> UedaType {
    match v.kind {
        VerdictKind::Linearizable => {
            provenance.push("identity-holonomy trichotomy: g is linearizable, type beta".into());
            UedaType::Beta
        }
        VerdictKind::NonLinearizable if v.torsion() => {
            provenance.push("identity-holonomy trichotomy: g is rationally indifferent and not of finite order, type alpha".into());
            UedaType::Alpha {
                index: normalized_index(g, v.torsion_order, provenance),
            }
        }
        VerdictKind::NonLinearizable if v.unitary => {
            provenance.push("identity-holonomy trichotomy: g is irrationally indifferent and non-linearizable, type gamma".into());
            UedaType::Gamma
        }
        _ => {
            provenance.push("identity-holonomy trichotomy: linearizability of g undetermined".into());
            UedaType::Undetermined
        }
    }
}

/// Verdicts, table case, Ueda type and consistency in one report.
pub fn classify_pair(pair: &HolonomyPair, policy: &VerdictPolicy) -> Result<ClassificationReport> {
    check_commuting(pair)?;
    let (vf, vg) = pair.verdicts(policy);
    let violations = consistency_check(pair, (&vf, &vg));
    let mut provenance = Vec::new();
    let case = classify_case(pair, (&vf, &vg));
    let (case_tag, swapped, mut ueda) = match case {
        Ok(label) => {
            provenance.push(format!(
                "f is {}, g is {}",
                class_name(table_class(&vf)),
                class_name(table_class(&vg))
            ));
            if label.swapped {
                provenance.push("f and g exchanged to land in the tabulated cases".into());
            }
            let (t, p) = ueda_type(&label, pair, (&vf, &vg));
            provenance.extend(p);
            (Some(label.tag), label.swapped, t)
        }
        Err(e @ (HolonomyError::OutOfTableScope(_) | HolonomyError::UnclassifiedCase(_))) => {
            provenance.push(format!("no table case: {e}"));
            (None, false, UedaType::Undetermined)
        }
        Err(e) => return Err(e),
    };

    let tol = pair.tolerance;
    let identity = if pair.f.is_identity(tol) {
        Some((&pair.g, &vg, false))
    } else if pair.g.is_identity(tol) {
        Some((&pair.f, &vf, true))
    } else {
        None
    };
    if let Some((other, v, swap)) = identity {
        if swap {
            provenance.push("g is the identity; generators relabelled for the trichotomy".into());
        }
        let t = identity_trichotomy(other, v, &mut provenance);
        if ueda == UedaType::Undetermined || t != UedaType::Undetermined {
            ueda = t;
        }
    }
    if !violations.is_empty() {
        provenance.push(format!("{} consistency violation(s) for commuting germs", violations.len()));
        ueda = UedaType::Inconsistent;
    }

    let mut seen = std::collections::HashSet::new();
    provenance.retain(|p| seen.insert(p.clone()));

    Ok(ClassificationReport {
        schema_version: REPORT_SCHEMA_VERSION,
        case: case_tag,
        swapped,
        ueda_type: ueda,
        verdicts: ReportVerdicts {
            f: vf.to_json(),
            g: vg.to_json(),
        },
        evidence: ReportEvidence {
            commutator_defect: pair.commutator_defect,
            commutator_tolerance: pair.tolerance,
            truncation: pair.f.truncation(),
            field: pair.f.field().name(),
            violations,
        },
        provenance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const T: usize = 32;

    fn field() -> Field {
        Field::float(256).unwrap()
    }

    fn germ(s: &str) -> Germ {
        MapExpr::parse(s, 256).unwrap().to_germ(T, field()).unwrap()
    }

    fn verdict(s: &str) -> LinearizabilityVerdict {
        let e = MapExpr::parse(s, 256).unwrap();
        linearizability_verdict(&e.to_germ(T, field()).unwrap(), Some(&e), &VerdictPolicy::default())
    }

    #[test]
    fn koenigs_parabolic_and_siegel_verdicts() {
        let v = verdict("poly(2,1)");
        assert_eq!(v.kind, VerdictKind::Linearizable);
        assert!(v.witness_defect.unwrap() < 1e-60);

        let v = verdict("mobius(1,0,-1,1)");
        assert_eq!(v.kind, VerdictKind::NonLinearizable);
        assert!(matches!(v.evidence[0], Evidence::ParabolicNonIdentity { order: 1, first_nonlinear_order: 2, .. }));

        let v = verdict("poly(e(golden),1)");
        assert_eq!(v.kind, VerdictKind::Unknown);
        assert!(v.evidence.iter().any(|e| matches!(e, Evidence::Brjuno { .. })));
    }

    #[test]
    fn finite_order_rotation_is_linearizable() {
        let v = verdict("conj(rot(1/3),poly(1,1))");
        assert_eq!(v.torsion_order, Some(3));
        assert_eq!(v.kind, VerdictKind::Linearizable);
    }

    #[test]
    fn type_index_rule() {
        assert_eq!(case2_type_index(&germ("mobius(1,0,-1,1)")).unwrap(), 1);
        assert_eq!(case2_type_index(&germ("poly(1,0,1)")).unwrap(), 2);
        assert_eq!(case2_type_index(&germ("poly(1,0,0,0,0,0,5,1)")).unwrap(), 6);
        assert!(matches!(case2_type_index(&germ("id")), Err(HolonomyError::NotCaseII)));
        assert!(matches!(case2_type_index(&germ("poly(2,1)")), Err(HolonomyError::Precondition(_))));
    }

    #[test]
    fn swapping_the_pair_swaps_the_label() {
        let pair = |a: &str, b: &str| {
            HolonomyPair::from_exprs(&MapExpr::parse(a, 256).unwrap(), &MapExpr::parse(b, 256).unwrap(), T, field()).unwrap()
        };
        let p = pair("id", "mobius(1,0,-1,1)");
        let (vf, vg) = p.verdicts(&VerdictPolicy::default());
        let label = classify_case(&p, (&vf, &vg)).unwrap();
        assert_eq!(label, CaseLabel { tag: CaseTag::II, swapped: false });
        let q = pair("mobius(1,0,-1,1)", "id");
        let (vf, vg) = q.verdicts(&VerdictPolicy::default());
        assert_eq!(classify_case(&q, (&vf, &vg)).unwrap(), CaseLabel { tag: CaseTag::II, swapped: true });
        let (t, _) = ueda_type(&CaseLabel { tag: CaseTag::II, swapped: true }, &q, (&vf, &vg));
        assert_eq!(t, UedaType::Alpha { index: TypeIndex::Known(1) });
    }

    #[test]
    fn non_commuting_pair_is_refused() {
        let e = HolonomyPair::new(germ("poly(1,1)"), germ("poly(1,0,1)")).unwrap_err();
        assert!(matches!(e, HolonomyError::NonCommuting { .. }));
    }

    #[test]
    fn asserted_case_six_is_flagged() {
        let p = HolonomyPair::new(germ("id"), germ("rot(golden)")).unwrap();
        let (vf, vg) = p.verdicts(&VerdictPolicy::default());
        let vf = vf.asserted(VerdictKind::NonLinearizable, "test");
        assert_eq!(classify_case(&p, (&vf, &vg)).unwrap().tag, CaseTag::VI);
        assert_eq!(consistency_check(&p, (&vf, &vg)).len(), 1);
    }

    #[test]
    fn ueda_type_json_shape() {
        let a = UedaType::Alpha { index: TypeIndex::Known(1) };
        assert_eq!(serde_json::to_string(&a).unwrap(), r#"{"kind":"alpha","index":1}"#);
        assert_eq!(serde_json::to_string(&UedaType::Gamma).unwrap(), r#"{"kind":"gamma"}"#);
        let u: UedaType = serde_json::from_str(r#"{"kind":"alpha","index":"unknown"}"#).unwrap();
        assert_eq!(u, UedaType::Alpha { index: TypeIndex::Unknown });
    }
}
