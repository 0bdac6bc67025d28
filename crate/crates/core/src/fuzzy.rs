//! Two-input Mamdani inference with height defuzzification.
//!
//! Membership functions are piecewise-linear curves over a bounded domain.
//! Rule matching uses the min t-norm, rule merging the max s-norm, and the
//! crisp output is the grade-weighted mean of the consequent centroids.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FuzzyError {
    #[error("membership function has zero area over its domain")]
    ZeroArea,
    #[error("invalid membership function: {0}")]
    InvalidMembership(String),
    #[error("rule references unknown term `{term}` of variable `{variable}`")]
    UnresolvedTerm { variable: String, term: String },
    #[error("invalid rule base: {0}")]
    InvalidRuleBase(String),
    #[error("invalid membership document: {0}")]
    Document(String),
}

/// A closed interval `[lo, hi]` in variable units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Domain {
    pub lo: f64,
    pub hi: f64,
}

impl Domain {
    pub const fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi }
    }

    pub fn clamp(&self, x: f64) -> f64 {
        x.clamp(self.lo, self.hi)
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }
}

/// Piecewise-linear membership curve.
///
/// Breakpoint abscissae are non-decreasing. Two breakpoints may share an
/// abscissa to express a vertical edge (a rectangular trapezoid side); at
/// such a point the curve takes the larger of the two grades. Left of the
/// first and right of the last breakpoint the curve is flat.
#[derive(Debug, Clone, PartialEq)]
pub struct PiecewiseLinear {
    points: Vec<(f64, f64)>,
    domain: Domain,
}

impl PiecewiseLinear {
    pub fn new(points: Vec<(f64, f64)>, domain: Domain) -> Result<Self, FuzzyError> {
        let invalid = |msg: String| Err(FuzzyError::InvalidMembership(msg));
        if !(domain.lo.is_finite() && domain.hi.is_finite() && domain.lo < domain.hi) {
            return invalid(format!("bad domain [{}, {}]", domain.lo, domain.hi));
        }
        if points.is_empty() {
            return invalid("no breakpoints".into());
        }
        for &(x, g) in &points {
            if !x.is_finite() || x < domain.lo || x > domain.hi {
                return invalid(format!(
                    "breakpoint x={x} outside [{}, {}]",
                    domain.lo, domain.hi
                ));
            }
            if !(0.0..=1.0).contains(&g) {
                return invalid(format!("grade {g} outside [0, 1]"));
            }
        }
        for w in points.windows(2) {
            if w[1].0 < w[0].0 {
                return invalid("breakpoints not sorted by x".into());
            }
        }
        for w in points.windows(3) {
            if w[0].0 == w[2].0 {
                return invalid(format!("more than two breakpoints at x={}", w[0].0));
            }
        }
        Ok(Self { points, domain })
    }

    pub fn points(&self) -> &[(f64, f64)] {
        &self.points
    }

    pub fn domain(&self) -> Domain {
        self.domain
    }

    /// Membership grade at `x`, with `x` clamped to the domain first.
    pub fn grade(&self, x: f64) -> f64 {
        let x = self.domain.clamp(x);
        let pts = &self.points;
        let (first, last) = (pts[0], pts[pts.len() - 1]);
        if x < first.0 {
            return first.1;
        }
        if x > last.0 {
            return last.1;
        }
        let mut at_point: Option<f64> = None;
        for &(px, g) in pts {
            if px == x {
                at_point = Some(at_point.map_or(g, |m: f64| m.max(g)));
            }
        }
        if let Some(g) = at_point {
            return g;
        }
        for w in pts.windows(2) {
            let ((x0, g0), (x1, g1)) = (w[0], w[1]);
            if x0 < x && x < x1 {
                return g0 + (g1 - g0) * (x - x0) / (x1 - x0);
            }
        }
        unreachable!("x within breakpoint span must fall on a point or inside a segment")
    }

    /// Segments covering the whole domain, flat extensions included.
    fn segments(&self) -> impl Iterator<Item = ((f64, f64), (f64, f64))> + '_ {
        let pts = &self.points;
        let (first, last) = (pts[0], pts[pts.len() - 1]);
        let head = ((self.domain.lo, first.1), first);
        let tail = (last, (self.domain.hi, last.1));
        std::iter::once(head)
            .chain(pts.windows(2).map(|w| (w[0], w[1])))
            .chain(std::iter::once(tail))
    }

    /// Exact integral of the curve over the domain.
    pub fn area(&self) -> f64 {
        self.segments()
            .map(|((x0, g0), (x1, g1))| 0.5 * (g0 + g1) * (x1 - x0))
            .sum()
    }

    /// Centroid `∫x·μ(x)dx / ∫μ(x)dx` over the domain, integrated segment by
    /// segment in closed form.
    pub fn centroid(&self) -> Result<f64, FuzzyError> {
        let (mut area, mut moment) = (0.0, 0.0);
        for ((x0, g0), (x1, g1)) in self.segments() {
            let w = x1 - x0;
            if w <= 0.0 {
                continue;
            }
            area += 0.5 * (g0 + g1) * w;
            moment += w / 6.0 * (x0 * (2.0 * g0 + g1) + x1 * (g0 + 2.0 * g1));
        }
        if area <= 0.0 {
            return Err(FuzzyError::ZeroArea);
        }
        Ok(moment / area)
    }
}

/// Isosceles trapezoid `⟨U, D, C⟩`: upper side length `U`, lower side
/// length `U + D`, parallel sides centred at `C`. `U = 0` is a triangle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Trapezoid {
    #[serde(rename = "U")]
    pub upper: f64,
    #[serde(rename = "D")]
    pub spread: f64,
    #[serde(rename = "C")]
    pub center: f64,
}

impl Trapezoid {
    pub const fn new(upper: f64, spread: f64, center: f64) -> Self {
        Self {
            upper,
            spread,
            center,
        }
    }

    pub fn lower(&self) -> f64 {
        self.upper + self.spread
    }

    /// Closed-form grade, not clipped to any domain.
    pub fn grade(&self, x: f64) -> f64 {
        let half_upper = 0.5 * self.upper;
        let half_lower = 0.5 * self.lower();
        let d = (x - self.center).abs();
        if d <= half_upper {
            1.0
        } else if d >= half_lower {
            0.0
        } else {
            (half_lower - d) / (0.5 * self.spread)
        }
    }

    /// The trapezoid restricted to `domain` as a piecewise-linear curve.
    pub fn to_piecewise(&self, domain: Domain) -> Result<PiecewiseLinear, FuzzyError> {
        if !(self.upper >= 0.0 && self.spread >= 0.0 && self.center.is_finite()) {
            return Err(FuzzyError::InvalidMembership(format!(
                "trapezoid needs U >= 0, D >= 0 and finite C, got {self:?}"
            )));
        }
        let (c, hu, hl) = (self.center, 0.5 * self.upper, 0.5 * self.lower());
        let corners = [(c - hl, 0.0), (c - hu, 1.0), (c + hu, 1.0), (c + hl, 0.0)];
        let mut points = vec![(domain.lo, self.grade(domain.lo))];
        points.extend(
            corners
                .iter()
                .copied()
                .filter(|&(x, _)| domain.lo < x && x < domain.hi),
        );
        points.push((domain.hi, self.grade(domain.hi)));
        points.dedup();
        PiecewiseLinear::new(points, domain)
    }
}

/// How a term was specified; retained so documents round-trip in their
/// original form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TermShape {
    Breakpoints { breakpoints: Vec<[f64; 2]> },
    Trapezoid(Trapezoid),
}

/// A named linguistic term with its curve and precomputed centroid.
#[derive(Debug, Clone, PartialEq)]
pub struct Term {
    name: String,
    shape: TermShape,
    mf: PiecewiseLinear,
    centroid: f64,
}

impl Term {
    pub fn from_shape(name: &str, shape: TermShape, domain: Domain) -> Result<Self, FuzzyError> {
        let (mf, centroid) = match &shape {
            TermShape::Breakpoints { breakpoints } => {
                let mf = PiecewiseLinear::new(
                    breakpoints.iter().map(|p| (p[0], p[1])).collect(),
                    domain,
                )?;
                let centroid = mf.centroid()?;
                (mf, centroid)
            }
            TermShape::Trapezoid(t) => {
                let mf = t.to_piecewise(domain)?;
                // A trapezoid can lie entirely outside the domain; fall back
                // to its clamped centre so inference stays total.
                let centroid = mf.centroid().unwrap_or_else(|_| domain.clamp(t.center));
                (mf, centroid)
            }
        };
        Ok(Self {
            name: name.to_string(),
            shape,
            mf,
            centroid,
        })
    }

    pub fn breakpoints(
        name: &str,
        points: &[(f64, f64)],
        domain: Domain,
    ) -> Result<Self, FuzzyError> {
        let breakpoints = points.iter().map(|&(x, g)| [x, g]).collect();
        Self::from_shape(name, TermShape::Breakpoints { breakpoints }, domain)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn shape(&self) -> &TermShape {
        &self.shape
    }

    pub fn mf(&self) -> &PiecewiseLinear {
        &self.mf
    }

    pub fn centroid(&self) -> f64 {
        self.centroid
    }

    pub fn grade(&self, x: f64) -> f64 {
        self.mf.grade(x)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FuzzyVariable {
    name: String,
    domain: Domain,
    terms: Vec<Term>,
}

impl FuzzyVariable {
    pub fn new(name: &str, domain: Domain, terms: Vec<Term>) -> Result<Self, FuzzyError> {
        if terms.is_empty() {
            return Err(FuzzyError::InvalidMembership(format!(
                "variable {name} has no terms"
            )));
        }
        for t in &terms {
            if t.mf.domain() != domain {
                return Err(FuzzyError::InvalidMembership(format!(
                    "term {} of {name} has a different domain",
                    t.name
                )));
            }
        }
        Ok(Self {
            name: name.to_string(),
            domain,
            terms,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn domain(&self) -> Domain {
        self.domain
    }

    pub fn terms(&self) -> &[Term] {
        &self.terms
    }

    pub fn term(&self, name: &str) -> Option<&Term> {
        self.terms.iter().find(|t| t.name == name)
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.terms.iter().position(|t| t.name == name)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Rule {
    first: usize,
    second: usize,
    consequent: usize,
}

/// Rules resolved to term indices of two input variables and one output.
#[derive(Debug, Clone, PartialEq)]
pub struct RuleBase {
    rules: Vec<Rule>,
    shape: (usize, usize, usize),
}

impl RuleBase {
    /// Resolves `(antecedent1, antecedent2, consequent)` name triples. Every
    /// antecedent pair must appear exactly once.
    pub fn new(
        table: &[(&str, &str, &str)],
        in1: &FuzzyVariable,
        in2: &FuzzyVariable,
        out: &FuzzyVariable,
    ) -> Result<Self, FuzzyError> {
        let resolve = |var: &FuzzyVariable, term: &str| {
            var.index_of(term)
                .ok_or_else(|| FuzzyError::UnresolvedTerm {
                    variable: var.name.clone(),
                    term: term.to_string(),
                })
        };
        let mut rules = Vec::with_capacity(table.len());
        for &(a, b, c) in table {
            rules.push(Rule {
                first: resolve(in1, a)?,
                second: resolve(in2, b)?,
                consequent: resolve(out, c)?,
            });
        }
        let (n1, n2) = (in1.terms.len(), in2.terms.len());
        let mut seen = vec![false; n1 * n2];
        for r in &rules {
            let slot = &mut seen[r.first * n2 + r.second];
            if *slot {
                return Err(FuzzyError::InvalidRuleBase(format!(
                    "duplicate antecedent ({}, {})",
                    in1.terms[r.first].name, in2.terms[r.second].name
                )));
            }
            *slot = true;
        }
        if seen.iter().any(|s| !s) {
            return Err(FuzzyError::InvalidRuleBase(format!(
                "expected one rule per antecedent pair ({} rules), got {}",
                n1 * n2,
                rules.len()
            )));
        }
        Ok(Self {
            rules,
            shape: (n1, n2, out.terms.len()),
        })
    }

    pub fn len(&self) -> usize {
        self.rules.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rules.is_empty()
    }

    /// Min-intersection matching, max-union merging, height defuzzification.
    pub fn infer(
        &self,
        in1: &FuzzyVariable,
        x1: f64,
        in2: &FuzzyVariable,
        x2: f64,
        out: &FuzzyVariable,
    ) -> InferenceResult {
        debug_assert_eq!(
            self.shape,
            (in1.terms.len(), in2.terms.len(), out.terms.len()),
            "rule base used with variables it was not resolved against"
        );
        let g1: Vec<f64> = in1.terms.iter().map(|t| t.grade(x1)).collect();
        let g2: Vec<f64> = in2.terms.iter().map(|t| t.grade(x2)).collect();
        let mut grades = vec![0.0f64; out.terms.len()];
        for r in &self.rules {
            let strength = g1[r.first].min(g2[r.second]);
            let o = &mut grades[r.consequent];
            *o = (*o).max(strength);
        }
        let centroids: Vec<f64> = out.terms.iter().map(Term::centroid).collect();
        let crisp = defuzzify(&grades, &centroids);
        InferenceResult { grades, crisp }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InferenceResult {
    /// Output term grades, in the output variable's term order.
    pub grades: Vec<f64>,
    pub crisp: f64,
}

impl InferenceResult {
    pub fn grade(&self, out: &FuzzyVariable, term: &str) -> Option<f64> {
        out.index_of(term).map(|i| self.grades[i])
    }
}

/// Height defuzzification: `Σ o_i c_i / Σ o_i`. With every grade zero the
/// unweighted mean of the centroids is returned.
pub fn defuzzify(grades: &[f64], centroids: &[f64]) -> f64 {
    assert_eq!(grades.len(), centroids.len());
    assert!(!grades.is_empty());
    let total: f64 = grades.iter().sum();
    if total <= 0.0 {
        return centroids.iter().sum::<f64>() / centroids.len() as f64;
    }
    grades
        .iter()
        .zip(centroids)
        .map(|(o, c)| o * c)
        .sum::<f64>()
        / total
}

pub const QL: &str = "QL";
pub const WT: &str = "WT";
pub const ET: &str = "ET";
pub const UD: &str = "UD";

pub const QL_DOMAIN: Domain = Domain::new(0.0, 20.0);
pub const WT_DOMAIN: Domain = Domain::new(0.0, 100.0);
pub const ET_DOMAIN: Domain = Domain::new(0.0, 15.0);
pub const UD_DOMAIN: Domain = Domain::new(0.0, 1.0);

/// Variables and their terms in canonical order.
pub const VARIABLE_LAYOUT: [(&str, Domain, &[&str]); 4] = [
    (QL, QL_DOMAIN, &["short", "medium", "long"]),
    (WT, WT_DOMAIN, &["short", "medium", "long"]),
    (ET, ET_DOMAIN, &["short", "long"]),
    (UD, UD_DOMAIN, &["low", "medium", "high"]),
];

/// Rules inferring extension time from (queue length, waiting time).
pub const ET_RULES: [(&str, &str, &str); 9] = [
    ("short", "short", "short"),
    ("short", "medium", "short"),
    ("short", "long", "short"),
    ("medium", "short", "short"),
    ("medium", "medium", "long"),
    ("medium", "long", "long"),
    ("long", "short", "long"),
    ("long", "medium", "long"),
    ("long", "long", "long"),
];

/// Rules inferring urgency degree from (queue length, waiting time).
pub const UD_RULES: [(&str, &str, &str); 9] = [
    ("short", "short", "low"),
    ("short", "medium", "low"),
    ("short", "long", "medium"),
    ("medium", "short", "low"),
    ("medium", "medium", "medium"),
    ("medium", "long", "high"),
    ("long", "short", "medium"),
    ("long", "medium", "high"),
    ("long", "long", "high"),
];

/// `{variable: {term: shape}}` as stored on disk.
pub type MembershipDocument = BTreeMap<String, BTreeMap<String, TermShape>>;

/// The eleven membership functions of the controller: QL, WT, ET, UD.
#[derive(Debug, Clone, PartialEq)]
pub struct MembershipSet {
    pub ql: FuzzyVariable,
    pub wt: FuzzyVariable,
    pub et: FuzzyVariable,
    pub ud: FuzzyVariable,
}

impl MembershipSet {
    /// The hand-crafted set: QL per its closed-form definition, ET as two
    /// linear shoulders meeting at 7.5, WT and UD as QL's shapes rescaled.
    pub fn hand_crafted() -> Self {
        let ql = [
            ("short", vec![(0.0, 1.0), (8.0, 0.0), (20.0, 0.0)]),
            (
                "medium",
                vec![
                    (0.0, 0.0),
                    (4.0, 0.0),
                    (10.0, 1.0),
                    (16.0, 0.0),
                    (20.0, 0.0),
                ],
            ),
            ("long", vec![(0.0, 0.0), (12.0, 0.0), (20.0, 1.0)]),
        ];
        let wt = [
            ("short", vec![(0.0, 1.0), (40.0, 0.0), (100.0, 0.0)]),
            (
                "medium",
                vec![
                    (0.0, 0.0),
                    (20.0, 0.0),
                    (50.0, 1.0),
                    (80.0, 0.0),
                    (100.0, 0.0),
                ],
            ),
            ("long", vec![(0.0, 0.0), (60.0, 0.0), (100.0, 1.0)]),
        ];
        let et = [
            ("short", vec![(0.0, 1.0), (7.5, 0.0), (15.0, 0.0)]),
            ("long", vec![(0.0, 0.0), (7.5, 0.0), (15.0, 1.0)]),
        ];
        let ud = [
            ("low", vec![(0.0, 1.0), (0.4, 0.0), (1.0, 0.0)]),
            (
                "medium",
                vec![(0.0, 0.0), (0.2, 0.0), (0.5, 1.0), (0.8, 0.0), (1.0, 0.0)],
            ),
            ("high", vec![(0.0, 0.0), (0.6, 0.0), (1.0, 1.0)]),
        ];
        fn var(name: &str, domain: Domain, terms: &[(&str, Vec<(f64, f64)>)]) -> FuzzyVariable {
            let terms = terms
                .iter()
                .map(|(n, pts)| Term::breakpoints(n, pts, domain).expect("hand-crafted term"))
                .collect();
            FuzzyVariable::new(name, domain, terms).expect("hand-crafted variable")
        }
        Self {
            ql: var(QL, QL_DOMAIN, &ql),
            wt: var(WT, WT_DOMAIN, &wt),
            et: var(ET, ET_DOMAIN, &et),
            ud: var(UD, UD_DOMAIN, &ud),
        }
    }

    pub fn variables(&self) -> [&FuzzyVariable; 4] {
        [&self.ql, &self.wt, &self.et, &self.ud]
    }

    /// Builds a set from eleven trapezoids in canonical order.
    pub fn from_trapezoids(traps: &[Trapezoid; 11]) -> Result<Self, FuzzyError> {
        let mut it = traps.iter();
        let mut vars = VARIABLE_LAYOUT.iter().map(|&(name, domain, names)| {
            let terms = names
                .iter()
                .map(|n| Term::from_shape(n, TermShape::Trapezoid(*it.next().unwrap()), domain))
                .collect::<Result<Vec<_>, _>>()?;
            FuzzyVariable::new(name, domain, terms)
        });
        Ok(Self {
            ql: vars.next().unwrap()?,
            wt: vars.next().unwrap()?,
            et: vars.next().unwrap()?,
            ud: vars.next().unwrap()?,
        })
    }

    pub fn from_document(doc: &MembershipDocument) -> Result<Self, FuzzyError> {
        let expected: usize = VARIABLE_LAYOUT.iter().map(|v| v.2.len()).sum();
        let found: usize = doc.values().map(BTreeMap::len).sum();
        if doc.len() != VARIABLE_LAYOUT.len() || found != expected {
            return Err(FuzzyError::Document(format!(
                "expected variables QL, WT, ET, UD with {expected} terms in total, found {} variables with {found} terms",
                doc.len()
            )));
        }
        let mut vars = VARIABLE_LAYOUT.iter().map(|&(name, domain, names)| {
            let terms_doc = doc
                .get(name)
                .ok_or_else(|| FuzzyError::Document(format!("missing variable {name}")))?;
            let terms = names
                .iter()
                .map(|n| {
                    let shape = terms_doc
                        .get(*n)
                        .ok_or_else(|| FuzzyError::Document(format!("missing term {name}.{n}")))?;
                    Term::from_shape(n, shape.clone(), domain)
                })
                .collect::<Result<Vec<_>, _>>()?;
            FuzzyVariable::new(name, domain, terms)
        });
        Ok(Self {
            ql: vars.next().unwrap()?,
            wt: vars.next().unwrap()?,
            et: vars.next().unwrap()?,
            ud: vars.next().unwrap()?,
        })
    }

    pub fn to_document(&self) -> MembershipDocument {
        self.variables()
            .iter()
            .map(|v| {
                let terms = v
                    .terms
                    .iter()
                    .map(|t| (t.name.clone(), t.shape.clone()))
                    .collect();
                (v.name.clone(), terms)
            })
            .collect()
    }

    pub fn from_json(text: &str) -> Result<Self, FuzzyError> {
        let doc: MembershipDocument =
            serde_json::from_str(text).map_err(|e| FuzzyError::Document(e.to_string()))?;
        Self::from_document(&doc)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_document()).expect("membership document serializes")
    }

    /// The trapezoid parameters of every term, if all eleven are trapezoids.
    pub fn trapezoids(&self) -> Option<[Trapezoid; 11]> {
        let mut out = [Trapezoid::new(0.0, 0.0, 0.0); 11];
        let terms = self.variables().into_iter().flat_map(|v| v.terms.iter());
        for (slot, term) in out.iter_mut().zip(terms) {
            match term.shape {
                TermShape::Trapezoid(t) => *slot = t,
                TermShape::Breakpoints { .. } => return None,
            }
        }
        Some(out)
    }
}

impl Default for MembershipSet {
    fn default() -> Self {
        Self::hand_crafted()
    }
}

/// Both rule bases bound to one membership set.
#[derive(Debug, Clone, PartialEq)]
pub struct FuzzyEngine {
    set: MembershipSet,
    et_rules: RuleBase,
    ud_rules: RuleBase,
}

impl FuzzyEngine {
    pub fn new(set: MembershipSet) -> Result<Self, FuzzyError> {
        let et_rules = RuleBase::new(&ET_RULES, &set.ql, &set.wt, &set.et)?;
        let ud_rules = RuleBase::new(&UD_RULES, &set.ql, &set.wt, &set.ud)?;
        Ok(Self {
            set,
            et_rules,
            ud_rules,
        })
    }

    pub fn set(&self) -> &MembershipSet {
        &self.set
    }

    pub fn extension(&self, queue_len: f64, wait: f64) -> InferenceResult {
        self.et_rules
            .infer(&self.set.ql, queue_len, &self.set.wt, wait, &self.set.et)
    }

    pub fn urgency(&self, queue_len: f64, wait: f64) -> InferenceResult {
        self.ud_rules
            .infer(&self.set.ql, queue_len, &self.set.wt, wait, &self.set.ud)
    }
}

impl Default for FuzzyEngine {
    fn default() -> Self {
        Self::new(MembershipSet::hand_crafted()).expect("hand-crafted rule bases resolve")
    }
}
