//! The category of finite sets and relations.
//!
//! Carriers are sets of structured labels: `X ⊗ Y` is the set of pairs
//! `(x,y)` and the unit is the singleton `{*}`, so `X ⊗ I` and `X` are
//! different carriers related by an explicit unitor.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::de::{self, SeqAccess, Visitor};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::category::{Category, CategoryTag, CompactClosed, CompactStructure, DaggerMonoidal};
use crate::error::{Error, Result};

#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Label {
    Atom(String),
    Pair(Box<Label>, Box<Label>),
}

impl Label {
    pub fn pair(a: impl Into<Label>, b: impl Into<Label>) -> Label {
        Label::Pair(Box::new(a.into()), Box::new(b.into()))
    }

    pub fn as_pair(&self) -> Option<(&Label, &Label)> {
        match self {
            Label::Pair(a, b) => Some((a, b)),
            Label::Atom(_) => None,
        }
    }
}

impl From<&str> for Label {
    fn from(s: &str) -> Self {
        Label::Atom(s.to_owned())
    }
}

impl From<String> for Label {
    fn from(s: String) -> Self {
        Label::Atom(s)
    }
}

impl From<&Label> for Label {
    fn from(l: &Label) -> Self {
        l.clone()
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Label::Atom(s) => f.write_str(s),
            Label::Pair(a, b) => write!(f, "({a},{b})"),
        }
    }
}

impl fmt::Debug for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

// Atoms are JSON strings, pairs are two-element arrays.
impl Serialize for Label {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Label::Atom(s) => serializer.serialize_str(s),
            Label::Pair(a, b) => (a, b).serialize(serializer),
        }
    }
}

impl<'de> Deserialize<'de> for Label {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        struct LabelVisitor;

        impl<'de> Visitor<'de> for LabelVisitor {
            type Value = Label;

            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("a string or a two-element array of labels")
            }

            fn visit_str<E: de::Error>(self, v: &str) -> std::result::Result<Label, E> {
                Ok(Label::from(v))
            }

            fn visit_seq<A: SeqAccess<'de>>(
                self,
                mut seq: A,
            ) -> std::result::Result<Label, A::Error> {
                let a: Label = seq
                    .next_element()?
                    .ok_or_else(|| de::Error::invalid_length(0, &self))?;
                let b: Label = seq
                    .next_element()?
                    .ok_or_else(|| de::Error::invalid_length(1, &self))?;
                if seq.next_element::<Label>()?.is_some() {
                    return Err(de::Error::invalid_length(3, &self));
                }
                Ok(Label::pair(a, b))
            }
        }

        deserializer.deserialize_any(LabelVisitor)
    }
}

/// A finite set of labels.
#[derive(Clone, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Carrier(BTreeSet<Label>);

impl Carrier {
    pub fn new(labels: impl IntoIterator<Item = Label>) -> Self {
        Carrier(labels.into_iter().collect())
    }

    pub fn from_atoms(atoms: &[&str]) -> Self {
        Carrier::new(atoms.iter().map(|a| Label::from(*a)))
    }

    /// `{0, 1, …, n-1}` as atom labels.
    pub fn range(n: usize) -> Self {
        Carrier::new((0..n).map(|i| Label::Atom(i.to_string())))
    }

    pub fn unit() -> Self {
        Carrier::from_atoms(&["*"])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, l: &Label) -> bool {
        self.0.contains(l)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Label> + Clone + '_ {
        self.0.iter()
    }

    pub fn product(&self, other: &Carrier) -> Carrier {
        Carrier::new(
            self.iter()
                .flat_map(|a| other.iter().map(move |b| Label::pair(a, b))),
        )
    }
}

impl fmt::Debug for Carrier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.0.iter()).finish()
    }
}

impl fmt::Display for Carrier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

impl FromIterator<Label> for Carrier {
    fn from_iter<T: IntoIterator<Item = Label>>(iter: T) -> Self {
        Carrier::new(iter)
    }
}

/// A relation `R ⊆ source × target`.
#[derive(Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "RawRelation")]
pub struct Relation {
    source: Carrier,
    target: Carrier,
    pairs: BTreeSet<(Label, Label)>,
}

#[derive(Deserialize)]
struct RawRelation {
    source: Carrier,
    target: Carrier,
    pairs: Vec<(Label, Label)>,
}

impl TryFrom<RawRelation> for Relation {
    type Error = Error;

    fn try_from(raw: RawRelation) -> Result<Self> {
        Relation::new(raw.source, raw.target, raw.pairs)
    }
}

impl fmt::Debug for Relation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?} -> {:?} ", self.source, self.target)?;
        f.debug_set()
            .entries(self.pairs.iter().map(|(a, b)| format!("({a},{b})")))
            .finish()
    }
}

impl Relation {
    pub fn new(
        source: Carrier,
        target: Carrier,
        pairs: impl IntoIterator<Item = (Label, Label)>,
    ) -> Result<Self> {
        let pairs: BTreeSet<_> = pairs.into_iter().collect();
        if let Some((a, b)) = pairs
            .iter()
            .find(|(a, b)| !source.contains(a) || !target.contains(b))
        {
            return Err(Error::InvalidShape(format!(
                "pair ({a},{b}) outside {source} x {target}"
            )));
        }
        Ok(Relation {
            source,
            target,
            pairs,
        })
    }

    pub fn empty(source: Carrier, target: Carrier) -> Self {
        Relation {
            source,
            target,
            pairs: BTreeSet::new(),
        }
    }

    pub fn identity(x: &Carrier) -> Self {
        Relation {
            source: x.clone(),
            target: x.clone(),
            pairs: x.iter().map(|l| (l.clone(), l.clone())).collect(),
        }
    }

    /// The graph of a map given as a label-to-label function.
    pub fn graph(source: Carrier, target: Carrier, f: impl Fn(&Label) -> Label) -> Result<Self> {
        let pairs: Vec<_> = source.iter().map(|x| (x.clone(), f(x))).collect();
        Relation::new(source, target, pairs)
    }

    pub fn source(&self) -> &Carrier {
        &self.source
    }

    pub fn target(&self) -> &Carrier {
        &self.target
    }

    pub fn pairs(&self) -> impl Iterator<Item = (&Label, &Label)> + '_ {
        self.pairs.iter().map(|(a, b)| (a, b))
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn contains(&self, a: &Label, b: &Label) -> bool {
        self.pairs.contains(&(a.clone(), b.clone()))
    }

    pub fn image<'a>(&'a self, a: &'a Label) -> impl Iterator<Item = &'a Label> + 'a {
        self.pairs
            .iter()
            .filter(move |(x, _)| x == a)
            .map(|(_, y)| y)
    }

    pub fn preimage<'a>(&'a self, b: &'a Label) -> impl Iterator<Item = &'a Label> + 'a {
        self.pairs
            .iter()
            .filter(move |(_, y)| y == b)
            .map(|(x, _)| x)
    }

    /// `other ∘ self`
    pub fn then(&self, other: &Relation) -> Result<Relation> {
        if self.target != other.source {
            return Err(Error::Mismatch {
                target: self.target.to_string(),
                domain: other.source.to_string(),
            });
        }
        let mut by_source: BTreeMap<&Label, Vec<&Label>> = BTreeMap::new();
        for (y, z) in &other.pairs {
            by_source.entry(y).or_default().push(z);
        }
        let pairs = self
            .pairs
            .iter()
            .flat_map(|(x, y)| {
                by_source
                    .get(y)
                    .into_iter()
                    .flatten()
                    .map(move |z| (x.clone(), (*z).clone()))
            })
            .collect();
        Ok(Relation {
            source: self.source.clone(),
            target: other.target.clone(),
            pairs,
        })
    }

    pub fn converse(&self) -> Relation {
        Relation {
            source: self.target.clone(),
            target: self.source.clone(),
            pairs: self
                .pairs
                .iter()
                .map(|(a, b)| (b.clone(), a.clone()))
                .collect(),
        }
    }

    pub fn tensor(&self, other: &Relation) -> Relation {
        let pairs = self
            .pairs
            .iter()
            .flat_map(|(a, b)| {
                other
                    .pairs
                    .iter()
                    .map(move |(c, d)| (Label::pair(a, c), Label::pair(b, d)))
            })
            .collect();
        Relation {
            source: self.source.product(&other.source),
            target: self.target.product(&other.target),
            pairs,
        }
    }

    pub fn without(&self, a: &Label, b: &Label) -> Relation {
        let mut out = self.clone();
        out.pairs.remove(&(a.clone(), b.clone()));
        out
    }

    /// `∀x ∃!y. (x,y) ∈ R`
    pub fn is_functional(&self) -> bool {
        self.source.iter().all(|x| self.image(x).count() == 1)
    }

    /// `∀y ∃!x. (x,y) ∈ R`
    pub fn is_opposite_functional(&self) -> bool {
        self.target.iter().all(|y| self.preimage(y).count() == 1)
    }

    pub fn is_bijection(&self) -> bool {
        self.is_functional() && self.is_opposite_functional()
    }

    /// For a functional relation, the value at `x`.
    pub fn apply<'a>(&'a self, x: &'a Label) -> Option<&'a Label> {
        let mut it = self.image(x);
        let y = it.next()?;
        it.next().is_none().then_some(y)
    }

    pub fn symmetric_difference_len(&self, other: &Relation) -> usize {
        self.pairs.symmetric_difference(&other.pairs).count()
    }
}

/// Marker type for the category of finite relations.
#[derive(Clone, Copy, Debug, Default)]
pub struct Rel;

impl Category for Rel {
    type Obj = Carrier;
    type Mor = Relation;
    const TAG: CategoryTag = CategoryTag::Rel;
    const EXACT: bool = true;

    fn source(f: &Relation) -> Carrier {
        f.source.clone()
    }

    fn target(f: &Relation) -> Carrier {
        f.target.clone()
    }

    fn identity(x: &Carrier) -> Relation {
        Relation::identity(x)
    }

    fn compose(g: &Relation, f: &Relation) -> Result<Relation> {
        f.then(g)
    }

    fn zero(source: &Carrier, target: &Carrier) -> Relation {
        Relation::empty(source.clone(), target.clone())
    }

    fn deviation(f: &Relation, g: &Relation) -> f64 {
        if f.source != g.source || f.target != g.target {
            return f64::INFINITY;
        }
        f.symmetric_difference_len(g) as f64
    }

    fn is_iso(f: &Relation) -> bool {
        f.is_bijection()
    }

    fn describe(x: &Carrier) -> String {
        x.to_string()
    }
}

impl DaggerMonoidal for Rel {
    fn unit() -> Carrier {
        Carrier::unit()
    }

    fn tensor_obj(a: &Carrier, b: &Carrier) -> Carrier {
        a.product(b)
    }

    fn tensor(f: &Relation, g: &Relation) -> Relation {
        f.tensor(g)
    }

    fn dagger(f: &Relation) -> Relation {
        f.converse()
    }

    fn associator(a: &Carrier, b: &Carrier, c: &Carrier) -> Relation {
        let source = a.product(b).product(c);
        let target = a.product(&b.product(c));
        let pairs = source
            .iter()
            .map(|l| {
                let (ab, z) = l.as_pair().expect("product label");
                let (x, y) = ab.as_pair().expect("product label");
                (l.clone(), Label::pair(x, Label::pair(y, z)))
            })
            .collect::<Vec<_>>();
        Relation::new(source, target, pairs).expect("associator is well-typed")
    }

    fn left_unitor(a: &Carrier) -> Relation {
        let source = Carrier::unit().product(a);
        Relation::graph(source, a.clone(), |l| l.as_pair().expect("pair").1.clone())
            .expect("unitor is well-typed")
    }

    fn right_unitor(a: &Carrier) -> Relation {
        let source = a.product(&Carrier::unit());
        Relation::graph(source, a.clone(), |l| l.as_pair().expect("pair").0.clone())
            .expect("unitor is well-typed")
    }

    fn symmetry(a: &Carrier, b: &Carrier) -> Relation {
        Relation::graph(a.product(b), b.product(a), |l| {
            let (x, y) = l.as_pair().expect("pair");
            Label::pair(y, x)
        })
        .expect("symmetry is well-typed")
    }
}

impl CompactClosed for Rel {
    fn dual_obj(x: &Carrier) -> Carrier {
        x.clone()
    }

    fn compact_structure(x: &Carrier) -> CompactStructure<Rel> {
        rel_compact_structure(x)
    }
}

/// `X* = X`, `η = {(*,(x,x))}`, `ε = {((x,x),*)}`.
pub fn rel_compact_structure(x: &Carrier) -> CompactStructure<Rel> {
    let star = Label::from("*");
    let xx = x.product(x);
    let diag: Vec<_> = x.iter().map(|l| Label::pair(l, l)).collect();
    let eta = Relation::new(
        Carrier::unit(),
        xx.clone(),
        diag.iter().map(|d| (star.clone(), d.clone())),
    )
    .expect("eta is well-typed");
    let epsilon = Relation::new(
        xx,
        Carrier::unit(),
        diag.into_iter().map(|d| (d, star.clone())),
    )
    .expect("epsilon is well-typed");
    CompactStructure {
        object: x.clone(),
        dual: x.clone(),
        eta,
        epsilon,
    }
}

/// Oppositely functional relations form the E class.
pub fn rel_in_e(r: &Relation) -> bool {
    r.is_opposite_functional()
}

/// Functional relations form the M class.
pub fn rel_in_m(r: &Relation) -> bool {
    r.is_functional()
}

/// `R = m ∘ e` through the graph of `R`.
#[derive(Clone, Debug, PartialEq)]
pub struct RelFactorisation {
    pub e: Relation,
    pub m: Relation,
    pub mid: Carrier,
}

pub fn rel_factor(r: &Relation) -> RelFactorisation {
    let mid = Carrier::new(r.pairs().map(|(x, y)| Label::pair(x, y)));
    let e = Relation::new(
        r.source.clone(),
        mid.clone(),
        r.pairs().map(|(x, y)| (x.clone(), Label::pair(x, y))),
    )
    .expect("e is well-typed");
    let m = Relation::new(
        mid.clone(),
        r.target.clone(),
        r.pairs().map(|(x, y)| (Label::pair(x, y), y.clone())),
    )
    .expect("m is well-typed");
    RelFactorisation { e, m, mid }
}

/// A commuting square `v ∘ m ∘ e = m' ∘ e' ∘ u` with `e, e' ∈ E`, `m, m' ∈ M`.
///
/// ```text
///   X --e--> B --m--> Y
///   |u                |v
///   X' -e'-> B' -m'-> Y'
/// ```
#[derive(Clone, Debug)]
pub struct RelSquare {
    pub e: Relation,
    pub m: Relation,
    pub e_prime: Relation,
    pub m_prime: Relation,
    pub u: Relation,
    pub v: Relation,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FillCount {
    None,
    Unique,
    Multiple,
}

impl RelSquare {
    /// Both factorisations from the canonical graph factorisation.
    pub fn from_factorisations(r: &Relation, r_prime: &Relation, u: Relation, v: Relation) -> Self {
        let top = rel_factor(r);
        let bottom = rel_factor(r_prime);
        RelSquare {
            e: top.e,
            m: top.m,
            e_prime: bottom.e,
            m_prime: bottom.m,
            u,
            v,
        }
    }

    fn validate(&self) -> Result<()> {
        let typed = self.e.target == self.m.source
            && self.e_prime.target == self.m_prime.source
            && self.u.source == self.e.source
            && self.u.target == self.e_prime.source
            && self.v.source == self.m.target
            && self.v.target == self.m_prime.target;
        if !typed {
            return Err(Error::InvalidShape("square is ill-typed".into()));
        }
        if !(rel_in_e(&self.e) && rel_in_e(&self.e_prime)) {
            return Err(Error::InvalidShape(
                "e or e' is not oppositely functional".into(),
            ));
        }
        if !(rel_in_m(&self.m) && rel_in_m(&self.m_prime)) {
            return Err(Error::NotInM);
        }
        Ok(())
    }

    /// `(e' ∘ u, v ∘ m)`: the two triangle targets.
    fn triangle_targets(&self) -> Result<(Relation, Relation)> {
        Ok((self.u.then(&self.e_prime)?, self.m.then(&self.v)?))
    }

    pub fn commutes(&self) -> Result<bool> {
        self.validate()?;
        let lhs = self.e.then(&self.m)?.then(&self.v)?;
        let rhs = self.u.then(&self.e_prime)?.then(&self.m_prime)?;
        Ok(lhs == rhs)
    }

    /// Whether `w` makes both triangles commute.
    pub fn is_fill(&self, w: &Relation) -> Result<bool> {
        let (upper, lower) = self.triangle_targets()?;
        Ok(self.e.then(w)? == upper && w.then(&self.m_prime)? == lower)
    }

    /// The largest `w` with `w ∘ e ⊆ e' ∘ u` and `m' ∘ w ⊆ v ∘ m`.
    fn largest_candidate(&self) -> Result<Relation> {
        let (upper, lower) = self.triangle_targets()?;
        let mid = self.e.target.clone();
        let mid_prime = self.e_prime.target.clone();
        let pairs: Vec<_> = mid
            .iter()
            .flat_map(|r| mid_prime.iter().map(move |rp| (r, rp)))
            .filter(|(r, rp)| {
                self.e.preimage(r).all(|x| upper.contains(x, rp))
                    && self.m_prime.image(rp).all(|yp| lower.contains(r, yp))
            })
            .map(|(r, rp)| (r.clone(), rp.clone()))
            .collect();
        Relation::new(mid, mid_prime, pairs)
    }

    /// Counts diagonal fills exactly. Both triangle equations are an
    /// upper bound (`w ⊆ P`) plus conditions that are monotone in `w`,
    /// so the fills form an up-set below `P`: a fill exists iff `P` is
    /// one, and it is unique iff no `P` minus one pair is still a fill.
    pub fn fill_count(&self) -> Result<FillCount> {
        self.validate()?;
        let p = self.largest_candidate()?;
        if !self.is_fill(&p)? {
            return Ok(FillCount::None);
        }
        for (a, b) in p.pairs() {
            if self.is_fill(&p.without(a, b))? {
                return Ok(FillCount::Multiple);
            }
        }
        Ok(FillCount::Unique)
    }
}

/// The diagonal `w: B → B'` of a commuting square.
pub fn rel_diagonal_fill(square: &RelSquare) -> Result<Relation> {
    if !square.commutes()? {
        let lhs = square.e.then(&square.m)?.then(&square.v)?;
        let rhs = square.u.then(&square.e_prime)?.then(&square.m_prime)?;
        return Err(Error::SquareDoesNotCommute(
            lhs.symmetric_difference_len(&rhs) as f64,
        ));
    }
    let w = square.largest_candidate()?;
    if !square.is_fill(&w)? {
        return Err(Error::InvalidShape("square admits no diagonal fill".into()));
    }
    Ok(w)
}

/// `W = {((x,y),(x',y')) ∈ R × R' : (x,x') ∈ U, (y,y') ∈ V}` between the
/// graph factorisations of `r` and `r_prime`. It equals the largest fill
/// of the square, which need not be the only one: with `R` and `R'` full
/// on `1×2` and `2×1` carriers and `U`, `V` full, the two matchings
/// between the two-element graphs also fill.
pub fn rel_graph_fill(
    r: &Relation,
    r_prime: &Relation,
    u: &Relation,
    v: &Relation,
) -> Result<Relation> {
    let pairs: Vec<_> = r
        .pairs()
        .flat_map(|(x, y)| r_prime.pairs().map(move |(xp, yp)| (x, y, xp, yp)))
        .filter(|(x, y, xp, yp)| u.contains(x, xp) && v.contains(y, yp))
        .map(|(x, y, xp, yp)| (Label::pair(x, y), Label::pair(xp, yp)))
        .collect();
    Relation::new(rel_factor(r).mid, rel_factor(r_prime).mid, pairs)
}

/// Colimit of a finite chain of relations by the quotient construction.
#[derive(Clone, Debug)]
pub struct RelColimit {
    pub carrier: Carrier,
    /// `S_n: X_n → X`, `x ↦ [x]` on elements that have a successor.
    pub legs: Vec<Relation>,
    /// Class of each surviving `(level, label)`.
    pub classes: BTreeMap<(usize, Label), Label>,
}

fn check_chain(levels: &[Carrier], steps: &[Relation]) -> Result<()> {
    if levels.is_empty() || steps.len() + 1 != levels.len() {
        return Err(Error::InvalidShape(format!(
            "chain with {} levels needs {} steps, got {}",
            levels.len(),
            levels.len().saturating_sub(1),
            steps.len()
        )));
    }
    for (n, step) in steps.iter().enumerate() {
        if step.source != levels[n] || step.target != levels[n + 1] {
            return Err(Error::InvalidShape(format!(
                "step {n} is not X_{n} -> X_{}",
                n + 1
            )));
        }
    }
    Ok(())
}

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind {
            parent: (0..n).collect(),
        }
    }

    fn find(&mut self, mut i: usize) -> usize {
        while self.parent[i] != i {
            self.parent[i] = self.parent[self.parent[i]];
            i = self.parent[i];
        }
        i
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.parent[ra.max(rb)] = ra.min(rb);
        }
    }
}

/// `X = ∐ X_n' / ∼` where `X_n'` keeps the elements with a successor
/// (the last level is kept whole) and `∼` is generated by the step
/// relations. Classes are labelled `[x@n]` after their least
/// `(label, level)` member.
pub fn rel_chain_colimit(levels: &[Carrier], steps: &[Relation]) -> Result<RelColimit> {
    check_chain(levels, steps)?;
    let top = levels.len() - 1;
    let survivors: Vec<Vec<Label>> = levels
        .iter()
        .enumerate()
        .map(|(n, x)| {
            x.iter()
                .filter(|l| n == top || steps[n].image(l).next().is_some())
                .cloned()
                .collect()
        })
        .collect();

    let mut index: BTreeMap<(usize, Label), usize> = BTreeMap::new();
    for (n, xs) in survivors.iter().enumerate() {
        for x in xs {
            let next = index.len();
            index.insert((n, x.clone()), next);
        }
    }
    let mut uf = UnionFind::new(index.len());
    for (n, step) in steps.iter().enumerate() {
        for (x, y) in step.pairs() {
            if let (Some(&a), Some(&b)) =
                (index.get(&(n, x.clone())), index.get(&(n + 1, y.clone())))
            {
                uf.union(a, b);
            }
        }
    }

    // Least (label, level) member per class.
    let mut least: BTreeMap<usize, (Label, usize)> = BTreeMap::new();
    for ((n, x), &i) in &index {
        let root = uf.find(i);
        let candidate = (x.clone(), *n);
        least
            .entry(root)
            .and_modify(|cur| {
                if candidate < *cur {
                    *cur = candidate.clone();
                }
            })
            .or_insert(candidate);
    }
    let class_label = |(x, n): &(Label, usize)| Label::Atom(format!("[{x}@{n}]"));

    let mut classes = BTreeMap::new();
    for ((n, x), &i) in &index {
        let root = uf.find(i);
        classes.insert((*n, x.clone()), class_label(&least[&root]));
    }
    let carrier = Carrier::new(least.values().map(class_label));
    let legs = levels
        .iter()
        .enumerate()
        .map(|(n, x)| {
            Relation::new(
                x.clone(),
                carrier.clone(),
                survivors[n]
                    .iter()
                    .map(|l| (l.clone(), classes[&(n, l.clone())].clone())),
            )
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(RelColimit {
        carrier,
        legs,
        classes,
    })
}

/// Composite steps `X_n → X_top` for every level.
pub fn rel_composites_to_top(levels: &[Carrier], steps: &[Relation]) -> Result<Vec<Relation>> {
    check_chain(levels, steps)?;
    let top = levels.len() - 1;
    let mut out = vec![Relation::identity(&levels[top])];
    for n in (0..top).rev() {
        let next = steps[n].then(out.last().expect("nonempty"))?;
        out.push(next);
    }
    out.reverse();
    Ok(out)
}

/// Whether `legs` form a cocone over the chain.
pub fn is_cocone(steps: &[Relation], legs: &[Relation]) -> Result<bool> {
    for (n, step) in steps.iter().enumerate() {
        if step.then(&legs[n + 1])? != legs[n] {
            return Ok(false);
        }
    }
    Ok(true)
}

/// A bijection `φ: colimit → X_top` with `φ ∘ S_n = X_n → X_top`, when
/// one exists.
pub fn top_comparison(
    colimit: &RelColimit,
    levels: &[Carrier],
    steps: &[Relation],
) -> Result<Option<Relation>> {
    let composites = rel_composites_to_top(levels, steps)?;
    let top = levels.len() - 1;
    let phi = colimit.legs[top].converse();
    if !phi.is_bijection() {
        return Ok(None);
    }
    for (n, leg) in colimit.legs.iter().enumerate() {
        if leg.then(&phi)? != composites[n] {
            return Ok(None);
        }
    }
    Ok(Some(phi))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::category::check_snake;

    fn l(s: &str) -> Label {
        Label::from(s)
    }

    fn rel(src: &[&str], tgt: &[&str], pairs: &[(&str, &str)]) -> Relation {
        Relation::new(
            Carrier::from_atoms(src),
            Carrier::from_atoms(tgt),
            pairs.iter().map(|(a, b)| (l(a), l(b))),
        )
        .unwrap()
    }

    #[test]
    fn relation_rejects_pairs_outside_carriers() {
        let r = Relation::new(
            Carrier::from_atoms(&["a"]),
            Carrier::from_atoms(&["b"]),
            [(l("a"), l("c"))],
        );
        assert!(r.is_err());
    }

    #[test]
    fn compact_structure_on_singleton() {
        let cs = rel_compact_structure(&Carrier::from_atoms(&["a"]));
        let expected_eta: Vec<_> = cs
            .eta
            .pairs()
            .map(|(s, t)| (s.clone(), t.clone()))
            .collect();
        assert_eq!(expected_eta, vec![(l("*"), Label::pair("a", "a"))]);
        let expected_eps: Vec<_> = cs
            .epsilon
            .pairs()
            .map(|(s, t)| (s.clone(), t.clone()))
            .collect();
        assert_eq!(expected_eps, vec![(Label::pair("a", "a"), l("*"))]);
        assert!(check_snake(&cs, 0.0).unwrap().passed);
    }

    #[test]
    fn compact_structure_on_empty_carrier() {
        let cs = rel_compact_structure(&Carrier::default());
        assert!(cs.eta.is_empty());
        assert!(cs.epsilon.is_empty());
        assert!(check_snake(&cs, 0.0).unwrap().passed);
    }

    #[test]
    fn snake_on_two_elements_by_enumeration() {
        let x = Carrier::from_atoms(&["a", "b"]);
        let cs = rel_compact_structure(&x);
        assert_eq!(cs.object_snake().unwrap(), Relation::identity(&x));
        assert_eq!(cs.dual_snake().unwrap(), Relation::identity(&x));
    }

    #[test]
    fn membership_predicates() {
        let f = rel(&["1", "2"], &["a", "b"], &[("1", "a"), ("2", "a")]);
        assert!(rel_in_m(&f));
        assert!(!rel_in_e(&f));

        let bij = rel(&["1", "2"], &["a", "b"], &[("1", "b"), ("2", "a")]).converse();
        assert!(rel_in_e(&bij) && rel_in_m(&bij));

        let two = rel(&["x"], &["y1", "y2"], &[("x", "y1"), ("x", "y2")]);
        assert!(!rel_in_m(&two));
        assert!(rel_in_e(&two));
    }

    #[test]
    fn factor_example() {
        let r = rel(&["0"], &["0", "1"], &[("0", "0"), ("0", "1")]);
        let fac = rel_factor(&r);
        let mid = Carrier::new([Label::pair("0", "0"), Label::pair("0", "1")]);
        assert_eq!(fac.mid, mid);
        let e = Relation::new(
            r.source().clone(),
            mid.clone(),
            [
                (l("0"), Label::pair("0", "0")),
                (l("0"), Label::pair("0", "1")),
            ],
        )
        .unwrap();
        let m = Relation::new(
            mid,
            r.target().clone(),
            [
                (Label::pair("0", "0"), l("0")),
                (Label::pair("0", "1"), l("1")),
            ],
        )
        .unwrap();
        assert_eq!(fac.e, e);
        assert_eq!(fac.m, m);
        assert_eq!(fac.e.then(&fac.m).unwrap(), r);
    }

    #[test]
    fn factor_identity_and_empty() {
        let x = Carrier::from_atoms(&["p", "q"]);
        let fac = rel_factor(&Relation::identity(&x));
        assert!(fac.e.is_bijection() && fac.m.is_bijection());

        let empty = rel(&["x"], &["y"], &[]);
        let fac = rel_factor(&empty);
        assert!(fac.mid.is_empty());
        assert!(fac.e.is_empty() && rel_in_e(&fac.e));
        assert!(fac.m.is_empty() && rel_in_m(&fac.m));
        assert_eq!(fac.e.then(&fac.m).unwrap(), empty);
    }

    #[test]
    fn fill_of_identity_square_is_identity() {
        let r = rel(&["a", "b"], &["c"], &[("a", "c"), ("b", "c")]);
        let sq = RelSquare::from_factorisations(
            &r,
            &r,
            Relation::identity(r.source()),
            Relation::identity(r.target()),
        );
        let w = rel_diagonal_fill(&sq).unwrap();
        assert_eq!(w, Relation::identity(&rel_factor(&r).mid));
        assert_eq!(sq.fill_count().unwrap(), FillCount::Unique);
    }

    #[test]
    fn graph_fill_is_largest_fill_for_total_relations() {
        // U, V total on two-element carriers.
        let r = rel(&["x1", "x2"], &["y1", "y2"], &[("x1", "y1"), ("x2", "y2")]);
        let rp = rel(
            &["x1", "x2"],
            &["y1", "y2"],
            &[("x1", "y1"), ("x1", "y2"), ("x2", "y1"), ("x2", "y2")],
        );
        let u = rel(
            &["x1", "x2"],
            &["x1", "x2"],
            &[("x1", "x1"), ("x1", "x2"), ("x2", "x1"), ("x2", "x2")],
        );
        let v = rel(
            &["y1", "y2"],
            &["y1", "y2"],
            &[("y1", "y1"), ("y1", "y2"), ("y2", "y1"), ("y2", "y2")],
        );
        let sq = RelSquare::from_factorisations(&r, &rp, u.clone(), v.clone());
        assert!(sq.commutes().unwrap());
        let w = rel_diagonal_fill(&sq).unwrap();

        assert_eq!(w, rel_graph_fill(&r, &rp, &u, &v).unwrap());

        // Exactly one fill among all 2^(2·4) relations R → R'.
        let mid = rel_factor(&r).mid;
        let mid_p = rel_factor(&rp).mid;
        let cells: Vec<_> = mid
            .iter()
            .flat_map(|a| mid_p.iter().map(move |b| (a.clone(), b.clone())))
            .collect();
        let mut count = 0;
        for mask in 0u32..(1 << cells.len()) {
            let w = Relation::new(
                mid.clone(),
                mid_p.clone(),
                cells
                    .iter()
                    .enumerate()
                    .filter(|(i, _)| mask >> i & 1 == 1)
                    .map(|(_, c)| c.clone()),
            )
            .unwrap();
            if sq.is_fill(&w).unwrap() {
                count += 1;
            }
        }
        assert_eq!(count, 1);
    }

    #[test]
    fn some_squares_have_several_fills() {
        let r = rel(&["x"], &["y1", "y2"], &[("x", "y1"), ("x", "y2")]);
        let rp = rel(&["p1", "p2"], &["q"], &[("p1", "q"), ("p2", "q")]);
        let u = rel(&["x"], &["p1", "p2"], &[("x", "p1"), ("x", "p2")]);
        let v = rel(&["y1", "y2"], &["q"], &[("y1", "q"), ("y2", "q")]);
        let sq = RelSquare::from_factorisations(&r, &rp, u.clone(), v.clone());
        assert!(sq.commutes().unwrap());
        let w = rel_diagonal_fill(&sq).unwrap();
        assert_eq!(w, rel_graph_fill(&r, &rp, &u, &v).unwrap());
        assert_eq!(w.len(), 4);
        let (b, bp) = (rel_factor(&r).mid, rel_factor(&rp).mid);
        let matching = Relation::new(
            b.clone(),
            bp.clone(),
            b.iter().zip(bp.iter()).map(|(a, c)| (a.clone(), c.clone())),
        )
        .unwrap();
        assert!(sq.is_fill(&matching).unwrap());
        assert_eq!(sq.fill_count().unwrap(), FillCount::Multiple);
    }

    #[test]
    fn non_commuting_square_is_rejected() {
        let r = rel(&["a"], &["b"], &[("a", "b")]);
        let rp = rel(&["a"], &["b"], &[]);
        let sq = RelSquare::from_factorisations(
            &r,
            &rp,
            Relation::identity(r.source()),
            Relation::identity(r.target()),
        );
        assert!(matches!(
            rel_diagonal_fill(&sq),
            Err(Error::SquareDoesNotCommute(_))
        ));
    }

    #[test]
    fn chain_colimit_of_inclusion() {
        let levels = [Carrier::range(1), Carrier::range(2)];
        let steps = [rel(&["0"], &["0", "1"], &[("0", "0")])];
        let colim = rel_chain_colimit(&levels, &steps).unwrap();
        assert_eq!(colim.carrier.len(), 2);
        let s0: Vec<_> = colim.legs[0]
            .pairs()
            .map(|(a, b)| (a.clone(), b.clone()))
            .collect();
        assert_eq!(s0, vec![(l("0"), l("[0@0]"))]);
        assert!(is_cocone(&steps, &colim.legs).unwrap());
        assert!(top_comparison(&colim, &levels, &steps).unwrap().is_some());
    }

    #[test]
    fn chain_colimit_of_constant_chain() {
        let x = Carrier::from_atoms(&["a", "b", "c"]);
        let levels = vec![x.clone(); 4];
        let steps = vec![Relation::identity(&x); 3];
        let colim = rel_chain_colimit(&levels, &steps).unwrap();
        assert_eq!(colim.carrier.len(), 3);
        assert!(top_comparison(&colim, &levels, &steps).unwrap().is_some());
    }

    #[test]
    fn chain_colimit_drops_elements_without_successor() {
        let levels = [
            Carrier::from_atoms(&["x", "z"]),
            Carrier::from_atoms(&["a"]),
        ];
        let steps = [rel(&["x", "z"], &["a"], &[("z", "a")])];
        let colim = rel_chain_colimit(&levels, &steps).unwrap();
        assert!(!colim.classes.contains_key(&(0, l("x"))));
        assert!(colim.legs[0].image(&l("x")).next().is_none());
        assert_eq!(colim.carrier.len(), 1);
        assert!(is_cocone(&steps, &colim.legs).unwrap());
        assert!(top_comparison(&colim, &levels, &steps).unwrap().is_some());
    }

    #[test]
    fn swap_chain_classes_are_distinct() {
        let x = Carrier::from_atoms(&["a", "b"]);
        let levels = vec![x.clone(), x.clone()];
        let steps = vec![rel(&["a", "b"], &["a", "b"], &[("a", "b"), ("b", "a")])];
        let colim = rel_chain_colimit(&levels, &steps).unwrap();
        assert_eq!(colim.carrier.len(), 2);
    }

    #[test]
    fn multivalued_step_breaks_the_quotient() {
        // x relates to two successors; the quotient merges them and the
        // result is no longer the colimit D(top).
        let levels = [
            Carrier::from_atoms(&["x"]),
            Carrier::from_atoms(&["y1", "y2"]),
        ];
        let steps = [rel(&["x"], &["y1", "y2"], &[("x", "y1"), ("x", "y2")])];
        let colim = rel_chain_colimit(&levels, &steps).unwrap();
        assert_eq!(colim.carrier.len(), 1);
        assert!(top_comparison(&colim, &levels, &steps).unwrap().is_none());
    }

    #[test]
    fn json_shape_is_sorted() {
        let r = rel(&["b", "a"], &["d", "c"], &[("b", "d"), ("a", "c")]);
        let json = serde_json::to_string(&r).unwrap();
        assert_eq!(
            json,
            r#"{"source":["a","b"],"target":["c","d"],"pairs":[["a","c"],["b","d"]]}"#
        );
        let back: Relation = serde_json::from_str(&json).unwrap();
        assert_eq!(back, r);
    }

    #[test]
    fn json_rejects_out_of_carrier_pairs() {
        let bad = r#"{"source":["a"],"target":["b"],"pairs":[["a","z"]]}"#;
        assert!(serde_json::from_str::<Relation>(bad).is_err());
    }
}
