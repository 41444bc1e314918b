//! ω-chains of compact objects standing for their colimits, ind-morphisms
//! between them, and the extended duals functor built levelwise from a
//! factorisation system and mediating morphisms.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::category::{conjugate_of, dual_of, Category, CategoryTag, CompactClosed};
use crate::error::{Error, Result};
use crate::fdhilb::{
    hilb_chain_colimit, hilb_factor, hilb_in_e, hilb_in_m, FdHilb, FdMorphism, RANK_TOL,
};
use crate::qkd::ChannelChain;
use crate::rel::{rel_chain_colimit, rel_factor, rel_in_e, rel_in_m, Carrier, Rel, Relation};

/// Observational depth for ind-morphism equality.
pub const DEFAULT_TEST_DEPTH: usize = 6;

/// A factorisation system `(E, M)` on a category.
pub trait FactorisationSystem<C: Category>: Send + Sync {
    fn name(&self) -> &'static str;
    fn in_e(&self, f: &C::Mor) -> bool;
    fn in_m(&self, f: &C::Mor) -> bool;
    /// `f = m ∘ e`, returned as `(e, m)`.
    fn factor(&self, f: &C::Mor) -> (C::Mor, C::Mor);
}

/// Oppositely functional / functional relations.
#[derive(Clone, Copy, Debug, Default)]
pub struct RelFunctional;

impl FactorisationSystem<Rel> for RelFunctional {
    fn name(&self) -> &'static str {
        "functional"
    }

    fn in_e(&self, f: &Relation) -> bool {
        rel_in_e(f)
    }

    fn in_m(&self, f: &Relation) -> bool {
        rel_in_m(f)
    }

    fn factor(&self, f: &Relation) -> (Relation, Relation) {
        let fac = rel_factor(f);
        (fac.e, fac.m)
    }
}

/// Surjections / injections.
#[derive(Clone, Copy, Debug, Default)]
pub struct EpiMono;

impl FactorisationSystem<FdHilb> for EpiMono {
    fn name(&self) -> &'static str {
        "epi-mono"
    }

    fn in_e(&self, f: &FdMorphism) -> bool {
        hilb_in_e(f)
    }

    fn in_m(&self, f: &FdMorphism) -> bool {
        hilb_in_m(f)
    }

    fn factor(&self, f: &FdMorphism) -> (FdMorphism, FdMorphism) {
        let fac = hilb_factor(f);
        (fac.e, fac.m)
    }
}

/// `E` = isomorphisms, `M` = everything; `f = f ∘ id`.
#[derive(Clone, Copy, Debug, Default)]
pub struct Trivial;

impl<C: Category> FactorisationSystem<C> for Trivial {
    fn name(&self) -> &'static str {
        "trivial"
    }

    fn in_e(&self, f: &C::Mor) -> bool {
        C::is_iso(f)
    }

    fn in_m(&self, _: &C::Mor) -> bool {
        true
    }

    fn factor(&self, f: &C::Mor) -> (C::Mor, C::Mor) {
        (C::identity(&C::source(f)), f.clone())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Cone,
    Cocone,
}

/// A vertex with one leg per level: `vertex → D(n)` for cones,
/// `D(n) → vertex` for cocones.
#[derive(Clone, Debug)]
pub struct ConeData<C: Category> {
    pub vertex: C::Obj,
    pub legs: Vec<C::Mor>,
    pub direction: Direction,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Pick {
    Least,
    Greatest,
}

/// What a category needs to host the extended duals construction.
pub trait Accessible: CompactClosed {
    fn canonical_system() -> Box<dyn FactorisationSystem<Self>>;

    fn chain_colimit(
        objects: &[Self::Obj],
        steps: &[Self::Mor],
        stable_from: Option<usize>,
    ) -> Result<ConeData<Self>>;

    /// Some `n` with `leg ∘ n = m`. `pick` selects between extreme
    /// solutions where the category has several.
    fn lift(leg: &Self::Mor, m: &Self::Mor, pick: Pick, tol: f64) -> Option<Self::Mor>;

    /// The `v: colimit → Y` with `v ∘ leg_n = cocone_n` for every level.
    fn mediate_cocone(
        colimit: &ConeData<Self>,
        cocone: &[Self::Mor],
        tol: f64,
    ) -> Result<Self::Mor>;
}

impl Accessible for Rel {
    fn canonical_system() -> Box<dyn FactorisationSystem<Rel>> {
        Box::new(RelFunctional)
    }

    fn chain_colimit(
        objects: &[Carrier],
        steps: &[Relation],
        _: Option<usize>,
    ) -> Result<ConeData<Rel>> {
        let colim = rel_chain_colimit(objects, steps)?;
        Ok(ConeData {
            vertex: colim.carrier,
            legs: colim.legs,
            direction: Direction::Cocone,
        })
    }

    fn lift(leg: &Relation, m: &Relation, pick: Pick, _: f64) -> Option<Relation> {
        if leg.target() != m.target() {
            return None;
        }
        let mut pairs = Vec::new();
        for x in m.source().iter() {
            let wanted: Vec<_> = m.image(x).collect();
            for &c in &wanted {
                let mut candidates = leg.source().iter().filter(|y| {
                    let mut img = leg.image(y).peekable();
                    img.peek().is_some() && leg.contains(y, c) && img.all(|k| wanted.contains(&k))
                });
                let y = match pick {
                    Pick::Least => candidates.next(),
                    Pick::Greatest => candidates.last(),
                }?;
                pairs.push((x.clone(), y.clone()));
            }
        }
        let n = Relation::new(m.source().clone(), leg.source().clone(), pairs).ok()?;
        (n.then(leg).ok()? == *m).then_some(n)
    }

    fn mediate_cocone(colimit: &ConeData<Rel>, cocone: &[Relation], _: f64) -> Result<Relation> {
        check_leg_count(colimit, cocone)?;
        let mut pairs = Vec::new();
        for (leg, h) in colimit.legs.iter().zip(cocone) {
            let part = leg.converse().then(h)?;
            pairs.extend(part.pairs().map(|(a, b)| (a.clone(), b.clone())));
        }
        let v = Relation::new(colimit.vertex.clone(), cocone[0].target().clone(), pairs)?;
        let mut mismatch = 0;
        for (leg, h) in colimit.legs.iter().zip(cocone) {
            mismatch += leg.then(&v)?.symmetric_difference_len(h);
        }
        if mismatch > 0 {
            return Err(Error::IncompatibleLegs(mismatch as f64));
        }
        Ok(v)
    }
}

impl Accessible for FdHilb {
    fn canonical_system() -> Box<dyn FactorisationSystem<FdHilb>> {
        Box::new(EpiMono)
    }

    fn chain_colimit(
        objects: &[usize],
        steps: &[FdMorphism],
        stable_from: Option<usize>,
    ) -> Result<ConeData<FdHilb>> {
        let colim = hilb_chain_colimit(objects, steps, stable_from)?;
        Ok(ConeData {
            vertex: colim.object,
            legs: colim.legs,
            direction: Direction::Cocone,
        })
    }

    fn lift(leg: &FdMorphism, m: &FdMorphism, _: Pick, tol: f64) -> Option<FdMorphism> {
        if leg.rows() != m.rows() {
            return None;
        }
        let n = leg.pinv(RANK_TOL).matmul(m).ok()?;
        (leg.matmul(&n).ok()?.max_abs_diff(m) <= tol).then_some(n)
    }

    fn mediate_cocone(
        colimit: &ConeData<FdHilb>,
        cocone: &[FdMorphism],
        tol: f64,
    ) -> Result<FdMorphism> {
        check_leg_count(colimit, cocone)?;
        let stacked_legs = hstack(&colimit.legs)?;
        let stacked_cocone = hstack(cocone)?;
        let v = stacked_cocone.matmul(&stacked_legs.pinv(RANK_TOL))?;
        let residual = colimit
            .legs
            .iter()
            .zip(cocone)
            .map(|(leg, h)| v.matmul(leg).map(|x| x.max_abs_diff(h)))
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .fold(0.0, f64::max);
        if residual > tol {
            return Err(Error::IncompatibleLegs(residual));
        }
        Ok(v)
    }
}

fn check_leg_count<C: Category>(colimit: &ConeData<C>, legs: &[C::Mor]) -> Result<()> {
    if legs.is_empty() || legs.len() != colimit.legs.len() {
        return Err(Error::InvalidShape(format!(
            "expected {} legs, got {}",
            colimit.legs.len(),
            legs.len()
        )));
    }
    Ok(())
}

/// Side-by-side block matrix `[a | b | …]`.
fn hstack(blocks: &[FdMorphism]) -> Result<FdMorphism> {
    let rows = blocks.first().map_or(0, FdMorphism::rows);
    if blocks.iter().any(|b| b.rows() != rows) {
        return Err(Error::InvalidShape(
            "blocks have different row counts".into(),
        ));
    }
    let cols = blocks.iter().map(FdMorphism::cols).sum();
    let mut data = Vec::with_capacity(rows * cols);
    for i in 0..rows {
        for b in blocks {
            data.extend((0..b.cols()).map(|j| b.get(i, j)));
        }
    }
    FdMorphism::new(rows, cols, data)
}

/// Composites `D(n) → D(top)` of a finite chain, top first-to-last.
pub fn composites_to_top<C: Category>(objects: &[C::Obj], steps: &[C::Mor]) -> Result<Vec<C::Mor>> {
    if objects.is_empty() || steps.len() + 1 != objects.len() {
        return Err(Error::InvalidShape(
            "chain needs one step fewer than levels".into(),
        ));
    }
    let top = objects.len() - 1;
    let mut out = vec![C::identity(&objects[top])];
    for n in (0..top).rev() {
        let next = C::compose(out.last().expect("nonempty"), &steps[n])?;
        out.push(next);
    }
    out.reverse();
    Ok(out)
}

/// Whether `legs` commute with the steps: `leg_{n+1} ∘ step_n = leg_n`.
pub fn is_cocone<C: Category>(steps: &[C::Mor], legs: &[C::Mor], tol: f64) -> Result<bool> {
    for (n, step) in steps.iter().enumerate() {
        if !C::agrees(&C::compose(&legs[n + 1], step)?, &legs[n], tol) {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Whether `legs` commute with dual steps `D*(n+1) → D*(n)`.
pub fn is_cone<C: Category>(steps: &[C::Mor], legs: &[C::Mor], tol: f64) -> Result<bool> {
    for (n, step) in steps.iter().enumerate() {
        if !C::agrees(&C::compose(step, &legs[n + 1])?, &legs[n], tol) {
            return Ok(false);
        }
    }
    Ok(true)
}

/// A pure rule for the levels and connecting maps of an ω-chain.
pub trait ChainGenerator<C: Category>: Send + Sync {
    fn object(&self, n: usize) -> C::Obj;
    /// `D(n) → D(n+1)`
    fn step(&self, n: usize) -> C::Mor;
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TruncationMode {
    /// Colimit of the finite truncation by the category's own construction.
    Colimit,
    /// The top object of the truncation with composite legs, for chains
    /// that never stabilise.
    Window,
}

struct Constant<C: Category>(C::Obj);

impl<C: Category> ChainGenerator<C> for Constant<C> {
    fn object(&self, _: usize) -> C::Obj {
        self.0.clone()
    }

    fn step(&self, _: usize) -> C::Mor {
        C::identity(&self.0)
    }
}

struct Explicit<C: Category> {
    objects: Vec<C::Obj>,
    steps: Vec<C::Mor>,
}

impl<C: Category> ChainGenerator<C> for Explicit<C> {
    fn object(&self, n: usize) -> C::Obj {
        self.objects[n.min(self.objects.len() - 1)].clone()
    }

    fn step(&self, n: usize) -> C::Mor {
        match self.steps.get(n) {
            Some(s) => s.clone(),
            None => C::identity(self.objects.last().expect("nonempty")),
        }
    }
}

pub struct ChainDiagram<C: Category> {
    generator: Arc<dyn ChainGenerator<C>>,
    stable_from: Option<usize>,
    mode: TruncationMode,
}

impl<C: Category> Clone for ChainDiagram<C> {
    fn clone(&self) -> Self {
        ChainDiagram {
            generator: Arc::clone(&self.generator),
            stable_from: self.stable_from,
            mode: self.mode,
        }
    }
}

impl<C: Category> fmt::Debug for ChainDiagram<C> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ChainDiagram")
            .field("category", &C::TAG)
            .field("level0", &self.generator.object(0))
            .field("stable_from", &self.stable_from)
            .field("mode", &self.mode)
            .finish()
    }
}

impl<C: Accessible> ChainDiagram<C> {
    pub fn new(
        generator: Arc<dyn ChainGenerator<C>>,
        stable_from: Option<usize>,
        mode: TruncationMode,
    ) -> Self {
        ChainDiagram {
            generator,
            stable_from,
            mode,
        }
    }

    pub fn constant(x: C::Obj) -> Self {
        Self::new(Arc::new(Constant::<C>(x)), Some(0), TruncationMode::Colimit)
    }

    /// Levels and steps given inline, continued by identities on the last
    /// level. Steps must lie in the canonical `M`.
    pub fn explicit(objects: Vec<C::Obj>, steps: Vec<C::Mor>) -> Result<Self> {
        if objects.is_empty() || steps.len() + 1 != objects.len() {
            return Err(Error::InvalidShape(format!(
                "explicit chain with {} levels needs {} steps, got {}",
                objects.len(),
                objects.len().saturating_sub(1),
                steps.len()
            )));
        }
        let m = C::canonical_system();
        for (n, s) in steps.iter().enumerate() {
            if C::source(s) != objects[n] || C::target(s) != objects[n + 1] {
                return Err(Error::InvalidShape(format!("step {n} has the wrong type")));
            }
            if !m.in_m(s) {
                return Err(Error::NotInM);
            }
        }
        Ok(Self::new(
            Arc::new(Explicit::<C> { objects, steps }),
            None,
            TruncationMode::Colimit,
        ))
    }

    pub fn with_stable_from(mut self, k: Option<usize>) -> Self {
        self.stable_from = k;
        self
    }

    pub fn stable_from(&self) -> Option<usize> {
        self.stable_from
    }

    pub fn mode(&self) -> TruncationMode {
        self.mode
    }

    pub fn object(&self, n: usize) -> C::Obj {
        self.generator.object(n)
    }

    pub fn step(&self, n: usize) -> C::Mor {
        self.generator.step(n)
    }

    /// `D(from → to)`
    pub fn composite(&self, from: usize, to: usize) -> Result<C::Mor> {
        if from > to {
            return Err(Error::InvalidShape(format!(
                "no map from level {from} to {to}"
            )));
        }
        (from..to).try_fold(C::identity(&self.object(from)), |acc, n| {
            C::compose(&self.step(n), &acc)
        })
    }
}

/// Levels `0..=depth` of a chain together with a colimit of that part.
#[derive(Clone, Debug)]
pub struct Truncation<C: Category> {
    pub depth: usize,
    pub objects: Vec<C::Obj>,
    pub steps: Vec<C::Mor>,
    pub colimit: ConeData<C>,
    pub mode: TruncationMode,
    pub stable_from: Option<usize>,
}

fn colimit_of<C: Accessible>(
    objects: &[C::Obj],
    steps: &[C::Mor],
    mode: TruncationMode,
    stable_from: Option<usize>,
) -> Result<ConeData<C>> {
    match mode {
        TruncationMode::Colimit => C::chain_colimit(objects, steps, stable_from),
        TruncationMode::Window => Ok(ConeData {
            vertex: objects.last().expect("nonempty").clone(),
            legs: composites_to_top::<C>(objects, steps)?,
            direction: Direction::Cocone,
        }),
    }
}

pub fn truncate<C: Accessible>(chain: &ChainDiagram<C>, depth: usize) -> Result<Truncation<C>> {
    let objects: Vec<_> = (0..=depth).map(|n| chain.object(n)).collect();
    let steps: Vec<_> = (0..depth).map(|n| chain.step(n)).collect();
    let colimit = colimit_of::<C>(&objects, &steps, chain.mode, chain.stable_from)?;
    Ok(Truncation {
        depth,
        objects,
        steps,
        colimit,
        mode: chain.mode,
        stable_from: chain.stable_from,
    })
}

#[derive(Clone, Debug)]
pub struct LevelFactor<C: Category> {
    pub level: usize,
    /// `n: X → D(level)` with `d_level ∘ n = m`.
    pub n: C::Mor,
    /// Least and greatest solutions agree once pushed to the top level.
    pub essentially_unique: bool,
}

/// Searches levels upward for the least `j` at which `m: X → colim D`
/// factors as `d_j ∘ n` with `n ∈ M`. `Ok(None)` when no level of the
/// truncation works.
pub fn factor_through_colimit<C: Accessible>(
    m: &C::Mor,
    trunc: &Truncation<C>,
    system: &dyn FactorisationSystem<C>,
    tol: f64,
) -> Result<Option<LevelFactor<C>>> {
    if !system.in_m(m) {
        return Err(Error::NotInM);
    }
    let top = trunc.depth;
    let to_top = composites_to_top::<C>(&trunc.objects, &trunc.steps)?;
    for (j, leg) in trunc.colimit.legs.iter().enumerate() {
        let Some(n) = C::lift(leg, m, Pick::Least, tol).filter(|n| system.in_m(n)) else {
            continue;
        };
        let essentially_unique = match C::lift(leg, m, Pick::Greatest, tol) {
            Some(other) if j < top => C::agrees(
                &C::compose(&to_top[j], &n)?,
                &C::compose(&to_top[j], &other)?,
                tol,
            ),
            Some(other) => C::agrees(&n, &other, tol),
            None => false,
        };
        return Ok(Some(LevelFactor {
            level: j,
            n,
            essentially_unique,
        }));
    }
    Ok(None)
}

/// `D*`: levelwise duals with connecting maps `D(n+1)* → D(n)*`, and a
/// limit cone built as the dagger of the conjugated chain's colimit.
#[derive(Clone, Debug)]
pub struct DualDiagram<C: Category> {
    pub objects: Vec<C::Obj>,
    pub steps: Vec<C::Mor>,
    pub limit: ConeData<C>,
}

pub fn dual_diagram<C: Accessible>(trunc: &Truncation<C>) -> Result<DualDiagram<C>> {
    let objects: Vec<_> = trunc.objects.iter().map(C::dual_obj).collect();
    let steps = trunc
        .steps
        .iter()
        .map(dual_of::<C>)
        .collect::<Result<Vec<_>>>()?;
    let conjugated = trunc
        .steps
        .iter()
        .map(conjugate_of::<C>)
        .collect::<Result<Vec<_>>>()?;
    let cocone = colimit_of::<C>(&trunc.objects, &conjugated, trunc.mode, trunc.stable_from)?;
    Ok(DualDiagram {
        objects,
        steps,
        limit: dagger_cone(&cocone),
    })
}

fn dagger_cone<C: Accessible>(cone: &ConeData<C>) -> ConeData<C> {
    ConeData {
        vertex: cone.vertex.clone(),
        legs: cone.legs.iter().map(C::dagger).collect(),
        direction: match cone.direction {
            Direction::Cone => Direction::Cocone,
            Direction::Cocone => Direction::Cone,
        },
    }
}

/// The unique `u: Y → L` with `limit_n ∘ u = legs_n`, for a limit cone
/// obtained as the dagger of a colimit.
pub fn mediate<C: Accessible>(limit: &ConeData<C>, legs: &[C::Mor], tol: f64) -> Result<C::Mor> {
    let colimit = dagger_cone(limit);
    let cocone: Vec<_> = legs.iter().map(C::dagger).collect();
    Ok(C::dagger(&C::mediate_cocone(&colimit, &cocone, tol)?))
}

/// `f*: Y* → X*` for `f: colim C → colim D`. Level by level, `f ∘ c_i`
/// is factored as `m_i ∘ e_i`, `m_i` is written as `d_j ∘ n_i` at the
/// least possible `j`, and the legs `e_i* ∘ n_i* ∘ d_j*` are mediated
/// against the limit cone of `C*`.
pub fn extend_dual<C: Accessible>(
    f: &C::Mor,
    source: &Truncation<C>,
    target: &Truncation<C>,
    system: &dyn FactorisationSystem<C>,
    tol: f64,
) -> Result<C::Mor> {
    if C::source(f) != source.colimit.vertex || C::target(f) != target.colimit.vertex {
        return Err(Error::InvalidShape(format!(
            "f must map {} to {}",
            C::describe(&source.colimit.vertex),
            C::describe(&target.colimit.vertex)
        )));
    }
    let source_dual = dual_diagram(source)?;
    let target_dual = dual_diagram(target)?;
    let legs = source
        .colimit
        .legs
        .iter()
        .map(|c_i| {
            let (e, m) = system.factor(&C::compose(f, c_i)?);
            let found = factor_through_colimit(&m, target, system, tol)?
                .ok_or(Error::NoFactorisation(target.depth))?;
            C::compose(
                &dual_of::<C>(&e)?,
                &C::compose(
                    &dual_of::<C>(&found.n)?,
                    &target_dual.limit.legs[found.level],
                )?,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    mediate(&source_dual.limit, &legs, tol)
}

type Family<C> = dyn Fn(usize) -> (usize, <C as Category>::Mor) + Send + Sync;

/// A compatible family `g_i: C(i) → D(j_i)`.
pub struct IndMorphism<C: Category> {
    pub source: ChainDiagram<C>,
    pub target: ChainDiagram<C>,
    family: Arc<Family<C>>,
}

impl<C: Category> Clone for IndMorphism<C> {
    fn clone(&self) -> Self {
        IndMorphism {
            source: self.source.clone(),
            target: self.target.clone(),
            family: Arc::clone(&self.family),
        }
    }
}

impl<C: Accessible> IndMorphism<C> {
    pub fn new(
        source: ChainDiagram<C>,
        target: ChainDiagram<C>,
        family: impl Fn(usize) -> (usize, C::Mor) + Send + Sync + 'static,
    ) -> Self {
        IndMorphism {
            source,
            target,
            family: Arc::new(family),
        }
    }

    pub fn identity(chain: ChainDiagram<C>) -> Self {
        let inner = chain.clone();
        Self::new(chain.clone(), chain, move |i| {
            (i, C::identity(&inner.object(i)))
        })
    }

    pub fn component(&self, i: usize) -> (usize, C::Mor) {
        (self.family)(i)
    }

    /// For `i < depth`, `g_i` and `g_{i+1} ∘ C(i → i+1)` agree after
    /// pushing both to a common target level.
    pub fn check_compatible(&self, depth: usize, tol: f64) -> Result<bool> {
        for i in 0..depth {
            let (j, g) = self.component(i);
            let (j2, g2) = self.component(i + 1);
            let common = j.max(j2);
            let lhs = C::compose(&self.target.composite(j, common)?, &g)?;
            let rhs = C::compose(
                &self.target.composite(j2, common)?,
                &C::compose(&g2, &self.source.step(i))?,
            )?;
            if !C::agrees(&lhs, &rhs, tol) {
                return Ok(false);
            }
        }
        Ok(true)
    }

    /// The induced map between truncated colimits.
    pub fn realize(
        &self,
        source: &Truncation<C>,
        target: &Truncation<C>,
        tol: f64,
    ) -> Result<C::Mor> {
        let cocone = (0..=source.depth)
            .map(|i| {
                let (j, g) = self.component(i);
                let leg = target.colimit.legs.get(j).ok_or_else(|| {
                    Error::InvalidShape(format!(
                        "component {i} lands at level {j}, beyond depth {}",
                        target.depth
                    ))
                })?;
                C::compose(leg, &g)
            })
            .collect::<Result<Vec<_>>>()?;
        C::mediate_cocone(&source.colimit, &cocone, tol)
    }
}

/// JSON description of a chain.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ChainSpec {
    Constant(ConstantSpec),
    QkdChannel {},
    Explicit(ExplicitSpec),
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "category", rename_all = "lowercase")]
pub enum ConstantSpec {
    Rel { object: Carrier },
    FdHilb { dim: usize },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "category", rename_all = "lowercase")]
pub enum ExplicitSpec {
    Rel {
        levels: Vec<Carrier>,
        steps: Vec<Relation>,
    },
    FdHilb {
        dims: Vec<usize>,
        steps: Vec<FdMorphism>,
        #[serde(default)]
        stable_from: Option<usize>,
    },
}

/// A chain in either category.
#[derive(Clone, Debug)]
pub enum AnyChain {
    Rel(ChainDiagram<Rel>),
    FdHilb(ChainDiagram<FdHilb>),
}

impl AnyChain {
    pub fn from_spec(spec: &ChainSpec) -> Result<AnyChain> {
        Ok(match spec {
            ChainSpec::Constant(ConstantSpec::Rel { object }) => {
                AnyChain::Rel(ChainDiagram::constant(object.clone()))
            }
            ChainSpec::Constant(ConstantSpec::FdHilb { dim }) => {
                AnyChain::FdHilb(ChainDiagram::constant(*dim))
            }
            ChainSpec::QkdChannel {} => AnyChain::FdHilb(ChannelChain::normalized().diagram()),
            ChainSpec::Explicit(ExplicitSpec::Rel { levels, steps }) => {
                AnyChain::Rel(ChainDiagram::explicit(levels.clone(), steps.clone())?)
            }
            ChainSpec::Explicit(ExplicitSpec::FdHilb {
                dims,
                steps,
                stable_from,
            }) => AnyChain::FdHilb(
                ChainDiagram::explicit(dims.clone(), steps.clone())?.with_stable_from(*stable_from),
            ),
        })
    }

    pub fn from_json(s: &str) -> Result<AnyChain> {
        AnyChain::from_spec(&serde_json::from_str(s)?)
    }

    pub fn tag(&self) -> CategoryTag {
        match self {
            AnyChain::Rel(_) => CategoryTag::Rel,
            AnyChain::FdHilb(_) => CategoryTag::FdHilb,
        }
    }

    /// The truncation at `depth` as JSON: levels, steps, colimit vertex and legs.
    pub fn truncation_json(&self, depth: usize) -> Result<serde_json::Value> {
        fn render<C: Accessible>(
            chain: &ChainDiagram<C>,
            depth: usize,
            obj: impl Fn(&C::Obj) -> serde_json::Value,
            mor: impl Fn(&C::Mor) -> serde_json::Value,
        ) -> Result<serde_json::Value> {
            let t = truncate(chain, depth)?;
            Ok(serde_json::json!({
                "category": C::TAG,
                "depth": depth,
                "mode": t.mode,
                "levels": t.objects.iter().map(&obj).collect::<Vec<_>>(),
                "steps": t.steps.iter().map(&mor).collect::<Vec<_>>(),
                "colimit": obj(&t.colimit.vertex),
                "legs": t.colimit.legs.iter().map(&mor).collect::<Vec<_>>(),
            }))
        }
        let to_value = |v: Result<serde_json::Value, serde_json::Error>| v.expect("serializable");
        match self {
            AnyChain::Rel(c) => render(
                c,
                depth,
                |o| to_value(serde_json::to_value(o)),
                |m| to_value(serde_json::to_value(m)),
            ),
            AnyChain::FdHilb(c) => render(
                c,
                depth,
                |o| serde_json::json!(o),
                |m| to_value(serde_json::from_str(&m.to_json())),
            ),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::category::DaggerMonoidal;
    use crate::rel::Label;

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

    fn three_step_chain() -> ChainDiagram<Rel> {
        // {a} ↪ {a,b} ↪ {a,b,c} ↪ {a,b,c}
        let levels = vec![
            Carrier::from_atoms(&["a"]),
            Carrier::from_atoms(&["a", "b"]),
            Carrier::from_atoms(&["a", "b", "c"]),
            Carrier::from_atoms(&["a", "b", "c"]),
        ];
        let steps = vec![
            rel(&["a"], &["a", "b"], &[("a", "a")]),
            rel(&["a", "b"], &["a", "b", "c"], &[("a", "a"), ("b", "b")]),
            Relation::identity(&levels[2]),
        ];
        ChainDiagram::explicit(levels, steps).unwrap()
    }

    #[test]
    fn constant_chain_truncation() {
        let x = Carrier::from_atoms(&["p", "q"]);
        let t = truncate(&ChainDiagram::<Rel>::constant(x.clone()), 3).unwrap();
        assert_eq!(t.colimit.vertex.len(), 2);
        assert!(t.colimit.legs.iter().all(|leg| leg.is_bijection()));

        let t = truncate(&ChainDiagram::<FdHilb>::constant(3), 3).unwrap();
        assert_eq!(t.colimit.vertex, 3);
        assert!(t
            .colimit
            .legs
            .iter()
            .all(|leg| *leg == FdMorphism::identity(3)));
    }

    #[test]
    fn growing_hilb_chain_below_stabilisation_fails() {
        let incl =
            |r, c| FdMorphism::from_fn(r, c, |i, j| if i == j { 1.0.into() } else { 0.0.into() });
        let chain =
            ChainDiagram::<FdHilb>::explicit(vec![1, 2, 3], vec![incl(2, 1), incl(3, 2)]).unwrap();
        assert!(matches!(truncate(&chain, 2), Err(Error::NotStabilised(_))));
        let t = truncate(&chain, 3).unwrap();
        assert_eq!(t.colimit.vertex, 3);
        let declared = chain.with_stable_from(Some(3));
        assert!(matches!(
            truncate(&declared, 2),
            Err(Error::NotStabilised(_))
        ));
    }

    #[test]
    fn explicit_chain_rejects_non_m_steps() {
        let levels = vec![
            Carrier::from_atoms(&["x"]),
            Carrier::from_atoms(&["y", "z"]),
        ];
        let steps = vec![rel(&["x"], &["y", "z"], &[("x", "y"), ("x", "z")])];
        assert!(matches!(
            ChainDiagram::<Rel>::explicit(levels, steps),
            Err(Error::NotInM)
        ));
    }

    #[test]
    fn leg_factors_through_its_own_level() {
        let t = truncate(&three_step_chain(), 3).unwrap();
        for j in 0..=3 {
            let found = factor_through_colimit(&t.colimit.legs[j], &t, &RelFunctional, 0.0)
                .unwrap()
                .unwrap();
            assert!(found.level <= j);
            assert!(found.essentially_unique);
            let through = found.n.then(&t.colimit.legs[found.level]).unwrap();
            assert_eq!(through, t.colimit.legs[j]);
        }
        let found = factor_through_colimit(&t.colimit.legs[0], &t, &RelFunctional, 0.0)
            .unwrap()
            .unwrap();
        assert_eq!(found.level, 0);
        assert_eq!(found.n, Relation::identity(&t.objects[0]));
    }

    #[test]
    fn element_first_appearing_at_level_two() {
        let t = truncate(&three_step_chain(), 3).unwrap();
        let class_c = t.colimit.legs[2].apply(&l("c")).unwrap().clone();
        let m = Relation::new(
            Carrier::from_atoms(&["x"]),
            t.colimit.vertex.clone(),
            [(l("x"), class_c)],
        )
        .unwrap();
        let found = factor_through_colimit(&m, &t, &RelFunctional, 0.0)
            .unwrap()
            .unwrap();
        assert_eq!(found.level, 2);
        assert_eq!(found.n, rel(&["x"], &["a", "b", "c"], &[("x", "c")]));
    }

    #[test]
    fn factor_through_colimit_requires_m() {
        let t = truncate(&three_step_chain(), 3).unwrap();
        let two = Relation::new(
            Carrier::unit(),
            t.colimit.vertex.clone(),
            t.colimit.vertex.iter().map(|c| (l("*"), c.clone())),
        )
        .unwrap();
        assert!(matches!(
            factor_through_colimit(&two, &t, &RelFunctional, 0.0),
            Err(Error::NotInM)
        ));
    }

    #[test]
    fn dual_diagram_of_rel_chain_is_converse() {
        let t = truncate(&three_step_chain(), 3).unwrap();
        let d = dual_diagram(&t).unwrap();
        assert_eq!(d.objects, t.objects);
        for (s, ds) in t.steps.iter().zip(&d.steps) {
            assert_eq!(*ds, s.converse());
        }
        assert!(is_cone::<Rel>(&d.steps, &d.limit.legs, 0.0).unwrap());
        for (leg, limit_leg) in t.colimit.legs.iter().zip(&d.limit.legs) {
            assert_eq!(dual_of::<Rel>(leg).unwrap(), *limit_leg);
        }
    }

    #[test]
    fn dual_diagram_of_hilb_chain_is_transpose() {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let iso = FdMorphism::new(
            2,
            1,
            vec![
                num_complex::Complex64::new(s, 0.0),
                num_complex::Complex64::new(0.0, s),
            ],
        )
        .unwrap();
        let chain = ChainDiagram::<FdHilb>::explicit(vec![1, 2], vec![iso.clone()]).unwrap();
        let t = truncate(&chain, 2).unwrap();
        let d = dual_diagram(&t).unwrap();
        assert!(d.steps[0].max_abs_diff(&iso.transpose()) < 1e-12);
        assert!(is_cone::<FdHilb>(&d.steps, &d.limit.legs, 1e-12).unwrap());
    }

    #[test]
    fn mediate_limit_cone_itself_is_identity() {
        let t = truncate(&three_step_chain(), 3).unwrap();
        let d = dual_diagram(&t).unwrap();
        let u = mediate(&d.limit, &d.limit.legs, 0.0).unwrap();
        assert_eq!(u, Relation::identity(&d.limit.vertex));
    }

    #[test]
    fn mediate_rejects_incompatible_legs() {
        let t = truncate(&three_step_chain(), 3).unwrap();
        let d = dual_diagram(&t).unwrap();
        let mut legs = d.limit.legs.clone();
        legs[0] = Rel::zero(&d.limit.vertex, &t.objects[0]);
        assert!(matches!(
            mediate(&d.limit, &legs, 0.0),
            Err(Error::IncompatibleLegs(_))
        ));
    }

    #[test]
    fn mediate_recovers_converse_on_two_levels() {
        let levels = vec![
            Carrier::from_atoms(&["a"]),
            Carrier::from_atoms(&["a", "b"]),
        ];
        let steps = vec![rel(&["a"], &["a", "b"], &[("a", "a")])];
        let t = truncate(&ChainDiagram::<Rel>::explicit(levels, steps).unwrap(), 1).unwrap();
        let y = Carrier::from_atoms(&["y1", "y2"]);
        let f = Relation::new(
            t.colimit.vertex.clone(),
            y.clone(),
            t.colimit.vertex.iter().map(|c| (c.clone(), l("y1"))),
        )
        .unwrap();
        let d = dual_diagram(&t).unwrap();
        let legs: Vec<_> = t
            .colimit
            .legs
            .iter()
            .map(|c| c.then(&f).unwrap().converse())
            .collect();
        assert_eq!(mediate(&d.limit, &legs, 0.0).unwrap(), f.converse());
    }

    #[test]
    fn extend_dual_examples() {
        let c = truncate(&three_step_chain(), 3).unwrap();
        let y = Carrier::from_atoms(&["u", "v"]);
        let d = truncate(&ChainDiagram::<Rel>::constant(y.clone()), 2).unwrap();
        let pairs: Vec<_> = c
            .colimit
            .vertex
            .iter()
            .zip(d.colimit.vertex.iter().cycle())
            .map(|(a, b)| (a.clone(), b.clone()))
            .chain([(
                c.colimit.vertex.iter().next().unwrap().clone(),
                d.colimit.vertex.iter().last().unwrap().clone(),
            )])
            .collect();
        let f = Relation::new(c.colimit.vertex.clone(), d.colimit.vertex.clone(), pairs).unwrap();
        let star = extend_dual(&f, &c, &d, &RelFunctional, 0.0).unwrap();
        assert_eq!(star, f.converse());
        let star_trivial = extend_dual(&f, &c, &d, &Trivial, 0.0).unwrap();
        assert_eq!(star_trivial, star);

        let id = Relation::identity(&c.colimit.vertex);
        assert_eq!(extend_dual(&id, &c, &c, &RelFunctional, 0.0).unwrap(), id);
    }

    #[test]
    fn extend_dual_hilb_is_transpose() {
        let c = truncate(&ChainDiagram::<FdHilb>::constant(3), 2).unwrap();
        let d = truncate(&ChainDiagram::<FdHilb>::constant(2), 2).unwrap();
        let f = FdMorphism::new(
            2,
            3,
            (0..6)
                .map(|k| num_complex::Complex64::new(k as f64 - 2.5, (k * k) as f64 / 7.0))
                .collect(),
        )
        .unwrap();
        let star = extend_dual(&f, &c, &d, &EpiMono, 1e-9).unwrap();
        assert!(star.max_abs_diff(&f.transpose()) < 1e-9);
    }

    #[test]
    fn identity_ind_morphism() {
        let chain = three_step_chain();
        let id = IndMorphism::identity(chain.clone());
        assert!(id.check_compatible(DEFAULT_TEST_DEPTH, 0.0).unwrap());
        let t = truncate(&chain, 3).unwrap();
        let realized = id.realize(&t, &t, 0.0).unwrap();
        assert_eq!(realized, Relation::identity(&t.colimit.vertex));
        assert_eq!(
            extend_dual(&realized, &t, &t, &RelFunctional, 0.0).unwrap(),
            realized
        );
    }

    #[test]
    fn incompatible_family_is_detected() {
        let chain = three_step_chain();
        let inner = chain.clone();
        let bad = IndMorphism::new(chain.clone(), chain, move |i| {
            let x = inner.object(i);
            if i == 1 {
                (i, Rel::zero(&x, &x))
            } else {
                (i, Rel::identity(&x))
            }
        });
        assert!(!bad.check_compatible(3, 0.0).unwrap());
    }

    #[test]
    fn hstack_layout() {
        let a = FdMorphism::from_real(2, 1, &[1.0, 2.0]);
        let empty = FdMorphism::zeros(2, 0);
        let b = FdMorphism::from_real(2, 2, &[3.0, 4.0, 5.0, 6.0]);
        let s = hstack(&[a, empty, b]).unwrap();
        assert_eq!(
            s,
            FdMorphism::from_real(2, 3, &[1.0, 3.0, 4.0, 2.0, 5.0, 6.0])
        );
    }

    #[test]
    fn chain_spec_json() {
        let c = AnyChain::from_json(r#"{"kind":"constant","category":"rel","object":["a","b"]}"#)
            .unwrap();
        assert_eq!(c.tag(), CategoryTag::Rel);
        let v = c.truncation_json(2).unwrap();
        assert_eq!(v["levels"].as_array().unwrap().len(), 3);

        let h = AnyChain::from_json(
            r#"{"kind":"explicit","category":"fdhilb","dims":[1,2],
                "steps":[{"rows":2,"cols":1,"re":[1,0],"im":[0,0]}],"stable_from":1}"#,
        )
        .unwrap();
        assert_eq!(h.truncation_json(1).unwrap()["colimit"], 2);

        let q = AnyChain::from_json(r#"{"kind":"qkd-channel"}"#).unwrap();
        assert_eq!(q.truncation_json(2).unwrap()["colimit"], 16);

        assert!(AnyChain::from_json(r#"{"kind":"bogus"}"#).is_err());
    }

    #[test]
    fn symmetry_is_natural_in_both_instances() {
        let a = Carrier::from_atoms(&["a1", "a2"]);
        let b = Carrier::from_atoms(&["b"]);
        let s = Rel::symmetry(&a, &b);
        assert_eq!(
            Rel::compose(&Rel::symmetry(&b, &a), &s).unwrap(),
            Relation::identity(&a.product(&b))
        );
    }
}
