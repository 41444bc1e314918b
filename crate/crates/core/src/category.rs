//! Category-agnostic interface: composition, tensor, dagger and chosen
//! compact structure, plus the generic checks built on top of them
//! (snake equations, names and conames, the compact-level duals functor).
//!
//! Coherence isomorphisms are explicit morphisms supplied by each
//! category, so every composite below is a literal composite.

use std::fmt::Debug;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fdhilb::{FdHilb, FdMorphism};
use crate::rel::{Carrier, Rel, Relation};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CategoryTag {
    Rel,
    FdHilb,
}

impl CategoryTag {
    pub fn as_str(self) -> &'static str {
        match self {
            CategoryTag::Rel => "REL",
            CategoryTag::FdHilb => "FDHILB",
        }
    }
}

pub trait Category: Sized + Send + Sync + 'static {
    type Obj: Clone + PartialEq + Debug + Send + Sync;
    type Mor: Clone + Debug + Send + Sync;

    const TAG: CategoryTag;
    /// Equations are decided exactly rather than up to a tolerance.
    const EXACT: bool;

    fn source(f: &Self::Mor) -> Self::Obj;
    fn target(f: &Self::Mor) -> Self::Obj;
    fn identity(x: &Self::Obj) -> Self::Mor;
    /// `g ∘ f`.
    fn compose(g: &Self::Mor, f: &Self::Mor) -> Result<Self::Mor>;
    fn zero(source: &Self::Obj, target: &Self::Obj) -> Self::Mor;
    /// Distance between two parallel morphisms; `INFINITY` when not parallel.
    fn deviation(f: &Self::Mor, g: &Self::Mor) -> f64;
    fn is_iso(f: &Self::Mor) -> bool;
    fn describe(x: &Self::Obj) -> String;

    fn agrees(f: &Self::Mor, g: &Self::Mor, tol: f64) -> bool {
        let d = Self::deviation(f, g);
        if Self::EXACT {
            d == 0.0
        } else {
            d <= tol
        }
    }
}

pub trait DaggerMonoidal: Category {
    fn unit() -> Self::Obj;
    fn tensor_obj(a: &Self::Obj, b: &Self::Obj) -> Self::Obj;
    fn tensor(f: &Self::Mor, g: &Self::Mor) -> Self::Mor;
    fn dagger(f: &Self::Mor) -> Self::Mor;
    /// `(a ⊗ b) ⊗ c → a ⊗ (b ⊗ c)`
    fn associator(a: &Self::Obj, b: &Self::Obj, c: &Self::Obj) -> Self::Mor;
    /// `I ⊗ a → a`
    fn left_unitor(a: &Self::Obj) -> Self::Mor;
    /// `a ⊗ I → a`
    fn right_unitor(a: &Self::Obj) -> Self::Mor;
    /// `a ⊗ b → b ⊗ a`
    fn symmetry(a: &Self::Obj, b: &Self::Obj) -> Self::Mor;
}

/// A category with a chosen compact structure on every object.
pub trait CompactClosed: DaggerMonoidal {
    fn dual_obj(x: &Self::Obj) -> Self::Obj;
    fn compact_structure(x: &Self::Obj) -> CompactStructure<Self>;
}

/// Witness that `object` is compact with dual `dual`:
/// `eta: I → dual ⊗ object`, `epsilon: object ⊗ dual → I`.
#[derive(Clone, Debug)]
pub struct CompactStructure<C: Category> {
    pub object: C::Obj,
    pub dual: C::Obj,
    pub eta: C::Mor,
    pub epsilon: C::Mor,
}

/// Composes in diagrammatic order: `path(&[f, g, h]) = h ∘ g ∘ f`.
pub fn path<C: Category>(steps: &[C::Mor]) -> Result<C::Mor> {
    let (first, rest) = steps
        .split_first()
        .ok_or_else(|| Error::InvalidShape("empty composite".into()))?;
    rest.iter()
        .try_fold(first.clone(), |acc, next| C::compose(next, &acc))
}

fn expect_obj<C: Category>(what: &str, got: &C::Obj, want: &C::Obj) -> Result<()> {
    if got == want {
        Ok(())
    } else {
        Err(Error::IllTyped(format!(
            "{what}: got {}, expected {}",
            C::describe(got),
            C::describe(want)
        )))
    }
}

impl<C: DaggerMonoidal> CompactStructure<C> {
    fn validate(&self) -> Result<()> {
        let unit = C::unit();
        expect_obj::<C>("eta source", &C::source(&self.eta), &unit)?;
        expect_obj::<C>(
            "eta target",
            &C::target(&self.eta),
            &C::tensor_obj(&self.dual, &self.object),
        )?;
        expect_obj::<C>(
            "epsilon source",
            &C::source(&self.epsilon),
            &C::tensor_obj(&self.object, &self.dual),
        )?;
        expect_obj::<C>("epsilon target", &C::target(&self.epsilon), &unit)
    }

    /// `X → X⊗I → X⊗(X*⊗X) → (X⊗X*)⊗X → I⊗X → X`
    pub fn object_snake(&self) -> Result<C::Mor> {
        self.validate()?;
        let (x, xd) = (&self.object, &self.dual);
        path::<C>(&[
            C::dagger(&C::right_unitor(x)),
            C::tensor(&C::identity(x), &self.eta),
            C::dagger(&C::associator(x, xd, x)),
            C::tensor(&self.epsilon, &C::identity(x)),
            C::left_unitor(x),
        ])
    }

    /// `X* → I⊗X* → (X*⊗X)⊗X* → X*⊗(X⊗X*) → X*⊗I → X*`
    pub fn dual_snake(&self) -> Result<C::Mor> {
        self.validate()?;
        let (x, xd) = (&self.object, &self.dual);
        path::<C>(&[
            C::dagger(&C::left_unitor(xd)),
            C::tensor(&self.eta, &C::identity(xd)),
            C::associator(xd, x, xd),
            C::tensor(&C::identity(xd), &self.epsilon),
            C::right_unitor(xd),
        ])
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SnakeReport {
    pub passed: bool,
    pub object_deviation: f64,
    pub dual_deviation: f64,
}

impl SnakeReport {
    pub fn max_deviation(&self) -> f64 {
        self.object_deviation.max(self.dual_deviation)
    }
}

pub fn check_snake<C: DaggerMonoidal>(cs: &CompactStructure<C>, tol: f64) -> Result<SnakeReport> {
    let left = cs.object_snake()?;
    let right = cs.dual_snake()?;
    let id_x = C::identity(&cs.object);
    let id_xd = C::identity(&cs.dual);
    Ok(SnakeReport {
        passed: C::agrees(&left, &id_x, tol) && C::agrees(&right, &id_xd, tol),
        object_deviation: C::deviation(&left, &id_x),
        dual_deviation: C::deviation(&right, &id_xd),
    })
}

/// `⌜f⌝ = (id ⊗ f) ∘ η_X : I → X* ⊗ Y`
pub fn name<C: DaggerMonoidal>(f: &C::Mor, cs_x: &CompactStructure<C>) -> Result<C::Mor> {
    expect_obj::<C>("name: source of f", &C::source(f), &cs_x.object)?;
    C::compose(&C::tensor(&C::identity(&cs_x.dual), f), &cs_x.eta)
}

/// `⌞f⌟ = ε_Y ∘ (f ⊗ id) : X ⊗ Y* → I`
pub fn coname<C: DaggerMonoidal>(f: &C::Mor, cs_y: &CompactStructure<C>) -> Result<C::Mor> {
    expect_obj::<C>("coname: target of f", &C::target(f), &cs_y.object)?;
    C::compose(&cs_y.epsilon, &C::tensor(f, &C::identity(&cs_y.dual)))
}

/// Recovers `f: X → Y` from its name through the object snake.
pub fn unname<C: DaggerMonoidal>(
    named: &C::Mor,
    cs_x: &CompactStructure<C>,
    y: &C::Obj,
) -> Result<C::Mor> {
    let (x, xd) = (&cs_x.object, &cs_x.dual);
    expect_obj::<C>("unname: codomain", &C::target(named), &C::tensor_obj(xd, y))?;
    path::<C>(&[
        C::dagger(&C::right_unitor(x)),
        C::tensor(&C::identity(x), named),
        C::dagger(&C::associator(x, xd, y)),
        C::tensor(&cs_x.epsilon, &C::identity(y)),
        C::left_unitor(y),
    ])
}

/// Recovers `f: X → Y` from its coname.
pub fn unconame<C: DaggerMonoidal>(
    conamed: &C::Mor,
    cs_y: &CompactStructure<C>,
    x: &C::Obj,
) -> Result<C::Mor> {
    let (y, yd) = (&cs_y.object, &cs_y.dual);
    expect_obj::<C>(
        "unconame: domain",
        &C::source(conamed),
        &C::tensor_obj(x, yd),
    )?;
    path::<C>(&[
        C::dagger(&C::right_unitor(x)),
        C::tensor(&C::identity(x), &cs_y.eta),
        C::dagger(&C::associator(x, yd, y)),
        C::tensor(conamed, &C::identity(y)),
        C::left_unitor(y),
    ])
}

/// The dual `f*: Y* → X*` of a morphism between compact objects:
///
/// `Y* → Y*⊗I → Y*⊗(X⊗X*) → Y*⊗(Y⊗X*) → (Y*⊗Y)⊗X* → I⊗X* → X*`
///
/// The unit and counit are pre/post-composed with the symmetry so that
/// they have the types the middle stages need.
pub fn dual_compact<C: DaggerMonoidal>(
    f: &C::Mor,
    cs_x: &CompactStructure<C>,
    cs_y: &CompactStructure<C>,
) -> Result<C::Mor> {
    expect_obj::<C>("dual: source of f", &C::source(f), &cs_x.object)?;
    expect_obj::<C>("dual: target of f", &C::target(f), &cs_y.object)?;
    let (x, xd) = (&cs_x.object, &cs_x.dual);
    let (y, yd) = (&cs_y.object, &cs_y.dual);
    let eta_swapped = C::compose(&C::symmetry(xd, x), &cs_x.eta)?;
    let eps_swapped = C::compose(&cs_y.epsilon, &C::symmetry(yd, y))?;
    path::<C>(&[
        C::dagger(&C::right_unitor(yd)),
        C::tensor(&C::identity(yd), &eta_swapped),
        C::tensor(&C::identity(yd), &C::tensor(f, &C::identity(xd))),
        C::dagger(&C::associator(yd, y, xd)),
        C::tensor(&eps_swapped, &C::identity(xd)),
        C::left_unitor(xd),
    ])
}

/// `f_* = (f*)†`, the covariant conjugation functor.
pub fn conjugate<C: DaggerMonoidal>(
    f: &C::Mor,
    cs_x: &CompactStructure<C>,
    cs_y: &CompactStructure<C>,
) -> Result<C::Mor> {
    Ok(C::dagger(&dual_compact(f, cs_x, cs_y)?))
}

/// [`dual_compact`] with the category's chosen compact structures.
pub fn dual_of<C: CompactClosed>(f: &C::Mor) -> Result<C::Mor> {
    dual_compact(
        f,
        &C::compact_structure(&C::source(f)),
        &C::compact_structure(&C::target(f)),
    )
}

pub fn conjugate_of<C: CompactClosed>(f: &C::Mor) -> Result<C::Mor> {
    Ok(C::dagger(&dual_of::<C>(f)?))
}

pub fn name_of<C: CompactClosed>(f: &C::Mor) -> Result<C::Mor> {
    name(f, &C::compact_structure(&C::source(f)))
}

// Tagged objects and morphisms for callers that only know the category
// at run time (JSON, CLI, Python).

#[derive(Clone, Debug, PartialEq)]
pub enum Object {
    Rel(Carrier),
    FdHilb(usize),
}

#[derive(Clone, Debug, PartialEq)]
pub enum Morphism {
    Rel(Relation),
    FdHilb(FdMorphism),
}

impl Object {
    pub fn tag(&self) -> CategoryTag {
        match self {
            Object::Rel(_) => CategoryTag::Rel,
            Object::FdHilb(_) => CategoryTag::FdHilb,
        }
    }

    pub fn unit(tag: CategoryTag) -> Object {
        match tag {
            CategoryTag::Rel => Object::Rel(Rel::unit()),
            CategoryTag::FdHilb => Object::FdHilb(1),
        }
    }
}

impl Morphism {
    pub fn tag(&self) -> CategoryTag {
        match self {
            Morphism::Rel(_) => CategoryTag::Rel,
            Morphism::FdHilb(_) => CategoryTag::FdHilb,
        }
    }

    pub fn source(&self) -> Object {
        match self {
            Morphism::Rel(r) => Object::Rel(Rel::source(r)),
            Morphism::FdHilb(m) => Object::FdHilb(FdHilb::source(m)),
        }
    }

    pub fn target(&self) -> Object {
        match self {
            Morphism::Rel(r) => Object::Rel(Rel::target(r)),
            Morphism::FdHilb(m) => Object::FdHilb(FdHilb::target(m)),
        }
    }

    pub fn identity(x: &Object) -> Morphism {
        match x {
            Object::Rel(c) => Morphism::Rel(Rel::identity(c)),
            Object::FdHilb(d) => Morphism::FdHilb(FdHilb::identity(d)),
        }
    }

    /// `self ∘ f`
    pub fn after(&self, f: &Morphism) -> Result<Morphism> {
        match (self, f) {
            (Morphism::Rel(g), Morphism::Rel(f)) => Ok(Morphism::Rel(Rel::compose(g, f)?)),
            (Morphism::FdHilb(g), Morphism::FdHilb(f)) => {
                Ok(Morphism::FdHilb(FdHilb::compose(g, f)?))
            }
            _ => Err(tag_mismatch(self.tag(), f.tag())),
        }
    }

    pub fn tensor(&self, other: &Morphism) -> Result<Morphism> {
        match (self, other) {
            (Morphism::Rel(f), Morphism::Rel(g)) => Ok(Morphism::Rel(Rel::tensor(f, g))),
            (Morphism::FdHilb(f), Morphism::FdHilb(g)) => {
                Ok(Morphism::FdHilb(FdHilb::tensor(f, g)))
            }
            _ => Err(tag_mismatch(self.tag(), other.tag())),
        }
    }

    pub fn dagger(&self) -> Morphism {
        match self {
            Morphism::Rel(r) => Morphism::Rel(Rel::dagger(r)),
            Morphism::FdHilb(m) => Morphism::FdHilb(FdHilb::dagger(m)),
        }
    }

    pub fn dual(&self) -> Result<Morphism> {
        match self {
            Morphism::Rel(r) => Ok(Morphism::Rel(dual_of::<Rel>(r)?)),
            Morphism::FdHilb(m) => Ok(Morphism::FdHilb(dual_of::<FdHilb>(m)?)),
        }
    }

    pub fn conjugate(&self) -> Result<Morphism> {
        Ok(self.dual()?.dagger())
    }

    pub fn deviation(&self, other: &Morphism) -> f64 {
        match (self, other) {
            (Morphism::Rel(f), Morphism::Rel(g)) => Rel::deviation(f, g),
            (Morphism::FdHilb(f), Morphism::FdHilb(g)) => FdHilb::deviation(f, g),
            _ => f64::INFINITY,
        }
    }
}

fn tag_mismatch(left: CategoryTag, right: CategoryTag) -> Error {
    Error::TagMismatch {
        left: left.as_str(),
        right: right.as_str(),
    }
}

/// `g ∘ f` on tagged morphisms.
pub fn compose(g: &Morphism, f: &Morphism) -> Result<Morphism> {
    g.after(f)
}

pub fn tensor(f: &Morphism, g: &Morphism) -> Result<Morphism> {
    f.tensor(g)
}

pub fn dagger(f: &Morphism) -> Morphism {
    f.dagger()
}
