//! Named property suites. The CLI runs them with default sizes; the
//! acceptance tests call the same checks with pinned sizes.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::accessible::{
    dual_diagram, extend_dual, factor_through_colimit, is_cone, truncate, Accessible, ChainDiagram,
    EpiMono, FactorisationSystem, RelFunctional, Trivial, Truncation,
};
use crate::category::{check_snake, coname, dual_of, name, unconame, unname, Category};
use crate::error::{Error, Result};
use crate::fdhilb::{
    check_classical, check_pvm, classical_structure, hilb_diagonal_fill, hilb_factor, hilb_in_e,
    hilb_in_m, ClassicalStructure, FdHilb, FdMorphism, HilbSquare, PVSpectrum, C64,
};
use crate::gen;
use crate::qkd::{
    attach, check_correctness_theorem, chsh_analytic, chsh_estimate, draw_isomorphism, peel,
    run_batch, sift_set, BellSource, ChshSettings, ProtocolConfig, ProtocolTranscript,
};
use crate::rel::{
    rel_diagonal_fill, rel_factor, rel_graph_fill, rel_in_e, rel_in_m, Carrier, FillCount, Rel,
    RelSquare, Relation,
};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub instances: usize,
    pub failures: usize,
    pub max_deviation: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunReport {
    pub suite: String,
    pub seed: u64,
    pub tol: f64,
    pub passed: bool,
    pub checks: Vec<CheckResult>,
    /// Singlet CHSH estimate, present when the suite runs a Bell test.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub chsh: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub wall_time_ms: Option<u64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Suite {
    All,
    Compact,
    Factorisation,
    Accessible,
    Classical,
    Qkd,
}

impl Suite {
    pub const NAMES: [&'static str; 6] = [
        "all",
        "compact",
        "factorisation",
        "accessible",
        "classical",
        "qkd",
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Suite::All => "all",
            Suite::Compact => "compact",
            Suite::Factorisation => "factorisation",
            Suite::Accessible => "accessible",
            Suite::Classical => "classical",
            Suite::Qkd => "qkd",
        }
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Suite> {
        Ok(match s {
            "all" => Suite::All,
            "compact" => Suite::Compact,
            "factorisation" => Suite::Factorisation,
            "accessible" => Suite::Accessible,
            "classical" => Suite::Classical,
            "qkd" => Suite::Qkd,
            _ => {
                return Err(Error::Config(format!(
                    "unknown suite {s:?}, expected one of {}",
                    Suite::NAMES.join(", ")
                )))
            }
        })
    }
}

/// A generator for one named check, independent of the other checks.
pub fn check_rng(seed: u64, check: &str) -> ChaCha8Rng {
    // FNV-1a
    let hash = check.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| {
        (h ^ b as u64).wrapping_mul(0x0100_0000_01b3)
    });
    ChaCha8Rng::seed_from_u64(seed ^ hash)
}

/// Accumulates per-instance outcomes into a [`CheckResult`].
#[derive(Debug)]
pub struct Tally {
    name: String,
    instances: usize,
    failures: usize,
    max_deviation: f64,
    first_error: Option<String>,
}

impl Tally {
    pub fn new(name: &str) -> Self {
        Tally {
            name: name.to_owned(),
            instances: 0,
            failures: 0,
            max_deviation: 0.0,
            first_error: None,
        }
    }

    pub fn record(&mut self, deviation: f64, ok: bool) {
        self.instances += 1;
        if deviation.is_finite() {
            self.max_deviation = self.max_deviation.max(deviation);
        }
        if !ok {
            self.failures += 1;
        }
    }

    pub fn outcome(&mut self, r: Result<(f64, bool)>) {
        match r {
            Ok((d, ok)) => self.record(d, ok),
            Err(e) => {
                self.record(f64::INFINITY, false);
                self.first_error.get_or_insert_with(|| e.to_string());
            }
        }
    }

    pub fn finish(self) -> CheckResult {
        CheckResult {
            passed: self.failures == 0 && self.instances > 0,
            name: self.name,
            instances: self.instances,
            failures: self.failures,
            max_deviation: self.max_deviation,
            note: self.first_error,
        }
    }
}

/// Random instances of a category for the generic law checks.
pub trait Sample: Accessible {
    /// Smallest object size the checks draw.
    const MIN_SIZE: usize;
    fn sized(prefix: &str, n: usize) -> Self::Obj;
    fn object(rng: &mut ChaCha8Rng, prefix: &str, max: usize) -> Self::Obj {
        Self::sized(prefix, rng.random_range(Self::MIN_SIZE..=max))
    }
    fn morphism(rng: &mut ChaCha8Rng, source: &Self::Obj, target: &Self::Obj) -> Self::Mor;
    /// A truncated chain of the kind the accessible layer expects.
    fn chain(rng: &mut ChaCha8Rng, prefix: &str) -> Result<Truncation<Self>>;
    /// The dual computed without compact structure: converse or transpose.
    fn direct_dual(f: &Self::Mor) -> Self::Mor;
    fn system() -> Box<dyn FactorisationSystem<Self>>;
}

impl Sample for Rel {
    const MIN_SIZE: usize = 0;

    fn sized(prefix: &str, n: usize) -> Carrier {
        gen::carrier(prefix, n)
    }

    fn morphism(rng: &mut ChaCha8Rng, source: &Carrier, target: &Carrier) -> Relation {
        gen::relation(rng, source, target, 0.4)
    }

    fn chain(rng: &mut ChaCha8Rng, prefix: &str) -> Result<Truncation<Rel>> {
        gen::rel_function_chain(rng, prefix, 4, 4)
    }

    fn direct_dual(f: &Relation) -> Relation {
        f.converse()
    }

    fn system() -> Box<dyn FactorisationSystem<Rel>> {
        Box::new(RelFunctional)
    }
}

impl Sample for FdHilb {
    const MIN_SIZE: usize = 1;

    fn sized(_: &str, n: usize) -> usize {
        n
    }

    fn morphism(rng: &mut ChaCha8Rng, source: &usize, target: &usize) -> FdMorphism {
        gen::matrix(rng, *target, *source)
    }

    fn chain(rng: &mut ChaCha8Rng, _: &str) -> Result<Truncation<FdHilb>> {
        gen::hilb_stable_chain(rng, 4, 6)
    }

    fn direct_dual(f: &FdMorphism) -> FdMorphism {
        f.transpose()
    }

    fn system() -> Box<dyn FactorisationSystem<FdHilb>> {
        Box::new(EpiMono)
    }
}

fn label<C: Category>(check: &str) -> String {
    format!("{}/{check}", C::TAG.as_str().to_lowercase())
}

// ---- compact structure ----

/// Snake equations on every object of size `MIN_SIZE..=max`.
pub fn snake<C: Sample>(max: usize, tol: f64) -> CheckResult {
    let mut t = Tally::new(&label::<C>("snake"));
    for size in C::MIN_SIZE..=max {
        let cs = C::compact_structure(&C::sized("s", size));
        t.outcome(check_snake(&cs, tol).map(|r| (r.max_deviation(), r.passed)));
    }
    t.finish()
}

/// `(id ⊗ g) ∘ ⌜f⌝ = ⌜g ∘ f⌝`
pub fn absorption<C: Sample>(seed: u64, count: usize, max: usize, tol: f64) -> CheckResult {
    let check = label::<C>("absorption");
    let mut t = Tally::new(&check);
    let mut rng = check_rng(seed, &check);
    for _ in 0..count {
        let x = C::object(&mut rng, "x", max);
        let y = C::object(&mut rng, "y", max);
        let z = C::object(&mut rng, "z", max);
        let f = C::morphism(&mut rng, &x, &y);
        let g = C::morphism(&mut rng, &y, &z);
        t.outcome((|| {
            let cs = C::compact_structure(&x);
            let lhs = C::compose(&C::tensor(&C::identity(&cs.dual), &g), &name(&f, &cs)?)?;
            let rhs = name(&C::compose(&g, &f)?, &cs)?;
            let d = C::deviation(&lhs, &rhs);
            Ok((d, C::agrees(&lhs, &rhs, tol)))
        })());
    }
    t.finish()
}

/// `f` is recovered from its name and from its coname.
pub fn name_round_trip<C: Sample>(seed: u64, count: usize, max: usize, tol: f64) -> CheckResult {
    let check = label::<C>("name-round-trip");
    let mut t = Tally::new(&check);
    let mut rng = check_rng(seed, &check);
    for _ in 0..count {
        let x = C::object(&mut rng, "x", max);
        let y = C::object(&mut rng, "y", max);
        let f = C::morphism(&mut rng, &x, &y);
        t.outcome((|| {
            let back = unname(
                &name(&f, &C::compact_structure(&x))?,
                &C::compact_structure(&x),
                &y,
            )?;
            let cs_y = C::compact_structure(&y);
            let co = unconame(&coname(&f, &cs_y)?, &cs_y, &x)?;
            let d = C::deviation(&back, &f).max(C::deviation(&co, &f));
            Ok((d, C::agrees(&back, &f, tol) && C::agrees(&co, &f, tol)))
        })());
    }
    t.finish()
}

/// The compact dual against the direct oracle, and `(g∘f)* = f*∘g*`,
/// `f†* = f*†` on compact objects.
pub fn dual_laws<C: Sample>(seed: u64, count: usize, max: usize, tol: f64) -> CheckResult {
    let check = label::<C>("dual-laws");
    let mut t = Tally::new(&check);
    let mut rng = check_rng(seed, &check);
    for _ in 0..count {
        let x = C::object(&mut rng, "x", max);
        let y = C::object(&mut rng, "y", max);
        let z = C::object(&mut rng, "z", max);
        let f = C::morphism(&mut rng, &x, &y);
        let g = C::morphism(&mut rng, &y, &z);
        t.outcome((|| {
            let fs = dual_of::<C>(&f)?;
            let pairs = [
                (fs.clone(), C::direct_dual(&f)),
                (
                    dual_of::<C>(&C::compose(&g, &f)?)?,
                    C::compose(&fs, &dual_of::<C>(&g)?)?,
                ),
                (dual_of::<C>(&C::dagger(&f))?, C::dagger(&fs)),
            ];
            Ok(worst::<C>(&pairs, tol))
        })());
    }
    t.finish()
}

/// `f†† = f`, `(g∘f)† = f†∘g†`, `(f⊗g)† = f†⊗g†`.
pub fn dagger_laws<C: Sample>(seed: u64, count: usize, max: usize, tol: f64) -> CheckResult {
    let check = label::<C>("dagger-laws");
    let mut t = Tally::new(&check);
    let mut rng = check_rng(seed, &check);
    for _ in 0..count {
        let x = C::object(&mut rng, "x", max);
        let y = C::object(&mut rng, "y", max);
        let z = C::object(&mut rng, "z", max);
        let f = C::morphism(&mut rng, &x, &y);
        let g = C::morphism(&mut rng, &y, &z);
        t.outcome((|| {
            let pairs = [
                (C::dagger(&C::dagger(&f)), f.clone()),
                (
                    C::dagger(&C::compose(&g, &f)?),
                    C::compose(&C::dagger(&f), &C::dagger(&g))?,
                ),
                (
                    C::dagger(&C::tensor(&f, &g)),
                    C::tensor(&C::dagger(&f), &C::dagger(&g)),
                ),
            ];
            Ok(worst::<C>(&pairs, tol))
        })());
    }
    t.finish()
}

fn worst<C: Category>(pairs: &[(C::Mor, C::Mor)], tol: f64) -> (f64, bool) {
    pairs.iter().fold((0.0, true), |(d, ok), (a, b)| {
        (d.max(C::deviation(a, b)), ok && C::agrees(a, b, tol))
    })
}

// ---- factorisation ----

/// `R = m ∘ e` with `e ∈ E`, `m ∈ M`, on random relations.
pub fn rel_factorisation(seed: u64, count: usize, max: usize) -> CheckResult {
    let check = "rel/factorisation";
    let mut t = Tally::new(check);
    let mut rng = check_rng(seed, check);
    for _ in 0..count {
        let x = Rel::object(&mut rng, "x", max);
        let y = Rel::object(&mut rng, "y", max);
        let r = Rel::morphism(&mut rng, &x, &y);
        let fac = rel_factor(&r);
        t.outcome(fac.e.then(&fac.m).map(|back| {
            let d = back.symmetric_difference_len(&r) as f64;
            (d, d == 0.0 && rel_in_e(&fac.e) && rel_in_m(&fac.m))
        }));
    }
    t.finish()
}

/// All relations between `a` and `b`, with their adjacency bitmask
/// (bit `i·|b| + j` for the pair `(a_i, b_j)`).
fn all_relations(a: &Carrier, b: &Carrier) -> Vec<(u32, Relation)> {
    let xs: Vec<_> = a.iter().cloned().collect();
    let ys: Vec<_> = b.iter().cloned().collect();
    let cells = xs.len() * ys.len();
    (0..1u32 << cells)
        .map(|mask| {
            let pairs = (0..cells)
                .filter(|k| mask >> k & 1 == 1)
                .map(|k| (xs[k / ys.len()].clone(), ys[k % ys.len()].clone()));
            (
                mask,
                Relation::new(a.clone(), b.clone(), pairs).expect("pairs from carriers"),
            )
        })
        .collect()
}

/// `g ∘ f` on bitmasks, `f: a → b`, `g: b → c`.
fn compose_mask(f: u32, g: u32, a: usize, b: usize, c: usize) -> u32 {
    let mut out = 0;
    for i in 0..a {
        for j in 0..b {
            if f >> (i * b + j) & 1 == 1 {
                for k in 0..c {
                    if g >> (j * c + k) & 1 == 1 {
                        out |= 1 << (i * c + k);
                    }
                }
            }
        }
    }
    out
}

/// Outcome of the exhaustive square search.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FillSearch {
    /// The graph-formula fill exists and makes both triangles commute.
    pub exists: CheckResult,
    /// Exactly one fill per square.
    pub unique: CheckResult,
}

/// Every square `v ∘ R = R' ∘ u` over carriers of size `0..=max_side`
/// with `|X||Y|, |X'||Y'| ≤ max_cells`, factored canonically on both
/// rows.
pub fn rel_fill_exhaustive(max_side: usize, max_cells: usize) -> FillSearch {
    let mut exists = Tally::new("rel/fill-exists");
    let mut unique = Tally::new("rel/fill-unique");
    let mut example = None;
    let sizes: Vec<(usize, usize)> = (0..=max_side)
        .flat_map(|a| (0..=max_side).map(move |b| (a, b)))
        .filter(|(a, b)| a * b <= max_cells)
        .collect();
    for &(nx, ny) in &sizes {
        for &(nxp, nyp) in &sizes {
            let (x, y) = (gen::carrier("x", nx), gen::carrier("y", ny));
            let (xp, yp) = (gen::carrier("p", nxp), gen::carrier("q", nyp));
            let rs = all_relations(&x, &y);
            let rps = all_relations(&xp, &yp);
            let us = all_relations(&x, &xp);
            let vs = all_relations(&y, &yp);
            for (rm, r) in &rs {
                for (rpm, rp) in &rps {
                    for (um, u) in &us {
                        let rhs = compose_mask(*um, *rpm, nx, nxp, nyp);
                        for (vm, v) in &vs {
                            if compose_mask(*rm, *vm, nx, ny, nyp) != rhs {
                                continue;
                            }
                            let sq = RelSquare::from_factorisations(r, rp, u.clone(), v.clone());
                            exists.outcome(rel_diagonal_fill(&sq).and_then(|w| {
                                let formula = rel_graph_fill(r, rp, u, v)?;
                                let d = w.symmetric_difference_len(&formula) as f64;
                                Ok((d, d == 0.0 && sq.is_fill(&w)?))
                            }));
                            let count = sq.fill_count();
                            if matches!(count, Ok(FillCount::Multiple)) && example.is_none() {
                                example = Some(format!("R={r:?}, R'={rp:?}, U={u:?}, V={v:?}"));
                            }
                            unique.outcome(count.map(|c| (0.0, c == FillCount::Unique)));
                        }
                    }
                }
            }
        }
    }
    let mut unique = unique.finish();
    if unique.failures > 0 {
        unique.note = Some(format!(
            "{} of {} squares admit several fills; first: {}",
            unique.failures,
            unique.instances,
            example.unwrap_or_default()
        ));
    }
    FillSearch {
        exists: exists.finish(),
        unique,
    }
}

/// `f = m ∘ e` with `e` surjective and `m` injective.
pub fn hilb_factorisation(seed: u64, count: usize, max: usize, tol: f64) -> CheckResult {
    let check = "fdhilb/factorisation";
    let mut t = Tally::new(check);
    let mut rng = check_rng(seed, check);
    for _ in 0..count {
        let (rows, cols, inner) = (
            rng.random_range(1..=max),
            rng.random_range(1..=max),
            rng.random_range(1..=max),
        );
        // A product through a random inner dimension has random rank.
        let f = gen::matrix(&mut rng, rows, inner)
            .matmul(&gen::matrix(&mut rng, inner, cols))
            .expect("shapes agree");
        let fac = hilb_factor(&f);
        t.outcome(fac.m.matmul(&fac.e).map(|back| {
            let d = back.max_abs_diff(&f);
            (d, d <= tol && hilb_in_e(&fac.e) && hilb_in_m(&fac.m))
        }));
    }
    t.finish()
}

/// Commuting squares built as `v = R' u R⁺` over injective `R` admit the
/// fill `w = m'⁺ v m`.
pub fn hilb_fill(seed: u64, count: usize, max: usize, tol: f64) -> CheckResult {
    let check = "fdhilb/fill";
    let mut t = Tally::new(check);
    let mut rng = check_rng(seed, check);
    for _ in 0..count {
        let nx = rng.random_range(1..=max);
        let ny = rng.random_range(nx..=max);
        let nxp = rng.random_range(1..=max);
        let nyp = rng.random_range(1..=max);
        let r = gen::injective(&mut rng, ny, nx);
        let rp = gen::matrix(&mut rng, nyp, nxp);
        let u = gen::matrix(&mut rng, nxp, nx);
        t.outcome((|| {
            let v = rp.matmul(&u)?.matmul(&r.pinv(crate::fdhilb::RANK_TOL))?;
            let (top, bottom) = (hilb_factor(&r), hilb_factor(&rp));
            let sq = HilbSquare {
                e: top.e,
                m: top.m,
                e_prime: bottom.e,
                m_prime: bottom.m,
                u,
                v,
            };
            let fill = hilb_diagonal_fill(&sq, 1e-8)?;
            Ok((fill.residual, fill.residual <= tol))
        })());
    }
    t.finish()
}

// ---- accessible ----

fn random_between<C: Sample>(rng: &mut ChaCha8Rng, a: &Truncation<C>, b: &Truncation<C>) -> C::Mor {
    C::morphism(rng, &a.colimit.vertex, &b.colimit.vertex)
}

/// `extend_dual(f)` against the direct dual on the truncated colimits.
pub fn extend_dual_oracle<C: Sample>(seed: u64, count: usize, tol: f64) -> CheckResult {
    let check = label::<C>("extend-dual-oracle");
    let mut t = Tally::new(&check);
    let mut rng = check_rng(seed, &check);
    let system = C::system();
    for _ in 0..count {
        t.outcome((|| {
            let (a, b) = (C::chain(&mut rng, "a")?, C::chain(&mut rng, "b")?);
            let f = random_between(&mut rng, &a, &b);
            let star = extend_dual(&f, &a, &b, system.as_ref(), tol)?;
            let direct = C::direct_dual(&f);
            Ok((C::deviation(&star, &direct), C::agrees(&star, &direct, tol)))
        })());
    }
    t.finish()
}

/// `(g ∘ f)* = f* ∘ g*`
pub fn functoriality<C: Sample>(seed: u64, count: usize, tol: f64) -> CheckResult {
    let check = label::<C>("functoriality");
    let mut t = Tally::new(&check);
    let mut rng = check_rng(seed, &check);
    let system = C::system();
    for _ in 0..count {
        t.outcome((|| {
            let a = C::chain(&mut rng, "a")?;
            let b = C::chain(&mut rng, "b")?;
            let c = C::chain(&mut rng, "c")?;
            let f = random_between(&mut rng, &a, &b);
            let g = random_between(&mut rng, &b, &c);
            let s = system.as_ref();
            let lhs = extend_dual(&C::compose(&g, &f)?, &a, &c, s, tol)?;
            let rhs = C::compose(
                &extend_dual(&f, &a, &b, s, tol)?,
                &extend_dual(&g, &b, &c, s, tol)?,
            )?;
            Ok((C::deviation(&lhs, &rhs), C::agrees(&lhs, &rhs, tol)))
        })());
    }
    t.finish()
}

/// `(f†)* = (f*)†`
pub fn dagger_star<C: Sample>(seed: u64, count: usize, tol: f64) -> CheckResult {
    let check = label::<C>("dagger-star");
    let mut t = Tally::new(&check);
    let mut rng = check_rng(seed, &check);
    let system = C::system();
    for _ in 0..count {
        t.outcome((|| {
            let (a, b) = (C::chain(&mut rng, "a")?, C::chain(&mut rng, "b")?);
            let f = random_between(&mut rng, &a, &b);
            let s = system.as_ref();
            let lhs = extend_dual(&C::dagger(&f), &b, &a, s, tol)?;
            let rhs = C::dagger(&extend_dual(&f, &a, &b, s, tol)?);
            Ok((C::deviation(&lhs, &rhs), C::agrees(&lhs, &rhs, tol)))
        })());
    }
    t.finish()
}

/// The canonical and trivial factorisation systems give the same `f*`.
pub fn independence(seed: u64, count: usize) -> CheckResult {
    let check = "rel/independence";
    let mut t = Tally::new(check);
    let mut rng = check_rng(seed, check);
    for _ in 0..count {
        t.outcome((|| {
            let (a, b) = (Rel::chain(&mut rng, "a")?, Rel::chain(&mut rng, "b")?);
            let f = random_between(&mut rng, &a, &b);
            let canonical = extend_dual(&f, &a, &b, &RelFunctional, 0.0)?;
            let trivial = extend_dual(&f, &a, &b, &Trivial, 0.0)?;
            let d = canonical.symmetric_difference_len(&trivial) as f64;
            Ok((d, d == 0.0))
        })());
    }
    t.finish()
}

/// On constant chains the extended dual is the compact dual.
pub fn single_object<C: Sample>(seed: u64, count: usize, max: usize, tol: f64) -> CheckResult {
    let check = label::<C>("single-object");
    let mut t = Tally::new(&check);
    let mut rng = check_rng(seed, &check);
    let system = C::system();
    for _ in 0..count {
        let x = C::object(&mut rng, "x", max);
        let y = C::object(&mut rng, "y", max);
        let depth = rng.random_range(0..=3);
        t.outcome((|| {
            let a = truncate(&ChainDiagram::<C>::constant(x.clone()), depth)?;
            let b = truncate(&ChainDiagram::<C>::constant(y.clone()), depth)?;
            let f = random_between(&mut rng, &a, &b);
            let star = extend_dual(&f, &a, &b, system.as_ref(), tol)?;
            let compact = dual_of::<C>(&f)?;
            Ok((
                C::deviation(&star, &compact),
                C::agrees(&star, &compact, tol),
            ))
        })());
    }
    t.finish()
}

/// The dual of a colimit cocone is a limit cone of the dual diagram with
/// legs the levelwise duals.
pub fn star_preserves_colimits<C: Sample>(seed: u64, count: usize, tol: f64) -> CheckResult {
    let check = label::<C>("star-preserves-colimits");
    let mut t = Tally::new(&check);
    let mut rng = check_rng(seed, &check);
    for _ in 0..count {
        t.outcome((|| {
            let a = C::chain(&mut rng, "a")?;
            let d = dual_diagram(&a)?;
            let cone = is_cone::<C>(&d.steps, &d.limit.legs, tol)?;
            let mut worst_leg: f64 = 0.0;
            let mut ok = cone;
            for (leg, limit_leg) in a.colimit.legs.iter().zip(&d.limit.legs) {
                let dual = dual_of::<C>(leg)?;
                worst_leg = worst_leg.max(C::deviation(&dual, limit_leg));
                ok &= C::agrees(&dual, limit_leg, tol);
            }
            Ok((worst_leg, ok))
        })());
    }
    t.finish()
}

/// An `M`-map from a compact object into the colimit, built through some
/// level `j`, factors through a level `≤ j` essentially uniquely.
pub fn compact_presentability<C: Sample>(seed: u64, count: usize, tol: f64) -> CheckResult
where
    C: MSample,
{
    let check = label::<C>("compact-presentability");
    let mut t = Tally::new(&check);
    let mut rng = check_rng(seed, &check);
    let system = C::system();
    for _ in 0..count {
        t.outcome((|| {
            let a = C::chain(&mut rng, "a")?;
            let j = rng.random_range(0..=a.depth);
            let n = C::m_into(&mut rng, &a.objects[j]);
            let m = C::compose(&a.colimit.legs[j], &n)?;
            let Some(found) = factor_through_colimit(&m, &a, system.as_ref(), tol)? else {
                return Ok((f64::INFINITY, false));
            };
            let back = C::compose(&a.colimit.legs[found.level], &found.n)?;
            let d = C::deviation(&back, &m);
            Ok((
                d,
                found.level <= j && found.essentially_unique && C::agrees(&back, &m, tol),
            ))
        })());
    }
    t.finish()
}

/// Random members of the canonical `M` class with a given target.
pub trait MSample: Sample {
    fn m_into(rng: &mut ChaCha8Rng, target: &Self::Obj) -> Self::Mor;
}

impl MSample for Rel {
    fn m_into(rng: &mut ChaCha8Rng, target: &Carrier) -> Relation {
        let source = gen::carrier(
            "k",
            if target.is_empty() {
                0
            } else {
                rng.random_range(0..=3)
            },
        );
        gen::function(rng, &source, target)
    }
}

impl MSample for FdHilb {
    fn m_into(rng: &mut ChaCha8Rng, target: &usize) -> FdMorphism {
        let cols = rng.random_range(1..=*target);
        gen::injective(rng, *target, cols)
    }
}

// ---- classical ----

/// The copy structures on `C^1 … C^max`, plus a random basis change of
/// each: comonoid laws, snake for `η = δ∘ε†`, and `σ∘ε_c† = η`.
pub fn classical(seed: u64, max: usize, tol: f64) -> CheckResult {
    let check = "fdhilb/classical";
    let mut t = Tally::new(check);
    let mut rng = check_rng(seed, check);
    for dim in 1..=max {
        let std = classical_structure(dim);
        let rotated = ClassicalStructure::in_basis(&gen::unitary(&mut rng, dim), 1e-10);
        for cs in [std, rotated] {
            t.outcome(cs.and_then(|cs| {
                let laws = check_classical(&cs, tol);
                let snake = check_snake(&cs.induced_compact(), tol)?;
                let sym = cs.dagger_symmetry_deviation();
                let d = laws.max_deviation().max(snake.max_deviation()).max(sym);
                Ok((d, laws.passed && snake.passed && sym <= tol))
            }));
        }
    }
    t.finish()
}

/// Random coisometries pass the PVM check; a rescaled one fails it.
pub fn pvm(seed: u64, count: usize, max: usize, tol: f64) -> CheckResult {
    let check = "fdhilb/pvm";
    let mut t = Tally::new(check);
    let mut rng = check_rng(seed, check);
    for _ in 0..count {
        let rows = rng.random_range(1..=max);
        let cols = rng.random_range(rows..=max);
        let p = gen::coisometry(&mut rng, rows, cols);
        let good = check_pvm(&p, tol);
        let bad = check_pvm(&p.scale(C64::new(2.0, 0.0)), tol);
        t.record(good.deviation, good.passed && !bad.passed);
    }
    t.finish()
}

// ---- qkd ----

/// Both composites of the key-agreement square equal `ε†` for random
/// coisometric measurements.
pub fn correctness_theorem(seed: u64, count: usize, max: usize, tol: f64) -> CheckResult {
    let check = "qkd/correctness-theorem";
    let mut t = Tally::new(check);
    let mut rng = check_rng(seed, check);
    for _ in 0..count {
        let rows = rng.random_range(1..=max);
        let cols = rng.random_range(rows..=max);
        let p = gen::coisometry(&mut rng, rows, cols);
        t.outcome(PVSpectrum::new(p, 1e-10).and_then(|m| {
            let r = check_correctness_theorem(&m, tol)?;
            Ok((r.max_deviation(), r.passed))
        }));
    }
    t.finish()
}

/// Transcripts of `runs` seeded protocol runs for each `n`.
pub fn protocol_runs(
    seed: u64,
    runs: usize,
    ns: &[usize],
    max_rounds: usize,
) -> Vec<(usize, Vec<Result<ProtocolTranscript>>)> {
    ns.iter()
        .map(|&n| {
            let cfg = ProtocolConfig {
                n,
                seed: seed.wrapping_add(n as u64),
                max_rounds,
                ..ProtocolConfig::default()
            };
            (n, run_batch(&cfg, runs))
        })
        .collect()
}

fn transcript_of(r: &Result<ProtocolTranscript>) -> Option<&ProtocolTranscript> {
    match r {
        Ok(t) => Some(t),
        Err(Error::NonTermination { transcript, .. }) => Some(transcript),
        Err(_) => None,
    }
}

/// Alice's key equals Bob's in every terminating run. The termination
/// rate per `n` goes in the note.
pub fn protocol_agreement(batches: &[(usize, Vec<Result<ProtocolTranscript>>)]) -> CheckResult {
    let mut t = Tally::new("qkd/protocol-agreement");
    let mut rates = Vec::new();
    for (n, runs) in batches {
        let mut terminated = 0;
        for r in runs {
            match r {
                Ok(tr) => {
                    terminated += 1;
                    t.record(
                        0.0,
                        tr.keys_agree() && tr.key_alice.len() == tr.key_indices().len(),
                    );
                }
                Err(Error::NonTermination { .. }) => {}
                Err(e) => t.outcome(Err(Error::Config(e.to_string()))),
            }
        }
        rates.push(format!("n={n}: {terminated}/{} terminated", runs.len()));
    }
    let mut result = t.finish();
    result.note = Some(match result.note.take() {
        Some(e) => format!("{}; {e}", rates.join(", ")),
        None => rates.join(", "),
    });
    result
}

/// Fraction of runs that terminate, required to exceed `threshold` for
/// each `n`. With uniform independent choices this is not met.
pub fn termination_rate(
    batches: &[(usize, Vec<Result<ProtocolTranscript>>)],
    threshold: f64,
) -> CheckResult {
    let mut t = Tally::new("qkd/termination-rate");
    let mut rates = Vec::new();
    for (n, runs) in batches {
        let done = runs.iter().filter(|r| r.is_ok()).count();
        let rate = done as f64 / runs.len().max(1) as f64;
        t.record(1.0 - rate, rate > threshold);
        rates.push(format!("n={n}: {rate:.4}"));
    }
    let mut result = t.finish();
    result.note = Some(format!("threshold {threshold}; {}", rates.join(", ")));
    result
}

/// Each recorded `I` is `{i : a_i ≠ b_i}` and the key is read off its
/// complement in `1..=3n`.
pub fn sift_law(batches: &[(usize, Vec<Result<ProtocolTranscript>>)]) -> CheckResult {
    let mut t = Tally::new("qkd/sift-law");
    for (n, runs) in batches {
        for tr in runs.iter().filter_map(transcript_of) {
            let rounds_ok = tr.round.iter().all(|r| {
                r.a.len() == 3 * n
                    && r.sifted == sift_set(&r.a, &r.b)
                    && r.restart == (r.sifted.len() > *n)
            });
            let complement_ok = match tr.round.last() {
                Some(last) if !last.restart => {
                    let expected: Vec<usize> =
                        (1..=3 * n).filter(|i| !last.sifted.contains(i)).collect();
                    let key: String = expected
                        .iter()
                        .map(|&i| if last.c[i - 1] == 0 { '0' } else { '1' })
                        .collect();
                    tr.key_indices() == expected && tr.key_alice == key
                }
                _ => tr.key_alice.is_empty(),
            };
            t.record(0.0, rounds_ok && complement_ok);
        }
    }
    t.finish()
}

/// The truncated draw map is a permutation, and peeling then attaching
/// is the identity re-indexing.
pub fn draw_isomorphism_check(max_k: usize) -> CheckResult {
    let mut t = Tally::new("qkd/draw-isomorphism");
    for k in 1..=max_k {
        let dim = 4usize.pow(k as u32);
        let reindex = (0..dim).all(|i| {
            let (pair, rest) = peel(i, k);
            pair < 4 && attach(pair, rest, k) == i
        });
        t.outcome(draw_isomorphism(k).map(|d| {
            let unitary = d.isometry_deviation().max(d.coisometry_deviation());
            let permutation = d
                .data()
                .iter()
                .all(|z| z.im == 0.0 && (z.re == 0.0 || z.re == 1.0));
            (unitary, reindex && permutation && unitary == 0.0)
        }));
    }
    t.finish()
}

/// Singlet CHSH within `band` of `2√2`, intercept-resend below 2, both
/// estimates within `band` of the analytic values. Returns the singlet
/// estimate too.
pub fn chsh(seed: u64, samples: usize, band: f64) -> (CheckResult, Option<f64>) {
    let check = "qkd/chsh";
    let mut t = Tally::new(check);
    let mut rng = check_rng(seed, check);
    let settings = ChshSettings::default();
    let mut singlet = None;
    for source in [BellSource::Singlet, BellSource::InterceptResend] {
        t.outcome((|| {
            let estimate = chsh_estimate(source, &settings, samples, &mut rng)?;
            let exact = chsh_analytic(source, &settings)?;
            let d = (estimate - exact).abs();
            let ok = d <= band
                && match source {
                    BellSource::Singlet => {
                        singlet = Some(estimate);
                        (estimate - 2.0 * std::f64::consts::SQRT_2).abs() <= band
                    }
                    _ => estimate < 2.0,
                };
            Ok((d, ok))
        })());
    }
    (t.finish(), singlet)
}

// ---- suites ----

fn compact_checks(seed: u64, tol: f64) -> Vec<CheckResult> {
    vec![
        snake::<Rel>(4, tol),
        snake::<FdHilb>(8, tol),
        absorption::<Rel>(seed, 500, 4, tol),
        absorption::<FdHilb>(seed, 500, 4, tol),
        name_round_trip::<Rel>(seed, 200, 4, tol),
        name_round_trip::<FdHilb>(seed, 200, 4, tol),
        dual_laws::<Rel>(seed, 200, 4, tol),
        dual_laws::<FdHilb>(seed, 200, 4, tol),
        dagger_laws::<Rel>(seed, 200, 3, tol),
        dagger_laws::<FdHilb>(seed, 200, 3, tol),
    ]
}

fn factorisation_checks(seed: u64, tol: f64) -> Vec<CheckResult> {
    let fill = rel_fill_exhaustive(2, 4);
    vec![
        rel_factorisation(seed, 500, 4),
        fill.exists,
        fill.unique,
        hilb_factorisation(seed, 500, 5, tol),
        hilb_fill(seed, 200, 4, 1e-8_f64.max(tol)),
    ]
}

fn accessible_checks(seed: u64, tol: f64) -> Vec<CheckResult> {
    vec![
        extend_dual_oracle::<Rel>(seed, 200, tol),
        extend_dual_oracle::<FdHilb>(seed, 200, tol),
        functoriality::<Rel>(seed, 200, tol),
        functoriality::<FdHilb>(seed, 200, tol),
        dagger_star::<Rel>(seed, 200, tol),
        dagger_star::<FdHilb>(seed, 200, tol),
        independence(seed, 100),
        single_object::<Rel>(seed, 100, 4, tol),
        single_object::<FdHilb>(seed, 100, 5, tol),
        star_preserves_colimits::<Rel>(seed, 100, tol),
        star_preserves_colimits::<FdHilb>(seed, 100, tol),
        compact_presentability::<Rel>(seed, 100, tol),
        compact_presentability::<FdHilb>(seed, 100, tol),
    ]
}

fn classical_checks(seed: u64, tol: f64) -> Vec<CheckResult> {
    vec![classical(seed, 8, tol), pvm(seed, 200, 6, tol)]
}

fn qkd_checks(seed: u64, tol: f64) -> (Vec<CheckResult>, Option<f64>) {
    let batches = protocol_runs(seed, 1000, &[1, 2, 4], 8);
    let (bell, singlet) = chsh(seed, 100_000, 0.05);
    (
        vec![
            correctness_theorem(seed, 100, 4, tol),
            protocol_agreement(&batches),
            sift_law(&batches),
            draw_isomorphism_check(4),
            bell,
        ],
        singlet,
    )
}

/// Runs a suite. Same `(suite, seed, tol)` gives the same report.
pub fn run_suite(suite: Suite, seed: u64, tol: f64) -> RunReport {
    let mut checks = Vec::new();
    let mut chsh = None;
    let parts = match suite {
        Suite::All => vec![
            Suite::Compact,
            Suite::Factorisation,
            Suite::Accessible,
            Suite::Classical,
            Suite::Qkd,
        ],
        one => vec![one],
    };
    for part in parts {
        match part {
            Suite::Compact => checks.extend(compact_checks(seed, tol)),
            Suite::Factorisation => checks.extend(factorisation_checks(seed, tol)),
            Suite::Accessible => checks.extend(accessible_checks(seed, tol)),
            Suite::Classical => checks.extend(classical_checks(seed, tol)),
            Suite::Qkd => {
                let (c, s) = qkd_checks(seed, tol);
                checks.extend(c);
                chsh = s;
            }
            Suite::All => unreachable!(),
        }
    }
    RunReport {
        suite: suite.to_string(),
        seed,
        tol,
        passed: checks.iter().all(|c| c.passed),
        checks,
        chsh,
        wall_time_ms: None,
    }
}

/// Checks by name, for looking results up in tests.
pub fn by_name(report: &RunReport) -> HashMap<&str, &CheckResult> {
    report.checks.iter().map(|c| (c.name.as_str(), c)).collect()
}
