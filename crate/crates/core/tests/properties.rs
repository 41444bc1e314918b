use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use cataccess::accessible::{extend_dual, truncate, ChainDiagram, EpiMono, RelFunctional, Trivial};
use cataccess::category::{dual_of, name, Category, CompactClosed, DaggerMonoidal};
use cataccess::fdhilb::{hilb_factor, hilb_in_e, hilb_in_m, FdHilb, FdMorphism, C64};
use cataccess::gen;
use cataccess::qkd::{attach, draw_isomorphism, peel, run_protocol, sift_set, ProtocolConfig};
use cataccess::rel::{
    rel_chain_colimit, rel_factor, rel_in_e, rel_in_m, top_comparison, Carrier, FillCount, Label,
    Rel, RelSquare, Relation,
};

fn relation_on(x: Carrier, y: Carrier) -> impl Strategy<Value = Relation> {
    let cells = x.len() * y.len();
    proptest::collection::vec(any::<bool>(), cells).prop_map(move |bits| {
        let ys: Vec<_> = y.iter().cloned().collect();
        let pairs: Vec<_> = x
            .iter()
            .enumerate()
            .flat_map(|(i, a)| ys.iter().enumerate().map(move |(j, b)| (i, j, a, b)))
            .filter(|&(i, j, _, _)| bits[i * ys.len() + j])
            .map(|(_, _, a, b)| (a.clone(), b.clone()))
            .collect();
        Relation::new(x.clone(), y.clone(), pairs).unwrap()
    })
}

fn relation(max: usize) -> impl Strategy<Value = Relation> {
    (0..=max, 0..=max)
        .prop_flat_map(|(a, b)| relation_on(gen::carrier("x", a), gen::carrier("y", b)))
}

/// `f: X → Y`, `g: Y → Z` on carriers of size `≤ max`.
fn composable(max: usize) -> impl Strategy<Value = (Relation, Relation)> {
    (0..=max, 0..=max, 0..=max).prop_flat_map(|(a, b, c)| {
        let (x, y, z) = (gen::carrier("x", a), gen::carrier("y", b), gen::carrier("z", c));
        (relation_on(x, y.clone()), relation_on(y, z))
    })
}

fn entry() -> impl Strategy<Value = C64> {
    (-1.0..1.0f64, -1.0..1.0f64).prop_map(|(re, im)| C64::new(re, im))
}

fn matrix_of(rows: usize, cols: usize) -> impl Strategy<Value = FdMorphism> {
    proptest::collection::vec(entry(), rows * cols)
        .prop_map(move |data| FdMorphism::new(rows, cols, data).unwrap())
}

fn matrix(max: usize) -> impl Strategy<Value = FdMorphism> {
    (1..=max, 1..=max).prop_flat_map(|(r, c)| matrix_of(r, c))
}

fn composable_matrices(max: usize) -> impl Strategy<Value = (FdMorphism, FdMorphism)> {
    (1..=max, 1..=max, 1..=max).prop_flat_map(|(a, b, c)| (matrix_of(b, a), matrix_of(c, b)))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn rel_absorption((f, g) in composable(3)) {
        let cs = Rel::compact_structure(&Rel::source(&f));
        let lhs = Rel::compose(&Rel::tensor(&Rel::identity(&cs.dual), &g), &name(&f, &cs).unwrap()).unwrap();
        prop_assert_eq!(lhs, name(&f.then(&g).unwrap(), &cs).unwrap());
    }

    #[test]
    fn hilb_absorption((f, g) in composable_matrices(4)) {
        let cs = FdHilb::compact_structure(&FdHilb::source(&f));
        let lhs = FdHilb::compose(&FdHilb::tensor(&FdHilb::identity(&cs.dual), &g), &name(&f, &cs).unwrap()).unwrap();
        let rhs = name(&g.matmul(&f).unwrap(), &cs).unwrap();
        prop_assert!(lhs.max_abs_diff(&rhs) < 1e-12);
    }

    #[test]
    fn rel_dagger_laws((f, g) in composable(3)) {
        prop_assert_eq!(f.converse().converse(), f.clone());
        prop_assert_eq!(f.then(&g).unwrap().converse(), g.converse().then(&f.converse()).unwrap());
        prop_assert_eq!(f.tensor(&g).converse(), f.converse().tensor(&g.converse()));
    }

    #[test]
    fn hilb_dagger_laws((f, g) in composable_matrices(4)) {
        prop_assert_eq!(f.dagger().dagger(), f.clone());
        let lhs = g.matmul(&f).unwrap().dagger();
        prop_assert!(lhs.max_abs_diff(&f.dagger().matmul(&g.dagger()).unwrap()) < 1e-12);
        prop_assert!(f.kron(&g).dagger().max_abs_diff(&f.dagger().kron(&g.dagger())) < 1e-12);
    }

    #[test]
    fn rel_factor_then_compose(r in relation(4)) {
        let fac = rel_factor(&r);
        prop_assert!(rel_in_e(&fac.e) && rel_in_m(&fac.m));
        prop_assert_eq!(fac.e.then(&fac.m).unwrap(), r);
    }

    #[test]
    fn rel_dagger_factorisation(r in relation(4)) {
        prop_assert_eq!(rel_in_m(&r), rel_in_e(&r.converse()));
        prop_assert_eq!(rel_in_e(&r), rel_in_m(&r.converse()));
    }

    #[test]
    fn hilb_factor_then_compose(f in matrix(5), g in matrix(5)) {
        // Products of mismatched shapes tend to be rank-deficient.
        for h in [f.clone(), f.matmul(&f.dagger()).unwrap(), g.dagger().matmul(&g).unwrap()] {
            let fac = hilb_factor(&h);
            prop_assert!(hilb_in_e(&fac.e) && hilb_in_m(&fac.m));
            prop_assert!(fac.m.matmul(&fac.e).unwrap().max_abs_diff(&h) < 1e-10);
            prop_assert!(fac.e.coisometry_deviation() < 1e-10);
        }
    }

    #[test]
    fn rel_dual_is_converse(r in relation(4)) {
        prop_assert_eq!(dual_of::<Rel>(&r).unwrap(), r.converse());
    }

    #[test]
    fn hilb_dual_is_transpose(f in matrix(4)) {
        prop_assert!(dual_of::<FdHilb>(&f).unwrap().max_abs_diff(&f.transpose()) < 1e-12);
    }

    #[test]
    fn relation_json_round_trip(r in relation(4)) {
        let text = serde_json::to_string(&r).unwrap();
        prop_assert_eq!(serde_json::from_str::<Relation>(&text).unwrap(), r);
    }

    #[test]
    fn matrix_json_round_trip(f in matrix(5)) {
        let back = FdMorphism::from_json(&f.to_json()).unwrap();
        prop_assert_eq!(back, f);
    }

    #[test]
    fn transcript_json_round_trip(seed in any::<u64>(), n in 1usize..4) {
        let cfg = ProtocolConfig { n, seed, ..ProtocolConfig::default() };
        let t = match run_protocol(&cfg) {
            Ok(t) => t,
            Err(cataccess::Error::NonTermination { transcript, .. }) => *transcript,
            Err(e) => return Err(TestCaseError::fail(e.to_string())),
        };
        let text = serde_json::to_string(&t).unwrap();
        prop_assert_eq!(serde_json::from_str::<cataccess::qkd::ProtocolTranscript>(&text).unwrap(), t);
    }

    #[test]
    fn sift_set_is_mismatch_positions(
        (a, b) in (1usize..12).prop_flat_map(|len| (
            proptest::collection::vec(1u8..=3, len),
            proptest::collection::vec(1u8..=3, len),
        ))
    ) {
        let sifted = sift_set(&a, &b);
        for i in 1..=a.len() {
            prop_assert_eq!(sifted.contains(&i), a[i - 1] != b[i - 1]);
        }
    }

    #[test]
    fn function_chain_colimit_is_top(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let t = gen::rel_function_chain(&mut rng, "c", 4, 4).unwrap();
        let colim = rel_chain_colimit(&t.objects, &t.steps).unwrap();
        prop_assert!(top_comparison(&colim, &t.objects, &t.steps).unwrap().is_some());
    }

    #[test]
    fn extend_dual_is_converse_rel(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = gen::rel_function_chain(&mut rng, "a", 3, 3).unwrap();
        let b = gen::rel_function_chain(&mut rng, "b", 3, 3).unwrap();
        let f = gen::relation(&mut rng, &a.colimit.vertex, &b.colimit.vertex, 0.5);
        let star = extend_dual(&f, &a, &b, &RelFunctional, 0.0).unwrap();
        prop_assert_eq!(&star, &f.converse());
        prop_assert_eq!(extend_dual(&f, &a, &b, &Trivial, 0.0).unwrap(), star);
    }

    #[test]
    fn extend_dual_is_transpose_hilb(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = gen::hilb_stable_chain(&mut rng, 3, 5).unwrap();
        let b = gen::hilb_stable_chain(&mut rng, 3, 5).unwrap();
        let f = gen::matrix(&mut rng, b.colimit.vertex, a.colimit.vertex);
        let star = extend_dual(&f, &a, &b, &EpiMono, 1e-9).unwrap();
        prop_assert!(star.max_abs_diff(&f.transpose()) < 1e-9);
    }

    #[test]
    fn extend_dual_of_identity(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = gen::rel_function_chain(&mut rng, "a", 4, 3).unwrap();
        let id = Relation::identity(&a.colimit.vertex);
        prop_assert_eq!(extend_dual(&id, &a, &a, &RelFunctional, 0.0).unwrap(), id);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// The lattice decision agrees with literal enumeration of every
    /// `w: R → R'`.
    #[test]
    fn fill_count_matches_brute_force(
        (r, u, rp, v) in (1usize..=2, 1usize..=2, 1usize..=2, 1usize..=2).prop_flat_map(|(a, b, c, d)| {
            let (x, y) = (gen::carrier("x", a), gen::carrier("y", b));
            let (xp, yp) = (gen::carrier("p", c), gen::carrier("q", d));
            (
                relation_on(x.clone(), y.clone()),
                relation_on(x, xp.clone()),
                relation_on(xp, yp.clone()),
                relation_on(y, yp),
            )
        })
    ) {
        prop_assume!(r.then(&v).unwrap() == u.then(&rp).unwrap());
        prop_assume!(r.len() * rp.len() <= 16);
        let sq = RelSquare::from_factorisations(&r, &rp, u, v);
        let (mid, mid_p) = (rel_factor(&r).mid, rel_factor(&rp).mid);
        let cells: Vec<(Label, Label)> = mid
            .iter()
            .flat_map(|a| mid_p.iter().map(move |b| (a.clone(), b.clone())))
            .collect();
        let fills = (0u32..1 << cells.len())
            .filter(|mask| {
                let w = Relation::new(
                    mid.clone(),
                    mid_p.clone(),
                    cells.iter().enumerate().filter(|(i, _)| mask >> i & 1 == 1).map(|(_, c)| c.clone()),
                )
                .unwrap();
                sq.is_fill(&w).unwrap()
            })
            .count();
        let expected = match fills {
            0 => FillCount::None,
            1 => FillCount::Unique,
            _ => FillCount::Multiple,
        };
        prop_assert_eq!(sq.fill_count().unwrap(), expected);
        prop_assert!(fills >= 1);
    }
}

#[test]
fn draw_then_attach_is_identity() {
    for k in 1..=4 {
        let d = draw_isomorphism(k).unwrap();
        let dim = 4usize.pow(k as u32);
        assert_eq!(d.matmul(&d.dagger()).unwrap(), FdMorphism::identity(dim));
        for i in 0..dim {
            let (pair, rest) = peel(i, k);
            assert_eq!(attach(pair, rest, k), i);
        }
    }
}

#[test]
fn constant_chain_extended_dual_is_compact_dual() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for depth in 0..4 {
        let a = truncate(&ChainDiagram::<FdHilb>::constant(3), depth).unwrap();
        let b = truncate(&ChainDiagram::<FdHilb>::constant(2), depth).unwrap();
        let f = gen::matrix(&mut rng, 2, 3);
        let star = extend_dual(&f, &a, &b, &EpiMono, 1e-9).unwrap();
        assert!(star.max_abs_diff(&dual_of::<FdHilb>(&f).unwrap()) < 1e-12);
    }
}
