//! Random instances for property checks.

use rand::seq::IndexedRandom;
use rand::Rng;

use crate::accessible::{truncate, ChainDiagram, Truncation};
use crate::error::Result;
use crate::fdhilb::{FdHilb, FdMorphism, C64, RANK_TOL};
use crate::rel::{Carrier, Label, Rel, Relation};

/// Atoms `{prefix}0 … {prefix}{size-1}`.
pub fn carrier(prefix: &str, size: usize) -> Carrier {
    Carrier::new((0..size).map(|i| Label::Atom(format!("{prefix}{i}"))))
}

/// Each pair present independently with probability `density`.
pub fn relation(rng: &mut impl Rng, source: &Carrier, target: &Carrier, density: f64) -> Relation {
    let pairs: Vec<_> = source
        .iter()
        .flat_map(|x| target.iter().map(move |y| (x.clone(), y.clone())))
        .filter(|_| rng.random_bool(density))
        .collect();
    Relation::new(source.clone(), target.clone(), pairs).expect("pairs drawn from the carriers")
}

/// A uniformly random total function; `target` must be nonempty unless
/// `source` is empty.
pub fn function(rng: &mut impl Rng, source: &Carrier, target: &Carrier) -> Relation {
    let ys: Vec<&Label> = target.iter().collect();
    let pairs: Vec<_> = source
        .iter()
        .map(|x| {
            (
                x.clone(),
                (*ys.choose(rng).expect("nonempty target")).clone(),
            )
        })
        .collect();
    Relation::new(source.clone(), target.clone(), pairs).expect("pairs drawn from the carriers")
}

/// Entries with real and imaginary parts uniform in `[-1, 1]`.
pub fn matrix(rng: &mut impl Rng, rows: usize, cols: usize) -> FdMorphism {
    FdMorphism::from_fn(rows, cols, |_, _| {
        C64::new(rng.random_range(-1.0..=1.0), rng.random_range(-1.0..=1.0))
    })
}

/// A random matrix of full column rank, `rows ≥ cols`.
pub fn injective(rng: &mut impl Rng, rows: usize, cols: usize) -> FdMorphism {
    assert!(rows >= cols, "injective map needs rows >= cols");
    loop {
        let m = matrix(rng, rows, cols);
        let sigma = m.svd(RANK_TOL).sigma;
        if sigma.len() == cols && sigma.iter().all(|&s| s > 1e-2) {
            return m;
        }
    }
}

/// `U V†` from the SVD of a random matrix: orthonormal rows when
/// `rows ≤ cols`.
pub fn coisometry(rng: &mut impl Rng, rows: usize, cols: usize) -> FdMorphism {
    assert!(rows <= cols, "coisometry needs rows <= cols");
    let a = injective(rng, cols, rows).dagger();
    let svd = a.svd(RANK_TOL);
    svd.u.matmul(&svd.v_t).expect("SVD shapes agree")
}

pub fn unitary(rng: &mut impl Rng, n: usize) -> FdMorphism {
    coisometry(rng, n, n)
}

/// A chain of total functions with `1..=max_levels` levels of size
/// `1..=max_size`, truncated at its last given level.
pub fn rel_function_chain(
    rng: &mut impl Rng,
    prefix: &str,
    max_levels: usize,
    max_size: usize,
) -> Result<Truncation<Rel>> {
    let levels = rng.random_range(1..=max_levels);
    let carriers: Vec<Carrier> = (0..levels)
        .map(|n| carrier(&format!("{prefix}{n}."), rng.random_range(1..=max_size)))
        .collect();
    let steps: Vec<Relation> = carriers
        .windows(2)
        .map(|w| function(rng, &w[0], &w[1]))
        .collect();
    truncate(&ChainDiagram::explicit(carriers, steps)?, levels - 1)
}

/// A chain of injective maps with nondecreasing dimensions in
/// `1..=max_dim`, truncated one level past the end so the identity tail
/// makes it stable.
pub fn hilb_stable_chain(
    rng: &mut impl Rng,
    max_levels: usize,
    max_dim: usize,
) -> Result<Truncation<FdHilb>> {
    let levels = rng.random_range(1..=max_levels);
    let mut dims = vec![rng.random_range(1..=max_dim)];
    for _ in 1..levels {
        let last = *dims.last().expect("nonempty");
        dims.push(rng.random_range(last..=max_dim));
    }
    let steps: Vec<FdMorphism> = dims
        .windows(2)
        .map(|w| injective(rng, w[1], w[0]))
        .collect();
    truncate(&ChainDiagram::explicit(dims, steps)?, levels)
}
