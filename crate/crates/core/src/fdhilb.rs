//! Finite-dimensional Hilbert spaces: dense complex matrices with a
//! lexicographic Kronecker order (`|i⟩⊗|j⟩` is basis vector `i·b + j`).

use faer::Mat;
use num_complex::Complex64;
use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use serde_json::value::RawValue;

use crate::category::{Category, CategoryTag, CompactClosed, CompactStructure, DaggerMonoidal};
use crate::error::{Error, Result};

pub type C64 = Complex64;

/// Singular values at or below this are treated as zero.
pub const RANK_TOL: f64 = 1e-10;

const ZERO: C64 = C64::new(0.0, 0.0);
const ONE: C64 = C64::new(1.0, 0.0);

/// A linear map `C^cols → C^rows`, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct FdMorphism {
    rows: usize,
    cols: usize,
    data: Vec<C64>,
}

impl FdMorphism {
    pub fn new(rows: usize, cols: usize, data: Vec<C64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::InvalidShape(format!(
                "{rows}x{cols} matrix needs {} entries, got {}",
                rows * cols,
                data.len()
            )));
        }
        if data.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::InvalidShape("matrix has non-finite entries".into()));
        }
        Ok(FdMorphism { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        FdMorphism {
            rows,
            cols,
            data: vec![ZERO; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_fn(n, n, |i, j| if i == j { ONE } else { ZERO })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> C64) -> Self {
        let data = (0..rows)
            .flat_map(|i| (0..cols).map(move |j| (i, j)))
            .map(|(i, j)| f(i, j))
            .collect();
        FdMorphism { rows, cols, data }
    }

    /// Panics if `values.len() != rows * cols` or a value is not finite.
    pub fn from_real(rows: usize, cols: usize, values: &[f64]) -> Self {
        Self::new(
            rows,
            cols,
            values.iter().map(|&x| C64::new(x, 0.0)).collect(),
        )
        .expect("real matrix of matching shape")
    }

    /// A column vector.
    pub fn ket(values: &[C64]) -> Self {
        FdMorphism {
            rows: values.len(),
            cols: 1,
            data: values.to_vec(),
        }
    }

    /// Standard basis vector `|i⟩` of `C^dim`.
    pub fn basis(dim: usize, i: usize) -> Self {
        Self::from_fn(dim, 1, |r, _| if r == i { ONE } else { ZERO })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[C64] {
        &self.data
    }

    pub fn get(&self, r: usize, c: usize) -> C64 {
        self.data[r * self.cols + c]
    }

    /// `self · other`
    pub fn matmul(&self, other: &FdMorphism) -> Result<FdMorphism> {
        if self.cols != other.rows {
            return Err(Error::Mismatch {
                target: format!("C^{}", other.rows),
                domain: format!("C^{}", self.cols),
            });
        }
        let mut out = vec![ZERO; self.rows * other.cols];
        for i in 0..self.rows {
            let row = &mut out[i * other.cols..(i + 1) * other.cols];
            for k in 0..self.cols {
                let a = self.data[i * self.cols + k];
                if a == ZERO {
                    continue;
                }
                let brow = &other.data[k * other.cols..(k + 1) * other.cols];
                for (o, b) in row.iter_mut().zip(brow) {
                    *o += a * b;
                }
            }
        }
        Ok(FdMorphism {
            rows: self.rows,
            cols: other.cols,
            data: out,
        })
    }

    pub fn kron(&self, other: &FdMorphism) -> FdMorphism {
        let (r, c) = (self.rows * other.rows, self.cols * other.cols);
        Self::from_fn(r, c, |i, j| {
            self.get(i / other.rows, j / other.cols) * other.get(i % other.rows, j % other.cols)
        })
    }

    pub fn transpose(&self) -> FdMorphism {
        Self::from_fn(self.cols, self.rows, |i, j| self.get(j, i))
    }

    pub fn conj(&self) -> FdMorphism {
        FdMorphism {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|z| z.conj()).collect(),
        }
    }

    pub fn dagger(&self) -> FdMorphism {
        Self::from_fn(self.cols, self.rows, |i, j| self.get(j, i).conj())
    }

    pub fn scale(&self, s: C64) -> FdMorphism {
        FdMorphism {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|z| z * s).collect(),
        }
    }

    pub fn add(&self, other: &FdMorphism) -> Result<FdMorphism> {
        self.same_shape(other)?;
        Ok(FdMorphism {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| a + b)
                .collect(),
        })
    }

    pub fn sub(&self, other: &FdMorphism) -> Result<FdMorphism> {
        self.add(&other.scale(-ONE))
    }

    fn same_shape(&self, other: &FdMorphism) -> Result<()> {
        if (self.rows, self.cols) == (other.rows, other.cols) {
            Ok(())
        } else {
            Err(Error::InvalidShape(format!(
                "shapes {}x{} and {}x{} differ",
                self.rows, self.cols, other.rows, other.cols
            )))
        }
    }

    /// Entrywise max norm of `self − other`; `INFINITY` for different shapes.
    pub fn max_abs_diff(&self, other: &FdMorphism) -> f64 {
        if (self.rows, self.cols) != (other.rows, other.cols) {
            return f64::INFINITY;
        }
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    pub fn norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    /// `a ⊗ b → b ⊗ a`: basis index `i·b + j` goes to `j·a + i`.
    pub fn swap(a: usize, b: usize) -> FdMorphism {
        let mut m = FdMorphism::zeros(a * b, a * b);
        for i in 0..a {
            for j in 0..b {
                m.data[(j * a + i) * (a * b) + (i * b + j)] = ONE;
            }
        }
        m
    }

    pub fn to_faer(&self) -> Mat<C64> {
        Mat::from_fn(self.rows, self.cols, |i, j| self.get(i, j))
    }

    pub fn from_faer(m: &Mat<C64>) -> FdMorphism {
        Self::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
    }

    /// Thin SVD `U Σ V†` keeping only singular values above `tol`.
    pub fn svd(&self, tol: f64) -> Svd {
        if self.rows == 0 || self.cols == 0 {
            return Svd {
                u: FdMorphism::zeros(self.rows, 0),
                sigma: Vec::new(),
                v_t: FdMorphism::zeros(0, self.cols),
            };
        }
        let svd = self
            .to_faer()
            .thin_svd()
            .expect("SVD of a finite matrix converges");
        let (u, s, v) = (svd.U(), svd.S(), svd.V());
        // Singular values come sorted in nonincreasing order.
        let r = (0..s.dim()).take_while(|&k| s[k].re > tol).count();
        Svd {
            u: FdMorphism::from_fn(self.rows, r, |i, k| u[(i, k)]),
            sigma: (0..r).map(|k| s[k].re).collect(),
            v_t: FdMorphism::from_fn(r, self.cols, |k, j| v[(j, k)].conj()),
        }
    }

    pub fn rank(&self, tol: f64) -> usize {
        self.svd(tol).sigma.len()
    }

    /// Moore–Penrose pseudo-inverse.
    pub fn pinv(&self, tol: f64) -> FdMorphism {
        let Svd { u, sigma, v_t } = self.svd(tol);
        let inv_sigma = FdMorphism::from_fn(sigma.len(), sigma.len(), |i, j| {
            if i == j {
                C64::new(1.0 / sigma[i], 0.0)
            } else {
                ZERO
            }
        });
        v_t.dagger()
            .matmul(&inv_sigma)
            .and_then(|x| x.matmul(&u.dagger()))
            .expect("SVD shapes agree")
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    /// `f†f = id`
    pub fn isometry_deviation(&self) -> f64 {
        self.dagger()
            .matmul(self)
            .expect("shapes agree")
            .max_abs_diff(&FdMorphism::identity(self.cols))
    }

    /// `ff† = id`
    pub fn coisometry_deviation(&self) -> f64 {
        self.dagger().isometry_deviation()
    }

    /// Deterministic JSON with 17 significant digits per real number.
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("matrix serializes")
    }

    pub fn from_json(s: &str) -> Result<FdMorphism> {
        Ok(serde_json::from_str(s)?)
    }
}

pub struct Svd {
    pub u: FdMorphism,
    pub sigma: Vec<f64>,
    pub v_t: FdMorphism,
}

struct Sig17(f64);

impl Serialize for Sig17 {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        use serde::ser::Error as _;
        let raw = RawValue::from_string(format!("{:.16e}", self.0)).map_err(S::Error::custom)?;
        raw.serialize(serializer)
    }
}

#[derive(Serialize)]
struct MatrixJsonOut {
    rows: usize,
    cols: usize,
    re: Vec<Sig17>,
    im: Vec<Sig17>,
}

#[derive(Deserialize)]
struct MatrixJsonIn {
    rows: usize,
    cols: usize,
    re: Vec<f64>,
    im: Vec<f64>,
}

impl Serialize for FdMorphism {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        MatrixJsonOut {
            rows: self.rows,
            cols: self.cols,
            re: self.data.iter().map(|z| Sig17(z.re)).collect(),
            im: self.data.iter().map(|z| Sig17(z.im)).collect(),
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for FdMorphism {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let raw = MatrixJsonIn::deserialize(deserializer)?;
        if raw.re.len() != raw.im.len() {
            return Err(D::Error::custom("re and im lengths differ"));
        }
        let data = raw
            .re
            .iter()
            .zip(&raw.im)
            .map(|(&re, &im)| C64::new(re, im))
            .collect();
        FdMorphism::new(raw.rows, raw.cols, data).map_err(D::Error::custom)
    }
}

/// Marker type for the category of finite-dimensional Hilbert spaces.
#[derive(Clone, Copy, Debug, Default)]
pub struct FdHilb;

impl Category for FdHilb {
    type Obj = usize;
    type Mor = FdMorphism;
    const TAG: CategoryTag = CategoryTag::FdHilb;
    const EXACT: bool = false;

    fn source(f: &FdMorphism) -> usize {
        f.cols
    }

    fn target(f: &FdMorphism) -> usize {
        f.rows
    }

    fn identity(x: &usize) -> FdMorphism {
        FdMorphism::identity(*x)
    }

    fn compose(g: &FdMorphism, f: &FdMorphism) -> Result<FdMorphism> {
        g.matmul(f)
    }

    fn zero(source: &usize, target: &usize) -> FdMorphism {
        FdMorphism::zeros(*target, *source)
    }

    fn deviation(f: &FdMorphism, g: &FdMorphism) -> f64 {
        f.max_abs_diff(g)
    }

    fn is_iso(f: &FdMorphism) -> bool {
        f.is_square() && f.rank(RANK_TOL) == f.rows
    }

    fn describe(x: &usize) -> String {
        format!("C^{x}")
    }
}

impl DaggerMonoidal for FdHilb {
    fn unit() -> usize {
        1
    }

    fn tensor_obj(a: &usize, b: &usize) -> usize {
        a * b
    }

    fn tensor(f: &FdMorphism, g: &FdMorphism) -> FdMorphism {
        f.kron(g)
    }

    fn dagger(f: &FdMorphism) -> FdMorphism {
        f.dagger()
    }

    fn associator(a: &usize, b: &usize, c: &usize) -> FdMorphism {
        FdMorphism::identity(a * b * c)
    }

    fn left_unitor(a: &usize) -> FdMorphism {
        FdMorphism::identity(*a)
    }

    fn right_unitor(a: &usize) -> FdMorphism {
        FdMorphism::identity(*a)
    }

    fn symmetry(a: &usize, b: &usize) -> FdMorphism {
        FdMorphism::swap(*a, *b)
    }
}

impl CompactClosed for FdHilb {
    fn dual_obj(x: &usize) -> usize {
        *x
    }

    fn compact_structure(x: &usize) -> CompactStructure<FdHilb> {
        hilb_compact_structure(*x)
    }
}

/// `η = Σ_i |i⟩⊗|i⟩`, the vectorised identity, and `ε = η† ∘ σ`.
pub fn hilb_compact_structure(dim: usize) -> CompactStructure<FdHilb> {
    let eta = FdMorphism::from_fn(
        dim * dim,
        1,
        |r, _| {
            if r % (dim + 1) == 0 {
                ONE
            } else {
                ZERO
            }
        },
    );
    let epsilon = eta
        .dagger()
        .matmul(&FdMorphism::swap(dim, dim))
        .expect("shapes agree");
    CompactStructure {
        object: dim,
        dual: dim,
        eta,
        epsilon,
    }
}

/// Surjective maps (full row rank).
pub fn hilb_in_e(f: &FdMorphism) -> bool {
    f.rank(RANK_TOL) == f.rows
}

/// Injective maps (full column rank).
pub fn hilb_in_m(f: &FdMorphism) -> bool {
    f.rank(RANK_TOL) == f.cols
}

#[derive(Clone, Debug)]
pub struct HilbFactorisation {
    pub e: FdMorphism,
    pub m: FdMorphism,
    pub rank: usize,
}

/// `f = m ∘ e` through `C^rank` with `e = V_r†` and `m = U_r Σ_r`. Each
/// row of `e` is rotated so its largest-magnitude entry is real positive.
pub fn hilb_factor(f: &FdMorphism) -> HilbFactorisation {
    let Svd { u, sigma, v_t } = f.svd(RANK_TOL);
    let r = sigma.len();
    let phases: Vec<C64> = (0..r)
        .map(|k| {
            let pivot = (0..v_t.cols).map(|j| v_t.get(k, j)).fold(ZERO, |best, z| {
                if z.norm() > best.norm() + 1e-12 {
                    z
                } else {
                    best
                }
            });
            if pivot == ZERO {
                ONE
            } else {
                pivot.conj() / pivot.norm()
            }
        })
        .collect();
    let e = FdMorphism::from_fn(r, f.cols, |k, j| v_t.get(k, j) * phases[k]);
    let m = FdMorphism::from_fn(f.rows, r, |i, k| u.get(i, k) * sigma[k] * phases[k].conj());
    HilbFactorisation { e, m, rank: r }
}

/// A commuting square `v ∘ m ∘ e = m' ∘ e' ∘ u`, laid out as for relations.
#[derive(Clone, Debug)]
pub struct HilbSquare {
    pub e: FdMorphism,
    pub m: FdMorphism,
    pub e_prime: FdMorphism,
    pub m_prime: FdMorphism,
    pub u: FdMorphism,
    pub v: FdMorphism,
}

#[derive(Clone, Debug)]
pub struct HilbFill {
    pub w: FdMorphism,
    /// Worst residual of the two triangles.
    pub residual: f64,
}

/// `w = m'⁺ v m`, unique because `m'` is injective.
pub fn hilb_diagonal_fill(sq: &HilbSquare, tol: f64) -> Result<HilbFill> {
    let lhs = sq.v.matmul(&sq.m)?.matmul(&sq.e)?;
    let rhs = sq.m_prime.matmul(&sq.e_prime)?.matmul(&sq.u)?;
    let outer = lhs.max_abs_diff(&rhs);
    if outer > tol {
        return Err(Error::SquareDoesNotCommute(outer));
    }
    if !hilb_in_m(&sq.m_prime) || !hilb_in_e(&sq.e) {
        return Err(Error::NotInM);
    }
    let w = sq.m_prime.pinv(RANK_TOL).matmul(&sq.v)?.matmul(&sq.m)?;
    let upper = w.matmul(&sq.e)?.max_abs_diff(&sq.e_prime.matmul(&sq.u)?);
    let lower = sq.m_prime.matmul(&w)?.max_abs_diff(&sq.v.matmul(&sq.m)?);
    Ok(HilbFill {
        w,
        residual: upper.max(lower),
    })
}

#[derive(Clone, Debug)]
pub struct HilbColimit {
    pub object: usize,
    /// Composites `D(n) → D(top)`.
    pub legs: Vec<FdMorphism>,
    pub stable_from: usize,
}

/// Colimit of a finite chain of injective maps that is eventually
/// invertible. Without a declared level, stabilisation is the first level
/// from which every remaining step is invertible.
pub fn hilb_chain_colimit(
    dims: &[usize],
    steps: &[FdMorphism],
    stable_from: Option<usize>,
) -> Result<HilbColimit> {
    if dims.is_empty() || steps.len() + 1 != dims.len() {
        return Err(Error::InvalidShape(format!(
            "chain with {} levels needs {} steps, got {}",
            dims.len(),
            dims.len().saturating_sub(1),
            steps.len()
        )));
    }
    for (n, s) in steps.iter().enumerate() {
        if s.cols != dims[n] || s.rows != dims[n + 1] {
            return Err(Error::InvalidShape(format!(
                "step {n} is not D({n}) -> D({})",
                n + 1
            )));
        }
        if !hilb_in_m(s) {
            return Err(Error::NotInM);
        }
    }
    let invertible = |s: &FdMorphism| s.is_square() && s.rank(RANK_TOL) == s.rows;
    let top = dims.len() - 1;
    let k = match stable_from {
        Some(k) => {
            if k > top || !steps[k..].iter().all(invertible) {
                return Err(Error::NotStabilised(k.min(top)));
            }
            k
        }
        None => {
            let k = steps
                .iter()
                .rposition(|s| !invertible(s))
                .map_or(0, |last_bad| last_bad + 1);
            if k > top || (k == top && !steps.is_empty()) {
                return Err(Error::NotStabilised(steps.len()));
            }
            k
        }
    };
    let mut legs = vec![FdMorphism::identity(dims[top])];
    for n in (0..top).rev() {
        let next = legs.last().expect("nonempty").matmul(&steps[n])?;
        legs.push(next);
    }
    legs.reverse();
    Ok(HilbColimit {
        object: dims[top],
        legs,
        stable_from: k,
    })
}

/// A commutative comonoid `(δ, ε)` on `C^dim`.
#[derive(Clone, Debug)]
pub struct ClassicalStructure {
    pub dim: usize,
    /// `C^dim → C^dim ⊗ C^dim`
    pub delta: FdMorphism,
    /// `C^dim → C`
    pub epsilon: FdMorphism,
}

/// The copy structure of the standard basis: `δ|i⟩ = |ii⟩`, `ε|i⟩ = 1`.
pub fn classical_structure(dim: usize) -> Result<ClassicalStructure> {
    if dim == 0 {
        return Err(Error::ZeroDimensionalClassical);
    }
    let delta = FdMorphism::from_fn(
        dim * dim,
        dim,
        |r, c| {
            if r == c * dim + c {
                ONE
            } else {
                ZERO
            }
        },
    );
    Ok(ClassicalStructure {
        dim,
        delta,
        epsilon: FdMorphism::from_fn(1, dim, |_, _| ONE),
    })
}

impl ClassicalStructure {
    /// The copy structure of the orthonormal basis given by the rows of `u`'s
    /// dagger, i.e. `δ' = (u⊗u) δ u†` and `ε' = ε u†`.
    pub fn in_basis(u: &FdMorphism, tol: f64) -> Result<ClassicalStructure> {
        if !u.is_square() {
            return Err(Error::InvalidShape("basis change must be square".into()));
        }
        let dev = u.isometry_deviation();
        if dev > tol {
            return Err(Error::InvalidShape(format!(
                "basis change is not unitary ({dev})"
            )));
        }
        let std = classical_structure(u.rows)?;
        let ud = u.dagger();
        Ok(ClassicalStructure {
            dim: u.rows,
            delta: u.kron(u).matmul(&std.delta)?.matmul(&ud)?,
            epsilon: std.epsilon.matmul(&ud)?,
        })
    }

    /// `η = δ ∘ ε†` and `ε_c = ε ∘ δ†`.
    pub fn induced_compact(&self) -> CompactStructure<FdHilb> {
        CompactStructure {
            object: self.dim,
            dual: self.dim,
            eta: self
                .delta
                .matmul(&self.epsilon.dagger())
                .expect("shapes agree"),
            epsilon: self
                .epsilon
                .matmul(&self.delta.dagger())
                .expect("shapes agree"),
        }
    }

    /// Deviation of `σ ∘ ε_c† = η` for the induced compact structure.
    pub fn dagger_symmetry_deviation(&self) -> f64 {
        let cs = self.induced_compact();
        FdMorphism::swap(self.dim, self.dim)
            .matmul(&cs.epsilon.dagger())
            .expect("shapes agree")
            .max_abs_diff(&cs.eta)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ClassicalReport {
    pub passed: bool,
    pub coassociativity: f64,
    pub cocommutativity: f64,
    pub left_counit: f64,
    pub right_counit: f64,
    pub isometry: f64,
    pub frobenius: f64,
}

impl ClassicalReport {
    pub fn max_deviation(&self) -> f64 {
        [
            self.coassociativity,
            self.cocommutativity,
            self.left_counit,
            self.right_counit,
            self.isometry,
            self.frobenius,
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }
}

pub fn check_classical(cs: &ClassicalStructure, tol: f64) -> ClassicalReport {
    let d = cs.dim;
    let id = FdMorphism::identity(d);
    let delta = &cs.delta;
    let shaped =
        delta.rows == d * d && delta.cols == d && cs.epsilon.rows == 1 && cs.epsilon.cols == d;
    if !shaped {
        return ClassicalReport {
            passed: false,
            coassociativity: f64::INFINITY,
            cocommutativity: f64::INFINITY,
            left_counit: f64::INFINITY,
            right_counit: f64::INFINITY,
            isometry: f64::INFINITY,
            frobenius: f64::INFINITY,
        };
    }
    let mm = |a: &FdMorphism, b: &FdMorphism| a.matmul(b).expect("shapes agree");
    let assoc = FdHilb::associator(&d, &d, &d);
    let coassociativity =
        mm(&mm(&assoc, &delta.kron(&id)), delta).max_abs_diff(&mm(&id.kron(delta), delta));
    let cocommutativity = mm(&FdMorphism::swap(d, d), delta).max_abs_diff(delta);
    let left_counit =
        mm(&mm(&FdHilb::left_unitor(&d), &cs.epsilon.kron(&id)), delta).max_abs_diff(&id);
    let right_counit =
        mm(&mm(&FdHilb::right_unitor(&d), &id.kron(&cs.epsilon)), delta).max_abs_diff(&id);
    let isometry = delta.isometry_deviation();
    let frobenius = mm(delta, &delta.dagger()).max_abs_diff(&mm(
        &mm(&delta.dagger().kron(&id), &assoc.dagger()),
        &id.kron(delta),
    ));
    let mut report = ClassicalReport {
        passed: false,
        coassociativity,
        cocommutativity,
        left_counit,
        right_counit,
        isometry,
        frobenius,
    };
    report.passed = report.max_deviation() <= tol;
    report
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PvmReport {
    pub passed: bool,
    pub deviation: f64,
}

/// `p ∘ p† = id_C`
pub fn check_pvm(p: &FdMorphism, tol: f64) -> PvmReport {
    let deviation = p.coisometry_deviation();
    PvmReport {
        passed: deviation <= tol,
        deviation,
    }
}

/// A demolition measurement `p: X → C` onto the copy structure of `C`.
#[derive(Clone, Debug)]
pub struct PVSpectrum {
    pub p: FdMorphism,
    pub classical: ClassicalStructure,
}

impl PVSpectrum {
    pub fn new(p: FdMorphism, tol: f64) -> Result<PVSpectrum> {
        let report = check_pvm(&p, tol);
        if !report.passed {
            return Err(Error::NotPvm(report.deviation));
        }
        let classical = classical_structure(p.rows)?;
        Ok(PVSpectrum { p, classical })
    }

    /// Qubit measurement along the Bloch-plane angle `theta`: outcome 0 is
    /// `(cos θ, sin θ)`, outcome 1 is `(−sin θ, cos θ)`.
    pub fn qubit(theta: f64) -> PVSpectrum {
        let (s, c) = theta.sin_cos();
        let p = FdMorphism::from_real(2, 2, &[c, s, -s, c]);
        PVSpectrum::new(p, 1e-12).expect("rotation is unitary")
    }

    pub fn outcomes(&self) -> usize {
        self.p.rows
    }

    /// `P_k = p† |k⟩⟨k| p`
    pub fn projector(&self, k: usize) -> FdMorphism {
        let row = FdMorphism::from_fn(1, self.p.cols, |_, j| self.p.get(k, j));
        row.dagger().matmul(&row).expect("shapes agree")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::category::{check_snake, dual_of};

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn new_validates_shape_and_finiteness() {
        assert!(FdMorphism::new(2, 2, vec![ONE; 3]).is_err());
        assert!(FdMorphism::new(1, 1, vec![c(f64::NAN, 0.0)]).is_err());
        assert!(FdMorphism::new(0, 3, vec![]).is_ok());
    }

    #[test]
    fn compact_structure_examples() {
        let cs = hilb_compact_structure(2);
        assert_eq!(cs.eta, FdMorphism::from_real(4, 1, &[1.0, 0.0, 0.0, 1.0]));
        let report = check_snake(&cs, 1e-9).unwrap();
        assert!(report.passed);
        assert_eq!(report.max_deviation(), 0.0);

        let cs0 = hilb_compact_structure(0);
        assert_eq!((cs0.eta.rows(), cs0.eta.cols()), (0, 1));
        assert!(check_snake(&cs0, 1e-9).unwrap().passed);

        let cs1 = hilb_compact_structure(1);
        assert_eq!(cs1.eta, FdMorphism::identity(1));
        assert_eq!(cs1.epsilon, FdMorphism::identity(1));
    }

    #[test]
    fn swap_matrix_convention() {
        let ket0 = FdMorphism::basis(2, 0);
        let ket1 = FdMorphism::basis(3, 1);
        let swapped = FdMorphism::swap(2, 3).matmul(&ket0.kron(&ket1)).unwrap();
        assert_eq!(swapped, ket1.kron(&ket0));
    }

    #[test]
    fn factor_examples() {
        let f = FdMorphism::from_real(2, 2, &[1.0, 0.0, 0.0, 0.0]);
        let fac = hilb_factor(&f);
        assert_eq!(fac.rank, 1);
        assert!(
            fac.m
                .max_abs_diff(&FdMorphism::from_real(2, 1, &[1.0, 0.0]))
                < 1e-12
        );
        assert!(
            fac.e
                .max_abs_diff(&FdMorphism::from_real(1, 2, &[1.0, 0.0]))
                < 1e-12
        );

        let g = FdMorphism::from_real(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        let fac = hilb_factor(&g);
        assert_eq!(fac.rank, 2);
        assert!(FdHilb::is_iso(&fac.e) && FdHilb::is_iso(&fac.m));
        assert!(fac.m.matmul(&fac.e).unwrap().max_abs_diff(&g) < 1e-12);

        let z = FdMorphism::zeros(2, 2);
        let fac = hilb_factor(&z);
        assert_eq!(fac.rank, 0);
        assert_eq!((fac.e.rows(), fac.e.cols()), (0, 2));
        assert_eq!((fac.m.rows(), fac.m.cols()), (2, 0));
        assert_eq!(fac.m.matmul(&fac.e).unwrap(), z);
    }

    #[test]
    fn fill_of_two_factorisations() {
        let f = FdMorphism::from_real(3, 2, &[1.0, 2.0, 2.0, 4.0, 0.0, 0.0]);
        let fac = hilb_factor(&f);
        // Same map, factorised a second time with a rescaled middle.
        let s = c(2.0, 1.0);
        let sq = HilbSquare {
            e: fac.e.clone(),
            m: fac.m.clone(),
            e_prime: fac.e.scale(s),
            m_prime: fac.m.scale(ONE / s),
            u: FdMorphism::identity(2),
            v: FdMorphism::identity(3),
        };
        let fill = hilb_diagonal_fill(&sq, 1e-9).unwrap();
        assert!(fill.residual < 1e-9);
        assert!(fill.w.max_abs_diff(&FdMorphism::identity(1).scale(s)) < 1e-12);
    }

    #[test]
    fn fill_rejects_non_commuting_square() {
        let sq = HilbSquare {
            e: FdMorphism::identity(1),
            m: FdMorphism::identity(1),
            e_prime: FdMorphism::identity(1),
            m_prime: FdMorphism::identity(1),
            u: FdMorphism::identity(1),
            v: FdMorphism::from_real(1, 1, &[2.0]),
        };
        assert!(matches!(
            hilb_diagonal_fill(&sq, 1e-9),
            Err(Error::SquareDoesNotCommute(_))
        ));
    }

    #[test]
    fn chain_colimit_examples() {
        let incl = FdMorphism::from_real(2, 1, &[1.0, 0.0]);
        let colim =
            hilb_chain_colimit(&[1, 2, 2], &[incl.clone(), FdMorphism::identity(2)], None).unwrap();
        assert_eq!(colim.object, 2);
        assert_eq!(colim.stable_from, 1);
        assert_eq!(colim.legs[0], incl);

        let id3 = FdMorphism::identity(3);
        let colim = hilb_chain_colimit(&[3, 3, 3], &[id3.clone(), id3], None).unwrap();
        assert_eq!(colim.object, 3);
        assert_eq!(colim.stable_from, 0);

        let dims = [1, 2, 3, 4, 5];
        let steps: Vec<_> = (0..4)
            .map(|n| FdMorphism::from_fn(n + 2, n + 1, |i, j| if i == j { ONE } else { ZERO }))
            .collect();
        assert!(matches!(
            hilb_chain_colimit(&dims, &steps, None),
            Err(Error::NotStabilised(_))
        ));
        assert!(matches!(
            hilb_chain_colimit(&dims, &steps, Some(2)),
            Err(Error::NotStabilised(_))
        ));
    }

    #[test]
    fn chain_colimit_rejects_non_injective_step() {
        let proj = FdMorphism::from_real(1, 2, &[1.0, 0.0]);
        assert!(matches!(
            hilb_chain_colimit(&[2, 1], &[proj], None),
            Err(Error::NotInM)
        ));
    }

    #[test]
    fn classical_structure_examples() {
        let cs = classical_structure(2).unwrap();
        let mut expected = FdMorphism::zeros(4, 2);
        expected.data[0] = ONE;
        expected.data[3 * 2 + 1] = ONE;
        assert_eq!(cs.delta, expected);
        assert!(check_classical(&cs, 1e-9).passed);
        assert_eq!(cs.induced_compact().eta, hilb_compact_structure(2).eta);
        assert!(matches!(
            classical_structure(0),
            Err(Error::ZeroDimensionalClassical)
        ));
        assert!(check_classical(&classical_structure(1).unwrap(), 1e-9).passed);
        assert!(check_classical(&classical_structure(3).unwrap(), 1e-9).passed);
    }

    #[test]
    fn scaled_delta_breaks_isometry_by_three() {
        let mut cs = classical_structure(2).unwrap();
        cs.delta = cs.delta.scale(c(2.0, 0.0));
        let report = check_classical(&cs, 1e-9);
        assert!(!report.passed);
        assert!((report.isometry - 3.0).abs() < 1e-12);
    }

    #[test]
    fn rotated_basis_is_classical() {
        let u = PVSpectrum::qubit(0.3).p;
        let cs = ClassicalStructure::in_basis(&u, 1e-12).unwrap();
        assert!(check_classical(&cs, 1e-9).passed);
        assert!(cs.dagger_symmetry_deviation() < 1e-12);
        assert!(check_snake(&cs.induced_compact(), 1e-9).unwrap().passed);
    }

    #[test]
    fn pvm_examples() {
        assert!(check_pvm(&FdMorphism::identity(2), 1e-9).passed);
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let bell_rows = FdMorphism::from_real(2, 4, &[0.0, h, -h, 0.0, h, 0.0, 0.0, h]);
        assert!(check_pvm(&bell_rows, 1e-9).passed);
        let bad = FdMorphism::from_real(2, 2, &[1.0, 1.0, 0.0, 0.0]);
        let report = check_pvm(&bad, 1e-9);
        assert!(!report.passed);
        assert!((report.deviation - 1.0).abs() < 1e-12);
    }

    #[test]
    fn projectors_sum_to_identity() {
        let m = PVSpectrum::qubit(1.1);
        let sum = m.projector(0).add(&m.projector(1)).unwrap();
        assert!(sum.max_abs_diff(&FdMorphism::identity(2)) < 1e-12);
    }

    #[test]
    fn dual_is_transpose() {
        let f = FdMorphism::new(
            2,
            3,
            vec![
                c(1.0, 2.0),
                c(0.0, -1.0),
                c(3.0, 0.0),
                c(0.5, 0.5),
                c(-2.0, 0.0),
                c(0.0, 4.0),
            ],
        )
        .unwrap();
        let d = dual_of::<FdHilb>(&f).unwrap();
        assert!(d.max_abs_diff(&f.transpose()) < 1e-12);
    }

    #[test]
    fn json_round_trip_is_exact() {
        let f = FdMorphism::new(1, 2, vec![c(0.1, -1e-300), c(1.0 / 3.0, 2.0)]).unwrap();
        let s = f.to_json();
        assert!(s.starts_with(r#"{"rows":1,"cols":2,"re":[1.0000000000000001e-1,"#));
        let back = FdMorphism::from_json(&s).unwrap();
        assert_eq!(back, f);
        assert_eq!(back.to_json(), s);
        assert!(FdMorphism::from_json(r#"{"rows":2,"cols":2,"re":[1],"im":[0]}"#).is_err());
    }
}
