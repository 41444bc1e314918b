//! Python bindings: relations, matrices, factorisations, suites and the protocol.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use cataccess::accessible::AnyChain;
use cataccess::category::{check_snake, dual_of, CompactClosed};
use cataccess::fdhilb::{hilb_factor, FdHilb, FdMorphism, PVSpectrum, C64};
use cataccess::qkd::{
    bell_pair as core_bell_pair, check_correctness_theorem, chsh_estimate, run_protocol, BellSource,
    ChshSettings, ProtocolConfig, ProtocolTranscript,
};
use cataccess::rel::{rel_factor, Carrier, Label, Rel, RelSquare, Relation as CoreRelation};
use cataccess::suites::{run_suite as core_run_suite, Suite};
use cataccess::Error;

fn err(e: Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn carrier(labels: Vec<String>) -> Carrier {
    Carrier::new(labels.into_iter().map(Label::from))
}

fn names(c: &Carrier) -> Vec<String> {
    c.iter().map(Label::to_string).collect()
}

/// A relation between finite sets of labels.
#[pyclass(module = "cataccess", frozen, eq, skip_from_py_object)]
#[derive(Clone, PartialEq)]
struct Relation(CoreRelation);

#[pymethods]
impl Relation {
    #[new]
    fn new(source: Vec<String>, target: Vec<String>, pairs: Vec<(String, String)>) -> PyResult<Self> {
        let pairs = pairs.into_iter().map(|(a, b)| (Label::from(a), Label::from(b)));
        CoreRelation::new(carrier(source), carrier(target), pairs)
            .map(Relation)
            .map_err(err)
    }

    #[staticmethod]
    fn identity(labels: Vec<String>) -> Self {
        Relation(CoreRelation::identity(&carrier(labels)))
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        serde_json::from_str(text)
            .map(Relation)
            .map_err(|e| err(e.into()))
    }

    fn to_json(&self) -> String {
        serde_json::to_string(&self.0).expect("relations serialize")
    }

    #[getter]
    fn source(&self) -> Vec<String> {
        names(self.0.source())
    }

    #[getter]
    fn target(&self) -> Vec<String> {
        names(self.0.target())
    }

    #[getter]
    fn pairs(&self) -> Vec<(String, String)> {
        self.0.pairs().map(|(a, b)| (a.to_string(), b.to_string())).collect()
    }

    /// `other ∘ self`.
    fn then(&self, other: &Relation) -> PyResult<Relation> {
        self.0.then(&other.0).map(Relation).map_err(err)
    }

    fn converse(&self) -> Relation {
        Relation(self.0.converse())
    }

    fn tensor(&self, other: &Relation) -> Relation {
        Relation(self.0.tensor(&other.0))
    }

    /// The compact-closed dual, computed through the snake composite.
    fn dual(&self) -> PyResult<Relation> {
        dual_of::<Rel>(&self.0).map(Relation).map_err(err)
    }

    fn is_functional(&self) -> bool {
        self.0.is_functional()
    }

    fn is_opposite_functional(&self) -> bool {
        self.0.is_opposite_functional()
    }

    /// `(e, m)` with `self = m ∘ e` through the graph.
    fn factor(&self) -> (Relation, Relation) {
        let f = rel_factor(&self.0);
        (Relation(f.e), Relation(f.m))
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }

    fn __repr__(&self) -> String {
        format!("Relation({:?})", self.0)
    }
}

/// A complex matrix, the morphism `cols → rows` of finite-dimensional
/// Hilbert spaces.
#[pyclass(module = "cataccess", frozen, eq, skip_from_py_object)]
#[derive(Clone, PartialEq)]
struct Matrix(FdMorphism);

#[pymethods]
impl Matrix {
    /// Row-major entries.
    #[new]
    fn new(rows: usize, cols: usize, data: Vec<C64>) -> PyResult<Self> {
        FdMorphism::new(rows, cols, data).map(Matrix).map_err(err)
    }

    #[staticmethod]
    fn identity(n: usize) -> Self {
        Matrix(FdMorphism::identity(n))
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        FdMorphism::from_json(text).map(Matrix).map_err(err)
    }

    fn to_json(&self) -> String {
        self.0.to_json()
    }

    #[getter]
    fn shape(&self) -> (usize, usize) {
        (self.0.rows(), self.0.cols())
    }

    #[getter]
    fn data(&self) -> Vec<C64> {
        self.0.data().to_vec()
    }

    fn __getitem__(&self, index: (usize, usize)) -> PyResult<C64> {
        let (r, c) = index;
        if r >= self.0.rows() || c >= self.0.cols() {
            return Err(PyValueError::new_err(format!("index ({r}, {c}) out of range")));
        }
        Ok(self.0.get(r, c))
    }

    fn __matmul__(&self, other: &Matrix) -> PyResult<Matrix> {
        self.0.matmul(&other.0).map(Matrix).map_err(err)
    }

    fn kron(&self, other: &Matrix) -> Matrix {
        Matrix(self.0.kron(&other.0))
    }

    fn dagger(&self) -> Matrix {
        Matrix(self.0.dagger())
    }

    fn transpose(&self) -> Matrix {
        Matrix(self.0.transpose())
    }

    /// The compact-closed dual, computed through the snake composite.
    fn dual(&self) -> PyResult<Matrix> {
        dual_of::<FdHilb>(&self.0).map(Matrix).map_err(err)
    }

    #[pyo3(signature = (tol = 1e-10))]
    fn rank(&self, tol: f64) -> usize {
        self.0.rank(tol)
    }

    fn max_abs_diff(&self, other: &Matrix) -> f64 {
        self.0.max_abs_diff(&other.0)
    }

    /// `(e, m)` with `self = m e`, `e` a coisometry and `m` injective.
    fn factor(&self) -> (Matrix, Matrix) {
        let f = hilb_factor(&self.0);
        (Matrix(f.e), Matrix(f.m))
    }

    fn __repr__(&self) -> String {
        format!("Matrix({}x{})", self.0.rows(), self.0.cols())
    }
}

/// One protocol run.
#[pyclass(module = "cataccess", frozen)]
struct Transcript(ProtocolTranscript);

#[pymethods]
impl Transcript {
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        serde_json::from_str(text)
            .map(Transcript)
            .map_err(|e| err(e.into()))
    }

    fn to_json(&self) -> String {
        serde_json::to_string(&self.0).expect("transcripts serialize")
    }

    #[getter]
    fn key_alice(&self) -> &str {
        &self.0.key_alice
    }

    #[getter]
    fn key_bob(&self) -> &str {
        &self.0.key_bob
    }

    #[getter]
    fn chsh(&self) -> Option<f64> {
        self.0.chsh
    }

    #[getter]
    fn rounds(&self) -> usize {
        self.0.round.len()
    }

    #[getter]
    fn restarts(&self) -> usize {
        self.0.restarts()
    }

    #[getter]
    fn terminated(&self) -> bool {
        self.0.terminated()
    }

    fn keys_agree(&self) -> bool {
        self.0.keys_agree()
    }

    /// Kept 1-based indices of the final round.
    fn key_indices(&self) -> Vec<usize> {
        self.0.key_indices()
    }
}

/// Runs the protocol. A run that exhausts its rounds is returned with
/// `terminated == False` rather than raised.
#[pyfunction]
#[pyo3(signature = (n, seed = 0, max_rounds = 8, eavesdrop = false, bell_test_samples = 0))]
fn protocol(n: usize, seed: u64, max_rounds: usize, eavesdrop: bool, bell_test_samples: usize) -> PyResult<Transcript> {
    let cfg = ProtocolConfig {
        n,
        seed,
        max_rounds,
        eavesdropper: eavesdrop,
        bell_test_samples,
        ..ProtocolConfig::default()
    };
    match run_protocol(&cfg) {
        Ok(t) => Ok(Transcript(t)),
        Err(Error::NonTermination { transcript, .. }) => Ok(Transcript(*transcript)),
        Err(e) => Err(err(e)),
    }
}

/// The singlet `(|01⟩ − |10⟩)/√2`.
#[pyfunction]
fn bell_pair() -> Matrix {
    Matrix(core_bell_pair())
}

/// `source` is `"singlet"`, `"product"` or `"intercept-resend"`.
#[pyfunction]
#[pyo3(signature = (source = "singlet", samples = 100_000, seed = 0))]
fn chsh(source: &str, samples: usize, seed: u64) -> PyResult<f64> {
    let source = match source {
        "singlet" => BellSource::Singlet,
        "product" => BellSource::Product,
        "intercept-resend" => BellSource::InterceptResend,
        other => return Err(PyValueError::new_err(format!("unknown Bell source {other:?}"))),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    chsh_estimate(source, &ChshSettings::default(), samples, &mut rng).map_err(err)
}

/// Snake deviations `(object, dual)` for a carrier of `size` atoms
/// (`category="rel"`) or a space of dimension `size` (`"fdhilb"`).
#[pyfunction]
#[pyo3(signature = (category, size, tol = 1e-9))]
fn snake(category: &str, size: usize, tol: f64) -> PyResult<(bool, f64, f64)> {
    let report = match category {
        "rel" => check_snake(&Rel::compact_structure(&Carrier::range(size)), tol),
        "fdhilb" => check_snake(&FdHilb::compact_structure(&size), tol),
        other => return Err(PyValueError::new_err(format!("unknown category {other:?}"))),
    }
    .map_err(err)?;
    Ok((report.passed, report.object_deviation, report.dual_deviation))
}

/// `"none"`, `"unique"` or `"multiple"` diagonal fills for the square
/// `v ∘ r = r' ∘ u` with both sides graph-factorised.
#[pyfunction]
fn fill_count(r: &Relation, r_prime: &Relation, u: &Relation, v: &Relation) -> PyResult<&'static str> {
    let sq = RelSquare::from_factorisations(&r.0, &r_prime.0, u.0.clone(), v.0.clone());
    if !sq.commutes().map_err(err)? {
        return Err(PyValueError::new_err("square does not commute"));
    }
    Ok(match sq.fill_count().map_err(err)? {
        cataccess::rel::FillCount::None => "none",
        cataccess::rel::FillCount::Unique => "unique",
        cataccess::rel::FillCount::Multiple => "multiple",
    })
}

/// Deviations of both protocol composites for the spectrum `m`.
#[pyfunction]
#[pyo3(signature = (m, tol = 1e-9))]
fn correctness<'py>(py: Python<'py>, m: &Matrix, tol: f64) -> PyResult<Bound<'py, PyDict>> {
    let spectrum = PVSpectrum::new(m.0.clone(), tol).map_err(err)?;
    let report = check_correctness_theorem(&spectrum, tol).map_err(err)?;
    let d = PyDict::new(py);
    d.set_item("passed", report.passed)?;
    d.set_item("sides", report.sides)?;
    d.set_item("counit", report.counit)?;
    d.set_item("name", report.name)?;
    Ok(d)
}

/// JSON report of a property suite.
#[pyfunction]
#[pyo3(signature = (suite, seed = 0, tol = 1e-9))]
fn run_suite(py: Python<'_>, suite: &str, seed: u64, tol: f64) -> PyResult<String> {
    let suite: Suite = suite.parse().map_err(err)?;
    let report = py.detach(|| core_run_suite(suite, seed, tol));
    Ok(serde_json::to_string(&report).expect("reports serialize"))
}

/// JSON truncation at `depth` of a chain given by its JSON spec.
#[pyfunction]
fn truncate_chain(spec: &str, depth: usize) -> PyResult<String> {
    let chain = AnyChain::from_json(spec).map_err(err)?;
    let value = chain.truncation_json(depth).map_err(err)?;
    Ok(value.to_string())
}

#[pymodule]
#[pyo3(name = "cataccess")]
fn cataccess_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Relation>()?;
    m.add_class::<Matrix>()?;
    m.add_class::<Transcript>()?;
    m.add_function(wrap_pyfunction!(protocol, m)?)?;
    m.add_function(wrap_pyfunction!(bell_pair, m)?)?;
    m.add_function(wrap_pyfunction!(chsh, m)?)?;
    m.add_function(wrap_pyfunction!(snake, m)?)?;
    m.add_function(wrap_pyfunction!(fill_count, m)?)?;
    m.add_function(wrap_pyfunction!(correctness, m)?)?;
    m.add_function(wrap_pyfunction!(run_suite, m)?)?;
    m.add_function(wrap_pyfunction!(truncate_chain, m)?)?;
    Ok(())
}
