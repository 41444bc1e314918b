//! Ekert-91 key distribution on top of FdHilb.
//!
//! The quantum channel is the ω-chain `D(n) = (X*⊗X)^{⊗n}` with steps
//! `id ⊗ ψ`, where `ψ` is the unit singlet. The categorical unit `η` has
//! norm `√2`, so level `n` of the channel differs from the categorical
//! chain by the scalar `(√2)^n` (and a local unitary on each pair), which
//! [`ChannelChain::scalar`] records. At run time the channel is symbolic:
//! a supply of fresh singlets with a truncation depth.

use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_2, FRAC_PI_4, FRAC_PI_8};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::accessible::{ChainDiagram, ChainGenerator, TruncationMode};
use crate::category::{conjugate_of, DaggerMonoidal};
use crate::error::{Error, Result};
use crate::fdhilb::{check_pvm, hilb_compact_structure, FdHilb, FdMorphism, PVSpectrum, C64};

/// Both parties' measurement angles unless configured otherwise.
pub const DEFAULT_BASES: [f64; 3] = [0.0, FRAC_PI_4, FRAC_PI_2];
/// Angles the intercept-resend eavesdropper draws from.
pub const EVE_BASES: [f64; 3] = [FRAC_PI_4, FRAC_PI_2, 3.0 * FRAC_PI_4];

const STATE_TOL: f64 = 1e-9;

/// `(|01⟩ − |10⟩)/√2`
pub fn bell_pair() -> FdMorphism {
    FdMorphism::from_real(4, 1, &[0.0, FRAC_1_SQRT_2, -FRAC_1_SQRT_2, 0.0])
}

/// The channel chain `D(n) = (X*⊗X)^{⊗n}` on a qubit.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ChannelChain {
    normalized: bool,
}

impl ChannelChain {
    /// Steps attach a unit singlet.
    pub fn normalized() -> Self {
        ChannelChain { normalized: true }
    }

    /// Steps attach the categorical `η`.
    pub fn categorical() -> Self {
        ChannelChain { normalized: false }
    }

    pub fn pair_state(&self) -> FdMorphism {
        if self.normalized {
            bell_pair()
        } else {
            hilb_compact_structure(2).eta
        }
    }

    /// Norm of the categorical level-`n` state over the channel's one.
    pub fn scalar(&self, n: usize) -> f64 {
        if self.normalized {
            2f64.powf(n as f64 / 2.0)
        } else {
            1.0
        }
    }

    pub fn diagram(self) -> ChainDiagram<FdHilb> {
        ChainDiagram::new(Arc::new(self), None, TruncationMode::Window)
    }
}

impl ChainGenerator<FdHilb> for ChannelChain {
    fn object(&self, n: usize) -> usize {
        4usize.pow(n as u32)
    }

    /// `D(n) ≅ D(n) ⊗ I → D(n) ⊗ (X*⊗X)`
    fn step(&self, n: usize) -> FdMorphism {
        let d = self.object(n);
        FdHilb::tensor(&FdMorphism::identity(d), &self.pair_state())
            .matmul(&FdHilb::right_unitor(&d).dagger())
            .expect("shapes agree")
    }
}

/// Splits a basis index of `D(k)` into the first pair and the rest.
pub fn peel(index: usize, k: usize) -> (usize, usize) {
    let rest = 4usize.pow(k as u32 - 1);
    (index / rest, index % rest)
}

pub fn attach(pair: usize, rest: usize, k: usize) -> usize {
    pair * 4usize.pow(k as u32 - 1) + rest
}

/// The truncation of `d: Z → (X*⊗X) ⊗ Z` at level `k ≥ 1`, as the
/// re-indexing `D(k) → (X*⊗X) ⊗ D(k−1)`.
pub fn draw_isomorphism(k: usize) -> Result<FdMorphism> {
    if k == 0 {
        return Err(Error::ChannelExhausted);
    }
    let dim = 4usize.pow(k as u32);
    Ok(FdMorphism::from_fn(dim, dim, |r, c| {
        let (pair, rest) = peel(c, k);
        if attach(pair, rest, k) == r {
            C64::new(1.0, 0.0)
        } else {
            C64::new(0.0, 0.0)
        }
    }))
}

/// A drawn Bell pair and the slot it came from.
#[derive(Clone, Debug)]
pub struct DrawnPair {
    pub slot: usize,
    pub state: FdMorphism,
}

/// The symbolic channel: fresh pairs left in the current truncation.
#[derive(Clone, Debug)]
pub struct ChannelState {
    chain: ChannelChain,
    depth: usize,
    next_slot: usize,
}

impl ChannelState {
    pub fn truncated(chain: ChannelChain, depth: usize) -> Self {
        ChannelState {
            chain,
            depth,
            next_slot: 0,
        }
    }

    pub fn remaining(&self) -> usize {
        self.depth
    }

    pub fn draw(&mut self) -> Result<DrawnPair> {
        if self.depth == 0 {
            return Err(Error::ChannelExhausted);
        }
        self.depth -= 1;
        let slot = self.next_slot;
        self.next_slot += 1;
        Ok(DrawnPair {
            slot,
            state: self.chain.pair_state(),
        })
    }
}

fn check_state(state: &FdMorphism) -> Result<()> {
    if state.rows() != 4 || state.cols() != 1 {
        return Err(Error::InvalidShape("two-qubit state must be 4x1".into()));
    }
    let norm = state.norm();
    if (norm - 1.0).abs() > STATE_TOL {
        return Err(Error::NotNormalised(norm));
    }
    Ok(())
}

fn amplitude(state: &FdMorphism, a: &PVSpectrum, i: usize, b: &PVSpectrum, j: usize) -> C64 {
    let mut sum = C64::new(0.0, 0.0);
    for k in 0..2 {
        for l in 0..2 {
            sum += a.p.get(i, k) * b.p.get(j, l) * state.get(2 * k + l, 0);
        }
    }
    sum
}

/// Born-rule probabilities `P(i, j) = ‖(P_i ⊗ P_j) ψ‖²`.
pub fn joint_probabilities(
    state: &FdMorphism,
    a: &PVSpectrum,
    b: &PVSpectrum,
) -> Result<[[f64; 2]; 2]> {
    check_state(state)?;
    for m in [a, b] {
        if m.p.rows() != 2 || m.p.cols() != 2 {
            return Err(Error::InvalidShape("qubit measurements must be 2x2".into()));
        }
        let report = check_pvm(&m.p, STATE_TOL);
        if !report.passed {
            return Err(Error::NotPvm(report.deviation));
        }
    }
    let mut p = [[0.0; 2]; 2];
    for (i, row) in p.iter_mut().enumerate() {
        for (j, cell) in row.iter_mut().enumerate() {
            *cell = amplitude(state, a, i, b, j).norm_sqr();
        }
    }
    let total: f64 = p.iter().flatten().sum();
    if (total - 1.0).abs() > STATE_TOL {
        return Err(Error::IncompleteMeasurement(total));
    }
    Ok(p)
}

/// Samples the joint outcome of measuring the first qubit with `a` and
/// the second with `b`.
pub fn measure_pair(
    state: &FdMorphism,
    a: &PVSpectrum,
    b: &PVSpectrum,
    rng: &mut impl Rng,
) -> Result<(u8, u8)> {
    let p = joint_probabilities(state, a, b)?;
    let r: f64 = rng.random();
    let mut acc = 0.0;
    for (i, j) in [(0, 0), (0, 1), (1, 0)] {
        acc += p[i][j];
        if r < acc {
            return Ok((i as u8, j as u8));
        }
    }
    Ok((1, 1))
}

/// Measures the second qubit along `theta` and resends the eigenstate
/// that was seen. Returns the post-measurement product state.
pub fn intercept_resend(state: &FdMorphism, theta: f64, rng: &mut impl Rng) -> Result<FdMorphism> {
    check_state(state)?;
    let eve = PVSpectrum::qubit(theta);
    let id = FdMorphism::identity(2);
    let branches = (0..2)
        .map(|k| id.kron(&eve.projector(k)).matmul(state))
        .collect::<Result<Vec<_>>>()?;
    let p0 = branches[0].norm().powi(2);
    let k = usize::from(rng.random::<f64>() >= p0);
    let branch = &branches[k];
    Ok(branch.scale(C64::new(1.0 / branch.norm(), 0.0)))
}

/// `I = {i : a_i ≠ b_i}`, 1-based.
pub fn sift_set(a: &[u8], b: &[u8]) -> Vec<usize> {
    a.iter()
        .zip(b)
        .enumerate()
        .filter(|(_, (x, y))| x != y)
        .map(|(i, _)| i + 1)
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ChoiceMode {
    /// Independent uniform choices from the three measurements.
    #[default]
    Uniform,
    /// Bob copies Alice's choice, so `I = ∅`.
    Matched,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProtocolConfig {
    /// Rounds draw `3n` pairs and restart when more than `n` are sifted out.
    pub n: usize,
    pub alice: [f64; 3],
    pub bob: [f64; 3],
    pub seed: u64,
    pub max_rounds: usize,
    pub eavesdropper: bool,
    pub choices: ChoiceMode,
    /// Size of the auxiliary Bell test recorded as `chsh`; 0 disables it.
    pub bell_test_samples: usize,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        ProtocolConfig {
            n: 1,
            alice: DEFAULT_BASES,
            bob: DEFAULT_BASES,
            seed: 0,
            max_rounds: 8,
            eavesdropper: false,
            choices: ChoiceMode::Uniform,
            bell_test_samples: 0,
        }
    }
}

impl ProtocolConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::Config("n must be at least 1".into()));
        }
        if self.alice.iter().chain(&self.bob).any(|t| !t.is_finite()) {
            return Err(Error::Config("measurement angles must be finite".into()));
        }
        if self.bell_test_samples > 0 && self.bell_test_samples < 1000 {
            return Err(Error::TooFewSamples(self.bell_test_samples));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Round {
    /// Alice's choices, 1-based.
    pub a: Vec<u8>,
    pub b: Vec<u8>,
    pub c: Vec<u8>,
    pub c_prime: Vec<u8>,
    #[serde(rename = "I")]
    pub sifted: Vec<usize>,
    pub restart: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProtocolTranscript {
    pub round: Vec<Round>,
    pub key_alice: String,
    pub key_bob: String,
    pub chsh: Option<f64>,
    /// Channel truncation depth of the last round.
    pub depth: usize,
    pub seed: u64,
}

impl ProtocolTranscript {
    pub fn terminated(&self) -> bool {
        self.round.last().is_some_and(|r| !r.restart)
    }

    pub fn keys_agree(&self) -> bool {
        self.key_alice == self.key_bob
    }

    pub fn restarts(&self) -> usize {
        self.round.iter().filter(|r| r.restart).count()
    }

    /// Kept indices (1-based) of the final round.
    pub fn key_indices(&self) -> Vec<usize> {
        match self.round.last() {
            Some(r) if !r.restart => (1..=r.a.len()).filter(|i| !r.sifted.contains(i)).collect(),
            _ => Vec::new(),
        }
    }
}

fn bits(v: impl IntoIterator<Item = u8>) -> String {
    v.into_iter()
        .map(|b| if b == 0 { '0' } else { '1' })
        .collect()
}

/// One run of the protocol with its own generator seeded from `cfg.seed`.
pub fn run_protocol(cfg: &ProtocolConfig) -> Result<ProtocolTranscript> {
    run_protocol_with(cfg, &mut ChaCha8Rng::seed_from_u64(cfg.seed))
}

/// The generator for run `index` of a batch.
pub fn run_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Independent runs in parallel, each with [`run_rng`]; results are in
/// run order.
pub fn run_batch(cfg: &ProtocolConfig, runs: usize) -> Vec<Result<ProtocolTranscript>> {
    (0..runs)
        .into_par_iter()
        .map(|i| run_protocol_with(cfg, &mut run_rng(cfg.seed, i as u64)))
        .collect()
}

pub fn run_protocol_with(cfg: &ProtocolConfig, rng: &mut impl Rng) -> Result<ProtocolTranscript> {
    cfg.validate()?;
    let alice = cfg.alice.map(PVSpectrum::qubit);
    let bob = cfg.bob.map(PVSpectrum::qubit);
    let pairs = 3 * cfg.n;
    let mut transcript = ProtocolTranscript {
        round: Vec::new(),
        key_alice: String::new(),
        key_bob: String::new(),
        chsh: None,
        depth: 0,
        seed: cfg.seed,
    };
    let mut depth = pairs;
    for _ in 0..cfg.max_rounds {
        transcript.depth = depth;
        let mut channel = ChannelState::truncated(ChannelChain::normalized(), depth);
        let a: Vec<u8> = (0..pairs).map(|_| rng.random_range(1..=3)).collect();
        let b: Vec<u8> = match cfg.choices {
            ChoiceMode::Uniform => (0..pairs).map(|_| rng.random_range(1..=3)).collect(),
            ChoiceMode::Matched => a.clone(),
        };
        let mut c = Vec::with_capacity(pairs);
        let mut c_prime = Vec::with_capacity(pairs);
        for i in 0..pairs {
            let mut state = channel.draw()?.state;
            if cfg.eavesdropper {
                let theta = EVE_BASES[rng.random_range(0..3)];
                state = intercept_resend(&state, theta, rng)?;
            }
            let (x, y) = measure_pair(
                &state,
                &alice[usize::from(a[i] - 1)],
                &bob[usize::from(b[i] - 1)],
                rng,
            )?;
            c.push(x);
            c_prime.push(y);
        }
        let sifted = sift_set(&a, &b);
        let restart = sifted.len() > cfg.n;
        if !restart {
            let kept = (1..=pairs).filter(|i| !sifted.contains(i));
            transcript.key_alice = bits(kept.clone().map(|i| c[i - 1]));
            transcript.key_bob = bits(kept.map(|i| 1 - c_prime[i - 1]));
        }
        transcript.round.push(Round {
            a,
            b,
            c,
            c_prime,
            sifted,
            restart,
        });
        if !restart {
            break;
        }
        depth *= 2;
    }
    if cfg.bell_test_samples > 0 {
        let source = if cfg.eavesdropper {
            BellSource::InterceptResend
        } else {
            BellSource::Singlet
        };
        transcript.chsh = Some(chsh_estimate(
            source,
            &ChshSettings::default(),
            cfg.bell_test_samples,
            rng,
        )?);
    }
    if !transcript.terminated() {
        return Err(Error::NonTermination {
            rounds: cfg.max_rounds,
            transcript: Box::new(transcript),
        });
    }
    Ok(transcript)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BellSource {
    Singlet,
    /// `|00⟩`
    Product,
    /// Singlet with the second qubit intercepted along a uniform angle
    /// from [`EVE_BASES`].
    InterceptResend,
}

/// Angles `(a, a')` and `(b, b')`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChshSettings {
    pub alice: [f64; 2],
    pub bob: [f64; 2],
}

impl Default for ChshSettings {
    fn default() -> Self {
        ChshSettings {
            alice: [0.0, FRAC_PI_4],
            bob: [FRAC_PI_8, 3.0 * FRAC_PI_8],
        }
    }
}

fn source_state(source: BellSource) -> FdMorphism {
    match source {
        BellSource::Product => FdMorphism::basis(4, 0),
        BellSource::Singlet | BellSource::InterceptResend => bell_pair(),
    }
}

fn combine(e: [[f64; 2]; 2]) -> f64 {
    (e[0][0] - e[0][1] + e[1][0] + e[1][1]).abs()
}

/// Monte-Carlo CHSH statistic `|E(a,b) − E(a,b') + E(a',b) + E(a',b')|`,
/// cycling through the four settings.
pub fn chsh_estimate(
    source: BellSource,
    settings: &ChshSettings,
    samples: usize,
    rng: &mut impl Rng,
) -> Result<f64> {
    if samples < 1000 {
        return Err(Error::TooFewSamples(samples));
    }
    let alice = settings.alice.map(PVSpectrum::qubit);
    let bob = settings.bob.map(PVSpectrum::qubit);
    let base = source_state(source);
    let mut sum = [[0.0; 2]; 2];
    let mut count = [[0usize; 2]; 2];
    for s in 0..samples {
        let (i, j) = ((s / 2) % 2, s % 2);
        let state = match source {
            BellSource::InterceptResend => {
                let theta = EVE_BASES[rng.random_range(0..3)];
                intercept_resend(&base, theta, rng)?
            }
            _ => base.clone(),
        };
        let (x, y) = measure_pair(&state, &alice[i], &bob[j], rng)?;
        sum[i][j] += if x == y { 1.0 } else { -1.0 };
        count[i][j] += 1;
    }
    let mut e = [[0.0; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            e[i][j] = sum[i][j] / count[i][j] as f64;
        }
    }
    Ok(combine(e))
}

fn correlation(p: [[f64; 2]; 2]) -> f64 {
    p[0][0] + p[1][1] - p[0][1] - p[1][0]
}

/// The exact CHSH value by Born-rule evaluation, averaging over the
/// eavesdropper's angle and outcome.
pub fn chsh_analytic(source: BellSource, settings: &ChshSettings) -> Result<f64> {
    let alice = settings.alice.map(PVSpectrum::qubit);
    let bob = settings.bob.map(PVSpectrum::qubit);
    let base = source_state(source);
    let mut e = [[0.0; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            e[i][j] = match source {
                BellSource::InterceptResend => {
                    let id = FdMorphism::identity(2);
                    let mut total = 0.0;
                    for theta in EVE_BASES {
                        let eve = PVSpectrum::qubit(theta);
                        for k in 0..2 {
                            let branch = id.kron(&eve.projector(k)).matmul(&base)?;
                            let w = branch.norm().powi(2);
                            if w < 1e-15 {
                                continue;
                            }
                            let post = branch.scale(C64::new(1.0 / branch.norm(), 0.0));
                            total +=
                                w * correlation(joint_probabilities(&post, &alice[i], &bob[j])?);
                        }
                    }
                    total / EVE_BASES.len() as f64
                }
                _ => correlation(joint_probabilities(&base, &alice[i], &bob[j])?),
            };
        }
    }
    Ok(combine(e))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CorrectnessReport {
    pub passed: bool,
    /// `(ε⊗id)∘(m_*⊗m)∘η` against `(id⊗ε)∘(m_*⊗m)∘η`.
    pub sides: f64,
    /// Worst of the two sides against `ε†`.
    pub counit: f64,
    /// `(m_*⊗m)∘η` against `⌜id_C⌝`.
    pub name: f64,
}

impl CorrectnessReport {
    pub fn max_deviation(&self) -> f64 {
        self.sides.max(self.counit).max(self.name)
    }
}

/// Evaluates both legs of the key-agreement square for the measurement
/// `m: X → C`: `(m_*⊗m)∘η_X` post-composed with the counit on either
/// factor, and compares each with `ε†`.
pub fn check_correctness_theorem(m: &PVSpectrum, tol: f64) -> Result<CorrectnessReport> {
    let pvm = check_pvm(&m.p, tol);
    if !pvm.passed {
        return Err(Error::NotPvm(pvm.deviation));
    }
    let x = m.p.cols();
    let c = m.p.rows();
    let eps = &m.classical.epsilon;
    let id_c = FdMorphism::identity(c);
    let m_star = conjugate_of::<FdHilb>(&m.p)?;
    let shared = FdHilb::tensor(&m_star, &m.p).matmul(&hilb_compact_structure(x).eta)?;
    let left = FdHilb::left_unitor(&c)
        .matmul(&FdHilb::tensor(eps, &id_c))?
        .matmul(&shared)?;
    let right = FdHilb::right_unitor(&c)
        .matmul(&FdHilb::tensor(&id_c, eps))?
        .matmul(&shared)?;
    let eps_dag = eps.dagger();
    let name_id = m.classical.induced_compact().eta;
    let mut report = CorrectnessReport {
        passed: false,
        sides: left.max_abs_diff(&right),
        counit: left
            .max_abs_diff(&eps_dag)
            .max(right.max_abs_diff(&eps_dag)),
        name: shared.max_abs_diff(&name_id),
    };
    report.passed = report.max_deviation() <= tol;
    Ok(report)
}
