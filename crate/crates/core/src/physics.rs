//! Cluster-Ising ground states, phase labels and dataset generation.
//!
//! `H = −Σ Z_i X_{i+1} Z_{i+2} − h₁ Σ X_i − h₂ Σ X_i X_{i+1}`, with the sums
//! either stopping at the chain end (open) or wrapping around (periodic).

use std::io::{Read, Write};
use std::str::FromStr;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::ansatz::build_xy_target;
use crate::curriculum::TaskDataset;
use crate::rng::{self, seeded};
use crate::sim::{haar_state, HaarMode, StateVector};
use crate::{Error, Result};

pub const MAX_PHYSICS_QUBITS: usize = 10;
pub const DEGENERACY_GAP: f64 = 1e-10;
pub const STRING_ORDER_THRESHOLD: f64 = 0.5;
const DENSE_LIMIT: usize = 6;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Boundary {
    Open,
    Periodic,
}

impl FromStr for Boundary {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "open" => Ok(Boundary::Open),
            "periodic" => Ok(Boundary::Periodic),
            other => Err(Error::InvalidArgument(format!("unknown boundary {other:?}"))),
        }
    }
}

impl std::fmt::Display for Boundary {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Boundary::Open => "open",
            Boundary::Periodic => "periodic",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HamiltonianSpec {
    pub num_qubits: usize,
    pub h1: f64,
    pub h2: f64,
    pub boundary: Boundary,
}

impl HamiltonianSpec {
    pub fn new(num_qubits: usize, h1: f64, h2: f64, boundary: Boundary) -> Self {
        Self {
            num_qubits,
            h1,
            h2,
            boundary,
        }
    }
}

/// A real Pauli string `coeff · X^{x_mask} Z^{z_mask}` with disjoint masks.
#[derive(Clone, Copy, Debug, PartialEq)]
struct Term {
    x_mask: usize,
    z_mask: usize,
    coeff: f64,
}

/// Matrix-free cluster-Ising Hamiltonian.
#[derive(Clone, Debug, PartialEq)]
pub struct ClusterHamiltonian {
    spec: HamiltonianSpec,
    terms: Vec<Term>,
}

pub fn cluster_hamiltonian(spec: HamiltonianSpec) -> Result<ClusterHamiltonian> {
    let q = spec.num_qubits;
    let min = match spec.boundary {
        Boundary::Open => 2,
        Boundary::Periodic => 3,
    };
    if q < min {
        return Err(Error::InvalidArgument(format!(
            "{} chain needs at least {min} qubits, got {q}",
            spec.boundary
        )));
    }
    if q > MAX_PHYSICS_QUBITS {
        return Err(Error::TooManyQubits {
            what: "cluster Hamiltonian",
            max: MAX_PHYSICS_QUBITS,
            actual: q,
        });
    }
    let (n_zxz, n_xx) = match spec.boundary {
        Boundary::Open => (q.saturating_sub(2), q - 1),
        Boundary::Periodic => (q, q),
    };
    let bit = |i: usize| 1usize << (i % q);
    let mut terms = Vec::new();
    for i in 0..n_zxz {
        terms.push(Term {
            x_mask: bit(i + 1),
            z_mask: bit(i) | bit(i + 2),
            coeff: -1.0,
        });
    }
    for i in 0..q {
        terms.push(Term {
            x_mask: bit(i),
            z_mask: 0,
            coeff: -spec.h1,
        });
    }
    for i in 0..n_xx {
        terms.push(Term {
            x_mask: bit(i) | bit(i + 1),
            z_mask: 0,
            coeff: -spec.h2,
        });
    }
    Ok(ClusterHamiltonian { spec, terms })
}

impl ClusterHamiltonian {
    pub fn spec(&self) -> &HamiltonianSpec {
        &self.spec
    }

    pub fn dim(&self) -> usize {
        1 << self.spec.num_qubits
    }

    /// `out = H v`.
    pub fn matvec(&self, v: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        for t in &self.terms {
            for (k, o) in out.iter_mut().enumerate() {
                let sign = if (k & t.z_mask).count_ones() % 2 == 0 { 1.0 } else { -1.0 };
                *o += t.coeff * sign * v[k ^ t.x_mask];
            }
        }
    }

    pub fn dense(&self) -> DMatrix<f64> {
        let d = self.dim();
        let mut m = DMatrix::zeros(d, d);
        for t in &self.terms {
            for k in 0..d {
                let sign = if (k & t.z_mask).count_ones() % 2 == 0 { 1.0 } else { -1.0 };
                m[(k, k ^ t.x_mask)] += t.coeff * sign;
            }
        }
        m
    }

    pub fn expectation(&self, v: &[f64]) -> f64 {
        let mut hv = vec![0.0; v.len()];
        self.matvec(v, &mut hv);
        dot(v, &hv)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn axpy(y: &mut [f64], a: f64, x: &[f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

fn normalize(v: &mut [f64]) -> f64 {
    let n = dot(v, v).sqrt();
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
    n
}

fn orthogonalize(v: &mut [f64], basis: &[Vec<f64>]) {
    // Two passes keep the basis orthogonal to machine precision.
    for _ in 0..2 {
        for b in basis {
            let c = dot(v, b);
            axpy(v, -c, b);
        }
    }
}

/// Flips the sign so that the first amplitude of non-negligible magnitude is
/// positive.
fn fix_sign(v: &mut [f64]) {
    if let Some(&first) = v.iter().find(|x| x.abs() > 1e-12) {
        if first < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GroundState {
    pub energy: f64,
    pub state: StateVector,
    /// `E₁ − E₀`.
    pub gap: f64,
    pub degenerate: bool,
}

fn residual(h: &ClusterHamiltonian, v: &[f64], e: f64) -> f64 {
    let mut hv = vec![0.0; v.len()];
    h.matvec(v, &mut hv);
    axpy(&mut hv, -e, v);
    dot(&hv, &hv).sqrt()
}

const RESIDUAL_TOL: f64 = 1e-10;
const MAX_KRYLOV: usize = 120;
const MAX_RESTARTS: usize = 30;

/// Lowest eigenpair of `h` restricted to the orthogonal complement of
/// `deflate`, by restarted Lanczos with full reorthogonalisation.
fn lanczos_lowest(h: &ClusterHamiltonian, deflate: &[Vec<f64>], seed: u64) -> Result<(f64, Vec<f64>)> {
    let n = h.dim();
    let space = n - deflate.len();
    if space == 0 {
        return Err(Error::Solver("no space left after deflation".into()));
    }
    let mut rng = seeded(seed);
    let mut start: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
    let mut best: Option<(f64, Vec<f64>)> = None;
    for _ in 0..MAX_RESTARTS {
        orthogonalize(&mut start, deflate);
        if normalize(&mut start) == 0.0 {
            return Err(Error::Solver("Lanczos start vector vanished".into()));
        }
        let kmax = space.min(MAX_KRYLOV);
        let mut basis: Vec<Vec<f64>> = vec![start.clone()];
        let mut alphas = Vec::with_capacity(kmax);
        let mut betas: Vec<f64> = Vec::with_capacity(kmax);
        let mut w = vec![0.0; n];
        let mut ritz = (0.0, vec![1.0]);
        for j in 0..kmax {
            h.matvec(&basis[j], &mut w);
            let a = dot(&basis[j], &w);
            alphas.push(a);
            orthogonalize(&mut w, deflate);
            orthogonalize(&mut w, &basis);
            let b = dot(&w, &w).sqrt();
            let last = j + 1 == kmax || b < 1e-13 * (1.0 + a.abs());
            if last || j % 5 == 4 {
                ritz = tridiagonal_lowest(&alphas, &betas);
                let s_last = ritz.1[j].abs();
                if last || b * s_last < 0.1 * RESIDUAL_TOL {
                    break;
                }
            }
            betas.push(b);
            basis.push(w.iter().map(|x| x / b).collect());
        }
        let mut v = vec![0.0; n];
        for (s, b) in ritz.1.iter().zip(&basis) {
            axpy(&mut v, *s, b);
        }
        orthogonalize(&mut v, deflate);
        normalize(&mut v);
        let e = h.expectation(&v);
        if residual(h, &v, e) <= RESIDUAL_TOL {
            return Ok((e, v));
        }
        if best.as_ref().is_none_or(|(be, _)| e < *be) {
            best = Some((e, v.clone()));
        }
        start = v;
    }
    let (e, v) = best.expect("at least one restart");
    let r = residual(h, &v, e);
    Err(Error::Solver(format!("Lanczos did not converge (residual {r:.3e})")))
}

fn tridiagonal_lowest(alphas: &[f64], betas: &[f64]) -> (f64, Vec<f64>) {
    let k = alphas.len();
    let mut t = DMatrix::<f64>::zeros(k, k);
    for i in 0..k {
        t[(i, i)] = alphas[i];
        if i + 1 < k {
            t[(i, i + 1)] = betas[i];
            t[(i + 1, i)] = betas[i];
        }
    }
    let eig = SymmetricEigen::new(t);
    let i = argmin(eig.eigenvalues.as_slice());
    (eig.eigenvalues[i], eig.eigenvectors.column(i).iter().copied().collect())
}

fn argmin(xs: &[f64]) -> usize {
    (0..xs.len())
        .min_by(|&a, &b| xs[a].total_cmp(&xs[b]).then(a.cmp(&b)))
        .expect("non-empty")
}

fn real_state(v: Vec<f64>, q: usize) -> StateVector {
    let amps = v.into_iter().map(|x| Complex64::new(x, 0.0)).collect();
    StateVector::from_raw(amps, q)
}

/// Matrix-free ground state. A second, deflated run provides the gap.
pub fn lanczos_ground_state(h: &ClusterHamiltonian, seed: u64) -> Result<GroundState> {
    let (e0, mut v0) = lanczos_lowest(h, &[], seed)?;
    let gap = if h.dim() > 1 {
        let (e1, _) = lanczos_lowest(h, std::slice::from_ref(&v0), rng::derive_seed(seed, &[1]))?;
        e1 - e0
    } else {
        f64::INFINITY
    };
    fix_sign(&mut v0);
    Ok(GroundState {
        energy: e0,
        state: real_state(v0, h.spec.num_qubits),
        gap,
        degenerate: gap < DEGENERACY_GAP,
    })
}

/// Full dense diagonalisation.
pub fn dense_ground_state(h: &ClusterHamiltonian) -> Result<GroundState> {
    let eig = SymmetricEigen::new(h.dense());
    let vals = eig.eigenvalues.as_slice();
    let i = argmin(vals);
    let e0 = vals[i];
    let gap = vals
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != i)
        .map(|(_, &e)| e - e0)
        .fold(f64::INFINITY, f64::min);
    let mut v: Vec<f64> = eig.eigenvectors.column(i).iter().copied().collect();
    normalize(&mut v);
    fix_sign(&mut v);
    Ok(GroundState {
        energy: h.expectation(&v),
        state: real_state(v, h.spec.num_qubits),
        gap,
        degenerate: gap < DEGENERACY_GAP,
    })
}

/// Dense for small chains, Lanczos otherwise (dense again if Lanczos fails).
pub fn ground_state(h: &ClusterHamiltonian) -> Result<GroundState> {
    if h.spec.num_qubits <= DENSE_LIMIT {
        return dense_ground_state(h);
    }
    let seed = rng::derive_seed(0x6c61_6e63, &[h.spec.h1.to_bits(), h.spec.h2.to_bits()]);
    lanczos_ground_state(h, seed).or_else(|_| dense_ground_state(h))
}

/// Exact phase on the `h₂ = 0` line: SPT (1) for `h₁ < 1`, else 0.
pub fn analytic_label(h1: f64, h2: f64) -> Result<u8> {
    if h2 != 0.0 {
        return Err(Error::InvalidArgument(format!(
            "analytic label needs h2 = 0, got {h2}"
        )));
    }
    Ok(u8::from(h1 < 1.0))
}

/// `⟨Z_a X_{a+1} X_{a+3} ⋯ X_{b−1} Z_b⟩`, a product of the cluster stabilisers
/// `Z_i X_{i+1} Z_{i+2}` for `i = a, a+2, …, b−2`. The span is `a = 1` for even
/// chains and `a = 0` for odd ones, ending at the last qubit.
pub fn string_order(state: &StateVector) -> Result<f64> {
    let q = state.num_qubits();
    if q < 4 {
        return Err(Error::InvalidArgument(format!(
            "string order needs at least 4 qubits, got {q}"
        )));
    }
    let a = if q % 2 == 0 { 1 } else { 0 };
    let b = q - 1;
    let z_mask = (1usize << a) | (1usize << b);
    let x_mask = (a + 1..b).step_by(2).fold(0usize, |m, i| m | (1 << i));
    let amps = state.amplitudes();
    let value: Complex64 = amps
        .iter()
        .enumerate()
        .map(|(k, amp)| {
            // ⟨ψ|P|ψ⟩ with P|k⟩ = (−1)^{|k ∧ z|} |k ⊕ x⟩
            let sign = if (k & z_mask).count_ones() % 2 == 0 { 1.0 } else { -1.0 };
            amps[k ^ x_mask].conj() * amp * sign
        })
        .sum();
    Ok(value.re)
}

pub fn string_order_label(state: &StateVector, threshold: f64) -> Result<u8> {
    Ok(u8::from(string_order(state)?.abs() > threshold))
}

#[derive(Clone, Debug, PartialEq)]
pub struct LabeledState {
    pub state: StateVector,
    pub label: u8,
    pub true_label: u8,
    pub h1: f64,
    pub h2: f64,
}

/// Flips each label independently with probability `p`.
pub fn corrupt_labels<R: Rng + ?Sized>(
    data: &[LabeledState],
    p: f64,
    rng: &mut R,
) -> Result<Vec<LabeledState>> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::InvalidArgument(format!("flip probability must be in [0, 1], got {p}")));
    }
    Ok(data
        .iter()
        .map(|s| {
            let mut s = s.clone();
            if rng.random::<f64>() < p {
                s.label = 1 - s.label;
            }
            s
        })
        .collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PhaseKind {
    /// 40 points on `h₂ = 0`, `h₁ ∈ [0, 1.6]`, analytic labels.
    Train,
    /// 40 `h₁` values at each of [`TEST_H2`], string-order labels.
    Test,
    /// 64×64 grid over `[0, 1.6] × [−1.6, 1.6]`, string-order labels for
    /// reference only.
    Heatmap,
}

pub const TEST_H2: [f64; 10] = [
    0.8439, 0.6636, 0.5033, 0.3631, 0.2229, 0.09766, -0.02755, -0.1377, -0.2479, -0.3531,
];
pub const PHASE_POINTS: usize = 40;
pub const HEATMAP_SIDE: usize = 64;

pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => vec![],
        1 => vec![lo],
        _ => (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect(),
    }
}

/// Grid points `(h₁, h₂)` of a dataset kind, in generation order.
pub fn phase_points(kind: PhaseKind) -> Vec<(f64, f64)> {
    match kind {
        PhaseKind::Train => linspace(0.0, 1.6, PHASE_POINTS).into_iter().map(|h1| (h1, 0.0)).collect(),
        PhaseKind::Test => TEST_H2
            .iter()
            .flat_map(|&h2| linspace(0.0, 1.6, PHASE_POINTS).into_iter().map(move |h1| (h1, h2)))
            .collect(),
        PhaseKind::Heatmap => linspace(-1.6, 1.6, HEATMAP_SIDE)
            .into_iter()
            .flat_map(|h2| linspace(0.0, 1.6, HEATMAP_SIDE).into_iter().map(move |h1| (h1, h2)))
            .collect(),
    }
}

pub fn labeled_ground_state(q: usize, h1: f64, h2: f64, boundary: Boundary, analytic: bool) -> Result<LabeledState> {
    let h = cluster_hamiltonian(HamiltonianSpec::new(q, h1, h2, boundary))?;
    let gs = ground_state(&h)?;
    let label = if analytic {
        analytic_label(h1, h2)?
    } else {
        string_order_label(&gs.state, STRING_ORDER_THRESHOLD)?
    };
    Ok(LabeledState {
        state: gs.state,
        label,
        true_label: label,
        h1,
        h2,
    })
}

pub fn make_phase_dataset(kind: PhaseKind, q: usize, boundary: Boundary) -> Result<Vec<LabeledState>> {
    if q > MAX_PHYSICS_QUBITS {
        return Err(Error::TooManyQubits {
            what: "phase dataset",
            max: MAX_PHYSICS_QUBITS,
            actual: q,
        });
    }
    let analytic = kind == PhaseKind::Train;
    use rayon::prelude::*;
    phase_points(kind)
        .into_par_iter()
        .map(|(h1, h2)| labeled_ground_state(q, h1, h2, boundary, analytic))
        .collect()
}

pub const MAX_UNITARY_TASK_QUBITS: usize = 6;

/// One dataset per entry of `layer_counts`: Haar inputs paired with their
/// images under the XY target of that depth. Task ids are the layer counts.
#[allow(clippy::too_many_arguments)]
pub fn make_unitary_tasks<R: Rng + ?Sized>(
    q: usize,
    layer_counts: &[usize],
    fixed_layers: usize,
    n: usize,
    beta_seed: u64,
    fixed_seed: u64,
    input_mode: HaarMode,
    rng: &mut R,
) -> Result<Vec<TaskDataset>> {
    if q > MAX_UNITARY_TASK_QUBITS {
        return Err(Error::TooManyQubits {
            what: "unitary task family",
            max: MAX_UNITARY_TASK_QUBITS,
            actual: q,
        });
    }
    layer_counts
        .iter()
        .map(|&l| {
            let target = build_xy_target(q, l, fixed_layers, beta_seed, fixed_seed)?;
            let inputs = (0..n)
                .map(|_| haar_state(q, input_mode, rng))
                .collect::<Result<Vec<_>>>()?;
            let targets = inputs.iter().map(|x| target.apply(x)).collect::<Result<Vec<_>>>()?;
            TaskDataset::new(l, l, inputs, targets)
        })
        .collect()
}

const MAGIC: &[u8; 4] = b"QCDS";

/// Binary layout: `QCDS`, u32 qubits, u64 count, u8 labels flag, then per state
/// interleaved little-endian f64 `(re, im)`, then one byte per label.
pub fn write_dataset<W: Write>(mut w: W, states: &[StateVector], labels: Option<&[u8]>) -> Result<()> {
    let q = states.first().map_or(0, StateVector::num_qubits);
    if let Some(bad) = states.iter().find(|s| s.num_qubits() != q) {
        return Err(Error::DimensionMismatch {
            expected: q,
            actual: bad.num_qubits(),
        });
    }
    if let Some(l) = labels {
        if l.len() != states.len() {
            return Err(Error::DimensionMismatch {
                expected: states.len(),
                actual: l.len(),
            });
        }
    }
    w.write_all(MAGIC)?;
    w.write_u32::<LittleEndian>(q as u32)?;
    w.write_u64::<LittleEndian>(states.len() as u64)?;
    w.write_u8(u8::from(labels.is_some()))?;
    for s in states {
        for a in s.amplitudes() {
            w.write_f64::<LittleEndian>(a.re)?;
            w.write_f64::<LittleEndian>(a.im)?;
        }
    }
    if let Some(l) = labels {
        w.write_all(l)?;
    }
    Ok(())
}

pub fn read_dataset<R: Read>(mut r: R) -> Result<(Vec<StateVector>, Option<Vec<u8>>)> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Io("not a dataset file".into()));
    }
    let q = r.read_u32::<LittleEndian>()? as usize;
    if q > crate::sim::MAX_QUBITS {
        return Err(Error::TooManyQubits {
            what: "dataset file",
            max: crate::sim::MAX_QUBITS,
            actual: q,
        });
    }
    let count = r.read_u64::<LittleEndian>()? as usize;
    let has_labels = r.read_u8()? != 0;
    let dim = 1usize << q;
    let mut states = Vec::with_capacity(count.min(1 << 16));
    for _ in 0..count {
        let mut amps = Vec::with_capacity(dim);
        for _ in 0..dim {
            let re = r.read_f64::<LittleEndian>()?;
            let im = r.read_f64::<LittleEndian>()?;
            amps.push(Complex64::new(re, im));
        }
        states.push(StateVector::from_raw(amps, q));
    }
    let labels = if has_labels {
        let mut l = vec![0u8; count];
        r.read_exact(&mut l)?;
        Some(l)
    } else {
        None
    };
    Ok((states, labels))
}

/// CSV manifest with columns `index,h1,h2,label,true_label`.
pub fn manifest_csv(data: &[LabeledState]) -> String {
    let mut out = String::from("index,h1,h2,label,true_label\n");
    for (i, s) in data.iter().enumerate() {
        out.push_str(&format!(
            "{i},{:.16e},{:.16e},{},{}\n",
            s.h1, s.h2, s.label, s.true_label
        ));
    }
    out
}
