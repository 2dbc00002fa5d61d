//! Dense statevector simulation.
//!
//! Qubit `q` is bit `q` of the amplitude index (little-endian). A k-qubit
//! gate matrix acting on `targets = [t0, t1]` is indexed by the local basis
//! `bit(t0) + 2 * bit(t1)`.

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::{Error, Result};

const UNITARY_TOL: f64 = 1e-10;
pub const MAX_QUBITS: usize = 12;

#[derive(Clone, Debug, PartialEq)]
pub struct StateVector {
    amps: Vec<Complex64>,
    num_qubits: usize,
}

impl StateVector {
    /// Computational basis state |index⟩.
    pub fn basis(num_qubits: usize, index: usize) -> Result<Self> {
        check_qubit_count(num_qubits)?;
        let dim = 1usize << num_qubits;
        if index >= dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                actual: index,
            });
        }
        let mut amps = vec![Complex64::new(0.0, 0.0); dim];
        amps[index] = Complex64::new(1.0, 0.0);
        Ok(Self { amps, num_qubits })
    }

    pub fn zero(num_qubits: usize) -> Result<Self> {
        Self::basis(num_qubits, 0)
    }

    /// Wraps raw amplitudes. The length must be a power of two; the vector is
    /// normalised.
    pub fn from_amplitudes(mut amps: Vec<Complex64>) -> Result<Self> {
        let dim = amps.len();
        if dim == 0 || !dim.is_power_of_two() {
            return Err(Error::InvalidArgument(format!(
                "amplitude vector length {dim} is not a power of two"
            )));
        }
        let num_qubits = dim.trailing_zeros() as usize;
        check_qubit_count(num_qubits)?;
        let norm = amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        if !(norm > 0.0 && norm.is_finite()) {
            return Err(Error::InvalidArgument("zero or non-finite state".into()));
        }
        for a in &mut amps {
            *a /= norm;
        }
        Ok(Self { amps, num_qubits })
    }

    pub(crate) fn from_raw(amps: Vec<Complex64>, num_qubits: usize) -> Self {
        debug_assert_eq!(amps.len(), 1 << num_qubits);
        Self { amps, num_qubits }
    }

    pub fn num_qubits(&self) -> usize {
        self.num_qubits
    }

    pub fn dim(&self) -> usize {
        self.amps.len()
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amps
    }

    pub(crate) fn amplitudes_mut(&mut self) -> &mut [Complex64] {
        &mut self.amps
    }

    pub fn into_amplitudes(self) -> Vec<Complex64> {
        self.amps
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum()
    }

    /// ⟨self|other⟩.
    pub fn inner(&self, other: &StateVector) -> Result<Complex64> {
        check_same_dim(self, other)?;
        Ok(inner_unchecked(&self.amps, &other.amps))
    }

    /// Tensor product `self ⊗ other` where `other` occupies the higher qubits.
    pub fn tensor(&self, other: &StateVector) -> Result<StateVector> {
        let nq = self.num_qubits + other.num_qubits;
        check_qubit_count(nq)?;
        let mut amps = Vec::with_capacity(1 << nq);
        for hi in &other.amps {
            for lo in &self.amps {
                amps.push(lo * hi);
            }
        }
        Ok(StateVector::from_raw(amps, nq))
    }
}

fn check_qubit_count(n: usize) -> Result<()> {
    if n == 0 {
        return Err(Error::InvalidArgument("state needs at least one qubit".into()));
    }
    if n > MAX_QUBITS {
        return Err(Error::TooManyQubits {
            what: "statevector",
            max: MAX_QUBITS,
            actual: n,
        });
    }
    Ok(())
}

fn check_same_dim(a: &StateVector, b: &StateVector) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch {
            expected: a.dim(),
            actual: b.dim(),
        });
    }
    Ok(())
}

#[inline]
pub(crate) fn inner_unchecked(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

/// A 2x2 or 4x4 unitary bound to target qubits.
#[derive(Clone, Debug, PartialEq)]
pub struct GateMatrix {
    matrix: Vec<Complex64>,
    targets: Vec<usize>,
}

impl GateMatrix {
    /// Row-major matrix of size `2^k x 2^k` with `k = targets.len() ∈ {1, 2}`.
    pub fn new(matrix: Vec<Complex64>, targets: Vec<usize>) -> Result<Self> {
        let k = targets.len();
        if !(1..=2).contains(&k) {
            return Err(Error::InvalidArgument(format!(
                "gates act on one or two qubits, got {k}"
            )));
        }
        if k == 2 && targets[0] == targets[1] {
            return Err(Error::DuplicateTarget(targets[0]));
        }
        let dim = 1 << k;
        if matrix.len() != dim * dim {
            return Err(Error::DimensionMismatch {
                expected: dim * dim,
                actual: matrix.len(),
            });
        }
        let dev = unitarity_deviation(&matrix, dim);
        if dev > UNITARY_TOL {
            return Err(Error::NotUnitary(dev));
        }
        Ok(Self { matrix, targets })
    }

    pub fn matrix(&self) -> &[Complex64] {
        &self.matrix
    }

    pub fn targets(&self) -> &[usize] {
        &self.targets
    }

    pub fn adjoint(&self) -> GateMatrix {
        let dim = 1 << self.targets.len();
        GateMatrix {
            matrix: adjoint(&self.matrix, dim),
            targets: self.targets.clone(),
        }
    }
}

/// max |(G†G − I)_ij|.
pub fn unitarity_deviation(m: &[Complex64], dim: usize) -> f64 {
    let mut dev: f64 = 0.0;
    for i in 0..dim {
        for j in 0..dim {
            let mut s = Complex64::new(0.0, 0.0);
            for k in 0..dim {
                s += m[k * dim + i].conj() * m[k * dim + j];
            }
            if i == j {
                s -= 1.0;
            }
            dev = dev.max(s.norm());
        }
    }
    dev
}

pub(crate) fn adjoint(m: &[Complex64], dim: usize) -> Vec<Complex64> {
    let mut out = vec![Complex64::new(0.0, 0.0); dim * dim];
    for i in 0..dim {
        for j in 0..dim {
            out[j * dim + i] = m[i * dim + j].conj();
        }
    }
    out
}

pub(crate) fn check_targets(targets: &[usize], num_qubits: usize) -> Result<()> {
    for (i, &t) in targets.iter().enumerate() {
        if t >= num_qubits {
            return Err(Error::QubitOutOfRange {
                index: t,
                num_qubits,
            });
        }
        if targets[..i].contains(&t) {
            return Err(Error::DuplicateTarget(t));
        }
    }
    Ok(())
}

/// Applies `gate` in place.
pub fn apply_gate(state: &mut StateVector, gate: &GateMatrix) -> Result<()> {
    check_targets(&gate.targets, state.num_qubits)?;
    apply_local(&mut state.amps, &gate.targets, &gate.matrix);
    Ok(())
}

/// Functional form of [`apply_gate`].
pub fn applied(state: &StateVector, gate: &GateMatrix) -> Result<StateVector> {
    let mut out = state.clone();
    apply_gate(&mut out, gate)?;
    Ok(out)
}

#[inline]
pub(crate) fn apply_local(amps: &mut [Complex64], targets: &[usize], m: &[Complex64]) {
    match targets.len() {
        1 => apply_1q(amps, targets[0], m),
        2 => apply_2q(amps, targets[0], targets[1], m),
        _ => unreachable!("gates act on one or two qubits"),
    }
}

pub(crate) fn apply_1q(amps: &mut [Complex64], q: usize, m: &[Complex64]) {
    let stride = 1usize << q;
    let (m00, m01, m10, m11) = (m[0], m[1], m[2], m[3]);
    for base in (0..amps.len()).step_by(stride << 1) {
        for i in base..base + stride {
            let a0 = amps[i];
            let a1 = amps[i + stride];
            amps[i] = m00 * a0 + m01 * a1;
            amps[i + stride] = m10 * a0 + m11 * a1;
        }
    }
}

/// Index of the `i`-th amplitude block whose bits `lo < hi` are both zero.
#[inline(always)]
pub(crate) fn block_base(i: usize, lo: usize, hi: usize) -> usize {
    let low_mask = (1usize << lo) - 1;
    let x = (i & low_mask) | ((i & !low_mask) << 1);
    let mid_mask = (1usize << hi) - 1;
    (x & mid_mask) | ((x & !mid_mask) << 1)
}

pub(crate) fn apply_2q(amps: &mut [Complex64], t0: usize, t1: usize, m: &[Complex64]) {
    let (lo, hi) = if t0 < t1 { (t0, t1) } else { (t1, t0) };
    let b0 = 1usize << t0;
    let b1 = 1usize << t1;
    let mut mm = [Complex64::new(0.0, 0.0); 16];
    mm.copy_from_slice(&m[..16]);
    for i in 0..amps.len() >> 2 {
        let base = block_base(i, lo, hi);
        let idx = [base, base | b0, base | b1, base | b0 | b1];
        let v = [amps[idx[0]], amps[idx[1]], amps[idx[2]], amps[idx[3]]];
        for r in 0..4 {
            let row = &mm[r * 4..r * 4 + 4];
            amps[idx[r]] = row[0] * v[0] + row[1] * v[1] + row[2] * v[2] + row[3] * v[3];
        }
    }
}

/// |⟨a|b⟩|².
pub fn fidelity(a: &StateVector, b: &StateVector) -> Result<f64> {
    Ok(a.inner(b)?.norm_sqr())
}

/// ⟨ψ|Z_q|ψ⟩.
pub fn expval_z(state: &StateVector, qubit: usize) -> Result<f64> {
    if qubit >= state.num_qubits {
        return Err(Error::QubitOutOfRange {
            index: qubit,
            num_qubits: state.num_qubits,
        });
    }
    let mask = 1usize << qubit;
    Ok(state
        .amps
        .iter()
        .enumerate()
        .map(|(i, a)| if i & mask == 0 { a.norm_sqr() } else { -a.norm_sqr() })
        .sum())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum HaarMode {
    /// Uniform over the full 2^Q-dimensional sphere.
    Full,
    /// Product of independent Haar single-qubit states.
    Product,
}

impl std::str::FromStr for HaarMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(HaarMode::Full),
            "product" => Ok(HaarMode::Product),
            other => Err(Error::InvalidArgument(format!("unknown input mode {other:?}"))),
        }
    }
}

impl std::fmt::Display for HaarMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            HaarMode::Full => "full",
            HaarMode::Product => "product",
        })
    }
}

fn gaussian_state<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Vec<Complex64> {
    loop {
        let mut amps: Vec<Complex64> = (0..dim)
            .map(|_| Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal)))
            .collect();
        let norm = amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        if norm > 1e-300 {
            for a in &mut amps {
                *a /= norm;
            }
            return amps;
        }
    }
}

/// Draws a Haar-random pure state.
pub fn haar_state<R: Rng + ?Sized>(
    num_qubits: usize,
    mode: HaarMode,
    rng: &mut R,
) -> Result<StateVector> {
    check_qubit_count(num_qubits)?;
    match mode {
        HaarMode::Full => Ok(StateVector::from_raw(
            gaussian_state(1 << num_qubits, rng),
            num_qubits,
        )),
        HaarMode::Product => {
            let mut state = StateVector::from_raw(gaussian_state(2, rng), 1);
            for _ in 1..num_qubits {
                let q = StateVector::from_raw(gaussian_state(2, rng), 1);
                state = state.tensor(&q)?;
            }
            Ok(state)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use std::f64::consts::FRAC_1_SQRT_2;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn pauli_x(q: usize) -> GateMatrix {
        GateMatrix::new(vec![c(0., 0.), c(1., 0.), c(1., 0.), c(0., 0.)], vec![q]).unwrap()
    }

    fn hadamard(q: usize) -> GateMatrix {
        let h = c(FRAC_1_SQRT_2, 0.0);
        GateMatrix::new(vec![h, h, h, -h], vec![q]).unwrap()
    }

    #[test]
    fn x_flips_zero_to_one() {
        let mut s = StateVector::zero(1).unwrap();
        apply_gate(&mut s, &pauli_x(0)).unwrap();
        assert_eq!(s, StateVector::basis(1, 1).unwrap());
    }

    #[test]
    fn x_on_qubit_one_sets_bit_one() {
        let mut s = StateVector::zero(3).unwrap();
        apply_gate(&mut s, &pauli_x(1)).unwrap();
        assert_eq!(s, StateVector::basis(3, 0b010).unwrap());
    }

    #[test]
    fn hadamard_on_zero() {
        let s = applied(&StateVector::zero(1).unwrap(), &hadamard(0)).unwrap();
        for a in s.amplitudes() {
            assert!((a.re - 0.70710678).abs() < 1e-8);
            assert!(a.im.abs() < 1e-15);
        }
    }

    #[test]
    fn gate_then_adjoint_is_identity() {
        let mut rng = seeded(1);
        let psi = haar_state(3, HaarMode::Full, &mut rng).unwrap();
        let g = GateMatrix::new(
            crate::linalg::random_unitary(4, &mut rng),
            vec![2, 0],
        )
        .unwrap();
        let back = applied(&applied(&psi, &g).unwrap(), &g.adjoint()).unwrap();
        for (a, b) in back.amplitudes().iter().zip(psi.amplitudes()) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn rejects_bad_gates() {
        assert!(matches!(
            GateMatrix::new(vec![c(1., 0.), c(1., 0.), c(0., 0.), c(1., 0.)], vec![0]),
            Err(Error::NotUnitary(_))
        ));
        let mut s = StateVector::zero(2).unwrap();
        assert!(matches!(
            apply_gate(&mut s, &pauli_x(2)),
            Err(Error::QubitOutOfRange { index: 2, .. })
        ));
        let id4: Vec<Complex64> = (0..16)
            .map(|i| if i % 5 == 0 { c(1., 0.) } else { c(0., 0.) })
            .collect();
        assert!(matches!(
            GateMatrix::new(id4, vec![1, 1]),
            Err(Error::DuplicateTarget(1))
        ));
    }

    #[test]
    fn fidelity_examples() {
        let zero = StateVector::zero(1).unwrap();
        let one = StateVector::basis(1, 1).unwrap();
        let plus = applied(&zero, &hadamard(0)).unwrap();
        assert!((fidelity(&zero, &zero).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(fidelity(&zero, &one).unwrap(), 0.0);
        assert!((fidelity(&zero, &plus).unwrap() - 0.5).abs() < 1e-15);
        assert!(fidelity(&zero, &StateVector::zero(2).unwrap()).is_err());
    }

    #[test]
    fn expval_z_examples() {
        let zero = StateVector::zero(1).unwrap();
        let one = StateVector::basis(1, 1).unwrap();
        let plus = applied(&zero, &hadamard(0)).unwrap();
        assert_eq!(expval_z(&zero, 0).unwrap(), 1.0);
        assert_eq!(expval_z(&one, 0).unwrap(), -1.0);
        assert!(expval_z(&plus, 0).unwrap().abs() < 1e-15);
        assert!(expval_z(&zero, 1).is_err());
    }

    #[test]
    fn haar_states_are_normalised() {
        let mut rng = seeded(7);
        for mode in [HaarMode::Full, HaarMode::Product] {
            for q in 1..=5 {
                let s = haar_state(q, mode, &mut rng).unwrap();
                assert_eq!(s.num_qubits(), q);
                assert!((s.norm_sqr() - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn product_mode_fidelity_factorises() {
        let mut rng = seeded(11);
        let mut rng_copy = seeded(11);
        let s = haar_state(3, HaarMode::Product, &mut rng).unwrap();
        // The product sampler draws one qubit at a time, lowest qubit first.
        let singles: Vec<StateVector> = (0..3)
            .map(|_| haar_state(1, HaarMode::Full, &mut rng_copy).unwrap())
            .collect();
        let zero1 = StateVector::zero(1).unwrap();
        let expected: f64 = singles.iter().map(|q| fidelity(q, &zero1).unwrap()).product();
        let got = fidelity(&s, &StateVector::zero(3).unwrap()).unwrap();
        assert!((got - expected).abs() < 1e-14);
    }

    #[test]
    fn haar_pair_fidelity_mean_is_inverse_dimension() {
        // Monte Carlo check of E|⟨ψ|φ⟩|² = 1/d at Q = 2.
        let mut rng = seeded(2024);
        let n = 10_000;
        let samples: Vec<f64> = (0..n)
            .map(|_| {
                let a = haar_state(2, HaarMode::Full, &mut rng).unwrap();
                let b = haar_state(2, HaarMode::Full, &mut rng).unwrap();
                fidelity(&a, &b).unwrap()
            })
            .collect();
        let mean = samples.iter().sum::<f64>() / n as f64;
        let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let se = (var / n as f64).sqrt();
        assert!((mean - 0.25).abs() < 0.02);
        assert!((mean - 0.25).abs() < 3.0 * se, "mean {mean}, se {se}");
    }
}
