//! Parameterised circuit representation.
//!
//! A trainable gate is `exp(−i φ K)` where `φ = param_scale * θ[param_slot]`
//! and `K` is the gate generator. Rotations use `K = P/2`, so
//! `RY(θ) = exp(−iθY/2)`; two-qubit Pauli exponentials use `K = P`.

use std::fmt;

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::linalg::{self, Pauli};
use crate::sim::{self, StateVector};
use crate::{Error, Result};

/// Largest register for which [`Circuit::unitary`] builds a dense matrix.
pub const MAX_UNITARY_QUBITS: usize = 6;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    pub fn pauli(self) -> Pauli {
        match self {
            Axis::X => Pauli::X,
            Axis::Y => Pauli::Y,
            Axis::Z => Pauli::Z,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum GateKind {
    /// Constant unitary (2x2 or 4x4).
    Fixed(Vec<Complex64>),
    /// `exp(−iφP/2)`.
    Rotation(Axis),
    /// `exp(−iφ P0⊗P1)`, `P0` on the first target.
    PauliExp([Pauli; 2]),
    /// `exp(−iφG)` for an arbitrary Hermitian generator `G`.
    GeneratorExp(Vec<Complex64>),
    Hadamard,
    /// Control is the first target.
    Cnot,
    /// `exp(iπ/8 (XX + YY))`.
    SqrtIswap,
}

impl GateKind {
    pub fn is_parametric(&self) -> bool {
        matches!(
            self,
            GateKind::Rotation(_) | GateKind::PauliExp(_) | GateKind::GeneratorExp(_)
        )
    }

    fn arity(&self) -> Option<usize> {
        match self {
            GateKind::Fixed(m) | GateKind::GeneratorExp(m) => match m.len() {
                4 => Some(1),
                16 => Some(2),
                _ => None,
            },
            GateKind::Rotation(_) | GateKind::Hadamard => Some(1),
            GateKind::PauliExp(_) | GateKind::Cnot | GateKind::SqrtIswap => Some(2),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GateSpec {
    pub kind: GateKind,
    pub targets: Vec<usize>,
    pub param_slot: Option<usize>,
    pub param_scale: f64,
}

impl GateSpec {
    pub fn fixed(kind: GateKind, targets: Vec<usize>) -> Self {
        Self {
            kind,
            targets,
            param_slot: None,
            param_scale: 1.0,
        }
    }

    pub fn trainable(kind: GateKind, targets: Vec<usize>, slot: usize) -> Self {
        Self {
            kind,
            targets,
            param_slot: Some(slot),
            param_scale: 1.0,
        }
    }

    pub fn with_scale(mut self, scale: f64) -> Self {
        self.param_scale = scale;
        self
    }

    pub fn dim(&self) -> usize {
        1 << self.targets.len()
    }

    /// Local matrix at effective angle `phi` (ignored for fixed kinds).
    pub fn matrix(&self, phi: f64) -> Vec<Complex64> {
        match &self.kind {
            GateKind::Fixed(m) => m.clone(),
            GateKind::Rotation(axis) => {
                linalg::involutory_exp(&axis.pauli().matrix(), 2, phi / 2.0)
            }
            GateKind::PauliExp(p) => {
                linalg::involutory_exp(&linalg::pauli_string_matrix(*p), 4, phi)
            }
            GateKind::GeneratorExp(g) => {
                let d = self.dim();
                linalg::expm(&linalg::scale(g, Complex64::new(0.0, -phi)), d)
            }
            GateKind::Hadamard => {
                let h = Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
                vec![h, h, h, -h]
            }
            GateKind::Cnot => {
                let mut m = vec![Complex64::new(0.0, 0.0); 16];
                for (r, c) in [(0, 0), (1, 3), (2, 2), (3, 1)] {
                    m[r * 4 + c] = Complex64::new(1.0, 0.0);
                }
                m
            }
            GateKind::SqrtIswap => sqrt_iswap_matrix(),
        }
    }

    /// Generator `K` with `d/dφ G(φ) = −iK G(φ)`; `None` for fixed kinds.
    pub fn generator(&self) -> Option<Vec<Complex64>> {
        match &self.kind {
            GateKind::Rotation(axis) => Some(linalg::scale(
                &axis.pauli().matrix(),
                Complex64::new(0.5, 0.0),
            )),
            GateKind::PauliExp(p) => Some(linalg::pauli_string_matrix(*p)),
            GateKind::GeneratorExp(g) => Some(g.clone()),
            _ => None,
        }
    }

    /// Parameter-shift data `(shift, coefficient)` with
    /// `df/dφ = c [f(φ + s) − f(φ − s)]`, available when the generator has
    /// eigenvalues `±r` (i.e. `(K/r)² = I`).
    pub fn shift_rule(&self) -> Option<(f64, f64)> {
        let quarter_pi = std::f64::consts::FRAC_PI_4;
        match &self.kind {
            GateKind::Rotation(_) => Some((2.0 * quarter_pi, 0.5)),
            GateKind::PauliExp(_) => Some((quarter_pi, 1.0)),
            GateKind::GeneratorExp(g) => {
                let d = self.dim();
                if linalg::is_involutory(g, d, 1e-12) {
                    Some((quarter_pi, 1.0))
                } else {
                    None
                }
            }
            _ => None,
        }
    }

    fn token(&self) -> String {
        match &self.kind {
            GateKind::Fixed(_) => "fixed".into(),
            GateKind::Rotation(Axis::X) => "rx".into(),
            GateKind::Rotation(Axis::Y) => "ry".into(),
            GateKind::Rotation(Axis::Z) => "rz".into(),
            GateKind::PauliExp(p) => format!("pexp:{}{}", p[0].symbol(), p[1].symbol()),
            GateKind::GeneratorExp(_) => "gexp".into(),
            GateKind::Hadamard => "h".into(),
            GateKind::Cnot => "cx".into(),
            GateKind::SqrtIswap => "sqrt_iswap".into(),
        }
    }
}

/// `exp(i(π/8)(X⊗X + Y⊗Y))`.
pub fn sqrt_iswap_matrix() -> Vec<Complex64> {
    let z = Complex64::new(0.0, 0.0);
    let one = Complex64::new(1.0, 0.0);
    let c = Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
    let s = Complex64::new(0.0, std::f64::consts::FRAC_1_SQRT_2);
    vec![
        one, z, z, z, //
        z, c, s, z, //
        z, s, c, z, //
        z, z, z, one,
    ]
}

#[derive(Clone, Debug, PartialEq)]
pub struct Circuit {
    num_qubits: usize,
    gates: Vec<GateSpec>,
    param_count: usize,
}

impl Circuit {
    pub fn new(num_qubits: usize) -> Self {
        Self {
            num_qubits,
            gates: Vec::new(),
            param_count: 0,
        }
    }

    /// Appends a gate, validating its shape, targets and parameter binding.
    /// Parameter slots beyond the current count grow `param_count`.
    pub fn push(&mut self, gate: GateSpec) -> Result<()> {
        let arity = gate.kind.arity().ok_or_else(|| {
            Error::InvalidArgument("gate matrix must be 2x2 or 4x4".into())
        })?;
        if arity != gate.targets.len() {
            return Err(Error::InvalidArgument(format!(
                "{} expects {arity} targets, got {}",
                gate.token(),
                gate.targets.len()
            )));
        }
        sim::check_targets(&gate.targets, self.num_qubits)?;
        match (&gate.kind, gate.param_slot) {
            (k, None) if k.is_parametric() => {
                return Err(Error::InvalidArgument(format!(
                    "{} gate needs a parameter slot",
                    gate.token()
                )))
            }
            (k, Some(_)) if !k.is_parametric() => {
                return Err(Error::InvalidArgument(format!(
                    "{} gate cannot carry a parameter slot",
                    gate.token()
                )))
            }
            _ => {}
        }
        let d = gate.dim();
        match &gate.kind {
            GateKind::Fixed(m) => {
                let dev = sim::unitarity_deviation(m, d);
                if dev > 1e-10 {
                    return Err(Error::NotUnitary(dev));
                }
            }
            GateKind::GeneratorExp(g) if !linalg::is_hermitian(g, d, 1e-12) => {
                return Err(Error::InvalidArgument("generator is not Hermitian".into()));
            }
            _ => {}
        }
        if let Some(slot) = gate.param_slot {
            self.param_count = self.param_count.max(slot + 1);
        }
        self.gates.push(gate);
        Ok(())
    }

    /// Declares the parameter vector length explicitly (slots may go unused).
    pub fn set_param_count(&mut self, n: usize) {
        self.param_count = self.param_count.max(n);
    }

    pub fn num_qubits(&self) -> usize {
        self.num_qubits
    }

    pub fn gates(&self) -> &[GateSpec] {
        &self.gates
    }

    pub fn param_count(&self) -> usize {
        self.param_count
    }

    pub fn count_kind(&self, pred: impl Fn(&GateKind) -> bool) -> usize {
        self.gates.iter().filter(|g| pred(&g.kind)).count()
    }

    /// Effective angle of every gate (`0` for fixed gates).
    pub fn bind(&self, params: &[f64]) -> Result<Vec<f64>> {
        if params.len() != self.param_count {
            return Err(Error::ParamLength {
                expected: self.param_count,
                actual: params.len(),
            });
        }
        Ok(self
            .gates
            .iter()
            .map(|g| g.param_slot.map_or(0.0, |s| g.param_scale * params[s]))
            .collect())
    }

    /// Applies the circuit gate by gate using per-gate angles.
    pub fn apply_angles(&self, angles: &[f64], state: &mut StateVector) -> Result<()> {
        if state.num_qubits() != self.num_qubits {
            return Err(Error::DimensionMismatch {
                expected: self.num_qubits,
                actual: state.num_qubits(),
            });
        }
        if angles.len() != self.gates.len() {
            return Err(Error::DimensionMismatch {
                expected: self.gates.len(),
                actual: angles.len(),
            });
        }
        let amps = state.amplitudes_mut();
        for (g, &phi) in self.gates.iter().zip(angles) {
            sim::apply_local(amps, &g.targets, &g.matrix(phi));
        }
        Ok(())
    }

    pub fn apply(&self, params: &[f64], state: &mut StateVector) -> Result<()> {
        let angles = self.bind(params)?;
        self.apply_angles(&angles, state)
    }

    pub fn run(&self, params: &[f64], input: &StateVector) -> Result<StateVector> {
        let mut out = input.clone();
        self.apply(params, &mut out)?;
        Ok(out)
    }

    /// Dense `2^Q x 2^Q` unitary, column `j` being `U|j⟩`.
    pub fn unitary(&self, params: &[f64]) -> Result<DMatrix<Complex64>> {
        if self.num_qubits > MAX_UNITARY_QUBITS {
            return Err(Error::TooManyQubits {
                what: "circuit unitary",
                max: MAX_UNITARY_QUBITS,
                actual: self.num_qubits,
            });
        }
        let angles = self.bind(params)?;
        let dim = 1usize << self.num_qubits;
        let mut u = DMatrix::zeros(dim, dim);
        for j in 0..dim {
            let mut s = StateVector::basis(self.num_qubits, j)?;
            self.apply_angles(&angles, &mut s)?;
            for (i, a) in s.amplitudes().iter().enumerate() {
                u[(i, j)] = *a;
            }
        }
        Ok(u)
    }

    /// Appends all gates of `other`, offsetting its parameter slots.
    pub fn extend_shifted(&mut self, other: &Circuit, slot_offset: usize) -> Result<()> {
        for g in &other.gates {
            let mut g = g.clone();
            g.param_slot = g.param_slot.map(|s| s + slot_offset);
            self.push(g)?;
        }
        self.set_param_count(other.param_count + slot_offset);
        Ok(())
    }
}

/// One gate per line: `kind targets slot scale`, with `-` for a missing slot.
impl fmt::Display for Circuit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "# qubits={} params={}", self.num_qubits, self.param_count)?;
        for g in &self.gates {
            let targets: Vec<String> = g.targets.iter().map(|t| t.to_string()).collect();
            let slot = g.param_slot.map_or("-".to_string(), |s| s.to_string());
            writeln!(f, "{} {} {} {}", g.token(), targets.join(","), slot, g.param_scale)?;
        }
        Ok(())
    }
}
