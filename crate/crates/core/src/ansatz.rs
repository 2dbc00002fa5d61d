//! Circuit families: hardware-efficient ansatz, XY-type target unitaries and
//! the two QCNN variants.

use std::f64::consts::TAU;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;

use crate::circuit::{Axis, Circuit, GateKind, GateSpec};
use crate::linalg::{two_qubit_paulis, Pauli};
use crate::rng::seeded;
use crate::sim::{self, StateVector};
use crate::{Error, Result};

pub use crate::circuit::sqrt_iswap_matrix;

/// Depth of the heatmap-variant QCNN.
pub const HEATMAP_DEPTH: usize = 5;

/// Hardware-efficient ansatz: a rotation layer, then `layers` rounds of
/// [linear CNOT chain, rotation layer]. Each rotation block is
/// `RY(θ_2b) RZ(θ_2b+1)` (RZ applied first), giving `2Q(L+1)` parameters.
pub fn build_hea(num_qubits: usize, layers: usize) -> Result<Circuit> {
    if num_qubits < 2 {
        return Err(Error::InvalidArgument("HEA needs at least 2 qubits".into()));
    }
    let mut c = Circuit::new(num_qubits);
    let mut slot = 0;
    let mut rotation_layer = |c: &mut Circuit| -> Result<()> {
        for q in 0..num_qubits {
            c.push(GateSpec::trainable(GateKind::Rotation(Axis::Z), vec![q], slot + 1))?;
            c.push(GateSpec::trainable(GateKind::Rotation(Axis::Y), vec![q], slot))?;
            slot += 2;
        }
        Ok(())
    };
    rotation_layer(&mut c)?;
    for _ in 0..layers {
        for q in 0..num_qubits - 1 {
            c.push(GateSpec::fixed(GateKind::Cnot, vec![q, q + 1]))?;
        }
        rotation_layer(&mut c)?;
    }
    Ok(c)
}

/// A fully bound target unitary `V^(m)`.
#[derive(Clone, Debug)]
pub struct TargetUnitary {
    pub circuit: Circuit,
    pub params: Vec<f64>,
    pub layer_count: usize,
}

impl TargetUnitary {
    pub fn apply(&self, state: &StateVector) -> Result<StateVector> {
        self.circuit.run(&self.params, state)
    }

    pub fn unitary(&self) -> Result<DMatrix<Complex64>> {
        self.circuit.unitary(&self.params)
    }
}

fn xy_layer(c: &mut Circuit, slot0: usize) -> Result<()> {
    let q = c.num_qubits();
    for j in 0..q {
        c.push(GateSpec::trainable(GateKind::Rotation(Axis::Z), vec![j], slot0 + j))?;
    }
    for j in 0..q.saturating_sub(1) {
        c.push(GateSpec::fixed(GateKind::SqrtIswap, vec![j, j + 1]))?;
    }
    Ok(())
}

fn uniform_angles(seed: u64, count: usize) -> Vec<f64> {
    let mut rng = seeded(seed);
    (0..count).map(|_| rng.random_range(0.0..TAU)).collect()
}

/// `layer_count` variational XY layers (RZ on every qubit, then √iSWAP on
/// neighbouring pairs) followed by `fixed_layers` layers of the same template
/// with frozen random angles. Angles are drawn layer by layer from the seeds,
/// so targets sharing seeds differ only in their variational depth.
pub fn build_xy_target(
    num_qubits: usize,
    layer_count: usize,
    fixed_layers: usize,
    beta_seed: u64,
    fixed_seed: u64,
) -> Result<TargetUnitary> {
    if layer_count < 1 {
        return Err(Error::InvalidArgument("target needs at least one layer".into()));
    }
    let mut c = Circuit::new(num_qubits);
    for l in 0..layer_count + fixed_layers {
        xy_layer(&mut c, l * num_qubits)?;
    }
    let mut params = uniform_angles(beta_seed, layer_count * num_qubits);
    params.extend(uniform_angles(fixed_seed, fixed_layers * num_qubits));
    Ok(TargetUnitary {
        circuit: c,
        params,
        layer_count,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum QcnnVariant {
    /// Convolution + pooling stages with a fully connected layer.
    Main,
    /// Depth-5 alternation of shared single- and two-qubit layers.
    Heatmap,
}

impl std::str::FromStr for QcnnVariant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "main" => Ok(QcnnVariant::Main),
            "heatmap" => Ok(QcnnVariant::Heatmap),
            other => Err(Error::InvalidArgument(format!("unknown QCNN variant {other:?}"))),
        }
    }
}

impl std::fmt::Display for QcnnVariant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            QcnnVariant::Main => "main",
            QcnnVariant::Heatmap => "heatmap",
        })
    }
}

/// A QCNN circuit whose output is `⟨Z⟩` on `readout` (after a final Hadamard
/// that is part of the circuit).
#[derive(Clone, Debug)]
pub struct Qcnn {
    pub circuit: Circuit,
    pub readout: usize,
    pub variant: QcnnVariant,
}

impl Qcnn {
    pub fn output(&self, params: &[f64], input: &StateVector) -> Result<f64> {
        let out = self.circuit.run(params, input)?;
        sim::expval_z(&out, self.readout)
    }
}

/// Fifteen Pauli exponentials on `(a, b)` bound to slots `slot0..slot0+15`.
fn pauli_block(c: &mut Circuit, a: usize, b: usize, slot0: usize) -> Result<()> {
    for (j, p) in two_qubit_paulis().into_iter().enumerate() {
        c.push(GateSpec::trainable(GateKind::PauliExp(p), vec![a, b], slot0 + j))?;
    }
    Ok(())
}

pub fn build_qcnn(num_qubits: usize, variant: QcnnVariant) -> Result<Qcnn> {
    match variant {
        QcnnVariant::Main => build_qcnn_main(num_qubits),
        QcnnVariant::Heatmap => build_qcnn_heatmap(num_qubits, HEATMAP_DEPTH),
    }
}

/// Stage at `n` active qubits (`n ≥ 4`): shared 15-parameter block on even
/// then odd neighbour pairs, then pooling with the same block on each
/// `(discarded, kept)` pair, keeping the odd positions. At two active qubits
/// one convolution block and the fully connected block follow, and the last
/// qubit is read out.
fn build_qcnn_main(num_qubits: usize) -> Result<Qcnn> {
    if num_qubits < 2 || !num_qubits.is_power_of_two() {
        return Err(Error::InvalidArgument(format!(
            "main QCNN needs a power-of-two qubit count ≥ 2, got {num_qubits}"
        )));
    }
    let mut c = Circuit::new(num_qubits);
    let mut active: Vec<usize> = (0..num_qubits).collect();
    let mut slot = 0;
    while active.len() > 2 {
        let n = active.len();
        for start in [0, 1] {
            for i in (start..n - 1).step_by(2) {
                pauli_block(&mut c, active[i], active[i + 1], slot)?;
            }
        }
        for i in (0..n).step_by(2) {
            pauli_block(&mut c, active[i], active[i + 1], slot)?;
        }
        active = active.iter().skip(1).step_by(2).copied().collect();
        slot += 15;
    }
    pauli_block(&mut c, active[0], active[1], slot)?;
    slot += 15;
    pauli_block(&mut c, active[0], active[1], slot)?;
    let readout = active[1];
    c.push(GateSpec::fixed(GateKind::Hadamard, vec![readout]))?;
    Ok(Qcnn {
        circuit: c,
        readout,
        variant: QcnnVariant::Main,
    })
}

/// `∏_i U_1i U_2i`: per depth step a ring of shared 15-parameter two-qubit
/// blocks on `(k, k+1 mod Q)`, then shared `exp(−iθ_j P_j)` single-qubit
/// rotations (X, Y, Z) on every qubit; 18 parameters per step.
fn build_qcnn_heatmap(num_qubits: usize, depth: usize) -> Result<Qcnn> {
    if num_qubits < 2 {
        return Err(Error::InvalidArgument("heatmap QCNN needs at least 2 qubits".into()));
    }
    let mut c = Circuit::new(num_qubits);
    for d in 0..depth {
        let slot0 = d * 18;
        let pairs: Vec<(usize, usize)> = if num_qubits == 2 {
            vec![(0, 1)]
        } else {
            (0..num_qubits).map(|k| (k, (k + 1) % num_qubits)).collect()
        };
        for (a, b) in pairs {
            pauli_block(&mut c, a, b, slot0 + 3)?;
        }
        for k in 0..num_qubits {
            for (j, axis) in [Axis::X, Axis::Y, Axis::Z].into_iter().enumerate() {
                c.push(
                    GateSpec::trainable(GateKind::Rotation(axis), vec![k], slot0 + j).with_scale(2.0),
                )?;
            }
        }
    }
    let readout = num_qubits - 1;
    c.push(GateSpec::fixed(GateKind::Hadamard, vec![readout]))?;
    Ok(Qcnn {
        circuit: c,
        readout,
        variant: QcnnVariant::Heatmap,
    })
}

/// Number of Pauli-exponential gates of a given string (used by tests).
pub fn count_pauli_exp(c: &Circuit, p: [Pauli; 2]) -> usize {
    c.count_kind(|k| matches!(k, GateKind::PauliExp(q) if *q == p))
}
