//! Fused circuit execution and adjoint (reverse-mode) gradients.
//!
//! Consecutive gates on the same target list are multiplied into one 2x2 or
//! 4x4 block. The backward pass accumulates, per block, the outer product
//! `M = Σ ψ_in λ_out†` over amplitude groups and samples; the gradient of a
//! constituent gate `k` is then `Re Tr[(−iK_k) P_k M S_k]` with `P_k`/`S_k` the
//! block's prefix/suffix products. The per-sample cost is three statevector
//! sweeps regardless of parameter count.

use num_complex::Complex64;

use crate::circuit::Circuit;
use crate::linalg;
use crate::sim::{self, StateVector};
use crate::{Error, Result};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

#[derive(Clone, Debug)]
struct MemberGate {
    matrix: Vec<Complex64>,
    /// (slot, scale, generator) for trainable gates.
    trainable: Option<(usize, f64, Vec<Complex64>)>,
}

#[derive(Clone, Debug)]
struct FusedOp {
    targets: Vec<usize>,
    dim: usize,
    matrix: Vec<Complex64>,
    adjoint: Vec<Complex64>,
    members: Vec<MemberGate>,
    trainable: bool,
}

/// A circuit bound to concrete parameters and compiled into fused blocks.
#[derive(Clone, Debug)]
pub struct Program {
    num_qubits: usize,
    param_count: usize,
    ops: Vec<FusedOp>,
    first_trainable: usize,
}

/// Per-block outer-product sums gathered by [`Program::backward`].
#[derive(Clone, Debug)]
pub struct GradAccumulator {
    blocks: Vec<Vec<Complex64>>,
}

impl Program {
    pub fn compile(circuit: &Circuit, params: &[f64]) -> Result<Self> {
        let angles = circuit.bind(params)?;
        let mut ops: Vec<FusedOp> = Vec::new();
        for (g, &phi) in circuit.gates().iter().zip(&angles) {
            let member = MemberGate {
                matrix: g.matrix(phi),
                trainable: g
                    .param_slot
                    .map(|s| (s, g.param_scale, g.generator().expect("parametric gate"))),
            };
            match ops.last_mut() {
                Some(op) if op.targets == g.targets => {
                    op.matrix = linalg::matmul(&member.matrix, &op.matrix, op.dim);
                    op.trainable |= member.trainable.is_some();
                    op.members.push(member);
                }
                _ => ops.push(FusedOp {
                    targets: g.targets.clone(),
                    dim: g.dim(),
                    matrix: member.matrix.clone(),
                    adjoint: Vec::new(),
                    trainable: member.trainable.is_some(),
                    members: vec![member],
                }),
            }
        }
        for op in &mut ops {
            op.adjoint = sim::adjoint(&op.matrix, op.dim);
        }
        let first_trainable = ops.iter().position(|o| o.trainable).unwrap_or(ops.len());
        Ok(Self {
            num_qubits: circuit.num_qubits(),
            param_count: circuit.param_count(),
            ops,
            first_trainable,
        })
    }

    pub fn num_ops(&self) -> usize {
        self.ops.len()
    }

    fn check_input(&self, input: &StateVector) -> Result<()> {
        if input.num_qubits() != self.num_qubits {
            return Err(Error::DimensionMismatch {
                expected: self.num_qubits,
                actual: input.num_qubits(),
            });
        }
        Ok(())
    }

    pub fn forward(&self, input: &StateVector) -> Result<StateVector> {
        self.check_input(input)?;
        let mut amps = input.amplitudes().to_vec();
        for op in &self.ops {
            sim::apply_local(&mut amps, &op.targets, &op.matrix);
        }
        Ok(StateVector::from_raw(amps, self.num_qubits))
    }

    /// Forward pass keeping every intermediate state; the last entry is the
    /// output state.
    pub fn trace(&self, input: &StateVector) -> Result<Vec<Vec<Complex64>>> {
        self.check_input(input)?;
        let mut states = Vec::with_capacity(self.ops.len() + 1);
        states.push(input.amplitudes().to_vec());
        for op in &self.ops {
            let mut next = states.last().expect("non-empty").clone();
            sim::apply_local(&mut next, &op.targets, &op.matrix);
            states.push(next);
        }
        Ok(states)
    }

    pub fn accumulator(&self) -> GradAccumulator {
        GradAccumulator {
            blocks: self
                .ops
                .iter()
                .map(|op| {
                    if op.trainable {
                        vec![ZERO; op.dim * op.dim]
                    } else {
                        Vec::new()
                    }
                })
                .collect(),
        }
    }

    /// Back-propagates the output cotangent `lambda`, defined so that
    /// `dL = Re⟨λ|dψ_out⟩`.
    pub fn backward(
        &self,
        trace: &[Vec<Complex64>],
        mut lambda: Vec<Complex64>,
        acc: &mut GradAccumulator,
    ) {
        debug_assert_eq!(trace.len(), self.ops.len() + 1);
        for j in (self.first_trainable..self.ops.len()).rev() {
            let op = &self.ops[j];
            if op.trainable {
                accumulate_outer(&trace[j], &lambda, &op.targets, &mut acc.blocks[j]);
            }
            if j > self.first_trainable {
                sim::apply_local(&mut lambda, &op.targets, &op.adjoint);
            }
        }
    }

    /// Gradient with respect to the parameter vector.
    pub fn gradient(&self, acc: &GradAccumulator) -> Vec<f64> {
        let mut grad = vec![0.0; self.param_count];
        let minus_i = Complex64::new(0.0, -1.0);
        for (op, m) in self.ops.iter().zip(&acc.blocks) {
            if !op.trainable {
                continue;
            }
            let d = op.dim;
            let n = op.members.len();
            // prefixes[k] = G_k ⋯ G_1 (including gate k).
            let mut prefixes = Vec::with_capacity(n);
            let mut p = linalg::identity(d);
            for g in &op.members {
                p = linalg::matmul(&g.matrix, &p, d);
                prefixes.push(p.clone());
            }
            let mut suffix = linalg::identity(d);
            for k in (0..n).rev() {
                let g = &op.members[k];
                if let Some((slot, scale, gen)) = &g.trainable {
                    let b = linalg::matmul(&linalg::matmul(&prefixes[k], m, d), &suffix, d);
                    let t = minus_i * linalg::trace_of_product(gen, &b, d);
                    grad[*slot] += scale * t.re;
                }
                suffix = linalg::matmul(&suffix, &g.matrix, d);
            }
        }
        grad
    }
}

fn accumulate_outer(psi: &[Complex64], lambda: &[Complex64], targets: &[usize], m: &mut [Complex64]) {
    match targets.len() {
        1 => {
            let stride = 1usize << targets[0];
            for base in (0..psi.len()).step_by(stride << 1) {
                for i in base..base + stride {
                    let p = [psi[i], psi[i + stride]];
                    let l = [lambda[i].conj(), lambda[i + stride].conj()];
                    m[0] += p[0] * l[0];
                    m[1] += p[0] * l[1];
                    m[2] += p[1] * l[0];
                    m[3] += p[1] * l[1];
                }
            }
        }
        2 => {
            let (t0, t1) = (targets[0], targets[1]);
            let (lo, hi) = if t0 < t1 { (t0, t1) } else { (t1, t0) };
            let b0 = 1usize << t0;
            let b1 = 1usize << t1;
            let mut local = [ZERO; 16];
            for i in 0..psi.len() >> 2 {
                let base = sim::block_base(i, lo, hi);
                let idx = [base, base | b0, base | b1, base | b0 | b1];
                let p = [psi[idx[0]], psi[idx[1]], psi[idx[2]], psi[idx[3]]];
                let l = [
                    lambda[idx[0]].conj(),
                    lambda[idx[1]].conj(),
                    lambda[idx[2]].conj(),
                    lambda[idx[3]].conj(),
                ];
                for b in 0..4 {
                    for a in 0..4 {
                        local[b * 4 + a] += p[b] * l[a];
                    }
                }
            }
            for (x, y) in m.iter_mut().zip(local) {
                *x += y;
            }
        }
        _ => unreachable!(),
    }
}
