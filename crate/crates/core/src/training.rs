//! Losses, gradients and the full-batch Adam training loop.
//!
//! Training gradients use the adjoint pass in [`crate::exec`];
//! [`parameter_shift_grad`] is the hardware-style estimator and serves as an
//! independent check.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::ansatz::Qcnn;
use crate::circuit::Circuit;
use crate::curriculum::TaskDataset;
use crate::dataloss::{self, EtaMode, SuperLossConfig};
use crate::exec::Program;
use crate::sim::{self, StateVector};
use crate::{Error, Result};

/// `1 − |Tr[V†U]|²/d²`.
pub fn hs_distance(u: &DMatrix<Complex64>, v: &DMatrix<Complex64>) -> Result<f64> {
    if !u.is_square() || u.shape() != v.shape() {
        return Err(Error::DimensionMismatch {
            expected: v.nrows(),
            actual: u.nrows(),
        });
    }
    let d = u.nrows() as f64;
    // Tr[V†U] = Σ_ij conj(V_ij) U_ij
    let tr: Complex64 = u.iter().zip(v.iter()).map(|(a, b)| b.conj() * a).sum();
    Ok((1.0 - tr.norm_sqr() / (d * d)).max(0.0))
}

#[derive(Clone, Debug, PartialEq)]
pub struct LossValue {
    pub value: f64,
    pub per_sample: Vec<f64>,
}

impl LossValue {
    fn from_samples(per_sample: Vec<f64>) -> Self {
        let value = mean(&per_sample);
        Self { value, per_sample }
    }
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// `1 − |⟨ψ_j|V†U(θ)|ψ_j⟩|²` per sample, with targets `V|ψ_j⟩` stored in the
/// dataset.
pub fn empirical_unitary_loss(
    circuit: &Circuit,
    params: &[f64],
    dataset: &TaskDataset,
) -> Result<LossValue> {
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let prog = Program::compile(circuit, params)?;
    let per_sample = dataset
        .inputs
        .iter()
        .zip(&dataset.targets)
        .map(|(x, y)| Ok(1.0 - sim::fidelity(&prog.forward(x)?, y)?))
        .collect::<Result<Vec<_>>>()?;
    Ok(LossValue::from_samples(per_sample))
}

/// Label transform `s(y)` applied before the cross-entropy.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LabelMap {
    Identity,
    /// `s(0) = 0.5`, `s(1) = 1`.
    HalfShift,
}

impl LabelMap {
    pub fn target(self, label: u8) -> f64 {
        match (self, label) {
            (LabelMap::Identity, 0) => 0.0,
            (LabelMap::HalfShift, 0) => 0.5,
            _ => 1.0,
        }
    }

    /// Decision threshold on `ŷ`: midway between the two targets.
    pub fn threshold(self) -> f64 {
        0.5 * (self.target(0) + self.target(1))
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^x)` without overflow.
fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Binary cross-entropy of `ŷ = sigmoid(μq)` against `s(y)`.
pub fn bce_loss(q: f64, label: u8, mu: f64, map: LabelMap) -> f64 {
    let s = map.target(label);
    let x = mu * q;
    // −ln ŷ = softplus(−x), −ln(1 − ŷ) = softplus(x)
    s * softplus(-x) + (1.0 - s) * softplus(x)
}

/// `dℓ/dq` of [`bce_loss`].
pub fn bce_grad(q: f64, label: u8, mu: f64, map: LabelMap) -> f64 {
    mu * (sigmoid(mu * q) - map.target(label))
}

#[derive(Clone, Debug, PartialEq)]
pub struct ShiftGradient {
    pub grad: Vec<f64>,
    /// Set when some gate had a non-involutory generator and central finite
    /// differences were used for it.
    pub used_finite_differences: bool,
}

pub const FD_STEP: f64 = 1e-5;

/// Parameter-shift gradient of a loss expressed over per-gate angles (see
/// [`Circuit::bind`]). Each gate bound to a slot is shifted separately and the
/// terms are summed into that slot.
pub fn parameter_shift_grad<F>(circuit: &Circuit, params: &[f64], loss: F) -> Result<ShiftGradient>
where
    F: Fn(&[f64]) -> Result<f64>,
{
    let angles = circuit.bind(params)?;
    let mut grad = vec![0.0; circuit.param_count()];
    let mut used_fd = false;
    let mut shifted = angles.clone();
    for (i, g) in circuit.gates().iter().enumerate() {
        let Some(slot) = g.param_slot else { continue };
        let (step, coeff) = match g.shift_rule() {
            Some(rule) => rule,
            None => {
                used_fd = true;
                (FD_STEP, 0.5 / FD_STEP)
            }
        };
        shifted[i] = angles[i] + step;
        let plus = loss(&shifted)?;
        shifted[i] = angles[i] - step;
        let minus = loss(&shifted)?;
        shifted[i] = angles[i];
        grad[slot] += g.param_scale * coeff * (plus - minus);
    }
    Ok(ShiftGradient {
        grad,
        used_finite_differences: used_fd,
    })
}

/// Adam with bias correction.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub step: u64,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    pub fn new(n: usize, lr: f64) -> Self {
        Self {
            step: 0,
            m: vec![0.0; n],
            v: vec![0.0; n],
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

pub fn adam_step(state: &mut AdamState, params: &mut [f64], grad: &[f64]) -> Result<()> {
    if params.len() != state.m.len() || grad.len() != state.m.len() {
        return Err(Error::DimensionMismatch {
            expected: state.m.len(),
            actual: if params.len() != state.m.len() { params.len() } else { grad.len() },
        });
    }
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - state.beta1.powi(t);
    let bc2 = 1.0 - state.beta2.powi(t);
    for i in 0..params.len() {
        let g = grad[i];
        state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * g;
        state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * g * g;
        let m_hat = state.m[i] / bc1;
        let v_hat = state.v[i] / bc2;
        params[i] -= state.lr * m_hat / (v_hat.sqrt() + state.eps);
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TestMetrics {
    pub loss: f64,
    pub accuracy: Option<f64>,
}

/// A supervised objective over a fixed training set.
pub trait Objective: Sync {
    fn param_count(&self) -> usize;

    /// Per-sample training losses at `params`.
    fn train_losses(&self, params: &[f64]) -> Result<Vec<f64>>;

    /// Per-sample losses and the gradient of `(1/N) Σ c_i ℓ_i`, where the
    /// coefficients `c = coefficients(losses)` are held constant.
    fn value_and_grad(
        &self,
        params: &[f64],
        coefficients: &mut dyn FnMut(&[f64]) -> Result<Vec<f64>>,
    ) -> Result<(Vec<f64>, Vec<f64>)>;

    fn test_metrics(&self, params: &[f64]) -> Result<Option<TestMetrics>>;
}

/// Shared forward/backward over a batch of input states.
fn batch_value_and_grad<L, C>(
    prog: &Program,
    param_count: usize,
    inputs: &[StateVector],
    loss: L,
    cotangent: C,
    coefficients: &mut dyn FnMut(&[f64]) -> Result<Vec<f64>>,
) -> Result<(Vec<f64>, Vec<f64>)>
where
    L: Fn(usize, &[Complex64]) -> f64,
    C: Fn(usize, &[Complex64], f64) -> Vec<Complex64>,
{
    let traces = inputs
        .iter()
        .map(|x| prog.trace(x))
        .collect::<Result<Vec<_>>>()?;
    let losses: Vec<f64> = traces
        .iter()
        .enumerate()
        .map(|(i, t)| loss(i, t.last().expect("trace")))
        .collect();
    let coeffs = coefficients(&losses)?;
    if coeffs.len() != losses.len() {
        return Err(Error::DimensionMismatch {
            expected: losses.len(),
            actual: coeffs.len(),
        });
    }
    let n = inputs.len() as f64;
    let mut acc = prog.accumulator();
    for (i, trace) in traces.iter().enumerate() {
        let lambda = cotangent(i, trace.last().expect("trace"), coeffs[i] / n);
        prog.backward(trace, lambda, &mut acc);
    }
    let grad = prog.gradient(&acc);
    debug_assert_eq!(grad.len(), param_count);
    Ok((losses, grad))
}

/// Unitary learning: fit `U(θ)` to the pairs `(ψ_j, Vψ_j)`.
#[derive(Clone, Debug)]
pub struct UnitaryObjective {
    pub circuit: Circuit,
    pub train: TaskDataset,
    pub test: Option<TaskDataset>,
}

impl Objective for UnitaryObjective {
    fn param_count(&self) -> usize {
        self.circuit.param_count()
    }

    fn train_losses(&self, params: &[f64]) -> Result<Vec<f64>> {
        Ok(empirical_unitary_loss(&self.circuit, params, &self.train)?.per_sample)
    }

    fn value_and_grad(
        &self,
        params: &[f64],
        coefficients: &mut dyn FnMut(&[f64]) -> Result<Vec<f64>>,
    ) -> Result<(Vec<f64>, Vec<f64>)> {
        if self.train.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let prog = Program::compile(&self.circuit, params)?;
        let targets = &self.train.targets;
        batch_value_and_grad(
            &prog,
            self.param_count(),
            &self.train.inputs,
            |i, out| 1.0 - sim::inner_unchecked(targets[i].amplitudes(), out).norm_sqr(),
            |i, out, c| {
                let t = targets[i].amplitudes();
                let ov = sim::inner_unchecked(t, out);
                let f = -2.0 * c * ov;
                t.iter().map(|x| f * x).collect()
            },
            coefficients,
        )
    }

    fn test_metrics(&self, params: &[f64]) -> Result<Option<TestMetrics>> {
        match &self.test {
            None => Ok(None),
            Some(test) => Ok(Some(TestMetrics {
                loss: empirical_unitary_loss(&self.circuit, params, test)?.value,
                accuracy: None,
            })),
        }
    }
}

/// Labelled quantum states for binary classification.
#[derive(Clone, Debug, Default)]
pub struct LabeledSet {
    pub states: Vec<StateVector>,
    pub labels: Vec<u8>,
}

impl LabeledSet {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }
}

/// QCNN classifier trained with binary cross-entropy on `sigmoid(μq)`.
#[derive(Clone, Debug)]
pub struct ClassifierObjective {
    pub model: Qcnn,
    pub train: LabeledSet,
    pub test: Option<LabeledSet>,
    pub mu: f64,
    pub label_map: LabelMap,
}

impl ClassifierObjective {
    /// QCNN outputs `q` for a batch of states.
    pub fn outputs(&self, params: &[f64], states: &[StateVector]) -> Result<Vec<f64>> {
        let prog = Program::compile(&self.model.circuit, params)?;
        states
            .iter()
            .map(|s| sim::expval_z(&prog.forward(s)?, self.model.readout))
            .collect()
    }

    /// Mean loss and accuracy on a labelled set.
    pub fn evaluate(&self, params: &[f64], set: &LabeledSet) -> Result<TestMetrics> {
        if set.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let qs = self.outputs(params, &set.states)?;
        let thr = self.label_map.threshold();
        let mut loss = 0.0;
        let mut correct = 0usize;
        for (&q, &y) in qs.iter().zip(&set.labels) {
            loss += bce_loss(q, y, self.mu, self.label_map);
            let predicted = u8::from(sigmoid(self.mu * q) >= thr);
            correct += usize::from(predicted == y);
        }
        let n = set.len() as f64;
        Ok(TestMetrics {
            loss: loss / n,
            accuracy: Some(correct as f64 / n),
        })
    }
}

fn z_expectation(amps: &[Complex64], qubit: usize) -> f64 {
    let mask = 1usize << qubit;
    amps.iter()
        .enumerate()
        .map(|(i, a)| if i & mask == 0 { a.norm_sqr() } else { -a.norm_sqr() })
        .sum()
}

impl Objective for ClassifierObjective {
    fn param_count(&self) -> usize {
        self.model.circuit.param_count()
    }

    fn train_losses(&self, params: &[f64]) -> Result<Vec<f64>> {
        let qs = self.outputs(params, &self.train.states)?;
        Ok(qs
            .iter()
            .zip(&self.train.labels)
            .map(|(&q, &y)| bce_loss(q, y, self.mu, self.label_map))
            .collect())
    }

    fn value_and_grad(
        &self,
        params: &[f64],
        coefficients: &mut dyn FnMut(&[f64]) -> Result<Vec<f64>>,
    ) -> Result<(Vec<f64>, Vec<f64>)> {
        if self.train.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let prog = Program::compile(&self.model.circuit, params)?;
        let r = self.model.readout;
        let labels = &self.train.labels;
        let (mu, map) = (self.mu, self.label_map);
        batch_value_and_grad(
            &prog,
            self.param_count(),
            &self.train.states,
            |i, out| bce_loss(z_expectation(out, r), labels[i], mu, map),
            |i, out, c| {
                // dq = 2 Re⟨Zψ|dψ⟩
                let q = z_expectation(out, r);
                let f = 2.0 * c * bce_grad(q, labels[i], mu, map);
                let mask = 1usize << r;
                out.iter()
                    .enumerate()
                    .map(|(k, a)| if k & mask == 0 { a * f } else { -a * f })
                    .collect()
            },
            coefficients,
        )
    }

    fn test_metrics(&self, params: &[f64]) -> Result<Option<TestMetrics>> {
        match &self.test {
            None => Ok(None),
            Some(test) => self.evaluate(params, test).map(Some),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum LossMode {
    Plain,
    Qcurl(SuperLossConfig),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr: f64,
    pub loss_mode: LossMode,
    /// Evaluate test metrics every this many epochs (0: only after the last
    /// epoch).
    pub test_every: usize,
}

impl TrainConfig {
    pub fn new(epochs: usize, lr: f64, loss_mode: LossMode) -> Self {
        Self {
            epochs,
            lr,
            loss_mode,
            test_every: 1,
        }
    }
}

/// One epoch. Training quantities come from the forward pass that produced
/// the epoch's gradient; test metrics are taken after the parameter update.
/// Unavailable values are NaN.
#[derive(Clone, Debug, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub weighted_loss: f64,
    pub test_loss: f64,
    pub test_accuracy: f64,
    pub eta: f64,
    pub w_mean: f64,
    pub w_min: f64,
    pub w_max: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainRecord {
    pub epochs: Vec<EpochRecord>,
    pub final_params: Vec<f64>,
    /// Plain training loss at the final parameters.
    pub final_train_loss: f64,
    pub final_test: Option<TestMetrics>,
}

/// Full-batch Adam training.
pub fn train<O: Objective + ?Sized>(
    objective: &O,
    init_params: &[f64],
    cfg: &TrainConfig,
) -> Result<TrainRecord> {
    if cfg.epochs == 0 {
        return Err(Error::InvalidArgument("epochs must be at least 1".into()));
    }
    if init_params.len() != objective.param_count() {
        return Err(Error::ParamLength {
            expected: objective.param_count(),
            actual: init_params.len(),
        });
    }
    let mut params = init_params.to_vec();
    let mut adam = AdamState::new(params.len(), cfg.lr);
    let mut eta: Option<f64> = None;
    let mut epochs = Vec::with_capacity(cfg.epochs);
    let mut last_test = None;

    for epoch in 1..=cfg.epochs {
        let mut row = EpochRecord {
            epoch,
            train_loss: f64::NAN,
            weighted_loss: f64::NAN,
            test_loss: f64::NAN,
            test_accuracy: f64::NAN,
            eta: f64::NAN,
            w_mean: f64::NAN,
            w_min: f64::NAN,
            w_max: f64::NAN,
        };
        let (losses, grad) = match cfg.loss_mode {
            LossMode::Plain => {
                let (losses, grad) =
                    objective.value_and_grad(&params, &mut |l| Ok(vec![1.0; l.len()]))?;
                row.weighted_loss = mean(&losses);
                (losses, grad)
            }
            LossMode::Qcurl(sl) => {
                let mut weighted = f64::NAN;
                let mut summary = (f64::NAN, f64::NAN, f64::NAN);
                let mut used_eta = f64::NAN;
                let out = objective.value_and_grad(&params, &mut |l| {
                    // First epoch: threshold from the initial forward pass.
                    let e = match (eta, sl.eta_mode) {
                        (Some(e), _) => e,
                        (None, EtaMode::Fixed) => sl.eta_init,
                        (None, EtaMode::PreviousEpochMean) => mean(l),
                    };
                    let w = dataloss::sample_weights(l, e, sl.gamma)?;
                    weighted = dataloss::weighted_risk(l, &w, e, sl.gamma)?;
                    summary = w.summary();
                    used_eta = e;
                    Ok(w.factors())
                })?;
                row.weighted_loss = weighted;
                row.eta = used_eta;
                (row.w_mean, row.w_min, row.w_max) = summary;
                eta = Some(dataloss::update_eta(&out.0, &sl));
                out
            }
        };
        row.train_loss = mean(&losses);
        adam_step(&mut adam, &mut params, &grad)?;
        let due = epoch == cfg.epochs || (cfg.test_every > 0 && epoch % cfg.test_every == 0);
        if due {
            if let Some(m) = objective.test_metrics(&params)? {
                row.test_loss = m.loss;
                row.test_accuracy = m.accuracy.unwrap_or(f64::NAN);
                last_test = Some(m);
            }
        }
        epochs.push(row);
    }
    let final_train_loss = mean(&objective.train_losses(&params)?);
    Ok(TrainRecord {
        epochs,
        final_params: params,
        final_train_loss,
        final_test: last_test,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ansatz::{build_hea, build_qcnn, QcnnVariant};
    use crate::circuit::{Axis, GateKind, GateSpec};
    use crate::linalg::{random_unitary, Pauli};
    use crate::rng::seeded;
    use crate::sim::{haar_state, HaarMode};
    use proptest::prelude::*;
    use rand::Rng;
    use std::f64::consts::{FRAC_PI_2, LN_2};

    fn to_dmatrix(m: &[Complex64], d: usize) -> DMatrix<Complex64> {
        DMatrix::from_row_slice(d, d, m)
    }

    #[test]
    fn hs_distance_examples() {
        let mut rng = seeded(1);
        let v = to_dmatrix(&random_unitary(4, &mut rng), 4);
        assert!(hs_distance(&v, &v).unwrap().abs() < 1e-14);
        let phase = Complex64::from_polar(1.0, 0.83);
        assert!(hs_distance(&(v.clone() * phase), &v).unwrap().abs() < 1e-14);
        let id = DMatrix::<Complex64>::identity(2, 2);
        let x = to_dmatrix(&Pauli::X.matrix(), 2);
        assert!((hs_distance(&id, &x).unwrap() - 1.0).abs() < 1e-15);
        assert!(hs_distance(&id, &v).is_err());
    }

    #[test]
    fn hs_distance_is_symmetric() {
        let mut rng = seeded(2);
        for _ in 0..10 {
            let u = to_dmatrix(&random_unitary(8, &mut rng), 8);
            let v = to_dmatrix(&random_unitary(8, &mut rng), 8);
            let a = hs_distance(&u, &v).unwrap();
            let b = hs_distance(&v, &u).unwrap();
            assert!((a - b).abs() < 1e-14);
            assert!((0.0..=1.0).contains(&a));
        }
    }

    #[test]
    fn bce_examples() {
        assert!((bce_loss(0.0, 1, 1.0, LabelMap::Identity) - LN_2).abs() < 1e-15);
        assert!((bce_loss(0.0, 0, 5.0, LabelMap::HalfShift) - LN_2).abs() < 1e-15);
        let mut prev = f64::INFINITY;
        for i in 0..=20 {
            let q = -1.0 + 0.1 * i as f64;
            let l = bce_loss(q, 1, 1.0, LabelMap::Identity);
            assert!(l < prev);
            prev = l;
        }
        let (q, h) = (0.3, 1e-6);
        for map in [LabelMap::Identity, LabelMap::HalfShift] {
            for y in [0, 1] {
                let fd = (bce_loss(q + h, y, 5.0, map) - bce_loss(q - h, y, 5.0, map)) / (2.0 * h);
                assert!((fd - bce_grad(q, y, 5.0, map)).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn shift_rule_on_single_ry() {
        let mut c = Circuit::new(1);
        c.push(GateSpec::trainable(GateKind::Rotation(Axis::Y), vec![0], 0)).unwrap();
        let loss = |angles: &[f64]| {
            let mut s = StateVector::zero(1)?;
            c.apply_angles(angles, &mut s)?;
            sim::expval_z(&s, 0)
        };
        let g = parameter_shift_grad(&c, &[FRAC_PI_2], loss).unwrap();
        assert!((g.grad[0] + 1.0).abs() < 1e-14);
        assert!(!g.used_finite_differences);
        // ⟨Z⟩ = cos θ is minimal at θ = π.
        let g = parameter_shift_grad(&c, &[std::f64::consts::PI], loss).unwrap();
        assert!(g.grad[0].abs() < 1e-8);
    }

    #[test]
    fn non_involutory_generator_falls_back_to_finite_differences() {
        let gen = vec![
            Complex64::new(0.3, 0.0),
            Complex64::new(0.2, -0.1),
            Complex64::new(0.2, 0.1),
            Complex64::new(-1.1, 0.0),
        ];
        let mut c = Circuit::new(1);
        c.push(GateSpec::fixed(GateKind::Hadamard, vec![0])).unwrap();
        c.push(GateSpec::trainable(GateKind::GeneratorExp(gen), vec![0], 0)).unwrap();
        c.push(GateSpec::fixed(GateKind::Hadamard, vec![0])).unwrap();
        let loss = |angles: &[f64]| {
            let mut s = StateVector::zero(1)?;
            c.apply_angles(angles, &mut s)?;
            sim::expval_z(&s, 0)
        };
        let g = parameter_shift_grad(&c, &[0.4], loss).unwrap();
        assert!(g.used_finite_differences);
        let p = |t: f64| loss(&c.bind(&[t]).unwrap()).unwrap();
        let fd = (p(0.4 + 1e-6) - p(0.4 - 1e-6)) / 2e-6;
        assert!((g.grad[0] - fd).abs() < 1e-7);
    }

    #[test]
    fn adam_examples() {
        let mut st = AdamState::new(2, 0.001);
        let mut p = vec![1.0, -2.0];
        adam_step(&mut st, &mut p, &[3.0, -0.5]).unwrap();
        assert!((p[0] - (1.0 - 0.001)).abs() < 1e-9);
        assert!((p[1] - (-2.0 + 0.001)).abs() < 1e-9);
        let mut st = AdamState::new(1, 0.001);
        let mut p = vec![0.7];
        adam_step(&mut st, &mut p, &[0.0]).unwrap();
        assert_eq!(p[0], 0.7);
        assert!(adam_step(&mut st, &mut p, &[0.0, 1.0]).is_err());
    }

    #[test]
    fn adam_minimises_quadratic() {
        let mut st = AdamState::new(1, 0.001);
        let mut x = vec![1.0];
        for _ in 0..5000 {
            let g = [2.0 * x[0]];
            adam_step(&mut st, &mut x, &g).unwrap();
        }
        assert!(x[0].abs() < 1e-3, "x = {}", x[0]);
    }

    fn unitary_task(circuit: &Circuit, theta: &[f64], n: usize, seed: u64) -> TaskDataset {
        let mut rng = seeded(seed);
        let inputs: Vec<StateVector> = (0..n)
            .map(|_| haar_state(circuit.num_qubits(), HaarMode::Full, &mut rng).unwrap())
            .collect();
        let targets = inputs.iter().map(|x| circuit.run(theta, x).unwrap()).collect();
        TaskDataset::new(0, 1, inputs, targets).unwrap()
    }

    #[test]
    fn exact_target_has_zero_loss() {
        let c = build_hea(3, 2).unwrap();
        let mut rng = seeded(3);
        let theta: Vec<f64> = (0..c.param_count()).map(|_| rng.random_range(0.0..6.2)).collect();
        let data = unitary_task(&c, &theta, 6, 4);
        let l = empirical_unitary_loss(&c, &theta, &data).unwrap();
        assert!(l.value.abs() < 1e-12);
        let obj = UnitaryObjective { circuit: c, train: data, test: None };
        let rec = train(&obj, &theta, &TrainConfig::new(1, 0.001, LossMode::Plain)).unwrap();
        assert!(rec.epochs[0].train_loss.abs() < 1e-12);
        assert!(train(&obj, &theta, &TrainConfig::new(0, 0.001, LossMode::Plain)).is_err());
    }

    #[test]
    fn empirical_loss_bounds_and_empty_dataset() {
        let c = build_hea(2, 1).unwrap();
        let mut rng = seeded(5);
        let theta: Vec<f64> = (0..c.param_count()).map(|_| rng.random_range(0.0..6.2)).collect();
        let other: Vec<f64> = (0..c.param_count()).map(|_| rng.random_range(0.0..6.2)).collect();
        let data = unitary_task(&c, &theta, 10, 6);
        let l = empirical_unitary_loss(&c, &other, &data).unwrap();
        assert!(l.per_sample.iter().all(|x| (0.0..=1.0).contains(x)));
        assert!((l.value - mean(&l.per_sample)).abs() < 1e-15);
        let empty = TaskDataset { task_id: 0, layer_count: 1, inputs: vec![], targets: vec![] };
        assert!(matches!(empirical_unitary_loss(&c, &theta, &empty), Err(Error::EmptyDataset)));
    }

    #[test]
    fn adjoint_gradient_matches_parameter_shift_for_classifier() {
        let model = build_qcnn(4, QcnnVariant::Main).unwrap();
        let mut rng = seeded(12);
        let states: Vec<StateVector> = (0..3).map(|_| haar_state(4, HaarMode::Full, &mut rng).unwrap()).collect();
        let obj = ClassifierObjective {
            model: model.clone(),
            train: LabeledSet { states: states.clone(), labels: vec![0, 1, 1] },
            test: None,
            mu: 1.0,
            label_map: LabelMap::Identity,
        };
        let params: Vec<f64> = (0..45).map(|_| rng.random_range(-1.0..1.0)).collect();
        let (_, grad) = obj.value_and_grad(&params, &mut |l| Ok(vec![1.0; l.len()])).unwrap();
        // The shift rule holds for expectation values, so it is applied to each
        // q_i and combined through the chain rule.
        let mut expected = vec![0.0; 45];
        for (s, &y) in states.iter().zip(&[0u8, 1, 1]) {
            let q_of = |angles: &[f64]| -> Result<f64> {
                let mut out = s.clone();
                model.circuit.apply_angles(angles, &mut out)?;
                sim::expval_z(&out, model.readout)
            };
            let q = model.output(&params, s).unwrap();
            let dq = parameter_shift_grad(&model.circuit, &params, q_of).unwrap();
            let f = bce_grad(q, y, 1.0, LabelMap::Identity) / 3.0;
            for (e, g) in expected.iter_mut().zip(&dq.grad) {
                *e += f * g;
            }
        }
        for (a, b) in grad.iter().zip(&expected) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn weighted_training_uses_data_threshold() {
        let c = build_hea(2, 1).unwrap();
        let mut rng = seeded(7);
        let theta: Vec<f64> = (0..c.param_count()).map(|_| rng.random_range(0.0..6.2)).collect();
        let init: Vec<f64> = (0..c.param_count()).map(|_| rng.random_range(0.0..6.2)).collect();
        let data = unitary_task(&c, &theta, 8, 8);
        let obj = UnitaryObjective { circuit: c, train: data, test: None };
        let mode = LossMode::Qcurl(SuperLossConfig::easy(1.0).unwrap());
        let rec = train(&obj, &init, &TrainConfig::new(3, 0.01, mode)).unwrap();
        let first = &rec.epochs[0];
        assert!((first.eta - first.train_loss).abs() < 1e-14);
        assert!((rec.epochs[1].eta - first.train_loss).abs() < 1e-14);
        assert!(first.w_min <= first.w_mean && first.w_mean <= first.w_max);
    }

    #[test]
    fn plain_training_ignores_sample_order() {
        let c = build_hea(2, 1).unwrap();
        let mut rng = seeded(70);
        let theta: Vec<f64> = (0..c.param_count()).map(|_| rng.random_range(0.0..6.2)).collect();
        let init: Vec<f64> = (0..c.param_count()).map(|_| rng.random_range(0.0..6.2)).collect();
        let data = unitary_task(&c, &theta, 6, 71);
        let mut reversed = data.clone();
        reversed.inputs.reverse();
        reversed.targets.reverse();
        let cfg = TrainConfig::new(10, 0.05, LossMode::Plain);
        let a = train(&UnitaryObjective { circuit: c.clone(), train: data, test: None }, &init, &cfg).unwrap();
        let b = train(&UnitaryObjective { circuit: c, train: reversed, test: None }, &init, &cfg).unwrap();
        for (x, y) in a.final_params.iter().zip(&b.final_params) {
            assert!((x - y).abs() < 1e-10);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn shift_rule_matches_finite_differences_on_hea(seed in 0u64..1000) {
            let c = build_hea(3, 2).unwrap();
            let mut rng = seeded(seed);
            let params: Vec<f64> = (0..c.param_count()).map(|_| rng.random_range(0.0..6.3)).collect();
            let psi = haar_state(3, HaarMode::Full, &mut rng).unwrap();
            let target = haar_state(3, HaarMode::Full, &mut rng).unwrap();
            let loss = |angles: &[f64]| -> Result<f64> {
                let mut s = psi.clone();
                c.apply_angles(angles, &mut s)?;
                Ok(1.0 - sim::fidelity(&s, &target)?)
            };
            let g = parameter_shift_grad(&c, &params, loss).unwrap();
            for i in 0..params.len() {
                let mut p = params.clone();
                p[i] += FD_STEP;
                let plus = loss(&c.bind(&p).unwrap()).unwrap();
                p[i] -= 2.0 * FD_STEP;
                let minus = loss(&c.bind(&p).unwrap()).unwrap();
                let fd = (plus - minus) / (2.0 * FD_STEP);
                prop_assert!((fd - g.grad[i]).abs() < 1e-6);
            }
        }
    }
}
