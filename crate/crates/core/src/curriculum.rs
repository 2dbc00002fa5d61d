//! Task-based curriculum: fidelity-kernel density ratios between tasks,
//! curriculum weights, greedy ordering and sequential training.

use nalgebra::{DMatrix, DVector};

use crate::circuit::Circuit;
use crate::sim::{self, StateVector};
use crate::training::{self, TrainConfig, TrainRecord, UnitaryObjective};
use crate::{Error, Result};

pub const DEFAULT_LAMBDA: f64 = 1e-3;

/// Input/target pairs `(x_i, y_i = V x_i)` of one learning task.
#[derive(Clone, Debug, PartialEq)]
pub struct TaskDataset {
    pub task_id: usize,
    pub layer_count: usize,
    pub inputs: Vec<StateVector>,
    pub targets: Vec<StateVector>,
}

impl TaskDataset {
    pub fn new(
        task_id: usize,
        layer_count: usize,
        inputs: Vec<StateVector>,
        targets: Vec<StateVector>,
    ) -> Result<Self> {
        if inputs.len() != targets.len() {
            return Err(Error::DimensionMismatch {
                expected: inputs.len(),
                actual: targets.len(),
            });
        }
        if let Some(first) = inputs.first() {
            let q = first.num_qubits();
            if let Some(bad) = inputs.iter().chain(&targets).find(|s| s.num_qubits() != q) {
                return Err(Error::DimensionMismatch {
                    expected: q,
                    actual: bad.num_qubits(),
                });
            }
        }
        Ok(Self {
            task_id,
            layer_count,
            inputs,
            targets,
        })
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn num_qubits(&self) -> Option<usize> {
        self.inputs.first().map(StateVector::num_qubits)
    }
}

/// `φ_l(x, y) = |⟨x|x_l⟩|² |⟨y|y_l⟩|²` over the anchors of `main`.
pub fn kernel_basis(x: &StateVector, y: &StateVector, main: &TaskDataset) -> Result<Vec<f64>> {
    main.inputs
        .iter()
        .zip(&main.targets)
        .map(|(xl, yl)| Ok(sim::fidelity(x, xl)? * sim::fidelity(y, yl)?))
        .collect()
}

fn basis_rows(data: &TaskDataset, main: &TaskDataset) -> Result<Vec<Vec<f64>>> {
    data.inputs
        .iter()
        .zip(&data.targets)
        .map(|(x, y)| kernel_basis(x, y, main))
        .collect()
}

/// Linear density-ratio model `r̂(x, y) = αᵀφ(x, y)` anchored on a main task.
#[derive(Clone, Debug, PartialEq)]
pub struct RatioModel {
    pub alpha: Vec<f64>,
    pub anchors: TaskDataset,
    pub lambda: f64,
}

impl RatioModel {
    pub fn ratio(&self, x: &StateVector, y: &StateVector) -> Result<f64> {
        let phi = kernel_basis(x, y, &self.anchors)?;
        Ok(dot(&self.alpha, &phi))
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Solves `(H + λI)α = h` with `H = (1/N_m) Σ φφᵀ` over the auxiliary data
/// and `h = (1/N_M) Σ φ` over the main data.
pub fn fit_ratio(main: &TaskDataset, aux: &TaskDataset, lambda: f64) -> Result<RatioModel> {
    if main.is_empty() || aux.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if !(lambda > 0.0) {
        return Err(Error::InvalidArgument(format!("ridge lambda must be positive, got {lambda}")));
    }
    let main_phi = basis_rows(main, main)?;
    let aux_phi = basis_rows(aux, main)?;
    let alpha = solve_ratio(&main_phi, &aux_phi, lambda)?;
    Ok(RatioModel {
        alpha,
        anchors: main.clone(),
        lambda,
    })
}

/// Ridge solve given basis evaluations on the main and auxiliary samples.
pub fn solve_ratio(main_phi: &[Vec<f64>], aux_phi: &[Vec<f64>], lambda: f64) -> Result<Vec<f64>> {
    let n = main_phi.first().map_or(0, Vec::len);
    let mut h = DVector::<f64>::zeros(n);
    for row in main_phi {
        h += DVector::from_column_slice(row);
    }
    h /= main_phi.len() as f64;
    let mut hm = DMatrix::<f64>::zeros(n, n);
    for row in aux_phi {
        let v = DVector::from_column_slice(row);
        hm.ger(1.0, &v, &v, 1.0);
    }
    hm /= aux_phi.len() as f64;
    for i in 0..n {
        hm[(i, i)] += lambda;
    }
    let chol = hm
        .cholesky()
        .ok_or_else(|| Error::Solver("H + λI is not positive definite".into()))?;
    let alpha = chol.solve(&h);
    if alpha.iter().any(|a| !a.is_finite()) {
        return Err(Error::Solver("non-finite ratio coefficients".into()));
    }
    Ok(alpha.as_slice().to_vec())
}

/// `c = (1/N_m) Σ_i r̂(x_i, y_i)` over the auxiliary samples.
pub fn curriculum_weight(model: &RatioModel, aux: &TaskDataset) -> Result<f64> {
    if aux.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let rows = basis_rows(aux, &model.anchors)?;
    Ok(rows.iter().map(|phi| dot(&model.alpha, phi)).sum::<f64>() / aux.len() as f64)
}

/// Pairwise weights `c[a][b] = c_{a,b}`, indexed by position in `ids`.
#[derive(Clone, Debug, PartialEq)]
pub struct CurriculumWeights {
    pub ids: Vec<usize>,
    pub weights: Vec<Vec<f64>>,
}

impl CurriculumWeights {
    fn index(&self, id: usize) -> Result<usize> {
        self.ids
            .iter()
            .position(|&i| i == id)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown task id {id}")))
    }

    /// `c_{main, aux}`.
    pub fn get(&self, main: usize, aux: usize) -> Result<f64> {
        Ok(self.weights[self.index(main)?][self.index(aux)?])
    }

    /// CSV text: header `main,<aux ids…>`, one row per main task. The diagonal
    /// is left empty.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("main");
        for id in &self.ids {
            out.push_str(&format!(",{id}"));
        }
        out.push('\n');
        for (a, row) in self.weights.iter().enumerate() {
            out.push_str(&self.ids[a].to_string());
            for (b, w) in row.iter().enumerate() {
                if a == b {
                    out.push(',');
                } else {
                    out.push_str(&format!(",{w:.16e}"));
                }
            }
            out.push('\n');
        }
        out
    }
}

/// All off-diagonal weights, computed once up front.
pub fn weight_matrix(tasks: &[TaskDataset], lambda: f64) -> Result<CurriculumWeights> {
    let m = tasks.len();
    let mut weights = vec![vec![f64::NAN; m]; m];
    for (a, main) in tasks.iter().enumerate() {
        let main_phi = basis_rows(main, main)?;
        for (b, aux) in tasks.iter().enumerate() {
            if a == b {
                continue;
            }
            let aux_phi = basis_rows(aux, main)?;
            let alpha = solve_ratio(&main_phi, &aux_phi, lambda)?;
            weights[a][b] = aux_phi.iter().map(|phi| dot(&alpha, phi)).sum::<f64>() / aux.len() as f64;
        }
    }
    Ok(CurriculumWeights {
        ids: tasks.iter().map(|t| t.task_id).collect(),
        weights,
    })
}

/// Builds the order backwards from the main task: each step prepends the
/// remaining task with the highest weight relative to the current one (ties go
/// to the lower id).
pub fn greedy_order_from_weights(weights: &CurriculumWeights, main_id: usize) -> Result<Vec<usize>> {
    weights.index(main_id)?;
    let mut remaining: Vec<usize> = weights.ids.iter().copied().filter(|&i| i != main_id).collect();
    remaining.sort_unstable();
    let mut order = vec![main_id];
    let mut current = main_id;
    while !remaining.is_empty() {
        let mut best = 0;
        let mut best_w = weights.get(current, remaining[0])?;
        for (k, &cand) in remaining.iter().enumerate().skip(1) {
            let w = weights.get(current, cand)?;
            if w > best_w {
                best = k;
                best_w = w;
            }
        }
        current = remaining.remove(best);
        order.push(current);
    }
    order.reverse();
    Ok(order)
}

pub fn greedy_order(tasks: &[TaskDataset], main_id: usize, lambda: f64) -> Result<Vec<usize>> {
    if tasks.is_empty() {
        return Err(Error::EmptyDataset);
    }
    greedy_order_from_weights(&weight_matrix(tasks, lambda)?, main_id)
}

/// Trains the tasks one after another in `order`, carrying only the
/// parameters forward. `main_test` is evaluated after every epoch of every
/// stage so the records track the main task throughout.
pub fn run_qcurl_game(
    tasks: &[TaskDataset],
    order: &[usize],
    circuit: &Circuit,
    init_params: &[f64],
    cfg: &TrainConfig,
    main_test: Option<&TaskDataset>,
) -> Result<Vec<TrainRecord>> {
    if order.is_empty() {
        return Err(Error::InvalidArgument("empty task order".into()));
    }
    let mut params = init_params.to_vec();
    let mut records = Vec::with_capacity(order.len());
    for &id in order {
        let task = tasks
            .iter()
            .find(|t| t.task_id == id)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown task id {id}")))?;
        let objective = UnitaryObjective {
            circuit: circuit.clone(),
            train: task.clone(),
            test: main_test.cloned(),
        };
        let record = training::train(&objective, &params, cfg)?;
        params.clone_from(&record.final_params);
        records.push(record);
    }
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ansatz::build_hea;
    use crate::rng::seeded;
    use crate::sim::{haar_state, HaarMode};
    use crate::training::LossMode;
    use proptest::prelude::*;
    use rand::seq::SliceRandom;
    use rand::Rng;

    fn basis(q: usize, i: usize) -> StateVector {
        StateVector::basis(q, i).unwrap()
    }

    fn plus() -> StateVector {
        let a = Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
        StateVector::from_amplitudes(vec![a, a]).unwrap()
    }

    use num_complex::Complex64;

    fn random_task(id: usize, q: usize, n: usize, seed: u64) -> TaskDataset {
        let mut rng = seeded(seed);
        let inputs = (0..n).map(|_| haar_state(q, HaarMode::Full, &mut rng).unwrap()).collect();
        let targets = (0..n).map(|_| haar_state(q, HaarMode::Full, &mut rng).unwrap()).collect();
        TaskDataset::new(id, 1, inputs, targets).unwrap()
    }

    #[test]
    fn kernel_basis_examples() {
        let main = TaskDataset::new(0, 1, vec![basis(2, 0), basis(2, 1), basis(2, 2)], vec![basis(2, 3), basis(2, 2), basis(2, 1)]).unwrap();
        let phi = kernel_basis(&basis(2, 1), &basis(2, 2), &main).unwrap();
        assert_eq!(phi, vec![0.0, 1.0, 0.0]);
        let phi = kernel_basis(&basis(2, 3), &basis(2, 2), &main).unwrap();
        assert_eq!(phi, vec![0.0, 0.0, 0.0]);
        let one = TaskDataset::new(0, 1, vec![basis(1, 0)], vec![basis(1, 0)]).unwrap();
        let phi = kernel_basis(&plus(), &plus(), &one).unwrap();
        assert!((phi[0] - 0.25).abs() < 1e-15);
        assert!(kernel_basis(&basis(1, 0), &basis(1, 0), &main).is_err());
    }

    #[test]
    fn single_anchor_closed_form() {
        let t = TaskDataset::new(0, 1, vec![basis(1, 0)], vec![basis(1, 0)]).unwrap();
        let m = fit_ratio(&t, &t, 0.1).unwrap();
        assert!((m.alpha[0] - 1.0 / 1.1).abs() < 1e-15);
        assert!((curriculum_weight(&m, &t).unwrap() - 1.0 / 1.1).abs() < 1e-15);
    }

    #[test]
    fn orthogonal_aux_gives_h_over_lambda_and_zero_weight() {
        let main = TaskDataset::new(0, 1, vec![basis(2, 0), basis(2, 1)], vec![basis(2, 0), basis(2, 1)]).unwrap();
        let aux = TaskDataset::new(1, 1, vec![basis(2, 2), basis(2, 3)], vec![basis(2, 2), basis(2, 3)]).unwrap();
        let lambda = 0.01;
        let m = fit_ratio(&main, &aux, lambda).unwrap();
        // h = (1/2)[1, 1]
        for a in &m.alpha {
            assert!((a - 0.5 / lambda).abs() < 1e-10);
        }
        assert_eq!(curriculum_weight(&m, &aux).unwrap(), 0.0);
        let self_w = curriculum_weight(&fit_ratio(&main, &main, 1e-6).unwrap(), &main).unwrap();
        assert!(self_w >= 0.0);
    }

    #[test]
    fn fit_ratio_rejects_bad_input() {
        let t = random_task(0, 2, 3, 1);
        let empty = TaskDataset::new(1, 1, vec![], vec![]).unwrap();
        assert!(matches!(fit_ratio(&t, &empty, 0.1), Err(Error::EmptyDataset)));
        assert!(fit_ratio(&t, &t, 0.0).is_err());
        assert!(TaskDataset::new(0, 1, vec![basis(1, 0)], vec![]).is_err());
    }

    #[test]
    fn greedy_examples() {
        let w = CurriculumWeights { ids: vec![3], weights: vec![vec![f64::NAN]] };
        assert_eq!(greedy_order_from_weights(&w, 3).unwrap(), vec![3]);
        let nan = f64::NAN;
        let w = CurriculumWeights {
            ids: vec![1, 2, 3],
            weights: vec![vec![nan, 0.0, 0.0], vec![0.5, nan, 0.0], vec![0.2, 0.7, nan]],
        };
        assert_eq!(greedy_order_from_weights(&w, 3).unwrap(), vec![1, 2, 3]);
        // Tie between 1 and 2 goes to 1.
        let w = CurriculumWeights {
            ids: vec![1, 2, 3],
            weights: vec![vec![nan, 0.0, 0.0], vec![0.0, nan, 0.0], vec![0.4, 0.4, nan]],
        };
        assert_eq!(greedy_order_from_weights(&w, 3).unwrap(), vec![2, 1, 3]);
    }

    fn brute_greedy(tasks: &[TaskDataset], main: usize, lambda: f64) -> Vec<usize> {
        let find = |id: usize| tasks.iter().find(|t| t.task_id == id).unwrap();
        let mut order = vec![main];
        let mut left: Vec<usize> = tasks.iter().map(|t| t.task_id).filter(|&i| i != main).collect();
        while !left.is_empty() {
            let cur = find(*order.last().unwrap());
            let scores: Vec<f64> = left
                .iter()
                .map(|&id| curriculum_weight(&fit_ratio(cur, find(id), lambda).unwrap(), find(id)).unwrap())
                .collect();
            let best = (0..left.len())
                .max_by(|&a, &b| scores[a].partial_cmp(&scores[b]).unwrap().then(left[b].cmp(&left[a])))
                .unwrap();
            order.push(left.remove(best));
        }
        order.reverse();
        order
    }

    #[test]
    fn greedy_matches_brute_force() {
        for seed in 0..5 {
            let tasks: Vec<TaskDataset> = (0..4).map(|i| random_task(i + 1, 2, 4, seed * 10 + i as u64)).collect();
            let got = greedy_order(&tasks, 4, 1e-3).unwrap();
            assert_eq!(got, brute_greedy(&tasks, 4, 1e-3));
        }
    }

    #[test]
    fn weight_csv_layout() {
        let tasks: Vec<TaskDataset> = (0..3).map(|i| random_task(i, 1, 2, i as u64)).collect();
        let w = weight_matrix(&tasks, 1e-3).unwrap();
        let csv = w.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "main,0,1,2");
        assert_eq!(lines.len(), 4);
        assert!(lines[1].starts_with("0,,"));
    }

    #[test]
    fn game_of_one_task_is_plain_training() {
        let c = build_hea(2, 1).unwrap();
        let task = random_task(5, 2, 4, 3);
        let mut rng = seeded(4);
        let init: Vec<f64> = (0..c.param_count()).map(|_| rng.random_range(0.0..6.0)).collect();
        let cfg = TrainConfig::new(5, 0.01, LossMode::Plain);
        let game = run_qcurl_game(&[task.clone()], &[5], &c, &init, &cfg, None).unwrap();
        let obj = UnitaryObjective { circuit: c, train: task, test: None };
        let direct = training::train(&obj, &init, &cfg).unwrap();
        assert_eq!(format!("{:?}", game[0]), format!("{direct:?}"));
    }

    #[test]
    fn game_transfers_parameters() {
        let c = build_hea(2, 1).unwrap();
        let a = random_task(1, 2, 4, 5);
        let mut b = a.clone();
        b.task_id = 2;
        let mut rng = seeded(6);
        let init: Vec<f64> = (0..c.param_count()).map(|_| rng.random_range(0.0..6.0)).collect();
        let cfg = TrainConfig::new(30, 0.05, LossMode::Plain);
        let recs = run_qcurl_game(&[a, b], &[1, 2], &c, &init, &cfg, None).unwrap();
        assert!((recs[1].epochs[0].train_loss - recs[0].final_train_loss).abs() < 1e-12);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn fit_ratio_is_permutation_invariant(seed in 0u64..10_000) {
            let main = random_task(0, 2, 5, seed);
            let aux = random_task(1, 2, 5, seed + 1);
            let m = fit_ratio(&main, &aux, 1e-3).unwrap();
            let c = curriculum_weight(&m, &aux).unwrap();
            let mut rng = seeded(seed + 2);
            let mut perm: Vec<usize> = (0..5).collect();
            perm.shuffle(&mut rng);
            let shuffle = |t: &TaskDataset| TaskDataset::new(
                t.task_id, 1,
                perm.iter().map(|&i| t.inputs[i].clone()).collect(),
                perm.iter().map(|&i| t.targets[i].clone()).collect(),
            ).unwrap();
            let aux2 = shuffle(&aux);
            let m2 = fit_ratio(&main, &aux2, 1e-3).unwrap();
            prop_assert!((m2.alpha.iter().zip(&m.alpha).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)) < 1e-12 * (1.0 + m.alpha.iter().map(|a| a.abs()).fold(0.0, f64::max)));
            let main2 = shuffle(&main);
            let c2 = curriculum_weight(&fit_ratio(&main2, &aux2, 1e-3).unwrap(), &aux2).unwrap();
            prop_assert!((c - c2).abs() < 1e-12 * (1.0 + c.abs()));
        }

        #[test]
        fn kernel_entries_in_unit_interval(seed in 0u64..10_000) {
            let main = random_task(0, 2, 4, seed);
            let aux = random_task(1, 2, 3, seed + 7);
            for (x, y) in aux.inputs.iter().zip(&aux.targets) {
                for v in kernel_basis(x, y, &main).unwrap() {
                    prop_assert!((0.0..=1.0 + 1e-15).contains(&v));
                }
            }
        }

        #[test]
        fn greedy_is_permutation_ending_at_main(seed in 0u64..10_000) {
            let tasks: Vec<TaskDataset> = (0..4).map(|i| random_task(i, 1, 2, seed * 4 + i as u64)).collect();
            let order = greedy_order(&tasks, 2, 1e-3).unwrap();
            prop_assert_eq!(*order.last().unwrap(), 2);
            let mut sorted = order.clone();
            sorted.sort_unstable();
            prop_assert_eq!(sorted, vec![0, 1, 2, 3]);
        }
    }
}
