//! The five experiment drivers. Each one returns plain tables; [`run_experiment`]
//! writes them together with a manifest.

use std::collections::BTreeMap;
use std::fs;

use anyhow::{Context, Result};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use qcurl_core::ansatz::{build_hea, build_qcnn, build_xy_target, Qcnn, QcnnVariant};
use qcurl_core::curriculum::{
    curriculum_weight, fit_ratio, greedy_order_from_weights, run_qcurl_game, weight_matrix,
};
use qcurl_core::dataloss::SuperLossConfig;
use qcurl_core::physics::{self, make_phase_dataset, make_unitary_tasks, LabeledState, PhaseKind};
use qcurl_core::rng::{derive_seed, seeded};
use qcurl_core::training::{
    hs_distance, train, ClassifierObjective, LabeledSet, LossMode, TrainConfig, TrainRecord,
};
use qcurl_core::sim::StateVector;

use crate::config::{Experiment, ExperimentConfig, TrainMode};
use crate::output::{fmt_f64, OutputGuard, Table};
use crate::stats;

pub const VERSION: &str = concat!(env!("CARGO_PKG_VERSION"), "-g", env!("QCURL_GIT_REV"));

#[derive(Clone, Debug, PartialEq)]
pub struct Outcome {
    pub raw: Table,
    pub aggregate: Table,
    /// `metric,value` pairs.
    pub summary: Table,
}

// Substream labels so that data, initialisation and order draws stay
// independent of each other.
const STREAM_DATA: u64 = 0;
const STREAM_INIT: u64 = 1;
const STREAM_ORDER: u64 = 2;
const STREAM_NOISE: u64 = 3;

fn stream(cfg: &ExperimentConfig, trial: usize, kind: u64) -> qcurl_core::rng::Rng {
    seeded(derive_seed(cfg.seed, &[trial as u64, kind]))
}

fn uniform_init(n: usize, rng: &mut impl Rng) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(0.0..std::f64::consts::TAU)).collect()
}

fn normal_init(n: usize, rng: &mut impl Rng) -> Vec<f64> {
    let d = Normal::new(0.0, 0.1).expect("valid normal");
    (0..n).map(|_| d.sample(rng)).collect()
}

fn f(x: f64) -> String {
    fmt_f64(x)
}

fn summary_table(pairs: Vec<(String, f64)>) -> Table {
    let mut t = Table::new(&["metric", "value"]);
    for (k, v) in pairs {
        t.push(vec![k, f(v)]);
    }
    t
}

/// Curriculum weight against HS distance for every auxiliary depth.
pub fn weights(cfg: &ExperimentConfig) -> Result<Outcome> {
    struct Trial {
        hs: Vec<f64>,
        c: Vec<f64>,
    }
    let trials: Vec<Trial> = (0..cfg.trials)
        .into_par_iter()
        .map(|t| -> Result<Trial> {
            let mut rng = stream(cfg, t, STREAM_DATA);
            let (beta_seed, fixed_seed) = (rng.random(), rng.random());
            let layers: Vec<usize> = (1..=cfg.l_main).collect();
            let tasks = make_unitary_tasks(
                cfg.q, &layers, cfg.l_fixed, cfg.n, beta_seed, fixed_seed, cfg.input_mode, &mut rng,
            )?;
            let main = tasks.last().expect("l_main >= 2");
            let v_main = build_xy_target(cfg.q, cfg.l_main, cfg.l_fixed, beta_seed, fixed_seed)?.unitary()?;
            let mut hs = Vec::new();
            let mut c = Vec::new();
            for aux in &tasks[..tasks.len() - 1] {
                let v = build_xy_target(cfg.q, aux.layer_count, cfg.l_fixed, beta_seed, fixed_seed)?.unitary()?;
                hs.push(hs_distance(&v, &v_main)?);
                c.push(curriculum_weight(&fit_ratio(main, aux, cfg.lambda)?, aux)?);
            }
            Ok(Trial { hs, c })
        })
        .collect::<Result<_>>()?;

    let mut raw = Table::new(&["trial", "L_m", "hs_distance", "curriculum_weight"]);
    for (t, tr) in trials.iter().enumerate() {
        for m in 0..tr.hs.len() {
            raw.push(vec![t.to_string(), (m + 1).to_string(), f(tr.hs[m]), f(tr.c[m])]);
        }
    }
    let mut aggregate = Table::new(&["L_m", "hs_mean", "hs_std", "weight_mean", "weight_std"]);
    for m in 0..cfg.l_main - 1 {
        let hs: Vec<f64> = trials.iter().map(|t| t.hs[m]).collect();
        let c: Vec<f64> = trials.iter().map(|t| t.c[m]).collect();
        aggregate.push(vec![(m + 1).to_string(), f(stats::mean(&hs)), f(stats::std(&hs)), f(stats::mean(&c)), f(stats::std(&c))]);
    }
    let rho: Vec<f64> = trials.iter().map(|t| stats::spearman(&t.c, &t.hs)).collect();
    let summary = summary_table(vec![
        ("spearman_mean".into(), stats::mean(&rho)),
        ("spearman_std".into(), stats::std(&rho)),
        ("spearman_se".into(), stats::std_err(&rho)),
    ]);
    Ok(Outcome { raw, aggregate, summary })
}

const ORDER_TYPES: [&str; 2] = ["qcurl", "random"];

/// Sequential training of the unitary task family in greedy and random order.
pub fn game(cfg: &ExperimentConfig) -> Result<Outcome> {
    let circuit = build_hea(cfg.q, cfg.l_e)?;
    let train_cfg = TrainConfig {
        epochs: cfg.epochs_per_task,
        lr: cfg.lr,
        loss_mode: LossMode::Plain,
        test_every: cfg.test_every,
    };
    let results: Vec<[(Vec<usize>, Vec<TrainRecord>); 2]> = (0..cfg.trials)
        .into_par_iter()
        .map(|t| -> Result<_> {
            let mut rng = stream(cfg, t, STREAM_DATA);
            let (beta_seed, fixed_seed) = (rng.random(), rng.random());
            let layers: Vec<usize> = (1..=cfg.l_main).collect();
            let tasks = make_unitary_tasks(
                cfg.q, &layers, cfg.l_fixed, cfg.n, beta_seed, fixed_seed, cfg.input_mode, &mut rng,
            )?;
            let test = make_unitary_tasks(
                cfg.q, &[cfg.l_main], cfg.l_fixed, cfg.n_test, beta_seed, fixed_seed, cfg.input_mode, &mut rng,
            )?
            .remove(0);
            let greedy = greedy_order_from_weights(&weight_matrix(&tasks, cfg.lambda)?, cfg.l_main)?;
            let mut random: Vec<usize> = (1..cfg.l_main).collect();
            random.shuffle(&mut stream(cfg, t, STREAM_ORDER));
            random.push(cfg.l_main);
            let init = uniform_init(circuit.param_count(), &mut stream(cfg, t, STREAM_INIT));
            let run = |order: Vec<usize>| -> Result<(Vec<usize>, Vec<TrainRecord>)> {
                let recs = run_qcurl_game(&tasks, &order, &circuit, &init, &train_cfg, Some(&test))?;
                Ok((order, recs))
            };
            Ok([run(greedy)?, run(random)?])
        })
        .collect::<Result<_>>()?;

    let mut raw = Table::new(&["trial", "order_type", "epoch", "task_id", "train_loss", "test_loss"]);
    // (order, epoch) -> per-trial values
    let mut curves: BTreeMap<(usize, usize), (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    let mut finals = [Vec::new(), Vec::new()];
    let mut final_train = [Vec::new(), Vec::new()];
    for (t, pair) in results.iter().enumerate() {
        for (o, (order, recs)) in pair.iter().enumerate() {
            let mut epoch = 0;
            for (id, rec) in order.iter().zip(recs) {
                for e in &rec.epochs {
                    epoch += 1;
                    raw.push(vec![t.to_string(), ORDER_TYPES[o].into(), epoch.to_string(), id.to_string(), f(e.train_loss), f(e.test_loss)]);
                    let entry = curves.entry((o, epoch)).or_default();
                    entry.0.push(e.train_loss);
                    entry.1.push(e.test_loss);
                }
            }
            let last = recs.last().expect("non-empty order");
            finals[o].push(last.final_test.map_or(f64::NAN, |m| m.loss));
            final_train[o].push(last.final_train_loss);
        }
    }
    let mut aggregate = Table::new(&["order_type", "epoch", "train_loss_mean", "train_loss_std", "test_loss_mean", "test_loss_std"]);
    for ((o, epoch), (tr, te)) in &curves {
        aggregate.push(vec![ORDER_TYPES[*o].into(), epoch.to_string(), f(stats::mean(tr)), f(stats::std(tr)), f(stats::mean(te)), f(stats::std(te))]);
    }
    let diff: Vec<f64> = finals[1].iter().zip(&finals[0]).map(|(r, g)| r - g).collect();
    let summary = summary_table(vec![
        ("final_test_loss_mean_qcurl".into(), stats::mean(&finals[0])),
        ("final_test_loss_mean_random".into(), stats::mean(&finals[1])),
        ("final_test_loss_std_qcurl".into(), stats::std(&finals[0])),
        ("final_test_loss_std_random".into(), stats::std(&finals[1])),
        ("final_train_loss_mean_qcurl".into(), stats::mean(&final_train[0])),
        ("final_train_loss_mean_random".into(), stats::mean(&final_train[1])),
        ("test_loss_gap_mean".into(), stats::mean(&diff)),
        ("test_loss_gap_se".into(), stats::std_err(&diff)),
    ]);
    Ok(Outcome { raw, aggregate, summary })
}

fn loss_mode(mode: TrainMode, gamma: f64) -> Result<LossMode> {
    Ok(match mode {
        TrainMode::Plain => LossMode::Plain,
        TrainMode::Easy => LossMode::Qcurl(SuperLossConfig::easy(gamma)?),
        TrainMode::Hard => LossMode::Qcurl(SuperLossConfig::hard(gamma)?),
    })
}

fn labeled_set(data: &[LabeledState]) -> LabeledSet {
    LabeledSet {
        states: data.iter().map(|s| s.state.clone()).collect(),
        labels: data.iter().map(|s| s.label).collect(),
    }
}

fn qcnn_variant(cfg: &ExperimentConfig) -> QcnnVariant {
    match cfg.experiment {
        Experiment::Phase => QcnnVariant::Main,
        _ => QcnnVariant::Heatmap,
    }
}

struct ClassifierRun {
    record: TrainRecord,
    params: Vec<f64>,
}

/// Trains one classifier per mode from a shared initialisation on labels
/// corrupted with probability `p`.
fn classifier_trial(
    cfg: &ExperimentConfig,
    model: &Qcnn,
    train_data: &[LabeledState],
    test: Option<&LabeledSet>,
    trial: usize,
    p_index: usize,
    p: f64,
    test_every: usize,
) -> Result<Vec<ClassifierRun>> {
    let mut noise_rng = seeded(derive_seed(cfg.seed, &[trial as u64, STREAM_NOISE, p_index as u64]));
    let noisy = physics::corrupt_labels(train_data, p, &mut noise_rng)?;
    let init = normal_init(model.circuit.param_count(), &mut stream(cfg, trial, STREAM_INIT));
    let objective = ClassifierObjective {
        model: model.clone(),
        train: labeled_set(&noisy),
        test: test.cloned(),
        mu: cfg.mu,
        label_map: cfg.label_map,
    };
    cfg.modes
        .iter()
        .map(|&mode| {
            let tc = TrainConfig {
                epochs: cfg.epochs,
                lr: cfg.lr,
                loss_mode: loss_mode(mode, cfg.gamma)?,
                test_every,
            };
            let record = train(&objective, &init, &tc)?;
            let params = record.final_params.clone();
            Ok(ClassifierRun { record, params })
        })
        .collect()
}

fn jobs(cfg: &ExperimentConfig) -> Vec<(usize, usize)> {
    (0..cfg.noise_p.len())
        .flat_map(|pi| (0..cfg.trials).map(move |t| (pi, t)))
        .collect()
}

/// QCNN phase classification under label noise, with and without weighting.
pub fn phase(cfg: &ExperimentConfig) -> Result<Outcome> {
    let model = build_qcnn(cfg.q, qcnn_variant(cfg))?;
    let train_data = make_phase_dataset(PhaseKind::Train, cfg.q, cfg.boundary)?;
    let test = labeled_set(&make_phase_dataset(PhaseKind::Test, cfg.q, cfg.boundary)?);
    let jobs = jobs(cfg);
    let runs: Vec<Vec<ClassifierRun>> = jobs
        .par_iter()
        .map(|&(pi, t)| classifier_trial(cfg, &model, &train_data, Some(&test), t, pi, cfg.noise_p[pi], 0))
        .collect::<Result<_>>()?;

    let mut raw = Table::new(&["p", "mode", "trial", "test_loss", "test_accuracy", "train_loss"]);
    let mut groups: BTreeMap<(usize, TrainMode), (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for (&(pi, t), modes) in jobs.iter().zip(&runs) {
        for (&mode, run) in cfg.modes.iter().zip(modes) {
            let m = run.record.final_test.expect("test set present");
            let acc = m.accuracy.expect("classifier accuracy");
            raw.push(vec![f(cfg.noise_p[pi]), mode.to_string(), t.to_string(), f(m.loss), f(acc), f(run.record.final_train_loss)]);
            let g = groups.entry((pi, mode)).or_default();
            g.0.push(m.loss);
            g.1.push(acc);
        }
    }
    let mut aggregate = Table::new(&[
        "p", "mode", "test_loss_mean", "test_loss_std", "test_accuracy_mean", "test_accuracy_std",
        "test_loss_best", "test_accuracy_best",
    ]);
    for ((pi, mode), (loss, acc)) in &groups {
        aggregate.push(vec![
            f(cfg.noise_p[*pi]), mode.to_string(),
            f(stats::mean(loss)), f(stats::std(loss)), f(stats::mean(acc)), f(stats::std(acc)),
            f(stats::min(loss)), f(stats::max(acc)),
        ]);
    }
    Ok(Outcome { raw, aggregate, summary: summary_table(vec![]) })
}

/// Average classifier output over the `(h₁, h₂)` grid.
pub fn heatmap(cfg: &ExperimentConfig) -> Result<Outcome> {
    let model = build_qcnn(cfg.q, qcnn_variant(cfg))?;
    let train_data = make_phase_dataset(PhaseKind::Train, cfg.q, cfg.boundary)?;
    let grid = make_phase_dataset(PhaseKind::Heatmap, cfg.q, cfg.boundary)?;
    let grid_states: Vec<StateVector> = grid.iter().map(|s| s.state.clone()).collect();
    let objective_for_outputs = ClassifierObjective {
        model: model.clone(),
        train: LabeledSet::default(),
        test: None,
        mu: cfg.mu,
        label_map: cfg.label_map,
    };
    let jobs = jobs(cfg);
    let outputs: Vec<Vec<Vec<f64>>> = jobs
        .par_iter()
        .map(|&(pi, t)| -> Result<Vec<Vec<f64>>> {
            let runs = classifier_trial(cfg, &model, &train_data, None, t, pi, cfg.noise_p[pi], 0)?;
            runs.iter()
                .map(|r| Ok(objective_for_outputs.outputs(&r.params, &grid_states)?))
                .collect()
        })
        .collect::<Result<_>>()?;

    let mut raw = Table::new(&["p", "mode", "trial", "h1", "h2", "output"]);
    let mut sums: BTreeMap<(usize, TrainMode, usize), Vec<f64>> = BTreeMap::new();
    for (&(pi, t), per_mode) in jobs.iter().zip(&outputs) {
        for (&mode, out) in cfg.modes.iter().zip(per_mode) {
            for (k, (s, &q)) in grid.iter().zip(out).enumerate() {
                raw.push(vec![f(cfg.noise_p[pi]), mode.to_string(), t.to_string(), f(s.h1), f(s.h2), f(q)]);
                sums.entry((pi, mode, k)).or_default().push(q);
            }
        }
    }
    let mut aggregate = Table::new(&["p", "mode", "h1", "h2", "output_mean", "output_std", "string_order_label"]);
    for ((pi, mode, k), qs) in &sums {
        let s = &grid[*k];
        aggregate.push(vec![f(cfg.noise_p[*pi]), mode.to_string(), f(s.h1), f(s.h2), f(stats::mean(qs)), f(stats::std(qs)), s.label.to_string()]);
    }
    Ok(Outcome { raw, aggregate, summary: summary_table(vec![]) })
}

/// Test-loss curves for plain, easy and hard weighting.
pub fn easy_hard(cfg: &ExperimentConfig) -> Result<Outcome> {
    let model = build_qcnn(cfg.q, qcnn_variant(cfg))?;
    let train_data = make_phase_dataset(PhaseKind::Train, cfg.q, cfg.boundary)?;
    let test = labeled_set(&make_phase_dataset(PhaseKind::Test, cfg.q, cfg.boundary)?);
    let jobs = jobs(cfg);
    let runs: Vec<Vec<ClassifierRun>> = jobs
        .par_iter()
        .map(|&(pi, t)| classifier_trial(cfg, &model, &train_data, Some(&test), t, pi, cfg.noise_p[pi], cfg.test_every))
        .collect::<Result<_>>()?;

    let mut raw = Table::new(&["p", "mode", "trial", "epoch", "test_loss", "test_accuracy"]);
    let mut curves: BTreeMap<(usize, TrainMode, usize), (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for (&(pi, t), modes) in jobs.iter().zip(&runs) {
        for (&mode, run) in cfg.modes.iter().zip(modes) {
            for e in run.record.epochs.iter().filter(|e| !e.test_loss.is_nan()) {
                raw.push(vec![f(cfg.noise_p[pi]), mode.to_string(), t.to_string(), e.epoch.to_string(), f(e.test_loss), f(e.test_accuracy)]);
                let c = curves.entry((pi, mode, e.epoch)).or_default();
                c.0.push(e.test_loss);
                c.1.push(e.test_accuracy);
            }
        }
    }
    let mut aggregate = Table::new(&["p", "mode", "epoch", "test_loss_mean", "test_loss_std", "test_accuracy_mean", "test_accuracy_std"]);
    for ((pi, mode, epoch), (loss, acc)) in &curves {
        aggregate.push(vec![
            f(cfg.noise_p[*pi]), mode.to_string(), epoch.to_string(),
            f(stats::mean(loss)), f(stats::std(loss)), f(stats::mean(acc)), f(stats::std(acc)),
        ]);
    }
    Ok(Outcome { raw, aggregate, summary: summary_table(vec![]) })
}

/// Runs the configured experiment on a pool of `threads` workers (0: one per
/// core). Results do not depend on the thread count.
pub fn compute(cfg: &ExperimentConfig, threads: usize) -> Result<Outcome> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .context("building worker pool")?;
    pool.install(|| match cfg.experiment {
        Experiment::Weights => weights(cfg),
        Experiment::Game => game(cfg),
        Experiment::Phase => phase(cfg),
        Experiment::Heatmap => heatmap(cfg),
        Experiment::EasyHard => easy_hard(cfg),
    })
}

fn manifest(cfg: &ExperimentConfig, threads: usize) -> String {
    let mut out = format!("version = qcurl {VERSION}\nthreads = {threads}\n");
    if cfg.experiment == Experiment::Game {
        out.push_str("epoch_semantics = epochs_per_task applies to every task in the order\n");
    }
    out.push_str(&cfg.echo());
    out
}

/// Computes the experiment and writes `raw.csv`, `aggregate.csv`,
/// `summary.csv` and `manifest.txt` into the output directory. On failure no
/// partial outputs are left behind.
pub fn run_experiment(cfg: &ExperimentConfig, threads: usize) -> Result<Outcome> {
    let mut guard = OutputGuard::new(&cfg.output_dir)?;
    let outcome = compute(cfg, threads)?;
    outcome.raw.write(&guard.path("raw.csv"))?;
    outcome.aggregate.write(&guard.path("aggregate.csv"))?;
    if !outcome.summary.rows.is_empty() {
        outcome.summary.write(&guard.path("summary.csv"))?;
    }
    let manifest_path = guard.path("manifest.txt");
    fs::write(&manifest_path, manifest(cfg, threads))
        .with_context(|| format!("writing {}", manifest_path.display()))?;
    guard.commit();
    Ok(outcome)
}
