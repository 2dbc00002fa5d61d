//! Flat `key = value` experiment configuration.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{anyhow, bail, Context, Result};
use qcurl_core::physics::Boundary;
use qcurl_core::sim::HaarMode;
use qcurl_core::training::LabelMap;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Experiment {
    Weights,
    Game,
    Phase,
    Heatmap,
    EasyHard,
}

impl FromStr for Experiment {
    type Err = anyhow::Error;
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "weights" => Experiment::Weights,
            "game" => Experiment::Game,
            "phase" => Experiment::Phase,
            "heatmap" => Experiment::Heatmap,
            "easy_hard" => Experiment::EasyHard,
            other => bail!("unknown experiment {other:?} (expected weights, game, phase, heatmap or easy_hard)"),
        })
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Experiment::Weights => "weights",
            Experiment::Game => "game",
            Experiment::Phase => "phase",
            Experiment::Heatmap => "heatmap",
            Experiment::EasyHard => "easy_hard",
        })
    }
}

/// How a classifier is trained.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum TrainMode {
    Plain,
    Easy,
    Hard,
}

impl FromStr for TrainMode {
    type Err = anyhow::Error;
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "plain" => TrainMode::Plain,
            "easy" => TrainMode::Easy,
            "hard" => TrainMode::Hard,
            other => bail!("unknown training mode {other:?} (expected plain, easy or hard)"),
        })
    }
}

impl fmt::Display for TrainMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TrainMode::Plain => "plain",
            TrainMode::Easy => "easy",
            TrainMode::Hard => "hard",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    pub q: usize,
    /// Training samples per task.
    pub n: usize,
    /// Test samples for the main unitary task.
    pub n_test: usize,
    pub trials: usize,
    pub epochs: usize,
    pub epochs_per_task: usize,
    pub lr: f64,
    pub lambda: f64,
    pub gamma: f64,
    pub noise_p: Vec<f64>,
    pub l_e: usize,
    pub l_main: usize,
    pub l_fixed: usize,
    pub seed: u64,
    pub output_dir: PathBuf,
    pub modes: Vec<TrainMode>,
    pub input_mode: HaarMode,
    pub mu: f64,
    pub label_map: LabelMap,
    pub boundary: Boundary,
    /// Test evaluation period in epochs; 0 evaluates only after training.
    pub test_every: usize,
}

pub const KEYS: &[&str] = &[
    "q", "n", "n_test", "trials", "epochs", "epochs_per_task", "lr", "lambda", "gamma", "noise_p",
    "l_e", "l_main", "l_fixed", "seed", "output_dir", "modes", "input_mode", "mu", "label_map",
    "boundary", "test_every",
];

fn label_map_name(m: LabelMap) -> &'static str {
    match m {
        LabelMap::Identity => "identity",
        LabelMap::HalfShift => "half_shift",
    }
}

fn join<T: fmt::Display>(xs: &[T]) -> String {
    xs.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

impl ExperimentConfig {
    pub fn defaults(experiment: Experiment) -> Self {
        let classifier = matches!(experiment, Experiment::Phase | Experiment::Heatmap | Experiment::EasyHard);
        let periodic = matches!(experiment, Experiment::Heatmap | Experiment::EasyHard);
        Self {
            experiment,
            q: if classifier { 8 } else { 4 },
            n: 20,
            n_test: 20,
            trials: 20,
            epochs: 500,
            epochs_per_task: 20,
            lr: 0.001,
            lambda: 1e-3,
            gamma: 1.0,
            noise_p: match experiment {
                Experiment::Phase => vec![0.0, 0.1, 0.2, 0.3, 0.4, 0.5],
                Experiment::EasyHard => vec![0.0, 0.3],
                _ => vec![0.3],
            },
            l_e: 20,
            l_main: 20,
            l_fixed: 20,
            seed: 42,
            output_dir: PathBuf::from(format!("out/{experiment}")),
            modes: match experiment {
                Experiment::EasyHard => vec![TrainMode::Plain, TrainMode::Easy, TrainMode::Hard],
                _ => vec![TrainMode::Plain, TrainMode::Easy],
            },
            input_mode: HaarMode::Full,
            mu: if periodic { 5.0 } else { 1.0 },
            label_map: if periodic { LabelMap::HalfShift } else { LabelMap::Identity },
            boundary: if experiment == Experiment::Heatmap { Boundary::Periodic } else { Boundary::Open },
            test_every: match experiment {
                Experiment::EasyHard => 10,
                Experiment::Game => 1,
                _ => 0,
            },
        }
    }

    fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn num<T: FromStr>(key: &str, v: &str) -> Result<T>
        where
            T::Err: fmt::Display,
        {
            v.parse().map_err(|e| anyhow!("invalid value {v:?} for {key}: {e}"))
        }
        match key {
            "q" => self.q = num(key, value)?,
            "n" => self.n = num(key, value)?,
            "n_test" => self.n_test = num(key, value)?,
            "trials" => self.trials = num(key, value)?,
            "epochs" => self.epochs = num(key, value)?,
            "epochs_per_task" => self.epochs_per_task = num(key, value)?,
            "lr" => self.lr = num(key, value)?,
            "lambda" => self.lambda = num(key, value)?,
            "gamma" => self.gamma = num(key, value)?,
            "noise_p" => {
                self.noise_p = value
                    .split(',')
                    .map(|s| num(key, s.trim()))
                    .collect::<Result<_>>()?
            }
            "l_e" => self.l_e = num(key, value)?,
            "l_main" => self.l_main = num(key, value)?,
            "l_fixed" => self.l_fixed = num(key, value)?,
            "seed" => self.seed = num(key, value)?,
            "output_dir" => self.output_dir = PathBuf::from(value),
            "modes" => {
                self.modes = value
                    .split(',')
                    .map(|s| s.trim().parse())
                    .collect::<Result<_>>()?
            }
            "input_mode" => self.input_mode = value.parse().map_err(|e| anyhow!("{e}"))?,
            "mu" => self.mu = num(key, value)?,
            "label_map" => {
                self.label_map = match value {
                    "identity" => LabelMap::Identity,
                    "half_shift" => LabelMap::HalfShift,
                    other => bail!("invalid label_map {other:?} (expected identity or half_shift)"),
                }
            }
            "boundary" => self.boundary = value.parse().map_err(|e| anyhow!("{e}"))?,
            "test_every" => self.test_every = num(key, value)?,
            other => bail!("unknown configuration key {other:?}"),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("q", self.q),
            ("n", self.n),
            ("n_test", self.n_test),
            ("trials", self.trials),
            ("epochs", self.epochs),
            ("epochs_per_task", self.epochs_per_task),
            ("l_main", self.l_main),
        ];
        for (k, v) in counts {
            if v < 1 {
                bail!("{k} must be at least 1");
            }
        }
        if self.noise_p.is_empty() {
            bail!("noise_p needs at least one value");
        }
        for &p in &self.noise_p {
            if !(0.0..=1.0).contains(&p) {
                bail!("noise_p must lie in [0, 1], got {p}");
            }
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            bail!("lr must be positive, got {}", self.lr);
        }
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            bail!("lambda must be positive, got {}", self.lambda);
        }
        if self.gamma == 0.0 || !self.gamma.is_finite() {
            bail!("gamma must be finite and nonzero, got {}", self.gamma);
        }
        if !self.mu.is_finite() {
            bail!("mu must be finite");
        }
        if self.modes.is_empty() {
            bail!("modes needs at least one entry");
        }
        match self.experiment {
            Experiment::Weights | Experiment::Game => {
                if self.q > 6 {
                    bail!("q must be at most 6 for unitary tasks, got {}", self.q);
                }
                if self.l_main < 2 {
                    bail!("l_main must be at least 2 so that auxiliary tasks exist");
                }
            }
            Experiment::Phase => {
                if !matches!(self.q, 4 | 8) {
                    bail!("q must be 4 or 8 for the phase QCNN, got {}", self.q);
                }
            }
            Experiment::Heatmap | Experiment::EasyHard => {
                if !(4..=10).contains(&self.q) {
                    bail!("q must lie in [4, 10], got {}", self.q);
                }
            }
        }
        Ok(())
    }

    /// `key = value` lines for every setting, in [`KEYS`] order.
    pub fn echo(&self) -> String {
        let mut m: BTreeMap<&str, String> = BTreeMap::new();
        m.insert("q", self.q.to_string());
        m.insert("n", self.n.to_string());
        m.insert("n_test", self.n_test.to_string());
        m.insert("trials", self.trials.to_string());
        m.insert("epochs", self.epochs.to_string());
        m.insert("epochs_per_task", self.epochs_per_task.to_string());
        m.insert("lr", self.lr.to_string());
        m.insert("lambda", self.lambda.to_string());
        m.insert("gamma", self.gamma.to_string());
        m.insert("noise_p", join(&self.noise_p));
        m.insert("l_e", self.l_e.to_string());
        m.insert("l_main", self.l_main.to_string());
        m.insert("l_fixed", self.l_fixed.to_string());
        m.insert("seed", self.seed.to_string());
        m.insert("output_dir", self.output_dir.display().to_string());
        m.insert("modes", join(&self.modes));
        m.insert("input_mode", self.input_mode.to_string());
        m.insert("mu", self.mu.to_string());
        m.insert("label_map", label_map_name(self.label_map).to_string());
        m.insert("boundary", self.boundary.to_string());
        m.insert("test_every", self.test_every.to_string());
        let mut out = format!("experiment = {}\n", self.experiment);
        for k in KEYS {
            out.push_str(&format!("{k} = {}\n", m[k]));
        }
        out
    }
}

/// Parses `key = value` lines. Blank lines and `#` comments are skipped.
pub fn parse_pairs(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| anyhow!("line {}: expected key = value, got {raw:?}", i + 1))?;
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

/// Builds a validated configuration: experiment defaults, then the file, then
/// the flag overrides. Returns warnings alongside the config.
pub fn parse_config(
    experiment: Experiment,
    file: Option<&Path>,
    flags: &[(String, String)],
) -> Result<(ExperimentConfig, Vec<String>)> {
    let mut cfg = ExperimentConfig::defaults(experiment);
    let mut warnings = Vec::new();
    if let Some(path) = file {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config file {}", path.display()))?;
        for (k, v) in parse_pairs(&text)? {
            if k == "experiment" {
                let e: Experiment = v.parse()?;
                if e != experiment {
                    bail!("config file is for experiment {e}, but {experiment} was requested");
                }
                continue;
            }
            cfg.set(&k, &v).with_context(|| format!("in {}", path.display()))?;
        }
    }
    for (k, v) in flags {
        cfg.set(k, v)?;
    }
    if file.is_none() && flags.is_empty() {
        warnings.push(format!("no configuration given; using built-in defaults for {experiment}"));
    }
    cfg.validate()?;
    Ok((cfg, warnings))
}
