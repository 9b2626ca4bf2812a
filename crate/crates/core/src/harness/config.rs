//! Experiment configuration. The file form is plain text, one `key = value`
//! per line, `#` comments; command-line flags are applied afterwards through
//! the same [`ExperimentConfig::set`].

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::classifier::ClassifierConfig;
use crate::encoder::RhoMode;
use crate::error::{Error, Result};
use crate::expander::{DiscOutput, GanConfig};

pub const HIDDEN_GRID: [usize; 4] = [8, 16, 32, 64];
pub const LR_GRID: [f64; 5] = [0.1, 0.01, 0.001, 0.0001, 0.00001];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Task {
    Classify,
    Expand,
}

impl FromStr for Task {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "classify" => Ok(Task::Classify),
            "expand" => Ok(Task::Expand),
            other => Err(Error::Config(format!("unknown task `{other}`"))),
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Task::Classify => "classify",
            Task::Expand => "expand",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub task: Task,
    pub hidden: usize,
    pub lr: f64,
    pub layers: usize,
    pub negatives: usize,
    pub folds: usize,
    pub seed: u64,
    /// Candidate-subset cap at expansion time.
    pub cap: usize,
    /// Expansion: adversarial epochs. Classification: epoch ceiling.
    pub epochs: usize,
    pub patience: usize,
    /// 0 means full batch for classification.
    pub batch_size: usize,
    /// Share of each training fold held out for early stopping.
    pub val_fraction: f64,
    pub holdout_fraction: f64,
    pub rho_mode: RhoMode,
    pub train_cap: usize,
    pub shortlist: usize,
    pub disc_steps: usize,
    pub disc_output: DiscOutput,
}

impl ExperimentConfig {
    pub fn new(task: Task) -> Self {
        let (epochs, batch_size) = match task {
            Task::Classify => (500, 0),
            Task::Expand => (30, 32),
        };
        ExperimentConfig {
            task,
            hidden: 32,
            lr: 0.001,
            layers: 2,
            negatives: 5,
            folds: 5,
            seed: 0,
            cap: 100_000,
            epochs,
            patience: 20,
            batch_size,
            val_fraction: 0.1,
            holdout_fraction: 0.0,
            rho_mode: RhoMode::MultisetUnion,
            train_cap: 256,
            shortlist: 8,
            disc_steps: 1,
            disc_output: DiscOutput::Softplus,
        }
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn p<T: FromStr>(key: &str, value: &str) -> Result<T> {
            value
                .parse()
                .map_err(|_| Error::Config(format!("bad value `{value}` for `{key}`")))
        }
        match key {
            "task" => self.task = value.parse()?,
            "hidden" => self.hidden = p(key, value)?,
            "lr" => self.lr = p(key, value)?,
            "layers" => self.layers = p(key, value)?,
            "negatives" => self.negatives = p(key, value)?,
            "folds" => self.folds = p(key, value)?,
            "seed" => self.seed = p(key, value)?,
            "cap" => self.cap = p(key, value)?,
            "epochs" => self.epochs = p(key, value)?,
            "patience" => self.patience = p(key, value)?,
            "batch_size" => self.batch_size = p(key, value)?,
            "val_fraction" => self.val_fraction = p(key, value)?,
            "holdout_fraction" => self.holdout_fraction = p(key, value)?,
            "rho_mode" => {
                self.rho_mode = match value {
                    "multiset-union" => RhoMode::MultisetUnion,
                    "intersection" => RhoMode::Intersection,
                    _ => return Err(Error::Config(format!("bad value `{value}` for `rho_mode`"))),
                }
            }
            "train_cap" => self.train_cap = p(key, value)?,
            "shortlist" => self.shortlist = p(key, value)?,
            "disc_steps" => self.disc_steps = p(key, value)?,
            "disc_output" => self.disc_output = value.parse()?,
            other => return Err(Error::Config(format!("unknown key `{other}`"))),
        }
        Ok(())
    }

    /// Apply a key=value text on top of `self`.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (i, line) in text.lines().enumerate() {
            let body = line.split('#').next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            let (k, v) = body
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", i + 1)))?;
            self.set(k.trim(), v.trim())
                .map_err(|e| Error::Config(format!("line {}: {e}", i + 1)))?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        self.apply_text(&text)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.into()));
        if self.folds < 2 {
            return bad("folds must be >= 2");
        }
        if self.hidden == 0 || self.layers == 0 {
            return bad("hidden and layers must be >= 1");
        }
        if !(self.lr.is_finite() && self.lr >= 0.0) {
            return bad("lr must be finite and >= 0");
        }
        if !(0.0..1.0).contains(&self.val_fraction) || !(0.0..1.0).contains(&self.holdout_fraction)
        {
            return bad("val_fraction and holdout_fraction must lie in [0, 1)");
        }
        if self.cap == 0 || self.train_cap == 0 || self.shortlist == 0 || self.disc_steps == 0 {
            return bad("cap, train_cap, shortlist and disc_steps must be >= 1");
        }
        if self.task == Task::Expand && self.batch_size == 0 {
            return bad("expansion needs batch_size >= 1");
        }
        Ok(())
    }

    /// Canonical `key = value` text; the config hash is taken over it.
    pub fn to_text(&self) -> String {
        let rho = match self.rho_mode {
            RhoMode::MultisetUnion => "multiset-union",
            RhoMode::Intersection => "intersection",
        };
        let disc = match self.disc_output {
            DiscOutput::Softplus => "softplus",
            DiscOutput::Abs => "abs",
        };
        format!(
            "task = {}\nhidden = {}\nlr = {:?}\nlayers = {}\nnegatives = {}\nfolds = {}\nseed = {}\ncap = {}\n\
             epochs = {}\npatience = {}\nbatch_size = {}\nval_fraction = {:?}\nholdout_fraction = {:?}\n\
             rho_mode = {rho}\ntrain_cap = {}\nshortlist = {}\ndisc_steps = {}\ndisc_output = {disc}\n",
            self.task,
            self.hidden,
            self.lr,
            self.layers,
            self.negatives,
            self.folds,
            self.seed,
            self.cap,
            self.epochs,
            self.patience,
            self.batch_size,
            self.val_fraction,
            self.holdout_fraction,
            self.train_cap,
            self.shortlist,
            self.disc_steps,
        )
    }

    /// First 16 hex digits of the SHA-256 of [`Self::to_text`].
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.to_text().as_bytes());
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn classifier(&self, seed: u64) -> ClassifierConfig {
        ClassifierConfig {
            hidden: self.hidden,
            layers: self.layers,
            lr: self.lr,
            negatives: self.negatives,
            max_epochs: self.epochs,
            patience: self.patience,
            batch_size: self.batch_size,
            holdout_fraction: self.holdout_fraction,
            rho_mode: self.rho_mode,
            seed,
            ..ClassifierConfig::default()
        }
    }

    pub fn gan(&self, seed: u64) -> GanConfig {
        GanConfig {
            hidden: self.hidden,
            layers: self.layers,
            lr: self.lr,
            epochs: self.epochs,
            batch_size: self.batch_size,
            cap: self.cap,
            train_cap: self.train_cap,
            shortlist: self.shortlist,
            rho_mode: self.rho_mode,
            disc_output: self.disc_output,
            disc_steps: self.disc_steps,
            seed,
        }
    }
}
