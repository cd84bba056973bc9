//! Training configuration and its `key = value` text form.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::image::BayerLayout;

use super::adam::AdamConfig;
use super::loss::{Loss, DEFAULT_P, DEFAULT_PNORM_EPS};

/// Which penalty a target trains with when the config does not override it.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LossChoice {
    /// MSE for the green network, p-norm for the difference networks.
    Auto,
    Mse,
    PNorm,
    PNormRoot,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub initial_lr: f64,
    pub lr_halving_period: usize,
    pub lr_floor: f64,
    pub epochs: usize,
    pub adam: AdamConfig,
    pub p: f64,
    pub pnorm_eps: f64,
    pub loss: LossChoice,
    pub bn_momentum: f64,
    pub seed: u64,
    pub patch_size: usize,
    /// Percentage of (shuffled) images whose patches go to training.
    pub train_percent: usize,
    /// Patches dropped between the training and validation parts.
    pub discard: usize,
    pub layout: BayerLayout,
    /// Stop after this many optimizer steps, regardless of epochs.
    pub max_steps: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 128,
            initial_lr: 0.005,
            lr_halving_period: 5,
            lr_floor: 0.005 / 64.0,
            epochs: 30,
            adam: AdamConfig::default(),
            p: DEFAULT_P,
            pnorm_eps: DEFAULT_PNORM_EPS,
            loss: LossChoice::Auto,
            bn_momentum: 0.1,
            seed: 0,
            patch_size: 50,
            train_percent: 95,
            discard: 1792,
            layout: BayerLayout::Rggb,
            max_steps: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Invalid(m.to_string()));
        if self.batch_size == 0 {
            return bad("batch_size must be positive");
        }
        if !(self.initial_lr > 0.0) || !(self.lr_floor > 0.0) || self.lr_floor > self.initial_lr {
            return bad("need 0 < lr_floor <= initial_lr");
        }
        if self.lr_halving_period == 0 {
            return bad("lr_halving_period must be positive");
        }
        if !(self.p > 0.0 && self.p <= 1.0) {
            return bad("p must lie in (0, 1]");
        }
        if self.patch_size < 5 {
            return bad("patch_size must be at least 5");
        }
        if self.train_percent == 0 || self.train_percent > 100 {
            return bad("train_percent must lie in 1..=100");
        }
        Ok(())
    }

    pub fn loss_for(&self, target: crate::nn::Target) -> Loss {
        let (p, eps) = (self.p, self.pnorm_eps);
        match self.loss {
            LossChoice::Mse => Loss::Mse,
            LossChoice::PNorm => Loss::PNorm { p, eps },
            LossChoice::PNormRoot => Loss::PNormRoot { p, eps },
            LossChoice::Auto => match target {
                crate::nn::Target::G => Loss::Mse,
                _ => Loss::PNorm { p, eps },
            },
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = TrainConfig::default();
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Invalid(format!("line {}: expected key = value", n + 1)))?;
            cfg.set(k.trim(), v.trim()).map_err(|e| Error::Invalid(format!("line {}: {e}", n + 1)))?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn num<T: std::str::FromStr>(k: &str, v: &str) -> Result<T> {
            v.parse().map_err(|_| Error::Invalid(format!("bad value `{v}` for `{k}`")))
        }
        match key {
            "batch_size" => self.batch_size = num(key, value)?,
            "initial_lr" => self.initial_lr = num(key, value)?,
            "lr_halving_period" => self.lr_halving_period = num(key, value)?,
            "lr_floor" => self.lr_floor = num(key, value)?,
            "epochs" => self.epochs = num(key, value)?,
            "beta1" => self.adam.beta1 = num(key, value)?,
            "beta2" => self.adam.beta2 = num(key, value)?,
            "adam_eps" => self.adam.eps = num(key, value)?,
            "p" => self.p = num(key, value)?,
            "pnorm_eps" => self.pnorm_eps = num(key, value)?,
            "loss" => {
                self.loss = match value {
                    "auto" => LossChoice::Auto,
                    "mse" => LossChoice::Mse,
                    "pnorm" => LossChoice::PNorm,
                    "pnorm_root" => LossChoice::PNormRoot,
                    other => return Err(Error::Invalid(format!("unknown loss `{other}`"))),
                }
            }
            "bn_momentum" => self.bn_momentum = num(key, value)?,
            "seed" => self.seed = num(key, value)?,
            "patch_size" => self.patch_size = num(key, value)?,
            "train_percent" => self.train_percent = num(key, value)?,
            "discard" => self.discard = num(key, value)?,
            "layout" => self.layout = value.parse()?,
            "max_steps" => {
                self.max_steps = if value == "none" { None } else { Some(num(key, value)?) }
            }
            other => return Err(Error::Invalid(format!("unknown key `{other}`"))),
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let loss = match self.loss {
            LossChoice::Auto => "auto",
            LossChoice::Mse => "mse",
            LossChoice::PNorm => "pnorm",
            LossChoice::PNormRoot => "pnorm_root",
        };
        let mut s = String::new();
        let mut kv = |k: &str, v: String| writeln!(s, "{k} = {v}").unwrap();
        kv("batch_size", self.batch_size.to_string());
        kv("initial_lr", self.initial_lr.to_string());
        kv("lr_halving_period", self.lr_halving_period.to_string());
        kv("lr_floor", self.lr_floor.to_string());
        kv("epochs", self.epochs.to_string());
        kv("beta1", self.adam.beta1.to_string());
        kv("beta2", self.adam.beta2.to_string());
        kv("adam_eps", self.adam.eps.to_string());
        kv("p", self.p.to_string());
        kv("pnorm_eps", self.pnorm_eps.to_string());
        kv("loss", loss.to_string());
        kv("bn_momentum", self.bn_momentum.to_string());
        kv("seed", self.seed.to_string());
        kv("patch_size", self.patch_size.to_string());
        kv("train_percent", self.train_percent.to_string());
        kv("discard", self.discard.to_string());
        kv("layout", self.layout.to_string());
        kv("max_steps", self.max_steps.map_or("none".to_string(), |v| v.to_string()));
        s
    }
}

/// Learning rate for a 1-based epoch: halved every `lr_halving_period`
/// epochs, never below `lr_floor`.
pub fn lr_schedule(epoch: usize, cfg: &TrainConfig) -> f64 {
    let halvings = epoch.saturating_sub(1) / cfg.lr_halving_period;
    let lr = cfg.initial_lr * 0.5f64.powi(halvings.min(1 << 20) as i32);
    lr.max(cfg.lr_floor)
}
