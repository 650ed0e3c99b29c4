//! Run configuration: built-in defaults, overlaid by a flat `key = value`
//! config file, overlaid by command-line flags. The resolved config is
//! echoed verbatim into every output directory.

use std::fs;
use std::path::Path;

use robust_embed_core::attacks::AttackKind;
use robust_embed_core::encoder::EncoderConfig;
use robust_embed_core::error::{Error, Result};
use robust_embed_core::perturbation::{HyperParams, NormKind};

#[derive(Clone, Debug)]
pub struct RunConfig {
    pub hyper: HyperParams,
    pub dim: usize,
    pub layers: usize,
    pub heads: usize,
    pub max_len: usize,
    pub dropout_p: f64,
    pub mask_rate: f64,
    pub seed: u64,
    pub workers: usize,
    pub budget: u64,
    pub delta_threshold: f64,
    pub max_fraction_modified: f64,
    pub attack: AttackKind,
    pub n_attacks: usize,
    pub reset_table_each_epoch: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            hyper: HyperParams::default(),
            dim: 64,
            layers: 2,
            heads: 2,
            max_len: 32,
            dropout_p: 0.1,
            mask_rate: 0.15,
            seed: 42,
            workers: 1,
            budget: 400,
            delta_threshold: 1.0,
            max_fraction_modified: 0.4,
            attack: AttackKind::SynonymSwap,
            n_attacks: 200,
            reset_table_each_epoch: false,
        }
    }
}

/// Keys in canonical order; `dump-config` and `config.resolved` use it.
const KEY_ORDER: [&str; 29] = [
    "epsilon",
    "alpha",
    "beta",
    "gamma",
    "rho",
    "lambda1",
    "lambda2",
    "tau",
    "k_steps",
    "t_steps",
    "norm",
    "sigma",
    "learning_rate",
    "epochs",
    "batch_size",
    "dim",
    "layers",
    "heads",
    "max_len",
    "dropout_p",
    "mask_rate",
    "seed",
    "workers",
    "budget",
    "delta_threshold",
    "max_fraction_modified",
    "attack",
    "n_attacks",
    "reset_table_each_epoch",
];

/// Shortest unambiguous float rendering: scientific for tiny magnitudes,
/// plain shortest-round-trip otherwise.
pub fn render_float(v: f64) -> String {
    if v != 0.0 && v.abs() < 1e-4 {
        format!("{v:e}")
    } else {
        format!("{v}")
    }
}

impl RunConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let f = |v: &str| -> Result<f64> {
            v.parse::<f64>()
                .map_err(|_| Error::Config(format!("key '{key}': '{v}' is not a number")))
        };
        let u = |v: &str| -> Result<usize> {
            v.parse::<usize>()
                .map_err(|_| Error::Config(format!("key '{key}': '{v}' is not an integer")))
        };
        match key {
            "epsilon" => self.hyper.epsilon = f(value)?,
            "alpha" => self.hyper.alpha = f(value)?,
            "beta" => self.hyper.beta = f(value)?,
            "gamma" => self.hyper.gamma = f(value)?,
            "rho" => self.hyper.rho = f(value)?,
            "lambda1" => self.hyper.lambda1 = f(value)?,
            "lambda2" => self.hyper.lambda2 = f(value)?,
            "tau" => self.hyper.tau = f(value)?,
            "k_steps" => self.hyper.k_steps = u(value)?,
            "t_steps" => self.hyper.t_steps = u(value)?,
            "norm" => self.hyper.norm = NormKind::parse(value)?,
            "sigma" => self.hyper.sigma = f(value)?,
            "learning_rate" => self.hyper.learning_rate = f(value)?,
            "epochs" => self.hyper.epochs = u(value)?,
            "batch_size" => self.hyper.batch_size = u(value)?,
            "dim" => self.dim = u(value)?,
            "layers" => self.layers = u(value)?,
            "heads" => self.heads = u(value)?,
            "max_len" => self.max_len = u(value)?,
            "dropout_p" => self.dropout_p = f(value)?,
            "mask_rate" => self.mask_rate = f(value)?,
            "seed" => {
                self.seed = value
                    .parse::<u64>()
                    .map_err(|_| Error::Config(format!("key 'seed': '{value}' is not an integer")))?
            }
            "workers" => self.workers = u(value)?,
            "budget" => {
                self.budget = value
                    .parse::<u64>()
                    .map_err(|_| Error::Config(format!("key 'budget': bad value '{value}'")))?
            }
            "delta_threshold" => self.delta_threshold = f(value)?,
            "max_fraction_modified" => self.max_fraction_modified = f(value)?,
            "attack" => self.attack = AttackKind::parse(value)?,
            "n_attacks" => self.n_attacks = u(value)?,
            "reset_table_each_epoch" => {
                self.reset_table_each_epoch = match value {
                    "true" | "1" | "on" => true,
                    "false" | "0" | "off" => false,
                    other => {
                        return Err(Error::Config(format!(
                            "key 'reset_table_each_epoch': bad boolean '{other}'"
                        )))
                    }
                }
            }
            other => return Err(Error::Config(format!("unknown config key '{other}'"))),
        }
        Ok(())
    }

    pub fn get(&self, key: &str) -> String {
        match key {
            "epsilon" => render_float(self.hyper.epsilon),
            "alpha" => render_float(self.hyper.alpha),
            "beta" => render_float(self.hyper.beta),
            "gamma" => render_float(self.hyper.gamma),
            "rho" => render_float(self.hyper.rho),
            "lambda1" => render_float(self.hyper.lambda1),
            "lambda2" => render_float(self.hyper.lambda2),
            "tau" => render_float(self.hyper.tau),
            "k_steps" => self.hyper.k_steps.to_string(),
            "t_steps" => self.hyper.t_steps.to_string(),
            "norm" => self.hyper.norm.label().to_string(),
            "sigma" => render_float(self.hyper.sigma),
            "learning_rate" => render_float(self.hyper.learning_rate),
            "epochs" => self.hyper.epochs.to_string(),
            "batch_size" => self.hyper.batch_size.to_string(),
            "dim" => self.dim.to_string(),
            "layers" => self.layers.to_string(),
            "heads" => self.heads.to_string(),
            "max_len" => self.max_len.to_string(),
            "dropout_p" => render_float(self.dropout_p),
            "mask_rate" => render_float(self.mask_rate),
            "seed" => self.seed.to_string(),
            "workers" => self.workers.to_string(),
            "budget" => self.budget.to_string(),
            "delta_threshold" => render_float(self.delta_threshold),
            "max_fraction_modified" => render_float(self.max_fraction_modified),
            "attack" => match self.attack {
                AttackKind::SynonymSwap => "synonym".to_string(),
                AttackKind::CharBugger => "charbug".to_string(),
            },
            "n_attacks" => self.n_attacks.to_string(),
            "reset_table_each_epoch" => self.reset_table_each_epoch.to_string(),
            other => panic!("unknown key {other}"),
        }
    }

    /// Canonical `key = value` rendering of every resolved setting.
    pub fn render(&self) -> String {
        let mut s = String::new();
        for key in KEY_ORDER {
            s.push_str(&format!("{key} = {}\n", self.get(key)));
        }
        s
    }

    /// Defaults, overlaid by the optional config file, overlaid by flag
    /// overrides (in the order given).
    pub fn resolve(file: Option<&Path>, overrides: &[(String, String)]) -> Result<Self> {
        let mut cfg = Self::default();
        if let Some(path) = file {
            let text = fs::read_to_string(path)
                .map_err(|e| Error::Input(format!("cannot read config {}: {e}", path.display())))?;
            for (k, v) in parse_flat(&text)? {
                cfg.set(&k, &v)?;
            }
        }
        for (k, v) in overrides {
            cfg.set(k, v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.hyper.validate()?;
        self.encoder_config(usize::MAX).validate()?;
        if !(0.0 < self.mask_rate && self.mask_rate < 1.0) {
            return Err(Error::Config(format!("mask_rate {} outside (0,1)", self.mask_rate)));
        }
        if !(0.0..=1.0).contains(&self.max_fraction_modified) {
            return Err(Error::Config(format!(
                "max_fraction_modified {} outside [0,1]",
                self.max_fraction_modified
            )));
        }
        if self.budget == 0 {
            return Err(Error::Config("budget must be > 0".into()));
        }
        if self.workers == 0 {
            return Err(Error::Config("workers must be >= 1".into()));
        }
        if self.delta_threshold < 0.0 || !self.delta_threshold.is_finite() {
            return Err(Error::Config("delta_threshold must be finite and >= 0".into()));
        }
        Ok(())
    }

    pub fn encoder_config(&self, vocab_size: usize) -> EncoderConfig {
        EncoderConfig {
            vocab_size,
            dim: self.dim,
            layers: self.layers,
            heads: self.heads,
            max_len: self.max_len,
            dropout_p: self.dropout_p,
        }
    }
}

/// Flat `key = value` lines; `#` starts a comment.
pub fn parse_flat(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| {
            Error::Config(format!("config line {}: expected 'key = value'", i + 1))
        })?;
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}
