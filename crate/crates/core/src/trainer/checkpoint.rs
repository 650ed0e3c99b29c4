//! Checkpoint directory format.
//!
//! A checkpoint is a directory holding a `manifest` (one line per tensor:
//! name, shape, dtype), one raw little-endian f32 binary file per tensor, a
//! `vocab.txt` word list and a `meta` key=value file with configuration and
//! counters. Loads are atomic: nothing is constructed until every tensor
//! listed in the manifest has been read and validated.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use crate::encoder::{Encoder, EncoderConfig, SentenceModel, Vocab};
use crate::error::{Error, Result};
use crate::objectives::Discriminator;
use crate::perturbation::{HyperParams, NormKind, VocabPerturbTable};
use crate::tensor::Tensor;
use crate::trainer::{AdamState, TrainState};

const MANIFEST: &str = "manifest";
const META: &str = "meta";
const VOCAB: &str = "vocab.txt";
const TABLE_NAME: &str = "vocab_pert";

pub fn save_checkpoint(state: &TrainState, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;

    let mut tensors: Vec<(String, Tensor)> = Vec::new();
    for (name, t) in state.model.encoder.weights.named() {
        tensors.push((name, t.clone()));
    }
    for (name, t) in state.disc.named() {
        tensors.push((name, t.clone()));
    }
    tensors.push((TABLE_NAME.to_string(), state.table.tensor().clone()));
    for (i, name) in state.adam.names.iter().enumerate() {
        tensors.push((format!("adam.m.{name}"), state.adam.m[i].clone()));
        tensors.push((format!("adam.v.{name}"), state.adam.v[i].clone()));
    }

    let mut manifest = String::new();
    for (name, t) in &tensors {
        let dims: Vec<String> = t.shape().iter().map(|d| d.to_string()).collect();
        manifest.push_str(&format!("{name} {} f32\n", dims.join("x")));
        let mut bytes = Vec::with_capacity(t.numel() * 4);
        for &v in t.data() {
            bytes.extend_from_slice(&(v as f32).to_le_bytes());
        }
        fs::write(dir.join(format!("{name}.bin")), bytes)?;
    }
    fs::write(dir.join(MANIFEST), manifest)?;

    let mut vocab_txt = String::new();
    for (word, count) in state.model.vocab.words().iter().zip(state.model.vocab.counts()) {
        vocab_txt.push_str(&format!("{word}\t{count}\n"));
    }
    fs::write(dir.join(VOCAB), vocab_txt)?;

    let cfg = &state.model.encoder.config;
    let h = &state.hyper;
    let meta = format!(
        "format_version = 1\n\
         vocab_size = {}\ndim = {}\nlayers = {}\nheads = {}\nmax_len = {}\ndropout_p = {}\n\
         epoch = {}\nstep = {}\nadam_t = {}\nmaster_seed = {}\n\
         epsilon = {}\nalpha = {}\nbeta = {}\ngamma = {}\nrho = {}\n\
         lambda1 = {}\nlambda2 = {}\ntau = {}\nk_steps = {}\nt_steps = {}\n\
         norm = {}\nsigma = {}\nlearning_rate = {}\nepochs = {}\nbatch_size = {}\n",
        cfg.vocab_size,
        cfg.dim,
        cfg.layers,
        cfg.heads,
        cfg.max_len,
        cfg.dropout_p,
        state.epoch,
        state.step,
        state.adam.t,
        state.master_seed,
        h.epsilon,
        h.alpha,
        h.beta,
        h.gamma,
        h.rho,
        h.lambda1,
        h.lambda2,
        h.tau,
        h.k_steps,
        h.t_steps,
        h.norm.label(),
        h.sigma,
        h.learning_rate,
        h.epochs,
        h.batch_size
    );
    fs::write(dir.join(META), meta)?;
    Ok(())
}

pub fn load_checkpoint(dir: &Path) -> Result<TrainState> {
    let meta = parse_kv(&read(dir, META)?)?;
    let config = EncoderConfig {
        vocab_size: get_usize(&meta, "vocab_size")?,
        dim: get_usize(&meta, "dim")?,
        layers: get_usize(&meta, "layers")?,
        heads: get_usize(&meta, "heads")?,
        max_len: get_usize(&meta, "max_len")?,
        dropout_p: get_f64(&meta, "dropout_p")?,
    };
    let hyper = HyperParams {
        epsilon: get_f64(&meta, "epsilon")?,
        alpha: get_f64(&meta, "alpha")?,
        beta: get_f64(&meta, "beta")?,
        gamma: get_f64(&meta, "gamma")?,
        rho: get_f64(&meta, "rho")?,
        lambda1: get_f64(&meta, "lambda1")?,
        lambda2: get_f64(&meta, "lambda2")?,
        tau: get_f64(&meta, "tau")?,
        k_steps: get_usize(&meta, "k_steps")?,
        t_steps: get_usize(&meta, "t_steps")?,
        norm: NormKind::parse(get(&meta, "norm")?)?,
        sigma: get_f64(&meta, "sigma")?,
        learning_rate: get_f64(&meta, "learning_rate")?,
        epochs: get_usize(&meta, "epochs")?,
        batch_size: get_usize(&meta, "batch_size")?,
    };

    let mut words = Vec::new();
    let mut counts = Vec::new();
    for line in read(dir, VOCAB)?.lines() {
        let mut parts = line.splitn(2, '\t');
        let word = parts
            .next()
            .ok_or_else(|| Error::Checkpoint("malformed vocab line".into()))?
            .to_string();
        let count: u64 = parts
            .next()
            .ok_or_else(|| Error::Checkpoint(format!("vocab line '{line}' lacks a count")))?
            .parse()
            .map_err(|_| Error::Checkpoint(format!("bad vocab count in '{line}'")))?;
        words.push(word);
        counts.push(count);
    }
    let vocab = Vocab::from_words(words, counts)?;
    if vocab.size() != config.vocab_size {
        return Err(Error::Checkpoint(format!(
            "vocab.txt has {} entries but meta says {}",
            vocab.size(),
            config.vocab_size
        )));
    }

    // Stage every tensor named by the manifest before touching any state.
    let mut staged: BTreeMap<String, Tensor> = BTreeMap::new();
    for line in read(dir, MANIFEST)?.lines() {
        if line.trim().is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split_whitespace().collect();
        if parts.len() != 3 {
            return Err(Error::Checkpoint(format!("malformed manifest line '{line}'")));
        }
        let (name, shape_s, dtype) = (parts[0], parts[1], parts[2]);
        if dtype != "f32" {
            return Err(Error::Checkpoint(format!("tensor {name}: unsupported dtype {dtype}")));
        }
        let shape: Vec<usize> = shape_s
            .split('x')
            .map(|d| d.parse::<usize>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::Checkpoint(format!("tensor {name}: bad shape '{shape_s}'")))?;
        let numel: usize = shape.iter().product();
        let path = dir.join(format!("{name}.bin"));
        let bytes = fs::read(&path).map_err(|_| {
            Error::Checkpoint(format!("tensor {name}: file {} missing", path.display()))
        })?;
        if bytes.len() != numel * 4 {
            return Err(Error::Checkpoint(format!(
                "tensor {name}: expected {} bytes, found {}",
                numel * 4,
                bytes.len()
            )));
        }
        let data: Vec<f64> = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
            .collect();
        staged.insert(name.to_string(), Tensor::new(&shape, data));
    }

    let mut take = |name: &str| -> Result<Tensor> {
        staged
            .remove(name)
            .ok_or_else(|| Error::Checkpoint(format!("tensor {name} absent from manifest")))
    };

    let mut encoder = Encoder::new(config.clone(), 0)?;
    for (name, slot) in encoder.weights.named_mut() {
        let t = take(&name)?;
        if t.shape() != slot.shape() {
            return Err(Error::Checkpoint(format!(
                "tensor {name}: shape {:?} does not match expected {:?}",
                t.shape(),
                slot.shape()
            )));
        }
        *slot = t;
    }
    let mut disc = Discriminator::init(config.dim, 0);
    for (name, slot) in disc.named_mut() {
        let t = take(&name)?;
        if t.shape() != slot.shape() {
            return Err(Error::Checkpoint(format!("tensor {name}: unexpected shape")));
        }
        *slot = t;
    }
    let table_t = take(TABLE_NAME)?;
    if table_t.shape() != [config.vocab_size, config.dim] {
        return Err(Error::Checkpoint(format!("tensor {TABLE_NAME}: unexpected shape")));
    }
    let mut table = VocabPerturbTable::from_tensor(table_t);
    if hyper.epsilon > 0.0 {
        // f32 rounding can nudge a row a half-ulp outside the ball
        table.project_rows(hyper.epsilon, hyper.norm)?;
    }

    let mut adam = {
        let mut named: Vec<(String, &Tensor)> = encoder.weights.named();
        named.extend(disc.named());
        AdamState::new(&named)
    };
    adam.t = get_u64(&meta, "adam_t")?;
    for (i, name) in adam.names.clone().iter().enumerate() {
        adam.m[i] = take(&format!("adam.m.{name}"))?;
        adam.v[i] = take(&format!("adam.v.{name}"))?;
    }

    Ok(TrainState {
        model: SentenceModel { vocab, encoder },
        disc,
        table,
        adam,
        epoch: get_usize(&meta, "epoch")?,
        step: get_usize(&meta, "step")?,
        master_seed: get_u64(&meta, "master_seed")?,
        hyper,
    })
}

/// Load just the tokenizer + encoder for evaluation and attacks.
pub fn load_model(dir: &Path) -> Result<SentenceModel> {
    Ok(load_checkpoint(dir)?.model)
}

fn read(dir: &Path, name: &str) -> Result<String> {
    let path = dir.join(name);
    fs::read_to_string(&path)
        .map_err(|_| Error::Checkpoint(format!("missing {} in checkpoint", path.display())))
}

fn parse_kv(text: &str) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Checkpoint(format!("malformed meta line '{line}'")))?;
        map.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(map)
}

fn get<'a>(map: &'a BTreeMap<String, String>, key: &str) -> Result<&'a str> {
    map.get(key)
        .map(|s| s.as_str())
        .ok_or_else(|| Error::Checkpoint(format!("meta key '{key}' missing")))
}

fn get_f64(map: &BTreeMap<String, String>, key: &str) -> Result<f64> {
    get(map, key)?
        .parse()
        .map_err(|_| Error::Checkpoint(format!("meta key '{key}' is not a number")))
}

fn get_usize(map: &BTreeMap<String, String>, key: &str) -> Result<usize> {
    get(map, key)?
        .parse()
        .map_err(|_| Error::Checkpoint(format!("meta key '{key}' is not an integer")))
}

fn get_u64(map: &BTreeMap<String, String>, key: &str) -> Result<u64> {
    get(map, key)?
        .parse()
        .map_err(|_| Error::Checkpoint(format!("meta key '{key}' is not an integer")))
}
