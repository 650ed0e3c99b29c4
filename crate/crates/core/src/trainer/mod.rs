//! Training loop: dual-dropout forward passes, the inner adversarial
//! perturbation loop, the total objective and Adam updates.
//!
//! One master seed derives every stream (shuffling, dropout masks, RTD
//! edits, perturbation init), so a full run is bit-reproducible. Weights are
//! snapped to the f32 grid after every update, which keeps checkpoints
//! (stored as f32) exact round trips.

pub mod checkpoint;

use crate::encoder::{
    pad_to_common, Encoder, EncoderConfig, PaddedBatch, SentenceModel, TokenSequence, Vocab,
};
use crate::error::{Error, Result};
use crate::evaluation::{sts_spearman, StsExample};
use crate::objectives::{
    build_total_loss, rtd_batch_tensors, rtd_edit, AdversarialParts, Discriminator, RtdEdit,
    TotalLossConfig, UnigramGenerator,
};
use crate::perturbation::{
    generate, max_sentence_norm, max_token_norm, HyperParams, PerturbationState, VocabPerturbTable,
};
use crate::rng;
use crate::tensor::Tensor;

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

/// First and second moments per parameter, in registry order.
#[derive(Clone, Debug)]
pub struct AdamState {
    pub names: Vec<String>,
    pub m: Vec<Tensor>,
    pub v: Vec<Tensor>,
    pub t: u64,
}

impl AdamState {
    pub fn new(named: &[(String, &Tensor)]) -> Self {
        Self {
            names: named.iter().map(|(n, _)| n.clone()).collect(),
            m: named.iter().map(|(_, t)| Tensor::zeros(t.shape())).collect(),
            v: named.iter().map(|(_, t)| Tensor::zeros(t.shape())).collect(),
            t: 0,
        }
    }

    /// One update over parameters aligned with the registry; entries with no
    /// gradient are left untouched. Updated weights land on the f32 grid.
    pub fn step(&mut self, params: &mut [&mut Tensor], grads: &[Option<Tensor>], lr: f64) {
        assert_eq!(params.len(), self.m.len());
        assert_eq!(grads.len(), self.m.len());
        self.t += 1;
        let bc1 = 1.0 - ADAM_BETA1.powi(self.t as i32);
        let bc2 = 1.0 - ADAM_BETA2.powi(self.t as i32);
        for i in 0..params.len() {
            let Some(g) = &grads[i] else { continue };
            let m = self.m[i].data_mut();
            let v = self.v[i].data_mut();
            let w = params[i].data_mut();
            for k in 0..w.len() {
                let gk = g.data()[k];
                m[k] = ADAM_BETA1 * m[k] + (1.0 - ADAM_BETA1) * gk;
                v[k] = ADAM_BETA2 * v[k] + (1.0 - ADAM_BETA2) * gk * gk;
                let mhat = m[k] / bc1;
                let vhat = v[k] / bc2;
                w[k] -= lr * mhat / (vhat.sqrt() + ADAM_EPS);
            }
            params[i].snap_f32();
        }
    }
}

/// Per-step loss record, the unit of the metrics log.
#[derive(Clone, Debug, PartialEq)]
pub struct StepRecord {
    pub step: usize,
    pub epoch: usize,
    pub l_con: f64,
    pub l_reg: f64,
    pub l_rtd: f64,
    pub l_total: f64,
    pub max_delta_norm: f64,
    pub max_eta_norm: f64,
}

impl StepRecord {
    pub const CSV_HEADER: &'static str =
        "step,epoch,l_con,l_reg,l_rtd,l_total,max_delta_norm,max_eta_norm";

    pub fn to_csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{}",
            self.step,
            self.epoch,
            self.l_con,
            self.l_reg,
            self.l_rtd,
            self.l_total,
            self.max_delta_norm,
            self.max_eta_norm
        )
    }
}

/// Everything mutable the trainer owns.
#[derive(Clone, Debug)]
pub struct TrainState {
    pub model: SentenceModel,
    pub disc: Discriminator,
    pub table: VocabPerturbTable,
    pub adam: AdamState,
    pub epoch: usize,
    pub step: usize,
    pub master_seed: u64,
    pub hyper: HyperParams,
}

#[derive(Clone, Debug)]
pub struct TrainSettings {
    pub master_seed: u64,
    /// Fraction of word positions the RTD generator edits.
    pub mask_rate: f64,
    /// Re-draw the vocabulary perturbation table at each epoch start.
    pub reset_table_each_epoch: bool,
    /// Validation pairs for best-epoch checkpoint selection (mean Spearman);
    /// absent means the final epoch wins.
    pub val: Option<Vec<StsExample>>,
}

impl Default for TrainSettings {
    fn default() -> Self {
        Self { master_seed: 42, mask_rate: 0.15, reset_table_each_epoch: false, val: None }
    }
}

pub struct TrainOutcome {
    /// Selected state (best validation epoch, or the final one).
    pub state: TrainState,
    pub records: Vec<StepRecord>,
    /// Mean total loss per epoch, 1-indexed by position + 1.
    pub epoch_mean_total: Vec<f64>,
    /// Epoch whose snapshot was selected.
    pub selected_epoch: usize,
    /// Validation metric per epoch when validation data was supplied.
    pub val_metrics: Vec<f64>,
}

/// Train on raw corpus lines. `epsilon == 0` disables the adversarial
/// machinery entirely and degenerates to a plain dual-dropout contrastive
/// trainer (the baseline configuration).
pub fn train(
    corpus: &[String],
    enc_cfg: &EncoderConfig,
    hyper: &HyperParams,
    settings: &TrainSettings,
) -> Result<TrainOutcome> {
    hyper.validate()?;
    if !(0.0 < settings.mask_rate && settings.mask_rate < 1.0) {
        return Err(Error::Config(format!("mask_rate {} outside (0,1)", settings.mask_rate)));
    }
    if corpus.is_empty() {
        return Err(Error::Input("empty training corpus".into()));
    }
    let master = settings.master_seed;
    let vocab = Vocab::build(corpus.iter().map(|s| s.as_str()));
    let mut config = enc_cfg.clone();
    config.vocab_size = vocab.size();
    config.validate()?;

    let adversarial_on = hyper.epsilon > 0.0;
    let rtd_on = adversarial_on && hyper.lambda2 > 0.0;

    let mut encoder = Encoder::new(config.clone(), rng::derive_seed(master, "enc-init", &[]))?;
    let mut disc = Discriminator::init(config.dim, rng::derive_seed(master, "disc-init", &[]));
    let mut table = init_table(&vocab, &config, hyper, master, 0)?;
    let generator = if rtd_on { Some(UnigramGenerator::from_vocab(&vocab)?) } else { None };

    let mut adam = {
        let mut named: Vec<(String, &Tensor)> = encoder.weights.named();
        named.extend(disc.named());
        AdamState::new(&named)
    };

    let sequences: Vec<TokenSequence> =
        corpus.iter().map(|line| vocab.tokenize(line, config.max_len)).collect();

    let mut records: Vec<StepRecord> = Vec::new();
    let mut epoch_mean_total = Vec::new();
    let mut val_metrics = Vec::new();
    let mut best: Option<(f64, usize, SentenceModel, Discriminator, VocabPerturbTable, AdamState)> =
        None;
    let mut global_step = 0usize;

    for epoch in 1..=hyper.epochs {
        if settings.reset_table_each_epoch && epoch > 1 {
            table = init_table(&vocab, &config, hyper, master, epoch as u64)?;
        }
        let order = rng::shuffled_indices(sequences.len(), master, "shuffle", &[epoch as u64]);
        let mut epoch_losses = Vec::new();

        for (batch_idx, chunk) in order.chunks(hyper.batch_size).enumerate() {
            global_step += 1;
            let batch_seqs: Vec<TokenSequence> =
                pad_to_common(&chunk.iter().map(|&i| sequences[i].clone()).collect::<Vec<_>>());
            let padded = PaddedBatch::from_sequences(&batch_seqs)?;
            let coords = [epoch as u64, batch_idx as u64];
            let m1 = rng::derive_seed(master, "dropout-m1", &coords);
            let m2 = rng::derive_seed(master, "dropout-m2", &coords);

            let mut adversarial_hold = None;
            let mut max_delta = 0.0;
            let mut max_eta = 0.0;

            if adversarial_on {
                let x1 = encoder.embed(&batch_seqs, m1)?;
                let x2 = encoder.embed(&batch_seqs, m2)?;
                let z_pos = encoder.encode_from_embeddings(&x2, &batch_seqs)?;
                let z_pos_norm = crate::objectives::normalize_rows(&z_pos)?;

                let mut pert_rng = rng::stream(master, "pert-init", &coords);
                let state = PerturbationState::init_batch(
                    &padded,
                    config.dim,
                    table.clone(),
                    hyper,
                    &mut pert_rng,
                    |id| vocab.is_word_id(id),
                );
                let loss_fn =
                    crate::objectives::inner_loss_fn(&encoder, &padded, z_pos_norm, hyper);
                let gen_out = generate(&x1, state, &padded, hyper, |id| vocab.is_word_id(id), loss_fn)
                    .map_err(|e| {
                        Error::NonFinite(format!(
                            "perturbation generation failed at epoch {epoch} step {global_step}: {e}"
                        ))
                    })?;
                table = gen_out.table;
                max_delta = max_sentence_norm(&gen_out.delta_final, hyper.norm);
                max_eta = max_token_norm(&gen_out.eta_final, hyper.norm);

                let rtd = if rtd_on {
                    let mut rtd_rng = rng::stream(master, "rtd-edit", &coords);
                    let gen = generator.as_ref().expect("generator built when rtd is on");
                    let edits: Vec<RtdEdit> = batch_seqs
                        .iter()
                        .map(|s| rtd_edit(s, settings.mask_rate, &vocab, gen, &mut rtd_rng))
                        .collect::<Result<_>>()?;
                    let (edited, labels, weights) = rtd_batch_tensors(&edits, &padded, &vocab)?;
                    Some((edited, labels, weights))
                } else {
                    None
                };
                adversarial_hold = Some((gen_out.delta_final, gen_out.eta_final, rtd));
            }

            let adversarial = adversarial_hold.as_ref().map(|(delta, eta, rtd)| {
                let (edited, labels, weights) = match rtd {
                    Some((e, l, w)) => (e, l.clone(), w.clone()),
                    // RTD disabled: empty weights keep the term at zero and
                    // the branch is skipped anyway because lambda2 == 0.
                    None => (&padded, Tensor::zeros(&[padded.b, padded.l]), Tensor::zeros(&[padded.b, padded.l])),
                };
                AdversarialParts {
                    delta_final: delta,
                    eta_final: eta,
                    edited,
                    labels,
                    rtd_weights: weights,
                    rtd_dropout_seed: rng::derive_seed(master, "dropout-rtd", &coords),
                }
            });

            let mut total = build_total_loss(TotalLossConfig {
                encoder: &encoder,
                disc: &disc,
                batch: &padded,
                dropout_seed_m1: m1,
                dropout_seed_m2: m2,
                adversarial,
                hyper,
                trainable: true,
            })
            .map_err(|e| diagnostic_abort(e, epoch, global_step, &batch_seqs, max_delta, max_eta))?;

            if !total.l_total.is_finite() {
                return Err(diagnostic_abort(
                    Error::NonFinite("total loss".into()),
                    epoch,
                    global_step,
                    &batch_seqs,
                    max_delta,
                    max_eta,
                ));
            }

            let grad_store = total.graph.backward(total.total_node);
            let mut grads: Vec<Option<Tensor>> = Vec::with_capacity(adam.names.len());
            for (_, id) in total.encoder_binding.named() {
                grads.push(grad_store.get(id).cloned());
            }
            match &total.disc_binding {
                Some(db) => {
                    for id in [db.w_x, db.w_h, db.b1, db.w2, db.b2] {
                        grads.push(grad_store.get(id).cloned());
                    }
                }
                None => grads.extend(std::iter::repeat_with(|| None).take(disc.named().len())),
            }

            {
                let mut params: Vec<&mut Tensor> = Vec::with_capacity(adam.names.len());
                for (_, t) in encoder.weights.named_mut() {
                    params.push(t);
                }
                for (_, t) in disc.named_mut() {
                    params.push(t);
                }
                adam.step(&mut params, &grads, hyper.learning_rate);
            }

            epoch_losses.push(total.l_total);
            records.push(StepRecord {
                step: global_step,
                epoch,
                l_con: total.l_con,
                l_reg: total.l_reg,
                l_rtd: total.l_rtd,
                l_total: total.l_total,
                max_delta_norm: max_delta,
                max_eta_norm: max_eta,
            });
        }

        epoch_mean_total
            .push(epoch_losses.iter().sum::<f64>() / epoch_losses.len().max(1) as f64);

        if let Some(val) = &settings.val {
            let model = SentenceModel { vocab: vocab.clone(), encoder: encoder.clone() };
            let metric = sts_spearman(&model, val)?;
            val_metrics.push(metric);
            let improves = best.as_ref().map(|(b, ..)| metric > *b).unwrap_or(true);
            if improves {
                best = Some((
                    metric,
                    epoch,
                    model,
                    disc.clone(),
                    table.clone(),
                    adam.clone(),
                ));
            }
        }
    }

    let (selected_epoch, model, disc, table, adam) = match best {
        Some((_, epoch, model, d, t, a)) => (epoch, model, d, t, a),
        None => (
            hyper.epochs,
            SentenceModel { vocab, encoder },
            disc,
            table,
            adam,
        ),
    };

    Ok(TrainOutcome {
        state: TrainState {
            model,
            disc,
            table,
            adam,
            epoch: hyper.epochs,
            step: global_step,
            master_seed: master,
            hyper: hyper.clone(),
        },
        records,
        epoch_mean_total,
        selected_epoch,
        val_metrics,
    })
}

fn init_table(
    vocab: &Vocab,
    config: &EncoderConfig,
    hyper: &HyperParams,
    master: u64,
    epoch: u64,
) -> Result<VocabPerturbTable> {
    let mut r = rng::stream(master, "table-init", &[epoch]);
    let mut table = VocabPerturbTable::init(vocab.size(), config.dim, hyper.sigma, &mut r);
    if hyper.epsilon > 0.0 {
        table.project_rows(hyper.epsilon, hyper.norm)?;
    }
    Ok(table)
}

fn diagnostic_abort(
    err: Error,
    epoch: usize,
    step: usize,
    batch: &[TokenSequence],
    max_delta: f64,
    max_eta: f64,
) -> Error {
    let sample: Vec<&str> = batch.iter().take(3).map(|s| s.raw_text.as_str()).collect();
    Error::NonFinite(format!(
        "{err} at epoch {epoch}, step {step}; max |delta|={max_delta:.3e}, max |eta|={max_eta:.3e}; \
         batch of {} starting with {:?}",
        batch.len(),
        sample
    ))
}
