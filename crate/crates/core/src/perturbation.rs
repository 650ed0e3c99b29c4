//! Norm-bounded adversarial perturbations in embedding space.
//!
//! Two kinds of perturbation are generated against a differentiable loss:
//! per-token vectors `eta` whose step sizes are modulated by a gradient
//! scaling index, and sentence-level tensors `delta` built by interleaved
//! PGD and FGSM chains whose endpoints are convex-combined. Everything is
//! projected back onto the chosen `epsilon`-ball after each update, and a
//! persistent per-vocabulary table keeps token perturbations warm across
//! batches.

use rand::Rng;
use rand_chacha::ChaCha12Rng;

use crate::encoder::PaddedBatch;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Norm constraining the perturbation ball.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NormKind {
    L1,
    L2,
    Linf,
}

impl NormKind {
    pub fn norm(self, v: &[f64]) -> f64 {
        match self {
            NormKind::L1 => v.iter().map(|x| x.abs()).sum(),
            NormKind::L2 => v.iter().map(|x| x * x).sum::<f64>().sqrt(),
            NormKind::Linf => v.iter().fold(0.0, |m, x| m.max(x.abs())),
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "l1" => Ok(NormKind::L1),
            "l2" => Ok(NormKind::L2),
            "linf" | "inf" => Ok(NormKind::Linf),
            other => Err(Error::Config(format!("unknown norm '{other}' (expected l1|l2|linf)"))),
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            NormKind::L1 => "l1",
            NormKind::L2 => "l2",
            NormKind::Linf => "linf",
        }
    }
}

impl std::fmt::Display for NormKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

/// All scalars of the perturbation generator and training objective.
#[derive(Clone, Debug, PartialEq)]
pub struct HyperParams {
    /// Norm-ball radius.
    pub epsilon: f64,
    /// PGD step size.
    pub alpha: f64,
    /// FGSM step size.
    pub beta: f64,
    /// Token-level step size.
    pub gamma: f64,
    /// PGD/FGSM mixing weight in the final perturbation.
    pub rho: f64,
    /// Weight of the adversarial-anchor contrastive term.
    pub lambda1: f64,
    /// Weight of the replaced-token-detection term.
    pub lambda2: f64,
    /// Contrastive temperature.
    pub tau: f64,
    /// PGD iterations.
    pub k_steps: usize,
    /// FGSM iterations.
    pub t_steps: usize,
    /// Ball norm.
    pub norm: NormKind,
    /// Uniform init range for delta and the vocabulary table.
    pub sigma: f64,
    /// Learning rate.
    pub learning_rate: f64,
    /// Training epochs.
    pub epochs: usize,
    pub batch_size: usize,
}

impl Default for HyperParams {
    fn default() -> Self {
        Self {
            epsilon: 1e-2,
            alpha: 1e-5,
            beta: 1e-3,
            gamma: 1e-3,
            rho: 0.5,
            lambda1: 1.0 / 128.0,
            lambda2: 0.005,
            tau: 0.05,
            k_steps: 5,
            t_steps: 5,
            norm: NormKind::Linf,
            sigma: 1e-2,
            learning_rate: 3e-5,
            epochs: 4,
            batch_size: 64,
        }
    }
}

impl HyperParams {
    /// `epsilon == 0` is the documented "adversarial training off" setting
    /// (the baseline); projections themselves still require a positive
    /// radius.
    pub fn validate(&self) -> Result<()> {
        if self.epsilon < 0.0 {
            return Err(Error::Config(format!("epsilon {} must be >= 0", self.epsilon)));
        }
        if !(0.0..=1.0).contains(&self.rho) {
            return Err(Error::Config(format!("rho {} outside [0,1]", self.rho)));
        }
        if self.k_steps < 1 || self.t_steps < 1 {
            return Err(Error::Config("k_steps and t_steps must be >= 1".into()));
        }
        if self.tau <= 0.0 {
            return Err(Error::Config(format!("tau {} must be > 0", self.tau)));
        }
        if self.lambda1 < 0.0 || self.lambda2 < 0.0 {
            return Err(Error::Config("lambda1/lambda2 must be >= 0".into()));
        }
        if self.sigma < 0.0 {
            return Err(Error::Config(format!("sigma {} must be >= 0", self.sigma)));
        }
        if self.alpha < 0.0 || self.beta < 0.0 || self.gamma < 0.0 {
            return Err(Error::Config("step sizes must be >= 0".into()));
        }
        if self.learning_rate <= 0.0 {
            return Err(Error::Config("learning_rate must be > 0".into()));
        }
        if self.epochs < 1 || self.batch_size < 1 {
            return Err(Error::Config("epochs and batch_size must be >= 1".into()));
        }
        Ok(())
    }
}

/// Relative slack when deciding a point already sits inside the ball, so
/// re-projection is an exact no-op despite floating-point norm noise.
const IN_BALL_REL_TOL: f64 = 1e-12;

/// Euclidean projection of `v` onto the `epsilon`-ball of `norm`, in place.
///
/// Idempotent: points inside the ball (up to a relative tolerance of 1e-12)
/// are returned unchanged.
pub fn project_ball_in_place(v: &mut [f64], epsilon: f64, norm: NormKind) -> Result<()> {
    if epsilon <= 0.0 {
        return Err(Error::Config(format!("epsilon {epsilon} must be > 0")));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("projection input".into()));
    }
    let tol = epsilon * (1.0 + IN_BALL_REL_TOL);
    match norm {
        NormKind::Linf => {
            for x in v.iter_mut() {
                *x = x.clamp(-epsilon, epsilon);
            }
        }
        NormKind::L2 => {
            let n = NormKind::L2.norm(v);
            if n > tol {
                let s = epsilon / n;
                for x in v.iter_mut() {
                    *x *= s;
                }
            }
        }
        NormKind::L1 => {
            let n = NormKind::L1.norm(v);
            if n > tol {
                let theta = l1_threshold(v, epsilon);
                for x in v.iter_mut() {
                    let a = x.abs() - theta;
                    *x = if a > 0.0 { x.signum() * a } else { 0.0 };
                }
            }
        }
    }
    Ok(())
}

/// Convenience wrapper returning a new vector.
pub fn project_ball(v: &[f64], epsilon: f64, norm: NormKind) -> Result<Vec<f64>> {
    let mut out = v.to_vec();
    project_ball_in_place(&mut out, epsilon, norm)?;
    Ok(out)
}

/// Soft-threshold level for Euclidean projection onto the L1 ball
/// (sort-based pivot search over |v|).
fn l1_threshold(v: &[f64], epsilon: f64) -> f64 {
    let mut u: Vec<f64> = v.iter().map(|x| x.abs()).collect();
    u.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let mut cumsum = 0.0;
    let mut theta = 0.0;
    for (j, &uj) in u.iter().enumerate() {
        cumsum += uj;
        let candidate = (cumsum - epsilon) / (j + 1) as f64;
        if uj - candidate > 0.0 {
            theta = candidate;
        } else {
            break;
        }
    }
    theta.max(0.0)
}

/// Per-token scaling factors from per-token perturbation norms (within one
/// sentence): `n_i = |eta_i| / max_j |eta_j|`. All-zero norms degenerate to
/// identity scaling.
pub fn scaling_index(eta_norms: &[f64]) -> Result<Vec<f64>> {
    if eta_norms.is_empty() {
        return Err(Error::Input("scaling index needs at least one token".into()));
    }
    if eta_norms.iter().any(|&n| !n.is_finite() || n < 0.0) {
        return Err(Error::Input("token norms must be finite and >= 0".into()));
    }
    let max = eta_norms.iter().cloned().fold(0.0, f64::max);
    if max == 0.0 {
        return Ok(vec![1.0; eta_norms.len()]);
    }
    Ok(eta_norms.iter().map(|&n| n / max).collect())
}

/// One token-level update over a single sentence.
///
/// `eta` and `grad` are `L x D` slices (rows = tokens); `active` marks the
/// rows that participate (real word positions). For each active token:
/// scale by the sentence's scaling index, take a normalised gradient step of
/// size `gamma`, and project back onto the per-token ball. Zero-gradient
/// tokens skip the additive term.
pub fn token_step_sentence(
    eta: &mut [f64],
    grad: &[f64],
    active: &[bool],
    dim: usize,
    gamma: f64,
    hyper: &HyperParams,
) -> Result<()> {
    let tokens = active.len();
    assert_eq!(eta.len(), tokens * dim, "eta shape mismatch");
    assert_eq!(grad.len(), tokens * dim, "grad shape mismatch");
    let active_idx: Vec<usize> = (0..tokens).filter(|&t| active[t]).collect();
    if active_idx.is_empty() {
        return Ok(());
    }
    let norms: Vec<f64> =
        active_idx.iter().map(|&t| hyper.norm.norm(&eta[t * dim..(t + 1) * dim])).collect();
    let factors = scaling_index(&norms)?;
    for (pos, &t) in active_idx.iter().enumerate() {
        let row = &mut eta[t * dim..(t + 1) * dim];
        let grow = &grad[t * dim..(t + 1) * dim];
        let gnorm = hyper.norm.norm(grow);
        let n = factors[pos];
        if gnorm > 0.0 {
            for (e, &g) in row.iter_mut().zip(grow) {
                *e = n * (*e + gamma * g / gnorm);
            }
        } else {
            for e in row.iter_mut() {
                *e *= n;
            }
        }
        project_ball_in_place(row, hyper.epsilon, hyper.norm)?;
    }
    Ok(())
}

/// PGD update of one sentence-level perturbation (flattened `L*D` slice):
/// `delta <- proj(delta + alpha * g / |g|)`. A zero gradient leaves the
/// (re-projected) point unchanged.
pub fn pgd_step(delta: &mut [f64], grad: &[f64], alpha: f64, hyper: &HyperParams) -> Result<()> {
    assert_eq!(delta.len(), grad.len(), "pgd shapes differ");
    let gnorm = hyper.norm.norm(grad);
    if gnorm > 0.0 {
        for (d, &g) in delta.iter_mut().zip(grad) {
            *d += alpha * g / gnorm;
        }
    }
    project_ball_in_place(delta, hyper.epsilon, hyper.norm)
}

/// FGSM update: `delta <- proj(delta + beta * sign(g))` with `sign(0) = 0`.
pub fn fgsm_step(delta: &mut [f64], grad: &[f64], beta: f64, hyper: &HyperParams) -> Result<()> {
    assert_eq!(delta.len(), grad.len(), "fgsm shapes differ");
    for (d, &g) in delta.iter_mut().zip(grad) {
        *d += beta * sign(g);
    }
    project_ball_in_place(delta, hyper.epsilon, hyper.norm)
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Convex combination of the PGD and FGSM endpoints: both inputs inside the
/// ball implies the output is too.
pub fn combine(delta_pgd: &Tensor, delta_fgsm: &Tensor, rho: f64) -> Result<Tensor> {
    if !(0.0..=1.0).contains(&rho) {
        return Err(Error::Config(format!("rho {rho} outside [0,1]")));
    }
    if delta_pgd.shape() != delta_fgsm.shape() {
        return Err(Error::Shape("combine inputs differ in shape".into()));
    }
    let data = delta_pgd
        .data()
        .iter()
        .zip(delta_fgsm.data())
        .map(|(&p, &f)| rho * p + (1.0 - rho) * f)
        .collect();
    Ok(Tensor::new(delta_pgd.shape(), data))
}

/// Persistent per-vocabulary-row token perturbation memory.
#[derive(Clone, Debug, PartialEq)]
pub struct VocabPerturbTable {
    table: Tensor,
}

impl VocabPerturbTable {
    /// `(1/sqrt(D)) * U(-sigma, sigma)` init per element.
    pub fn init(vocab_size: usize, dim: usize, sigma: f64, rng: &mut ChaCha12Rng) -> Self {
        let scale = 1.0 / (dim as f64).sqrt();
        let data = (0..vocab_size * dim)
            .map(|_| if sigma > 0.0 { rng.gen_range(-sigma..sigma) * scale } else { 0.0 })
            .collect();
        Self { table: Tensor::new(&[vocab_size, dim], data) }
    }

    pub fn from_tensor(table: Tensor) -> Self {
        assert_eq!(table.shape().len(), 2);
        Self { table }
    }

    pub fn tensor(&self) -> &Tensor {
        &self.table
    }

    pub fn dim(&self) -> usize {
        self.table.shape()[1]
    }

    pub fn row(&self, id: usize) -> &[f64] {
        let d = self.dim();
        &self.table.data()[id * d..(id + 1) * d]
    }

    pub fn set_row(&mut self, id: usize, values: &[f64]) {
        let d = self.dim();
        self.table.data_mut()[id * d..(id + 1) * d].copy_from_slice(values);
    }

    /// Clamp every row into the epsilon-ball (used after lossy reload).
    pub fn project_rows(&mut self, epsilon: f64, norm: NormKind) -> Result<()> {
        let d = self.dim();
        let rows = self.table.shape()[0];
        for r in 0..rows {
            let row = &mut self.table.data_mut()[r * d..(r + 1) * d];
            project_ball_in_place(row, epsilon, norm)?;
        }
        Ok(())
    }

    pub fn max_row_norm(&self, norm: NormKind) -> f64 {
        let d = self.dim();
        self.table
            .data()
            .chunks(d)
            .map(|row| norm.norm(row))
            .fold(0.0, f64::max)
    }
}

/// Sentence- and token-level perturbations plus the persistent table.
#[derive(Clone, Debug)]
pub struct PerturbationState {
    pub delta: Tensor,
    pub eta: Tensor,
    pub table: VocabPerturbTable,
}

impl PerturbationState {
    /// Trainer-side initialisation for one batch: `delta0` uniform in
    /// `(1/sqrt(D)) * U(-sigma, sigma)` at active positions, `eta0` copied
    /// from the table rows of each active word token. `<cls>` and padding
    /// rows stay zero; `<cls>`/`<unk>` never index the table.
    pub fn init_batch(
        batch: &PaddedBatch,
        dim: usize,
        table: VocabPerturbTable,
        hyper: &HyperParams,
        rng: &mut ChaCha12Rng,
        is_word_id: impl Fn(usize) -> bool,
    ) -> Self {
        let (b, l) = (batch.b, batch.l);
        let scale = 1.0 / (dim as f64).sqrt();
        let mut delta = Tensor::zeros(&[b, l, dim]);
        let mut eta = Tensor::zeros(&[b, l, dim]);
        for bi in 0..b {
            for li in 0..l {
                if !batch.is_active(bi, li) {
                    // keep the stream aligned regardless of padding layout
                    for _ in 0..dim {
                        let _: f64 = rng.gen();
                    }
                    continue;
                }
                let off = (bi * l + li) * dim;
                for k in 0..dim {
                    let u: f64 = rng.gen();
                    if hyper.sigma > 0.0 {
                        delta.data_mut()[off + k] = (2.0 * u - 1.0) * hyper.sigma * scale;
                    }
                }
                let id = batch.id_at(bi, li);
                if is_word_id(id) {
                    let row = table.row(id).to_vec();
                    eta.data_mut()[off..off + dim].copy_from_slice(&row);
                }
            }
        }
        Self { delta, eta, table }
    }
}

/// Loss value and gradient with respect to the perturbed embedding tensor.
pub struct LossGrad {
    pub loss: f64,
    pub grad: Tensor,
}

/// Output of the inner adversarial loop.
pub struct GenerateResult {
    pub delta_final: Tensor,
    pub eta_final: Tensor,
    pub table: VocabPerturbTable,
    /// Loss observed at the last gradient evaluation.
    pub last_loss: f64,
}

/// Inner adversarial loop over one batch.
///
/// Runs `max(K, T)` iterations. Each iteration evaluates `loss_fn` once at
/// `X + delta_mix + eta` (the convex mix of the two running chains) and uses
/// that single gradient for the PGD chain (while `t <= K`), the FGSM chain
/// (while `t <= T`) and the token-level step. Sentence-level updates treat
/// each sentence's `L x D` slice as one vector; token updates work row-wise
/// on active word positions. Afterwards the vocabulary table absorbs the
/// final `eta` row of every active word token (later occurrences win), and
/// the final perturbation is the convex combination of the chain endpoints.
pub fn generate(
    x: &Tensor,
    state: PerturbationState,
    batch: &PaddedBatch,
    hyper: &HyperParams,
    is_word_id: impl Fn(usize) -> bool,
    mut loss_fn: impl FnMut(&Tensor) -> Result<LossGrad>,
) -> Result<GenerateResult> {
    hyper.validate()?;
    let shape = x.shape().to_vec();
    if state.delta.shape() != shape.as_slice() || state.eta.shape() != shape.as_slice() {
        return Err(Error::Shape("perturbation state does not match embeddings".into()));
    }
    let (b, l, d) = (shape[0], shape[1], shape[2]);
    let sent = l * d;

    let PerturbationState { delta, eta, mut table } = state;
    let mut delta_pgd = delta.clone();
    let mut delta_fgsm = delta;
    let mut eta = eta;
    let mut last_loss = f64::NAN;

    let active_rows: Vec<Vec<bool>> = (0..b)
        .map(|bi| (0..l).map(|li| batch.is_active(bi, li) && is_word_id(batch.id_at(bi, li))).collect())
        .collect();

    let steps = hyper.k_steps.max(hyper.t_steps);
    for t in 1..=steps {
        let mix = combine(&delta_pgd, &delta_fgsm, hyper.rho)?;
        let mut point = x.add(&mix);
        point = point.add(&eta);
        let LossGrad { loss, grad } = loss_fn(&point)?;
        if !loss.is_finite() {
            return Err(Error::NonFinite("inner adversarial loss".into()));
        }
        grad.ensure_finite("inner adversarial gradient")?;
        last_loss = loss;

        for bi in 0..b {
            let gs = &grad.data()[bi * sent..(bi + 1) * sent];
            if t <= hyper.k_steps {
                pgd_step(&mut delta_pgd.data_mut()[bi * sent..(bi + 1) * sent], gs, hyper.alpha, hyper)?;
            }
            if t <= hyper.t_steps {
                fgsm_step(&mut delta_fgsm.data_mut()[bi * sent..(bi + 1) * sent], gs, hyper.beta, hyper)?;
            }
            token_step_sentence(
                &mut eta.data_mut()[bi * sent..(bi + 1) * sent],
                gs,
                &active_rows[bi],
                d,
                hyper.gamma,
                hyper,
            )?;
        }
    }

    for bi in 0..b {
        for li in 0..l {
            if active_rows[bi][li] {
                let off = (bi * l + li) * d;
                let row = eta.data()[off..off + d].to_vec();
                table.set_row(batch.id_at(bi, li), &row);
            }
        }
    }

    let delta_final = combine(&delta_pgd, &delta_fgsm, hyper.rho)?;
    Ok(GenerateResult { delta_final, eta_final: eta, table, last_loss })
}

/// Largest per-sentence `L*D`-slice norm of a `[B, L, D]` tensor.
pub fn max_sentence_norm(t: &Tensor, norm: NormKind) -> f64 {
    let shape = t.shape();
    let sent = shape[1] * shape[2];
    t.data().chunks(sent).map(|s| norm.norm(s)).fold(0.0, f64::max)
}

/// Largest per-token `D`-slice norm of a `[B, L, D]` tensor.
pub fn max_token_norm(t: &Tensor, norm: NormKind) -> f64 {
    let d = *t.shape().last().unwrap();
    t.data().chunks(d).map(|s| norm.norm(s)).fold(0.0, f64::max)
}
