//! Evaluation harness: semantic-similarity scoring, rank correlation,
//! embedding-distribution diagnostics, transfer probing and the adversarial
//! STS task construction.

use crate::attacks::{
    run_indexed, synonym_swap_attack, AttackConfig, AttackGoal, AttackResult, Lexicon, Prediction,
    Victim,
};
use crate::encoder::SentenceModel;
use crate::error::{Error, Result};
use crate::objectives::cosine_sim;

/// Anything that maps raw text to a sentence vector in evaluation mode.
pub trait SentenceEncoder: Sync {
    fn embed_one(&self, text: &str) -> Result<Vec<f64>>;
}

impl SentenceEncoder for SentenceModel {
    fn embed_one(&self, text: &str) -> Result<Vec<f64>> {
        self.embed_text(text)
    }
}

/// One semantic-similarity item with a gold score on the 0..5 scale.
#[derive(Clone, Debug, PartialEq)]
pub struct StsExample {
    pub sentence_a: String,
    pub sentence_b: String,
    pub gold: f64,
}

impl StsExample {
    pub fn new(a: impl Into<String>, b: impl Into<String>, gold: f64) -> Result<Self> {
        if !(0.0..=5.0).contains(&gold) || !gold.is_finite() {
            return Err(Error::Input(format!("gold score {gold} outside [0,5]")));
        }
        Ok(Self { sentence_a: a.into(), sentence_b: b.into(), gold })
    }
}

/// Regression score for a sentence pair: `2.5 * (1 + cos(z_a, z_b))`,
/// mapping cosine similarity onto the STS scale.
pub fn sts_score(model: &dyn SentenceEncoder, a: &str, b: &str) -> Result<f64> {
    let za = model.embed_one(a)?;
    let zb = model.embed_one(b)?;
    Ok(2.5 * (1.0 + cosine_sim(&za, &zb)?))
}

/// Spearman rank correlation with average-rank tie handling.
pub fn spearman(pred: &[f64], gold: &[f64]) -> Result<f64> {
    if pred.len() != gold.len() {
        return Err(Error::Shape("spearman inputs differ in length".into()));
    }
    if pred.len() < 2 {
        return Err(Error::Input("spearman needs at least two points".into()));
    }
    let rp = average_ranks(pred)?;
    let rg = average_ranks(gold)?;
    pearson(&rp, &rg)
}

/// Average ranks (1-based); ties share the mean of their positions.
pub fn average_ranks(values: &[f64]) -> Result<Vec<f64>> {
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("rank input".into()));
    }
    let n = values.len();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).unwrap());
    let mut ranks = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && values[idx[j + 1]] == values[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for k in i..=j {
            ranks[idx[k]] = avg;
        }
        i = j + 1;
    }
    Ok(ranks)
}

fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    let mut sxy = 0.0;
    for (&a, &b) in x.iter().zip(y) {
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
        sxy += (a - mx) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::Degenerate("correlation of a constant vector".into()));
    }
    Ok(sxy / (sxx * syy).sqrt())
}

/// Mean Spearman of model scores against gold over a dataset.
pub fn sts_spearman(model: &dyn SentenceEncoder, data: &[StsExample]) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::Input("empty STS dataset".into()));
    }
    let mut pred = Vec::with_capacity(data.len());
    let mut gold = Vec::with_capacity(data.len());
    for ex in data {
        pred.push(sts_score(model, &ex.sentence_a, &ex.sentence_b)?);
        gold.push(ex.gold);
    }
    spearman(&pred, &gold)
}

const UNIT_NORM_TOL: f64 = 1e-6;

fn assert_unit(v: &[f64], what: &str) -> Result<()> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if (n - 1.0).abs() > UNIT_NORM_TOL {
        return Err(Error::Input(format!("{what} must be unit-normalized (norm {n})")));
    }
    Ok(())
}

/// Mean squared distance between unit-normalized positive pairs.
pub fn alignment(pairs: &[(Vec<f64>, Vec<f64>)]) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::Input("alignment over an empty pair list".into()));
    }
    let mut total = 0.0;
    for (a, b) in pairs {
        assert_unit(a, "alignment input")?;
        assert_unit(b, "alignment input")?;
        total += a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>();
    }
    Ok(total / pairs.len() as f64)
}

/// Log mean Gaussian potential over all ordered distinct pairs of
/// unit-normalized embeddings: `log E exp(-2 |x - y|^2)`.
pub fn uniformity(embeddings: &[Vec<f64>]) -> Result<f64> {
    if embeddings.len() < 2 {
        return Err(Error::Input("uniformity needs at least two embeddings".into()));
    }
    for e in embeddings {
        assert_unit(e, "uniformity input")?;
    }
    let n = embeddings.len();
    let mut total = 0.0;
    let mut count = 0usize;
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let d2: f64 =
                embeddings[i].iter().zip(&embeddings[j]).map(|(x, y)| (x - y) * (x - y)).sum();
            total += (-2.0 * d2).exp();
            count += 1;
        }
    }
    Ok((total / count as f64).ln())
}

pub fn normalize_unit(v: &[f64]) -> Result<Vec<f64>> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n == 0.0 {
        return Err(Error::Degenerate("cannot unit-normalize a zero vector".into()));
    }
    Ok(v.iter().map(|x| x / n).collect())
}

// ---------------------------------------------------------------------------
// Transfer probing
// ---------------------------------------------------------------------------

/// Multinomial logistic-regression head trained by full-batch gradient
/// descent on frozen embeddings. Deterministic: zero init, fixed schedule.
#[derive(Clone, Debug)]
pub struct LogisticRegression {
    pub weights: Vec<Vec<f64>>, // [classes][dim]
    pub bias: Vec<f64>,
    pub classes: usize,
}

#[derive(Clone, Copy, Debug)]
pub struct LogisticOptions {
    pub iterations: usize,
    pub learning_rate: f64,
    pub l2: f64,
}

impl Default for LogisticOptions {
    fn default() -> Self {
        Self { iterations: 400, learning_rate: 0.5, l2: 1e-2 }
    }
}

impl LogisticRegression {
    pub fn fit(features: &[Vec<f64>], labels: &[usize], opts: LogisticOptions) -> Result<Self> {
        if features.is_empty() || features.len() != labels.len() {
            return Err(Error::Input("features/labels mismatch".into()));
        }
        let classes = labels.iter().max().unwrap() + 1;
        if labels.iter().collect::<std::collections::HashSet<_>>().len() < 2 {
            return Err(Error::Degenerate("logistic regression needs at least two classes".into()));
        }
        let dim = features[0].len();
        let n = features.len() as f64;
        let mut w = vec![vec![0.0; dim]; classes];
        let mut b = vec![0.0; classes];
        for _ in 0..opts.iterations {
            let mut gw = vec![vec![0.0; dim]; classes];
            let mut gb = vec![0.0; classes];
            for (x, &y) in features.iter().zip(labels) {
                let p = softmax_scores(&w, &b, x);
                for c in 0..classes {
                    let err = p[c] - if c == y { 1.0 } else { 0.0 };
                    gb[c] += err;
                    for (gwc, &xv) in gw[c].iter_mut().zip(x) {
                        *gwc += err * xv;
                    }
                }
            }
            for c in 0..classes {
                b[c] -= opts.learning_rate * gb[c] / n;
                for k in 0..dim {
                    w[c][k] -= opts.learning_rate * (gw[c][k] / n + opts.l2 * w[c][k]);
                }
            }
        }
        Ok(Self { weights: w, bias: b, classes })
    }

    pub fn predict_proba(&self, x: &[f64]) -> Vec<f64> {
        softmax_scores(&self.weights, &self.bias, x)
    }

    pub fn predict(&self, x: &[f64]) -> usize {
        argmax(&self.predict_proba(x))
    }
}

fn softmax_scores(w: &[Vec<f64>], b: &[f64], x: &[f64]) -> Vec<f64> {
    let mut scores: Vec<f64> = w
        .iter()
        .zip(b)
        .map(|(wc, &bc)| wc.iter().zip(x).map(|(a, v)| a * v).sum::<f64>() + bc)
        .collect();
    let m = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for s in scores.iter_mut() {
        *s = (*s - m).exp();
        sum += *s;
    }
    for s in scores.iter_mut() {
        *s /= sum;
    }
    scores
}

pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Accuracy of a logistic head trained on frozen train-split embeddings.
pub fn transfer_probe(
    model: &dyn SentenceEncoder,
    train: &[(String, usize)],
    test: &[(String, usize)],
    opts: LogisticOptions,
) -> Result<f64> {
    if train.is_empty() || test.is_empty() {
        return Err(Error::Input("transfer probe needs train and test data".into()));
    }
    let train_x: Vec<Vec<f64>> =
        train.iter().map(|(t, _)| model.embed_one(t)).collect::<Result<_>>()?;
    let train_y: Vec<usize> = train.iter().map(|(_, y)| *y).collect();
    let head = LogisticRegression::fit(&train_x, &train_y, opts)?;
    let mut correct = 0usize;
    for (text, label) in test {
        if head.predict(&model.embed_one(text)?) == *label {
            correct += 1;
        }
    }
    Ok(correct as f64 / test.len() as f64)
}

// ---------------------------------------------------------------------------
// Adversarial STS
// ---------------------------------------------------------------------------

pub struct AdvStsOutcome {
    /// Transformed dataset: attacked sentence substituted in each pair.
    pub dataset: Vec<StsExample>,
    /// Fraction of examples whose deviation grew by at least the threshold,
    /// over all examples.
    pub success_rate: f64,
    pub mean_queries: f64,
    pub results: Vec<AttackResult>,
}

/// Attack one sentence per pair (the longer one by word count, ties to
/// `sentence_a`) so the model's regression score deviates from gold by at
/// least `delta_threshold` more than it originally did.
pub fn build_advsts(
    model: &dyn SentenceEncoder,
    dataset: &[StsExample],
    lexicon: &Lexicon,
    delta_threshold: f64,
    budget: u64,
    cfg: &AttackConfig,
    workers: usize,
) -> Result<AdvStsOutcome> {
    if dataset.is_empty() {
        return Err(Error::Input("empty AdvSTS dataset".into()));
    }
    let attacked: Vec<Result<(bool, AttackResult)>> =
        run_indexed(dataset, workers.max(1), |_, ex| {
            let a_len = ex.sentence_a.split_whitespace().count();
            let b_len = ex.sentence_b.split_whitespace().count();
            let attack_a = a_len >= b_len;
            let (target, partner) = if attack_a {
                (&ex.sentence_a, &ex.sentence_b)
            } else {
                (&ex.sentence_b, &ex.sentence_a)
            };
            let mut victim = Victim::new(|text: &str| {
                Ok(Prediction::Score(sts_score(model, text, partner)?))
            });
            let goal = AttackGoal::DeviateScore { gold: ex.gold, threshold: delta_threshold };
            let result = synonym_swap_attack(&mut victim, target, lexicon, &goal, budget, cfg)?;
            Ok((attack_a, result))
        });

    let mut out_dataset = Vec::with_capacity(dataset.len());
    let mut results = Vec::with_capacity(dataset.len());
    let mut successes = 0usize;
    let mut total_queries = 0u64;
    for (ex, outcome) in dataset.iter().zip(attacked) {
        let (attack_a, result) = outcome?;
        total_queries += result.queries;
        if result.success {
            successes += 1;
        }
        let (new_a, new_b) = if attack_a {
            (result.perturbed.clone(), ex.sentence_b.clone())
        } else {
            (ex.sentence_a.clone(), result.perturbed.clone())
        };
        out_dataset.push(StsExample { sentence_a: new_a, sentence_b: new_b, gold: ex.gold });
        results.push(result);
    }
    Ok(AdvStsOutcome {
        dataset: out_dataset,
        success_rate: successes as f64 / dataset.len() as f64,
        mean_queries: total_queries as f64 / dataset.len() as f64,
        results,
    })
}
