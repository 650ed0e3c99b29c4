//! Self-contained black-box text attacks with exact query accounting.
//!
//! Two greedy families stand in for the published attack suites: a synonym
//! swapper driven by a flat lexicon (word-importance ranking, best-gain
//! substitution) and a character bugger (visual substitutes, adjacent swaps,
//! deletions, doublings). Both talk to a victim only through its prediction
//! closure and count every query.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::evaluation::{argmax, LogisticRegression, SentenceEncoder};

/// Victim output: class probabilities or a regression score.
#[derive(Clone, Debug, PartialEq)]
pub enum Prediction {
    Classification(Vec<f64>),
    Score(f64),
}

impl Prediction {
    pub fn label(&self) -> Option<usize> {
        match self {
            Prediction::Classification(p) => Some(argmax(p)),
            Prediction::Score(_) => None,
        }
    }

    pub fn score(&self) -> Option<f64> {
        match self {
            Prediction::Score(s) => Some(*s),
            Prediction::Classification(_) => None,
        }
    }
}

/// A prediction closure with a query counter that increments on every call.
pub struct Victim<'a> {
    predict_fn: Box<dyn FnMut(&str) -> Result<Prediction> + 'a>,
    queries: u64,
}

impl<'a> Victim<'a> {
    pub fn new(f: impl FnMut(&str) -> Result<Prediction> + 'a) -> Self {
        Self { predict_fn: Box::new(f), queries: 0 }
    }

    pub fn predict(&mut self, text: &str) -> Result<Prediction> {
        self.queries += 1;
        (self.predict_fn)(text)
    }

    pub fn queries(&self) -> u64 {
        self.queries
    }
}

/// Victim over a frozen encoder plus a logistic head.
pub fn classification_victim<'a>(
    model: &'a dyn SentenceEncoder,
    head: &'a LogisticRegression,
) -> Victim<'a> {
    Victim::new(move |text: &str| {
        let z = model.embed_one(text)?;
        Ok(Prediction::Classification(head.predict_proba(&z)))
    })
}

/// What the attacker is trying to achieve.
#[derive(Clone, Copy, Debug)]
pub enum AttackGoal {
    /// Change the predicted label away from `original`.
    FlipLabel { original: usize },
    /// Grow `|score - gold|` by at least `threshold` over its original value.
    DeviateScore { gold: f64, threshold: f64 },
}

impl AttackGoal {
    /// Scalar the attack greedily maximises.
    pub fn gain(&self, pred: &Prediction) -> Result<f64> {
        match (self, pred) {
            (AttackGoal::FlipLabel { original }, Prediction::Classification(p)) => {
                if *original >= p.len() {
                    return Err(Error::Input("goal label outside class range".into()));
                }
                Ok(1.0 - p[*original])
            }
            (AttackGoal::DeviateScore { gold, .. }, Prediction::Score(s)) => Ok((s - gold).abs()),
            _ => Err(Error::Input("attack goal does not match victim output".into())),
        }
    }

    pub fn success(&self, pred: &Prediction, baseline_gain: f64) -> Result<bool> {
        match (self, pred) {
            (AttackGoal::FlipLabel { original }, Prediction::Classification(p)) => {
                Ok(argmax(p) != *original)
            }
            (AttackGoal::DeviateScore { threshold, .. }, Prediction::Score(_)) => {
                Ok(self.gain(pred)? - baseline_gain >= *threshold)
            }
            _ => Err(Error::Input("attack goal does not match victim output".into())),
        }
    }
}

/// Per-example attack outcome.
#[derive(Clone, Debug)]
pub struct AttackResult {
    pub original: String,
    pub perturbed: String,
    pub original_pred: Prediction,
    pub perturbed_pred: Prediction,
    pub success: bool,
    pub queries: u64,
    pub words_modified: usize,
}

#[derive(Clone, Debug)]
pub struct AttackConfig {
    /// Hard cap on the fraction of words an attack may modify.
    pub max_fraction_modified: f64,
    /// Cap on character-edit candidates per word.
    pub max_char_candidates: usize,
    /// PWWS-style ordering: weight deletion saliency by the best immediate
    /// substitution gain before committing to a word order.
    pub use_saliency: bool,
}

impl Default for AttackConfig {
    fn default() -> Self {
        Self { max_fraction_modified: 0.4, max_char_candidates: 24, use_saliency: false }
    }
}

/// Flat synonym lexicon: `word<TAB>syn1,syn2,...` per line.
#[derive(Clone, Debug, Default)]
pub struct Lexicon {
    map: HashMap<String, Vec<String>>,
}

impl Lexicon {
    pub fn from_pairs(pairs: impl IntoIterator<Item = (String, Vec<String>)>) -> Self {
        Self { map: pairs.into_iter().collect() }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Input(format!("cannot read lexicon {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut map = HashMap::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let (word, syns) = line.split_once('\t').ok_or_else(|| {
                Error::Input(format!("lexicon line {} lacks a tab separator", i + 1))
            })?;
            let synonyms: Vec<String> = syns
                .split(',')
                .map(|s| s.trim().to_string())
                .filter(|s| !s.is_empty())
                .collect();
            map.insert(word.trim().to_lowercase(), synonyms);
        }
        Ok(Self { map })
    }

    pub fn render(&self) -> String {
        let mut entries: Vec<(&String, &Vec<String>)> = self.map.iter().collect();
        entries.sort_by_key(|(w, _)| w.as_str());
        entries
            .iter()
            .map(|(w, syns)| format!("{w}\t{}", syns.join(",")))
            .collect::<Vec<_>>()
            .join("\n")
            + "\n"
    }

    pub fn get(&self, word: &str) -> Option<&[String]> {
        self.map.get(&word.to_lowercase()).map(|v| v.as_slice())
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }
}

/// Leave-one-out word ranking: importance of a word is the goal-gain change
/// when it is deleted. Uses exactly `L + 1` queries; ties break by position.
pub fn word_importance(
    victim: &mut Victim<'_>,
    text: &str,
    goal: &AttackGoal,
) -> Result<Vec<usize>> {
    let words: Vec<&str> = text.split_whitespace().collect();
    if words.is_empty() {
        return Err(Error::Input("cannot rank words of an empty text".into()));
    }
    let baseline = victim.predict(text)?;
    let baseline_gain = goal.gain(&baseline)?;
    let start = victim.queries();
    Ok(deletion_ranking(victim, &words, goal, baseline_gain, u64::MAX, start)?
        .expect("unlimited budget"))
}

/// Deletion-probe ranking given an already-queried baseline; `None` when the
/// budget runs out mid-probing.
fn deletion_ranking(
    victim: &mut Victim<'_>,
    words: &[&str],
    goal: &AttackGoal,
    baseline_gain: f64,
    budget: u64,
    start: u64,
) -> Result<Option<Vec<usize>>> {
    let mut scored: Vec<(usize, f64)> = Vec::with_capacity(words.len());
    for i in 0..words.len() {
        if victim.queries() - start >= budget {
            return Ok(None);
        }
        let probe_text = join_without(words, i);
        let probe = victim.predict(&probe_text)?;
        scored.push((i, goal.gain(&probe)? - baseline_gain));
    }
    scored.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    Ok(Some(scored.into_iter().map(|(i, _)| i).collect()))
}

fn join_without(words: &[&str], skip: usize) -> String {
    let mut out = String::new();
    for (i, w) in words.iter().enumerate() {
        if i == skip {
            continue;
        }
        if !out.is_empty() {
            out.push(' ');
        }
        out.push_str(w);
    }
    out
}

fn join_with(words: &[String]) -> String {
    words.join(" ")
}

/// Greedy synonym-substitution attack (TextFooler-style; PWWS-style saliency
/// ordering behind `use_saliency`).
pub fn synonym_swap_attack(
    victim: &mut Victim<'_>,
    text: &str,
    lexicon: &Lexicon,
    goal: &AttackGoal,
    budget: u64,
    cfg: &AttackConfig,
) -> Result<AttackResult> {
    greedy_attack(victim, text, goal, budget, cfg, |word| {
        lexicon.get(word).map(|s| s.to_vec()).unwrap_or_default()
    })
}

/// Greedy character-level attack: visual substitutes, adjacent swaps,
/// deletions and doublings, in that candidate order.
pub fn char_bugger_attack(
    victim: &mut Victim<'_>,
    text: &str,
    goal: &AttackGoal,
    budget: u64,
    cfg: &AttackConfig,
) -> Result<AttackResult> {
    let cap = cfg.max_char_candidates;
    greedy_attack(victim, text, goal, budget, cfg, |word| char_candidates(word, cap))
}

fn char_candidates(word: &str, cap: usize) -> Vec<String> {
    let chars: Vec<char> = word.chars().collect();
    let mut out: Vec<String> = Vec::new();
    let push = |cand: String, out: &mut Vec<String>| {
        if cand != word && !cand.is_empty() && !out.contains(&cand) {
            out.push(cand);
        }
    };
    // visual substitutes
    for (i, &c) in chars.iter().enumerate() {
        if let Some(sub) = visual_sub(c) {
            let mut w = chars.clone();
            w[i] = sub;
            push(w.into_iter().collect(), &mut out);
        }
    }
    // adjacent swaps
    for i in 0..chars.len().saturating_sub(1) {
        if chars[i] != chars[i + 1] {
            let mut w = chars.clone();
            w.swap(i, i + 1);
            push(w.into_iter().collect(), &mut out);
        }
    }
    // deletions
    if chars.len() > 1 {
        for i in 0..chars.len() {
            let mut w = chars.clone();
            w.remove(i);
            push(w.into_iter().collect(), &mut out);
        }
    }
    // doublings
    for i in 0..chars.len() {
        let mut w = chars.clone();
        w.insert(i, chars[i]);
        push(w.into_iter().collect(), &mut out);
    }
    out.truncate(cap);
    out
}

fn visual_sub(c: char) -> Option<char> {
    match c {
        'o' => Some('0'),
        'l' | 'i' => Some('1'),
        'a' => Some('@'),
        'e' => Some('3'),
        's' => Some('$'),
        'g' => Some('9'),
        _ => None,
    }
}

fn greedy_attack(
    victim: &mut Victim<'_>,
    text: &str,
    goal: &AttackGoal,
    budget: u64,
    cfg: &AttackConfig,
    candidates_for: impl Fn(&str) -> Vec<String>,
) -> Result<AttackResult> {
    if budget == 0 {
        return Err(Error::Config("attack budget must be > 0".into()));
    }
    if text.split_whitespace().next().is_none() {
        return Err(Error::Input("cannot attack an empty text".into()));
    }
    let start = victim.queries();
    let out_of_budget = |v: &Victim<'_>| v.queries() - start >= budget;

    let words: Vec<String> = text.split_whitespace().map(str::to_string).collect();
    let n_words = words.len();
    let max_mods = (cfg.max_fraction_modified * n_words as f64).floor() as usize;

    let original_pred = victim.predict(text)?;
    let baseline_gain = goal.gain(&original_pred)?;
    let word_refs: Vec<&str> = words.iter().map(String::as_str).collect();
    let Some(mut ranking) =
        deletion_ranking(victim, &word_refs, goal, baseline_gain, budget, start)?
    else {
        // budget died during ranking
        return Ok(AttackResult {
            original: text.to_string(),
            perturbed: text.to_string(),
            perturbed_pred: original_pred.clone(),
            original_pred,
            success: false,
            queries: victim.queries() - start,
            words_modified: 0,
        });
    };

    if cfg.use_saliency {
        ranking = saliency_reorder(victim, &words, &ranking, goal, baseline_gain, budget, start, &candidates_for)?;
    }

    let mut current: Vec<String> = words.clone();
    let mut current_gain = baseline_gain;
    let mut current_pred = original_pred.clone();
    let mut mods = 0usize;

    'words: for &wi in &ranking {
        if mods >= max_mods {
            break;
        }
        let candidates = candidates_for(&current[wi]);
        if candidates.is_empty() {
            continue;
        }
        let mut best: Option<(f64, String, Prediction)> = None;
        for cand in candidates {
            if cand == current[wi] {
                continue;
            }
            if out_of_budget(victim) {
                break 'words;
            }
            let mut trial = current.clone();
            trial[wi] = cand.clone();
            let trial_text = join_with(&trial);
            let pred = victim.predict(&trial_text)?;
            if goal.success(&pred, baseline_gain)? {
                return Ok(AttackResult {
                    original: text.to_string(),
                    perturbed: trial_text,
                    original_pred,
                    perturbed_pred: pred,
                    success: true,
                    queries: victim.queries() - start,
                    words_modified: mods + 1,
                });
            }
            let gain = goal.gain(&pred)?;
            if best.as_ref().map(|(g, _, _)| gain > *g).unwrap_or(true) {
                best = Some((gain, cand, pred));
            }
        }
        if let Some((gain, cand, pred)) = best {
            if gain > current_gain {
                current[wi] = cand;
                current_gain = gain;
                current_pred = pred;
                mods += 1;
            }
        }
    }

    Ok(AttackResult {
        original: text.to_string(),
        perturbed: join_with(&current),
        original_pred,
        perturbed_pred: current_pred,
        success: false,
        queries: victim.queries() - start,
        words_modified: mods,
    })
}

/// PWWS-style ordering: importance weighted by the best single-substitution
/// gain for each word (costs extra queries up front).
#[allow(clippy::too_many_arguments)]
fn saliency_reorder(
    victim: &mut Victim<'_>,
    words: &[String],
    ranking: &[usize],
    goal: &AttackGoal,
    baseline_gain: f64,
    budget: u64,
    start: u64,
    candidates_for: &impl Fn(&str) -> Vec<String>,
) -> Result<Vec<usize>> {
    let mut scored: Vec<(usize, f64)> = Vec::with_capacity(ranking.len());
    for (order, &wi) in ranking.iter().enumerate() {
        let saliency = (ranking.len() - order) as f64;
        let mut best_gain = 0.0f64;
        for cand in candidates_for(&words[wi]) {
            if victim.queries() - start >= budget {
                break;
            }
            let mut trial: Vec<String> = words.to_vec();
            trial[wi] = cand;
            let pred = victim.predict(&join_with(&trial))?;
            best_gain = best_gain.max(goal.gain(&pred)? - baseline_gain);
        }
        scored.push((wi, saliency * best_gain));
    }
    scored.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    Ok(scored.into_iter().map(|(i, _)| i).collect())
}

/// Fraction of successful attacks; errors on an empty slice.
pub fn success_rate(results: &[AttackResult]) -> Result<f64> {
    if results.is_empty() {
        return Err(Error::Degenerate("success rate of zero attacks".into()));
    }
    Ok(results.iter().filter(|r| r.success).count() as f64 / results.len() as f64)
}

/// Which attack family to run.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AttackKind {
    SynonymSwap,
    CharBugger,
}

impl AttackKind {
    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "synonym" | "synonym-swap" => Ok(AttackKind::SynonymSwap),
            "charbug" | "char-bugger" => Ok(AttackKind::CharBugger),
            other => Err(Error::Config(format!("unknown attack '{other}' (synonym|charbug)"))),
        }
    }
}

/// Aggregate of a classification attack run.
#[derive(Clone, Debug)]
pub struct ClassificationAttackReport {
    /// Per input example: `None` when the victim already misclassified it.
    pub outcomes: Vec<Option<AttackResult>>,
    pub total: usize,
    pub eligible: usize,
    pub successes: usize,
    /// successes / eligible.
    pub success_rate: f64,
    /// Mean attack queries over eligible examples.
    pub mean_queries: f64,
    /// eligible / total.
    pub original_accuracy: f64,
    /// Accuracy drop caused by the attack, in `[0,1]`.
    pub accuracy_reduction: f64,
}

/// Attack every correctly-classified example of a labeled dataset; success
/// rates are conditioned on original correctness.
pub fn attack_classification_dataset(
    model: &dyn SentenceEncoder,
    head: &LogisticRegression,
    examples: &[(String, usize)],
    kind: AttackKind,
    lexicon: &Lexicon,
    budget: u64,
    cfg: &AttackConfig,
    workers: usize,
) -> Result<ClassificationAttackReport> {
    if examples.is_empty() {
        return Err(Error::Input("no examples to attack".into()));
    }
    let outcomes: Vec<Result<Option<AttackResult>>> =
        run_indexed(examples, workers.max(1), |_, (text, gold)| {
            let mut victim = classification_victim(model, head);
            let pred = victim.predict(text)?;
            if pred.label() != Some(*gold) {
                return Ok(None);
            }
            let goal = AttackGoal::FlipLabel { original: *gold };
            let mut fresh = classification_victim(model, head);
            let result = match kind {
                AttackKind::SynonymSwap => {
                    synonym_swap_attack(&mut fresh, text, lexicon, &goal, budget, cfg)?
                }
                AttackKind::CharBugger => {
                    char_bugger_attack(&mut fresh, text, &goal, budget, cfg)?
                }
            };
            Ok(Some(result))
        });

    let mut collected = Vec::with_capacity(outcomes.len());
    for o in outcomes {
        collected.push(o?);
    }
    let total = collected.len();
    let eligible_results: Vec<&AttackResult> =
        collected.iter().filter_map(|o| o.as_ref()).collect();
    let eligible = eligible_results.len();
    if eligible == 0 {
        return Err(Error::Degenerate(
            "no eligible examples: the victim got every sampled example wrong".into(),
        ));
    }
    let successes = eligible_results.iter().filter(|r| r.success).count();
    let mean_queries =
        eligible_results.iter().map(|r| r.queries as f64).sum::<f64>() / eligible as f64;
    Ok(ClassificationAttackReport {
        total,
        eligible,
        successes,
        success_rate: successes as f64 / eligible as f64,
        mean_queries,
        original_accuracy: eligible as f64 / total as f64,
        accuracy_reduction: successes as f64 / total as f64,
        outcomes: collected,
    })
}

/// Run `f` over items with a bounded worker pool, preserving input order.
pub fn run_indexed<T: Sync, R: Send>(
    items: &[T],
    workers: usize,
    f: impl Fn(usize, &T) -> R + Sync,
) -> Vec<R> {
    if workers <= 1 || items.len() <= 1 {
        return items.iter().enumerate().map(|(i, t)| f(i, t)).collect();
    }
    let chunk = items.len().div_ceil(workers);
    let mut slots: Vec<Option<R>> = Vec::with_capacity(items.len());
    slots.resize_with(items.len(), || None);
    let f = &f;
    std::thread::scope(|scope| {
        let mut handles = Vec::new();
        for (w, batch) in items.chunks(chunk).enumerate() {
            let offset = w * chunk;
            handles.push(scope.spawn(move || {
                batch
                    .iter()
                    .enumerate()
                    .map(|(i, t)| (offset + i, f(offset + i, t)))
                    .collect::<Vec<(usize, R)>>()
            }));
        }
        for h in handles {
            for (i, r) in h.join().expect("attack worker panicked") {
                slots[i] = Some(r);
            }
        }
    });
    slots.into_iter().map(|s| s.expect("every index filled")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Victim: probability of class 1 is high iff the text contains "good".
    fn good_victim<'a>() -> Victim<'a> {
        Victim::new(|text: &str| {
            let has = text.split_whitespace().any(|w| w == "good");
            let p1 = if has { 0.9 } else { 0.2 };
            Ok(Prediction::Classification(vec![1.0 - p1, p1]))
        })
    }

    #[test]
    fn word_importance_ranks_the_load_bearing_word_first() {
        let mut v = good_victim();
        let goal = AttackGoal::FlipLabel { original: 1 };
        let ranking = word_importance(&mut v, "a good day", &goal).unwrap();
        assert_eq!(ranking[0], 1);
        assert_eq!(v.queries(), 4); // L + 1
    }

    #[test]
    fn word_importance_single_word() {
        let mut v = good_victim();
        let goal = AttackGoal::FlipLabel { original: 1 };
        let ranking = word_importance(&mut v, "good", &goal).unwrap();
        assert_eq!(ranking, vec![0]);
        assert_eq!(v.queries(), 2);
    }

    #[test]
    fn word_importance_empty_text_errors() {
        let mut v = good_victim();
        let goal = AttackGoal::FlipLabel { original: 1 };
        assert!(word_importance(&mut v, "   ", &goal).is_err());
    }

    #[test]
    fn synonym_swap_flips_constructed_victim() {
        let mut v = good_victim();
        let lex = Lexicon::from_pairs([("good".to_string(), vec!["fine".to_string()])]);
        let goal = AttackGoal::FlipLabel { original: 1 };
        let r = synonym_swap_attack(&mut v, "a good day", &lex, &goal, 100, &AttackConfig::default())
            .unwrap();
        assert!(r.success);
        assert!(r.words_modified >= 1);
        assert_eq!(r.perturbed, "a fine day");
        assert_eq!(r.queries, v.queries());
    }

    #[test]
    fn budget_exhaustion_returns_failure() {
        let mut v = good_victim();
        let lex = Lexicon::from_pairs([("good".to_string(), vec!["fine".to_string()])]);
        let goal = AttackGoal::FlipLabel { original: 1 };
        let r = synonym_swap_attack(&mut v, "a good day", &lex, &goal, 2, &AttackConfig::default())
            .unwrap();
        assert!(!r.success);
        assert!(r.queries <= 2);
    }

    #[test]
    fn zero_budget_is_rejected() {
        let mut v = good_victim();
        let lex = Lexicon::default();
        let goal = AttackGoal::FlipLabel { original: 1 };
        assert!(
            synonym_swap_attack(&mut v, "a good day", &lex, &goal, 0, &AttackConfig::default())
                .is_err()
        );
    }

    #[test]
    fn modification_cap_is_respected() {
        // every word swaps freely; cap 0.4 of 3 words -> at most 1 mod
        let mut v = Victim::new(|text: &str| {
            let goods = text.split_whitespace().filter(|w| *w == "good").count();
            let p1 = 0.4 + 0.2 * goods as f64;
            Ok(Prediction::Classification(vec![1.0 - p1, p1]))
        });
        let lex = Lexicon::from_pairs([
            ("good".to_string(), vec!["meh".to_string()]),
        ]);
        let goal = AttackGoal::FlipLabel { original: 1 };
        let r = synonym_swap_attack(
            &mut v,
            "good good good",
            &lex,
            &goal,
            1000,
            &AttackConfig::default(),
        )
        .unwrap();
        assert!(r.words_modified <= 1);
    }

    #[test]
    fn saliency_ordering_still_finds_the_flip() {
        let lex = Lexicon::from_pairs([
            ("good".to_string(), vec!["fine".to_string()]),
            ("day".to_string(), vec!["evening".to_string()]),
        ]);
        let goal = AttackGoal::FlipLabel { original: 1 };
        let cfg = AttackConfig { use_saliency: true, ..AttackConfig::default() };
        let run = || {
            let mut v = good_victim();
            synonym_swap_attack(&mut v, "a good day", &lex, &goal, 100, &cfg).unwrap()
        };
        let r1 = run();
        let r2 = run();
        assert!(r1.success);
        assert_eq!(r1.perturbed, "a fine day");
        assert_eq!(r1.queries, r2.queries);
    }

    #[test]
    fn char_bugger_breaks_exact_match_victim() {
        let mut v = Victim::new(|text: &str| {
            let hit = text.split_whitespace().any(|w| w == "excellent");
            let p1 = if hit { 0.95 } else { 0.1 };
            Ok(Prediction::Classification(vec![1.0 - p1, p1]))
        });
        let goal = AttackGoal::FlipLabel { original: 1 };
        let r =
            char_bugger_attack(&mut v, "an excellent meal", &goal, 500, &AttackConfig::default())
                .unwrap();
        assert!(r.success);
        assert_ne!(r.perturbed, r.original);
    }

    #[test]
    fn char_bugger_empty_text_errors() {
        let mut v = good_victim();
        let goal = AttackGoal::FlipLabel { original: 1 };
        assert!(char_bugger_attack(&mut v, "", &goal, 10, &AttackConfig::default()).is_err());
    }

    #[test]
    fn char_bugger_is_deterministic() {
        let goal = AttackGoal::FlipLabel { original: 1 };
        let run = || {
            let mut v = Victim::new(|text: &str| {
                let p1 = if text.contains("excellent") { 0.9 } else { 0.3 };
                Ok(Prediction::Classification(vec![1.0 - p1, p1]))
            });
            char_bugger_attack(&mut v, "an excellent day", &goal, 200, &AttackConfig::default())
                .unwrap()
        };
        let a = run();
        let b = run();
        assert_eq!(a.perturbed, b.perturbed);
        assert_eq!(a.queries, b.queries);
        assert_eq!(a.success, b.success);
    }

    #[test]
    fn success_rate_arithmetic() {
        let mk = |success| AttackResult {
            original: "x".into(),
            perturbed: "y".into(),
            original_pred: Prediction::Score(0.0),
            perturbed_pred: Prediction::Score(0.0),
            success,
            queries: 1,
            words_modified: 1,
        };
        let results: Vec<AttackResult> =
            (0..10).map(|i| mk(i < 4)).collect();
        assert!((success_rate(&results).unwrap() - 0.4).abs() < 1e-12);
        assert_eq!(success_rate(&results[4..]).unwrap(), 0.0);
        assert_eq!(success_rate(&results[..4]).unwrap(), 1.0);
        assert!(success_rate(&[]).is_err());
    }

    #[test]
    fn run_indexed_preserves_order() {
        let items: Vec<usize> = (0..37).collect();
        let doubled = run_indexed(&items, 4, |_, &x| x * 2);
        assert_eq!(doubled, items.iter().map(|x| x * 2).collect::<Vec<_>>());
    }

    #[test]
    fn lexicon_parses_and_skips_missing_words() {
        let lex = Lexicon::parse("good\tfine,nice\nbad\tawful\n").unwrap();
        assert_eq!(lex.get("good").unwrap(), &["fine".to_string(), "nice".to_string()]);
        assert!(lex.get("zebra").is_none());
        assert!(Lexicon::parse("oops-no-tab\n").is_err());
    }
}
