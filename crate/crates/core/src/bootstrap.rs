//! Semi-supervised training: alternate between fitting on the current
//! dictionary and inducing a new one from frequency-capped vocabularies.

use std::collections::HashSet;

use serde::Serialize;

use crate::dataio::{Embeddings, WordPair};
use crate::error::{Error, Result};
use crate::model::{DictionaryData, GeommParams};
use crate::pipelines::{fit_bilingual, select_bilingual_lambda, split_dictionary, validation_p1, TrainConfig};
use crate::retrieval::{RetrievalIndex, RetrievalMode, Retriever};

#[derive(Clone, Debug, Serialize)]
pub struct BootstrapConfig {
    /// Training options; `val_frac` sets the seed/validation split.
    pub train: TrainConfig,
    /// Induction uses only this many most frequent words per language.
    pub vocab_cutoff: usize,
    pub max_rounds: usize,
    /// Rounds without a strict validation improvement before stopping.
    pub patience: usize,
    /// Keep only pairs found in both directions instead of the union.
    pub mutual_best: bool,
    /// Re-run λ selection every round instead of reusing the seed phase's.
    pub reselect_lambda: bool,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        BootstrapConfig {
            train: TrainConfig::default(),
            vocab_cutoff: 25_000,
            max_rounds: 20,
            patience: 1,
            mutual_best: false,
            reselect_lambda: false,
        }
    }
}

impl BootstrapConfig {
    pub fn validate(&self) -> Result<()> {
        if self.vocab_cutoff == 0 {
            return Err(Error::InvalidConfig("vocabulary cutoff must be at least 1".into()));
        }
        if self.patience == 0 {
            return Err(Error::InvalidConfig("patience must be at least 1".into()));
        }
        self.train.validate()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    /// Source words query the target vocabulary.
    Forward,
    /// Target words query the source vocabulary.
    Backward,
    /// Union of both directions.
    Both,
}

/// CSLS top-1 for every word of the capped query vocabulary. Pairs are
/// always oriented `(source, target)`.
pub fn induce_dictionary(
    params: &GeommParams,
    src: &str,
    tgt: &str,
    src_emb: &Embeddings,
    tgt_emb: &Embeddings,
    cutoff: usize,
    csls_k: usize,
    direction: Direction,
) -> Result<Vec<WordPair>> {
    let s = RetrievalIndex::latent(params, src, &src_emb.truncated(cutoff))?;
    let t = RetrievalIndex::latent(params, tgt, &tgt_emb.truncated(cutoff))?;
    let k = csls_k.min(s.len()).min(t.len()).max(1);
    let run = |dir: Direction| -> Result<Vec<WordPair>> {
        let (q, o) = match dir {
            Direction::Forward => (s.clone(), t.clone()),
            _ => (t.clone(), s.clone()),
        };
        let r = Retriever::new(q, o, RetrievalMode::Csls, k)?;
        let ids: Vec<usize> = (0..r.source.len()).collect();
        Ok(r
            .rank(&ids, 1)
            .into_iter()
            .zip(r.source.vocab())
            .filter_map(|(c, w)| {
                let hit = r.target.vocab()[c.first()?.0].clone();
                Some(match dir {
                    Direction::Forward => (w.clone(), hit),
                    _ => (hit, w.clone()),
                })
            })
            .collect())
    };
    match direction {
        Direction::Both => {
            let (f, b) = rayon::join(|| run(Direction::Forward), || run(Direction::Backward));
            Ok(dedup(f?.into_iter().chain(b?)))
        }
        d => run(d),
    }
}

/// Pairs found in both directions, in forward order.
pub fn mutual_best(
    params: &GeommParams,
    src: &str,
    tgt: &str,
    src_emb: &Embeddings,
    tgt_emb: &Embeddings,
    cutoff: usize,
    csls_k: usize,
) -> Result<Vec<WordPair>> {
    let (f, b) = rayon::join(
        || induce_dictionary(params, src, tgt, src_emb, tgt_emb, cutoff, csls_k, Direction::Forward),
        || induce_dictionary(params, src, tgt, src_emb, tgt_emb, cutoff, csls_k, Direction::Backward),
    );
    let b: HashSet<WordPair> = b?.into_iter().collect();
    Ok(f?.into_iter().filter(|p| b.contains(p)).collect())
}

fn dedup(pairs: impl IntoIterator<Item = WordPair>) -> Vec<WordPair> {
    let mut seen = HashSet::new();
    pairs.into_iter().filter(|p| seen.insert(p.clone())).collect()
}

#[derive(Clone, Debug, Serialize)]
pub struct RoundLog {
    pub round: usize,
    pub dict_size: usize,
    pub induced: usize,
    pub lambda: f64,
    pub val_p1: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct BootstrapReport {
    pub lambda: f64,
    pub seed_pairs: usize,
    pub val_pairs: usize,
    pub seed_val_p1: f64,
    pub rounds: Vec<RoundLog>,
    /// 0 is the seed-only model.
    pub best_round: usize,
    pub best_val_p1: f64,
    /// Set when a round failed and the loop stopped early.
    pub aborted: Option<String>,
}

/// Fit on the seed part of the dictionary, then alternate induction and
/// refitting. Returns the validation-best parameters.
pub fn bootstrap_train(
    src: &str,
    tgt: &str,
    src_emb: &Embeddings,
    tgt_emb: &Embeddings,
    seed_dictionary: &[WordPair],
    config: &BootstrapConfig,
) -> Result<(GeommParams, BootstrapReport)> {
    config.validate()?;
    if seed_dictionary.is_empty() {
        return Err(Error::EmptyDictionary("seed dictionary is empty".into()));
    }
    let tc = &config.train;
    let (seed, val) = split_dictionary(seed_dictionary, tc.val_frac, tc.seed);
    let val: Vec<WordPair> = val
        .into_iter()
        .filter(|(s, t)| src_emb.contains(s) && tgt_emb.contains(t))
        .collect();
    if val.is_empty() {
        return Err(Error::EmptyEvaluation("bootstrap validation split is empty".into()));
    }
    let (lambda, _, _) = select_bilingual_lambda(src, tgt, src_emb, tgt_emb, &seed, &val, tc)?;
    let (seed_data, _) = DictionaryData::from_pairs(&seed, src_emb, tgt_emb)?;
    let (mut best, _) = fit_bilingual(src, tgt, &seed_data, lambda, tc.variant, &tc.solver)?;
    let score = |p: &GeommParams| validation_p1(p, src, tgt, src_emb, tgt_emb, &val, tc.csls_k);
    let seed_val_p1 = score(&best)?;
    log::info!("round=0 dict_size={} val_p1={:.4}", seed.len(), seed_val_p1);

    let mut report = BootstrapReport {
        lambda,
        seed_pairs: seed.len(),
        val_pairs: val.len(),
        seed_val_p1,
        rounds: vec![],
        best_round: 0,
        best_val_p1: seed_val_p1,
        aborted: None,
    };
    let mut current = best.clone();
    let mut stale = 0;
    for round in 1..=config.max_rounds {
        let step = || -> Result<(GeommParams, RoundLog)> {
            let induced = if config.mutual_best {
                mutual_best(&current, src, tgt, src_emb, tgt_emb, config.vocab_cutoff, tc.csls_k)?
            } else {
                induce_dictionary(&current, src, tgt, src_emb, tgt_emb, config.vocab_cutoff, tc.csls_k, Direction::Both)?
            };
            let dict = dedup(seed.iter().cloned().chain(induced.iter().cloned()));
            let lam = if config.reselect_lambda {
                select_bilingual_lambda(src, tgt, src_emb, tgt_emb, &dict, &val, tc)?.0
            } else {
                lambda
            };
            let (data, _) = DictionaryData::from_pairs(&dict, src_emb, tgt_emb)?;
            let (params, _) = fit_bilingual(src, tgt, &data, lam, tc.variant, &tc.solver)?;
            let val_p1 = score(&params)?;
            Ok((
                params,
                RoundLog {
                    round,
                    dict_size: dict.len(),
                    induced: induced.len(),
                    lambda: lam,
                    val_p1,
                },
            ))
        };
        let (params, log) = match step() {
            Ok(x) => x,
            Err(e) => {
                log::error!("round {round} failed: {e}; keeping the best model so far");
                report.aborted = Some(format!("round {round}: {e}"));
                break;
            }
        };
        log::info!("round={} dict_size={} val_p1={:.4}", log.round, log.dict_size, log.val_p1);
        if log.val_p1 > report.best_val_p1 {
            report.best_val_p1 = log.val_p1;
            report.best_round = round;
            best = params.clone();
            stale = 0;
        } else {
            stale += 1;
        }
        report.rounds.push(log);
        current = params;
        if stale >= config.patience {
            break;
        }
    }
    Ok((best, report))
}
