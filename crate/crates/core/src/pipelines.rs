//! Training drivers: supervised bilingual, joint multilingual over a
//! language graph, and one-hop (pivot) translation strategies.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::time::Instant;

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::dataio::{Embeddings, WordPair};
use crate::error::{Error, Result};
use crate::linalg::Mat;
use crate::manifolds::{OrthPoint, ProductPoint, SpdPoint};
use crate::model::{
    procrustes_from_dictionary, DictionaryData, Edge, GeommParams, ModelVariant, MultilingualProblem,
    VariantProblem,
};
use crate::optimizer::{rcg_minimize, SolverOptions, SolverReport};
use crate::retrieval::{
    evaluate_bli_with, evaluate_ranked, BliReport, InferenceSpace, RetrievalMode, Retriever, DEFAULT_CSLS_K,
};

pub const DEFAULT_LAMBDA_GRID: [f64; 4] = [10.0, 100.0, 1000.0, 10000.0];

#[derive(Clone, Debug, Serialize)]
pub struct TrainConfig {
    /// Candidate regularization strengths, tried in order.
    pub lambdas: Vec<f64>,
    pub val_frac: f64,
    /// Seeds the validation split only; optimization is deterministic.
    pub seed: u64,
    #[serde(skip)]
    pub solver: SolverOptions,
    pub variant: ModelVariant,
    pub csls_k: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lambdas: DEFAULT_LAMBDA_GRID.to_vec(),
            val_frac: 0.2,
            seed: 0,
            solver: SolverOptions::default(),
            variant: ModelVariant::Full,
            csls_k: DEFAULT_CSLS_K,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.lambdas.is_empty() {
            return Err(Error::InvalidConfig("λ grid is empty".into()));
        }
        if let Some(l) = self.lambdas.iter().find(|l| !(l.is_finite() && **l > 0.0)) {
            return Err(Error::InvalidConfig(format!("λ must be positive and finite, got {l}")));
        }
        if !(self.val_frac > 0.0 && self.val_frac < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "validation fraction must lie in (0, 1), got {}",
                self.val_frac
            )));
        }
        if self.csls_k == 0 {
            return Err(Error::InvalidConfig("CSLS k must be at least 1".into()));
        }
        self.solver.validate()
    }
}

/// Whether `word` falls in the validation part under `seed`.
pub fn in_validation(word: &str, seed: u64, frac: f64) -> bool {
    let h = Sha256::new()
        .chain_update(seed.to_le_bytes())
        .chain_update(word.as_bytes())
        .finalize();
    let x = u64::from_le_bytes(h[..8].try_into().unwrap());
    (x as f64 / u64::MAX as f64) < frac
}

/// Split by hashed source word, so all translations of a word fall on the
/// same side. Returns `(train, validation)`.
pub fn split_dictionary(pairs: &[WordPair], frac: f64, seed: u64) -> (Vec<WordPair>, Vec<WordPair>) {
    pairs.iter().cloned().partition(|(s, _)| !in_validation(s, seed, frac))
}

fn clamp_k(k: usize, a: &Embeddings, b: &Embeddings) -> usize {
    k.min(a.len()).min(b.len()).max(1)
}

#[derive(Clone, Debug, Serialize)]
pub struct LambdaCandidate {
    pub lambda: f64,
    /// Validation P@1 (CSLS), when validation ran.
    pub val_p1: Option<f64>,
    pub cost: f64,
    pub iterations: usize,
    pub termination: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct EdgeSummary {
    pub src: String,
    pub tgt: String,
    pub pairs: usize,
    pub train_pairs: usize,
    pub val_pairs: usize,
    /// Pairs with a word missing from either vocabulary.
    pub dropped_pairs: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct TrainReport {
    pub candidates: Vec<LambdaCandidate>,
    pub selected_lambda: f64,
    /// Why validation was skipped, if it was.
    pub selection_note: Option<String>,
    pub final_cost: f64,
    pub grad_norm: f64,
    pub iterations: usize,
    pub termination: String,
    pub cost_history: Vec<f64>,
    pub edges: Vec<EdgeSummary>,
    pub elapsed_secs: f64,
}

struct Selection {
    lambda: f64,
    candidates: Vec<LambdaCandidate>,
    note: Option<String>,
}

/// Train every λ concurrently, score each on validation and pick the best
/// (first in grid order on ties).
fn select_lambda<F, S>(lambdas: &[f64], can_validate: Option<String>, fit: F, score: S) -> Result<Selection>
where
    F: Fn(f64) -> Result<(GeommParams, SolverReport)> + Sync,
    S: Fn(&GeommParams) -> Result<f64> + Sync,
{
    if lambdas.len() == 1 || can_validate.is_some() {
        let note = can_validate.or_else(|| Some("single λ; validation skipped".into()));
        return Ok(Selection {
            lambda: lambdas[0],
            candidates: vec![],
            note,
        });
    }
    let candidates = lambdas
        .par_iter()
        .map(|&lambda| {
            let (params, rep) = fit(lambda)?;
            let p1 = score(&params)?;
            log::info!("lambda={lambda} val_p1={:.4} iterations={}", p1, rep.iterations);
            Ok(LambdaCandidate {
                lambda,
                val_p1: Some(p1),
                cost: rep.cost,
                iterations: rep.iterations,
                termination: rep.termination.as_str().into(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut best = 0;
    for (i, c) in candidates.iter().enumerate() {
        if c.val_p1 > candidates[best].val_p1 {
            best = i;
        }
    }
    Ok(Selection {
        lambda: candidates[best].lambda,
        candidates,
        note: None,
    })
}

/// Minimize one variant's bilingual objective from the identity start.
pub fn fit_bilingual(
    src: &str,
    tgt: &str,
    data: &DictionaryData,
    lambda: f64,
    variant: ModelVariant,
    solver: &SolverOptions,
) -> Result<(GeommParams, SolverReport)> {
    let problem = VariantProblem { variant, data, lambda };
    let rep = rcg_minimize(&problem, variant.initial_point(data.dim()), solver)?;
    let params = variant.to_params(&rep.point, src, tgt)?;
    Ok((params, rep))
}

/// Validation P@1 with CSLS in the latent space.
pub fn validation_p1(
    params: &GeommParams,
    src: &str,
    tgt: &str,
    src_emb: &Embeddings,
    tgt_emb: &Embeddings,
    val: &[WordPair],
    csls_k: usize,
) -> Result<f64> {
    let r = Retriever::build(
        params,
        src,
        tgt,
        src_emb,
        tgt_emb,
        RetrievalMode::Csls,
        InferenceSpace::Latent,
        clamp_k(csls_k, src_emb, tgt_emb),
    )?;
    Ok(evaluate_bli_with(&r, val)?.p1)
}

fn covered(pairs: &[WordPair], a: &Embeddings, b: &Embeddings) -> Vec<WordPair> {
    pairs
        .iter()
        .filter(|(s, t)| a.contains(s) && b.contains(t))
        .cloned()
        .collect()
}

/// λ selected on a held-out split of a bilingual dictionary; returns the
/// selection without retraining.
#[allow(clippy::too_many_arguments)]
pub(crate) fn select_bilingual_lambda(
    src: &str,
    tgt: &str,
    src_emb: &Embeddings,
    tgt_emb: &Embeddings,
    train: &[WordPair],
    val: &[WordPair],
    config: &TrainConfig,
) -> Result<(f64, Vec<LambdaCandidate>, Option<String>)> {
    let train_cov = covered(train, src_emb, tgt_emb);
    let val_cov = covered(val, src_emb, tgt_emb);
    let skip = if config.lambdas.len() == 1 {
        None
    } else if train_cov.is_empty() {
        Some("training split is empty; using the first λ".to_string())
    } else if val_cov.is_empty() {
        Some("validation split is empty; using the first λ".to_string())
    } else {
        None
    };
    let data = if skip.is_none() && config.lambdas.len() > 1 {
        Some(DictionaryData::from_pairs(&train_cov, src_emb, tgt_emb)?.0)
    } else {
        None
    };
    let sel = select_lambda(
        &config.lambdas,
        skip,
        |l| fit_bilingual(src, tgt, data.as_ref().unwrap(), l, config.variant, &config.solver),
        |p| validation_p1(p, src, tgt, src_emb, tgt_emb, &val_cov, config.csls_k),
    )?;
    if let Some(n) = &sel.note {
        log::info!("{n}");
    }
    Ok((sel.lambda, sel.candidates, sel.note))
}

/// Supervised bilingual training: hash split, λ selection by validation
/// P@1 (CSLS), then a final fit on the full dictionary.
pub fn train_bilingual(
    src: &str,
    tgt: &str,
    src_emb: &Embeddings,
    tgt_emb: &Embeddings,
    pairs: &[WordPair],
    config: &TrainConfig,
) -> Result<(GeommParams, TrainReport)> {
    config.validate()?;
    let start = Instant::now();
    let (full, dropped) = DictionaryData::from_pairs(pairs, src_emb, tgt_emb)?;
    if dropped > 0 {
        log::warn!("{dropped} of {} dictionary pairs dropped (out of vocabulary)", pairs.len());
    }
    let (train, val) = split_dictionary(pairs, config.val_frac, config.seed);
    let (lambda, candidates, note) = select_bilingual_lambda(src, tgt, src_emb, tgt_emb, &train, &val, config)?;
    let (params, rep) = fit_bilingual(src, tgt, &full, lambda, config.variant, &config.solver)?;
    let report = TrainReport {
        candidates,
        selected_lambda: lambda,
        selection_note: note,
        final_cost: rep.cost,
        grad_norm: rep.grad_norm,
        iterations: rep.iterations,
        termination: rep.termination.as_str().into(),
        cost_history: rep.cost_history,
        edges: vec![EdgeSummary {
            src: src.into(),
            tgt: tgt.into(),
            pairs: pairs.len(),
            train_pairs: train.len(),
            val_pairs: val.len(),
            dropped_pairs: dropped,
        }],
        elapsed_secs: start.elapsed().as_secs_f64(),
    };
    Ok((params, report))
}

/// Connected components of an undirected graph, each sorted, listed in
/// order of their smallest member.
pub fn components(languages: &[String], edges: &[(String, String)]) -> Vec<Vec<String>> {
    let idx: HashMap<&str, usize> = languages.iter().enumerate().map(|(i, l)| (l.as_str(), i)).collect();
    let mut parent: Vec<usize> = (0..languages.len()).collect();
    fn find(p: &mut [usize], mut i: usize) -> usize {
        while p[i] != i {
            p[i] = p[p[i]];
            i = p[i];
        }
        i
    }
    for (a, b) in edges {
        if let (Some(&i), Some(&j)) = (idx.get(a.as_str()), idx.get(b.as_str())) {
            let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
            parent[ri] = rj;
        }
    }
    let mut groups: HashMap<usize, Vec<String>> = HashMap::new();
    for i in 0..languages.len() {
        let r = find(&mut parent, i);
        groups.entry(r).or_default().push(languages[i].clone());
    }
    let mut out: Vec<Vec<String>> = groups.into_values().collect();
    for g in &mut out {
        g.sort();
    }
    out.sort();
    out
}

/// Languages as nodes, dictionaries as undirected edges.
pub struct LanguageGraph {
    languages: Vec<String>,
    edges: Vec<Edge>,
}

impl LanguageGraph {
    /// Rejects unknown languages, self-loops, repeated unordered pairs and
    /// disconnected graphs.
    pub fn new(languages: Vec<String>, edges: Vec<Edge>) -> Result<Self> {
        let ends: Vec<(String, String)> = edges.iter().map(|e| (e.src.clone(), e.tgt.clone())).collect();
        check_graph(&languages, &ends)?;
        Ok(LanguageGraph { languages, edges })
    }

    pub fn languages(&self) -> &[String] {
        &self.languages
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }
}

pub fn check_graph(languages: &[String], edges: &[(String, String)]) -> Result<()> {
    let mut known: HashSet<&str> = HashSet::new();
    for l in languages {
        if !known.insert(l) {
            return Err(Error::DuplicateLanguage(l.clone()));
        }
    }
    let mut seen = HashSet::new();
    for (a, b) in edges {
        for l in [a, b] {
            if !known.contains(l.as_str()) {
                return Err(Error::UnknownLanguage(l.clone()));
            }
        }
        if a == b {
            return Err(Error::SelfLoop(a.clone()));
        }
        let key = if a < b { (a, b) } else { (b, a) };
        if !seen.insert(key) {
            return Err(Error::DuplicateEdge(a.clone(), b.clone()));
        }
    }
    let comps = components(languages, edges);
    if comps.len() > 1 {
        return Err(Error::Disconnected(comps));
    }
    Ok(())
}

/// A dictionary between two languages.
#[derive(Clone, Debug)]
pub struct DictionaryEdge {
    pub src: String,
    pub tgt: String,
    pub pairs: Vec<WordPair>,
}

fn edge_data(
    dicts: &[DictionaryEdge],
    split: &[Vec<WordPair>],
    embeddings: &HashMap<String, Embeddings>,
) -> Result<Vec<Edge>> {
    let mut edges = Vec::new();
    for (d, pairs) in dicts.iter().zip(split) {
        let cov = covered(pairs, &embeddings[&d.src], &embeddings[&d.tgt]);
        if cov.is_empty() {
            continue;
        }
        let (data, _) = DictionaryData::from_pairs(&cov, &embeddings[&d.src], &embeddings[&d.tgt])?;
        edges.push(Edge {
            src: d.src.clone(),
            tgt: d.tgt.clone(),
            data,
        });
    }
    Ok(edges)
}

/// Minimize the multilingual objective from the identity start.
pub fn fit_multilingual(
    languages: &[String],
    edges: &[Edge],
    lambda: f64,
    solver: &SolverOptions,
) -> Result<(GeommParams, SolverReport)> {
    let d = edges
        .first()
        .ok_or_else(|| Error::EmptyDictionary("no usable dictionary edge".into()))?
        .data
        .dim();
    let init = ProductPoint::new(
        languages.iter().map(|_| OrthPoint::identity(d)).collect(),
        Some(SpdPoint::identity(d)),
        vec![],
    )?;
    let problem = MultilingualProblem { languages, edges, lambda };
    let rep = rcg_minimize(&problem, init, solver)?;
    let params = GeommParams::from_point(languages.to_vec(), rep.point.clone())?;
    Ok((params, rep))
}

/// Joint training of one rotation per language and a shared metric. λ is
/// selected on validation splits pooled across edges (micro-averaged P@1).
/// Languages are ordered by name, so edge order does not affect the result.
pub fn train_multilingual(
    embeddings: &HashMap<String, Embeddings>,
    dicts: &[DictionaryEdge],
    config: &TrainConfig,
) -> Result<(GeommParams, TrainReport)> {
    config.validate()?;
    if config.variant != ModelVariant::Full {
        return Err(Error::VariantMismatch {
            variant: config.variant.name().into(),
            what: "multilingual training supports only the full model".into(),
        });
    }
    let start = Instant::now();
    let languages: Vec<String> = dicts
        .iter()
        .flat_map(|d| [d.src.clone(), d.tgt.clone()])
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    for l in &languages {
        if !embeddings.contains_key(l) {
            return Err(Error::UnknownLanguage(l.clone()));
        }
    }
    let ends: Vec<(String, String)> = dicts.iter().map(|d| (d.src.clone(), d.tgt.clone())).collect();
    check_graph(&languages, &ends)?;

    let full: Vec<Vec<WordPair>> = dicts.iter().map(|d| d.pairs.clone()).collect();
    let mut summaries = Vec::new();
    for d in dicts {
        let n_cov = covered(&d.pairs, &embeddings[&d.src], &embeddings[&d.tgt]).len();
        if n_cov == 0 {
            return Err(Error::EmptyDictionary(format!("{}-{}", d.src, d.tgt)));
        }
        if n_cov < d.pairs.len() {
            log::warn!("{}-{}: {} pairs dropped (out of vocabulary)", d.src, d.tgt, d.pairs.len() - n_cov);
        }
        summaries.push(EdgeSummary {
            src: d.src.clone(),
            tgt: d.tgt.clone(),
            pairs: d.pairs.len(),
            train_pairs: 0,
            val_pairs: 0,
            dropped_pairs: d.pairs.len() - n_cov,
        });
    }
    let full_edges = LanguageGraph::new(languages.clone(), edge_data(dicts, &full, embeddings)?)?;

    let splits: Vec<(Vec<WordPair>, Vec<WordPair>)> = dicts
        .iter()
        .map(|d| split_dictionary(&d.pairs, config.val_frac, config.seed))
        .collect();
    for (s, (tr, va)) in summaries.iter_mut().zip(&splits) {
        s.train_pairs = tr.len();
        s.val_pairs = va.len();
    }
    let train_split: Vec<Vec<WordPair>> = splits.iter().map(|(t, _)| t.clone()).collect();
    let val_split: Vec<Vec<WordPair>> = dicts
        .iter()
        .zip(&splits)
        .map(|(d, (_, v))| covered(v, &embeddings[&d.src], &embeddings[&d.tgt]))
        .collect();
    let need_val = config.lambdas.len() > 1;
    let train_edges = if need_val { edge_data(dicts, &train_split, embeddings)? } else { vec![] };
    let skip = if !need_val {
        None
    } else if train_edges.is_empty() {
        Some("training split is empty; using the first λ".to_string())
    } else if val_split.iter().all(|v| v.is_empty()) {
        Some("validation split is empty; using the first λ".to_string())
    } else {
        None
    };
    let score = |p: &GeommParams| -> Result<f64> {
        let (mut hits, mut total) = (0.0, 0usize);
        for (d, v) in dicts.iter().zip(&val_split) {
            if v.is_empty() {
                continue;
            }
            let (es, et) = (&embeddings[&d.src], &embeddings[&d.tgt]);
            let r = Retriever::build(
                p,
                &d.src,
                &d.tgt,
                es,
                et,
                RetrievalMode::Csls,
                InferenceSpace::Latent,
                clamp_k(config.csls_k, es, et),
            )?;
            let rep = evaluate_bli_with(&r, v)?;
            hits += rep.p1 * rep.evaluated as f64;
            total += rep.evaluated;
        }
        Ok(hits / total as f64)
    };
    let sel = select_lambda(
        &config.lambdas,
        skip,
        |l| fit_multilingual(&languages, &train_edges, l, &config.solver),
        score,
    )?;
    let (params, rep) = fit_multilingual(&languages, full_edges.edges(), sel.lambda, &config.solver)?;
    let report = TrainReport {
        candidates: sel.candidates,
        selected_lambda: sel.lambda,
        selection_note: sel.note,
        final_cost: rep.cost,
        grad_norm: rep.grad_norm,
        iterations: rep.iterations,
        termination: rep.termination.as_str().into(),
        cost_history: rep.cost_history,
        edges: summaries,
        elapsed_secs: start.elapsed().as_secs_f64(),
    };
    Ok((params, report))
}

/// How each bilingual leg of a one-hop strategy is learned.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum BilingualMethod {
    Geomm,
    Procrustes,
}

/// Learn one bilingual model with the given method.
pub fn train_method(
    method: BilingualMethod,
    src: &str,
    tgt: &str,
    src_emb: &Embeddings,
    tgt_emb: &Embeddings,
    pairs: &[WordPair],
    config: &TrainConfig,
) -> Result<GeommParams> {
    match method {
        BilingualMethod::Geomm => Ok(train_bilingual(src, tgt, src_emb, tgt_emb, pairs, config)?.0),
        BilingualMethod::Procrustes => {
            let (data, _) = DictionaryData::from_pairs(pairs, src_emb, tgt_emb)?;
            procrustes_from_dictionary(&data)?.to_params(src, tgt)
        }
    }
}

/// Source, pivot and target languages with the two training dictionaries
/// and a direct source–target test dictionary.
#[derive(Clone, Copy)]
pub struct OneHopTask<'a> {
    pub src: &'a str,
    pub pvt: &'a str,
    pub tgt: &'a str,
    pub src_emb: &'a Embeddings,
    pub pvt_emb: &'a Embeddings,
    pub tgt_emb: &'a Embeddings,
    pub src_pvt: &'a [WordPair],
    pub pvt_tgt: &'a [WordPair],
    pub test: &'a [WordPair],
}

impl OneHopTask<'_> {
    fn check(&self) -> Result<()> {
        if self.src_pvt.is_empty() {
            return Err(Error::EmptyDictionary(format!("{}-{}", self.src, self.pvt)));
        }
        if self.pvt_tgt.is_empty() {
            return Err(Error::EmptyDictionary(format!("{}-{}", self.pvt, self.tgt)));
        }
        Ok(())
    }

    fn legs(&self, method: BilingualMethod, config: &TrainConfig) -> Result<(GeommParams, GeommParams)> {
        self.check()?;
        let (a, b) = rayon::join(
            || train_method(method, self.src, self.pvt, self.src_emb, self.pvt_emb, self.src_pvt, config),
            || train_method(method, self.pvt, self.tgt, self.pvt_emb, self.tgt_emb, self.pvt_tgt, config),
        );
        Ok((a?, b?))
    }
}

/// Two independent models composed as `W₂W₁x`; retrieval in the target's
/// original space.
pub fn one_hop_composition(
    method: BilingualMethod,
    task: &OneHopTask,
    config: &TrainConfig,
    mode: RetrievalMode,
) -> Result<BliReport> {
    let (p1, p2) = task.legs(method, config)?;
    let w = p2.compose_transform(task.pvt, task.tgt)? * p1.compose_transform(task.src, task.pvt)?;
    let mapped: Mat = w * task.src_emb.matrix();
    let r = Retriever::from_mapped(
        task.src_emb.vocab(),
        mapped,
        task.tgt_emb,
        mode,
        clamp_k(config.csls_k, task.src_emb, task.tgt_emb),
    )?;
    evaluate_bli_with(&r, task.test)
}

/// Translate to the nearest pivot word first, then translate that word.
pub fn one_hop_pipeline(
    method: BilingualMethod,
    task: &OneHopTask,
    config: &TrainConfig,
    mode: RetrievalMode,
) -> Result<BliReport> {
    let (p1, p2) = task.legs(method, config)?;
    let r1 = Retriever::build(
        &p1,
        task.src,
        task.pvt,
        task.src_emb,
        task.pvt_emb,
        mode,
        InferenceSpace::Latent,
        clamp_k(config.csls_k, task.src_emb, task.pvt_emb),
    )?;
    let r2 = Retriever::build(
        &p2,
        task.pvt,
        task.tgt,
        task.pvt_emb,
        task.tgt_emb,
        mode,
        InferenceSpace::Latent,
        clamp_k(config.csls_k, task.pvt_emb, task.tgt_emb),
    )?;
    evaluate_ranked(&r1.source, &r2.target, task.test, |queries| {
        let first = r1.rank(queries, 1);
        let pivots: Vec<Option<usize>> = first
            .iter()
            .map(|c| c.first().and_then(|&(p, _)| r2.source.get(&r1.target.vocab()[p])))
            .collect();
        let known: Vec<usize> = pivots.iter().flatten().copied().collect();
        let mut ranked = r2.rank(&known, 10).into_iter();
        pivots
            .iter()
            .map(|p| match p {
                Some(_) => ranked.next().unwrap().into_iter().map(|(i, _)| i).collect(),
                None => vec![],
            })
            .collect()
    })
}

/// Result of [`make_disjoint_pivot`].
#[derive(Clone, Debug, PartialEq)]
pub struct DisjointPivot {
    /// Source–pivot pairs kept.
    pub first: Vec<WordPair>,
    /// Pivot–target pairs kept.
    pub second: Vec<WordPair>,
    /// Pivot words that occurred in both inputs.
    pub shared: usize,
}

/// Assign every pivot word shared by `src_pvt` (pivot on the right) and
/// `pvt_tgt` (pivot on the left) to one of the two dictionaries at random
/// and drop it from the other.
pub fn make_disjoint_pivot(src_pvt: &[WordPair], pvt_tgt: &[WordPair], seed: u64) -> DisjointPivot {
    let left: BTreeSet<&str> = src_pvt.iter().map(|(_, p)| p.as_str()).collect();
    let right: BTreeSet<&str> = pvt_tgt.iter().map(|(p, _)| p.as_str()).collect();
    let mut rng = crate::synthetic::rng(seed);
    let mut to_first = HashSet::new();
    let mut to_second = HashSet::new();
    for w in left.intersection(&right) {
        if rng.random_bool(0.5) {
            to_first.insert(*w);
        } else {
            to_second.insert(*w);
        }
    }
    DisjointPivot {
        first: src_pvt.iter().filter(|(_, p)| !to_second.contains(p.as_str())).cloned().collect(),
        second: pvt_tgt.iter().filter(|(p, _)| !to_first.contains(p.as_str())).cloned().collect(),
        shared: to_first.len() + to_second.len(),
    }
}

/// Joint three-language model; `src → tgt` evaluated in the shared latent
/// space. With `disjoint_seed`, the two dictionaries are first made to share
/// no pivot word.
pub fn one_hop_joint(
    task: &OneHopTask,
    config: &TrainConfig,
    mode: RetrievalMode,
    disjoint_seed: Option<u64>,
) -> Result<(BliReport, GeommParams)> {
    task.check()?;
    let (first, second) = match disjoint_seed {
        Some(seed) => {
            let d = make_disjoint_pivot(task.src_pvt, task.pvt_tgt, seed);
            (d.first, d.second)
        }
        None => (task.src_pvt.to_vec(), task.pvt_tgt.to_vec()),
    };
    let embeddings: HashMap<String, Embeddings> = [
        (task.src.to_string(), task.src_emb.clone()),
        (task.pvt.to_string(), task.pvt_emb.clone()),
        (task.tgt.to_string(), task.tgt_emb.clone()),
    ]
    .into();
    let dicts = [
        DictionaryEdge { src: task.src.into(), tgt: task.pvt.into(), pairs: first },
        DictionaryEdge { src: task.pvt.into(), tgt: task.tgt.into(), pairs: second },
    ];
    let (params, _) = train_multilingual(&embeddings, &dicts, config)?;
    let r = Retriever::build(
        &params,
        task.src,
        task.tgt,
        task.src_emb,
        task.tgt_emb,
        mode,
        InferenceSpace::Latent,
        clamp_k(config.csls_k, task.src_emb, task.tgt_emb),
    )?;
    Ok((evaluate_bli_with(&r, task.test)?, params))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthetic::{index_dictionary, planted_multilingual, planted_pair};

    fn quick(lambdas: &[f64]) -> TrainConfig {
        TrainConfig {
            lambdas: lambdas.to_vec(),
            ..TrainConfig::default()
        }
    }

    #[test]
    fn split_is_by_source_word_and_reproducible() {
        let pairs: Vec<WordPair> = (0..200)
            .flat_map(|i| [(format!("w{i}"), "a".into()), (format!("w{i}"), "b".into())])
            .collect();
        let (tr, va) = split_dictionary(&pairs, 0.2, 7);
        assert_eq!(tr.len() + va.len(), pairs.len());
        assert!(va.len() > 40 && va.len() < 120, "{}", va.len());
        let trs: HashSet<_> = tr.iter().map(|p| &p.0).collect();
        assert!(va.iter().all(|p| !trs.contains(&p.0)));
        assert_eq!(split_dictionary(&pairs, 0.2, 7), (tr, va));
    }

    #[test]
    fn bilingual_planted_rotation() {
        let p = planted_pair(5, 10, 120);
        let dict = index_dictionary("s", "t", 0..100);
        let (params, rep) = train_bilingual("s", "t", &p.src, &p.tgt, &dict, &quick(&[10.0, 100.0])).unwrap();
        assert_eq!(rep.candidates.len(), 2);
        assert!(rep.candidates.iter().all(|c| c.val_p1 == Some(1.0)));
        assert_eq!(rep.selected_lambda, 10.0);
        let held = index_dictionary("s", "t", 100..120);
        for mode in [RetrievalMode::Nn, RetrievalMode::Csls] {
            let r = Retriever::build(&params, "s", "t", &p.src, &p.tgt, mode, InferenceSpace::Latent, 10).unwrap();
            assert_eq!(evaluate_bli_with(&r, &held).unwrap().p1, 1.0);
        }
    }

    #[test]
    fn single_lambda_skips_validation() {
        let p = planted_pair(6, 6, 40);
        let dict = index_dictionary("s", "t", 0..30);
        let (_, rep) = train_bilingual("s", "t", &p.src, &p.tgt, &dict, &quick(&[100.0])).unwrap();
        assert!(rep.candidates.is_empty());
        assert_eq!(rep.selected_lambda, 100.0);
        assert!(rep.selection_note.is_some());
    }

    #[test]
    fn dropped_pairs_are_counted() {
        let p = planted_pair(6, 6, 40);
        let mut dict = index_dictionary("s", "t", 0..30);
        dict.push(("zz".into(), "t0".into()));
        let (_, rep) = train_bilingual("s", "t", &p.src, &p.tgt, &dict, &quick(&[100.0])).unwrap();
        assert_eq!(rep.edges[0].dropped_pairs, 1);
        let none = vec![("zz".to_string(), "yy".to_string())];
        assert!(matches!(
            train_bilingual("s", "t", &p.src, &p.tgt, &none, &quick(&[100.0])),
            Err(Error::EmptyDictionary(_))
        ));
    }

    #[test]
    fn graph_checks() {
        let langs: Vec<String> = ["a", "b", "c", "d"].iter().map(|s| s.to_string()).collect();
        let e = |a: &str, b: &str| (a.to_string(), b.to_string());
        match check_graph(&langs, &[e("a", "b"), e("c", "d")]) {
            Err(Error::Disconnected(c)) => assert_eq!(c, vec![vec!["a", "b"], vec!["c", "d"]]),
            other => panic!("{other:?}"),
        }
        assert!(matches!(check_graph(&langs, &[e("a", "a")]), Err(Error::SelfLoop(_))));
        assert!(matches!(
            check_graph(&langs[..2], &[e("a", "b"), e("b", "a")]),
            Err(Error::DuplicateEdge(..))
        ));
        assert!(check_graph(&langs, &[e("a", "b"), e("b", "c"), e("d", "c")]).is_ok());
    }

    fn planted_three() -> (HashMap<String, Embeddings>, Vec<DictionaryEdge>) {
        let m = planted_multilingual(9, &["a", "b", "c"], 8, 80);
        let emb: HashMap<String, Embeddings> = m.languages.iter().cloned().zip(m.embeddings).collect();
        let dicts = vec![
            DictionaryEdge { src: "a".into(), tgt: "b".into(), pairs: index_dictionary("a", "b", 0..40) },
            DictionaryEdge { src: "b".into(), tgt: "c".into(), pairs: index_dictionary("b", "c", 20..60) },
        ];
        (emb, dicts)
    }

    #[test]
    fn multilingual_recovers_unlinked_pair() {
        let (emb, dicts) = planted_three();
        let (params, rep) = train_multilingual(&emb, &dicts, &quick(&[10.0])).unwrap();
        assert_eq!(params.languages(), &["a", "b", "c"]);
        assert!(rep.final_cost.is_finite());
        let test = index_dictionary("a", "c", 0..80);
        let r = Retriever::build(&params, "a", "c", &emb["a"], &emb["c"], RetrievalMode::Csls, InferenceSpace::Latent, 10)
            .unwrap();
        assert_eq!(evaluate_bli_with(&r, &test).unwrap().p1, 1.0);
    }

    #[test]
    fn multilingual_edge_order_invariant() {
        let (emb, mut dicts) = planted_three();
        let (_, a) = train_multilingual(&emb, &dicts, &quick(&[10.0])).unwrap();
        dicts.reverse();
        let (_, b) = train_multilingual(&emb, &dicts, &quick(&[10.0])).unwrap();
        assert!((a.final_cost - b.final_cost).abs() <= 1e-8 * a.final_cost.abs().max(1.0));
    }

    #[test]
    fn multilingual_rejects_disconnected() {
        let (mut emb, mut dicts) = planted_three();
        let m = planted_multilingual(10, &["x", "y"], 8, 10);
        emb.insert("x".into(), m.embeddings[0].clone());
        emb.insert("y".into(), m.embeddings[1].clone());
        dicts.push(DictionaryEdge { src: "x".into(), tgt: "y".into(), pairs: index_dictionary("x", "y", 0..5) });
        assert!(matches!(train_multilingual(&emb, &dicts, &quick(&[10.0])), Err(Error::Disconnected(_))));
    }

    #[test]
    fn disjoint_pivot_shares_nothing() {
        let d1 = index_dictionary("a", "b", 0..30);
        let d2 = index_dictionary("b", "c", 10..50);
        let out = make_disjoint_pivot(&d1, &d2, 3);
        assert_eq!(out.shared, 20);
        let left: HashSet<_> = out.first.iter().map(|p| p.1.clone()).collect();
        assert!(out.second.iter().all(|p| !left.contains(&p.0)));
        assert_eq!(out.first.len() + out.second.len(), 50);
        assert_eq!(make_disjoint_pivot(&d1, &d2, 3), out);
    }

    #[test]
    fn one_hop_strategies_on_planted_system() {
        let m = planted_multilingual(11, &["a", "b", "c"], 8, 60);
        let d1 = index_dictionary("a", "b", 0..40);
        let d2 = index_dictionary("b", "c", 20..60);
        let test = index_dictionary("a", "c", 0..60);
        let task = OneHopTask {
            src: "a",
            pvt: "b",
            tgt: "c",
            src_emb: &m.embeddings[0],
            pvt_emb: &m.embeddings[1],
            tgt_emb: &m.embeddings[2],
            src_pvt: &d1,
            pvt_tgt: &d2,
            test: &test,
        };
        let cfg = quick(&[10.0]);
        for method in [BilingualMethod::Geomm, BilingualMethod::Procrustes] {
            assert_eq!(one_hop_composition(method, &task, &cfg, RetrievalMode::Csls).unwrap().p1, 1.0);
            assert_eq!(one_hop_pipeline(method, &task, &cfg, RetrievalMode::Csls).unwrap().p1, 1.0);
        }
        let (rep, params) = one_hop_joint(&task, &cfg, RetrievalMode::Csls, Some(1)).unwrap();
        assert_eq!(rep.p1, 1.0);
        // The composed joint map scores pairs exactly as latent inner products.
        let w = params.compose_transform("a", "c").unwrap();
        let composed = task.tgt_emb.matrix().transpose() * &w * task.src_emb.matrix();
        let ls = crate::retrieval::to_latent(&params, "a", task.src_emb.matrix()).unwrap();
        let lt = crate::retrieval::to_latent(&params, "c", task.tgt_emb.matrix()).unwrap();
        assert!((composed - lt.transpose() * ls).amax() < 1e-10);
    }
}
