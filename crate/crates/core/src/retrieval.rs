//! Latent-space mapping, nearest-neighbour / CSLS retrieval and evaluation.
//!
//! Words of language `i` are mapped to `B^{½} U_iᵀ x` and normalized; in that
//! space the cosine of two words equals their learned similarity up to the
//! normalization. CSLS scores a pair as `2·cos(x, z) − r_T(x) − r_S(z)`,
//! where `r_T(x)` is the mean cosine of `x` to its `k` nearest neighbours on
//! the other side. Penalties are computed on the normalized vectors.
//!
//! Rankings break ties by ascending vocabulary index.

use std::cmp::Ordering;
use std::collections::HashMap;

use rayon::prelude::*;
use serde::Serialize;

use crate::dataio::{Embeddings, ScoredPair, WordPair};
use crate::error::{Error, Result};
use crate::linalg::{self, Mat};
use crate::model::GeommParams;

/// Default CSLS neighbourhood size.
pub const DEFAULT_CSLS_K: usize = 10;

/// Query rows scored per block; bounds the size of dense score blocks.
const BLOCK: usize = 512;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum RetrievalMode {
    /// Plain cosine nearest neighbour.
    #[value(name = "nn")]
    Nn,
    /// Cross-domain similarity local scaling.
    #[default]
    #[value(name = "csls")]
    Csls,
}

/// Where similarities are computed.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum InferenceSpace {
    /// Shared latent space `B^{½} U_iᵀ x`.
    #[default]
    #[value(name = "latent")]
    Latent,
    /// Map source vectors with `W = U_t B U_sᵀ` and compare in the target's
    /// original space.
    #[value(name = "target", alias = "target_space")]
    Target,
}

/// `B^{½} U_langᵀ X` (columns not normalized).
pub fn to_latent(params: &GeommParams, lang: &str, x: &Mat) -> Result<Mat> {
    let u = params.rotation(lang)?.matrix();
    if x.nrows() != params.dim() {
        return Err(Error::dims(format!("{} rows", params.dim()), format!("{} rows", x.nrows())));
    }
    let root = linalg::spd_sqrt(params.metric().matrix());
    Ok(root * u.tr_mul(x))
}

/// Unit-normalized vectors of one language in the comparison space, with
/// optional cached CSLS penalties against an opposing index.
#[derive(Clone, Debug)]
pub struct RetrievalIndex {
    vocab: Vec<String>,
    lookup: HashMap<String, usize>,
    vectors: Mat,
    penalty: Option<Vec<f64>>,
    csls_k: Option<usize>,
}

impl RetrievalIndex {
    /// Normalize columns; words whose vector has zero norm are dropped with
    /// a warning.
    pub fn from_vectors(vocab: Vec<String>, mut vectors: Mat) -> Result<Self> {
        if vocab.len() != vectors.ncols() {
            return Err(Error::dims(vocab.len(), vectors.ncols()));
        }
        let zero = linalg::normalize_columns(&mut vectors);
        let (vocab, vectors) = if zero.is_empty() {
            (vocab, vectors)
        } else {
            for &j in &zero {
                log::warn!("word `{}` has a zero-norm vector; excluded from the index", vocab[j]);
            }
            let keep: Vec<usize> = (0..vocab.len()).filter(|j| !zero.contains(j)).collect();
            (
                keep.iter().map(|&j| vocab[j].clone()).collect(),
                vectors.select_columns(&keep),
            )
        };
        let lookup = vocab.iter().enumerate().map(|(i, w)| (w.clone(), i)).collect();
        Ok(RetrievalIndex {
            vocab,
            lookup,
            vectors,
            penalty: None,
            csls_k: None,
        })
    }

    /// Index of `emb` in the latent space of `lang`.
    pub fn latent(params: &GeommParams, lang: &str, emb: &Embeddings) -> Result<Self> {
        Self::from_vectors(emb.vocab().to_vec(), to_latent(params, lang, emb.matrix())?)
    }

    /// Cache CSLS penalties: for every word, the mean cosine to its `k`
    /// nearest neighbours in `opposing`.
    pub fn with_penalties(mut self, opposing: &RetrievalIndex, k: usize) -> Result<Self> {
        if k == 0 || k > opposing.len() {
            return Err(Error::InvalidConfig(format!(
                "CSLS k = {k} must lie in [1, {}]",
                opposing.len()
            )));
        }
        self.penalty = Some(csls_penalties(&self.vectors, &opposing.vectors, k));
        self.csls_k = Some(k);
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.vocab.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vocab.is_empty()
    }

    pub fn vocab(&self) -> &[String] {
        &self.vocab
    }

    pub fn vectors(&self) -> &Mat {
        &self.vectors
    }

    pub fn get(&self, word: &str) -> Option<usize> {
        self.lookup.get(word).copied()
    }

    pub fn penalties(&self) -> Option<&[f64]> {
        self.penalty.as_deref()
    }

    pub fn csls_k(&self) -> Option<usize> {
        self.csls_k
    }

    /// Keep the first `n` words (and their penalties, if any).
    pub fn truncated(&self, n: usize) -> RetrievalIndex {
        let n = n.min(self.len());
        let vocab = self.vocab[..n].to_vec();
        RetrievalIndex {
            lookup: vocab.iter().enumerate().map(|(i, w)| (w.clone(), i)).collect(),
            vocab,
            vectors: self.vectors.columns(0, n).into_owned(),
            penalty: self.penalty.as_ref().map(|p| p[..n].to_vec()),
            csls_k: self.csls_k,
        }
    }
}

/// Build an index for `lang`; penalties are computed when `opposing` is given.
pub fn build_index(
    params: &GeommParams,
    lang: &str,
    emb: &Embeddings,
    opposing: Option<&RetrievalIndex>,
    k: usize,
) -> Result<RetrievalIndex> {
    let idx = RetrievalIndex::latent(params, lang, emb)?;
    match opposing {
        Some(o) => idx.with_penalties(o, k),
        None => Ok(idx),
    }
}

/// Mean of the `k` largest cosines of every column of `queries` against the
/// columns of `opposing` (both assumed unit-norm).
pub fn csls_penalties(queries: &Mat, opposing: &Mat, k: usize) -> Vec<f64> {
    let n = queries.ncols();
    let starts: Vec<usize> = (0..n).step_by(BLOCK).collect();
    starts
        .par_iter()
        .flat_map_iter(|&start| {
            let len = BLOCK.min(n - start);
            let sims = queries.columns(start, len).tr_mul(opposing);
            (0..len)
                .map(|r| {
                    let mut row: Vec<f64> = sims.row(r).iter().copied().collect();
                    let kth = k - 1;
                    row.select_nth_unstable_by(kth, |a, b| b.total_cmp(a));
                    row[..k].iter().sum::<f64>() / k as f64
                })
                .collect::<Vec<_>>()
        })
        .collect()
}

/// `2·cos − r_query − r_target`.
pub fn csls_score(cos: f64, r_query: f64, r_target: f64) -> f64 {
    2.0 * cos - r_query - r_target
}

fn rank_order(scores: &[f64], a: usize, b: usize) -> Ordering {
    scores[b].total_cmp(&scores[a]).then(a.cmp(&b))
}

/// Indices of the `top_k` highest scores, best first, ties by index.
pub fn top_k(scores: &[f64], top_k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    let k = top_k.min(idx.len());
    if k == 0 {
        return Vec::new();
    }
    if k < idx.len() {
        idx.select_nth_unstable_by(k - 1, |&a, &b| rank_order(scores, a, b));
        idx.truncate(k);
    }
    idx.sort_by(|&a, &b| rank_order(scores, a, b));
    idx
}

/// Source and target indexes prepared in a common comparison space.
#[derive(Clone, Debug)]
pub struct Retriever {
    pub source: RetrievalIndex,
    pub target: RetrievalIndex,
    pub mode: RetrievalMode,
}

impl Retriever {
    /// Pair already-built indexes; CSLS penalties are computed if missing.
    pub fn new(source: RetrievalIndex, target: RetrievalIndex, mode: RetrievalMode, k: usize) -> Result<Self> {
        let (source, target) = if mode == RetrievalMode::Csls && (source.penalty.is_none() || target.penalty.is_none()) {
            let s = source.clone().with_penalties(&target, k)?;
            let t = target.with_penalties(&source, k)?;
            (s, t)
        } else {
            (source, target)
        };
        Ok(Retriever { source, target, mode })
    }

    /// Indexes for translating `src → tgt` under `params`.
    #[allow(clippy::too_many_arguments)]
    pub fn build(
        params: &GeommParams,
        src: &str,
        tgt: &str,
        src_emb: &Embeddings,
        tgt_emb: &Embeddings,
        mode: RetrievalMode,
        space: InferenceSpace,
        k: usize,
    ) -> Result<Self> {
        let (s, t) = match space {
            InferenceSpace::Latent => (
                RetrievalIndex::latent(params, src, src_emb)?,
                RetrievalIndex::latent(params, tgt, tgt_emb)?,
            ),
            InferenceSpace::Target => {
                let w = params.compose_transform(src, tgt)?;
                (
                    RetrievalIndex::from_vectors(src_emb.vocab().to_vec(), w * src_emb.matrix())?,
                    RetrievalIndex::from_vectors(tgt_emb.vocab().to_vec(), tgt_emb.matrix().clone())?,
                )
            }
        };
        Self::new(s, t, mode, k)
    }

    /// Indexes from already-mapped vectors (e.g. a composed pivot map).
    pub fn from_mapped(
        src_vocab: &[String],
        mapped_src: Mat,
        tgt_emb: &Embeddings,
        mode: RetrievalMode,
        k: usize,
    ) -> Result<Self> {
        Self::new(
            RetrievalIndex::from_vectors(src_vocab.to_vec(), mapped_src)?,
            RetrievalIndex::from_vectors(tgt_emb.vocab().to_vec(), tgt_emb.matrix().clone())?,
            mode,
            k,
        )
    }

    /// Scores of the given source rows against every target word.
    pub fn scores(&self, queries: &[usize]) -> Mat {
        let q = self.source.vectors.select_columns(queries);
        let mut s = q.tr_mul(&self.target.vectors);
        if self.mode == RetrievalMode::Csls {
            let rq = self.source.penalty.as_ref().expect("CSLS penalties");
            let rt = self.target.penalty.as_ref().expect("CSLS penalties");
            for (r, &qi) in queries.iter().enumerate() {
                for c in 0..s.ncols() {
                    s[(r, c)] = csls_score(s[(r, c)], rq[qi], rt[c]);
                }
            }
        }
        s
    }

    /// Top-`k` target indices (with scores) for each source row.
    pub fn rank(&self, queries: &[usize], k: usize) -> Vec<Vec<(usize, f64)>> {
        queries
            .par_chunks(BLOCK)
            .flat_map_iter(|chunk| {
                let s = self.scores(chunk);
                (0..chunk.len())
                    .map(|r| {
                        let row: Vec<f64> = s.row(r).iter().copied().collect();
                        top_k(&row, k).into_iter().map(|c| (c, row[c])).collect::<Vec<_>>()
                    })
                    .collect::<Vec<_>>()
            })
            .collect()
    }

    pub fn translate(&self, words: &[String], k: usize) -> Vec<Translation> {
        let known: Vec<(usize, usize)> = words
            .iter()
            .enumerate()
            .filter_map(|(i, w)| self.source.get(w).map(|q| (i, q)))
            .collect();
        let ids: Vec<usize> = known.iter().map(|&(_, q)| q).collect();
        let mut ranked = self.rank(&ids, k).into_iter();
        let mut out: Vec<Translation> = words
            .iter()
            .map(|w| Translation { query: w.clone(), candidates: None })
            .collect();
        for &(i, _) in &known {
            let cands = ranked.next().unwrap();
            out[i].candidates = Some(
                cands
                    .into_iter()
                    .map(|(c, s)| (self.target.vocab[c].clone(), s))
                    .collect(),
            );
        }
        out
    }
}

/// Ranked candidates for one query; `None` if the query is out of vocabulary.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Translation {
    pub query: String,
    pub candidates: Option<Vec<(String, f64)>>,
}

#[allow(clippy::too_many_arguments)]
pub fn translate(
    params: &GeommParams,
    src: &str,
    tgt: &str,
    src_emb: &Embeddings,
    tgt_emb: &Embeddings,
    queries: &[String],
    top_k: usize,
    mode: RetrievalMode,
    space: InferenceSpace,
    csls_k: usize,
) -> Result<Vec<Translation>> {
    let r = Retriever::build(params, src, tgt, src_emb, tgt_emb, mode, space, csls_k)?;
    Ok(r.translate(queries, top_k))
}

/// Precision at 1, 5 and 10 (as fractions) plus coverage.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BliReport {
    pub p1: f64,
    pub p5: f64,
    pub p10: f64,
    /// Distinct source words scored.
    pub evaluated: usize,
    /// Distinct source words skipped because they or all their gold
    /// translations are out of vocabulary.
    pub oov: usize,
}

impl BliReport {
    pub fn coverage(&self) -> f64 {
        let total = self.evaluated + self.oov;
        if total == 0 {
            0.0
        } else {
            self.evaluated as f64 / total as f64
        }
    }
}

/// Precision@{1,5,10}: a source word is correct at rank `r` if any of its
/// gold translations is among the top `r` candidates.
pub fn evaluate_bli_with(retriever: &Retriever, test: &[WordPair]) -> Result<BliReport> {
    evaluate_ranked(&retriever.source, &retriever.target, test, |q| {
        retriever
            .rank(q, 10)
            .into_iter()
            .map(|c| c.into_iter().map(|(i, _)| i).collect())
            .collect()
    })
}

/// Precision@{1,5,10} with a custom ranker that maps source indices to
/// ranked target indices (at least 10 per query where available).
pub fn evaluate_ranked<F>(
    source: &RetrievalIndex,
    target: &RetrievalIndex,
    test: &[WordPair],
    rank: F,
) -> Result<BliReport>
where
    F: FnOnce(&[usize]) -> Vec<Vec<usize>>,
{
    let mut order: Vec<&str> = Vec::new();
    let mut gold: HashMap<&str, Vec<&str>> = HashMap::new();
    for (s, t) in test {
        let e = gold.entry(s.as_str()).or_insert_with(|| {
            order.push(s.as_str());
            Vec::new()
        });
        e.push(t.as_str());
    }
    let mut queries = Vec::new();
    let mut golds = Vec::new();
    let mut oov = 0;
    for s in &order {
        let targets: Vec<usize> = gold[s].iter().filter_map(|t| target.get(t)).collect();
        match source.get(s) {
            Some(q) if !targets.is_empty() => {
                queries.push(q);
                golds.push(targets);
            }
            _ => oov += 1,
        }
    }
    if queries.is_empty() {
        return Err(Error::EmptyEvaluation(format!(
            "none of the {} test source words is covered",
            order.len()
        )));
    }
    let ranked = rank(&queries);
    let mut hits = [0usize; 3];
    for (cands, g) in ranked.iter().zip(&golds) {
        let first = cands.iter().position(|c| g.contains(c));
        if let Some(p) = first {
            for (h, cut) in hits.iter_mut().zip([1, 5, 10]) {
                if p < cut {
                    *h += 1;
                }
            }
        }
    }
    let n = queries.len() as f64;
    Ok(BliReport {
        p1: hits[0] as f64 / n,
        p5: hits[1] as f64 / n,
        p10: hits[2] as f64 / n,
        evaluated: queries.len(),
        oov,
    })
}

#[allow(clippy::too_many_arguments)]
pub fn evaluate_bli(
    params: &GeommParams,
    src: &str,
    tgt: &str,
    src_emb: &Embeddings,
    tgt_emb: &Embeddings,
    test: &[WordPair],
    mode: RetrievalMode,
    space: InferenceSpace,
    csls_k: usize,
) -> Result<BliReport> {
    let r = Retriever::build(params, src, tgt, src_emb, tgt_emb, mode, space, csls_k)?;
    evaluate_bli_with(&r, test)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SimilarityReport {
    pub pearson: f64,
    pub used: usize,
    pub total: usize,
}

pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    sab / (saa * sbb).sqrt()
}

/// Pearson correlation between gold scores and latent-space cosines.
/// Pairs with an out-of-vocabulary word are skipped.
pub fn evaluate_word_similarity(
    params: &GeommParams,
    src: &str,
    tgt: &str,
    src_emb: &Embeddings,
    tgt_emb: &Embeddings,
    pairs: &[ScoredPair],
) -> Result<SimilarityReport> {
    let mut si = Vec::new();
    let mut ti = Vec::new();
    let mut gold = Vec::new();
    for p in pairs {
        if let (Some(a), Some(b)) = (src_emb.get(&p.src), tgt_emb.get(&p.tgt)) {
            si.push(a);
            ti.push(b);
            gold.push(p.score);
        }
    }
    if gold.len() < 3 {
        return Err(Error::EmptyEvaluation(format!(
            "only {} of {} scored pairs are in vocabulary (need 3)",
            gold.len(),
            pairs.len()
        )));
    }
    let mut ls = to_latent(params, src, &src_emb.select(&si))?;
    let mut lt = to_latent(params, tgt, &tgt_emb.select(&ti))?;
    linalg::normalize_columns(&mut ls);
    linalg::normalize_columns(&mut lt);
    let cos: Vec<f64> = (0..gold.len()).map(|j| ls.column(j).dot(&lt.column(j))).collect();
    Ok(SimilarityReport {
        pearson: pearson(&gold, &cos),
        used: gold.len(),
        total: pairs.len(),
    })
}
