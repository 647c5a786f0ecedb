//! Python bindings: models, embeddings, training and retrieval.

use clap::ValueEnum;
use geomm::dataio::{self, ModelFile, PreprocessScheme, WordPair};
use geomm::linalg::Mat;
use geomm::model::{GeommParams, ModelVariant};
use geomm::pipelines::{self, BilingualMethod, TrainConfig};
use geomm::retrieval::{self, InferenceSpace, RetrievalMode};
use pyo3::exceptions::{PyIOError, PyKeyError, PyValueError};
use pyo3::prelude::*;

fn to_py(e: geomm::Error) -> PyErr {
    match e {
        geomm::Error::Io(e) => PyIOError::new_err(e.to_string()),
        geomm::Error::UnknownLanguage(l) => PyKeyError::new_err(format!("unknown language {l}")),
        e => PyValueError::new_err(e.to_string()),
    }
}

fn choice<T: ValueEnum>(what: &str, s: &str) -> PyResult<T> {
    T::from_str(s, true).map_err(|_| PyValueError::new_err(format!("invalid {what}: {s}")))
}

fn rows(m: &Mat) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn json(py: Python<'_>, v: &impl serde::Serialize) -> PyResult<Py<PyAny>> {
    let s = serde_json::to_string(v).map_err(|e| PyValueError::new_err(e.to_string()))?;
    Ok(py.import("json")?.call_method1("loads", (s,))?.unbind())
}

#[pyclass(name = "Embeddings", module = "geomm_py", frozen, skip_from_py_object)]
#[derive(Clone)]
pub struct PyEmbeddings {
    inner: dataio::Embeddings,
}

#[pymethods]
impl PyEmbeddings {
    /// Build from words and one vector per word, then preprocess.
    #[new]
    #[pyo3(signature = (words, vectors, preprocess = "unit"))]
    fn new(words: Vec<String>, vectors: Vec<Vec<f64>>, preprocess: &str) -> PyResult<Self> {
        if words.len() != vectors.len() {
            return Err(PyValueError::new_err("words and vectors differ in length"));
        }
        let d = vectors.first().map_or(0, Vec::len);
        if vectors.iter().any(|v| v.len() != d) {
            return Err(PyValueError::new_err("vectors differ in dimension"));
        }
        let m = Mat::from_fn(d, vectors.len(), |i, j| vectors[j][i]);
        let raw = dataio::RawEmbeddings { vocab: words, vectors: m };
        let inner = dataio::preprocess(raw, choice::<PreprocessScheme>("preprocess", preprocess)?).map_err(to_py)?;
        Ok(PyEmbeddings { inner })
    }

    /// Read a word2vec-style text file.
    #[staticmethod]
    #[pyo3(signature = (path, max_vocab = None, preprocess = "unit"))]
    fn load(py: Python<'_>, path: &str, max_vocab: Option<usize>, preprocess: &str) -> PyResult<Self> {
        let scheme = choice::<PreprocessScheme>("preprocess", preprocess)?;
        let inner = py
            .detach(|| dataio::load_embeddings(path, max_vocab).and_then(|r| dataio::preprocess(r, scheme)))
            .map_err(to_py)?;
        Ok(PyEmbeddings { inner })
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    #[getter]
    fn words(&self) -> Vec<String> {
        self.inner.vocab().to_vec()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __contains__(&self, word: &str) -> bool {
        self.inner.contains(word)
    }

    fn vector(&self, word: &str) -> PyResult<Vec<f64>> {
        let j = self.inner.get(word).ok_or_else(|| PyKeyError::new_err(word.to_string()))?;
        Ok(self.inner.matrix().column(j).iter().copied().collect())
    }
}

#[pyclass(name = "Model", module = "geomm_py", frozen, skip_from_py_object)]
#[derive(Clone)]
pub struct PyModel {
    inner: ModelFile,
}

impl PyModel {
    fn params(&self) -> &GeommParams {
        &self.inner.params
    }

    fn wrap(params: GeommParams) -> Self {
        PyModel {
            inner: ModelFile { params, preprocess: PreprocessScheme::default() },
        }
    }
}

#[pymethods]
impl PyModel {
    /// Identity rotations and metric for the given languages.
    #[staticmethod]
    fn identity(languages: Vec<String>, dim: usize) -> PyResult<Self> {
        Ok(Self::wrap(GeommParams::identity(languages, dim).map_err(to_py)?))
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(PyModel { inner: dataio::load_model(path).map_err(to_py)? })
    }

    fn save(&self, path: &str) -> PyResult<()> {
        dataio::save_model(path, &self.inner).map_err(to_py)
    }

    #[getter]
    fn languages(&self) -> Vec<String> {
        self.params().languages().to_vec()
    }

    #[getter]
    fn dim(&self) -> usize {
        self.params().dim()
    }

    #[getter]
    fn preprocess(&self) -> &'static str {
        self.inner.preprocess.as_str()
    }

    fn rotation(&self, lang: &str) -> PyResult<Vec<Vec<f64>>> {
        Ok(rows(self.params().rotation(lang).map_err(to_py)?.matrix()))
    }

    fn metric(&self) -> Vec<Vec<f64>> {
        rows(self.params().metric().matrix())
    }

    /// `W` with `W x` mapping `src` vectors into the `tgt` space.
    fn compose(&self, src: &str, tgt: &str) -> PyResult<Vec<Vec<f64>>> {
        Ok(rows(&self.params().compose_transform(src, tgt).map_err(to_py)?))
    }

    fn similarity(&self, src: &str, tgt: &str, x: Vec<f64>, z: Vec<f64>) -> PyResult<f64> {
        self.params().similarity(src, tgt, &x, &z).map_err(to_py)
    }

    fn latent(&self, lang: &str, x: Vec<f64>) -> PyResult<Vec<f64>> {
        let v = Mat::from_column_slice(x.len(), 1, &x);
        Ok(retrieval::to_latent(self.params(), lang, &v).map_err(to_py)?.iter().copied().collect())
    }

    fn __repr__(&self) -> String {
        format!("Model(languages={:?}, dim={})", self.params().languages(), self.params().dim())
    }
}

/// Train a bilingual model; returns `(model, report)`.
#[pyfunction]
#[pyo3(signature = (src, tgt, src_emb, tgt_emb, pairs, lambdas = None, variant = "full", val_frac = 0.2, seed = 0))]
#[allow(clippy::too_many_arguments)]
fn train(
    py: Python<'_>,
    src: &str,
    tgt: &str,
    src_emb: &PyEmbeddings,
    tgt_emb: &PyEmbeddings,
    pairs: Vec<WordPair>,
    lambdas: Option<Vec<f64>>,
    variant: &str,
    val_frac: f64,
    seed: u64,
) -> PyResult<(PyModel, Py<PyAny>)> {
    let mut config = TrainConfig {
        variant: choice::<ModelVariant>("variant", variant)?,
        val_frac,
        seed,
        ..TrainConfig::default()
    };
    if let Some(l) = lambdas {
        config.lambdas = l;
    }
    let (params, report) = py
        .detach(|| pipelines::train_bilingual(src, tgt, &src_emb.inner, &tgt_emb.inner, &pairs, &config))
        .map_err(to_py)?;
    Ok((PyModel::wrap(params), json(py, &report)?))
}

/// Orthogonal Procrustes baseline.
#[pyfunction]
fn procrustes(
    py: Python<'_>,
    src: &str,
    tgt: &str,
    src_emb: &PyEmbeddings,
    tgt_emb: &PyEmbeddings,
    pairs: Vec<WordPair>,
) -> PyResult<PyModel> {
    let config = TrainConfig::default();
    let params = py
        .detach(|| {
            pipelines::train_method(BilingualMethod::Procrustes, src, tgt, &src_emb.inner, &tgt_emb.inner, &pairs, &config)
        })
        .map_err(to_py)?;
    Ok(PyModel::wrap(params))
}

/// Precision at 1, 5 and 10 on a test dictionary.
#[pyfunction]
#[pyo3(signature = (model, src, tgt, src_emb, tgt_emb, test, mode = "csls", space = "latent", csls_k = 10))]
#[allow(clippy::too_many_arguments)]
fn evaluate_bli(
    py: Python<'_>,
    model: &PyModel,
    src: &str,
    tgt: &str,
    src_emb: &PyEmbeddings,
    tgt_emb: &PyEmbeddings,
    test: Vec<WordPair>,
    mode: &str,
    space: &str,
    csls_k: usize,
) -> PyResult<Py<PyAny>> {
    let mode = choice::<RetrievalMode>("mode", mode)?;
    let space = choice::<InferenceSpace>("space", space)?;
    let report = py
        .detach(|| {
            retrieval::evaluate_bli(model.params(), src, tgt, &src_emb.inner, &tgt_emb.inner, &test, mode, space, csls_k)
        })
        .map_err(to_py)?;
    json(py, &report)
}

/// Top candidates per query word; `None` for out-of-vocabulary queries.
#[pyfunction]
#[pyo3(signature = (model, src, tgt, src_emb, tgt_emb, words, topk = 10, mode = "csls", space = "latent", csls_k = 10))]
#[allow(clippy::too_many_arguments)]
fn translate(
    py: Python<'_>,
    model: &PyModel,
    src: &str,
    tgt: &str,
    src_emb: &PyEmbeddings,
    tgt_emb: &PyEmbeddings,
    words: Vec<String>,
    topk: usize,
    mode: &str,
    space: &str,
    csls_k: usize,
) -> PyResult<Vec<Option<Vec<(String, f64)>>>> {
    let mode = choice::<RetrievalMode>("mode", mode)?;
    let space = choice::<InferenceSpace>("space", space)?;
    let out = py
        .detach(|| {
            retrieval::translate(
                model.params(),
                src,
                tgt,
                &src_emb.inner,
                &tgt_emb.inner,
                &words,
                topk,
                mode,
                space,
                csls_k,
            )
        })
        .map_err(to_py)?;
    Ok(out.into_iter().map(|t| t.candidates).collect())
}

#[pymodule]
fn geomm_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyEmbeddings>()?;
    m.add_class::<PyModel>()?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    m.add_function(wrap_pyfunction!(procrustes, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate_bli, m)?)?;
    m.add_function(wrap_pyfunction!(translate, m)?)?;
    Ok(())
}
