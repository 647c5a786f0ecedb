//! Embedding and dictionary parsers, preprocessing, and the model container.
//!
//! Embeddings are read from the word2vec text format: a header line `n d`
//! followed by one `word v1 … vd` row per word. Dictionaries are
//! whitespace-separated `src tgt` pairs, one per line.
//!
//! The model container is a small binary format:
//!
//! ```text
//! magic      8 bytes   "GEOMMMDL"
//! version    u32 LE
//! header_len u32 LE
//! header     JSON      {"d", "languages", "preprocess"}
//! matrices   f64 LE    one d×d rotation per language, then the metric,
//!                      each row-major
//! checksum   32 bytes  SHA-256 of everything above
//! ```

use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::linalg::{self, Mat};
use crate::manifolds::{OrthPoint, SpdPoint};
use crate::model::GeommParams;

pub type WordPair = (String, String);

/// Embeddings as read from disk, before preprocessing.
#[derive(Clone, Debug)]
pub struct RawEmbeddings {
    pub vocab: Vec<String>,
    /// `d × n`, one column per word.
    pub vectors: Mat,
}

/// Preprocessed embeddings with a word lookup table. Columns are word vectors.
#[derive(Clone, Debug)]
pub struct Embeddings {
    vocab: Vec<String>,
    index: HashMap<String, usize>,
    matrix: Mat,
}

impl Embeddings {
    pub fn new(vocab: Vec<String>, matrix: Mat) -> Result<Self> {
        if vocab.len() != matrix.ncols() {
            return Err(Error::dims(
                format!("{} columns", vocab.len()),
                format!("{} columns", matrix.ncols()),
            ));
        }
        let mut index = HashMap::with_capacity(vocab.len());
        for (i, w) in vocab.iter().enumerate() {
            if index.insert(w.clone(), i).is_some() {
                return Err(Error::InvalidConfig(format!("duplicate word `{w}`")));
            }
        }
        Ok(Embeddings { vocab, index, matrix })
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
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

    pub fn matrix(&self) -> &Mat {
        &self.matrix
    }

    pub fn get(&self, word: &str) -> Option<usize> {
        self.index.get(word).copied()
    }

    pub fn contains(&self, word: &str) -> bool {
        self.index.contains_key(word)
    }

    /// Keep only the first `n` words (frequency order).
    pub fn truncated(&self, n: usize) -> Embeddings {
        let n = n.min(self.len());
        Embeddings::new(
            self.vocab[..n].to_vec(),
            self.matrix.columns(0, n).into_owned(),
        )
        .expect("prefix of a valid vocabulary")
    }

    /// Columns for the given word indices, in order.
    pub fn select(&self, indices: &[usize]) -> Mat {
        self.matrix.select_columns(indices)
    }
}

/// Embedding preprocessing applied after loading.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum PreprocessScheme {
    /// L2-normalize every vector.
    #[default]
    #[value(name = "unit")]
    Unit,
    /// Normalize, subtract the mean vector, normalize again.
    #[value(name = "unit_center_unit")]
    UnitCenterUnit,
}

impl PreprocessScheme {
    pub fn as_str(self) -> &'static str {
        match self {
            PreprocessScheme::Unit => "unit",
            PreprocessScheme::UnitCenterUnit => "unit_center_unit",
        }
    }
}

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        msg: msg.into(),
    }
}

/// Read word2vec text embeddings, keeping at most `max_vocab` words.
pub fn load_embeddings(path: impl AsRef<Path>, max_vocab: Option<usize>) -> Result<RawEmbeddings> {
    let path = path.as_ref();
    let reader = BufReader::new(File::open(path)?);
    read_embeddings(reader, path, max_vocab)
}

/// Streaming reader behind [`load_embeddings`]; memory grows only with the
/// retained vocabulary. `origin` is used in error messages.
pub fn read_embeddings<R: BufRead>(
    reader: R,
    origin: &Path,
    max_vocab: Option<usize>,
) -> Result<RawEmbeddings> {
    let mut lines = reader.lines();
    let header = match lines.next() {
        Some(l) => l?,
        None => return Err(parse_err(origin, 1, "missing header")),
    };
    let fields: Vec<&str> = header.split_whitespace().collect();
    let (n_header, d) = match fields.as_slice() {
        [n, d] => match (n.parse::<usize>(), d.parse::<usize>()) {
            (Ok(n), Ok(d)) if d > 0 => (n, d),
            _ => return Err(parse_err(origin, 1, format!("malformed header `{header}`"))),
        },
        _ => return Err(parse_err(origin, 1, format!("malformed header `{header}`"))),
    };
    let limit = max_vocab.unwrap_or(usize::MAX);

    let mut vocab = Vec::with_capacity(n_header.min(limit).min(1 << 20));
    let mut seen = HashSet::new();
    let mut data = Vec::with_capacity(vocab.capacity() * d);
    let mut rows = 0usize;
    for (i, line) in lines.enumerate() {
        if vocab.len() >= limit {
            break;
        }
        let lineno = i + 2;
        let line = line?;
        let line = line.trim_end_matches(['\r', '\n', ' ']);
        if line.is_empty() {
            continue;
        }
        rows += 1;
        let mut parts = line.split(' ');
        let word = parts.next().unwrap_or_default();
        let start = data.len();
        let mut count = 0;
        for tok in parts {
            let v: f64 = tok
                .parse()
                .map_err(|_| parse_err(origin, lineno, format!("invalid number `{tok}`")))?;
            if !v.is_finite() {
                return Err(parse_err(origin, lineno, format!("non-finite value `{tok}`")));
            }
            data.push(v);
            count += 1;
        }
        if count != d {
            return Err(parse_err(
                origin,
                lineno,
                format!("expected {d} values for `{word}`, found {count}"),
            ));
        }
        if !seen.insert(word.to_string()) {
            log::warn!("{}:{lineno}: duplicate word `{word}` dropped", origin.display());
            data.truncate(start);
            continue;
        }
        vocab.push(word.to_string());
    }
    if max_vocab.is_none() && rows != n_header {
        log::warn!(
            "{}: header announces {n_header} words but {rows} rows were read",
            origin.display()
        );
    }
    let n = vocab.len();
    Ok(RawEmbeddings {
        vocab,
        vectors: Mat::from_vec(d, n, data),
    })
}

/// Apply a preprocessing scheme. Zero-norm vectors are dropped with a warning.
pub fn preprocess(raw: RawEmbeddings, scheme: PreprocessScheme) -> Result<Embeddings> {
    let RawEmbeddings { vocab, vectors } = raw;
    let (mut vocab, mut m) = drop_zero_columns(vocab, vectors)?;
    if scheme == PreprocessScheme::UnitCenterUnit {
        let mean = m.column_mean();
        for mut col in m.column_iter_mut() {
            col -= &mean;
        }
        (vocab, m) = drop_zero_columns(vocab, m)?;
    }
    Embeddings::new(vocab, m)
}

fn drop_zero_columns(vocab: Vec<String>, mut m: Mat) -> Result<(Vec<String>, Mat)> {
    let zero = linalg::normalize_columns(&mut m);
    if zero.is_empty() {
        return Ok((vocab, m));
    }
    if zero.len() == vocab.len() {
        return Err(Error::InvalidConfig("all embedding vectors are zero".into()));
    }
    for &j in &zero {
        log::warn!("dropping zero-norm vector for `{}`", vocab[j]);
    }
    let dropped: HashSet<usize> = zero.into_iter().collect();
    let keep: Vec<usize> = (0..vocab.len()).filter(|j| !dropped.contains(j)).collect();
    let vocab = keep.iter().map(|&j| vocab[j].clone()).collect();
    Ok((vocab, m.select_columns(&keep)))
}

/// Parsed dictionary together with diagnostics.
#[derive(Clone, Debug, Default)]
pub struct LoadedDictionary {
    pub pairs: Vec<WordPair>,
    /// 1-based line numbers of malformed lines that were skipped.
    pub skipped_lines: Vec<usize>,
    pub duplicates: usize,
}

pub fn load_dictionary(path: impl AsRef<Path>) -> Result<LoadedDictionary> {
    let path = path.as_ref();
    read_dictionary(BufReader::new(File::open(path)?), path)
}

pub fn read_dictionary<R: BufRead>(reader: R, origin: &Path) -> Result<LoadedDictionary> {
    let mut out = LoadedDictionary::default();
    let mut seen = HashSet::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let toks: Vec<&str> = line.split_whitespace().collect();
        match toks.as_slice() {
            [] => continue,
            [s, t] => {
                let pair = (s.to_string(), t.to_string());
                if seen.insert(pair.clone()) {
                    out.pairs.push(pair);
                } else {
                    out.duplicates += 1;
                }
            }
            _ => {
                log::warn!(
                    "{}:{}: expected 2 tokens, found {}; line skipped",
                    origin.display(),
                    i + 1,
                    toks.len()
                );
                out.skipped_lines.push(i + 1);
            }
        }
    }
    Ok(out)
}

pub fn write_dictionary(path: impl AsRef<Path>, pairs: &[WordPair]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for (s, t) in pairs {
        writeln!(w, "{s}\t{t}")?;
    }
    w.flush()?;
    Ok(())
}

/// A `(src_word, tgt_word, gold_score)` triple for word-similarity evaluation.
#[derive(Clone, Debug, PartialEq)]
pub struct ScoredPair {
    pub src: String,
    pub tgt: String,
    pub score: f64,
}

/// Read `src tgt score` lines; malformed lines are errors.
pub fn load_scored_pairs(path: impl AsRef<Path>) -> Result<Vec<ScoredPair>> {
    let path = path.as_ref();
    let reader = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let toks: Vec<&str> = line.split_whitespace().collect();
        match toks.as_slice() {
            [] => continue,
            [s, t, v] => {
                let score = v
                    .parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| parse_err(path, i + 1, format!("invalid score `{v}`")))?;
                out.push(ScoredPair {
                    src: s.to_string(),
                    tgt: t.to_string(),
                    score,
                });
            }
            _ => {
                return Err(parse_err(
                    path,
                    i + 1,
                    format!("expected 3 tokens, found {}", toks.len()),
                ))
            }
        }
    }
    Ok(out)
}

pub const MODEL_MAGIC: &[u8; 8] = b"GEOMMMDL";
pub const MODEL_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct ModelHeader {
    d: usize,
    languages: Vec<String>,
    preprocess: PreprocessScheme,
}

/// A trained model together with the preprocessing it was trained under.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelFile {
    pub params: GeommParams,
    pub preprocess: PreprocessScheme,
}

fn push_matrix(buf: &mut Vec<u8>, m: &Mat) {
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            buf.extend_from_slice(&m[(i, j)].to_le_bytes());
        }
    }
}

pub fn encode_model(model: &ModelFile) -> Vec<u8> {
    let p = &model.params;
    let d = p.dim();
    let header = serde_json::to_vec(&ModelHeader {
        d,
        languages: p.languages().to_vec(),
        preprocess: model.preprocess,
    })
    .expect("header serializes");
    let mut buf = Vec::with_capacity(16 + header.len() + 8 * d * d * (p.languages().len() + 1) + 32);
    buf.extend_from_slice(MODEL_MAGIC);
    buf.extend_from_slice(&MODEL_VERSION.to_le_bytes());
    buf.extend_from_slice(&(header.len() as u32).to_le_bytes());
    buf.extend_from_slice(&header);
    for u in p.rotations() {
        push_matrix(&mut buf, u.matrix());
    }
    push_matrix(&mut buf, p.metric().matrix());
    let digest = Sha256::digest(&buf);
    buf.extend_from_slice(&digest);
    buf
}

pub fn decode_model(bytes: &[u8]) -> Result<ModelFile> {
    let fmt = |m: &str| Error::ModelFormat(m.to_string());
    if bytes.len() < 16 + 32 {
        return Err(fmt("truncated"));
    }
    if &bytes[..8] != MODEL_MAGIC {
        return Err(fmt("bad magic"));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    if version != MODEL_VERSION {
        return Err(Error::VersionMismatch {
            found: version,
            expected: MODEL_VERSION,
        });
    }
    let (body, digest) = bytes.split_at(bytes.len() - 32);
    if Sha256::digest(body).as_slice() != digest {
        return Err(Error::Checksum);
    }
    let header_len = u32::from_le_bytes(bytes[12..16].try_into().unwrap()) as usize;
    let header_end = 16usize
        .checked_add(header_len)
        .filter(|&e| e <= body.len())
        .ok_or_else(|| fmt("header length out of range"))?;
    let header: ModelHeader = serde_json::from_slice(&body[16..header_end])
        .map_err(|e| Error::ModelFormat(format!("header: {e}")))?;
    let d = header.d;
    let k = header.languages.len();
    let expected = header_end + 8 * d * d * (k + 1);
    if body.len() != expected {
        return Err(fmt("payload size does not match header"));
    }
    let mut cursor = header_end;
    let mut read_matrix = || {
        let m = Mat::from_fn(d, d, |i, j| {
            let off = cursor + 8 * (i * d + j);
            f64::from_le_bytes(body[off..off + 8].try_into().unwrap())
        });
        cursor += 8 * d * d;
        m
    };
    let rotations = (0..k)
        .map(|_| OrthPoint::new(read_matrix()))
        .collect::<Result<Vec<_>>>()?;
    let metric = SpdPoint::new(read_matrix())?;
    Ok(ModelFile {
        params: GeommParams::new(header.languages, rotations, metric)?,
        preprocess: header.preprocess,
    })
}

pub fn save_model(path: impl AsRef<Path>, model: &ModelFile) -> Result<()> {
    std::fs::write(path, encode_model(model))?;
    Ok(())
}

pub fn load_model(path: impl AsRef<Path>) -> Result<ModelFile> {
    decode_model(&std::fs::read(path)?)
}

/// Hex SHA-256 of a file's contents.
pub fn file_digest(path: impl AsRef<Path>) -> Result<String> {
    let bytes = std::fs::read(path)?;
    Ok(Sha256::digest(&bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect())
}

/// Path with `suffix` appended to the file name.
pub fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthetic::{random_matrix, random_orth, random_spd, rng};
    use std::io::Cursor;

    fn read(s: &str, max: Option<usize>) -> Result<RawEmbeddings> {
        read_embeddings(Cursor::new(s.as_bytes()), Path::new("mem"), max)
    }

    #[test]
    fn reads_small_file() {
        let raw = read("2 3\nfoo 1 2 3\nbar 0.5 -1 2e-1\n", None).unwrap();
        assert_eq!(raw.vocab, vec!["foo", "bar"]);
        assert_eq!(raw.vectors.shape(), (3, 2));
        assert_eq!(raw.vectors[(2, 1)], 0.2);
        let one = read("2 3\nfoo 1 2 3\nbar 0.5 -1 2e-1\n", Some(1)).unwrap();
        assert_eq!(one.vocab, vec!["foo"]);
        assert_eq!(one.vectors.shape(), (3, 1));
    }

    #[test]
    fn tolerates_trailing_space() {
        let raw = read("1 2\nfoo 1 2 \n", None).unwrap();
        assert_eq!(raw.vectors.shape(), (2, 1));
    }

    #[test]
    fn short_row_names_line() {
        let err = read("2 3\nfoo 1 2 3\nbar 1 2\n", None).unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn header_and_values_are_validated() {
        assert!(matches!(read("abc\n", None), Err(Error::Parse { line: 1, .. })));
        assert!(matches!(read("", None), Err(Error::Parse { line: 1, .. })));
        assert!(matches!(read("1 2\nfoo 1 NaN\n", None), Err(Error::Parse { line: 2, .. })));
        assert!(matches!(read("1 2\nfoo 1 1,5\n", None), Err(Error::Parse { line: 2, .. })));
    }

    #[test]
    fn duplicate_words_keep_first() {
        let raw = read("3 1\na 1\nb 2\na 3\n", None).unwrap();
        assert_eq!(raw.vocab, vec!["a", "b"]);
        assert_eq!(raw.vectors[(0, 0)], 1.0);
    }

    #[test]
    fn unit_preprocessing_is_idempotent() {
        let mut r = rng(11);
        let raw = RawEmbeddings {
            vocab: (0..7).map(|i| i.to_string()).collect(),
            vectors: random_matrix(&mut r, 4, 7),
        };
        let once = preprocess(raw, PreprocessScheme::Unit).unwrap();
        let twice = preprocess(
            RawEmbeddings {
                vocab: once.vocab().to_vec(),
                vectors: once.matrix().clone(),
            },
            PreprocessScheme::Unit,
        )
        .unwrap();
        assert!((once.matrix() - twice.matrix()).norm() < 1e-12);
    }

    #[test]
    fn antipodal_pair_is_unchanged_by_centering() {
        let raw = RawEmbeddings {
            vocab: vec!["a".into(), "b".into()],
            vectors: Mat::from_column_slice(2, 2, &[0.6, 0.8, -0.6, -0.8]),
        };
        let out = preprocess(raw.clone(), PreprocessScheme::UnitCenterUnit).unwrap();
        assert!((out.matrix() - &raw.vectors).norm() < 1e-12);
    }

    #[test]
    fn center_scheme_outputs_unit_columns_from_centered_intermediate() {
        let mut r = rng(12);
        let x = random_matrix(&mut r, 5, 30);
        let raw = RawEmbeddings {
            vocab: (0..30).map(|i| format!("w{i}")).collect(),
            vectors: x.clone(),
        };
        let out = preprocess(raw, PreprocessScheme::UnitCenterUnit).unwrap();
        for c in out.matrix().column_iter() {
            assert!((c.norm() - 1.0).abs() < 1e-12);
        }
        // Recompute the intermediate independently: normalize then center.
        let mut unit = x.clone();
        for mut c in unit.column_iter_mut() {
            let n = c.norm();
            c /= n;
        }
        let mean = unit.column_mean();
        let centered = Mat::from_fn(5, 30, |i, j| unit[(i, j)] - mean[i]);
        assert!(centered.column_mean().norm() < 1e-12);
        // The output is the renormalized intermediate.
        for j in 0..30 {
            let c = centered.column(j) / centered.column(j).norm();
            assert!((c - out.matrix().column(j)).norm() < 1e-12);
        }
    }

    #[test]
    fn zero_columns_are_dropped_or_rejected() {
        let raw = RawEmbeddings {
            vocab: vec!["a".into(), "z".into()],
            vectors: Mat::from_column_slice(2, 2, &[3.0, 4.0, 0.0, 0.0]),
        };
        let out = preprocess(raw, PreprocessScheme::Unit).unwrap();
        assert_eq!(out.vocab(), &["a".to_string()]);
        let all_zero = RawEmbeddings {
            vocab: vec!["z".into()],
            vectors: Mat::zeros(2, 1),
        };
        assert!(preprocess(all_zero, PreprocessScheme::Unit).is_err());
    }

    #[test]
    fn dictionary_parsing() {
        let d = read_dictionary(Cursor::new("a x\nb\ty\nc z\n"), Path::new("d")).unwrap();
        assert_eq!(d.pairs.len(), 3);
        let d = read_dictionary(Cursor::new("a x\na x\n"), Path::new("d")).unwrap();
        assert_eq!(d.pairs, vec![("a".to_string(), "x".to_string())]);
        assert_eq!(d.duplicates, 1);
        let d = read_dictionary(Cursor::new("a x\na b c\n\nb y\n"), Path::new("d")).unwrap();
        assert_eq!(d.pairs.len(), 2);
        assert_eq!(d.skipped_lines, vec![2]);
        let d = read_dictionary(Cursor::new("a x\na y\n"), Path::new("d")).unwrap();
        assert_eq!(d.pairs.len(), 2);
    }

    fn sample_model() -> ModelFile {
        let mut r = rng(13);
        let params = GeommParams::new(
            vec!["en".into(), "it".into(), "de".into()],
            (0..3).map(|_| random_orth(&mut r, 4)).collect(),
            random_spd(&mut r, 4),
        )
        .unwrap();
        ModelFile {
            params,
            preprocess: PreprocessScheme::UnitCenterUnit,
        }
    }

    #[test]
    fn model_round_trip_is_bit_exact() {
        let m = sample_model();
        let back = decode_model(&encode_model(&m)).unwrap();
        assert_eq!(back, m);
        for (a, b) in m.params.rotations().iter().zip(back.params.rotations()) {
            for (x, y) in a.matrix().iter().zip(b.matrix().iter()) {
                assert_eq!(x.to_bits(), y.to_bits());
            }
        }
    }

    #[test]
    fn model_integrity_errors() {
        let bytes = encode_model(&sample_model());
        assert!(matches!(
            decode_model(&bytes[..bytes.len() - 9]),
            Err(Error::Checksum)
        ));
        assert!(matches!(decode_model(&bytes[..20]), Err(Error::ModelFormat(_))));
        let mut flipped = bytes.clone();
        flipped[40] ^= 1;
        assert!(matches!(decode_model(&flipped), Err(Error::Checksum)));
        let mut v2 = bytes.clone();
        v2[8] = 2;
        assert!(matches!(
            decode_model(&v2),
            Err(Error::VersionMismatch { found: 2, .. })
        ));
    }
}
