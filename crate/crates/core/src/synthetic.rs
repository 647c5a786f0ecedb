//! Seeded random generators for matrices and planted cross-lingual systems.
//!
//! Used by tests, the acceptance suite and the Python smoke test; all
//! generators are deterministic given the seed.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::dataio::Embeddings;
use crate::linalg::{self, Mat};
use crate::manifolds::{OrthPoint, SpdPoint};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_matrix<R: Rng>(rng: &mut R, rows: usize, cols: usize) -> Mat {
    DMatrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

pub fn random_orth<R: Rng>(rng: &mut R, d: usize) -> OrthPoint {
    loop {
        let g = random_matrix(rng, d, d);
        if let Ok(q) = linalg::qr_positive(&g) {
            return OrthPoint::new_unchecked(q);
        }
    }
}

pub fn random_sym<R: Rng>(rng: &mut R, d: usize) -> Mat {
    linalg::sym(&random_matrix(rng, d, d))
}

/// `Q diag(λ) Qᵀ` with eigenvalues drawn uniformly from `[0.5, 3]`.
pub fn random_spd<R: Rng>(rng: &mut R, d: usize) -> SpdPoint {
    let q = random_orth(rng, d).into_matrix();
    let diag = nalgebra::DVector::from_fn(d, |_, _| rng.random_range(0.5..3.0));
    let b = &q * Mat::from_diagonal(&diag) * q.transpose();
    SpdPoint::new(b).expect("random SPD matrix")
}

/// `n` random unit-norm columns in dimension `d`.
pub fn random_unit_columns<R: Rng>(rng: &mut R, d: usize, n: usize) -> Mat {
    let mut x = random_matrix(rng, d, n);
    linalg::normalize_columns(&mut x);
    x
}

/// Add Gaussian noise with relative magnitude `scale` to a fraction of the
/// columns (chosen at random) and renormalize those columns.
pub fn perturb_columns<R: Rng>(rng: &mut R, x: &Mat, fraction: f64, scale: f64) -> Mat {
    let mut out = x.clone();
    for j in 0..x.ncols() {
        if rng.random::<f64>() < fraction {
            let noise = random_matrix(rng, x.nrows(), 1);
            let noise = &noise / noise.norm() * scale;
            let mut col = out.column_mut(j);
            col += &noise;
            let n = col.norm();
            col /= n;
        }
    }
    out
}

/// Word list `{prefix}0 .. {prefix}{n-1}`.
pub fn vocabulary(prefix: &str, n: usize) -> Vec<String> {
    (0..n).map(|i| format!("{prefix}{i}")).collect()
}

pub fn embeddings(prefix: &str, matrix: Mat) -> Embeddings {
    Embeddings::new(vocabulary(prefix, matrix.ncols()), matrix).expect("unique synthetic vocabulary")
}

/// Identity dictionary over word indices: `{a}{i} → {b}{i}`.
pub fn index_dictionary(a: &str, b: &str, indices: impl IntoIterator<Item = usize>) -> Vec<(String, String)> {
    indices
        .into_iter()
        .map(|i| (format!("{a}{i}"), format!("{b}{i}")))
        .collect()
}

/// A planted bilingual pair: target embeddings are an exact rotation of the
/// source embeddings, `X_t = Q·X_s`, and word `s{i}` translates to `t{i}`.
pub struct PlantedPair {
    pub src: Embeddings,
    pub tgt: Embeddings,
    pub rotation: Mat,
}

pub fn planted_pair(seed: u64, d: usize, n: usize) -> PlantedPair {
    let mut r = rng(seed);
    let xs = random_unit_columns(&mut r, d, n);
    let q = random_orth(&mut r, d).into_matrix();
    let xt = &q * &xs;
    PlantedPair {
        src: embeddings("s", xs),
        tgt: embeddings("t", xt),
        rotation: q,
    }
}

/// Several languages sharing latent content `C`: language `i` has
/// embeddings `R_i·C` and words `{lang}{j}` are mutual translations.
pub struct PlantedMultilingual {
    pub languages: Vec<String>,
    pub embeddings: Vec<Embeddings>,
    pub rotations: Vec<Mat>,
}

pub fn planted_multilingual(seed: u64, languages: &[&str], d: usize, n: usize) -> PlantedMultilingual {
    let mut r = rng(seed);
    let content = random_unit_columns(&mut r, d, n);
    let mut embeddings = Vec::new();
    let mut rotations = Vec::new();
    for lang in languages {
        let q = random_orth(&mut r, d).into_matrix();
        embeddings.push(self::embeddings(lang, &q * &content));
        rotations.push(q);
    }
    PlantedMultilingual {
        languages: languages.iter().map(|s| s.to_string()).collect(),
        embeddings,
        rotations,
    }
}
