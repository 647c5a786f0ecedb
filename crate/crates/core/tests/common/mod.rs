//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use geomm::linalg::Mat;
use geomm::model::DictionaryData;
use geomm::synthetic::random_unit_columns;
use rand::Rng;

pub const FD_STEP: f64 = 1e-6;

/// Random unit-column data with `pairs` random label-one entries.
pub fn random_data<R: Rng>(rng: &mut R, d: usize, ns: usize, nt: usize, pairs: usize) -> DictionaryData {
    let xs = random_unit_columns(rng, d, ns);
    let xt = random_unit_columns(rng, d, nt);
    let omega: Vec<(usize, usize)> = (0..pairs)
        .map(|_| (rng.random_range(0..ns), rng.random_range(0..nt)))
        .collect();
    DictionaryData::new(xs, xt, omega).unwrap()
}

/// Dense label matrix `Y`.
pub fn labels(data: &DictionaryData) -> Mat {
    let mut y = Mat::zeros(data.src().ncols(), data.tgt().ncols());
    for &(i, j) in data.omega() {
        y[(i, j)] = 1.0;
    }
    y
}

/// `‖X_sᵀ A X_t − Y‖²` with the full score matrix materialized.
pub fn dense_loss(a: &Mat, data: &DictionaryData) -> f64 {
    let scores = data.src().transpose() * a * data.tgt();
    (scores - labels(data)).norm_squared()
}

pub fn dense_cost(us: &Mat, b: &Mat, ut: &Mat, data: &DictionaryData, lambda: f64) -> f64 {
    dense_loss(&(us * b * ut.transpose()), data) + lambda * b.norm_squared()
}

/// Entrywise central differences of `f` over every factor in `x`, compared
/// with the analytic gradient `g`. Factors flagged symmetric are perturbed
/// along `e_ij + e_ji`, matching a gradient taken in the symmetric space.
/// Returns `‖fd − analytic‖ / ‖analytic‖` over all coordinates.
pub fn fd_relative_error<F>(f: F, x: &[Mat], g: &[Mat], symmetric: &[bool]) -> f64
where
    F: Fn(&[Mat]) -> f64,
{
    let mut num = 0.0;
    let mut den = 0.0;
    let mut pt: Vec<Mat> = x.to_vec();
    for k in 0..x.len() {
        let (r, c) = x[k].shape();
        for i in 0..r {
            for j in 0..c {
                if symmetric[k] && j < i {
                    continue;
                }
                let mut e = Mat::zeros(r, c);
                e[(i, j)] = 1.0;
                if symmetric[k] && i != j {
                    e[(j, i)] = 1.0;
                }
                pt[k] = &x[k] + &e * FD_STEP;
                let fp = f(&pt);
                pt[k] = &x[k] - &e * FD_STEP;
                let fm = f(&pt);
                pt[k] = x[k].clone();
                let fd = (fp - fm) / (2.0 * FD_STEP);
                let an = g[k].dot(&e);
                num += (fd - an).powi(2);
                den += an * an;
            }
        }
    }
    num.sqrt() / den.sqrt().max(f64::MIN_POSITIVE)
}

/// Brute-force CSLS penalties: mean of the `k` largest cosines per column
/// of `q` against the columns of `o` (both unit-norm), by full sorting.
pub fn brute_penalties(q: &Mat, o: &Mat, k: usize) -> Vec<f64> {
    (0..q.ncols())
        .map(|a| {
            let mut cos: Vec<f64> = (0..o.ncols())
                .map(|b| (0..q.nrows()).map(|i| q[(i, a)] * o[(i, b)]).sum())
                .collect();
            cos.sort_by(|x, y| y.partial_cmp(x).unwrap());
            cos[..k].iter().sum::<f64>() / k as f64
        })
        .collect()
}

/// Brute-force CSLS score matrix (queries × targets).
pub fn brute_csls(q: &Mat, t: &Mat, k: usize) -> Mat {
    let rq = brute_penalties(q, t, k);
    let rt = brute_penalties(t, q, k);
    Mat::from_fn(q.ncols(), t.ncols(), |a, b| {
        let cos: f64 = (0..q.nrows()).map(|i| q[(i, a)] * t[(i, b)]).sum();
        2.0 * cos - rq[a] - rt[b]
    })
}

pub fn unit_columns(m: &Mat) -> Mat {
    let mut m = m.clone();
    for mut c in m.column_iter_mut() {
        let n = c.norm();
        c /= n;
    }
    m
}
