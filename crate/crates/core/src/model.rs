//! Model parameters, training objectives and their Euclidean gradients.
//!
//! A model holds one rotation `U_i` per language and a shared SPD metric `B`.
//! The source→target map is `W_ts = U_t B U_sᵀ` and the score of a pair is
//! `h(x, z) = zᵀ W_ts x`.
//!
//! The bilingual objective is the squared loss of the score matrix against
//! the binary label matrix `Y` plus `λ‖B‖²`. It is evaluated without
//! forming the `n_s × n_t` score matrix: with `A = U_s B U_tᵀ`,
//! `Cs = X_s X_sᵀ`, `Ct = X_t X_tᵀ` and `M = Σ_{(i,j)∈Ω} x_si x_tjᵀ`,
//!
//! ```text
//! ‖X_sᵀ A X_t − Y‖² = tr(Aᵀ Cs A Ct) + |Ω| − 2⟨A, M⟩
//! ∂/∂A             = 2 (Cs A Ct − M)
//! ```
//!
//! so that after caching `Cs`, `Ct` and `M` every evaluation costs `O(d³)`.

use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::dataio::{Embeddings, WordPair};
use crate::error::{Error, Result};
use crate::linalg::{self, frob, sym, Mat};
use crate::manifolds::{OrthPoint, ProductPoint, SpdPoint, TangentVector};
use crate::optimizer::Problem;

/// Rotations per language plus the shared metric.
#[derive(Clone, Debug, PartialEq)]
pub struct GeommParams {
    languages: Vec<String>,
    rotations: Vec<OrthPoint>,
    metric: SpdPoint,
}

impl GeommParams {
    pub fn new(languages: Vec<String>, rotations: Vec<OrthPoint>, metric: SpdPoint) -> Result<Self> {
        if languages.len() != rotations.len() {
            return Err(Error::dims(
                format!("{} rotations", languages.len()),
                format!("{} rotations", rotations.len()),
            ));
        }
        let mut seen = HashSet::new();
        for l in &languages {
            if !seen.insert(l.as_str()) {
                return Err(Error::DuplicateLanguage(l.clone()));
            }
        }
        let d = metric.dim();
        for u in &rotations {
            linalg::ensure_square(u.matrix(), d)?;
        }
        Ok(GeommParams {
            languages,
            rotations,
            metric,
        })
    }

    /// `U_i = I`, `B = I`.
    pub fn identity(languages: Vec<String>, d: usize) -> Result<Self> {
        let rotations = languages.iter().map(|_| OrthPoint::identity(d)).collect();
        Self::new(languages, rotations, SpdPoint::identity(d))
    }

    pub fn dim(&self) -> usize {
        self.metric.dim()
    }

    pub fn languages(&self) -> &[String] {
        &self.languages
    }

    pub fn rotations(&self) -> &[OrthPoint] {
        &self.rotations
    }

    pub fn metric(&self) -> &SpdPoint {
        &self.metric
    }

    pub fn index_of(&self, lang: &str) -> Result<usize> {
        self.languages
            .iter()
            .position(|l| l == lang)
            .ok_or_else(|| Error::UnknownLanguage(lang.to_string()))
    }

    pub fn rotation(&self, lang: &str) -> Result<&OrthPoint> {
        Ok(&self.rotations[self.index_of(lang)?])
    }

    pub fn to_point(&self) -> ProductPoint {
        ProductPoint {
            orth: self.rotations.clone(),
            spd: Some(self.metric.clone()),
            free: vec![],
        }
    }

    pub fn from_point(languages: Vec<String>, point: ProductPoint) -> Result<Self> {
        let metric = point
            .spd
            .ok_or_else(|| Error::InvalidConfig("point has no SPD factor".into()))?;
        Self::new(languages, point.orth, metric)
    }

    /// `W_{tgt,src} = U_tgt B U_srcᵀ`, mapping `src` vectors into the `tgt` space.
    pub fn compose_transform(&self, src: &str, tgt: &str) -> Result<Mat> {
        let us = self.rotation(src)?.matrix();
        let ut = self.rotation(tgt)?.matrix();
        Ok(ut * self.metric.matrix() * us.transpose())
    }

    /// `zᵀ U_tgt B U_srcᵀ x`. Symmetric under swapping `(src, x)` with
    /// `(tgt, z)` bit for bit.
    pub fn similarity(&self, src: &str, tgt: &str, x: &[f64], z: &[f64]) -> Result<f64> {
        let d = self.dim();
        if x.len() != d || z.len() != d {
            return Err(Error::dims(d, format!("{} and {}", x.len(), z.len())));
        }
        let us = self.rotation(src)?.matrix();
        let ut = self.rotation(tgt)?.matrix();
        let b = self.metric.matrix();
        let px = us.tr_mul(&Mat::from_column_slice(d, 1, x));
        let pz = ut.tr_mul(&Mat::from_column_slice(d, 1, z));
        let one = frob(&pz, &(b * &px));
        let two = frob(&px, &(b * &pz));
        Ok(0.5 * (one + two))
    }

    /// Apply the gauge `U_i → U_i R`, `B → Rᵀ B R`; all composed maps are
    /// unchanged.
    pub fn gauge(&self, r: &OrthPoint) -> Result<Self> {
        let r = r.matrix();
        let rotations = self
            .rotations
            .iter()
            .map(|u| OrthPoint::new(u.matrix() * r))
            .collect::<Result<Vec<_>>>()?;
        let metric = SpdPoint::new(r.transpose() * self.metric.matrix() * r)?;
        Self::new(self.languages.clone(), rotations, metric)
    }
}

/// Training data for one language pair.
///
/// `omega` holds the `(row, col)` positions of the ones in the label matrix;
/// the label matrix itself is never formed.
#[derive(Clone, Debug)]
pub struct DictionaryData {
    xs: Mat,
    xt: Mat,
    omega: Vec<(usize, usize)>,
    n_raw: usize,
    src_cov: Mat,
    tgt_cov: Mat,
    cross: Mat,
    pair_src_cov: Mat,
    pair_tgt_sq: f64,
}

const UNIT_TOL: f64 = 1e-8;

impl DictionaryData {
    /// `xs`: `d × n_s` unique source vectors, `xt`: `d × n_t` unique target
    /// vectors, `omega`: label-one positions. Duplicate positions collapse.
    pub fn new(xs: Mat, xt: Mat, omega: Vec<(usize, usize)>) -> Result<Self> {
        if xs.nrows() != xt.nrows() {
            return Err(Error::dims(
                format!("{} rows", xs.nrows()),
                format!("{} rows", xt.nrows()),
            ));
        }
        if omega.is_empty() {
            return Err(Error::EmptyDictionary("no labelled pairs".into()));
        }
        for x in [&xs, &xt] {
            if !linalg::is_finite(x) {
                return Err(Error::NonFinite("dictionary embeddings"));
            }
            for (j, c) in x.column_iter().enumerate() {
                if (c.norm() - 1.0).abs() > UNIT_TOL {
                    return Err(Error::InvalidConfig(format!(
                        "dictionary embedding column {j} is not unit-norm"
                    )));
                }
            }
        }
        let n_raw = omega.len();
        let mut seen = HashSet::new();
        let mut dedup = Vec::with_capacity(omega.len());
        for (i, j) in omega {
            if i >= xs.ncols() || j >= xt.ncols() {
                return Err(Error::InvalidConfig(format!(
                    "label index ({i}, {j}) outside {}x{}",
                    xs.ncols(),
                    xt.ncols()
                )));
            }
            if seen.insert((i, j)) {
                dedup.push((i, j));
            }
        }
        let d = xs.nrows();
        let src_cov = sym(&(&xs * xs.transpose()));
        let tgt_cov = sym(&(&xt * xt.transpose()));
        let mut cross = Mat::zeros(d, d);
        let mut pair_src_cov = Mat::zeros(d, d);
        let mut pair_tgt_sq = 0.0;
        for &(i, j) in &dedup {
            let a = xs.column(i);
            let b = xt.column(j);
            cross.ger(1.0, &a, &b, 1.0);
            pair_src_cov.ger(1.0, &a, &a, 1.0);
            pair_tgt_sq += b.norm_squared();
        }
        Ok(DictionaryData {
            xs,
            xt,
            omega: dedup,
            n_raw,
            src_cov,
            tgt_cov,
            cross,
            pair_src_cov: sym(&pair_src_cov),
            pair_tgt_sq,
        })
    }

    /// Build from word pairs. Pairs with a word missing from either
    /// vocabulary are dropped; the number dropped is returned.
    pub fn from_pairs(pairs: &[WordPair], src: &Embeddings, tgt: &Embeddings) -> Result<(Self, usize)> {
        let mut src_ids: Vec<usize> = Vec::new();
        let mut tgt_ids: Vec<usize> = Vec::new();
        let mut src_pos: HashMap<usize, usize> = HashMap::new();
        let mut tgt_pos: HashMap<usize, usize> = HashMap::new();
        let mut omega = Vec::new();
        let mut dropped = 0;
        for (s, t) in pairs {
            let (Some(si), Some(ti)) = (src.get(s), tgt.get(t)) else {
                dropped += 1;
                continue;
            };
            let r = *src_pos.entry(si).or_insert_with(|| {
                src_ids.push(si);
                src_ids.len() - 1
            });
            let c = *tgt_pos.entry(ti).or_insert_with(|| {
                tgt_ids.push(ti);
                tgt_ids.len() - 1
            });
            omega.push((r, c));
        }
        if omega.is_empty() {
            return Err(Error::EmptyDictionary(format!(
                "none of the {} pairs is covered by both vocabularies",
                pairs.len()
            )));
        }
        let data = Self::new(src.select(&src_ids), tgt.select(&tgt_ids), omega)?;
        Ok((data, dropped))
    }

    pub fn dim(&self) -> usize {
        self.xs.nrows()
    }

    pub fn src(&self) -> &Mat {
        &self.xs
    }

    pub fn tgt(&self) -> &Mat {
        &self.xt
    }

    pub fn omega(&self) -> &[(usize, usize)] {
        &self.omega
    }

    /// Number of pairs supplied, before deduplication.
    pub fn raw_len(&self) -> usize {
        self.n_raw
    }

    /// Data term `‖X_sᵀ A X_t − Y‖²` and its gradient with respect to `A`.
    pub fn loss_and_grad(&self, a: &Mat) -> (f64, Mat) {
        let t = &self.src_cov * a * &self.tgt_cov;
        let f = frob(&t, a) + self.omega.len() as f64 - 2.0 * frob(a, &self.cross);
        (f, (t - &self.cross) * 2.0)
    }

    /// Regression loss `‖W P − T‖²` over column-aligned pairs and its
    /// gradient with respect to `W`.
    pub fn regression_loss_and_grad(&self, w: &Mat) -> (f64, Mat) {
        let wp = w * &self.pair_src_cov;
        let k = self.cross.transpose();
        let f = frob(&wp, w) - 2.0 * frob(w, &k) + self.pair_tgt_sq;
        (f, (wp - k) * 2.0)
    }
}

/// Euclidean gradient of the bilingual objective.
#[derive(Clone, Debug)]
pub struct BilingualGrad {
    pub us: Mat,
    pub ut: Mat,
    pub b: Mat,
}

fn check_factors(us: &Mat, b: &Mat, ut: &Mat, data: &DictionaryData) -> Result<()> {
    let d = data.dim();
    linalg::ensure_square(us, d)?;
    linalg::ensure_square(b, d)?;
    linalg::ensure_square(ut, d)
}

/// `‖X_sᵀ U_s B U_tᵀ X_t − Y‖² + λ‖B‖²`, via the factored expansion.
pub fn bilingual_cost(us: &Mat, b: &Mat, ut: &Mat, data: &DictionaryData, lambda: f64) -> Result<f64> {
    check_factors(us, b, ut, data)?;
    let a = us * b * ut.transpose();
    Ok(data.loss_and_grad(&a).0 + lambda * b.norm_squared())
}

pub fn bilingual_egrad(
    us: &Mat,
    b: &Mat,
    ut: &Mat,
    data: &DictionaryData,
    lambda: f64,
) -> Result<(f64, BilingualGrad)> {
    check_factors(us, b, ut, data)?;
    let a = us * b * ut.transpose();
    let (f, ga) = data.loss_and_grad(&a);
    let grad = BilingualGrad {
        us: &ga * ut * b,
        ut: ga.transpose() * us * b,
        b: sym(&(us.transpose() * &ga * ut)) + b * (2.0 * lambda),
    };
    Ok((f + lambda * b.norm_squared(), grad))
}

/// One edge of a language graph: a dictionary between `src` and `tgt`,
/// with `src` on the rows of the label matrix.
#[derive(Clone, Debug)]
pub struct Edge {
    pub src: String,
    pub tgt: String,
    pub data: DictionaryData,
}

/// Euclidean gradient of the multilingual objective, one rotation gradient
/// per language in `params` order.
#[derive(Clone, Debug)]
pub struct MultilingualGrad {
    pub rotations: Vec<Mat>,
    pub b: Mat,
}

fn resolve_edges(languages: &[String], edges: &[Edge]) -> Result<Vec<(usize, usize)>> {
    let pos = |l: &str| {
        languages
            .iter()
            .position(|x| x == l)
            .ok_or_else(|| Error::UnknownLanguage(l.to_string()))
    };
    let mut seen = HashSet::new();
    let mut out = Vec::with_capacity(edges.len());
    for e in edges {
        let (i, j) = (pos(&e.src)?, pos(&e.tgt)?);
        if i == j {
            return Err(Error::SelfLoop(e.src.clone()));
        }
        if !seen.insert((i.min(j), i.max(j))) {
            return Err(Error::DuplicateEdge(e.src.clone(), e.tgt.clone()));
        }
        out.push((i, j));
    }
    Ok(out)
}

/// `Σ_e (1/|Ω_e|)‖X_iᵀ U_i B U_jᵀ X_j − Y_e‖² + λ‖B‖²` and its gradient.
///
/// Edge terms are accumulated in the order given.
pub fn multilingual_egrad(
    languages: &[String],
    rotations: &[Mat],
    b: &Mat,
    edges: &[Edge],
    lambda: f64,
) -> Result<(f64, MultilingualGrad)> {
    let idx = resolve_edges(languages, edges)?;
    if rotations.len() != languages.len() {
        return Err(Error::dims(languages.len(), rotations.len()));
    }
    let d = b.nrows();
    let mut cost = 0.0;
    let mut g_rot = vec![Mat::zeros(d, d); rotations.len()];
    let mut g_b = Mat::zeros(d, d);
    for (e, &(i, j)) in edges.iter().zip(&idx) {
        linalg::ensure_square(&rotations[i], e.data.dim())?;
        let (ui, uj) = (&rotations[i], &rotations[j]);
        let a = ui * b * uj.transpose();
        let (f, ga) = e.data.loss_and_grad(&a);
        let w = 1.0 / e.data.omega().len() as f64;
        cost += w * f;
        let ga = ga * w;
        g_rot[i] += &ga * uj * b;
        g_rot[j] += ga.transpose() * ui * b;
        g_b += sym(&(ui.transpose() * &ga * uj));
    }
    cost += lambda * b.norm_squared();
    g_b += b * (2.0 * lambda);
    Ok((cost, MultilingualGrad { rotations: g_rot, b: g_b }))
}

pub fn multilingual_cost(params: &GeommParams, edges: &[Edge], lambda: f64) -> Result<f64> {
    let rot: Vec<Mat> = params.rotations().iter().map(|u| u.matrix().clone()).collect();
    Ok(multilingual_egrad(params.languages(), &rot, params.metric().matrix(), edges, lambda)?.0)
}

/// Ablations of the full model.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum ModelVariant {
    /// Rotations and metric, classification loss.
    #[default]
    Full,
    /// A free `d × d` map `W` with `λ‖W‖²`.
    UnconstrainedW,
    /// `U_s = U_t = I`; only the metric is learned.
    MetricOnly,
    /// `B = I`; only the rotations are learned.
    RotationsOnly,
    /// Full factorization with the regression loss `‖W X_s − X_t‖²` over aligned pairs.
    RegressionLoss,
}

impl ModelVariant {
    pub fn name(self) -> &'static str {
        match self {
            ModelVariant::Full => "full",
            ModelVariant::UnconstrainedW => "unconstrained_w",
            ModelVariant::MetricOnly => "metric_only",
            ModelVariant::RotationsOnly => "rotations_only",
            ModelVariant::RegressionLoss => "regression_loss",
        }
    }

    /// Starting point: identities in this variant's factor layout.
    pub fn initial_point(self, d: usize) -> ProductPoint {
        let rot = || vec![OrthPoint::identity(d), OrthPoint::identity(d)];
        match self {
            ModelVariant::Full | ModelVariant::RegressionLoss => ProductPoint {
                orth: rot(),
                spd: Some(SpdPoint::identity(d)),
                free: vec![],
            },
            ModelVariant::UnconstrainedW => ProductPoint {
                orth: vec![],
                spd: None,
                free: vec![Mat::identity(d, d)],
            },
            ModelVariant::MetricOnly => ProductPoint {
                orth: vec![],
                spd: Some(SpdPoint::identity(d)),
                free: vec![],
            },
            ModelVariant::RotationsOnly => ProductPoint {
                orth: rot(),
                spd: None,
                free: vec![],
            },
        }
    }

    fn check_layout(self, x: &ProductPoint) -> Result<()> {
        let want = self.initial_point(0);
        if want.orth.len() != x.orth.len()
            || want.spd.is_some() != x.spd.is_some()
            || want.free.len() != x.free.len()
        {
            return Err(Error::VariantMismatch {
                variant: self.name().into(),
                what: format!(
                    "a point with {} rotations, {} metric, {} free matrices",
                    x.orth.len(),
                    x.spd.is_some() as usize,
                    x.free.len()
                ),
            });
        }
        Ok(())
    }

    /// Turn a point in this variant's layout into model parameters for the
    /// pair `(src, tgt)`. The unconstrained map `W` is factored by SVD as
    /// `U Σ Vᵀ` with `U_t = U`, `U_s = V`, `B = Σ` (singular values are
    /// floored at `1e-12` so that `B` stays positive definite).
    pub fn to_params(self, x: &ProductPoint, src: &str, tgt: &str) -> Result<GeommParams> {
        self.check_layout(x)?;
        let langs = vec![src.to_string(), tgt.to_string()];
        let d = x.dim();
        match self {
            ModelVariant::Full | ModelVariant::RegressionLoss => {
                GeommParams::new(langs, x.orth.clone(), x.spd.clone().unwrap())
            }
            ModelVariant::MetricOnly => GeommParams::new(
                langs,
                vec![OrthPoint::identity(d), OrthPoint::identity(d)],
                x.spd.clone().unwrap(),
            ),
            ModelVariant::RotationsOnly => GeommParams::new(langs, x.orth.clone(), SpdPoint::identity(d)),
            ModelVariant::UnconstrainedW => {
                let svd = x.free[0].clone().svd(true, true);
                let u = svd.u.ok_or(Error::RankDeficient)?;
                let vt = svd.v_t.ok_or(Error::RankDeficient)?;
                let sigma = svd.singular_values.map(|s| s.max(linalg::EIGEN_FLOOR));
                GeommParams::new(
                    langs,
                    vec![
                        OrthPoint::new(vt.transpose())?,
                        OrthPoint::new(u)?,
                    ],
                    SpdPoint::new(Mat::from_diagonal(&sigma))?,
                )
            }
        }
    }
}

/// Cost and Euclidean gradient of a variant at `x` (in the variant's layout).
pub fn variant_egrad(
    variant: ModelVariant,
    x: &ProductPoint,
    data: &DictionaryData,
    lambda: f64,
) -> Result<(f64, TangentVector)> {
    variant.check_layout(x)?;
    let d = data.dim();
    match variant {
        ModelVariant::Full => {
            let (f, g) = bilingual_egrad(
                x.orth[0].matrix(),
                x.spd.as_ref().unwrap().matrix(),
                x.orth[1].matrix(),
                data,
                lambda,
            )?;
            Ok((
                f,
                TangentVector {
                    orth: vec![g.us, g.ut],
                    spd: Some(g.b),
                    free: vec![],
                },
            ))
        }
        ModelVariant::UnconstrainedW => {
            let w = &x.free[0];
            linalg::ensure_square(w, d)?;
            let (f, ga) = data.loss_and_grad(&w.transpose());
            Ok((
                f + lambda * w.norm_squared(),
                TangentVector {
                    orth: vec![],
                    spd: None,
                    free: vec![ga.transpose() + w * (2.0 * lambda)],
                },
            ))
        }
        ModelVariant::MetricOnly => {
            let b = x.spd.as_ref().unwrap().matrix();
            linalg::ensure_square(b, d)?;
            let (f, ga) = data.loss_and_grad(b);
            Ok((
                f + lambda * b.norm_squared(),
                TangentVector {
                    orth: vec![],
                    spd: Some(sym(&ga) + b * (2.0 * lambda)),
                    free: vec![],
                },
            ))
        }
        ModelVariant::RotationsOnly => {
            let (us, ut) = (x.orth[0].matrix(), x.orth[1].matrix());
            linalg::ensure_square(us, d)?;
            let a = us * ut.transpose();
            let (f, ga) = data.loss_and_grad(&a);
            Ok((
                f + lambda * d as f64,
                TangentVector {
                    orth: vec![&ga * ut, ga.transpose() * us],
                    spd: None,
                    free: vec![],
                },
            ))
        }
        ModelVariant::RegressionLoss => {
            let (us, ut) = (x.orth[0].matrix(), x.orth[1].matrix());
            let b = x.spd.as_ref().unwrap().matrix();
            check_factors(us, b, ut, data)?;
            let w = ut * b * us.transpose();
            let (f, gw) = data.regression_loss_and_grad(&w);
            Ok((
                f + lambda * b.norm_squared(),
                TangentVector {
                    orth: vec![gw.transpose() * ut * b, &gw * us * b],
                    spd: Some(sym(&(ut.transpose() * &gw * us)) + b * (2.0 * lambda)),
                    free: vec![],
                },
            ))
        }
    }
}

pub fn variant_cost(variant: ModelVariant, x: &ProductPoint, data: &DictionaryData, lambda: f64) -> Result<f64> {
    Ok(variant_egrad(variant, x, data, lambda)?.0)
}

/// Orthogonal Procrustes solution.
#[derive(Clone, Debug)]
pub struct ProcrustesFit {
    /// Orthogonal `W` maximizing `tr(Wᵀ X_t X_sᵀ)`.
    pub w: Mat,
    /// The cross-covariance was rank deficient, so `W` is not unique.
    pub non_unique: bool,
}

/// Solve `max_W tr(Wᵀ X_t X_sᵀ)` over orthogonal `W` for column-aligned
/// pair matrices via the SVD of `X_t X_sᵀ`.
pub fn procrustes_fit(xs_pairs: &Mat, xt_pairs: &Mat) -> Result<ProcrustesFit> {
    if xs_pairs.shape() != xt_pairs.shape() {
        return Err(Error::dims(
            format!("{:?}", xs_pairs.shape()),
            format!("{:?}", xt_pairs.shape()),
        ));
    }
    procrustes_from_cross(&(xt_pairs * xs_pairs.transpose()))
}

/// Procrustes from a dictionary: the cross-covariance over label-one pairs.
pub fn procrustes_from_dictionary(data: &DictionaryData) -> Result<ProcrustesFit> {
    procrustes_from_cross(&data.cross.transpose())
}

fn procrustes_from_cross(m: &Mat) -> Result<ProcrustesFit> {
    if !linalg::is_finite(m) {
        return Err(Error::NonFinite("cross-covariance"));
    }
    let svd = m.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    let non_unique = smax == 0.0 || smin <= 1e-10 * smax;
    if non_unique {
        log::warn!("Procrustes cross-covariance is rank deficient; solution is not unique");
    }
    let u = svd.u.ok_or(Error::RankDeficient)?;
    let vt = svd.v_t.ok_or(Error::RankDeficient)?;
    Ok(ProcrustesFit {
        w: u * vt,
        non_unique,
    })
}

impl ProcrustesFit {
    /// As model parameters: `U_s = I`, `U_t = W`, `B = I`.
    pub fn to_params(&self, src: &str, tgt: &str) -> Result<GeommParams> {
        let d = self.w.nrows();
        GeommParams::new(
            vec![src.to_string(), tgt.to_string()],
            vec![OrthPoint::identity(d), OrthPoint::new(self.w.clone())?],
            SpdPoint::identity(d),
        )
    }
}

/// Bilingual training objective for one variant, in that variant's layout.
pub struct VariantProblem<'a> {
    pub variant: ModelVariant,
    pub data: &'a DictionaryData,
    pub lambda: f64,
}

impl Problem for VariantProblem<'_> {
    fn cost_and_egrad(&self, x: &ProductPoint) -> Result<(f64, TangentVector)> {
        variant_egrad(self.variant, x, self.data, self.lambda)
    }
}

/// Multilingual objective; rotations follow `languages` order.
pub struct MultilingualProblem<'a> {
    pub languages: &'a [String],
    pub edges: &'a [Edge],
    pub lambda: f64,
}

impl Problem for MultilingualProblem<'_> {
    fn cost_and_egrad(&self, x: &ProductPoint) -> Result<(f64, TangentVector)> {
        let b = x
            .spd
            .as_ref()
            .ok_or_else(|| Error::InvalidConfig("multilingual point needs a metric".into()))?;
        let rot: Vec<Mat> = x.orth.iter().map(|u| u.matrix().clone()).collect();
        let (f, g) = multilingual_egrad(self.languages, &rot, b.matrix(), self.edges, self.lambda)?;
        Ok((
            f,
            TangentVector {
                orth: g.rotations,
                spd: Some(g.b),
                free: vec![],
            },
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthetic::{random_matrix, random_orth, random_spd, random_unit_columns, rng};
    use rand::Rng;

    /// Dense oracle: form the full score and label matrices.
    fn dense_cost(us: &Mat, b: &Mat, ut: &Mat, data: &DictionaryData, lambda: f64) -> f64 {
        let s = data.src().transpose() * us * b * ut.transpose() * data.tgt();
        let mut y = Mat::zeros(s.nrows(), s.ncols());
        for &(i, j) in data.omega() {
            y[(i, j)] = 1.0;
        }
        (s - y).norm_squared() + lambda * b.norm_squared()
    }

    fn random_data(r: &mut rand_chacha::ChaCha8Rng, d: usize, ns: usize, nt: usize, k: usize) -> DictionaryData {
        let xs = random_unit_columns(r, d, ns);
        let xt = random_unit_columns(r, d, nt);
        let omega = (0..k)
            .map(|_| (r.random_range(0..ns), r.random_range(0..nt)))
            .collect();
        DictionaryData::new(xs, xt, omega).unwrap()
    }

    #[test]
    fn identity_embeddings_perfect_fit() {
        let d = 4;
        let i = Mat::identity(d, d);
        let data = DictionaryData::new(i.clone(), i.clone(), (0..d).map(|k| (k, k)).collect()).unwrap();
        let c = bilingual_cost(&i, &i, &i, &data, 0.0).unwrap();
        assert!(c.abs() < 1e-12);
    }

    #[test]
    fn single_label_on_orthogonal_columns_costs_one() {
        let d = 3;
        let i = Mat::identity(d, d);
        let xs = i.columns(0, 2).into_owned();
        let xt = i.columns(1, 2).into_owned();
        let data = DictionaryData::new(xs, xt, vec![(0, 0)]).unwrap();
        let c = bilingual_cost(&i, &i, &i, &data, 0.0).unwrap();
        // columns e0,e1 vs e1,e2: score matrix has a single 1 at (1,0), label at (0,0)
        assert!((c - dense_cost(&i, &i, &i, &data, 0.0)).abs() < 1e-12);
        let xs = Mat::from_column_slice(3, 1, &[1.0, 0.0, 0.0]);
        let xt = Mat::from_column_slice(3, 1, &[0.0, 1.0, 0.0]);
        let data = DictionaryData::new(xs, xt, vec![(0, 0)]).unwrap();
        assert!((bilingual_cost(&i, &i, &i, &data, 0.0).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn empty_or_invalid_dictionary_rejected() {
        let i = Mat::identity(2, 2);
        assert!(matches!(
            DictionaryData::new(i.clone(), i.clone(), vec![]),
            Err(Error::EmptyDictionary(_))
        ));
        assert!(DictionaryData::new(i.clone(), i.clone(), vec![(2, 0)]).is_err());
        assert!(DictionaryData::new(i.clone() * 2.0, i, vec![(0, 0)]).is_err());
    }

    #[test]
    fn factored_matches_dense() {
        let mut r = rng(21);
        for _ in 0..10 {
            let d = r.random_range(2..8);
            let (ns, nt) = (r.random_range(1..30), r.random_range(1..30));
            let data = random_data(&mut r, d, ns, nt, 20);
            let us = random_orth(&mut r, d).into_matrix();
            let ut = random_orth(&mut r, d).into_matrix();
            let b = random_spd(&mut r, d).into_matrix();
            let lam = 10.0;
            let f = bilingual_cost(&us, &b, &ut, &data, lam).unwrap();
            let g = dense_cost(&us, &b, &ut, &data, lam);
            assert!((f - g).abs() <= 1e-8 * g.abs().max(1.0));
        }
    }

    #[test]
    fn lambda_only_shifts_metric_gradient() {
        let mut r = rng(22);
        let data = random_data(&mut r, 4, 9, 7, 12);
        let us = random_orth(&mut r, 4).into_matrix();
        let ut = random_orth(&mut r, 4).into_matrix();
        let b = random_spd(&mut r, 4).into_matrix();
        let (_, g1) = bilingual_egrad(&us, &b, &ut, &data, 10.0).unwrap();
        let (_, g2) = bilingual_egrad(&us, &b, &ut, &data, 110.0).unwrap();
        assert_eq!(g1.us, g2.us);
        assert_eq!(g1.ut, g2.ut);
        assert!(((g2.b - g1.b) - &b * 200.0).norm() < 1e-9);
    }

    #[test]
    fn compose_and_similarity_examples() {
        let p = GeommParams::identity(vec!["en".into(), "it".into()], 3).unwrap();
        assert_eq!(p.compose_transform("en", "it").unwrap(), Mat::identity(3, 3));
        let e1 = [1.0, 0.0, 0.0];
        assert_eq!(p.similarity("en", "it", &e1, &e1).unwrap(), 1.0);
        assert!(matches!(p.compose_transform("en", "fr"), Err(Error::UnknownLanguage(_))));

        let mut r = rng(23);
        let p = GeommParams::new(
            vec!["a".into(), "b".into()],
            vec![random_orth(&mut r, 5), random_orth(&mut r, 5)],
            random_spd(&mut r, 5),
        )
        .unwrap();
        let x: Vec<f64> = (0..5).map(|_| r.random()).collect();
        let z: Vec<f64> = (0..5).map(|_| r.random()).collect();
        assert_eq!(
            p.similarity("a", "b", &x, &z).unwrap(),
            p.similarity("b", "a", &z, &x).unwrap()
        );
        let w = p.compose_transform("a", "b").unwrap();
        let direct = (Mat::from_row_slice(1, 5, &z) * w * Mat::from_column_slice(5, 1, &x))[(0, 0)];
        assert!((direct - p.similarity("a", "b", &x, &z).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn params_validation() {
        assert!(matches!(
            GeommParams::identity(vec!["a".into(), "a".into()], 2),
            Err(Error::DuplicateLanguage(_))
        ));
        assert!(OrthPoint::new(Mat::identity(2, 2) * 1.1).is_err());
    }

    #[test]
    fn multilingual_single_edge_reduces_to_bilingual() {
        let mut r = rng(24);
        let data = random_data(&mut r, 4, 8, 8, 10);
        let n = data.omega().len() as f64;
        let p = GeommParams::new(
            vec!["a".into(), "b".into()],
            vec![random_orth(&mut r, 4), random_orth(&mut r, 4)],
            random_spd(&mut r, 4),
        )
        .unwrap();
        let edges = vec![Edge { src: "a".into(), tgt: "b".into(), data: data.clone() }];
        let lam = 100.0;
        let m = multilingual_cost(&p, &edges, lam).unwrap();
        let (us, ut, b) = (
            p.rotations()[0].matrix(),
            p.rotations()[1].matrix(),
            p.metric().matrix(),
        );
        let bl = bilingual_cost(us, b, ut, &data, 0.0).unwrap();
        assert!((m - (bl / n + lam * b.norm_squared())).abs() < 1e-10 * m.abs());
    }

    #[test]
    fn multilingual_rejects_bad_edges() {
        let mut r = rng(25);
        let data = random_data(&mut r, 3, 4, 4, 3);
        let p = GeommParams::identity(vec!["a".into(), "b".into()], 3).unwrap();
        let dup = vec![
            Edge { src: "a".into(), tgt: "b".into(), data: data.clone() },
            Edge { src: "b".into(), tgt: "a".into(), data: data.clone() },
        ];
        assert!(matches!(multilingual_cost(&p, &dup, 1.0), Err(Error::DuplicateEdge(..))));
        let unk = vec![Edge { src: "a".into(), tgt: "c".into(), data }];
        assert!(matches!(multilingual_cost(&p, &unk, 1.0), Err(Error::UnknownLanguage(_))));
    }

    #[test]
    fn variant_basics() {
        let mut r = rng(26);
        let data = random_data(&mut r, 4, 6, 6, 6);
        let full = ModelVariant::Full.initial_point(4);
        let a = variant_cost(ModelVariant::Full, &full, &data, 10.0).unwrap();
        let i = Mat::identity(4, 4);
        assert!((a - bilingual_cost(&i, &i, &i, &data, 10.0).unwrap()).abs() < 1e-12);

        // W = 0 scores every pair 0, so only the |Ω| label-one entries cost.
        let zero = ProductPoint { orth: vec![], spd: None, free: vec![Mat::zeros(4, 4)] };
        let f = variant_cost(ModelVariant::UnconstrainedW, &zero, &data, 10.0).unwrap();
        assert_eq!(f, data.omega().len() as f64);

        assert!(matches!(
            variant_cost(ModelVariant::MetricOnly, &full, &data, 1.0),
            Err(Error::VariantMismatch { .. })
        ));
    }

    #[test]
    fn unconstrained_factorization_preserves_map() {
        let mut r = rng(27);
        let w = random_matrix(&mut r, 5, 5);
        let x = ProductPoint { orth: vec![], spd: None, free: vec![w.clone()] };
        let p = ModelVariant::UnconstrainedW.to_params(&x, "s", "t").unwrap();
        assert!((p.compose_transform("s", "t").unwrap() - w).norm() < 1e-10);
    }

    #[test]
    fn procrustes_identity_and_planted() {
        let mut r = rng(28);
        let xs = random_unit_columns(&mut r, 6, 40);
        let fit = procrustes_fit(&xs, &xs).unwrap();
        assert!((fit.w.clone() - Mat::identity(6, 6)).norm() <= 1e-8);
        assert!(!fit.non_unique);
        let q = random_orth(&mut r, 6).into_matrix();
        let fit = procrustes_fit(&xs, &(&q * &xs)).unwrap();
        assert!((fit.w - q).norm() <= 1e-6);
    }

    #[test]
    fn procrustes_degenerate_still_orthogonal() {
        let xs = Mat::from_column_slice(3, 1, &[1.0, 0.0, 0.0]);
        let xt = Mat::from_column_slice(3, 1, &[0.0, 1.0, 0.0]);
        let fit = procrustes_fit(&xs, &xt).unwrap();
        assert!(fit.non_unique);
        assert!(linalg::orthogonality_error(&fit.w) < 1e-10);
        assert!((&fit.w * &xs - &xt).norm() < 1e-10);
    }
}
