//! Score functions and relational context functions for TransE, DistMult, RotatE and OTE.
//!
//! Every family exposes the same three maps over an entity vector `x` and relation `r`:
//!
//! * `head_context(x, r)`: where the relation sends a head entity (`h + r`, `h ⊙ r`, ...);
//! * `tail_context(x, r)`: the inverse map applied to a tail entity;
//! * `score(h, r, t)`: plausibility of the triplet, higher is better.
//!
//! For the three distance-based families `score(h, r, t) = -‖head_context(h, r) - t‖`.
//! DistMult scores with the trilinear product `Σ h·r·t`.
//!
//! Vectors are read in the store's width `F` and all arithmetic is carried out in `f64`.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::real::Real;

/// `exp(s)` is evaluated on `s` clamped to this range.
pub const SCALE_LOG_BOUND: f64 = 10.0;

/// A Gram-Schmidt column whose residual drops below this is treated as degenerate.
pub const GRAM_SCHMIDT_EPS: f64 = 1e-8;

const PERTURB_MAGNITUDE: f64 = 1e-6;
const PERTURB_SEED: u64 = 0x005e_ed0f_0e7e;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelFamily {
    TransE,
    DistMult,
    RotatE,
    Ote,
}

impl ModelFamily {
    pub const ALL: [ModelFamily; 4] = [
        ModelFamily::TransE,
        ModelFamily::DistMult,
        ModelFamily::RotatE,
        ModelFamily::Ote,
    ];

    pub fn tag(self) -> u8 {
        match self {
            ModelFamily::TransE => 0,
            ModelFamily::DistMult => 1,
            ModelFamily::RotatE => 2,
            ModelFamily::Ote => 3,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        Self::ALL.into_iter().find(|f| f.tag() == tag)
    }

    pub fn name(self) -> &'static str {
        match self {
            ModelFamily::TransE => "transe",
            ModelFamily::DistMult => "distmult",
            ModelFamily::RotatE => "rotate",
            ModelFamily::Ote => "ote",
        }
    }
}

impl fmt::Display for ModelFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "transe" => Ok(ModelFamily::TransE),
            "distmult" => Ok(ModelFamily::DistMult),
            "rotate" => Ok(ModelFamily::RotatE),
            "ote" => Ok(ModelFamily::Ote),
            other => Err(Error::Config(format!("unknown model family {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NormOrder {
    L1,
    L2,
}

impl NormOrder {
    pub fn tag(self) -> u8 {
        match self {
            NormOrder::L1 => 1,
            NormOrder::L2 => 2,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            1 => Some(NormOrder::L1),
            2 => Some(NormOrder::L2),
            _ => None,
        }
    }
}

impl FromStr for NormOrder {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "l1" | "1" => Ok(NormOrder::L1),
            "l2" | "2" => Ok(NormOrder::L2),
            other => Err(Error::Config(format!("unknown norm order {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub family: ModelFamily,
    /// Real dimension of an entity vector. RotatE reads it as `dim / 2` complex numbers.
    pub dim: usize,
    /// Margin of the ranking hinge.
    pub margin: f64,
    pub norm: NormOrder,
    /// Number of orthogonal blocks per OTE relation. Ignored by the other families.
    pub ote_groups: usize,
}

impl ModelSpec {
    pub fn new(family: ModelFamily, dim: usize) -> Self {
        Self {
            family,
            dim,
            margin: 1.0,
            norm: NormOrder::L2,
            ote_groups: 1,
        }
    }

    pub fn with_margin(mut self, margin: f64) -> Self {
        self.margin = margin;
        self
    }

    pub fn with_norm(mut self, norm: NormOrder) -> Self {
        self.norm = norm;
        self
    }

    pub fn with_groups(mut self, groups: usize) -> Self {
        self.ote_groups = groups;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::Config("dim must be positive".into()));
        }
        if !(self.margin.is_finite() && self.margin >= 0.0) {
            return Err(Error::Config(format!("margin must be finite and >= 0, got {}", self.margin)));
        }
        match self.family {
            ModelFamily::RotatE if !self.dim.is_multiple_of(2) => Err(Error::Config(format!(
                "rotate needs an even dim, got {}",
                self.dim
            ))),
            ModelFamily::Ote if self.ote_groups == 0 || !self.dim.is_multiple_of(self.ote_groups) => {
                Err(Error::Config(format!(
                    "ote needs dim divisible by groups, got dim={} groups={}",
                    self.dim, self.ote_groups
                )))
            }
            _ => Ok(()),
        }
    }

    /// OTE block size `dim / groups`.
    pub fn group_size(&self) -> usize {
        self.dim / self.ote_groups.max(1)
    }

    /// Number of scalars in one relation's parameter row.
    pub fn relation_width(&self) -> usize {
        match self.family {
            ModelFamily::TransE | ModelFamily::DistMult => self.dim,
            ModelFamily::RotatE => self.dim / 2,
            ModelFamily::Ote => {
                let g = self.group_size();
                self.ote_groups * (g * g + g)
            }
        }
    }

    fn metric(&self) -> Metric {
        match (self.family, self.norm) {
            (ModelFamily::RotatE, NormOrder::L1) => Metric::ComplexL1,
            (_, NormOrder::L1) => Metric::L1,
            (_, NormOrder::L2) => Metric::L2,
        }
    }
}

/// Orthonormalizes the columns of a row-major `g × g` matrix.
///
/// Returns `Q` (row-major). A column whose residual norm falls below
/// [`GRAM_SCHMIDT_EPS`] triggers one retry on a slightly perturbed copy of the input.
pub fn gram_schmidt(m: &[f64], g: usize) -> Result<Vec<f64>> {
    Ok(orthonormalize(m, g)?.q)
}

/// `M = QR` from Gram-Schmidt, kept together for the backward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct QrFactors {
    pub q: Vec<f64>,
    pub r: Vec<f64>,
}

pub fn orthonormalize(m: &[f64], g: usize) -> Result<QrFactors> {
    if m.len() != g * g {
        return Err(Error::Dimension {
            expected: g * g,
            got: m.len(),
        });
    }
    match gram_schmidt_once(m, g) {
        Ok(f) => Ok(f),
        Err(_) => {
            let mut rng = ChaCha8Rng::seed_from_u64(PERTURB_SEED);
            let perturbed: Vec<f64> = m
                .iter()
                .map(|&x| x + rng.gen_range(-PERTURB_MAGNITUDE..PERTURB_MAGNITUDE))
                .collect();
            gram_schmidt_once(&perturbed, g).map_err(|(column, residual)| Error::DegenerateMatrix {
                column,
                residual,
            })
        }
    }
}

// Modified Gram-Schmidt over columns; `r[j][k] = q_j · a_k`.
fn gram_schmidt_once(m: &[f64], g: usize) -> Result<QrFactors, (usize, f64)> {
    let mut cols: Vec<Vec<f64>> = (0..g).map(|j| (0..g).map(|i| m[i * g + j]).collect()).collect();
    let mut r = vec![0.0; g * g];
    for k in 0..g {
        let (done, rest) = cols.split_at_mut(k);
        let col = &mut rest[0];
        for (j, q) in done.iter().enumerate() {
            let proj = dot(q, col);
            r[j * g + k] = proj;
            for (c, qv) in col.iter_mut().zip(q) {
                *c -= proj * qv;
            }
        }
        let norm = dot(col, col).sqrt();
        if norm.is_nan() || norm < GRAM_SCHMIDT_EPS {
            return Err((k, norm));
        }
        r[k * g + k] = norm;
        col.iter_mut().for_each(|c| *c /= norm);
    }
    let mut q = vec![0.0; g * g];
    for (j, col) in cols.iter().enumerate() {
        for (i, v) in col.iter().enumerate() {
            q[i * g + j] = *v;
        }
    }
    Ok(QrFactors { q, r })
}

/// Gradient of a loss with respect to `M` given its gradient with respect to `Q`, for square `M = QR`.
pub fn qr_backward(f: &QrFactors, grad_q: &[f64], g: usize) -> Vec<f64> {
    // M̄ = Q · tril(QᵀQ̄ − Q̄ᵀQ) · R⁻ᵀ
    let q = &f.q;
    let mut qtg = vec![0.0; g * g];
    for i in 0..g {
        for j in 0..g {
            qtg[i * g + j] = (0..g).map(|k| q[k * g + i] * grad_q[k * g + j]).sum();
        }
    }
    let mut lower = vec![0.0; g * g];
    for i in 0..g {
        for j in 0..i {
            lower[i * g + j] = qtg[i * g + j] - qtg[j * g + i];
        }
    }
    let mut x = vec![0.0; g * g];
    for i in 0..g {
        for j in 0..g {
            x[i * g + j] = (0..g).map(|k| q[i * g + k] * lower[k * g + j]).sum();
        }
    }
    // Y Rᵀ = X, row by row: R yᵀ = xᵀ by back substitution.
    let r = &f.r;
    let mut y = vec![0.0; g * g];
    for row in 0..g {
        for i in (0..g).rev() {
            let mut acc = x[row * g + i];
            for k in i + 1..g {
                acc -= r[i * g + k] * y[row * g + k];
            }
            y[row * g + i] = acc / r[i * g + i];
        }
    }
    y
}

#[derive(Debug, Clone, PartialEq)]
pub struct OteBlock {
    pub factors: QrFactors,
    /// `exp(clamp(s))` per coordinate.
    pub scale: Vec<f64>,
    /// Whether `s` is strictly inside the clamp range (gradient flows).
    pub scale_active: Vec<bool>,
}

/// Relation parameters in the form the score and context functions consume.
///
/// Building one runs Gram-Schmidt for OTE, so callers that score many triplets
/// against a fixed relation should prepare it once.
#[derive(Debug, Clone, PartialEq)]
pub enum PreparedRelation {
    Translation(Vec<f64>),
    Diagonal(Vec<f64>),
    Rotation { cos: Vec<f64>, sin: Vec<f64> },
    Orthogonal(Vec<OteBlock>),
}

impl PreparedRelation {
    pub fn new<F: Real>(spec: &ModelSpec, raw: &[F]) -> Result<Self> {
        check_len(spec.relation_width(), raw.len())?;
        Ok(match spec.family {
            ModelFamily::TransE => PreparedRelation::Translation(to_f64(raw)),
            ModelFamily::DistMult => PreparedRelation::Diagonal(to_f64(raw)),
            ModelFamily::RotatE => {
                let theta = to_f64(raw);
                PreparedRelation::Rotation {
                    cos: theta.iter().map(|t| t.cos()).collect(),
                    sin: theta.iter().map(|t| t.sin()).collect(),
                }
            }
            ModelFamily::Ote => {
                let g = spec.group_size();
                let stride = g * g + g;
                let blocks = raw
                    .chunks_exact(stride)
                    .map(|chunk| {
                        let m = to_f64(&chunk[..g * g]);
                        let s = to_f64(&chunk[g * g..]);
                        Ok(OteBlock {
                            factors: orthonormalize(&m, g)?,
                            scale: s.iter().map(|&v| clamped_exp(v)).collect(),
                            scale_active: s.iter().map(|v| v.abs() < SCALE_LOG_BOUND).collect(),
                        })
                    })
                    .collect::<Result<Vec<_>>>()?;
                PreparedRelation::Orthogonal(blocks)
            }
        })
    }

    /// Image of `x` under the relation, in `f64`.
    pub fn head_context<F: Real>(&self, x: &[F]) -> Vec<f64> {
        let mut out = vec![0.0; x.len()];
        self.add_head_context(x, &mut out);
        out
    }

    /// Inverse map of [`head_context`](Self::head_context) (DistMult: the same product).
    pub fn tail_context<F: Real>(&self, x: &[F]) -> Vec<f64> {
        let mut out = vec![0.0; x.len()];
        self.add_tail_context(x, &mut out);
        out
    }

    /// `acc += head_context(x)`.
    pub fn add_head_context<F: Real>(&self, x: &[F], acc: &mut [f64]) {
        match self {
            PreparedRelation::Translation(r) => {
                for ((a, &v), b) in acc.iter_mut().zip(x).zip(r) {
                    *a += v.as_f64() + b;
                }
            }
            PreparedRelation::Diagonal(r) => {
                for ((a, &v), b) in acc.iter_mut().zip(x).zip(r) {
                    *a += v.as_f64() * b;
                }
            }
            PreparedRelation::Rotation { cos, sin } => {
                let half = cos.len();
                for j in 0..half {
                    let (re, im) = (x[j].as_f64(), x[j + half].as_f64());
                    acc[j] += re * cos[j] - im * sin[j];
                    acc[j + half] += re * sin[j] + im * cos[j];
                }
            }
            PreparedRelation::Orthogonal(blocks) => {
                let g = blocks[0].scale.len();
                for (b, block) in blocks.iter().enumerate() {
                    let xs = &x[b * g..(b + 1) * g];
                    let q = &block.factors.q;
                    for i in 0..g {
                        let z: f64 = (0..g).map(|j| q[i * g + j] * xs[j].as_f64()).sum();
                        acc[b * g + i] += block.scale[i] * z;
                    }
                }
            }
        }
    }

    /// `acc += tail_context(x)`.
    pub fn add_tail_context<F: Real>(&self, x: &[F], acc: &mut [f64]) {
        match self {
            PreparedRelation::Translation(r) => {
                for ((a, &v), b) in acc.iter_mut().zip(x).zip(r) {
                    *a += v.as_f64() - b;
                }
            }
            PreparedRelation::Diagonal(r) => {
                for ((a, &v), b) in acc.iter_mut().zip(x).zip(r) {
                    *a += v.as_f64() * b;
                }
            }
            PreparedRelation::Rotation { cos, sin } => {
                let half = cos.len();
                for j in 0..half {
                    let (re, im) = (x[j].as_f64(), x[j + half].as_f64());
                    acc[j] += re * cos[j] + im * sin[j];
                    acc[j + half] += -re * sin[j] + im * cos[j];
                }
            }
            PreparedRelation::Orthogonal(blocks) => {
                // (diag(e^s) Q)^-1 = Qᵀ diag(e^-s)
                let g = blocks[0].scale.len();
                let mut unscaled = vec![0.0; g];
                for (b, block) in blocks.iter().enumerate() {
                    let q = &block.factors.q;
                    for i in 0..g {
                        unscaled[i] = x[b * g + i].as_f64() / block.scale[i];
                    }
                    for j in 0..g {
                        acc[b * g + j] += (0..g).map(|i| q[i * g + j] * unscaled[i]).sum::<f64>();
                    }
                }
            }
        }
    }

    /// Score of `(h, r, t)` given `head = head_context(h)`.
    pub fn score_from_head<F: Real>(&self, spec: &ModelSpec, head: &[f64], t: &[F]) -> f64 {
        match self {
            PreparedRelation::Diagonal(_) => head.iter().zip(t).map(|(a, &b)| a * b.as_f64()).sum(),
            PreparedRelation::Orthogonal(blocks) => {
                let g = blocks[0].scale.len();
                let metric = spec.metric();
                -(0..blocks.len())
                    .map(|b| metric.distance_to(&head[b * g..(b + 1) * g], &t[b * g..(b + 1) * g]))
                    .sum::<f64>()
            }
            _ => -spec.metric().distance_to(head, t),
        }
    }

    pub fn score<F: Real>(&self, spec: &ModelSpec, h: &[F], t: &[F]) -> f64 {
        let head = self.head_context(h);
        self.score_from_head(spec, &head, t)
    }

    /// Closed-form gradient of `score(h, r, t)` with respect to `h`, `t` and the raw relation row.
    pub fn score_gradient<F: Real>(&self, spec: &ModelSpec, h: &[F], t: &[F]) -> ScoreGradient {
        let n = h.len();
        let metric = spec.metric();
        match self {
            PreparedRelation::Translation(_) => {
                let head = self.head_context(h);
                let d = diff(&head, t);
                let (gd, kink) = metric.neg_distance_grad(&d);
                ScoreGradient {
                    h: gd.clone(),
                    t: gd.iter().map(|v| -v).collect(),
                    relation: gd,
                    kink_distance: kink,
                }
            }
            PreparedRelation::Diagonal(r) => {
                let hv = to_f64(h);
                let tv = to_f64(t);
                ScoreGradient {
                    h: r.iter().zip(&tv).map(|(a, b)| a * b).collect(),
                    t: r.iter().zip(&hv).map(|(a, b)| a * b).collect(),
                    relation: hv.iter().zip(&tv).map(|(a, b)| a * b).collect(),
                    kink_distance: f64::INFINITY,
                }
            }
            PreparedRelation::Rotation { cos, sin } => {
                let half = n / 2;
                let head = self.head_context(h);
                let d = diff(&head, t);
                let (gd, kink) = metric.neg_distance_grad(&d);
                let mut gh = vec![0.0; n];
                let mut gt = vec![0.0; n];
                let mut gr = vec![0.0; half];
                for j in 0..half {
                    let (a, b) = (h[j].as_f64(), h[j + half].as_f64());
                    let (g_re, g_im) = (gd[j], gd[j + half]);
                    gh[j] = g_re * cos[j] + g_im * sin[j];
                    gh[j + half] = -g_re * sin[j] + g_im * cos[j];
                    gt[j] = -g_re;
                    gt[j + half] = -g_im;
                    gr[j] = g_re * (-a * sin[j] - b * cos[j]) + g_im * (a * cos[j] - b * sin[j]);
                }
                ScoreGradient {
                    h: gh,
                    t: gt,
                    relation: gr,
                    kink_distance: kink,
                }
            }
            PreparedRelation::Orthogonal(blocks) => {
                let g = blocks[0].scale.len();
                let head = self.head_context(h);
                let mut gh = vec![0.0; n];
                let mut gt = vec![0.0; n];
                let mut gr = Vec::with_capacity(spec.relation_width());
                let mut kink = f64::INFINITY;
                for (b, block) in blocks.iter().enumerate() {
                    let range = b * g..(b + 1) * g;
                    let y = &head[range.clone()];
                    let d = diff(y, &t[range.clone()]);
                    let (gd, k) = metric.neg_distance_grad(&d);
                    kink = kink.min(k);
                    let gz: Vec<f64> = gd.iter().zip(&block.scale).map(|(a, s)| a * s).collect();
                    let q = &block.factors.q;
                    for j in 0..g {
                        gh[b * g + j] = (0..g).map(|i| q[i * g + j] * gz[i]).sum();
                    }
                    for i in 0..g {
                        gt[b * g + i] = -gd[i];
                    }
                    let hs = &h[range];
                    let mut grad_q = vec![0.0; g * g];
                    for i in 0..g {
                        for j in 0..g {
                            grad_q[i * g + j] = gz[i] * hs[j].as_f64();
                        }
                    }
                    gr.extend(qr_backward(&block.factors, &grad_q, g));
                    for i in 0..g {
                        gr.push(if block.scale_active[i] { gd[i] * y[i] } else { 0.0 });
                    }
                }
                ScoreGradient {
                    h: gh,
                    t: gt,
                    relation: gr,
                    kink_distance: kink,
                }
            }
        }
    }
}

/// Gradient of a triplet score.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreGradient {
    pub h: Vec<f64>,
    pub t: Vec<f64>,
    /// In the raw parameter space of the relation row.
    pub relation: Vec<f64>,
    /// Distance to the nearest non-differentiable point of the norm (infinite for DistMult).
    pub kink_distance: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Metric {
    L1,
    L2,
    /// Sum of complex moduli over `(re, im)` pairs laid out as `[re.., im..]`.
    ComplexL1,
}

impl Metric {
    fn distance_to<F: Real>(self, a: &[f64], b: &[F]) -> f64 {
        match self {
            Metric::L1 => a.iter().zip(b).map(|(x, &y)| (x - y.as_f64()).abs()).sum(),
            Metric::L2 => a
                .iter()
                .zip(b)
                .map(|(x, &y)| {
                    let d = x - y.as_f64();
                    d * d
                })
                .sum::<f64>()
                .sqrt(),
            Metric::ComplexL1 => {
                let half = a.len() / 2;
                (0..half)
                    .map(|j| {
                        let re = a[j] - b[j].as_f64();
                        let im = a[j + half] - b[j + half].as_f64();
                        re.hypot(im)
                    })
                    .sum()
            }
        }
    }

    /// Gradient of `-‖d‖` with respect to `d`, plus distance to the nearest kink.
    fn neg_distance_grad(self, d: &[f64]) -> (Vec<f64>, f64) {
        match self {
            Metric::L1 => {
                let grad = d.iter().map(|&v| -sign0(v)).collect();
                let kink = d.iter().map(|v| v.abs()).fold(f64::INFINITY, f64::min);
                (grad, kink)
            }
            Metric::L2 => {
                let norm = d.iter().map(|v| v * v).sum::<f64>().sqrt();
                if norm == 0.0 {
                    (vec![0.0; d.len()], 0.0)
                } else {
                    (d.iter().map(|v| -v / norm).collect(), norm)
                }
            }
            Metric::ComplexL1 => {
                let half = d.len() / 2;
                let mut grad = vec![0.0; d.len()];
                let mut kink = f64::INFINITY;
                for j in 0..half {
                    let m = d[j].hypot(d[j + half]);
                    kink = kink.min(m);
                    if m > 0.0 {
                        grad[j] = -d[j] / m;
                        grad[j + half] = -d[j + half] / m;
                    }
                }
                (grad, kink)
            }
        }
    }
}

// Subgradient of |x| with 0 at the kink.
fn sign0(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

pub(crate) fn clamped_exp(s: f64) -> f64 {
    s.clamp(-SCALE_LOG_BOUND, SCALE_LOG_BOUND).exp()
}

fn diff<F: Real>(a: &[f64], b: &[F]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, &y)| x - y.as_f64()).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn to_f64<F: Real>(v: &[F]) -> Vec<f64> {
    v.iter().map(|x| x.as_f64()).collect()
}

fn check_len(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::Dimension { expected, got })
    }
}

fn check_entity(spec: &ModelSpec, x: &[impl Real]) -> Result<()> {
    check_len(spec.dim, x.len())
}

/// Plausibility of `(h, r, t)` for the family in `spec`; higher is more plausible.
pub fn score<F: Real>(spec: &ModelSpec, h: &[F], relation: &[F], t: &[F]) -> Result<f64> {
    check_entity(spec, h)?;
    check_entity(spec, t)?;
    Ok(PreparedRelation::new(spec, relation)?.score(spec, h, t))
}

pub fn head_context<F: Real>(spec: &ModelSpec, h: &[F], relation: &[F]) -> Result<Vec<f64>> {
    check_entity(spec, h)?;
    Ok(PreparedRelation::new(spec, relation)?.head_context(h))
}

pub fn tail_context<F: Real>(spec: &ModelSpec, t: &[F], relation: &[F]) -> Result<Vec<f64>> {
    check_entity(spec, t)?;
    Ok(PreparedRelation::new(spec, relation)?.tail_context(t))
}

pub fn score_gradient<F: Real>(
    spec: &ModelSpec,
    h: &[F],
    relation: &[F],
    t: &[F],
) -> Result<ScoreGradient> {
    check_entity(spec, h)?;
    check_entity(spec, t)?;
    Ok(PreparedRelation::new(spec, relation)?.score_gradient(spec, h, t))
}
