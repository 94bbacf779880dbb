use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::smo;
use crate::encoder::EncodingMode;
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"SHLFSVM1";
const VERSION: u32 = 1;

pub const DEFAULT_C: f64 = 2048.0;
/// Gaussian kernel width (sigma) in standardized feature units.
pub const DEFAULT_RBF_WIDTH: f64 = 2.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelKind {
    Linear,
    Rbf,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SvmParams {
    pub c: f64,
    pub kernel: KernelKind,
    /// RBF width `w`: `K(a, b) = exp(-|a - b|^2 / (2 w^2))`.
    pub rbf_width: f64,
    /// Stopping tolerance on the maximal KKT violation.
    pub eps: f64,
    pub max_iterations: usize,
}

impl Default for SvmParams {
    fn default() -> Self {
        Self {
            c: DEFAULT_C,
            kernel: KernelKind::Rbf,
            rbf_width: DEFAULT_RBF_WIDTH,
            eps: 1e-7,
            max_iterations: 50_000_000,
        }
    }
}

impl SvmParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.c.is_finite() && self.c > 0.0) {
            return Err(Error::param("c", "must be positive and finite"));
        }
        if self.kernel == KernelKind::Rbf && !(self.rbf_width.is_finite() && self.rbf_width > 0.0) {
            return Err(Error::param("rbf_width", "must be positive and finite"));
        }
        if !(self.eps.is_finite() && self.eps > 0.0) {
            return Err(Error::param("eps", "must be positive"));
        }
        Ok(())
    }
}

/// One-vs-rest SVMs over standardized features.
///
/// Kernel models keep the union of all classes' support vectors and one
/// coefficient row per class; linear models keep one weight row per class.
/// Every stored number is an f32 so a saved model reloads bit for bit.
#[derive(Clone, Debug, PartialEq)]
pub struct SvmModel {
    pub classes: Vec<String>,
    pub mode: EncodingMode,
    pub kernel: KernelKind,
    pub rbf_width: f64,
    pub c: f64,
    pub mean: Vec<f32>,
    pub scale: Vec<f32>,
    /// Kernel: `n_sv x dim` standardized support vectors. Linear: empty.
    pub support: Vec<f32>,
    /// Kernel: `classes x n_sv`. Linear: `classes x dim` weights.
    pub coef: Vec<f32>,
    pub bias: Vec<f32>,
}

/// Per-dimension mean and inverse standard deviation of `features`
/// (dimensions with no spread get scale 1).
fn standardizer(features: &[&[f32]], dim: usize) -> (Vec<f32>, Vec<f32>) {
    let n = features.len() as f64;
    let mut mean = vec![0.0f64; dim];
    for f in features {
        for (m, &v) in mean.iter_mut().zip(f.iter()) {
            *m += f64::from(v);
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut var = vec![0.0f64; dim];
    for f in features {
        for ((s, &v), m) in var.iter_mut().zip(f.iter()).zip(&mean) {
            *s += (f64::from(v) - m).powi(2);
        }
    }
    let scale = var
        .iter()
        .map(|s| {
            let sd = (s / n).sqrt();
            if sd > 1e-12 {
                (1.0 / sd) as f32
            } else {
                1.0
            }
        })
        .collect();
    (mean.iter().map(|&m| m as f32).collect(), scale)
}

fn kernel_value(kind: KernelKind, width: f64, a: &[f32], b: &[f32]) -> f64 {
    match kind {
        KernelKind::Linear => a.iter().zip(b).map(|(&x, &y)| f64::from(x) * f64::from(y)).sum(),
        KernelKind::Rbf => {
            let d: f64 = a
                .iter()
                .zip(b)
                .map(|(&x, &y)| (f64::from(x) - f64::from(y)).powi(2))
                .sum();
            (-d / (2.0 * width * width)).exp()
        }
    }
}

/// Trains one decision function per class (that class positive, all others
/// negative). Labels index `classes`.
pub fn train_ovr(
    features: &[&[f32]],
    labels: &[usize],
    classes: &[String],
    mode: EncodingMode,
    params: &SvmParams,
) -> Result<SvmModel> {
    params.validate()?;
    if features.len() != labels.len() {
        return Err(Error::LengthMismatch {
            expected: features.len(),
            got: labels.len(),
        });
    }
    if features.is_empty() {
        return Err(Error::Empty("training features"));
    }
    let l = classes.len();
    if let Some(&bad) = labels.iter().find(|&&y| y >= l) {
        return Err(Error::LabelOutOfRange { label: bad, classes: l });
    }
    if l < 2 {
        return Err(Error::param("classes", "at least 2 classes required"));
    }
    for (c, name) in classes.iter().enumerate() {
        if !labels.contains(&c) {
            return Err(Error::NoPositives(name.clone()));
        }
    }
    let dim = features[0].len();
    if let Some(f) = features.iter().find(|f| f.len() != dim) {
        return Err(Error::LengthMismatch {
            expected: dim,
            got: f.len(),
        });
    }
    if features.iter().any(|f| f.iter().any(|v| !v.is_finite())) {
        return Err(Error::param("features", "non-finite value"));
    }

    let (mean, scale) = standardizer(features, dim);
    let z: Vec<Vec<f32>> = features
        .iter()
        .map(|f| standardize(f, &mean, &scale))
        .collect();
    let n = z.len();
    let mut gram = vec![0.0f64; n * n];
    for i in 0..n {
        for j in i..n {
            let v = kernel_value(params.kernel, params.rbf_width, &z[i], &z[j]);
            gram[i * n + j] = v;
            gram[j * n + i] = v;
        }
    }

    let solutions = crate::par::map(l, true, |c| {
        let y: Vec<f64> = labels.iter().map(|&t| if t == c { 1.0 } else { -1.0 }).collect();
        let sol = smo::solve(&gram, &y, params.c, params.eps, params.max_iterations);
        if sol.violation >= params.eps {
            log::warn!("class {c}: solver stopped at KKT violation {:.3e}", sol.violation);
        }
        (y, sol)
    });

    let bias: Vec<f32> = solutions.iter().map(|(_, s)| (-s.rho) as f32).collect();
    let (support, coef) = match params.kernel {
        KernelKind::Rbf => {
            let used: Vec<usize> = (0..n)
                .filter(|&i| solutions.iter().any(|(_, s)| s.alpha[i] > 0.0))
                .collect();
            let support: Vec<f32> = used.iter().flat_map(|&i| z[i].iter().copied()).collect();
            let coef = solutions
                .iter()
                .flat_map(|(y, s)| used.iter().map(move |&i| (s.alpha[i] * y[i]) as f32))
                .collect();
            (support, coef)
        }
        KernelKind::Linear => {
            let coef = solutions
                .iter()
                .flat_map(|(y, s)| {
                    let mut w = vec![0.0f64; dim];
                    for i in 0..n {
                        let a = s.alpha[i] * y[i];
                        if a != 0.0 {
                            for (wk, &x) in w.iter_mut().zip(&z[i]) {
                                *wk += a * f64::from(x);
                            }
                        }
                    }
                    w.into_iter().map(|v| v as f32)
                })
                .collect();
            (Vec::new(), coef)
        }
    };
    Ok(SvmModel {
        classes: classes.to_vec(),
        mode,
        kernel: params.kernel,
        rbf_width: params.rbf_width,
        c: params.c,
        mean,
        scale,
        support,
        coef,
        bias,
    })
}

fn standardize(f: &[f32], mean: &[f32], scale: &[f32]) -> Vec<f32> {
    f.iter()
        .zip(mean)
        .zip(scale)
        .map(|((&v, &m), &s)| (v - m) * s)
        .collect()
}

impl SvmModel {
    pub fn num_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn num_support(&self) -> usize {
        self.support.len() / self.dim().max(1)
    }

    /// One decision value per class.
    pub fn decision_values(&self, feature: &[f32]) -> Result<Vec<f64>> {
        let dim = self.dim();
        if feature.len() != dim {
            return Err(Error::LengthMismatch {
                expected: dim,
                got: feature.len(),
            });
        }
        let z = standardize(feature, &self.mean, &self.scale);
        let l = self.num_classes();
        let values = match self.kernel {
            KernelKind::Linear => (0..l)
                .map(|c| kernel_value(KernelKind::Linear, 0.0, &self.coef[c * dim..(c + 1) * dim], &z) + f64::from(self.bias[c]))
                .collect(),
            KernelKind::Rbf => {
                let nsv = self.num_support();
                let k: Vec<f64> = (0..nsv)
                    .map(|i| kernel_value(KernelKind::Rbf, self.rbf_width, &self.support[i * dim..(i + 1) * dim], &z))
                    .collect();
                (0..l)
                    .map(|c| {
                        let row = &self.coef[c * nsv..(c + 1) * nsv];
                        row.iter().zip(&k).map(|(&a, &kv)| f64::from(a) * kv).sum::<f64>() + f64::from(self.bias[c])
                    })
                    .collect()
            }
        };
        Ok(values)
    }

    /// Highest-scoring class (lowest index on ties) and its decision value.
    pub fn predict(&self, feature: &[f32]) -> Result<(usize, f64)> {
        let values = self.decision_values(feature)?;
        Ok(argmax(&values))
    }

    /// The predicted class only when its score exceeds `tau`.
    pub fn predict_thresholded(&self, feature: &[f32], tau: f64) -> Result<Option<usize>> {
        let (c, s) = self.predict(feature)?;
        Ok((s > tau).then_some(c))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        put_u32(&mut out, self.classes.len());
        for name in &self.classes {
            put_u32(&mut out, name.len());
            out.extend_from_slice(name.as_bytes());
        }
        put_u32(&mut out, usize::from(self.mode == EncodingMode::Pyramid));
        put_u32(&mut out, usize::from(self.kernel == KernelKind::Rbf));
        out.extend_from_slice(&self.rbf_width.to_le_bytes());
        out.extend_from_slice(&self.c.to_le_bytes());
        put_u32(&mut out, self.dim());
        put_u32(&mut out, self.num_support());
        for part in [&self.mean, &self.scale, &self.support, &self.coef, &self.bias] {
            for v in part.iter() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = bytes;
        let mut magic = [0u8; 8];
        take(&mut r, &mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Format("not a classifier model".into()));
        }
        let version = get_u32(&mut r)?;
        if version != VERSION as usize {
            return Err(Error::Format(format!("unsupported model version {version}")));
        }
        let l = get_u32(&mut r)?;
        if l > r.len() {
            return Err(Error::Format("truncated model".into()));
        }
        let mut classes = Vec::with_capacity(l);
        for _ in 0..l {
            let len = get_u32(&mut r)?;
            if len > r.len() {
                return Err(Error::Format("truncated class name".into()));
            }
            let mut buf = vec![0u8; len];
            take(&mut r, &mut buf)?;
            classes.push(String::from_utf8(buf).map_err(|_| Error::Format("class name is not UTF-8".into()))?);
        }
        let mode = if get_u32(&mut r)? == 1 {
            EncodingMode::Pyramid
        } else {
            EncodingMode::Whole
        };
        let kernel = if get_u32(&mut r)? == 1 {
            KernelKind::Rbf
        } else {
            KernelKind::Linear
        };
        let rbf_width = get_f64(&mut r)?;
        let c = get_f64(&mut r)?;
        let dim = get_u32(&mut r)?;
        let nsv = get_u32(&mut r)?;
        let coef_len = match kernel {
            KernelKind::Rbf => l * nsv,
            KernelKind::Linear => l * dim,
        };
        let total = 2 * dim + nsv * dim + coef_len + l;
        if total * 4 != r.len() {
            return Err(Error::Format("model payload has the wrong size".into()));
        }
        let mut floats = |count: usize| -> Result<Vec<f32>> { (0..count).map(|_| get_f32(&mut r)).collect() };
        let mean = floats(dim)?;
        let scale = floats(dim)?;
        let support = floats(nsv * dim)?;
        let coef = floats(coef_len)?;
        let bias = floats(l)?;
        Ok(SvmModel {
            classes,
            mode,
            kernel,
            rbf_width,
            c,
            mean,
            scale,
            support,
            coef,
            bias,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::File::create(path)
            .and_then(|mut f| f.write_all(&self.to_bytes()))
            .map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }

    /// SHA-256 of the serialized model, hex encoded.
    pub fn content_hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_bytes()))
    }
}

/// Index and value of the maximum (first index on ties).
pub fn argmax(values: &[f64]) -> (usize, f64) {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, &v) in values.iter().enumerate() {
        if v > best.1 {
            best = (i, v);
        }
    }
    best
}

fn put_u32(out: &mut Vec<u8>, v: usize) {
    out.extend_from_slice(&u32::try_from(v).expect("fits in u32").to_le_bytes());
}

fn take(r: &mut &[u8], buf: &mut [u8]) -> Result<()> {
    r.read_exact(buf).map_err(|_| Error::Format("unexpected end of data".into()))
}

fn get_u32(r: &mut &[u8]) -> Result<usize> {
    let mut b = [0u8; 4];
    take(r, &mut b)?;
    Ok(u32::from_le_bytes(b) as usize)
}

fn get_f32(r: &mut &[u8]) -> Result<f32> {
    let mut b = [0u8; 4];
    take(r, &mut b)?;
    Ok(f32::from_le_bytes(b))
}

fn get_f64(r: &mut &[u8]) -> Result<f64> {
    let mut b = [0u8; 8];
    take(r, &mut b)?;
    Ok(f64::from_le_bytes(b))
}
