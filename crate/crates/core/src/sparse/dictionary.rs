//! Nonnegative dictionaries with unit-norm atoms and their training.

use std::path::{Path, PathBuf};

use log::debug;
use rand::seq::index::sample;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use super::lasso::{solve_nnqp, Solution};
use super::PenaltyRule;
use crate::blocks::PatchMatrix;
use crate::error::{NlsamError, Result};
use crate::io::{read_volume, write_volume_as, NiftiDataType};
use crate::seed::rng_for;
use crate::volume::Volume4D;

const UNIT_NORM_TOL: f64 = 1e-8;
/// Columns per batched `DᵀX` product.
const GEMM_COLUMNS: usize = 4096;

/// `m × p` nonnegative matrix with unit-norm columns, stored column-major,
/// plus its Gram matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Dictionary {
    m: usize,
    p: usize,
    atoms: Vec<f64>,
    gram: Vec<f64>,
}

impl Dictionary {
    pub fn new(m: usize, p: usize, atoms: Vec<f64>) -> Result<Self> {
        if m == 0 || p == 0 || atoms.len() != m * p {
            return Err(NlsamError::DimensionMismatch(format!("{} entries for a {m}×{p} dictionary", atoms.len())));
        }
        if atoms.iter().any(|a| !a.is_finite()) {
            return Err(NlsamError::NonFinite("dictionary atoms".into()));
        }
        if atoms.iter().any(|&a| a < 0.0) {
            return Err(NlsamError::InvalidParameter("dictionary entries must be nonnegative".into()));
        }
        for (k, atom) in atoms.chunks(m).enumerate() {
            let norm = atom.iter().map(|a| a * a).sum::<f64>().sqrt();
            if (norm - 1.0).abs() > UNIT_NORM_TOL {
                return Err(NlsamError::InvalidParameter(format!("atom {k} has norm {norm}")));
            }
        }
        let gram = compute_gram(m, p, &atoms);
        Ok(Self { m, p, atoms, gram })
    }

    /// Clamps negatives, normalizes each column, and replaces all-zero
    /// columns with the constant atom.
    pub fn from_columns(m: usize, p: usize, mut atoms: Vec<f64>) -> Result<Self> {
        if m == 0 || atoms.len() != m * p {
            return Err(NlsamError::DimensionMismatch(format!("{} entries for {m}×{p}", atoms.len())));
        }
        for atom in atoms.chunks_mut(m) {
            normalize_nonnegative(atom);
        }
        Self::new(m, p, atoms)
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn atoms(&self) -> &[f64] {
        &self.atoms
    }

    pub fn atom(&self, k: usize) -> &[f64] {
        &self.atoms[k * self.m..(k + 1) * self.m]
    }

    /// Row-major `p × p` matrix of atom inner products.
    pub fn gram(&self) -> &[f64] {
        &self.gram
    }

    /// `Dᵀx`.
    pub fn correlations(&self, x: &[f64]) -> Vec<f64> {
        self.atoms.chunks(self.m).map(|d| dot(d, x)).collect()
    }

    /// `DᵀX` for column-major signals `data`, returned column-major (`p × n`).
    pub fn correlations_batch(&self, data: &[f64]) -> Vec<f64> {
        let (m, p) = (self.m, self.p);
        let n = data.len() / m;
        let mut out = vec![0.0; p * n];
        if n == 0 {
            return out;
        }
        // SAFETY: the strides describe `atoms` (m×p), `data` (m×n) and `out`
        // (p×n), all column-major and exactly sized.
        unsafe {
            matrixmultiply::dgemm(
                p,
                m,
                n,
                1.0,
                self.atoms.as_ptr(),
                m as isize,
                1,
                data.as_ptr(),
                1,
                m as isize,
                0.0,
                out.as_mut_ptr(),
                1,
                p as isize,
            );
        }
        out
    }

    /// `Dα`.
    pub fn reconstruct(&self, alpha: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.m];
        for (d, &a) in self.atoms.chunks(self.m).zip(alpha) {
            if a != 0.0 {
                for (o, &v) in out.iter_mut().zip(d) {
                    *o += a * v;
                }
            }
        }
        out
    }

    /// Writes the matrix as an `m × p × 1` float64 volume plus a key=value
    /// sidecar at `<path>.meta.txt`.
    pub fn save(&self, path: impl AsRef<Path>, meta: &DictionaryMeta) -> Result<()> {
        let path = path.as_ref();
        let vol = Volume4D::new([self.m, self.p, 1, 1], [1.0; 3], self.atoms.clone())?;
        write_volume_as(&vol, path, NiftiDataType::Float64)?;
        let text = format!("m={}\np={}\nlambda={}\nseed={}\n", self.m, self.p, meta.lambda, meta.seed);
        let side = sidecar_path(path);
        std::fs::write(&side, text).map_err(|e| NlsamError::io(&side, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<(Self, DictionaryMeta)> {
        let path = path.as_ref();
        let vol = read_volume(path)?;
        let [m, p, z, v] = vol.dims();
        if z != 1 || v != 1 {
            return Err(NlsamError::DimensionMismatch(format!("dictionary volume has dims {:?}", vol.dims())));
        }
        let side = sidecar_path(path);
        let text = std::fs::read_to_string(&side).map_err(|e| NlsamError::io(&side, e))?;
        let mut meta = DictionaryMeta { lambda: f64::NAN, seed: 0 };
        for line in text.lines() {
            let Some((key, value)) = line.split_once('=') else { continue };
            let bad = || NlsamError::MalformedHeader(format!("bad sidecar line `{line}`"));
            match key.trim() {
                "lambda" => meta.lambda = value.trim().parse().map_err(|_| bad())?,
                "seed" => meta.seed = value.trim().parse().map_err(|_| bad())?,
                "m" | "p" => {
                    let n: usize = value.trim().parse().map_err(|_| bad())?;
                    if (key.trim() == "m" && n != m) || (key.trim() == "p" && n != p) {
                        return Err(NlsamError::DimensionMismatch(format!(
                            "sidecar {key}={n} disagrees with the matrix"
                        )));
                    }
                }
                _ => {}
            }
        }
        Ok((Self::new(m, p, vol.into_data())?, meta))
    }
}

fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".meta.txt");
    PathBuf::from(s)
}

/// Training parameters recorded alongside a saved dictionary.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DictionaryMeta {
    pub lambda: f64,
    pub seed: u64,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn compute_gram(m: usize, p: usize, atoms: &[f64]) -> Vec<f64> {
    let mut gram = vec![0.0; p * p];
    gram.par_chunks_mut(p).enumerate().for_each(|(i, row)| {
        let di = &atoms[i * m..(i + 1) * m];
        for (j, g) in row.iter_mut().enumerate() {
            *g = dot(di, &atoms[j * m..(j + 1) * m]);
        }
    });
    gram
}

fn normalize_nonnegative(atom: &mut [f64]) {
    for a in atom.iter_mut() {
        *a = a.max(0.0);
    }
    let norm = atom.iter().map(|a| a * a).sum::<f64>().sqrt();
    if norm > 0.0 {
        atom.iter_mut().for_each(|a| *a /= norm);
    } else {
        let v = 1.0 / (atom.len() as f64).sqrt();
        atom.iter_mut().for_each(|a| *a = v);
    }
}

/// Dictionary learning settings.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrainOptions {
    /// Atom count; `None` means twice the signal length.
    pub n_atoms: Option<usize>,
    pub epochs: usize,
    /// Training penalty; `None` means `1.2 / √m`.
    pub lambda: Option<f64>,
    /// Columns beyond this budget are subsampled uniformly.
    pub max_train_columns: usize,
    pub seed: u64,
}

impl Default for TrainOptions {
    fn default() -> Self {
        Self { n_atoms: None, epochs: 150, lambda: None, max_train_columns: 200_000, seed: 0 }
    }
}

/// A trained dictionary and the mean objective measured at each epoch.
#[derive(Clone, Debug)]
pub struct TrainingResult {
    pub dictionary: Dictionary,
    pub objective: Vec<f64>,
    pub n_train: usize,
    pub lambda: f64,
}

/// Trains on the columns of a patch matrix.
pub fn train_dictionary(x: &PatchMatrix, opts: &TrainOptions) -> Result<TrainingResult> {
    train_dictionary_columns(x.data(), x.rows(), opts)
}

/// Alternates exact nonnegative lasso coding (all columns) with one pass of
/// projected block-coordinate descent over the atoms.
///
/// `data` holds column-major signals of length `m`. Columns are normalized to
/// unit norm before training; zero columns are skipped.
pub fn train_dictionary_columns(data: &[f64], m: usize, opts: &TrainOptions) -> Result<TrainingResult> {
    if m == 0 || !data.len().is_multiple_of(m) {
        return Err(NlsamError::DimensionMismatch(format!("{} values are not whole columns of {m}", data.len())));
    }
    let p = opts.n_atoms.unwrap_or(2 * m);
    if p == 0 {
        return Err(NlsamError::InvalidParameter("atom count must be positive".into()));
    }
    let lambda = opts.lambda.unwrap_or_else(|| PenaltyRule::lambda_train(m));
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(NlsamError::InvalidParameter(format!("training penalty {lambda}")));
    }
    let mut rng = rng_for(opts.seed, 0);
    let mut train = select_columns(data, m, opts.max_train_columns, &mut rng)?;
    let mut n = train.len() / m;
    if n < p {
        // too few samples: perturbed copies of existing columns
        let noise = Normal::new(0.0, 0.05 / (m as f64).sqrt()).expect("valid normal");
        let base = n;
        while n < p {
            let src = rng.random_range(0..base);
            let mut col: Vec<f64> = train[src * m..(src + 1) * m].iter().map(|v| v + noise.sample(&mut rng)).collect();
            normalize_nonnegative(&mut col);
            train.extend_from_slice(&col);
            n += 1;
        }
    }

    let init = sample(&mut rng, n, p).into_vec();
    let mut atoms = Vec::with_capacity(m * p);
    for &j in &init {
        atoms.extend_from_slice(&train[j * m..(j + 1) * m]);
    }
    let mut dict = Dictionary::from_columns(m, p, atoms)?;

    let mut codes: Vec<Solution> = vec![Solution::default(); n];
    let mut objective = Vec::with_capacity(opts.epochs);
    let ones = vec![1.0; p];
    for epoch in 0..opts.epochs {
        let mut residuals = Vec::with_capacity(n);
        for (xs, cs) in train.chunks(m * GEMM_COLUMNS).zip(codes.chunks_mut(GEMM_COLUMNS)) {
            let corr = dict.correlations_batch(xs);
            residuals.par_extend(xs.par_chunks(m).zip(corr.par_chunks(p)).zip(cs.par_iter_mut()).map(
                |((x, c), code)| {
                    let x2 = dot(x, x);
                    let warm = std::mem::take(&mut code.support);
                    *code = solve_nnqp(&dict, c, lambda, &ones, &warm, 1e-10 * x2.sqrt());
                    code.residual_sq(x2, c, &dict)
                },
            ));
        }
        let l1: f64 = codes.iter().map(|c| c.values.iter().sum::<f64>()).sum();
        let obj = (residuals.iter().sum::<f64>() + lambda * l1) / n as f64;
        debug!("dictionary epoch {epoch}: objective {obj:.6e}");
        objective.push(obj);
        dict = update_atoms(&dict, &train, &mut codes, &residuals)?;
    }
    Ok(TrainingResult { dictionary: dict, objective, n_train: n, lambda })
}

fn select_columns(data: &[f64], m: usize, budget: usize, rng: &mut impl Rng) -> Result<Vec<f64>> {
    let total = data.len() / m;
    let picked: Vec<usize> = if total > budget {
        let mut idx = sample(rng, total, budget).into_vec();
        idx.sort_unstable();
        idx
    } else {
        (0..total).collect()
    };
    let mut out = Vec::with_capacity(picked.len() * m);
    for j in picked {
        let col = &data[j * m..(j + 1) * m];
        let norm = dot(col, col).sqrt();
        if norm > 0.0 && norm.is_finite() {
            out.extend(col.iter().map(|v| v / norm));
        }
    }
    if out.is_empty() {
        return Err(NlsamError::EmptyTrainingSet);
    }
    Ok(out)
}

/// Accumulation chunk size; fixed so that sums do not depend on threading.
const CHUNK: usize = 256;

/// One Gauss–Seidel pass over the atoms using the sufficient statistics
/// `A = Σ ααᵀ` and `B = Σ xαᵀ`. Each atom is projected onto
/// `{d ≥ 0, ‖d‖ ≤ 1}`, then rescaled to unit norm with the inverse scaling
/// folded into its coefficients, so `Dα` is unchanged and `‖α‖₁` can only
/// shrink. Unused atoms are replaced by the worst-represented columns.
fn update_atoms(dict: &Dictionary, train: &[f64], codes: &mut [Solution], residuals: &[f64]) -> Result<Dictionary> {
    let m = dict.m();
    let p = dict.p();
    let partial: Vec<(Vec<f64>, Vec<f64>)> = train
        .par_chunks(m * CHUNK)
        .zip(codes.par_chunks(CHUNK))
        .map(|(xs, cs)| {
            let mut a = vec![0.0; p * p];
            let mut b = vec![0.0; m * p];
            for (x, code) in xs.chunks(m).zip(cs) {
                for (&ki, &vi) in code.support.iter().zip(&code.values) {
                    for (&kj, &vj) in code.support.iter().zip(&code.values) {
                        a[ki * p + kj] += vi * vj;
                    }
                    for (bb, &xv) in b[ki * m..(ki + 1) * m].iter_mut().zip(x) {
                        *bb += vi * xv;
                    }
                }
            }
            (a, b)
        })
        .collect();
    let mut a = vec![0.0; p * p];
    let mut b = vec![0.0; m * p];
    for (pa, pb) in &partial {
        a.iter_mut().zip(pa).for_each(|(x, y)| *x += y);
        b.iter_mut().zip(pb).for_each(|(x, y)| *x += y);
    }

    let mut atoms = dict.atoms().to_vec();
    let mut scale = vec![1.0; p];
    let mut worst: Vec<usize> = (0..residuals.len()).collect();
    worst.sort_by(|&i, &j| residuals[j].total_cmp(&residuals[i]).then(i.cmp(&j)));
    let mut next_worst = worst.into_iter();
    for j in 0..p {
        let ajj = a[j * p + j];
        let mut u = vec![0.0; m];
        let mut dead = ajj <= 1e-12;
        if !dead {
            // u = d_j + (b_j − D a_j) / A_jj
            let mut da = vec![0.0; m];
            for k in 0..p {
                let akj = a[k * p + j];
                if akj != 0.0 {
                    for (d, &v) in da.iter_mut().zip(&atoms[k * m..(k + 1) * m]) {
                        *d += akj * v;
                    }
                }
            }
            for r in 0..m {
                u[r] = (atoms[j * m + r] + (b[j * m + r] - da[r]) / ajj).max(0.0);
            }
            let norm = dot(&u, &u).sqrt();
            if norm > 1e-12 {
                let s = norm.min(1.0);
                u.iter_mut().for_each(|v| *v /= norm);
                // coefficients absorb the shrink, keeping Dα fixed
                scale[j] = s;
                for k in 0..p {
                    a[j * p + k] *= s;
                    a[k * p + j] *= s;
                }
                b[j * m..(j + 1) * m].iter_mut().for_each(|v| *v *= s);
            } else {
                dead = true;
            }
        }
        if dead {
            // drop whatever (negligible) coefficients remain before replacing
            scale[j] = 0.0;
            for k in 0..p {
                a[j * p + k] = 0.0;
                a[k * p + j] = 0.0;
            }
            b[j * m..(j + 1) * m].iter_mut().for_each(|v| *v = 0.0);
            match next_worst.next() {
                Some(i) => u.copy_from_slice(&train[i * m..(i + 1) * m]),
                None => u.iter_mut().for_each(|v| *v = 1.0),
            }
            normalize_nonnegative(&mut u);
        }
        atoms[j * m..(j + 1) * m].copy_from_slice(&u);
    }
    for code in codes.iter_mut() {
        for (&k, v) in code.support.iter().zip(code.values.iter_mut()) {
            *v *= scale[k];
        }
    }
    Dictionary::new(m, p, atoms)
}
