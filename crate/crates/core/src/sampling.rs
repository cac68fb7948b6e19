//! Seeded designs, noise and datasets for the diagonal and matrix models.
//!
//! Every random quantity is drawn mode-major (all samples of mode 1, then
//! mode 2, ...) from a dedicated ChaCha20 stream, so the streaming statistic
//! path and the materialized path consume identical draws.

use alloc::vec::Vec;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};

use crate::error::{check_dims, invalid, Result};
use crate::spectra::SpectralSequence;

/// Generator used throughout.
pub type SimRng = ChaCha20Rng;

/// Stream purposes inside one replication.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Purpose {
    Design = 0,
    Noise = 1,
    Posterior = 2,
}

fn seed_bytes(words: [u64; 4]) -> [u8; 32] {
    let mut out = [0u8; 32];
    for (chunk, w) in out.chunks_exact_mut(8).zip(words) {
        chunk.copy_from_slice(&w.to_le_bytes());
    }
    out
}

/// Generator for `(seed, stream)`; identical pairs give identical sequences.
pub fn make_rng(seed: u64, stream: u64) -> SimRng {
    let mut rng = ChaCha20Rng::from_seed(seed_bytes([seed, 0, 0, 0]));
    rng.set_stream(stream);
    rng
}

/// Generator for one purpose of replication `rep` at grid position `n_index`.
///
/// The key never depends on the grid length or replication count, so growing
/// an experiment leaves existing draws untouched.
pub fn replication_rng(seed: u64, n_index: u64, rep: u64, purpose: Purpose) -> SimRng {
    let mut rng = ChaCha20Rng::from_seed(seed_bytes([seed, n_index, rep, 1]));
    rng.set_stream(purpose as u64);
    rng
}

/// Law of the unit-variance KL coefficients `ζ`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum Law {
    #[default]
    Gaussian,
    /// `U(-√3, √3)`.
    Uniform,
    /// `±1` with equal probability.
    Rademacher,
}

impl Law {
    pub fn sample<R: Rng + ?Sized>(self, rng: &mut R) -> f64 {
        match self {
            Law::Gaussian => StandardNormal.sample(rng),
            Law::Uniform => {
                let sqrt3 = libm::sqrt(3.0);
                rng.random_range(-sqrt3..sqrt3)
            }
            Law::Rademacher => {
                if rng.random::<bool>() {
                    1.0
                } else {
                    -1.0
                }
            }
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Law::Gaussian => "gaussian",
            Law::Uniform => "uniform",
            Law::Rademacher => "rademacher",
        }
    }

    pub fn parse(name: &str) -> Option<Self> {
        match name {
            "gaussian" => Some(Law::Gaussian),
            "uniform" => Some(Law::Uniform),
            "rademacher" => Some(Law::Rademacher),
            _ => None,
        }
    }
}

/// Which basis the rows of a design are expressed in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Basis {
    /// Output-basis coefficients `g_jn`.
    Output,
    /// Input-basis KL coefficients `x_kn`.
    Input,
}

/// Coefficients of `N` i.i.d. inputs; row `j` is a mode, column `n` a sample.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    coeffs: DMatrix<f64>,
    law: Law,
    basis: Basis,
}

impl DesignMatrix {
    pub fn from_coeffs(coeffs: DMatrix<f64>, law: Law, basis: Basis) -> Result<Self> {
        if coeffs.nrows() == 0 || coeffs.ncols() == 0 {
            return Err(invalid("design needs at least one mode and one sample"));
        }
        Ok(Self { coeffs, law, basis })
    }

    pub fn coeffs(&self) -> &DMatrix<f64> {
        &self.coeffs
    }

    pub fn modes(&self) -> usize {
        self.coeffs.nrows()
    }

    pub fn samples(&self) -> usize {
        self.coeffs.ncols()
    }

    pub fn law(&self) -> Law {
        self.law
    }

    pub fn basis(&self) -> Basis {
        self.basis
    }

    /// Input-basis design reinterpreted as output-basis (commuting case).
    pub fn into_output_basis(mut self) -> Self {
        self.basis = Basis::Output;
        self
    }
}

/// Draws `coeffs[k][n] = λ_k ζ_kn` where `spectrum` holds the variances `λ_k²`.
pub fn draw_design<R: Rng + ?Sized>(
    spectrum: &SpectralSequence,
    n: usize,
    law: Law,
    rng: &mut R,
) -> Result<DesignMatrix> {
    if n == 0 {
        return Err(invalid("sample size must be positive"));
    }
    let j = spectrum.len();
    let mut coeffs = DMatrix::zeros(j, n);
    for (row, var) in spectrum.values().iter().enumerate() {
        let sd = libm::sqrt(*var);
        for col in 0..n {
            coeffs[(row, col)] = sd * law.sample(rng);
        }
    }
    DesignMatrix::from_coeffs(coeffs, law, Basis::Input).map(DesignMatrix::into_output_basis)
}

/// Same draws as [`draw_design`], labelled as input-basis coefficients.
pub fn draw_input_design<R: Rng + ?Sized>(
    spectrum: &SpectralSequence,
    n: usize,
    law: Law,
    rng: &mut R,
) -> Result<DesignMatrix> {
    let mut d = draw_design(spectrum, n, law, rng)?;
    d.basis = Basis::Input;
    Ok(d)
}

/// `g_jn = Σ_k overlap[j][k] x_kn`.
pub fn project_design(x: &DesignMatrix, overlap: &DMatrix<f64>) -> Result<DesignMatrix> {
    check_dims(x.modes(), overlap.ncols())?;
    DesignMatrix::from_coeffs(overlap * &x.coeffs, x.law, Basis::Output)
}

/// Realized training data with cached sufficient statistics.
///
/// Streaming constructors leave `design` and `outputs` empty; the matrix
/// model additionally fills `gram` and `rhs`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    n: usize,
    gamma: f64,
    design: Option<DesignMatrix>,
    outputs: Option<DMatrix<f64>>,
    suff_gg: Vec<f64>,
    suff_yg: Vec<f64>,
    gram: Option<DMatrix<f64>>,
    rhs: Option<DMatrix<f64>>,
}

impl Dataset {
    /// Dataset from precomputed statistics only.
    pub fn from_statistics(n: usize, gamma: f64, suff_gg: Vec<f64>, suff_yg: Vec<f64>) -> Result<Self> {
        check_dims(suff_gg.len(), suff_yg.len())?;
        if n == 0 || suff_gg.is_empty() {
            return Err(invalid("dataset needs at least one sample and one mode"));
        }
        if suff_gg.iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
            return Err(invalid("⟨g g⟩ must be finite and nonnegative"));
        }
        if !(gamma >= 0.0) {
            return Err(invalid("noise scale must be nonnegative"));
        }
        Ok(Self {
            n,
            gamma,
            design: None,
            outputs: None,
            suff_gg,
            suff_yg,
            gram: None,
            rhs: None,
        })
    }

    /// Dataset from raw output-basis design and outputs (`J × N` each).
    pub fn from_raw(design: DesignMatrix, outputs: DMatrix<f64>, gamma: f64) -> Result<Self> {
        check_dims(design.modes(), outputs.nrows())?;
        check_dims(design.samples(), outputs.ncols())?;
        let (suff_gg, suff_yg) = diagonal_statistics(design.coeffs(), &outputs);
        let mut ds = Self::from_statistics(design.samples(), gamma, suff_gg, suff_yg)?;
        ds.design = Some(design);
        ds.outputs = Some(outputs);
        Ok(ds)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn modes(&self) -> usize {
        self.suff_gg.len()
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn design(&self) -> Option<&DesignMatrix> {
        self.design.as_ref()
    }

    pub fn outputs(&self) -> Option<&DMatrix<f64>> {
        self.outputs.as_ref()
    }

    /// `⟨g_j g_j⟩`.
    pub fn suff_gg(&self) -> &[f64] {
        &self.suff_gg
    }

    /// `⟨y_j g_j⟩`.
    pub fn suff_yg(&self) -> &[f64] {
        &self.suff_yg
    }

    /// Empirical gram `A_lk = ⟨x_l x_k⟩` of the matrix model.
    pub fn gram(&self) -> Option<&DMatrix<f64>> {
        self.gram.as_ref()
    }

    /// Right-hand sides; row `j` is `b_j` with `(b_j)_l = ⟨y_j x_l⟩`.
    pub fn rhs(&self) -> Option<&DMatrix<f64>> {
        self.rhs.as_ref()
    }
}

/// Mode-major `(1/N)Σ_n g²` and `(1/N)Σ_n y g`.
fn diagonal_statistics(g: &DMatrix<f64>, y: &DMatrix<f64>) -> (Vec<f64>, Vec<f64>) {
    let nf = g.ncols() as f64;
    let mut gg = Vec::with_capacity(g.nrows());
    let mut yg = Vec::with_capacity(g.nrows());
    for row in 0..g.nrows() {
        let (mut a, mut b) = (0.0, 0.0);
        for col in 0..g.ncols() {
            let gv = g[(row, col)];
            a += gv * gv;
            b += y[(row, col)] * gv;
        }
        gg.push(a / nf);
        yg.push(b / nf);
    }
    (gg, yg)
}

/// Per-mode noise standard deviation `γ √λ_j(Γ)`.
fn noise_scales(gamma: f64, colored: Option<&SpectralSequence>, modes: usize) -> Result<Vec<f64>> {
    if !(gamma >= 0.0 && gamma.is_finite()) {
        return Err(invalid("noise scale must be finite and nonnegative"));
    }
    match colored {
        None => Ok(alloc::vec![gamma; modes]),
        Some(lam) => {
            if lam.len() < modes {
                return Err(crate::Error::DimensionMismatch {
                    expected: modes,
                    found: lam.len(),
                });
            }
            Ok(lam.values()[..modes].iter().map(|l| gamma * libm::sqrt(*l)).collect())
        }
    }
}

/// `y_jn = g_jn ℓ†_j + γ ξ_jn` with standard normal `ξ`.
pub fn gen_diagonal_dataset<R: Rng + ?Sized>(
    truth: &[f64],
    design: &DesignMatrix,
    gamma: f64,
    rng: &mut R,
) -> Result<Dataset> {
    gen_diagonal_dataset_colored(truth, design, gamma, None, rng)
}

/// As [`gen_diagonal_dataset`] with per-mode noise variance `γ² λ_j(Γ)`.
pub fn gen_diagonal_dataset_colored<R: Rng + ?Sized>(
    truth: &[f64],
    design: &DesignMatrix,
    gamma: f64,
    noise_spectrum: Option<&SpectralSequence>,
    rng: &mut R,
) -> Result<Dataset> {
    let (j, n) = (design.modes(), design.samples());
    if truth.len() < j {
        return Err(crate::Error::DimensionMismatch {
            expected: j,
            found: truth.len(),
        });
    }
    let sd = noise_scales(gamma, noise_spectrum, j)?;
    let g = design.coeffs();
    let mut y = DMatrix::zeros(j, n);
    for row in 0..j {
        for col in 0..n {
            let xi: f64 = StandardNormal.sample(rng);
            y[(row, col)] = g[(row, col)] * truth[row] + sd[row] * xi;
        }
    }
    Dataset::from_raw(design.clone(), y, gamma)
}

/// How the diagonal sufficient statistics are produced without storing data.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum StatsMethod {
    /// Draw every `g_jn`, `ξ_jn` and accumulate; bit-identical to the
    /// materialized path.
    Streaming,
    /// Gaussian design only: draw `⟨g g⟩ = θ² χ²_N / N` and
    /// `⟨g ξ⟩ | ⟨g g⟩ ~ N(0, ⟨g g⟩/N)`, which have exactly the law of the
    /// streamed statistics at `O(J)` cost.
    #[default]
    ExactGaussian,
}

/// Diagonal-model statistics for one replication without materializing data.
#[allow(clippy::too_many_arguments)]
pub fn sample_diagonal_statistics<R: Rng + ?Sized>(
    train: &SpectralSequence,
    truth: &[f64],
    gamma: f64,
    noise_spectrum: Option<&SpectralSequence>,
    n: usize,
    law: Law,
    method: StatsMethod,
    design_rng: &mut R,
    noise_rng: &mut R,
) -> Result<Dataset> {
    let j = train.len();
    if truth.len() < j {
        return Err(crate::Error::DimensionMismatch {
            expected: j,
            found: truth.len(),
        });
    }
    if n == 0 {
        return Err(invalid("sample size must be positive"));
    }
    let sd = noise_scales(gamma, noise_spectrum, j)?;
    let nf = n as f64;
    let mut gg = Vec::with_capacity(j);
    let mut yg = Vec::with_capacity(j);
    match method {
        StatsMethod::Streaming => {
            for row in 0..j {
                let lam = libm::sqrt(train.values()[row]);
                let (mut a, mut b) = (0.0, 0.0);
                for _ in 0..n {
                    let g = lam * law.sample(design_rng);
                    let xi: f64 = StandardNormal.sample(noise_rng);
                    let y = g * truth[row] + sd[row] * xi;
                    a += g * g;
                    b += y * g;
                }
                gg.push(a / nf);
                yg.push(b / nf);
            }
        }
        StatsMethod::ExactGaussian => {
            if law != Law::Gaussian {
                return Err(invalid("exact statistic sampling needs a Gaussian design"));
            }
            let chi = ChiSquared::new(nf).map_err(|_| invalid("invalid χ² degrees of freedom"))?;
            for row in 0..j {
                let a = train.values()[row] * chi.sample(design_rng) / nf;
                let z: f64 = StandardNormal.sample(noise_rng);
                let gxi = libm::sqrt(a / nf) * z;
                gg.push(a);
                yg.push(truth[row] * a + sd[row] * gxi);
            }
        }
    }
    Dataset::from_statistics(n, gamma, gg, yg)
}

/// `y_jn = Σ_k L†_jk x_kn + γ ξ_jn` for an input-basis design `x`.
///
/// The output-basis design `g = overlap · x` feeds the diagonal statistics;
/// the gram `A = ⟨x x⟩` and right-hand sides `b_j = ⟨y_j x⟩` feed the row
/// solves.
pub fn gen_matrix_dataset<R: Rng + ?Sized>(
    truth_matrix: &DMatrix<f64>,
    x: &DesignMatrix,
    overlap: &DMatrix<f64>,
    gamma: f64,
    rng: &mut R,
) -> Result<Dataset> {
    check_dims(x.modes(), truth_matrix.ncols())?;
    check_dims(truth_matrix.nrows(), overlap.nrows())?;
    check_dims(x.modes(), overlap.ncols())?;
    if !(gamma >= 0.0 && gamma.is_finite()) {
        return Err(invalid("noise scale must be finite and nonnegative"));
    }
    let n = x.samples();
    let nf = n as f64;
    let mut y = truth_matrix * x.coeffs();
    for row in 0..y.nrows() {
        for col in 0..n {
            let xi: f64 = StandardNormal.sample(rng);
            y[(row, col)] += gamma * xi;
        }
    }
    let g = project_design(x, overlap)?;
    let gram = (x.coeffs() * x.coeffs().transpose()) / nf;
    let rhs = (&y * x.coeffs().transpose()) / nf;
    let mut ds = Dataset::from_raw(g, y, gamma)?;
    ds.gram = Some(gram);
    ds.rhs = Some(rhs);
    Ok(ds)
}
