//! FHRR algebra over phase vectors.
//!
//! A hypervector of dimension `D` is a list of phases `θ_d`; its complex view
//! is `[e^{iθ_d}]`. Binding adds phases, the inverse negates them, bundling is
//! complex addition and similarity is the real part of the normalized inner
//! product. Phases are kept canonical in `[-π, π)`.
//!
//! The [`hrr`] submodule provides the real-valued circular-convolution variant.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, HoloError, Result};

pub const TWO_PI: f64 = 2.0 * PI;

/// Wraps an angle into `[-π, π)`. `+π` maps to `-π`.
#[inline]
pub fn canonicalize(x: f64) -> f64 {
    let r = (x + PI).rem_euclid(TWO_PI) - PI;
    if r >= PI {
        -PI
    } else {
        r
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum PhaseDistribution {
    /// Uniform on `[-π, π)`.
    #[default]
    Uniform,
    /// Standard normal, wrapped onto the circle.
    Gaussian,
}

impl PhaseDistribution {
    pub(crate) fn sample<R: Rng + ?Sized>(self, rng: &mut R) -> f64 {
        match self {
            PhaseDistribution::Uniform => rng.random_range(-PI..PI),
            PhaseDistribution::Gaussian => StandardNormal.sample(rng),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseVector {
    phases: Vec<f64>,
}

impl PhaseVector {
    /// Builds a phase vector, canonicalizing every entry.
    pub fn new(phases: Vec<f64>) -> Result<Self> {
        if phases.is_empty() {
            return Err(HoloError::InvalidDimension("D must be at least 1".into()));
        }
        if let Some(bad) = phases.iter().find(|p| !p.is_finite()) {
            return Err(HoloError::InvalidArgument(format!("non-finite phase {bad}")));
        }
        Ok(Self {
            phases: phases.into_iter().map(canonicalize).collect(),
        })
    }

    /// The binding identity (all phases zero).
    pub fn identity(dim: usize) -> Self {
        Self {
            phases: vec![0.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.phases.len()
    }

    pub fn phases(&self) -> &[f64] {
        &self.phases
    }

    pub fn into_phases(self) -> Vec<f64> {
        self.phases
    }

    pub fn to_complex(&self) -> ComplexHV {
        ComplexHV::from_phases(&self.phases)
    }

    /// Largest per-component circular distance to `other`.
    pub fn max_phase_distance(&self, other: &PhaseVector) -> f64 {
        self.phases
            .iter()
            .zip(&other.phases)
            .map(|(a, b)| canonicalize(a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Complex view of a hypervector. Encoder outputs and bindings are unitary;
/// bundles and noisy latents are not, which the `unitary` flag records.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexHV {
    re: Vec<f64>,
    im: Vec<f64>,
    unitary: bool,
}

impl ComplexHV {
    pub fn from_phases(phases: &[f64]) -> Self {
        let (re, im) = phases.iter().map(|p| (p.cos(), p.sin())).unzip();
        Self {
            re,
            im,
            unitary: true,
        }
    }

    /// Arbitrary complex vector; the unitary flag is cleared.
    pub fn from_parts(re: Vec<f64>, im: Vec<f64>) -> Result<Self> {
        check_dim(re.len(), im.len())?;
        if re.is_empty() {
            return Err(HoloError::InvalidDimension("D must be at least 1".into()));
        }
        Ok(Self {
            re,
            im,
            unitary: false,
        })
    }

    pub fn dim(&self) -> usize {
        self.re.len()
    }

    pub fn re(&self) -> &[f64] {
        &self.re
    }

    pub fn im(&self) -> &[f64] {
        &self.im
    }

    pub fn is_unitary(&self) -> bool {
        self.unitary
    }

    pub fn conjugate(&self) -> Self {
        Self {
            re: self.re.clone(),
            im: self.im.iter().map(|x| -x).collect(),
            unitary: self.unitary,
        }
    }

    /// Phases of each component, canonicalized.
    pub fn to_phases(&self) -> PhaseVector {
        PhaseVector {
            phases: self
                .re
                .iter()
                .zip(&self.im)
                .map(|(r, i)| canonicalize(i.atan2(*r)))
                .collect(),
        }
    }

    /// Largest deviation of any component modulus from one.
    pub fn max_modulus_error(&self) -> f64 {
        self.re
            .iter()
            .zip(&self.im)
            .map(|(r, i)| ((r * r + i * i).sqrt() - 1.0).abs())
            .fold(0.0, f64::max)
    }

    pub(crate) fn parts_mut(&mut self) -> (&mut [f64], &mut [f64]) {
        self.unitary = false;
        (&mut self.re, &mut self.im)
    }
}

impl From<&PhaseVector> for ComplexHV {
    fn from(v: &PhaseVector) -> Self {
        v.to_complex()
    }
}

pub fn random_phase_vector(dim: usize, dist: PhaseDistribution, seed: u64) -> Result<PhaseVector> {
    if dim == 0 {
        return Err(HoloError::InvalidDimension("D must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(PhaseVector {
        phases: (0..dim).map(|_| canonicalize(dist.sample(&mut rng))).collect(),
    })
}

/// Element-wise complex multiplication, i.e. phase addition.
pub fn bind(a: &PhaseVector, b: &PhaseVector) -> Result<PhaseVector> {
    check_dim(a.dim(), b.dim())?;
    Ok(PhaseVector {
        phases: a
            .phases
            .iter()
            .zip(&b.phases)
            .map(|(x, y)| canonicalize(x + y))
            .collect(),
    })
}

/// Complex conjugate, i.e. phase negation.
pub fn inverse(v: &PhaseVector) -> PhaseVector {
    PhaseVector {
        phases: v.phases.iter().map(|p| canonicalize(-p)).collect(),
    }
}

/// Binds `a` with the inverse of `b`.
pub fn unbind(a: &PhaseVector, b: &PhaseVector) -> Result<PhaseVector> {
    check_dim(a.dim(), b.dim())?;
    Ok(PhaseVector {
        phases: a
            .phases
            .iter()
            .zip(&b.phases)
            .map(|(x, y)| canonicalize(x - y))
            .collect(),
    })
}

/// Complex-valued binding, for latents that are no longer unitary.
pub fn bind_complex(a: &ComplexHV, b: &ComplexHV) -> Result<ComplexHV> {
    check_dim(a.dim(), b.dim())?;
    let n = a.dim();
    let mut re = Vec::with_capacity(n);
    let mut im = Vec::with_capacity(n);
    for d in 0..n {
        re.push(a.re[d] * b.re[d] - a.im[d] * b.im[d]);
        im.push(a.re[d] * b.im[d] + a.im[d] * b.re[d]);
    }
    Ok(ComplexHV {
        re,
        im,
        unitary: a.unitary && b.unitary,
    })
}

pub fn bundle(vs: &[ComplexHV]) -> Result<ComplexHV> {
    let first = vs.first().ok_or(HoloError::Empty("bundle of zero vectors"))?;
    let mut re = first.re.clone();
    let mut im = first.im.clone();
    for v in &vs[1..] {
        check_dim(re.len(), v.dim())?;
        for d in 0..re.len() {
            re[d] += v.re[d];
            im[d] += v.im[d];
        }
    }
    Ok(ComplexHV {
        re,
        im,
        unitary: false,
    })
}

/// `(1/D) · Re⟨a, conj(b)⟩`.
pub fn similarity(a: &ComplexHV, b: &ComplexHV) -> Result<f64> {
    check_dim(a.dim(), b.dim())?;
    Ok(similarity_unchecked(a, b))
}

#[inline]
pub(crate) fn similarity_unchecked(a: &ComplexHV, b: &ComplexHV) -> f64 {
    let dot: f64 = a
        .re
        .iter()
        .zip(&a.im)
        .zip(b.re.iter().zip(&b.im))
        .map(|((ar, ai), (br, bi))| ar * br + ai * bi)
        .sum();
    dot / a.dim() as f64
}

/// Similarity of two unitary vectors given only their phases.
pub fn phase_similarity(a: &PhaseVector, b: &PhaseVector) -> Result<f64> {
    check_dim(a.dim(), b.dim())?;
    let s: f64 = a.phases.iter().zip(&b.phases).map(|(x, y)| (x - y).cos()).sum();
    Ok(s / a.dim() as f64)
}

/// A real `D × n` phase matrix. Stored column-major so that a column (the
/// phases attached to one input coordinate) is contiguous.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl PhaseMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(HoloError::InvalidDimension(format!(
                "phase matrix must be non-empty, got {rows}x{cols}"
            )));
        }
        Ok(Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        })
    }

    pub fn random(rows: usize, cols: usize, dist: PhaseDistribution, seed: u64) -> Result<Self> {
        let mut m = Self::zeros(rows, cols)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        m.fill_from(&mut rng, dist);
        Ok(m)
    }

    /// Fills in row-major order so that the sampled values do not depend on
    /// the storage layout.
    pub(crate) fn fill_from<R: Rng + ?Sized>(&mut self, rng: &mut R, dist: PhaseDistribution) {
        for d in 0..self.rows {
            for j in 0..self.cols {
                let v = dist.sample(rng);
                self.set(d, j, v);
            }
        }
    }

    pub fn from_row_major(rows: usize, cols: usize, values: &[f64]) -> Result<Self> {
        let mut m = Self::zeros(rows, cols)?;
        check_dim(rows * cols, values.len())?;
        for d in 0..rows {
            for j in 0..cols {
                m.set(d, j, values[d * cols + j]);
            }
        }
        Ok(m)
    }

    pub fn to_row_major(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.data.len());
        for d in 0..self.rows {
            for j in 0..self.cols {
                out.push(self.get(d, j));
            }
        }
        out
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[col * self.rows + row]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: f64) {
        self.data[col * self.rows + row] = value;
    }

    #[inline]
    pub fn column(&self, col: usize) -> &[f64] {
        &self.data[col * self.rows..(col + 1) * self.rows]
    }

    #[inline]
    pub fn column_mut(&mut self, col: usize) -> &mut [f64] {
        &mut self.data[col * self.rows..(col + 1) * self.rows]
    }

    /// Raw parameters, column-major.
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }
}

/// Random-Fourier-feature style encoding `φ(x) = e^{iMx}`.
pub fn phase_encode(x: &[f64], m: &PhaseMatrix) -> Result<ComplexHV> {
    Ok(phase_encode_phases(x, m)?.to_complex())
}

/// Phase form of [`phase_encode`]: `canonicalize(M·x)`.
pub fn phase_encode_phases(x: &[f64], m: &PhaseMatrix) -> Result<PhaseVector> {
    check_dim(m.cols(), x.len())?;
    let mut acc = vec![0.0; m.rows()];
    for (j, &xj) in x.iter().enumerate() {
        for (a, &mij) in acc.iter_mut().zip(m.column(j)) {
            *a += mij * xj;
        }
    }
    Ok(PhaseVector {
        phases: acc.into_iter().map(canonicalize).collect(),
    })
}

pub mod hrr {
    //! Holographic reduced representations: real vectors bound by circular
    //! convolution and unbound by circular correlation.
    //!
    //! Components are sampled with standard deviation 1 and scaled by `1/√D`
    //! when used, which keeps the bound vector's norm close to one.

    use std::sync::Arc;

    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};
    use rustfft::num_complex::Complex64;
    use rustfft::{Fft, FftPlanner};

    use crate::error::{check_dim, HoloError, Result};

    /// Planned forward/inverse FFTs for one dimension.
    #[derive(Clone)]
    pub struct Convolver {
        dim: usize,
        fwd: Arc<dyn Fft<f64>>,
        inv: Arc<dyn Fft<f64>>,
    }

    impl std::fmt::Debug for Convolver {
        fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
            f.debug_struct("Convolver").field("dim", &self.dim).finish()
        }
    }

    impl Convolver {
        pub fn new(dim: usize) -> Result<Self> {
            if dim == 0 {
                return Err(HoloError::InvalidDimension("D must be at least 1".into()));
            }
            let mut planner = FftPlanner::new();
            Ok(Self {
                dim,
                fwd: planner.plan_fft_forward(dim),
                inv: planner.plan_fft_inverse(dim),
            })
        }

        pub fn dim(&self) -> usize {
            self.dim
        }

        pub fn spectrum(&self, x: &[f64]) -> Vec<Complex64> {
            let mut buf: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
            self.fwd.process(&mut buf);
            buf
        }

        pub fn real_inverse(&self, mut spec: Vec<Complex64>) -> Vec<f64> {
            self.inv.process(&mut spec);
            let scale = 1.0 / self.dim as f64;
            spec.into_iter().map(|c| c.re * scale).collect()
        }

        /// `(a ⊛ b)_k = Σ_j a_j b_{(k-j) mod D}`.
        pub fn convolve(&self, a: &[f64], b: &[f64]) -> Result<Vec<f64>> {
            check_dim(self.dim, a.len())?;
            check_dim(self.dim, b.len())?;
            let fa = self.spectrum(a);
            let fb = self.spectrum(b);
            Ok(self.real_inverse(fa.iter().zip(&fb).map(|(x, y)| x * y).collect()))
        }

        /// `(a ⋆ c)_k = Σ_j a_j c_{(k+j) mod D}`; approximately inverts
        /// convolution by `a`.
        pub fn correlate(&self, a: &[f64], c: &[f64]) -> Result<Vec<f64>> {
            check_dim(self.dim, a.len())?;
            check_dim(self.dim, c.len())?;
            let fa = self.spectrum(a);
            let fc = self.spectrum(c);
            Ok(self.real_inverse(fa.iter().zip(&fc).map(|(x, y)| x.conj() * y).collect()))
        }
    }

    pub fn hrr_bind(a: &[f64], b: &[f64]) -> Result<Vec<f64>> {
        check_dim(a.len(), b.len())?;
        Convolver::new(a.len())?.convolve(a, b)
    }

    /// Recovers `b` from `hrr_bind(a, b)` given `a`.
    pub fn hrr_unbind(bound: &[f64], a: &[f64]) -> Result<Vec<f64>> {
        check_dim(a.len(), bound.len())?;
        Convolver::new(a.len())?.correlate(a, bound)
    }

    /// Standard-normal components, unscaled.
    pub fn sample_hrr(dim: usize, seed: u64) -> Result<Vec<f64>> {
        if dim == 0 {
            return Err(HoloError::InvalidDimension("D must be at least 1".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Ok((0..dim).map(|_| StandardNormal.sample(&mut rng)).collect())
    }

    /// Scales by `1/√D` so that the expected squared norm is one.
    pub fn normalize(v: &[f64]) -> Vec<f64> {
        let s = 1.0 / (v.len() as f64).sqrt();
        v.iter().map(|x| x * s).collect()
    }

    /// The convolution identity, a unit impulse at index 0.
    pub fn impulse(dim: usize) -> Vec<f64> {
        let mut v = vec![0.0; dim];
        if dim > 0 {
            v[0] = 1.0;
        }
        v
    }

    pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
        let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
        let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
        let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
        if na == 0.0 || nb == 0.0 {
            0.0
        } else {
            dot / (na * nb)
        }
    }
}
