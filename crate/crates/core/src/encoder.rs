//! Learnable FHRR encoders over one-hot states and actions.
//!
//! Each encoder owns a real `D × n` phase table. Encoding index `i` reads
//! column `i` and canonicalizes it, which is exactly `phase_encode` applied to
//! the one-hot vector `e_i`. Parameters stay unconstrained reals; only the
//! encoded outputs are wrapped into `[-π, π)`.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{HoloError, Result};
use crate::hypervector::{
    canonicalize, similarity_unchecked, ComplexHV, PhaseDistribution, PhaseMatrix, PhaseVector,
};

macro_rules! phase_encoder {
    ($(#[$doc:meta])* $name:ident, $what:literal) => {
        $(#[$doc])*
        #[derive(Debug, Clone, PartialEq)]
        pub struct $name {
            theta: PhaseMatrix,
            generation: u64,
        }

        impl $name {
            pub fn new(theta: PhaseMatrix) -> Self {
                Self { theta, generation: 0 }
            }

            pub fn dim(&self) -> usize {
                self.theta.rows()
            }

            pub fn len(&self) -> usize {
                self.theta.cols()
            }

            pub fn is_empty(&self) -> bool {
                self.theta.cols() == 0
            }

            pub fn theta(&self) -> &PhaseMatrix {
                &self.theta
            }

            /// Mutable parameters. Bumps the generation so that codebooks
            /// built earlier report themselves stale.
            pub fn theta_mut(&mut self) -> &mut PhaseMatrix {
                self.generation += 1;
                &mut self.theta
            }

            pub fn generation(&self) -> u64 {
                self.generation
            }

            fn check(&self, index: usize) -> Result<()> {
                if index < self.len() {
                    Ok(())
                } else {
                    Err(HoloError::IndexOutOfRange { what: $what, index, size: self.len() })
                }
            }

            pub fn encode_phases(&self, index: usize) -> Result<PhaseVector> {
                self.check(index)?;
                PhaseVector::new(self.theta.column(index).iter().map(|&p| canonicalize(p)).collect())
            }

            pub fn encode(&self, index: usize) -> Result<ComplexHV> {
                self.check(index)?;
                Ok(ComplexHV::from_phases(self.theta.column(index)))
            }
        }
    };
}

phase_encoder!(
    /// `φ_S`: one phase column per state.
    StateEncoder,
    "state"
);
phase_encoder!(
    /// `φ_A`: one phase column per action.
    ActionEncoder,
    "action"
);

pub fn new_encoders(
    dim: usize,
    n_states: usize,
    n_actions: usize,
    seed: u64,
) -> Result<(StateEncoder, ActionEncoder)> {
    if dim == 0 || n_states == 0 || n_actions == 0 {
        return Err(HoloError::InvalidDimension(format!(
            "encoder shape D={dim}, n_s={n_states}, n_a={n_actions}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ts = PhaseMatrix::zeros(dim, n_states)?;
    ts.fill_from(&mut rng, PhaseDistribution::Uniform);
    let mut ta = PhaseMatrix::zeros(dim, n_actions)?;
    ta.fill_from(&mut rng, PhaseDistribution::Uniform);
    Ok((StateEncoder::new(ts), ActionEncoder::new(ta)))
}

pub fn encode_state(enc: &StateEncoder, s: usize) -> Result<ComplexHV> {
    enc.encode(s)
}

pub fn encode_action(enc: &ActionEncoder, a: usize) -> Result<ComplexHV> {
    enc.encode(a)
}

pub fn parameter_count(states: &StateEncoder, actions: &ActionEncoder) -> usize {
    states.dim() * states.len() + actions.dim() * actions.len()
}

/// All state embeddings, used for cleanup and decoding.
#[derive(Debug, Clone)]
pub struct Codebook {
    rows: Vec<ComplexHV>,
    generation: u64,
}

/// Similarities closer than this count as a tie; ties go to the lower index.
pub const TIE_TOLERANCE: f64 = 1e-12;

impl Codebook {
    pub fn from_rows(rows: Vec<ComplexHV>) -> Result<Self> {
        if let Some(first) = rows.first() {
            for r in &rows {
                crate::error::check_dim(first.dim(), r.dim())?;
            }
        }
        Ok(Self { rows, generation: 0 })
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.rows.first().map_or(0, ComplexHV::dim)
    }

    pub fn row(&self, s: usize) -> Result<&ComplexHV> {
        self.rows.get(s).ok_or(HoloError::IndexOutOfRange {
            what: "codebook row",
            index: s,
            size: self.rows.len(),
        })
    }

    pub fn rows(&self) -> &[ComplexHV] {
        &self.rows
    }

    pub fn is_stale(&self, enc: &StateEncoder) -> bool {
        self.generation != enc.generation() || self.rows.len() != enc.len()
    }

    /// Similarity of `z` to every row.
    pub fn similarities(&self, z: &ComplexHV) -> Result<Vec<f64>> {
        crate::error::check_dim(self.dim(), z.dim())?;
        Ok(self.rows.iter().map(|r| similarity_unchecked(z, r)).collect())
    }

    /// Index and similarity of the most similar row.
    pub fn nearest(&self, z: &ComplexHV) -> Result<(usize, f64)> {
        if self.rows.is_empty() {
            return Err(HoloError::Empty("codebook"));
        }
        crate::error::check_dim(self.dim(), z.dim())?;
        let mut best = (0, similarity_unchecked(z, &self.rows[0]));
        for (s, r) in self.rows.iter().enumerate().skip(1) {
            let sim = similarity_unchecked(z, r);
            if sim > best.1 + TIE_TOLERANCE {
                best = (s, sim);
            }
        }
        Ok(best)
    }
}

pub fn build_codebook(enc: &StateEncoder) -> Codebook {
    Codebook {
        rows: (0..enc.len())
            .map(|s| ComplexHV::from_phases(enc.theta().column(s)))
            .collect(),
        generation: enc.generation(),
    }
}

/// Rebuilds `cb` in place if `enc` changed since it was built.
pub fn refresh_codebook(cb: &mut Codebook, enc: &StateEncoder) -> bool {
    if cb.is_stale(enc) {
        *cb = build_codebook(enc);
        true
    } else {
        false
    }
}

const ENCODER_MAGIC: &[u8; 4] = b"HWM1";

/// Sidecar metadata written next to an encoder checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub seed: u64,
    pub epoch: usize,
    pub w_bind: f64,
    pub w_inv: f64,
    pub w_ortho: f64,
}

pub(crate) fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

pub(crate) fn read_f64s<R: Read>(r: &mut R, n: usize) -> Result<Vec<f64>> {
    let mut buf = vec![0u8; n * 8];
    r.read_exact(&mut buf)
        .map_err(|e| HoloError::Checkpoint(format!("truncated payload: {e}")))?;
    Ok(buf
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect())
}

pub(crate) fn write_f64s<W: Write>(w: &mut W, values: &[f64]) -> Result<()> {
    for v in values {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

fn to_u32(x: usize, what: &str) -> Result<u32> {
    u32::try_from(x).map_err(|_| HoloError::Checkpoint(format!("{what} {x} does not fit in u32")))
}

/// `"HWM1"`, then little-endian u32 `D, n_s, n_a`, then both tables row-major
/// as little-endian f64.
pub fn write_encoders<W: Write>(mut w: W, states: &StateEncoder, actions: &ActionEncoder) -> Result<()> {
    if states.dim() != actions.dim() {
        return Err(HoloError::DimensionMismatch {
            expected: states.dim(),
            got: actions.dim(),
        });
    }
    w.write_all(ENCODER_MAGIC)?;
    for x in [states.dim(), states.len(), actions.len()] {
        w.write_all(&to_u32(x, "dimension")?.to_le_bytes())?;
    }
    write_f64s(&mut w, &states.theta().to_row_major())?;
    write_f64s(&mut w, &actions.theta().to_row_major())?;
    w.flush()?;
    Ok(())
}

pub fn read_encoders<R: Read>(mut r: R) -> Result<(StateEncoder, ActionEncoder)> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != ENCODER_MAGIC {
        return Err(HoloError::Checkpoint(format!("bad magic {magic:?}")));
    }
    let d = read_u32(&mut r)? as usize;
    let ns = read_u32(&mut r)? as usize;
    let na = read_u32(&mut r)? as usize;
    let ts = PhaseMatrix::from_row_major(d, ns, &read_f64s(&mut r, d * ns)?)
        .map_err(|e| HoloError::Checkpoint(e.to_string()))?;
    let ta = PhaseMatrix::from_row_major(d, na, &read_f64s(&mut r, d * na)?)
        .map_err(|e| HoloError::Checkpoint(e.to_string()))?;
    let mut rest = Vec::new();
    r.read_to_end(&mut rest)?;
    if !rest.is_empty() {
        return Err(HoloError::Checkpoint(format!("{} trailing bytes", rest.len())));
    }
    Ok((StateEncoder::new(ts), ActionEncoder::new(ta)))
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut p = path.as_os_str().to_owned();
    p.push(".json");
    PathBuf::from(p)
}

pub fn save_checkpoint(
    path: &Path,
    states: &StateEncoder,
    actions: &ActionEncoder,
    meta: &CheckpointMeta,
) -> Result<()> {
    write_encoders(BufWriter::new(File::create(path)?), states, actions)?;
    let json = serde_json::to_string_pretty(meta)?;
    std::fs::write(sidecar_path(path), json + "\n")?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<(StateEncoder, ActionEncoder, Option<CheckpointMeta>)> {
    let (s, a) = read_encoders(BufReader::new(File::open(path)?))?;
    let side = sidecar_path(path);
    let meta = if side.exists() {
        Some(serde_json::from_str(&std::fs::read_to_string(side)?)?)
    } else {
        None
    };
    Ok((s, a, meta))
}
