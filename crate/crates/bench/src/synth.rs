//! Deterministic synthetic problems: noisy-image grid MRFs (2D and
//! 6-connected 3D), random bipartite co-occurrence graphs and sparse Lasso
//! designs.

use std::fmt;
use std::str::FromStr;

use graphlab_algorithms::coem::CoemProblem;
use graphlab_algorithms::lasso::LassoProblem;
use graphlab_algorithms::mrf::{grid, GridSpec};
use thiserror::Error;

use crate::formats::Problem;

#[derive(Debug, Error, PartialEq)]
pub enum SynthError {
    #[error("bad size {0:?}")]
    BadSize(String),
    #[error("unknown synthetic problem {0:?} (grid2d, grid3d, random-bipartite, lasso-synth)")]
    UnknownKind(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SynthKind {
    Grid2d,
    Grid3d,
    RandomBipartite,
    LassoSynth,
}

impl SynthKind {
    pub fn name(self) -> &'static str {
        match self {
            SynthKind::Grid2d => "grid2d",
            SynthKind::Grid3d => "grid3d",
            SynthKind::RandomBipartite => "random-bipartite",
            SynthKind::LassoSynth => "lasso-synth",
        }
    }

    fn arity(self) -> usize {
        match self {
            SynthKind::Grid3d => 3,
            _ => 2,
        }
    }
}

/// `kind:AxB[xC]`, e.g. `grid2d:200x200`, `grid3d:64x16x16`,
/// `random-bipartite:200x100` (noun phrases x contexts) or
/// `lasso-synth:20x50` (observations x features).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SynthSpec {
    pub kind: SynthKind,
    pub dims: Vec<usize>,
}

impl FromStr for SynthSpec {
    type Err = SynthError;

    fn from_str(s: &str) -> Result<Self, SynthError> {
        let (kind, size) = s.split_once(':').ok_or_else(|| SynthError::BadSize(s.to_string()))?;
        let kind = match kind {
            "grid2d" => SynthKind::Grid2d,
            "grid3d" => SynthKind::Grid3d,
            "random-bipartite" => SynthKind::RandomBipartite,
            "lasso-synth" => SynthKind::LassoSynth,
            other => return Err(SynthError::UnknownKind(other.to_string())),
        };
        let dims: Vec<usize> = size
            .split('x')
            .map(|d| d.parse().ok().filter(|&d| d > 0))
            .collect::<Option<_>>()
            .ok_or_else(|| SynthError::BadSize(size.to_string()))?;
        if dims.len() != kind.arity() {
            return Err(SynthError::BadSize(size.to_string()));
        }
        Ok(SynthSpec { kind, dims })
    }
}

impl fmt::Display for SynthSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let dims: Vec<String> = self.dims.iter().map(|d| d.to_string()).collect();
        write!(f, "{}:{}", self.kind.name(), dims.join("x"))
    }
}

/// Knobs shared by the generators.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SynthOptions {
    /// Labels per grid variable.
    pub card: usize,
    /// Fraction of present pairs (bipartite edges, Lasso nonzeros).
    pub density: f64,
    pub seed: u64,
}

impl Default for SynthOptions {
    fn default() -> Self {
        SynthOptions { card: 2, density: 0.1, seed: 0 }
    }
}

pub fn synth(spec: &SynthSpec, opts: &SynthOptions) -> Result<Problem, SynthError> {
    if !(opts.density > 0.0 && opts.density <= 1.0) {
        return Err(SynthError::BadSize(format!("density {}", opts.density)));
    }
    Ok(match spec.kind {
        SynthKind::Grid2d | SynthKind::Grid3d => {
            if opts.card < 2 {
                return Err(SynthError::BadSize(format!("card {}", opts.card)));
            }
            let g = GridSpec { seed: opts.seed, ..GridSpec::new(&spec.dims, opts.card) };
            let (mrf, _) = grid(&g).map_err(|e| SynthError::BadSize(e.to_string()))?;
            Problem::Mrf(mrf)
        }
        SynthKind::RandomBipartite => {
            let (n_np, n_ct) = (spec.dims[0], spec.dims[1]);
            let edges = ((n_np * n_ct) as f64 * opts.density).round() as usize;
            Problem::Bipartite(CoemProblem::random(n_np, n_ct, edges, 3, 0.1, opts.seed))
        }
        SynthKind::LassoSynth => {
            Problem::Lasso(LassoProblem::random(spec.dims[0], spec.dims[1], opts.density, opts.seed))
        }
    })
}
