//! Estimation of inhomogeneous spatio-temporal background intensity functions
//! for planar point processes.
//!
//! The model treats observed events as a realization of a non-homogeneous
//! Poisson process whose intensity is piecewise constant in time: within each
//! time period `p` the intensity is `gamma_p * f_p(x, y)`, where `f_p` is a
//! finite Gaussian mixture sharing component locations across periods while
//! the mixture weights evolve along a chain of Dirichlet processes. Posterior
//! inference runs a hybrid Gibbs/Metropolis sampler; downstream tooling covers
//! thinning-based simulation, label-switching resolution, posterior intensity
//! summaries, and posterior-similarity clustering.
//!
//! Modules map onto the pipeline stages:
//!
//! * [`catalog`] — event catalogs, spatial windows, time partitions, file I/O
//! * [`simulate`] — evaluable ground-truth intensities and thinning simulation
//! * [`model`] — parameter state, priors, likelihoods, posterior density
//! * [`sampler`] — the hybrid MCMC kernel, chains, checkpoints
//! * [`draws`] — posterior draw collections and their JSONL serialization
//! * [`relabel`] — label-switching resolution against a pivot allocation
//! * [`summaries`] — posterior mean / CV / transparency grids, rate summaries
//! * [`cluster`] — posterior similarity, draw selection, spectral clustering

pub mod catalog;
pub mod cluster;
pub mod draws;
mod error;
pub mod gauss;
pub mod model;
pub mod relabel;
pub mod sampler;
pub mod simulate;
pub mod summaries;

pub use error::{Error, Result};

/// Derives an independent per-chain seed from a base seed (splitmix64 step).
pub fn chain_seed(base: u64, chain: usize) -> u64 {
    let mut z = base.wrapping_add((chain as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Hex-encoded SHA-256 of raw bytes, used to fingerprint configs and catalogs.
pub fn sha256_hex(bytes: &[u8]) -> String {
    use sha2::{Digest, Sha256};
    let digest = Sha256::digest(bytes);
    let mut out = String::with_capacity(64);
    for b in digest {
        out.push_str(&format!("{b:02x}"));
    }
    out
}
