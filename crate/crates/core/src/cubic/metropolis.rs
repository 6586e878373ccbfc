//! Metropolis sampler for cubic models on their truncation box.
//!
//! Proposals are per-coordinate and independent: a fresh uniform draw on
//! [-w_a, w_a]. Restricted to one coordinate the energy is a cubic
//! polynomial A t^3 + B t^2 + C t, so each proposal costs O(r^2) for the
//! coefficient sums instead of a full O(r^3) energy evaluation.

use nalgebra::DVector;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use super::CubicModel;
use crate::error::{Error, Result};

/// Fraction of the box half-width beyond which a sample counts as
/// boundary-adjacent; mass piling up there means the box, not the energy,
/// is shaping the distribution.
pub const BOUNDARY_BAND: f64 = 0.9;

#[derive(Debug, Clone)]
pub struct McmcConfig {
    pub n_chains: usize,
    /// Discarded sweeps per chain.
    pub burn_in: usize,
    /// Recorded sweeps per chain (after burn-in, before thinning).
    pub n_sweeps: usize,
    /// Keep one sample every `thin` sweeps.
    pub thin: usize,
    pub seed: u64,
    /// Offset added to the per-chain RNG stream; lets callers give every
    /// fit epoch its own independent randomness under one seed.
    pub stream_offset: u64,
    /// Standard deviation for chain initialization (clipped to the box);
    /// defaults to box_half_width / 5.
    pub init_sigma: Option<DVector<f64>>,
}

impl Default for McmcConfig {
    fn default() -> Self {
        Self {
            n_chains: 8,
            burn_in: 300,
            n_sweeps: 1500,
            thin: 1,
            seed: 0,
            stream_offset: 0,
            init_sigma: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct McmcRun {
    pub samples: Vec<DVector<f64>>,
    pub acceptance_rate: f64,
    /// Fraction of samples with any coordinate beyond BOUNDARY_BAND of its
    /// box half-width.
    pub boundary_fraction: f64,
}

/// Energy change when coordinate `alpha` moves from x[alpha] to `t_new`,
/// with every other coordinate held fixed.
pub(crate) fn delta_energy(model: &CubicModel, x: &DVector<f64>, alpha: usize, t_new: f64) -> f64 {
    let t = x[alpha];
    let a = model.q.get(alpha, alpha, alpha) / 6.0;
    let mut b = 0.5 * model.j[(alpha, alpha)];
    let mut c = model.h[alpha];
    for nu in 0..model.dim {
        if nu == alpha {
            continue;
        }
        let xn = x[nu];
        b += 0.5 * model.q.get(alpha, alpha, nu) * xn;
        c += model.j[(alpha, nu)] * xn;
        for ka in 0..model.dim {
            if ka == alpha {
                continue;
            }
            c += 0.5 * model.q.get(alpha, nu, ka) * xn * x[ka];
        }
    }
    a * (t_new.powi(3) - t.powi(3)) + b * (t_new * t_new - t * t) + c * (t_new - t)
}

struct ChainOutput {
    samples: Vec<DVector<f64>>,
    accepted: u64,
    proposed: u64,
    boundary_hits: u64,
}

fn run_chain(model: &CubicModel, cfg: &McmcConfig, chain: usize) -> Result<ChainOutput> {
    let r = model.dim;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(cfg.stream_offset.wrapping_add(chain as u64));
    let default_sigma = &model.box_half_width / 5.0;
    let sigma = cfg.init_sigma.as_ref().unwrap_or(&default_sigma);
    let mut x = DVector::zeros(r);
    for a in 0..r {
        let z: f64 = rng.sample(StandardNormal);
        let w = model.box_half_width[a];
        x[a] = (z * sigma[a]).clamp(-0.95 * w, 0.95 * w);
    }
    let kept = cfg.n_sweeps / cfg.thin.max(1);
    let mut out = ChainOutput {
        samples: Vec::with_capacity(kept),
        accepted: 0,
        proposed: 0,
        boundary_hits: 0,
    };
    let total_sweeps = cfg.burn_in + cfg.n_sweeps;
    for sweep in 0..total_sweeps {
        for a in 0..r {
            let w = model.box_half_width[a];
            let t_new = rng.gen_range(-w..w);
            let dh = delta_energy(model, &x, a, t_new);
            if !dh.is_finite() {
                return Err(Error::numerical(
                    "non-finite energy change during sampling; parameters have blown up",
                ));
            }
            out.proposed += 1;
            if dh <= 0.0 || rng.gen::<f64>() < (-dh).exp() {
                x[a] = t_new;
                out.accepted += 1;
            }
        }
        if sweep >= cfg.burn_in && (sweep - cfg.burn_in) % cfg.thin.max(1) == 0 {
            let near_edge = (0..r).any(|a| x[a].abs() > BOUNDARY_BAND * model.box_half_width[a]);
            if near_edge {
                out.boundary_hits += 1;
            }
            out.samples.push(x.clone());
        }
    }
    Ok(out)
}

/// Run `cfg.n_chains` independent chains and pool their samples (chain
/// order is fixed, so results are reproducible regardless of scheduling).
pub fn sample_cubic(model: &CubicModel, cfg: &McmcConfig) -> Result<McmcRun> {
    if cfg.n_chains == 0 || cfg.n_sweeps == 0 {
        return Err(Error::precondition("sampler needs at least one chain and one sweep"));
    }
    let chains: Result<Vec<ChainOutput>> = (0..cfg.n_chains)
        .into_par_iter()
        .map(|c| run_chain(model, cfg, c))
        .collect();
    let chains = chains?;
    let mut samples = Vec::new();
    let (mut accepted, mut proposed, mut boundary) = (0u64, 0u64, 0u64);
    for c in chains {
        accepted += c.accepted;
        proposed += c.proposed;
        boundary += c.boundary_hits;
        samples.extend(c.samples);
    }
    let n = samples.len().max(1) as f64;
    Ok(McmcRun {
        samples,
        acceptance_rate: accepted as f64 / proposed.max(1) as f64,
        boundary_fraction: boundary as f64 / n,
    })
}
