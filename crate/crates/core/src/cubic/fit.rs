//! Moment-matching fit for cubic models.
//!
//! Plain gradient ascent on the train likelihood: each epoch estimates the
//! model moments by Metropolis sampling, then moves every parameter toward
//! closing its gap against the data moment. Test likelihood (with the
//! perturbative normalizer) drives the stopping rule, and mass reaching
//! the sampling box is treated as model divergence, not as a fit result.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use super::metropolis::{sample_cubic, McmcConfig};
use super::CubicModel;
use crate::dataset::Tensor3;
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct CubicFitConfig {
    pub eta_h: f64,
    pub eta_j: f64,
    pub eta_q: f64,
    pub max_epochs: usize,
    /// Stop when test log-likelihood improves by less than
    /// `rel_tol * |previous|` over this many epochs.
    pub check_every: usize,
    pub rel_tol: f64,
    /// Report a stall when the best test log-likelihood has not moved for
    /// this many epochs.
    pub stall_epochs: usize,
    /// Also fit Q entries with repeated indices (Q_aab, Q_aaa). Off by
    /// default: odd self-moments drive scalar-direction runaway.
    pub fit_repeated_q: bool,
    /// Box half-width in units of the per-coordinate data deviation.
    pub box_sigmas: f64,
    /// Abort when the sampler's boundary fraction exceeds this for
    /// `DIVERGENCE_PATIENCE` consecutive epochs. A single chain can wander
    /// over the energy barrier into a box corner and return, so an isolated
    /// excursion is only warned about; a runaway model stays out there.
    pub divergence_threshold: f64,
    pub mcmc: McmcConfig,
    pub seed: u64,
}

/// Consecutive over-threshold epochs that count as divergence.
pub const DIVERGENCE_PATIENCE: usize = 3;

impl Default for CubicFitConfig {
    fn default() -> Self {
        Self {
            eta_h: 1e-2,
            eta_j: 1e-2,
            eta_q: 1e-3,
            max_epochs: 400,
            check_every: 10,
            rel_tol: 0.01,
            stall_epochs: 50,
            fit_repeated_q: false,
            box_sigmas: 5.0,
            divergence_threshold: 0.02,
            mcmc: McmcConfig::default(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct EpochRecord {
    pub epoch: usize,
    pub test_ll: f64,
    pub train_ll: f64,
    pub acceptance_rate: f64,
    pub boundary_fraction: f64,
    pub grad_norm: f64,
}

#[derive(Debug, Clone)]
pub struct CubicFitReport {
    pub model: CubicModel,
    pub trace: Vec<EpochRecord>,
    pub warnings: Vec<String>,
    pub epochs_run: usize,
    pub converged: bool,
}

/// Fixed ordering of the independent parameters: fields, then the upper
/// triangle of J, then the fitted Q entries.
pub struct ParamLayout {
    dim: usize,
    j_pairs: Vec<(usize, usize)>,
    q_triples: Vec<(usize, usize, usize)>,
}

impl ParamLayout {
    pub fn new(dim: usize, fit_repeated_q: bool) -> Self {
        let mut j_pairs = Vec::new();
        for a in 0..dim {
            for b in a..dim {
                j_pairs.push((a, b));
            }
        }
        let mut q_triples = Vec::new();
        for a in 0..dim {
            for b in a..dim {
                for c in b..dim {
                    let distinct = a < b && b < c;
                    if distinct || fit_repeated_q {
                        q_triples.push((a, b, c));
                    }
                }
            }
        }
        Self { dim, j_pairs, q_triples }
    }

    pub fn n_params(&self) -> usize {
        self.dim + self.j_pairs.len() + self.q_triples.len()
    }

    /// dH/dtheta at x, with permutation multiplicities absorbed so each
    /// independent entry is one parameter.
    pub fn stat_vector(&self, x: &DVector<f64>, out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.n_params());
        let mut at = 0;
        for a in 0..self.dim {
            out[at] = x[a];
            at += 1;
        }
        for &(a, b) in &self.j_pairs {
            out[at] = if a == b { 0.5 * x[a] * x[a] } else { x[a] * x[b] };
            at += 1;
        }
        for &(a, b, c) in &self.q_triples {
            out[at] = if a == b && b == c {
                x[a] * x[a] * x[a] / 6.0
            } else if a == b {
                0.5 * x[a] * x[a] * x[c]
            } else if b == c {
                0.5 * x[b] * x[b] * x[a]
            } else {
                x[a] * x[b] * x[c]
            };
            at += 1;
        }
    }

    pub fn apply_step(
        &self,
        h: &mut DVector<f64>,
        j: &mut DMatrix<f64>,
        q: &mut Tensor3,
        gap: &[f64],
        cfg: &CubicFitConfig,
    ) {
        let mut at = 0;
        for a in 0..self.dim {
            h[a] += cfg.eta_h * gap[at];
            at += 1;
        }
        for &(a, b) in &self.j_pairs {
            let step = cfg.eta_j * gap[at];
            j[(a, b)] += step;
            if a != b {
                j[(b, a)] += step;
            }
            at += 1;
        }
        for &(a, b, c) in &self.q_triples {
            let v = q.get(a, b, c) + cfg.eta_q * gap[at];
            q.set_sym(a, b, c, v);
            at += 1;
        }
    }
}

fn mean_stat_vector(layout: &ParamLayout, data: &[DVector<f64>]) -> Vec<f64> {
    let n = layout.n_params();
    let mut acc = vec![0.0; n];
    let mut row = vec![0.0; n];
    for x in data {
        layout.stat_vector(x, &mut row);
        for (a, r) in acc.iter_mut().zip(&row) {
            *a += r;
        }
    }
    let inv = 1.0 / data.len() as f64;
    for a in &mut acc {
        *a *= inv;
    }
    acc
}

fn mean_log_density(model: &CubicModel, data: &[DVector<f64>]) -> f64 {
    let total: f64 = data
        .par_iter()
        .map(|x| -model.energy(x) - model.log_norm)
        .sum();
    total / data.len() as f64
}

fn population_std(train: &[DVector<f64>], dim: usize) -> DVector<f64> {
    let n = train.len() as f64;
    let mut mean = DVector::zeros(dim);
    for x in train {
        mean += x;
    }
    mean /= n;
    let mut var = DVector::zeros(dim);
    for x in train {
        for a in 0..dim {
            let d = x[a] - mean[a];
            var[a] += d * d;
        }
    }
    var.map(|v: f64| (v / n).sqrt())
}

pub fn fit_cubic(
    train: &[DVector<f64>],
    test: &[DVector<f64>],
    cfg: &CubicFitConfig,
) -> Result<CubicFitReport> {
    if train.len() < 2 || test.is_empty() {
        return Err(Error::precondition("cubic fit needs train and test vectors"));
    }
    let dim = train[0].len();
    if dim == 0 || train.iter().chain(test).any(|x| x.len() != dim) {
        return Err(Error::precondition("inconsistent vector dimensions"));
    }
    let sigma = population_std(train, dim);
    if sigma.iter().any(|s| *s <= 0.0) {
        return Err(Error::precondition(
            "a coordinate has zero variance; reduce out null modes before fitting",
        ));
    }
    let box_half_width = &sigma * cfg.box_sigmas;
    let layout = ParamLayout::new(dim, cfg.fit_repeated_q);
    let data_stats = mean_stat_vector(&layout, train);

    let mut h = DVector::zeros(dim);
    let mut j = DMatrix::identity(dim, dim);
    let mut q = Tensor3::zeros(dim);

    let mut trace: Vec<EpochRecord> = Vec::new();
    let mut warnings = Vec::new();
    let mut converged = false;
    let mut best_ll = f64::NEG_INFINITY;
    let mut best_epoch = 0usize;
    let mut epochs_over_threshold = 0usize;

    for epoch in 0..cfg.max_epochs {
        let model = CubicModel::new(h.clone(), j.clone(), q.clone(), box_half_width.clone())
            .map_err(|e| {
                Error::numerical(format!("epoch {epoch}: {e}; fit has left the stable region"))
            })?;
        let mcmc = McmcConfig {
            seed: cfg.seed,
            stream_offset: (epoch as u64).wrapping_mul(cfg.mcmc.n_chains as u64),
            init_sigma: Some(sigma.clone()),
            ..cfg.mcmc.clone()
        };
        let run = sample_cubic(&model, &mcmc)?;
        if run.boundary_fraction > cfg.divergence_threshold {
            epochs_over_threshold += 1;
            if epochs_over_threshold >= DIVERGENCE_PATIENCE {
                return Err(Error::numerical(format!(
                    "fit diverged at epoch {epoch}: {:.1}% of samples at the box boundary \
                     for {epochs_over_threshold} consecutive epochs (limit {:.1}%); the \
                     cubic energy is running away along some direction",
                    100.0 * run.boundary_fraction,
                    100.0 * cfg.divergence_threshold
                )));
            }
            warnings.push(format!(
                "epoch {epoch}: {:.1}% of samples at the box boundary (limit {:.1}%); \
                 tolerated as a transient chain excursion",
                100.0 * run.boundary_fraction,
                100.0 * cfg.divergence_threshold
            ));
        } else {
            epochs_over_threshold = 0;
        }
        let model_stats = mean_stat_vector(&layout, &run.samples);
        let gap: Vec<f64> =
            model_stats.iter().zip(&data_stats).map(|(m, d)| m - d).collect();
        let grad_norm = gap.iter().map(|g| g * g).sum::<f64>().sqrt();
        let test_ll = mean_log_density(&model, test);
        let train_ll = mean_log_density(&model, train);
        trace.push(EpochRecord {
            epoch,
            test_ll,
            train_ll,
            acceptance_rate: run.acceptance_rate,
            boundary_fraction: run.boundary_fraction,
            grad_norm,
        });
        if test_ll > best_ll {
            best_ll = test_ll;
            best_epoch = epoch;
        }
        if epoch >= cfg.check_every && cfg.check_every > 0 {
            let prev = trace[epoch - cfg.check_every].test_ll;
            if test_ll - prev < cfg.rel_tol * prev.abs() {
                converged = true;
                break;
            }
        }
        if epoch - best_epoch >= cfg.stall_epochs {
            warnings.push(format!(
                "test likelihood has not improved since epoch {best_epoch} \
                 ({} epochs ago); stopping without convergence",
                epoch - best_epoch
            ));
            break;
        }
        layout.apply_step(&mut h, &mut j, &mut q, &gap, cfg);
    }

    let model = CubicModel::new(h, j, q, box_half_width)?;
    if let Some(w) = model.log_norm_mayer()?.warning {
        warnings.push(w);
    }
    let epochs_run = trace.len();
    Ok(CubicFitReport { model, trace, warnings, epochs_run, converged })
}
