//! Persistent contrastive divergence (k = 1) for the Gaussian-Bernoulli
//! machine.
//!
//! Each step takes one minibatch, one Gibbs alternation of the persistent
//! chains, and one gradient update with a linearly decaying learning rate.
//! The hidden statistics use activation probabilities on both the data and
//! chain sides. Test log-likelihood is evaluated with the exact partition
//! function (hidden sizes here are within the enumeration cap), and the
//! run is declared stationary when the trailing window of evaluations
//! moves by less than its own standard deviation.

use nalgebra::{DMatrix, DVector};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use super::GrbmModel;
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct GrbmTrainConfig {
    pub n_hidden: usize,
    pub steps: usize,
    pub batch: usize,
    pub eta_start: f64,
    pub eta_end: f64,
    pub momentum: f64,
    /// Number of persistent chains.
    pub n_chains: usize,
    pub sigma_init: f64,
    /// Learn the visible widths; off by default (widths frozen, then
    /// rescaled once after training).
    pub train_sigma: bool,
    /// Rescale widths after training so model marginal variances match the
    /// training data.
    pub rescale_sigma: bool,
    /// Evaluate train/test likelihood every this many steps.
    pub eval_every: usize,
    /// Number of trailing evaluations per stationarity window.
    pub window: usize,
    pub seed: u64,
}

impl Default for GrbmTrainConfig {
    fn default() -> Self {
        Self {
            n_hidden: 8,
            steps: 200_000,
            batch: 200,
            eta_start: 2e-3,
            eta_end: 2e-5,
            momentum: 0.0,
            n_chains: 200,
            sigma_init: 0.5,
            train_sigma: false,
            rescale_sigma: true,
            eval_every: 2000,
            window: 10,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct GrbmEval {
    pub step: usize,
    pub test_ll: f64,
    pub train_ll: f64,
    pub reconstruction_error: f64,
}

#[derive(Debug, Clone)]
pub struct GrbmTrainReport {
    pub model: GrbmModel,
    pub trace: Vec<GrbmEval>,
    /// Trailing-window criterion: |mean(last window) - mean(previous
    /// window)| <= max(std(last window), standard error of the test
    /// log-likelihood mean). Evaluations are exact, so the window scatter
    /// alone can sit far below the resolution at which the test set can
    /// distinguish two models; drift below that resolution is stationary.
    pub stationary: bool,
    pub warnings: Vec<String>,
}

fn mean_log_likelihood(model: &GrbmModel, data: &[DVector<f64>], log_z: f64) -> f64 {
    let total: f64 = data.iter().map(|v| -model.free_energy(v) - log_z).sum();
    total / data.len() as f64
}

fn reconstruction_error(model: &GrbmModel, batch: &[&DVector<f64>]) -> f64 {
    let mut total = 0.0;
    for v in batch {
        let p = model.hidden_activation(v);
        // Mean-field reconstruction: c + W p.
        let recon = &model.c + &model.w * &p;
        total += (*v - recon).norm_squared();
    }
    total / batch.len() as f64
}

/// SI initialization: uniform couplings scaled by sqrt(6/(N_v+N_h)),
/// hidden biases set from the coupling column norms, zero visible biases,
/// widths at sigma_init.
fn initialize(nv: usize, nh: usize, cfg: &GrbmTrainConfig, rng: &mut ChaCha8Rng) -> GrbmModel {
    let scale = (6.0 / (nv + nh) as f64).sqrt();
    let w = DMatrix::from_fn(nv, nh, |_, _| scale * (rng.gen::<f64>() * 2.0 - 1.0));
    let c = DVector::zeros(nv);
    let b = DVector::from_fn(nh, |a, _| {
        let col_plus_c = (w.column(a) + &c).norm();
        -0.5 * (col_plus_c + c.norm()) + 0.1f64.ln()
    });
    GrbmModel {
        w,
        b,
        c,
        sigma: DVector::from_element(nv, cfg.sigma_init),
        log_norm: None,
        coordinate_key: None,
    }
}

pub fn train_pcd(
    train: &[DVector<f64>],
    test: &[DVector<f64>],
    cfg: &GrbmTrainConfig,
) -> Result<GrbmTrainReport> {
    if train.is_empty() || test.is_empty() {
        return Err(Error::precondition("training needs train and test vectors"));
    }
    let nv = train[0].len();
    if train.iter().chain(test).any(|v| v.len() != nv) {
        return Err(Error::precondition("inconsistent vector dimensions"));
    }
    if cfg.n_hidden == 0 || cfg.n_hidden > super::ENUMERATION_CAP {
        return Err(Error::precondition(format!(
            "hidden size must be in 1..={} for exact likelihood tracking",
            super::ENUMERATION_CAP
        )));
    }
    if cfg.batch == 0 || cfg.n_chains == 0 {
        return Err(Error::precondition("batch and chain counts must be positive"));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut model = initialize(nv, cfg.n_hidden, cfg, &mut rng);
    let nh = cfg.n_hidden;

    // Persistent chains start at random training vectors.
    let mut chains: Vec<DVector<f64>> = (0..cfg.n_chains)
        .map(|_| train[rng.gen_range(0..train.len())].clone())
        .collect();

    let mut vel_w = DMatrix::zeros(nv, nh);
    let mut vel_b = DVector::zeros(nh);
    let mut vel_c = DVector::zeros(nv);
    let mut vel_ls = DVector::zeros(nv);

    let mut trace: Vec<GrbmEval> = Vec::new();
    let mut warnings = Vec::new();
    let mut initial_recon: Option<f64> = None;

    for step in 0..cfg.steps {
        let frac = if cfg.steps > 1 { step as f64 / (cfg.steps - 1) as f64 } else { 0.0 };
        let eta = cfg.eta_start + (cfg.eta_end - cfg.eta_start) * frac;

        let batch: Vec<&DVector<f64>> =
            (0..cfg.batch).map(|_| &train[rng.gen_range(0..train.len())]).collect();

        // Data-side statistics.
        let mut data_w = DMatrix::zeros(nv, nh);
        let mut data_b = DVector::zeros(nh);
        let mut data_c = DVector::zeros(nv);
        let mut data_ls = DVector::zeros(nv);
        for v in &batch {
            let p = model.hidden_activation(v);
            for i in 0..nv {
                let s2 = model.sigma[i] * model.sigma[i];
                let vi = v[i] / s2;
                for a in 0..nh {
                    data_w[(i, a)] += vi * p[a];
                }
                data_c[i] += (v[i] - model.c[i]) / s2;
            }
            data_b += &p;
            if cfg.train_sigma {
                for i in 0..nv {
                    let s2 = model.sigma[i] * model.sigma[i];
                    let wp = model.w.row(i).transpose().dot(&p);
                    data_ls[i] +=
                        (v[i] - model.c[i]).powi(2) / s2 - 2.0 * v[i] * wp / s2;
                }
            }
        }

        // One Gibbs alternation of every persistent chain, then the
        // model-side statistics from the updated chains.
        let mut model_w = DMatrix::zeros(nv, nh);
        let mut model_b = DVector::zeros(nh);
        let mut model_c = DVector::zeros(nv);
        let mut model_ls = DVector::zeros(nv);
        for chain in &mut chains {
            model.gibbs_step(chain, &mut rng);
            let p = model.hidden_activation(chain);
            for i in 0..nv {
                let s2 = model.sigma[i] * model.sigma[i];
                let vi = chain[i] / s2;
                for a in 0..nh {
                    model_w[(i, a)] += vi * p[a];
                }
                model_c[i] += (chain[i] - model.c[i]) / s2;
            }
            model_b += &p;
            if cfg.train_sigma {
                for i in 0..nv {
                    let s2 = model.sigma[i] * model.sigma[i];
                    let wp = model.w.row(i).transpose().dot(&p);
                    model_ls[i] +=
                        (chain[i] - model.c[i]).powi(2) / s2 - 2.0 * chain[i] * wp / s2;
                }
            }
        }

        let nb = cfg.batch as f64;
        let nc = cfg.n_chains as f64;
        vel_w = &vel_w * cfg.momentum + (data_w / nb - model_w / nc) * eta;
        vel_b = &vel_b * cfg.momentum + (data_b / nb - model_b / nc) * eta;
        vel_c = &vel_c * cfg.momentum + (data_c / nb - model_c / nc) * eta;
        model.w += &vel_w;
        model.b += &vel_b;
        model.c += &vel_c;
        if cfg.train_sigma {
            vel_ls = &vel_ls * cfg.momentum + (data_ls / nb - model_ls / nc) * eta;
            for i in 0..nv {
                let ls = model.sigma[i].ln() + 0.5 * vel_ls[i];
                model.sigma[i] = ls.exp().clamp(1e-3, 1e3);
            }
        }

        if !model.w.iter().all(|x| x.is_finite())
            || !model.b.iter().all(|x| x.is_finite())
            || !model.c.iter().all(|x| x.is_finite())
        {
            return Err(Error::numerical(format!(
                "machine parameters became non-finite at step {step}"
            )));
        }

        if step % cfg.eval_every == 0 || step + 1 == cfg.steps {
            let log_z = model.exact_log_partition()?;
            let recon = reconstruction_error(&model, &batch);
            let first = *initial_recon.get_or_insert(recon);
            if !recon.is_finite() || recon > 100.0 * first.max(1e-12) {
                return Err(Error::numerical(format!(
                    "reconstruction error diverged at step {step}: {recon:.3e} \
                     (initial {first:.3e}); trace has {} evaluations",
                    trace.len()
                )));
            }
            trace.push(GrbmEval {
                step,
                test_ll: mean_log_likelihood(&model, test, log_z),
                train_ll: mean_log_likelihood(&model, train, log_z),
                reconstruction_error: recon,
            });
        }
    }

    if cfg.rescale_sigma && cfg.steps > 0 {
        rescale_widths(&mut model, train)?;
    }
    let log_z = model.exact_log_partition()?;
    model.log_norm = Some(log_z);

    // Resolution of the tracked quantity: the standard error of the mean
    // test log-likelihood under the final model.
    let per_vector: Vec<f64> = test.iter().map(|v| -model.free_energy(v) - log_z).collect();
    let ll_mean = per_vector.iter().sum::<f64>() / per_vector.len() as f64;
    let ll_var = per_vector.iter().map(|x| (x - ll_mean).powi(2)).sum::<f64>()
        / per_vector.len() as f64;
    let se_floor = (ll_var / per_vector.len() as f64).sqrt();

    let stationary = match stationarity(&trace, cfg.window, se_floor) {
        Some(flag) => flag,
        None => {
            if cfg.steps > 0 {
                warnings.push(format!(
                    "too few evaluations ({}) for a {}-point stationarity window",
                    trace.len(),
                    cfg.window
                ));
            }
            false
        }
    };
    Ok(GrbmTrainReport { model, trace, stationary, warnings })
}

/// Match the model's marginal visible variances to the data by the exact
/// axis rescaling v -> a v (which maps W, c, sigma by the same factors and
/// leaves the hidden mixture weights unchanged).
fn rescale_widths(model: &mut GrbmModel, train: &[DVector<f64>]) -> Result<()> {
    let nv = model.n_visible();
    let n = train.len() as f64;
    let mut mean = DVector::zeros(nv);
    for v in train {
        mean += v;
    }
    mean /= n;
    let mut var = DVector::zeros(nv);
    for v in train {
        for i in 0..nv {
            var[i] += (v[i] - mean[i]).powi(2);
        }
    }
    var /= n;
    let (_, cov) = model.exact_visible_moments()?;
    for i in 0..nv {
        let model_var = cov[(i, i)];
        if model_var <= 0.0 || var[i] <= 0.0 {
            continue;
        }
        let a = (var[i] / model_var).sqrt();
        for x in model.w.row_mut(i).iter_mut() {
            *x *= a;
        }
        model.c[i] *= a;
        model.sigma[i] *= a;
    }
    Ok(())
}

fn stationarity(trace: &[GrbmEval], window: usize, se_floor: f64) -> Option<bool> {
    if window == 0 || trace.len() < 2 * window {
        return None;
    }
    let lls: Vec<f64> = trace.iter().map(|e| e.test_ll).collect();
    let last = &lls[lls.len() - window..];
    let prev = &lls[lls.len() - 2 * window..lls.len() - window];
    let mean = |xs: &[f64]| xs.iter().sum::<f64>() / xs.len() as f64;
    let m_last = mean(last);
    let m_prev = mean(prev);
    let sd_last =
        (last.iter().map(|x| (x - m_last).powi(2)).sum::<f64>() / window as f64).sqrt();
    Some((m_last - m_prev).abs() <= sd_last.max(se_floor).max(1e-12))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::StandardNormal;

    fn gaussian_vectors(n: usize, rho: f64, seed: u64) -> Vec<DVector<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let b = (1.0 - rho * rho).sqrt();
        (0..n)
            .map(|_| {
                let z0: f64 = rng.sample(StandardNormal);
                let z1: f64 = rng.sample(StandardNormal);
                DVector::from_vec(vec![z0, rho * z0 + b * z1])
            })
            .collect()
    }

    #[test]
    fn zero_steps_returns_the_initialization() {
        let train = gaussian_vectors(50, 0.3, 1);
        let test = gaussian_vectors(20, 0.3, 2);
        let cfg = GrbmTrainConfig {
            n_hidden: 3,
            steps: 0,
            rescale_sigma: false,
            ..Default::default()
        };
        let report = train_pcd(&train, &test, &cfg).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let init = initialize(2, 3, &cfg, &mut rng);
        assert_eq!(report.model.w, init.w);
        assert_eq!(report.model.b, init.b);
        assert_eq!(report.model.c, init.c);
        assert_eq!(report.model.sigma, init.sigma);
        assert!(report.trace.is_empty());
        assert!(!report.stationary);
    }

    #[test]
    fn initialization_follows_the_stated_formulas() {
        let cfg = GrbmTrainConfig { n_hidden: 4, sigma_init: 0.5, seed: 3, ..Default::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let model = initialize(5, 4, &cfg, &mut rng);
        let scale = (6.0f64 / 9.0).sqrt();
        assert!(model.w.iter().all(|x| x.abs() <= scale));
        for a in 0..4 {
            let expect = -0.5 * model.w.column(a).norm() + 0.1f64.ln();
            assert!((model.b[a] - expect).abs() < 1e-12);
        }
        assert!(model.c.iter().all(|x| *x == 0.0));
        assert!(model.sigma.iter().all(|s| *s == 0.5));
    }

    #[test]
    fn short_training_improves_test_likelihood() {
        let train = gaussian_vectors(2000, 0.5, 4);
        let test = gaussian_vectors(500, 0.5, 5);
        let cfg = GrbmTrainConfig {
            n_hidden: 4,
            steps: 4000,
            batch: 100,
            n_chains: 100,
            eval_every: 200,
            seed: 6,
            ..Default::default()
        };
        let report = train_pcd(&train, &test, &cfg).unwrap();
        let first = report.trace.first().unwrap().test_ll;
        let last = report.trace.last().unwrap().test_ll;
        assert!(last > first + 0.1, "test LL {first} -> {last}");
    }

    #[test]
    fn trained_machine_approaches_the_planted_gaussian_likelihood() {
        // The expected log-likelihood of the true density is the negative
        // differential entropy -(d/2)(1+ln 2pi) - (1/2) ln det Sigma.
        let rho: f64 = 0.5;
        let train = gaussian_vectors(8000, rho, 7);
        let test = gaussian_vectors(2000, rho, 8);
        let cfg = GrbmTrainConfig {
            n_hidden: 8,
            steps: 30_000,
            batch: 200,
            n_chains: 200,
            eval_every: 1000,
            seed: 9,
            ..Default::default()
        };
        let report = train_pcd(&train, &test, &cfg).unwrap();
        let log_z = report.model.log_norm.unwrap();
        let ll = mean_log_likelihood(&report.model, &test, log_z);
        let truth = -(1.0 + (2.0 * std::f64::consts::PI).ln())
            - 0.5 * (1.0 - rho * rho).ln();
        assert!(
            (ll - truth).abs() < 0.05 * truth.abs(),
            "test LL {ll} vs planted optimum {truth}"
        );
    }

    #[test]
    fn width_rescaling_matches_marginal_variances() {
        let train = gaussian_vectors(3000, 0.0, 10);
        let cfg = GrbmTrainConfig {
            n_hidden: 2,
            steps: 1500,
            batch: 100,
            n_chains: 100,
            eval_every: 500,
            seed: 11,
            ..Default::default()
        };
        let report = train_pcd(&train, &train[..500].to_vec(), &cfg).unwrap();
        let (_, cov) = report.model.exact_visible_moments().unwrap();
        let n = train.len() as f64;
        for i in 0..2 {
            let mean_i = train.iter().map(|v| v[i]).sum::<f64>() / n;
            let var_i = train.iter().map(|v| (v[i] - mean_i).powi(2)).sum::<f64>() / n;
            assert!(
                (cov[(i, i)] - var_i).abs() < 1e-9,
                "marginal {i}: model {} vs data {var_i}",
                cov[(i, i)]
            );
        }
    }

    #[test]
    fn w_gradient_is_centered_at_zero_couplings_on_centered_data() {
        // With W = 0 and zero-mean data the expected W-gradient vanishes;
        // check the empirical batch gradient is within a few MC sigma.
        let train = gaussian_vectors(20_000, 0.0, 12);
        let model = GrbmModel::new(
            DMatrix::zeros(2, 3),
            DVector::from_element(3, -0.4),
            DVector::zeros(2),
            DVector::from_element(2, 0.5),
        )
        .unwrap();
        let mut grad = DMatrix::zeros(2, 3);
        for v in &train {
            let p = model.hidden_activation(v);
            for i in 0..2 {
                let s2 = 0.25;
                for a in 0..3 {
                    grad[(i, a)] += v[i] * p[a] / s2;
                }
            }
        }
        grad /= train.len() as f64;
        // p is constant in v when W = 0, so each entry is p_a <v_i> / s2
        // with standard error p_a sigma_v / (s2 sqrt(n)).
        let p = 1.0 / (1.0 + 0.4f64.exp());
        let se = p * 1.0 / (0.25 * (train.len() as f64).sqrt());
        for x in grad.iter() {
            assert!(x.abs() < 3.0 * se, "gradient entry {x}, se {se}");
        }
    }
}
