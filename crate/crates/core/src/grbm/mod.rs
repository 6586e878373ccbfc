//! Gaussian-Bernoulli restricted Boltzmann machine.
//!
//! Real-valued visible units v (length N_v), binary hidden units h
//! (length N_h), joint energy
//! E(v,h) = -sum_ia W_ia v_i h_a / sigma_i^2
//!          + sum_i (v_i - c_i)^2 / (2 sigma_i^2) - sum_a b_a h_a.
//! Marginalizing h gives a mixture of 2^{N_h} axis-aligned Gaussians with
//! shared widths sigma, which is what lets small machines be handled
//! exactly: the partition function, hidden distribution, and visible
//! moments are all closed-form sums over hidden configurations.

mod train;

pub use train::{train_pcd, GrbmEval, GrbmTrainConfig, GrbmTrainReport};

use nalgebra::{DMatrix, DVector};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const LN_SQRT_2PI: f64 = 0.9189385332046727;

/// Largest hidden layer for which exact enumeration (2^{N_h} terms) is
/// attempted.
pub const ENUMERATION_CAP: usize = 20;

#[derive(Debug, Clone)]
pub struct GrbmModel {
    /// N_v x N_h couplings.
    pub w: DMatrix<f64>,
    /// Hidden biases, length N_h.
    pub b: DVector<f64>,
    /// Visible biases, length N_v.
    pub c: DVector<f64>,
    /// Visible widths, length N_v, strictly positive.
    pub sigma: DVector<f64>,
    /// Exact log partition function, stored when N_h is within the
    /// enumeration cap.
    pub log_norm: Option<f64>,
    pub coordinate_key: Option<u64>,
}

fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl GrbmModel {
    pub fn new(
        w: DMatrix<f64>,
        b: DVector<f64>,
        c: DVector<f64>,
        sigma: DVector<f64>,
    ) -> Result<Self> {
        let (nv, nh) = w.shape();
        if b.len() != nh || c.len() != nv || sigma.len() != nv {
            return Err(Error::precondition("machine parameter shapes disagree"));
        }
        if sigma.iter().any(|s| !s.is_finite() || *s <= 0.0) {
            return Err(Error::precondition("visible widths must be strictly positive"));
        }
        let mut model = GrbmModel { w, b, c, sigma, log_norm: None, coordinate_key: None };
        if nh <= ENUMERATION_CAP {
            model.log_norm = Some(model.exact_log_partition()?);
        }
        Ok(model)
    }

    pub fn n_visible(&self) -> usize {
        self.w.nrows()
    }

    pub fn n_hidden(&self) -> usize {
        self.w.ncols()
    }

    pub fn energy(&self, v: &DVector<f64>, h: &[bool]) -> f64 {
        let mut e = 0.0;
        for i in 0..self.n_visible() {
            let s2 = self.sigma[i] * self.sigma[i];
            let d = v[i] - self.c[i];
            e += d * d / (2.0 * s2);
            for (a, &ha) in h.iter().enumerate() {
                if ha {
                    e -= self.w[(i, a)] * v[i] / s2;
                }
            }
        }
        for (a, &ha) in h.iter().enumerate() {
            if ha {
                e -= self.b[a];
            }
        }
        e
    }

    /// p(h_a = 1 | v) for every hidden unit.
    pub fn hidden_activation(&self, v: &DVector<f64>) -> DVector<f64> {
        DVector::from_fn(self.n_hidden(), |a, _| logistic(self.hidden_input(v, a)))
    }

    fn hidden_input(&self, v: &DVector<f64>, a: usize) -> f64 {
        let mut x = self.b[a];
        for i in 0..self.n_visible() {
            x += self.w[(i, a)] * v[i] / (self.sigma[i] * self.sigma[i]);
        }
        x
    }

    /// Mean of p(v | h): c + W h.
    pub fn visible_mean(&self, h: &[bool]) -> DVector<f64> {
        let mut m = self.c.clone();
        for (a, &ha) in h.iter().enumerate() {
            if ha {
                for i in 0..self.n_visible() {
                    m[i] += self.w[(i, a)];
                }
            }
        }
        m
    }

    /// F(v) = sum_i (v_i-c_i)^2/(2 sigma_i^2) - sum_a softplus(hidden input);
    /// p(v) = exp(-F(v)) / Z.
    pub fn free_energy(&self, v: &DVector<f64>) -> f64 {
        let mut f = 0.0;
        for i in 0..self.n_visible() {
            let d = v[i] - self.c[i];
            f += d * d / (2.0 * self.sigma[i] * self.sigma[i]);
        }
        for a in 0..self.n_hidden() {
            f -= softplus(self.hidden_input(v, a));
        }
        f
    }

    /// log Z by enumerating hidden states; each contributes a closed-form
    /// Gaussian integral over v.
    pub fn exact_log_partition(&self) -> Result<f64> {
        let nh = self.n_hidden();
        if nh > ENUMERATION_CAP {
            return Err(Error::precondition(format!(
                "exact partition needs N_h <= {ENUMERATION_CAP} (got {nh}); \
                 use relative scores between machines of equal size instead"
            )));
        }
        let base: f64 = (0..self.n_visible())
            .map(|i| LN_SQRT_2PI + self.sigma[i].ln())
            .sum();
        // logsumexp over hidden configurations of
        // sum_i (m_i(h)^2 - c_i^2) / (2 sigma_i^2) + b.h
        let mut terms = Vec::with_capacity(1usize << nh);
        let mut h = vec![false; nh];
        for mask in 0u32..(1u32 << nh) {
            for (a, slot) in h.iter_mut().enumerate() {
                *slot = mask & (1 << a) != 0;
            }
            let m = self.visible_mean(&h);
            let mut t = 0.0;
            for i in 0..self.n_visible() {
                t += (m[i] * m[i] - self.c[i] * self.c[i])
                    / (2.0 * self.sigma[i] * self.sigma[i]);
            }
            for (a, &ha) in h.iter().enumerate() {
                if ha {
                    t += self.b[a];
                }
            }
            terms.push(t);
        }
        let peak = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = terms.iter().map(|t| (t - peak).exp()).sum();
        Ok(base + peak + sum.ln())
    }

    pub fn log_density(&self, v: &DVector<f64>) -> Result<f64> {
        if v.len() != self.n_visible() {
            return Err(Error::precondition(format!(
                "point has dimension {}, machine expects {}",
                v.len(),
                self.n_visible()
            )));
        }
        let log_z = match self.log_norm {
            Some(z) => z,
            None => self.exact_log_partition()?,
        };
        Ok(-self.free_energy(v) - log_z)
    }

    /// Marginal hidden distribution p(h), exact, for N_h within the cap.
    pub fn enumerate_hidden(&self) -> Result<Vec<(Vec<bool>, f64)>> {
        let nh = self.n_hidden();
        if nh > ENUMERATION_CAP {
            return Err(Error::precondition("hidden enumeration above cap"));
        }
        let mut configs = Vec::with_capacity(1usize << nh);
        let mut log_w = Vec::with_capacity(1usize << nh);
        for mask in 0u32..(1u32 << nh) {
            let h: Vec<bool> = (0..nh).map(|a| mask & (1 << a) != 0).collect();
            let m = self.visible_mean(&h);
            let mut t = 0.0;
            for i in 0..self.n_visible() {
                t += (m[i] * m[i] - self.c[i] * self.c[i])
                    / (2.0 * self.sigma[i] * self.sigma[i]);
            }
            for (a, &ha) in h.iter().enumerate() {
                if ha {
                    t += self.b[a];
                }
            }
            configs.push(h);
            log_w.push(t);
        }
        let peak = log_w.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let z: f64 = log_w.iter().map(|t| (t - peak).exp()).sum();
        Ok(configs
            .into_iter()
            .zip(log_w)
            .map(|(h, t)| (h, (t - peak).exp() / z))
            .collect())
    }

    /// Exact marginal visible mean and covariance from the hidden mixture.
    pub fn exact_visible_moments(&self) -> Result<(DVector<f64>, DMatrix<f64>)> {
        let nv = self.n_visible();
        let mut mean = DVector::zeros(nv);
        let mut second = DMatrix::zeros(nv, nv);
        for (h, p) in self.enumerate_hidden()? {
            let m = self.visible_mean(&h);
            mean.axpy(p, &m, 1.0);
            second.ger(p, &m, &m, 1.0);
            for i in 0..nv {
                second[(i, i)] += p * self.sigma[i] * self.sigma[i];
            }
        }
        let cov = second - &mean * mean.transpose();
        Ok((mean, cov))
    }

    /// One Gibbs alternation: h ~ p(h|v), then v ~ p(v|h).
    pub fn gibbs_step(&self, v: &mut DVector<f64>, rng: &mut impl Rng) {
        let nh = self.n_hidden();
        let mut h = vec![false; nh];
        for (a, slot) in h.iter_mut().enumerate() {
            *slot = rng.gen::<f64>() < logistic(self.hidden_input(v, a));
        }
        let m = self.visible_mean(&h);
        for i in 0..self.n_visible() {
            let z: f64 = rng.sample(StandardNormal);
            v[i] = m[i] + self.sigma[i] * z;
        }
    }

    /// Gibbs chain sampler for the visible marginal.
    pub fn sample(&self, count: usize, burn_in: usize, seed: u64) -> Vec<DVector<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut v = self.c.clone();
        for _ in 0..burn_in {
            self.gibbs_step(&mut v, &mut rng);
        }
        (0..count)
            .map(|_| {
                self.gibbs_step(&mut v, &mut rng);
                v.clone()
            })
            .collect()
    }

    pub fn to_json(&self) -> String {
        let repr = GrbmModelRepr {
            n_visible: self.n_visible(),
            n_hidden: self.n_hidden(),
            w: self.w.transpose().as_slice().to_vec(),
            b: self.b.iter().cloned().collect(),
            c: self.c.iter().cloned().collect(),
            sigma: self.sigma.iter().cloned().collect(),
            log_norm: self.log_norm,
            coordinate_key: self.coordinate_key,
        };
        serde_json::to_string_pretty(&repr).expect("machine serialization")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let repr: GrbmModelRepr =
            serde_json::from_str(text).map_err(|e| Error::parse(format!("machine model: {e}")))?;
        if repr.w.len() != repr.n_visible * repr.n_hidden {
            return Err(Error::schema(format!(
                "W has {} entries for {}x{}",
                repr.w.len(),
                repr.n_visible,
                repr.n_hidden
            )));
        }
        let w = DMatrix::from_row_slice(repr.n_visible, repr.n_hidden, &repr.w);
        let mut model = GrbmModel::new(
            w,
            DVector::from_vec(repr.b),
            DVector::from_vec(repr.c),
            DVector::from_vec(repr.sigma),
        )?;
        if let (Some(stored), Some(recomputed)) = (repr.log_norm, model.log_norm) {
            if (stored - recomputed).abs() > 1e-9 * (1.0 + stored.abs()) {
                return Err(Error::schema(format!(
                    "stored log partition {stored} disagrees with recomputation {recomputed}"
                )));
            }
        }
        model.coordinate_key = repr.coordinate_key;
        Ok(model)
    }
}

#[derive(Serialize, Deserialize)]
struct GrbmModelRepr {
    n_visible: usize,
    n_hidden: usize,
    /// Row-major N_v x N_h.
    w: Vec<f64>,
    b: Vec<f64>,
    c: Vec<f64>,
    sigma: Vec<f64>,
    log_norm: Option<f64>,
    coordinate_key: Option<u64>,
}
