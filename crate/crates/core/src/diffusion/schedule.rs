use serde::{Deserialize, Serialize};

use super::DiffusionError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sampler {
    EulerAncestralKarras,
    /// DDIM with `η = 1`, i.e. ancestral DDPM on a strided timestep grid.
    DdpmAncestral,
}

/// Scaled-linear noise schedule shared by training and sampling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiffusionSchedule {
    pub num_train_steps: usize,
    pub beta_start: f64,
    pub beta_end: f64,
    pub sampler: Sampler,
    pub num_sample_steps: usize,
    /// Karras `ρ`.
    pub rho: f64,
}

impl Default for DiffusionSchedule {
    fn default() -> Self {
        Self {
            num_train_steps: 1000,
            beta_start: 0.00085,
            beta_end: 0.012,
            sampler: Sampler::EulerAncestralKarras,
            num_sample_steps: 20,
            rho: 7.0,
        }
    }
}

impl DiffusionSchedule {
    pub fn validate(&self) -> Result<(), DiffusionError> {
        if self.num_train_steps < 2 {
            return Err(DiffusionError::Config("num_train_steps must be >= 2".into()));
        }
        if self.num_sample_steps == 0 || self.num_sample_steps > self.num_train_steps {
            return Err(DiffusionError::Config(format!(
                "num_sample_steps must be in 1..={}",
                self.num_train_steps
            )));
        }
        if !(0.0 < self.beta_start && self.beta_start < self.beta_end && self.beta_end < 1.0) {
            return Err(DiffusionError::Config("need 0 < beta_start < beta_end < 1".into()));
        }
        if self.rho <= 0.0 {
            return Err(DiffusionError::Config("rho must be positive".into()));
        }
        Ok(())
    }

    pub fn betas(&self) -> Vec<f64> {
        let (a, b) = (self.beta_start.sqrt(), self.beta_end.sqrt());
        let n = self.num_train_steps;
        (0..n)
            .map(|i| {
                let s = a + (b - a) * i as f64 / (n - 1) as f64;
                s * s
            })
            .collect()
    }

    /// `ᾱ_t` for `t = 0..T`.
    pub fn alphas_cumprod(&self) -> Vec<f64> {
        let mut acc = 1.0;
        self.betas()
            .into_iter()
            .map(|b| {
                acc *= 1.0 - b;
                acc
            })
            .collect()
    }

    /// `σ_t = √((1 − ᾱ_t) / ᾱ_t)`, strictly increasing in `t`.
    pub fn train_sigmas(&self) -> Vec<f64> {
        self.alphas_cumprod().into_iter().map(|a| ((1.0 - a) / a).sqrt()).collect()
    }

    /// Karras sigmas from `σ_max` down to `σ_min`, followed by a final 0.
    pub fn karras_sigmas(&self) -> Vec<f64> {
        let train = self.train_sigmas();
        let (lo, hi) = (train[0], train[train.len() - 1]);
        let n = self.num_sample_steps;
        let inv = 1.0 / self.rho;
        let (a, b) = (hi.powf(inv), lo.powf(inv));
        let mut out: Vec<f64> = (0..n)
            .map(|i| {
                let frac = if n == 1 { 0.0 } else { i as f64 / (n - 1) as f64 };
                (a + frac * (b - a)).powf(self.rho)
            })
            .collect();
        out.push(0.0);
        out
    }

    /// Continuous timestep for `sigma` by linear interpolation in log-sigma.
    pub fn sigma_to_t(&self, sigma: f64) -> f64 {
        let logs: Vec<f64> = self.train_sigmas().iter().map(|s| s.ln()).collect();
        let ls = sigma.max(1e-12).ln();
        if ls <= logs[0] {
            return 0.0;
        }
        let last = logs.len() - 1;
        if ls >= logs[last] {
            return last as f64;
        }
        let hi = logs.partition_point(|&l| l < ls);
        let lo = hi - 1;
        let w = (ls - logs[lo]) / (logs[hi] - logs[lo]);
        lo as f64 + w
    }

    /// Descending integer timesteps for the DDPM sampler.
    pub fn ddpm_timesteps(&self) -> Vec<usize> {
        let n = self.num_sample_steps;
        let last = self.num_train_steps - 1;
        (0..n)
            .map(|i| {
                if n == 1 {
                    last
                } else {
                    ((last as f64) * (1.0 - i as f64 / (n - 1) as f64)).round() as usize
                }
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn betas_match_scaled_linear_endpoints() {
        let s = DiffusionSchedule::default();
        let b = s.betas();
        assert!((b[0] - 0.00085).abs() < 1e-15);
        assert!((b[999] - 0.012).abs() < 1e-15);
    }

    #[test]
    fn sigmas_strictly_monotone() {
        let s = DiffusionSchedule::default();
        assert!(s.train_sigmas().windows(2).all(|w| w[0] < w[1]));
        let k = s.karras_sigmas();
        assert_eq!(k.len(), 21);
        assert!(k.windows(2).all(|w| w[0] > w[1]));
        assert_eq!(*k.last().unwrap(), 0.0);
        let train = s.train_sigmas();
        assert!((k[0] - train[999]).abs() < 1e-9 && (k[19] - train[0]).abs() < 1e-12);
    }

    #[test]
    fn sigma_to_t_inverts_grid() {
        let s = DiffusionSchedule::default();
        let train = s.train_sigmas();
        for t in [0usize, 1, 17, 500, 999] {
            assert!((s.sigma_to_t(train[t]) - t as f64).abs() < 1e-9);
        }
        let mid = (train[10].ln() * 0.5 + train[11].ln() * 0.5).exp();
        assert!((s.sigma_to_t(mid) - 10.5).abs() < 1e-9);
    }

    #[test]
    fn ddpm_grid() {
        let s = DiffusionSchedule {
            num_sample_steps: 4,
            ..Default::default()
        };
        assert_eq!(s.ddpm_timesteps(), vec![999, 666, 333, 0]);
    }
}
