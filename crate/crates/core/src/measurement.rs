//! Simulated energy measurement with idle subtraction and a repeated-run
//! confidence-interval stopping rule.
//!
//! Every run measures the supply energy while decoding and, separately, an
//! idle baseline over the same duration; the decoding energy of the run is
//! their difference. Runs repeat until the Student-t confidence interval of
//! the mean is narrow enough relative to the mean, or a run cap is hit.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct DeviceConfig {
    /// Idle power draw in watts.
    pub idle_power: f64,
    /// Additional power drawn while decoding, in watts; sets the duration
    /// of a decode as `energy / decode_power`.
    pub decode_power: f64,
    /// Relative standard deviation of each supply energy reading.
    pub sigma: f64,
    /// Standard deviation of an additive power error in watts.
    pub floor: f64,
    pub seed: u64,
}

impl Default for DeviceConfig {
    fn default() -> Self {
        DeviceConfig {
            idle_power: 1.0,
            decode_power: 2.0,
            sigma: 0.01,
            floor: 0.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementProtocolConfig {
    pub confidence_level: f64,
    pub max_relative_halfwidth: f64,
    pub min_runs: usize,
    pub max_runs: usize,
}

impl Default for MeasurementProtocolConfig {
    fn default() -> Self {
        MeasurementProtocolConfig {
            confidence_level: 0.95,
            max_relative_halfwidth: 0.02,
            min_runs: 5,
            max_runs: 50,
        }
    }
}

impl MeasurementProtocolConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.confidence_level > 0.0 && self.confidence_level < 1.0) {
            return Err(Error::InvalidConfig(
                "confidence_level must be in (0, 1)".into(),
            ));
        }
        if !(self.max_relative_halfwidth > 0.0) {
            return Err(Error::InvalidConfig(
                "max_relative_halfwidth must be > 0".into(),
            ));
        }
        if self.min_runs < 2 {
            return Err(Error::InvalidConfig("min_runs must be >= 2".into()));
        }
        if self.max_runs < self.min_runs {
            return Err(Error::InvalidConfig("max_runs must be >= min_runs".into()));
        }
        Ok(())
    }

    /// Two-sided Student-t quantile for `runs` samples.
    fn t_quantile(&self, runs: usize) -> f64 {
        let dist = StudentsT::new(0.0, 1.0, (runs - 1) as f64).expect("runs >= 2");
        dist.inverse_cdf(0.5 + self.confidence_level / 2.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Measurement {
    /// Mean decoding energy over the runs, in joules.
    pub energy: f64,
    pub runs: usize,
    pub converged: bool,
    /// Final confidence-interval half-width, in joules.
    pub half_width: f64,
}

/// A device under test with a reproducible noise stream.
#[derive(Debug, Clone)]
pub struct SimulatedDevice {
    config: DeviceConfig,
    rng: ChaCha8Rng,
}

impl SimulatedDevice {
    pub fn new(config: DeviceConfig) -> Result<Self> {
        if !(config.idle_power > 0.0) {
            return Err(Error::InvalidConfig("idle_power must be > 0".into()));
        }
        if !(config.decode_power > 0.0) {
            return Err(Error::InvalidConfig("decode_power must be > 0".into()));
        }
        if !(config.sigma >= 0.0) || !(config.floor >= 0.0) {
            return Err(Error::InvalidConfig("noise parameters must be >= 0".into()));
        }
        let rng = ChaCha8Rng::seed_from_u64(config.seed);
        Ok(SimulatedDevice { config, rng })
    }

    pub fn config(&self) -> &DeviceConfig {
        &self.config
    }

    fn normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.rng)
    }

    /// One decode-plus-idle measurement pair, returned as their difference.
    ///
    /// Noise is applied to the total supply energy of each reading. The
    /// difference is formed from the noise terms directly so that a
    /// noiseless device returns `true_energy` without rounding.
    pub fn single_run(&mut self, true_energy: f64) -> f64 {
        let c = &self.config;
        let duration = true_energy / c.decode_power;
        let idle_energy = c.idle_power * duration;
        let (sigma, floor) = (c.sigma, c.floor * duration);
        let decode_noise =
            (true_energy + idle_energy) * sigma * self.normal() + floor * self.normal();
        let idle_noise = idle_energy * sigma * self.normal() + floor * self.normal();
        true_energy + (decode_noise - idle_noise)
    }

    /// Runs the measurement protocol for one bitstream.
    pub fn measure(
        &mut self,
        true_energy: f64,
        protocol: &MeasurementProtocolConfig,
    ) -> Result<Measurement> {
        protocol.validate()?;
        if !(true_energy > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "true energy must be > 0, got {true_energy}"
            )));
        }
        // Welford running mean and variance.
        let mut mean = 0.0;
        let mut m2 = 0.0;
        let mut runs = 0;
        let mut half_width = f64::INFINITY;
        while runs < protocol.max_runs {
            let x = self.single_run(true_energy);
            runs += 1;
            let delta = x - mean;
            mean += delta / runs as f64;
            m2 += delta * (x - mean);
            if runs >= 2 {
                let sd = (m2 / (runs - 1) as f64).sqrt();
                half_width = protocol.t_quantile(runs) * sd / (runs as f64).sqrt();
            }
            if runs >= protocol.min_runs
                && half_width <= protocol.max_relative_halfwidth * mean.abs()
            {
                return Ok(Measurement {
                    energy: mean,
                    runs,
                    converged: true,
                    half_width,
                });
            }
        }
        Ok(Measurement {
            energy: mean,
            runs,
            converged: false,
            half_width,
        })
    }
}

/// Runs the protocol on a fresh device.
pub fn simulate_measurement(
    device: &DeviceConfig,
    true_energy: f64,
    protocol: &MeasurementProtocolConfig,
) -> Result<Measurement> {
    SimulatedDevice::new(device.clone())?.measure(true_energy, protocol)
}
