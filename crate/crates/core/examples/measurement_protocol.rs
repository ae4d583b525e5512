//! Runs the repeated-measurement protocol on simulated devices with growing
//! noise and reports run counts and interval coverage.
//!
//! cargo run --release --example measurement_protocol

use decenergy::measurement::{simulate_measurement, DeviceConfig, MeasurementProtocolConfig};

fn main() -> decenergy::Result<()> {
    let protocol = MeasurementProtocolConfig::default();
    let truth = 2.5;
    println!("sigma  mean_runs  contract  coverage");
    for sigma in [0.0, 0.005, 0.01, 0.02, 0.04] {
        let trials = 500u64;
        let (mut runs, mut contract, mut covered) = (0, 0, 0);
        for seed in 0..trials {
            let device = DeviceConfig {
                sigma,
                seed,
                ..DeviceConfig::default()
            };
            let m = simulate_measurement(&device, truth, &protocol)?;
            runs += m.runs;
            if m.converged && m.half_width <= protocol.max_relative_halfwidth * m.energy {
                contract += 1;
            }
            if (m.energy - truth).abs() <= m.half_width {
                covered += 1;
            }
        }
        println!(
            "{sigma:<6} {:>9.1} {:>8.1}% {:>8.1}%",
            runs as f64 / trials as f64,
            100.0 * contract as f64 / trials as f64,
            100.0 * covered as f64 / trials as f64
        );
    }
    Ok(())
}
