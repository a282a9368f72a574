// Releases a private running count of a bit stream with each mechanism.

use std::sync::Arc;

use csdp::estimator::{process_stream, MechanismConfig, StreamOptions};
use csdp::plan::TreePlan;
use csdp::privacy::PrivacyParams;
use csdp::rng::{self, Purpose};
use rand::Rng;

pub fn run_example() -> csdp::Result<()> {
    let n = 4096;
    let mut r = rng::stream(1, Purpose::Input, 0);
    let bits: Vec<f64> = (0..n).map(|_| r.random_bool(0.3) as u8 as f64).collect();
    let plan = Arc::new(TreePlan::build(n, 2)?);
    let total = PrivacyParams::new(1.0, 1e-6)?;

    // the blanket needs about 32 ln(2/delta) / eps^2 users per batch, far
    // more than the 6-user leaves here at eps = 1, so it gets a looser budget
    let loose = PrivacyParams::new(20.0, 1e-3)?;
    let configs = [
        ("zero-noise", MechanismConfig::zero_noise(), total),
        ("oracle", MechanismConfig::oracle(), total),
        ("binary-blanket", MechanismConfig::binary_blanket(), loose),
    ];
    for (name, config, total) in configs {
        let run = process_stream(&bits, &plan, config, total, StreamOptions::seeded(2))?;
        println!(
            "{name:>14}: final estimate {:8.1} (true {}), max error {:.1}",
            run.output(n)[0],
            run.truth(n)[0],
            run.report.max_abs_error
        );
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> csdp::Result<()> {
    run_example()
}
