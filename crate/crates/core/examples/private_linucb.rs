// Private LinUCB on a random instance, with and without noise.

use csdp::bandit::{run_bandit, BanditConfig, BanditInstance};
use csdp::estimator::MechanismConfig;
use csdp::privacy::PrivacyParams;

pub fn run_example() -> csdp::Result<()> {
    let instance = BanditInstance::random(3, 10, 0.1, 4)?;
    let budget = PrivacyParams::new(1.0, 1e-6)?;
    for (name, mechanism) in [("zero-noise", MechanismConfig::zero_noise()), ("oracle", MechanismConfig::oracle())] {
        let config = BanditConfig::new(2048, 2, budget, mechanism);
        let trace = run_bandit(&instance, &config, 4)?;
        println!(
            "{name:>10}: regret {:.1} over {} rounds (lambda {:.1}, sigma' {:.2})",
            trace.final_regret,
            trace.steps.len(),
            trace.calibration.lambda,
            trace.calibration.sigma_prime
        );
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> csdp::Result<()> {
    run_example()
}
