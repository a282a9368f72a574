// Samples streams from the lower-bound family and measures how far the
// estimator strays on them.

use std::sync::Arc;

use csdp::estimator::MechanismConfig;
use csdp::hard_inputs::{sample_hard_stream, worst_case_probe, HardDistParams};
use csdp::plan::TreePlan;
use csdp::privacy::PrivacyParams;
use csdp::rng::{self, Purpose};

pub fn run_example() -> csdp::Result<()> {
    let params = HardDistParams::new(2048, 1, 1.0)?;
    println!("n=2048 k=1: rep={:.2} block length {}", params.rep, params.block_len());
    let sample = sample_hard_stream(&params, &mut rng::stream(5, Purpose::Hard, 0));
    let head: String = sample.stream.iter().take(64).map(|b| char::from(b'0' + b)).collect();
    println!("first 64 bits: {head}");
    println!("fresh single positions: {}", sample.fresh_positions().len());

    let plan = Arc::new(TreePlan::build(2048, 1)?);
    let total = PrivacyParams::new(1.0, 1e-6)?;
    let probe = worst_case_probe(&plan, MechanismConfig::oracle(), total, &params, 100, 5)?;
    println!("max error over 100 hard streams: median {:.1}, q90 {:.1}", probe.median, probe.q90);
    Ok(())
}

#[allow(dead_code)]
fn main() -> csdp::Result<()> {
    run_example()
}
