// Drives the shuffler runtime by hand and prints each executed batch.

use std::sync::Arc;

use csdp::mechanisms::{MechanismSpec, Oracle};
use csdp::plan::TreePlan;
use csdp::privacy::PrivacyParams;
use csdp::runtime::ShuffleRuntime;

pub fn run_example() -> csdp::Result<()> {
    let plan = Arc::new(TreePlan::build(12, 2)?);
    let budget = PrivacyParams::new(1.0, 1e-6)?;
    let mut runtime: ShuffleRuntime<Oracle> = ShuffleRuntime::new(plan.clone(), 7).record_transcript();
    for t in 1..=plan.horizon() {
        let value = if t <= plan.n() { (t % 2) as f64 } else { 0.0 };
        let executed = runtime.step(t, &[value], |node| Oracle::new(MechanismSpec::oracle(node.len(), budget, 1, 0.0)?))?;
        for batch in executed {
            println!(
                "t={t:>2}: level {} batch [{}, {}] shuffled {} messages",
                batch.node.level,
                batch.node.start,
                batch.node.end,
                batch.messages.len()
            );
        }
    }
    assert!(runtime.is_finished());
    println!("transcript records: {}", runtime.transcript().map_or(0, |t| t.len()));
    Ok(())
}

#[allow(dead_code)]
fn main() -> csdp::Result<()> {
    run_example()
}
