// Counts how many batches each user joins and what budget each batch gets.

use csdp::plan::TreePlan;
use csdp::privacy::{audit_participation, Composition, PrivacyParams};

pub fn run_example() -> csdp::Result<()> {
    let total = PrivacyParams::new(1.0, 1e-5)?;
    for plan in [TreePlan::build(1000, 1)?, TreePlan::build(1000, 3)?, TreePlan::binary(1000)?] {
        let report = audit_participation(&plan, total)?;
        let (eps, delta) = report.accounted_budget(Composition::Simple);
        println!(
            "k={}: every user joins at most {} batches at eps={:.4}; composed ({eps:.3}, {delta:.1e})",
            plan.k(),
            report.max_count,
            report.per_mechanism_budget.epsilon()
        );
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> csdp::Result<()> {
    run_example()
}
