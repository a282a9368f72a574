// Runs one batch through each shuffle summation mechanism and compares
// the empirical spread with the variance bound.

use csdp::harness::MechanismTest;
use csdp::mechanisms::MechanismKind;
use csdp::privacy::PrivacyParams;

pub fn run_example() -> csdp::Result<()> {
    let budget = PrivacyParams::new(2.0, 0.05)?;
    for (kind, dimension) in [(MechanismKind::BinaryBlanket, 1), (MechanismKind::VectorFixedpoint, 2), (MechanismKind::Oracle, 2)] {
        let mut test = MechanismTest::new(kind, 500, budget, 2000);
        test.dimension = dimension;
        let r = test.run()?;
        println!(
            "{kind:>17} d={dimension}: gamma={:.4} mean={:.2} (true {}) variance {:.1} vs bound {:.1}",
            r.gamma, r.mean, r.true_sum, r.empirical_variance, r.variance_bound
        );
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> csdp::Result<()> {
    run_example()
}
