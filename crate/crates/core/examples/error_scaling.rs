// A small error sweep over n and k, followed by a log-log fit of the
// mean max error against n.

use csdp::harness::{collect_sum_sweep, fit_scaling, FitStatistic, SweepConfig};

pub fn run_example() -> csdp::Result<()> {
    let config = SweepConfig::from_toml(
        r#"
experiment = "sum-sweep"
n = [256, 512, 1024, 2048, 4096]
k = [1, 2]
epsilon = [1.0]
families = ["uniform"]
trials = 20
seed = 3
output = "unused.csv"
"#,
    )?;
    let (rows, failures) = collect_sum_sweep(&config)?;
    assert!(failures.is_empty());
    for fit in fit_scaling(&rows[0], FitStatistic::Mean)? {
        println!("k={}: max error grows like n^{:.3} (+/- {:.3})", fit.k, fit.slope, fit.std_error);
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> csdp::Result<()> {
    run_example()
}
