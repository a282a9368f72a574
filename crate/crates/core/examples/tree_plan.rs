// Builds batch trees for a few shuffler counts and prints the estimate
// cover at selected times.

use csdp::plan::TreePlan;

pub fn run_example() -> csdp::Result<()> {
    for k in [1, 2, 3] {
        let plan = TreePlan::build(1000, k)?;
        println!(
            "n=1000 k={k}: d_low={} d={} nodes={} largest cover={}",
            plan.d_low(),
            plan.d(),
            plan.nodes().len(),
            plan.max_vstar_len()
        );
    }

    let plan = TreePlan::binary(8)?;
    for t in [3, 6, 7, 8] {
        let cover: Vec<String> = plan
            .vstar(t)
            .nodes
            .iter()
            .map(|&id| {
                let v = plan.node(id);
                format!("[{}, {}]", v.start, v.end)
            })
            .collect();
        println!("binary n=8, t={t}: {}", cover.join(" + "));
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> csdp::Result<()> {
    run_example()
}
