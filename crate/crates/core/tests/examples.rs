macro_rules! example {
    ($name:ident, $file:literal) => {
        mod $name {
            include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/", $file));
        }
    };
}

example!(tree_plan, "tree_plan.rs");
example!(shuffle_runtime, "shuffle_runtime.rs");
example!(private_prefix_sums, "private_prefix_sums.rs");
example!(mechanisms, "mechanisms.rs");
example!(error_scaling, "error_scaling.rs");
example!(private_linucb, "private_linucb.rs");
example!(hard_inputs, "hard_inputs.rs");
example!(participation_audit, "participation_audit.rs");

#[test]
fn examples_run() {
    tree_plan::run_example().unwrap();
    shuffle_runtime::run_example().unwrap();
    private_prefix_sums::run_example().unwrap();
    mechanisms::run_example().unwrap();
    error_scaling::run_example().unwrap();
    private_linucb::run_example().unwrap();
    hard_inputs::run_example().unwrap();
    participation_audit::run_example().unwrap();
}
