fn main() {
    std::process::exit(csdp::harness::cli::main());
}
