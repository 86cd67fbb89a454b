fn main() {
    std::process::exit(barycentric_flow::cli::main());
}
