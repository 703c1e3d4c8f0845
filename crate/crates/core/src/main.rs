fn main() {
    std::process::exit(riskattrib::cli::main());
}
