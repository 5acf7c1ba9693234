fn main() {
    std::process::exit(resched::cli::main());
}
