fn main() {
    std::process::exit(hjs::cli::main());
}
