fn main() {
    std::process::exit(classlogic::cli::main());
}
