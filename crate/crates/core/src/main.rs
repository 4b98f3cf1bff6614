fn main() {
    std::process::exit(specibt::cli::main());
}
