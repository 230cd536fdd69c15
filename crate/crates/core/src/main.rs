fn main() {
    std::process::exit(kspace_refine::cli::main());
}
