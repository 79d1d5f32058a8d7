fn main() {
    std::process::exit(ngen_gc::cli::cli_main(std::env::args()));
}
