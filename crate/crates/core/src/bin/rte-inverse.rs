fn main() {
    std::process::exit(rte_inverse::cli::run(std::env::args_os()));
}
