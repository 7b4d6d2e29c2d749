fn main() {
    std::process::exit(measure_pgm::cli::main_with_args(std::env::args_os()));
}
