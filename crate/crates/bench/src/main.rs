fn main() {
    std::process::exit(ciag_bench::cli::run(std::env::args_os()));
}
