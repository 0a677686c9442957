fn main() {
    std::process::exit(reid_rank::cli::run(std::env::args_os()));
}
