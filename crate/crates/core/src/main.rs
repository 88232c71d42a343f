fn main() {
    std::process::exit(steersim::experiment::cli::cli_main(std::env::args_os()));
}
