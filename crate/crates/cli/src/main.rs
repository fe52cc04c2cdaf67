fn main() {
    std::process::exit(gibbslab_cli::cli_run(std::env::args_os()));
}
