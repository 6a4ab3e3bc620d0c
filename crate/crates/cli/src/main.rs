fn main() {
    std::process::exit(snse_cli::cli_main(std::env::args_os()));
}
