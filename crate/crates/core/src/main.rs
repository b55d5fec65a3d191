fn main() {
    std::process::exit(ane_core::cli::cli_main(std::env::args_os()));
}
