fn main() {
    std::process::exit(abc_cli::dispatch(std::env::args_os()));
}
