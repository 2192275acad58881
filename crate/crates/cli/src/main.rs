fn main() {
    std::process::exit(offload_cli::dispatch(std::env::args_os()));
}
