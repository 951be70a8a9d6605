fn main() {
    std::process::exit(objimg::cli::dispatch(std::env::args_os()));
}
