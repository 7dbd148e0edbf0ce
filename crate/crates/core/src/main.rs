fn main() {
    std::process::exit(seizure_forge::cli::dispatch(std::env::args_os()));
}
