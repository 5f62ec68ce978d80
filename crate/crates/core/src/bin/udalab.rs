fn main() {
    std::process::exit(udalab_core::cli::main_with_args(std::env::args_os()));
}
