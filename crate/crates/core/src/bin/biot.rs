fn main() {
    std::process::exit(biot_hdiv::cli::main_with_args(std::env::args_os()));
}
