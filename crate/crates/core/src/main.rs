fn main() {
    std::process::exit(uav_isac::cli::main_with_args(std::env::args_os()));
}
