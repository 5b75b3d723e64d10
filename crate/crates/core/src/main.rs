fn main() {
    std::process::exit(cnmpc::cli::main_with_args(std::env::args_os()));
}
