fn main() {
    std::process::exit(igmtf::cli::main_with_args(std::env::args_os()));
}
