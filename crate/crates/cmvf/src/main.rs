fn main() {
    std::process::exit(cmvf::cli::run(std::env::args_os()));
}
