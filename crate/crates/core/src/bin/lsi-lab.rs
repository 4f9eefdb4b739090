fn main() {
    std::process::exit(lsi_lab::cli::run(std::env::args_os()));
}
