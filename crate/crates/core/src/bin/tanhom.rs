fn main() {
    std::process::exit(tanhom::cli::run(std::env::args_os()));
}
