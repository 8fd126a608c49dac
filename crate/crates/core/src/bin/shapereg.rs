fn main() {
    std::process::exit(shapereg::cli::run(std::env::args_os()));
}
