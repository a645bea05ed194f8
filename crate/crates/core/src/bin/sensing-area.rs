fn main() {
    std::process::exit(sensing_area::cli::run(std::env::args_os()));
}
