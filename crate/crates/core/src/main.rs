fn main() {
    std::process::exit(elastic_switch::cli::run(std::env::args_os()));
}
