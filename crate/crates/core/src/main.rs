fn main() {
    std::process::exit(pathdrift::cli::main_with(std::env::args_os()));
}
