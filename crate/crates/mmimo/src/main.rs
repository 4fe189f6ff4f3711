fn main() {
    std::process::exit(mmimo::cli::main_with(std::env::args_os()));
}
