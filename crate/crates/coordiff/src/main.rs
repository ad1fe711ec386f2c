fn main() {
    std::process::exit(coordiff::cli::execute(std::env::args_os()));
}
