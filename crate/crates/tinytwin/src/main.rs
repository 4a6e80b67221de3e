fn main() {
    std::process::exit(tinytwin::cli::run());
}
