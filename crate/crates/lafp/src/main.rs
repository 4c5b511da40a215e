fn main() {
    std::process::exit(lafp::cli::run(&std::env::args().collect::<Vec<_>>()));
}
