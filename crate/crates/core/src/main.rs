fn main() {
    std::process::exit(sparse_ortho::cli::run(std::env::args_os()));
}
