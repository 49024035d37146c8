fn main() {
    std::process::exit(gpmle::cli::run(std::env::args_os()));
}
