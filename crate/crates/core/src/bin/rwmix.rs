fn main() {
    std::process::exit(rwmix::cli::run(std::env::args_os()));
}
