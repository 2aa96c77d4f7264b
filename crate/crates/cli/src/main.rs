fn main() {
    std::process::exit(brtwarn::run(std::env::args_os()));
}
