fn main() {
    std::process::exit(ncs::app::run(std::env::args_os()));
}
