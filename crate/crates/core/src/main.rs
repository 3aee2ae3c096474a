fn main() {
    std::process::exit(marcinkiewicz::harness::run(std::env::args_os()));
}
