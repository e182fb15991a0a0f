fn main() {
    std::process::exit(thzmm::main_with(std::env::args_os()));
}
