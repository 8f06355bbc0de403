fn main() {
    std::process::exit(chcross::cli_io::main(std::env::args_os()));
}
