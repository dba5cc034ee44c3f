fn main() {
    std::process::exit(herdpipe::cli::main());
}
