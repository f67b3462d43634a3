fn main() -> std::process::ExitCode {
    drmlab::cli::main()
}
