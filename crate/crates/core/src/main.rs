fn main() -> std::process::ExitCode {
    dtmask::cli::main()
}
