fn main() -> std::process::ExitCode {
    gradfield::cli::main()
}
