fn main() -> std::process::ExitCode {
    cishmap::cli::main()
}
