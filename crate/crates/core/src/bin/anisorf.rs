fn main() -> std::process::ExitCode {
    anisorf::cli::main()
}
