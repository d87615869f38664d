fn main() -> std::process::ExitCode {
    wet_core::cli::main()
}
