fn main() -> std::process::ExitCode {
    holoworld::harness::cli::main()
}
