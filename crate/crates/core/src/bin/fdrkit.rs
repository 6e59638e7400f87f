fn main() -> std::process::ExitCode {
    fdrkit::cli::main()
}
