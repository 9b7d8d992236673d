fn main() -> std::process::ExitCode {
    dgsan::cli::main()
}
