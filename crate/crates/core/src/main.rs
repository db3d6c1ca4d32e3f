fn main() -> std::process::ExitCode {
    stagewise::cli::run()
}
