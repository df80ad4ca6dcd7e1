fn main() -> std::process::ExitCode {
    superhedge::cli::main_entry()
}
