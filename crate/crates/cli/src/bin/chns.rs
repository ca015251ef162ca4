fn main() -> std::process::ExitCode {
    chns::main()
}
