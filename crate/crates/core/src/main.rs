fn main() -> std::process::ExitCode {
    mqttprobe::cli::main()
}
