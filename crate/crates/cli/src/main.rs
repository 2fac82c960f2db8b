fn main() {
    std::process::exit(counterprobe_cli::run_cli(std::env::args_os()));
}
