fn main() {
    std::process::exit(agentcycle::cli::run(std::env::args_os()));
}
