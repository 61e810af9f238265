fn main() {
    std::process::exit(bsd_synth::cli::run(std::env::args_os()));
}
