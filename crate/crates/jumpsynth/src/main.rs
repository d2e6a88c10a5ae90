fn main() {
    std::process::exit(jumpsynth::cli::main_entry());
}
