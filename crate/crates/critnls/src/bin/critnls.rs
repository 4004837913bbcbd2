fn main() {
    std::process::exit(critnls::cli::main_entry());
}
