fn main() {
    std::process::exit(dicke_twist::cli::main_entry());
}
