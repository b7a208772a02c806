fn main() {
    std::process::exit(hep2_gss::cli::main());
}
