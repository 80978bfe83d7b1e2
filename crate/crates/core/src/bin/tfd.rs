fn main() {
    std::process::exit(tfd_core::run_cli());
}
