fn main() {
    std::process::exit(efsm_infer::cli::run(std::env::args_os()));
}
