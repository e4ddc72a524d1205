fn main() {
    std::process::exit(fewshot_ood::cli::cli_main(std::env::args_os()));
}
