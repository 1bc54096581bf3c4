fn main() {
    std::process::exit(pareto_choice_cli::main_with_args(std::env::args_os()));
}
