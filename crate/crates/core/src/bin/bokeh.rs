fn main() {
    std::process::exit(layered_bokeh::cli::run(std::env::args_os()));
}
