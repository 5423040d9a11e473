use clap::Parser;
use swapmech::cli::{ main_with, Cli };

fn main() {
    std::process::exit(main_with(Cli::parse()));
}
