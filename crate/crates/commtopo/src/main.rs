use clap::Parser;

fn main() {
    let cli = commtopo::cli::Cli::parse();
    std::process::exit(commtopo::cli::run(cli));
}
