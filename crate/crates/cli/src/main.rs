use clap::Parser;

fn main() {
    let cli = sdgame_cli::Cli::parse();
    std::process::exit(sdgame_cli::run(cli));
}
