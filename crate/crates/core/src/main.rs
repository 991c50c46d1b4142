use clap::Parser;

fn main() -> anyhow::Result<()> {
    let cli = odflow::cli::Cli::parse();
    odflow::cli::run(cli)
}
