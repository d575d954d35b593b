use clap::Parser;

fn main() {
    let cli = zcl::cli::Cli::parse();
    match zcl::cli::run(&cli) {
        Ok(report) => println!("{report}"),
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(1);
        }
    }
}
