fn main() {
    eprintln!("wildflow: command-line interface not wired up yet");
    std::process::exit(2);
}
