//! Kept in its own test binary because it mutates the process environment.

use clap::Parser;
use stableval::cli::{Cli, Command, ConfigFile, EvalParams, SEED_ENV};

#[test]
fn seed_falls_back_to_the_environment() {
    // SAFETY: this binary has a single test, so nothing else reads the
    // environment concurrently.
    unsafe { std::env::set_var(SEED_ENV, "77") };
    let resolve = |argv: &[&str], file: &str| {
        let cli = Cli::parse_from(argv);
        let Command::Eval(args) = &cli.command else {
            unreachable!()
        };
        let file: ConfigFile = toml::from_str(file).unwrap();
        EvalParams::resolve(args, file.eval, cli.seed).map(|(p, _)| p.seed)
    };
    let base = ["stableval", "eval", "x.csv", "--out", "o"];
    assert_eq!(resolve(&base, "").unwrap(), 77);
    assert_eq!(resolve(&base, "[eval]\nseed = 5\n").unwrap(), 5);
    assert_eq!(
        resolve(
            &["stableval", "eval", "x.csv", "--out", "o", "--seed", "3"],
            "[eval]\nseed = 5\n"
        )
        .unwrap(),
        3
    );
    unsafe { std::env::set_var(SEED_ENV, "not-a-number") };
    assert!(resolve(&base, "").is_err());
    unsafe { std::env::remove_var(SEED_ENV) };
    assert_eq!(resolve(&base, "").unwrap(), 0);
}
