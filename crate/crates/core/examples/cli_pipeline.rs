//! The command-line pipeline driven in-process: gen-data, train, forecast
//! with a solved plan, certify, simulate, then a rerun from a manifest.

use std::path::Path;

use ehub::cli::{run, RunManifest};

fn call(args: &[&str]) -> Result<(), String> {
    let argv: Vec<&str> = std::iter::once("ehub").chain(args.iter().copied()).collect();
    println!("$ ehub {}", args.join(" "));
    match run(argv) {
        0 => Ok(()),
        code => Err(format!("exit code {code}")),
    }
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = tempfile::tempdir()?;
    let p = |s: &str| dir.path().join(s).to_string_lossy().into_owned();
    let cfg = Path::new(env!("CARGO_MANIFEST_DIR")).join("configs/quick.toml").to_string_lossy().into_owned();

    call(&["gen-data", "--config", &cfg, "--out", &p("data")])?;
    let data = p("data/data.csv");
    call(&["train", "--config", &cfg, "--data", &data, "--seasons", "winter", "--to", "2021-01-15", "--out", &p("models")])?;
    call(&[
        "forecast", "--config", &cfg, "--data", &data, "--models", &p("models"), "--at", "2021-01-20T08:00:00",
        "--solve-out", "plan.json", "--out", &p("fc"),
    ])?;
    call(&[
        "certify", "--solution", &p("fc/plan.json"), "--scenarios", &p("fc/trajectories.csv"), "--config", &cfg,
        "--out", &p("cert"),
    ])?;
    call(&[
        "simulate", "--config", &cfg, "--data", &data, "--models", &p("models"), "--controllers", "pd,scenario",
        "--M", "1,5", "--start", "2021-01-20", "--end", "2021-01-21", "--out", &p("sim"),
    ])?;
    print!("{}", std::fs::read_to_string(p("sim/combined.csv"))?);

    call(&["--from-manifest", &p("sim/manifest.json"), "--out", &p("sim_again")])?;
    let a = RunManifest::read(Path::new(&p("sim/manifest.json")))?;
    let b = RunManifest::read(Path::new(&p("sim_again/manifest.json")))?;
    println!("rerun reproduced {} output files: {}", a.outputs.len(), a.outputs == b.outputs);
    Ok(())
}
