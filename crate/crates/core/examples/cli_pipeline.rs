//! Drives the five command-line stages on a small fingerprint-only config
//! written to a temporary directory.
//!
//! `cargo run --release --example cli_pipeline`

use modelgif::cli::main_with_args;

fn main() {
    let dir = std::env::temp_dir().join("modelgif-cli-example");
    std::fs::create_dir_all(&dir).expect("temp dir");
    let config = dir.join("run.conf");
    std::fs::write(
        &config,
        "experiment = fingerprint-only\noutput = out\nzoo.independents = 3\ndata.side = 8\n\
         data.train = 200\ntrain.epochs = 5\nrefs = 16\nsteps = 16\n",
    )
    .expect("write config");
    let config = config.to_string_lossy().into_owned();
    for stage in ["zoo", "sample-refs", "fingerprint", "distances", "report"] {
        let code = main_with_args([
            "modelgif",
            stage,
            "--config",
            config.as_str(),
            "--jobs",
            "1",
        ]);
        println!("{stage:<12} exit {code}");
    }
    let tree = std::fs::read_to_string(dir.join("out/report/tree.nwk")).expect("tree");
    print!("{tree}");
    let mismatch = main_with_args([
        "modelgif",
        "report",
        "--config",
        config.as_str(),
        "--steps",
        "8",
    ]);
    println!("report with a different --steps: exit {mismatch}");
}
