//! Runs the sample pipeline configuration in a temporary directory and
//! prints the report and manifest it produced.
//!
//! cargo run --release --example pipeline_run

use std::fs;

use decenergy::pipeline::run_pipeline;

fn main() -> decenergy::Result<()> {
    let dir = tempfile::tempdir().expect("temporary directory");
    let config = include_str!("pipeline.toml").replace("target/pipeline-example", "out");
    fs::create_dir_all(dir.path().join("examples")).expect("examples directory");
    fs::write(dir.path().join("pipeline.toml"), config).expect("config");
    fs::write(
        dir.path().join("examples/pipeline_groups.txt"),
        include_str!("pipeline_groups.txt"),
    )
    .expect("groups");

    let summary = run_pipeline("pipeline.toml".as_ref(), dir.path())?;
    println!(
        "{} artifacts in {}",
        summary.artifacts.len(),
        summary.output.display()
    );
    for name in ["report.txt", "search.txt", "manifest.txt"] {
        let text = fs::read_to_string(summary.output.join(name)).expect("artifact");
        println!("\n== {name}\n{text}");
    }
    Ok(())
}
