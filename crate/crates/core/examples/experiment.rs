//! Running a CLI experiment from code: a JSON config, one command, the
//! artifacts kept in memory.

use rwmix::cli::{execute, Command, ExperimentConfig, Resolved};

fn main() -> rwmix::Result<()> {
    let config = ExperimentConfig::from_json(
        r#"{
            "walk": {"dim": 1, "support": [{"beta": [-1], "p": "1/3"}, {"beta": [0], "p": "1/3"}, {"beta": [1], "p": "1/3"}]},
            "observables": [{"kind": "parity"}],
            "mixing": "M5",
            "schedules": {"n_list": [0, 2, 4, 6, 8]},
            "seed": 11
        }"#,
    )?;
    let resolved = Resolved::new(config, false)?;
    let outcome = execute(Command::MixingReport, &resolved)?;
    println!("{}", outcome.summary);
    for a in &outcome.artifacts {
        println!("--- {} ({} bytes)", a.name, a.bytes.len());
    }
    print!("{}", String::from_utf8_lossy(&outcome.artifacts[0].bytes));
    Ok(())
}
