//! Generate the synthetic environments, write one to newline-delimited JSON
//! and read it back.
//!
//! ```text
//! cargo run --example drift_environments
//! ```

use forgetting::environments::{gen_recall_task, generate, EnvConfig, RecallConfig, RecallEvent};
use forgetting::formats::{read_trace, write_trace};
use forgetting::numeric::mean;
use forgetting::Observation;

pub fn run() -> forgetting::Result<()> {
    let die = generate(&EnvConfig::default_biased_die(), 3)?;
    for (seg, chunk) in die.observations.chunks(500).enumerate() {
        let mut counts = [0usize; 6];
        for o in chunk {
            if let Observation::Category(c) = o {
                counts[*c] += 1;
            }
        }
        println!("biased die, segment {}: face counts {counts:?}", seg + 1);
    }

    let walk = generate(&EnvConfig::default_shifting_gaussian(), 3)?;
    let means: Vec<f64> = walk.truths.iter().filter_map(|p| p.as_gaussian()).map(|n| n.mean).collect();
    println!(
        "shifting gaussian: mean drifts from {:.3} to {:.3} over {} steps",
        means[0],
        means[means.len() - 1],
        walk.len()
    );

    let events = gen_recall_task(&RecallConfig::default(), 3)?;
    let delays: Vec<f64> = events
        .iter()
        .filter_map(|e| match e {
            RecallEvent::Probe { delay, .. } => Some(*delay as f64),
            RecallEvent::Present { .. } => None,
        })
        .collect();
    println!("recall task: {} probes, mean delay {:.1}", delays.len(), mean(&delays));

    let mut buf = Vec::new();
    write_trace(&die, &mut buf)?;
    let back = read_trace(buf.as_slice())?;
    println!("trace file: {} bytes, round trip exact: {}", buf.len(), back == die);
    Ok(())
}

fn main() {
    if let Err(e) = run() {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}
