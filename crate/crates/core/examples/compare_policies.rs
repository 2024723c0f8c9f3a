//! Run the full benchmark (full context, sliding window and recency sampling
//! on every built-in environment) with a handful of seeds and print the
//! summary and the first CSV rows.
//!
//! ```text
//! cargo run --release --example compare_policies
//! ```

use forgetting::bench::{compare_methods, BenchConfig};

pub fn run() -> forgetting::Result<()> {
    let config = BenchConfig {
        trials: 4,
        ..BenchConfig::default()
    };
    let report = compare_methods(&config, &config.seeds())?;
    for line in report.summary_lines() {
        println!("{line}");
    }
    for row in &report.curve_fits {
        if let Some(f) = &row.fits {
            println!("{} {}: forgetting-curve rmse exponential {:.3}, power {:.3}", row.environment, row.method, f.exponential.rmse, f.power.rmse);
        }
    }
    for line in report.to_csv()?.lines().take(4) {
        println!("{line}");
    }
    Ok(())
}

fn main() {
    if let Err(e) = run() {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}
