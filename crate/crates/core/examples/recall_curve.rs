//! Measure recall accuracy as a function of delay under different context
//! policies and fit exponential and power-law forgetting curves.
//!
//! ```text
//! cargo run --example recall_curve
//! ```

use forgetting::bench::{fit_forgetting_curve, merge_bins, policy_rng, recall_accuracy_by_delay};
use forgetting::environments::{gen_recall_task, RecallConfig};
use forgetting::pmp::ContextPolicy;

pub fn run() -> forgetting::Result<()> {
    let policies = [
        ContextPolicy::Window { k: 20 },
        ContextPolicy::Pmp { lambda: 0.1, k: 20 },
        ContextPolicy::Pmp { lambda: 0.02, k: 20 },
    ];
    for (pi, policy) in policies.iter().enumerate() {
        let runs = (0..10u64)
            .map(|seed| recall_accuracy_by_delay(&gen_recall_task(&RecallConfig::default(), seed)?, policy, &mut policy_rng(seed, pi)))
            .collect::<forgetting::Result<Vec<_>>>()?;
        let bins = merge_bins(&runs);
        let row: Vec<String> = bins.iter().map(|b| format!("{}-{}:{:.2}", b.lo, b.hi, b.accuracy())).collect();
        println!("{policy}\n  {}", row.join("  "));
        let points: Vec<(f64, f64)> = bins.iter().map(|b| (b.mean_delay(), b.accuracy())).collect();
        match fit_forgetting_curve(&points) {
            Ok(f) => println!(
                "  exponential {:?} rmse {:.3} | power {:?} rmse {:.3}",
                f.exponential.model, f.exponential.rmse, f.power.model, f.power.rmse
            ),
            Err(e) => println!("  no fit: {e}"),
        }
    }
    Ok(())
}

fn main() {
    if let Err(e) = run() {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}
