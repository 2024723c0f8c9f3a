//! Shape a long conversation history into a short context by recency-weighted
//! sampling without replacement, and compare with plain truncation.
//!
//! ```text
//! cargo run --example pmp_context
//! ```

use forgetting::pmp::{first_pick_marginal, pmp_sample, truncate_window, ContextHistory};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn run() -> forgetting::Result<()> {
    let history = ContextHistory::from_texts((1..=40).map(|i| format!("turn {i}")));
    let mut rng = ChaCha8Rng::seed_from_u64(7);

    println!("window(8):      {:?}", truncate_window(&history, 8)?.indices());
    for lambda in [0.02, 0.1, 0.5] {
        for _ in 0..2 {
            println!("pmp(λ={lambda:<4}, 8): {:?}", pmp_sample(&history, lambda, 8, &mut rng)?.indices());
        }
    }

    let freq = first_pick_marginal(&ContextHistory::from_texts(["a", "b", "c"]), std::f64::consts::LN_2, &mut rng, 100_000)?;
    println!("single-pick frequencies at λ = ln 2: {freq:.3?} (weights 1/7, 2/7, 4/7)");
    Ok(())
}

fn main() {
    if let Err(e) = run() {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}
