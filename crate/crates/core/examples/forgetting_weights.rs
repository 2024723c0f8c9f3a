//! Exponential recency weights over a short history, and the half-life view
//! of the forgetting rate.
//!
//! ```text
//! cargo run --example forgetting_weights
//! ```

use forgetting::kernel::{forgetting_weights, half_life_to_rate, rate_to_half_life};

pub fn run() -> forgetting::Result<()> {
    for lambda in [0.0, std::f64::consts::LN_2, 3.0] {
        let w = forgetting_weights(6, lambda)?;
        let shown: Vec<String> = w.as_slice().iter().map(|x| format!("{x:.4}")).collect();
        // λ = 0 never forgets, so it has no half-life.
        let half_life = rate_to_half_life(lambda).map_or_else(|_| "∞".to_string(), |h| format!("{h:.3}"));
        println!("λ = {lambda:.3}  half-life {half_life:>6}  weights [{}]", shown.join(", "));
    }
    // A half-life of 25 items: an item 25 steps old counts half as much as the newest one.
    let lambda = half_life_to_rate(25.0)?;
    let w = forgetting_weights(100, lambda)?;
    println!("half-life 25 → λ = {lambda:.5}; w(75)/w(100) = {:.3}", w[74] / w[99]);
    Ok(())
}

fn main() {
    if let Err(e) = run() {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}
