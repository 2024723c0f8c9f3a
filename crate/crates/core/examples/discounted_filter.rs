//! Stream a drifting coin through filters with different discount factors and
//! watch how quickly each one notices the switch.
//!
//! ```text
//! cargo run --example discounted_filter
//! ```

use forgetting::bench::run_filter_on_trace;
use forgetting::environments::{generate, EnvConfig};
use forgetting::filters::{DiscountFactor, Filter, FilterSpec, Prior};

pub fn run() -> forgetting::Result<()> {
    let trace = generate(&EnvConfig::two_segment_drift(), 1)?;
    let prior = Prior::categorical(vec![1.0, 1.0])?;

    println!("{:>6} {:>10} {:>10} {:>10}", "step", "γ=1", "γ=0.95", "γ=0.8");
    let mut filters = [1.0, 0.95, 0.8]
        .iter()
        .map(|g| Filter::new(FilterSpec::discounted(prior.clone(), DiscountFactor::new(*g)?)))
        .collect::<forgetting::Result<Vec<_>>>()?;
    for (t, obs) in trace.observations.iter().enumerate() {
        let p: Vec<f64> = filters
            .iter_mut()
            .map(|f| f.step(*obs).map(|pred| pred.as_categorical().expect("categorical")[1]))
            .collect::<forgetting::Result<_>>()?;
        if [1, 250, 500, 510, 525, 550, 600, 1000].contains(&(t + 1)) {
            println!("{:>6} {:>10.3} {:>10.3} {:>10.3}", t + 1, p[0], p[1], p[2]);
        }
    }

    let window = run_filter_on_trace(&FilterSpec::window(prior.clone(), 50)?, &trace)?;
    println!("P(face 1) before each step; the truth flips from 0.1 to 0.9 at step 501");
    for g in [1.0, 0.95, 0.8] {
        let s = run_filter_on_trace(&FilterSpec::discounted(prior.clone(), DiscountFactor::new(g)?), &trace)?;
        println!("mean KL(truth ‖ prediction) at γ = {g:<4}: {:.4}", s.mean);
    }
    println!("mean KL(truth ‖ prediction) window 50 : {:.4}", window.mean);
    Ok(())
}

fn main() {
    if let Err(e) = run() {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}
