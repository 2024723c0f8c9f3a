//! Recover the forgetting rate of a logged predictor from its predictions,
//! then split its error against the truth into update and misspecification
//! parts.
//!
//! ```text
//! cargo run --example calibrate_subject
//! ```

use forgetting::bench::decompose_error;
use forgetting::calibration::{calibrate_gamma, CalibrationOptions, SubjectTrace};
use forgetting::environments::{generate, EnvConfig};
use forgetting::filters::{run_predictives, DiscountFactor, FilterSpec, Prior};
use forgetting::Predictive;

pub fn run() -> forgetting::Result<()> {
    let trace = generate(&EnvConfig::default_biased_die(), 42)?;
    let prior = Prior::categorical(vec![1.0; 6])?;
    let opts = CalibrationOptions::default();

    // A subject that secretly runs a discounted filter with γ = 0.83.
    let spec = FilterSpec::discounted(prior.clone(), DiscountFactor::new(0.83)?);
    let subject = SubjectTrace::from_predictives(&run_predictives(&spec, &trace.observations)?)?;
    let r = calibrate_gamma(&subject, &trace.observations, &prior, &opts)?;
    println!(
        "replayed γ = 0.83 → γ* = {:.4}  objective {:.2e}  ({} evaluations, final bracket {:?})",
        r.gamma_star.get(),
        r.objective_value,
        r.evaluations,
        r.final_bracket()
    );

    // A subject that overreacts: it mixes the filter with the last observation.
    let noisy: Vec<Predictive> = run_predictives(&spec, &trace.observations)?
        .into_iter()
        .enumerate()
        .map(|(t, p)| {
            let mut v = p.as_categorical().expect("categorical").to_vec();
            if let Some(forgetting::Observation::Category(c)) = t.checked_sub(1).map(|i| trace.observations[i]) {
                v.iter_mut().for_each(|x| *x *= 0.7);
                v[c] += 0.3;
            }
            Predictive::Categorical(v)
        })
        .collect();
    let d = decompose_error(&SubjectTrace::from_predictives(&noisy)?, &trace, &prior, &opts)?;
    println!(
        "overreacting subject: E_total {:.4} = E_update {:.4} (γ* {:.3}) + E_spec {:.4}",
        d.e_total,
        d.e_update,
        d.gamma_star.get(),
        d.e_spec
    );
    Ok(())
}

fn main() {
    if let Err(e) = run() {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}
