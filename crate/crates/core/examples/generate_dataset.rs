//! Generate a small semi-synthetic dataset and write it to disk.
//!
//! cargo run --example generate_dataset -- /tmp/cnbr-data

use causal_neighbors::datagen::{build_priors, generate_splits, synth_priors, GenParams};

fn main() -> causal_neighbors::error::Result<()> {
    let out = std::env::args().nth(1).unwrap_or_else(|| "cnbr-data".into());
    let (r_hat, o_hat) = synth_priors(200, 120, 7);
    let params = GenParams {
        target_recs_per_user: Some(30.0),
        ..GenParams::default()
    };
    let (priors, resolved) = build_priors(&r_hat, &o_hat, &params)?;
    let lift = priors
        .mu_t
        .as_slice()
        .iter()
        .zip(priors.mu_c.as_slice())
        .filter(|(t, c)| t > c)
        .count() as f64
        / priors.mu_t.as_slice().len() as f64;
    println!("calibrated a = {:.4}, pairs with mu_t > mu_c: {:.1}%", resolved.a, 100.0 * lift);

    let splits = generate_splits(&priors, &resolved, 7)?;
    for ds in std::iter::once(&splits.train).chain(&splits.validation).chain(&splits.test) {
        println!(
            "{:<10} recommendations {:>5}  positives {:>5}  ATE {:+.4}",
            ds.split.as_str(),
            ds.z.nnz(),
            ds.y.nnz(),
            ds.tau.mean()
        );
    }
    splits.save(&out)?;
    priors.save(std::path::Path::new(&out).join("priors"))?;
    println!("written to {out}");
    Ok(())
}
