//! The classical matching estimator on a toy subject panel.

use causal_neighbors::data::SparseBinaryMatrix;
use causal_neighbors::matching::{estimate, match_subjects, SubjectPanel};

fn main() -> causal_neighbors::error::Result<()> {
    // covariates: [young, frequent buyer, mobile]
    let covariates = SparseBinaryMatrix::from_dense(&[
        [1u8, 1, 0],
        [1, 0, 1],
        [0, 1, 1],
        [1, 1, 0],
        [0, 0, 1],
        [1, 0, 0],
    ])?;
    let treated = vec![true, true, false, false, true, false];
    let outcome = vec![true, false, true, false, true, false];
    let panel = SubjectPanel::new(outcome, treated, covariates)?;

    let matches = match_subjects(&panel, 1)?;
    let result = estimate(&panel, 1)?;
    for n in 0..panel.len() {
        println!(
            "subject {n}: z={} y={}  matched treated {:?} control {:?}  tau_hat {:+.2}",
            panel.treatments[n] as u8, panel.outcomes[n] as u8, matches.treated[n], matches.control[n], result.tau_hat[n]
        );
    }
    println!("ATE {:+.4}  ATT {:+.4}", result.ate, result.att);
    Ok(())
}
