//! Rank items by estimated causal effect with CUBN-O and inspect one user.

use causal_neighbors::causal::{estimate_effects, run_ranker, RankerConfig};
use causal_neighbors::datagen::{build_priors, generate_splits, synth_priors, GenParams};
use causal_neighbors::metrics::evaluate;
use causal_neighbors::similarity::{Orientation, SimilarityConfig, Source};

fn main() -> causal_neighbors::error::Result<()> {
    let (r_hat, o_hat) = synth_priors(300, 150, 1);
    let params = GenParams {
        target_recs_per_user: Some(40.0),
        ..GenParams::default()
    };
    let (priors, params) = build_priors(&r_hat, &o_hat, &params)?;
    let splits = generate_splits(&priors, &params, 1)?;
    let train = &splits.train;

    let cfg = RankerConfig {
        sim: SimilarityConfig {
            k: 100,
            alpha: 2.0,
            source: Source::Outcomes,
            orientation: Orientation::User,
        },
        beta_t: 3.0,
        beta_c: 3.0,
        mix_own: true,
    };
    let rankings = run_ranker(&train.y, &train.z, &cfg)?;
    let est = estimate_effects(&train.y, &train.z, &cfg)?;

    println!("{} top items for user 0:", cfg.name());
    for &i in rankings.lists[0].items.iter().take(5) {
        let i = i as usize;
        println!(
            "  item {i:>3}  tau_hat {:+.3}  (y_t_hat {:.3}, y_c_hat {:.3}, true tau {:+})",
            est.tau_hat.get(0, i),
            est.y_t_hat.get(0, i),
            est.y_c_hat.get(0, i),
            splits.test[0].tau.get(0, i)
        );
    }
    let report = evaluate(&rankings, &splits.test[0], &[10, 100])?;
    println!("test CP@10 {:.4}  CP@100 {:.4}  CDCG {:.3}  CAR {:.3}", report.cp_at[&10], report.cp_at[&100], report.cdcg, report.car);
    Ok(())
}
