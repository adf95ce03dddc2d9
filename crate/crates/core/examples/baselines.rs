//! Compare the non-causal baselines with CIBN-T on the same data.

use causal_neighbors::baselines::{rank_pop, rank_random, rank_ubn_ibn};
use causal_neighbors::causal::{run_ranker, RankerConfig};
use causal_neighbors::datagen::{build_priors, generate_splits, synth_priors, GenParams};
use causal_neighbors::metrics::evaluate;
use causal_neighbors::ranking::Rankings;
use causal_neighbors::similarity::{Orientation, SimilarityConfig, Source};

fn main() -> causal_neighbors::error::Result<()> {
    let (r_hat, o_hat) = synth_priors(300, 150, 2);
    let (priors, params) = build_priors(&r_hat, &o_hat, &GenParams { target_recs_per_user: Some(40.0), ..GenParams::default() })?;
    let splits = generate_splits(&priors, &params, 2)?;
    let (y, z) = (&splits.train.y, &splits.train.z);

    let sim = |orientation| SimilarityConfig { k: 30, alpha: 1.0, source: Source::Outcomes, orientation };
    let cibn_t = RankerConfig {
        sim: SimilarityConfig { source: Source::Treatments, ..sim(Orientation::Item) },
        beta_t: 1.0,
        beta_c: 1.0,
        mix_own: true,
    };
    let methods: Vec<(&str, Rankings)> = vec![
        ("Random", rank_random(y.n_rows(), y.n_cols(), 2)),
        ("Pop", rank_pop(y)),
        ("UBN", rank_ubn_ibn(y, &sim(Orientation::User))?),
        ("IBN", rank_ubn_ibn(y, &sim(Orientation::Item))?),
        ("CIBN-T", run_ranker(y, z, &cibn_t)?),
    ];
    println!("{:<8} {:>8} {:>8}", "method", "CP@10", "CDCG");
    for (name, r) in &methods {
        let m = evaluate(r, &splits.test[0], &[10])?;
        println!("{name:<8} {:>8.4} {:>8.3}", m.cp_at[&10], m.cdcg);
    }
    Ok(())
}
