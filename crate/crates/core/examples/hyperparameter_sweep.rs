//! Grid search with per-metric validation selection, then result tables.
//!
//! cargo run --release --example hyperparameter_sweep -- /tmp/cnbr-tables

use causal_neighbors::datagen::GenParams;
use causal_neighbors::harness::{emit_tables, run_experiment, GeneratorSpec, Grids, SweepSpec};

fn main() -> causal_neighbors::error::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let out = std::env::args().nth(1).unwrap_or_else(|| "cnbr-tables".into());
    let spec = SweepSpec {
        methods: ["CUBN-O", "CUBN-T", "CIBN-O", "UBN", "IBN", "Random", "Pop"]
            .iter()
            .map(|m| m.parse())
            .collect::<Result<_, _>>()?,
        grids: Grids {
            k: vec![10, 30, 100],
            ..Grids::default()
        },
        metrics: ["CP@10", "CP@100", "CDCG", "CAR"].iter().map(|m| m.parse()).collect::<Result<_, _>>()?,
        generator: Some(GeneratorSpec {
            n_users: 300,
            n_items: 200,
            r_hat: None,
            o_hat: None,
            params: GenParams { target_recs_per_user: Some(40.0), ..GenParams::default() },
        }),
        seed: 11,
        ..SweepSpec::default()
    };
    let records = run_experiment(&spec)?;
    for file in emit_tables(&records, &out)? {
        if file.extension().is_some_and(|e| e == "txt") {
            println!("{}", std::fs::read_to_string(&file).map_err(|e| causal_neighbors::error::Error::io(&file, e))?);
        }
    }
    Ok(())
}
