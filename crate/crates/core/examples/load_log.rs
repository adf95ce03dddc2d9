//! Rank from an interaction log (`user,item,y,z`) instead of generated data.
//!
//! cargo run --example load_log -- log.csv rankings.csv

use causal_neighbors::causal::{run_ranker, RankerConfig};
use causal_neighbors::data::{load_log, to_matrices, LogFormat};
use causal_neighbors::similarity::{Orientation, SimilarityConfig, Source};

fn main() -> causal_neighbors::error::Result<()> {
    let mut args = std::env::args().skip(1);
    let input = match args.next() {
        Some(p) => std::path::PathBuf::from(p),
        None => {
            let p = std::env::temp_dir().join("cnbr-example-log.csv");
            let rows = "user,item,y,z\nana,film1,1,1\nana,film2,0,0\nbo,film1,1,0\nbo,film3,1,1\ncy,film2,1,1\ncy,film3,0,0\n";
            std::fs::write(&p, rows).map_err(|e| causal_neighbors::error::Error::io(&p, e))?;
            p
        }
    };
    let out = args.next().unwrap_or_else(|| "rankings.csv".into());

    let log = load_log(&input, LogFormat::from_path(&input))?;
    let (y, z) = to_matrices(&log);
    println!("{} users, {} items, {} logged pairs", log.users.len(), log.items.len(), log.records.len());
    let cfg = RankerConfig {
        sim: SimilarityConfig { k: y.n_rows() - 1, alpha: 1.0, source: Source::Outcomes, orientation: Orientation::User },
        beta_t: 0.3,
        beta_c: 0.3,
        mix_own: true,
    };
    let rankings = run_ranker(&y, &z, &cfg)?;
    rankings.write_csv(&out, "tau_hat", Some(&log.users), Some(&log.items))?;
    println!("wrote {out}");
    Ok(())
}
