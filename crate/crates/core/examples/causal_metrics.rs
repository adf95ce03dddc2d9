//! CP@n, CDCG and CAR on a hand-made example.

use causal_neighbors::data::TernaryMatrix;
use causal_neighbors::metrics::{evaluate_tau, oracle_rankings};
use causal_neighbors::ranking::Rankings;
use causal_neighbors::data::DenseMatrix;

fn main() -> causal_neighbors::error::Result<()> {
    // two users, five items; tau is the true effect of recommending
    let tau = TernaryMatrix::from_dense(&[[1i8, 0, -1, 1, 0], [0, -1, 1, 0, 0]])?;
    let scores = DenseMatrix::from_vec(2, 5, vec![0.9, 0.1, 0.8, 0.3, 0.2, 0.5, 0.9, 0.4, 0.1, 0.0])?;
    let model = Rankings::from_score_matrix(&scores);
    let best = oracle_rankings(&tau);

    for (name, r) in [("model", &model), ("oracle", &best)] {
        let m = evaluate_tau(r, &tau, &[1, 3], true)?;
        println!("{name:<7} CP@1 {:+.3}  CP@3 {:+.3}  CDCG {:+.3}  CAR {:+.3}", m.cp_at[&1], m.cp_at[&3], m.cdcg, m.car);
        for (u, pu) in m.per_user.unwrap().iter().enumerate() {
            println!("        user {u}: CP@1 {:+.3}  CDCG {:+.3}  CAR {:+.3}", pu.cp_at[0], pu.cdcg, pu.car);
        }
    }
    Ok(())
}
