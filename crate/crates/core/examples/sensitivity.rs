//! Sensitivity to neighbor count and to propensity unevenness.

use causal_neighbors::datagen::GenParams;
use causal_neighbors::harness::{sensitivity_sweep, GeneratorSpec, Grids, Sensitivity, SweepSpec};

fn main() -> causal_neighbors::error::Result<()> {
    let spec = SweepSpec {
        methods: vec!["CUBN-O".parse()?, "CUBN-T".parse()?],
        grids: Grids { k: vec![10, 30, 100, 300], alpha: vec![0.5, 1.0, 2.0], beta: vec![0.0, 1.0, 10.0] },
        metrics: vec!["CP@10".parse()?],
        generator: Some(GeneratorSpec {
            n_users: 400,
            n_items: 200,
            r_hat: None,
            o_hat: None,
            params: GenParams { target_recs_per_user: Some(40.0), ..GenParams::default() },
        }),
        seed: 5,
        ..SweepSpec::default()
    };
    for kind in [Sensitivity::Neighbors, Sensitivity::Unevenness { b: vec![0.5, 1.0, 2.0] }] {
        println!("{}:", kind.name());
        for row in sensitivity_sweep(&kind, &spec)? {
            let c = &row.cells[0];
            println!("  {:<8} {:<7} val {:.4}  test {:.4}  [{}]", row.point, row.method, c.validation, c.test, c.config);
        }
    }
    Ok(())
}
