//! Cost curves of a weak edge against a scene that also holds a strong edge
//! of the same orientation.
//!
//! Run with `cargo run --example edge_cost_curves`.

use gradfield::eval::{local_minima, run_toy_edge_experiment, ToyEdgeConfig};

fn main() -> gradfield::Result<()> {
    for noise_sigma in [0.0, 0.02] {
        let cfg = ToyEdgeConfig {
            noise_sigma,
            seed: 1,
            ..ToyEdgeConfig::default()
        };
        let r = run_toy_edge_experiment(&cfg)?;
        println!(
            "noise {noise_sigma}: true shift {}, strong edge at {}",
            r.true_shift, r.strong_shift
        );
        for (kind, curve) in &r.curves {
            let minima = local_minima(curve);
            println!(
                "  {:>5}: global minimum at {:?}, {} local minima",
                kind.name(),
                r.argmin(*kind),
                minima.len()
            );
        }
    }
    let csv = run_toy_edge_experiment(&ToyEdgeConfig::default())?.to_csv();
    let out = std::env::temp_dir().join("gradfield_edges.csv");
    std::fs::write(&out, csv).expect("writable temp dir");
    println!("clean curves written to {}", out.display());
    Ok(())
}
