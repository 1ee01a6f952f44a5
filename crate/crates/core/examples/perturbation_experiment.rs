//! Disparity estimation of an image against a vignetted, brighter copy of
//! itself. The true disparity is zero everywhere.
//!
//! Run with `cargo run --release --example perturbation_experiment`.

use gradfield::eval::{
    perturbation_stereo_config, robustness_perturbation, run_perturbation_experiment, stats_csv,
    PERTURBATION_KINDS,
};
use gradfield::synth::textured_scene;

fn main() -> gradfield::Result<()> {
    let spec = robustness_perturbation();
    for seed in 0..2 {
        let img = textured_scene(160, 120, seed);
        let rows = run_perturbation_experiment(
            &img,
            &spec,
            &PERTURBATION_KINDS,
            &perturbation_stereo_config(),
        )?;
        println!("scene seed {seed}");
        print!("{}", stats_csv(rows.iter().map(|(k, s)| (k.name(), s))));
    }
    Ok(())
}
