// Monte-Carlo comparison of restricted and unrestricted efficiency under
// Rayleigh fading for a few code limits.

use multicode::analysis::{rayleigh_fading_study, FadingStudyConfig};

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let base = FadingStudyConfig {
        users: 100,
        processing_gain: 128,
        code_limit: 1,
        mean_ebn0_db: 10.0,
        trials: 200,
        seed: 7,
    };
    for n_bar in [1, 2, 4] {
        let s = rayleigh_fading_study(&FadingStudyConfig {
            code_limit: n_bar,
            ..base.clone()
        })?;
        let capped = s.trials.iter().filter(|t| t.oversized > 0).count();
        println!(
            "n_bar {n_bar}: restricted {:.4}, unrestricted {:.4} bits/s/Hz, {capped}/{} trials with oversized users",
            s.mean_restricted,
            s.mean_unrestricted,
            s.trials.len()
        );
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example()
}
