// Efficiency of symmetric systems against load, and the sum rate of
// equal-power users against the code limit.

use multicode::analysis::{self, db_to_linear};

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    for db in [-1.0, 0.0, 3.0, 10.0] {
        let c = analysis::single_user_efficiency(db_to_linear(db))?;
        println!("Eb/N0 {db:>5.1} dB: single-user efficiency {c:.6} bits/chip");
    }
    let curve = analysis::efficiency_curve(&[0.25, 0.5, 1.0, 2.0], 10.0)?;
    for p in &curve {
        println!("load {:.2}: {:.6}", p.load, p.efficiency);
    }

    let loading = analysis::loading_curve(&[40, 80, 160], 128, 10.0, &[1, 2, 4, 8])?;
    loading.write_csv(std::io::stdout())?;
    for k in [40, 80, 160] {
        analysis::symmetric_sum_rate_check(k, 128, 1, 10.0 * f64::from(k), 1.0)?;
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example()
}
