// Restricted TDMA: duty-cycle caps become bandwidth caps `t̄ w_tot`.
// A user without power is stripped and gets nothing.

use multicode::fdma;
use multicode::{FdmaConstants, UserProfile};

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let constants = FdmaConstants::new(1.0, 0.1)?;
    let profile = UserProfile::with_duty_cycles(vec![4.0, 0.5, 2.0, 0.0], vec![0.2, 0.6, 0.5, 1.0])?;
    let solved = fdma::solve_tdma(&profile, &constants)?;
    for (k, t) in solved.duty_cycles.iter().enumerate() {
        println!("user {k}: t* = {t:.6} (cap {})", profile.limits.value(k));
    }
    println!(
        "sum rate {:.6} bits/s, MAC capacity {:.6} bits/s",
        solved.allocation.sum_rate,
        fdma::mac_sum_capacity(&profile.powers, &constants)
    );
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example()
}
