// Five users with equal bandwidth caps: classification, the closed form,
// the iterative algorithm, its KKT certificate and the numerical oracle.

use multicode::fdma;
use multicode::{FdmaConstants, UserProfile};

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let profile = UserProfile::with_bandwidths(vec![30., 15., 10., 7., 3.], vec![0.125; 5])?;
    let constants = FdmaConstants::new(0.5, 1.0)?;

    let classes = fdma::classify(&profile, &constants)?;
    let labels: Vec<&str> = classes.labels.iter().map(|l| l.short()).collect();
    println!("classes {labels:?}, K1={}, K2={}", classes.k1, classes.k2);

    let (result, trace) = fdma::allocate_iterative_traced(&profile, &constants)?;
    for (i, pass) in trace.iter().enumerate() {
        println!("pass {}: due shares {:.4?}", i + 1, pass.due_shares);
    }
    let closed = fdma::allocate_closed_form(&profile, &constants)?;
    assert_eq!(result.classification, closed.classification);
    println!("w* = {:?}", closed.bandwidths);
    println!("common PSD {}", closed.common_psd);

    let cert = fdma::verify_kkt(&profile, &constants, &closed.bandwidths)?;
    println!("KKT valid: {} (max residual {:.1e})", cert.is_valid(), cert.residuals.max());

    let oracle = fdma::oracle_solve(&profile, &constants, 1e-10)?;
    let oracle_rate = fdma::fdma_sum_rate(&profile, &constants, &oracle)?;
    let mac = fdma::mac_sum_capacity(&profile.powers, &constants);
    println!(
        "sum rate {:.9} (oracle {:.9}), MAC capacity {:.9}",
        closed.sum_rate, oracle_rate, mac
    );
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example()
}
