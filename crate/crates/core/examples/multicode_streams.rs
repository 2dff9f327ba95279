// Multi-code CDMA: per-code splits under both strategies, the extreme
// stream counts, and the smallest code limits that reach the MAC capacity.

use multicode::cdma::{self, stream_count_extremes};
use multicode::{solve_cdma, CdmaInstance, SplitStrategy};

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let inst = CdmaInstance::new(vec![30., 15., 10., 7., 3.], vec![2; 5], 8, 1.0)?;
    for strategy in [SplitStrategy::EqualPower, SplitStrategy::MinCountMaxOrthogonal] {
        let sol = solve_cdma(&inst, strategy)?;
        println!("{strategy:?}");
        for k in 0..inst.num_users() {
            println!(
                "  user {k}: w = {:.4}, streams {:.4?}, powers {:.3?}",
                sol.bandwidths[k], sol.streams.bandwidths[k], sol.streams.powers[k]
            );
        }
        println!("  active {:?}, orthogonal {:?}", sol.streams.active, sol.streams.orthogonal);
        println!("  sum rate {:.9} bits/chip", sol.sum_rate);
    }

    let counts = stream_count_extremes(&inst)?;
    println!("max orthogonal {:?}, min active {:?}", counts.max_orthogonal, counts.min_active);
    println!(
        "achieves MAC: {}, capacity {:.9}",
        cdma::achieves_mac_capacity(&inst)?,
        cdma::mac_capacity(&inst)
    );

    let minimal = cdma::minimal_upper_limit_profile(&inst.powers, 8)?;
    let relaxed = CdmaInstance::new(inst.powers.clone(), minimal.clone(), 8, 1.0)?;
    println!(
        "minimal limits {minimal:?}: sum rate {:.9}",
        solve_cdma(&relaxed, SplitStrategy::default())?.sum_rate
    );

    let delayed = inst.clone().with_delays(vec![0, 1, 2, 3, 4])?;
    println!("asynchronous sum rate {:.9}", cdma::async_sum_rate(&delayed)?);
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example()
}
