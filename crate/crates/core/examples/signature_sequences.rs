// Builds signature sequences for an optimal split and checks that the
// log-det sum rate of the resulting system equals the closed form.

use multicode::sequences::{build_virtual_users, construct_sequences, logdet_sum_rate, verify_gram};
use multicode::{solve_cdma, CdmaInstance, SplitStrategy};

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let inst = CdmaInstance::new(vec![30., 15., 10., 7., 3.], vec![2; 5], 8, 1.0)?;
    let sol = solve_cdma(&inst, SplitStrategy::MinCountMaxOrthogonal)?;
    let vset = build_virtual_users(&sol, &inst.constants)?;
    println!(
        "{} active streams, {} orthogonal, complement dimension {}",
        vset.entries.len(),
        vset.orthogonal.len(),
        vset.complement_dim
    );

    let s = construct_sequences(&vset, 1)?;
    let report = verify_gram(&s, &vset)?;
    println!("gram residuals {report:?}");
    println!("S =\n{:.4}", s.matrix);

    let rate = logdet_sum_rate(&s.matrix, &s.powers, inst.noise_variance())?;
    println!("log-det rate {rate:.12}, closed form {:.12}", sol.sum_rate);
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example()
}
