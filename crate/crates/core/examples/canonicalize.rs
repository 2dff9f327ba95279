// Rotates a correlated data block into diagonal form without changing the
// received signal correlation.

use multicode::model::{canonicalize, CorrelationPair};
use nalgebra::DMatrix;

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let n = 4;
    let block = DMatrix::from_row_slice(2, 2, &[1.5, 0.5, 0.5, 1.5]);
    let seq = DMatrix::from_row_slice(
        n,
        2,
        &[1.0, 1.0, 1.0, -1.0, 1.0, 1.0, 1.0, -1.0],
    );
    let power = (&seq * &block * seq.transpose()).trace() / n as f64;
    let pair = CorrelationPair::new(vec![block], seq, vec![power])?;
    let out = canonicalize(&pair)?;
    println!("diagonal blocks: {}", out.is_diagonal());
    println!("P =\n{:.6}", out.blocks[0]);
    println!("S =\n{:.6}", out.sequences);
    let drift = (out.signal_correlation() - pair.signal_correlation()).amax();
    println!("signal correlation change {drift:.1e}");
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example()
}
