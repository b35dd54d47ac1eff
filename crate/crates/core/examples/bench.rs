//! Times `backward_pass` on a one-day and a two-day horizon with 1001 SoC
//! samples; run with `--release`.

use storage_valuation::cli::{bench_horizon, time_backward_pass};

fn main() -> storage_valuation::Result<()> {
    let one = time_backward_pass(&bench_horizon(24, 1001)?, 20)?;
    let two = time_backward_pass(&bench_horizon(48, 1001)?, 20)?;
    println!("T=24: {one:?}");
    println!("T=48: {two:?}");
    println!("scaling T→2T: {:.2}", two.median_ms / one.median_ms);
    Ok(())
}
