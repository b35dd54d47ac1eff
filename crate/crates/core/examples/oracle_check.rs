//! Compares the analytical curves with exhaustive backward induction on a
//! small discrete instance, and the policy's simulated value with the
//! reference optimum.

use storage_valuation::{
    backward_pass, monte_carlo,
    oracle::{sdp_solve, DiscreteInstance},
    validation::compare_with_oracle,
    PriceDistribution, StorageSpec, ValuationHorizon, ValueCurve,
};

fn main() -> storage_valuation::Result<()> {
    // η = √0.5 and P = Δe·√8 make every full-power move land on the grid.
    let j = 41;
    let step = 2.0 / (j - 1) as f64;
    let spec = StorageSpec::new(step * 8f64.sqrt(), 2.0, 0.5f64.sqrt(), 4.0)?;
    let stages = vec![
        PriceDistribution::empirical(vec![(10.0, 0.3), (40.0, 0.5), (120.0, 0.2)])?,
        PriceDistribution::empirical(vec![(-5.0, 0.1), (30.0, 0.6), (70.0, 0.3)])?,
        PriceDistribution::empirical(vec![(20.0, 0.5), (90.0, 0.5)])?,
    ];
    let terminal = ValueCurve::sample(2.0, j, |e| 80.0 - 20.0 * e)?;
    let h = ValuationHorizon::new(spec, stages, terminal.clone())?;
    let r = backward_pass(&h)?;

    let inst = DiscreteInstance::from_distributions(spec, &h.stages, terminal.values())?;
    inst.check_guard()?;
    let sdp = sdp_solve(&inst)?;
    let cmp = compare_with_oracle(&r, &sdp, &spec);
    for s in &cmp.stages {
        println!("stage {}: max |Δv| {:.4}, mean {:.4}, worst/allowance {:.3}", s.stage, s.max_abs, s.mean_abs, s.worst_ratio);
    }
    println!("within 2·slope·Δe everywhere: {}", cmp.passed);

    let k0 = 20;
    let mc = monte_carlo(step * k0 as f64, &h, &r, 10_000, 1)?;
    println!(
        "reference optimum {:.4}; policy {:.4} ± {:.4}",
        sdp.values[0][k0], mc.total.mean, mc.total.std_error
    );
    Ok(())
}
