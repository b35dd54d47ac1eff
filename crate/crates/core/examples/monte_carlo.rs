//! Expected profit of the dispatch policy by Monte Carlo, and a paired
//! finite-difference check that the curve at the starting SoC matches the
//! simulated sensitivity of the total to the starting SoC.

use storage_valuation::{backward_pass, monte_carlo, policy::marginal_check, PriceDistribution, StorageSpec, ValuationHorizon, ValueCurve};

fn main() -> storage_valuation::Result<()> {
    let spec = StorageSpec::new(0.5, 2.0, 0.92, 3.0)?;
    let stages = (0..12)
        .map(|h| PriceDistribution::normal(35.0 + 3.0 * h as f64, 20.0))
        .collect::<Result<Vec<_>, _>>()?;
    let terminal = ValueCurve::sample(2.0, 401, |e| 60.0 - 10.0 * e)?;
    let h = ValuationHorizon::new(spec, stages, terminal)?;
    let r = backward_pass(&h)?;

    let e0 = 1.0;
    let mc = monte_carlo(e0, &h, &r, 20_000, 42)?;
    println!(
        "profit {:.3} ± {:.3}, total {:.3} ± {:.3}, mean final SoC {:.3}",
        mc.profit.mean, mc.profit.std_error, mc.total.mean, mc.total.std_error, mc.mean_final_soc
    );

    let check = marginal_check(e0, 0.05, &h, &r, 20_000, 43)?;
    println!(
        "d total / d e0 = {:.3} ± {:.3}; curve says {:.3}; within 3 SE: {}",
        check.estimate,
        check.std_error,
        check.curve_value,
        check.within(3.0)
    );
    Ok(())
}
