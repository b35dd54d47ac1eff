//! The law of the marginal value `q` at one SoC, computed in closed form
//! and compared with single-period finite differences on sampled prices.

use storage_valuation::{soc_price_cdf, validation::law_check, PriceDistribution, StorageSpec, ValueCurve};

fn main() -> storage_valuation::Result<()> {
    let spec = StorageSpec::new(0.5, 2.0, 0.9, 5.0)?;
    let v_next = ValueCurve::sample(2.0, 201, |e| 90.0 - 30.0 * e)?;
    let dist = PriceDistribution::normal(45.0, 20.0)?;
    let e = 1.0;

    for x in [20.0, 40.0, 55.0, 60.0, 70.0] {
        println!("G({x}) = {:.4}", soc_price_cdf(x, e, &v_next, &dist, &spec)?);
    }
    let check = law_check(e, v_next.step() * 1e-3, &dist, &v_next, &spec, 100_000, 9)?;
    println!("KS distance over {} samples: {:.4}", check.n, check.ks);
    Ok(())
}
