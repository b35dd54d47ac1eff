//! The three quantities the recursion consumes from a stage distribution:
//! CDF values, interval masses and partial expectations.

use storage_valuation::PriceDistribution;

fn main() -> storage_valuation::Result<()> {
    let normal = PriceDistribution::normal(40.0, 15.0)?;
    let spiky = PriceDistribution::empirical(vec![(-10.0, 0.05), (30.0, 0.6), (45.0, 0.3), (400.0, 0.05)])?;
    let point = PriceDistribution::point_mass(35.0)?;

    for (name, d) in [("normal", &normal), ("empirical", &spiky), ("point mass", &point)] {
        println!("{name}: mean {:.3}, sd {:.3}", d.mean(), d.std_dev());
        for x in [0.0, 35.0, 50.0] {
            println!(
                "  F({x}) = {:.4}   P(x < λ ≤ 100) = {:.4}   E[λ; λ ≤ {x}] = {:.4}",
                d.cdf(x),
                d.mass(x, 100.0),
                d.partial_expectation(f64::NEG_INFINITY, x)?
            );
        }
    }

    // Continuous laws can be reduced to a few support points for the
    // brute-force reference.
    let coarse = normal.discretize(5)?;
    println!("normal on 5 points: {:?}", coarse.support().unwrap_or_default());
    Ok(())
}
