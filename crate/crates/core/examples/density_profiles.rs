//! Tabulates the stock spectral densities and the boundary values of `h`.
//!
//! Run with `cargo run --example density_profiles`.

use lplab::denominator;
use lplab::model::Model;

fn main() -> lplab::Result<()> {
    let models = [
        Model::flat(0.2),
        Model::lorentzian(1.0, 0.1, 0.2),
        Model::gaussian(1.0, 1.0, 0.2),
    ];
    println!("{:>12} {:>7} {:>14} {:>14} {:>14}", "density", "lambda", "rho", "re h+", "im h+");
    for m in &models {
        for i in 0..=8 {
            let x = -1.0 + 0.5 * i as f64;
            let b = denominator::h_boundary(m, x)?;
            println!(
                "{:>12} {:>7.2} {:>14.6e} {:>14.6e} {:>14.6e}",
                m.density.name(),
                x,
                b.rho,
                b.h_plus.re,
                b.h_plus.im
            );
        }
    }

    // the numeric dispersion path against the closed form
    let m = Model::lorentzian(1.0, 0.1, 0.2);
    let q = m.clone().with_quadrature();
    let worst = (0..100)
        .map(|i| -10.0 + 20.0 * i as f64 / 99.0)
        .map(|x| {
            let a = denominator::h_boundary(&m, x).unwrap().h_plus;
            let b = denominator::h_boundary(&q, x).unwrap().h_plus;
            (a - b).norm()
        })
        .fold(0.0, f64::max);
    println!("lorentzian: max |h+ (quadrature) - h+ (closed form)| = {worst:.2e}");
    Ok(())
}
