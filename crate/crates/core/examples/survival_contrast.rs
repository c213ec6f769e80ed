//! Survival amplitude of the discrete level: exact exponential decay in the
//! flat band against the two-pole lorentzian case.
//!
//! Run with `cargo run --release --example survival_contrast`.

use num_complex::Complex64;

use lplab::denominator;
use lplab::model::Model;
use lplab::survival::{self, MeasureOptions};

fn main() -> lplab::Result<()> {
    let taus = [0.0, 1.0, 2.0, 5.0, 10.0, 20.0];
    for (m, seed) in [
        (Model::flat(0.2), Complex64::new(1.0, -0.1)),
        (Model::lorentzian(1.0, 0.1, 0.2), Complex64::new(1.19, -0.05)),
    ] {
        let pole = denominator::find_pole(&m, seed)?;
        let meas = survival::spectral_measure(&m, MeasureOptions::up_to(20.0))?;
        println!("{}: total mass {:.10}, pole {:.6}", m.density.name(), meas.total_mass, pole.mu);
        println!("{:>6} {:>12} {:>12} {:>12}", "tau", "|A|", "exp model", "deviation");
        for row in survival::compare_exponential(&meas, &pole, &taus)? {
            println!(
                "{:>6.1} {:>12.8} {:>12.8} {:>12.3e}",
                row.tau, row.abs_a, row.exp_model, row.deviation
            );
        }
        println!(
            "semigroup defect |A(10) - A(5)^2| = {:.3e}\n",
            survival::semigroup_defect(&meas, 5.0, 5.0)?
        );
    }
    Ok(())
}
