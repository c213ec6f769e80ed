//! Locates the second-sheet zeros of `h` for the stock densities and compares
//! them with the weak-coupling estimate.
//!
//! Run with `cargo run --example resonance_poles`.

use lplab::denominator::{self, Rectangle};
use lplab::model::Model;

fn main() -> lplab::Result<()> {
    let rect = Rectangle::new((-1.0, 3.0), (-1.0, 0.0));
    for m in [
        Model::flat(0.2),
        Model::lorentzian(1.0, 0.1, 0.2),
        Model::gaussian(1.0, 1.0, 0.2),
    ] {
        let est = denominator::weak_coupling_estimate(&m)?;
        println!("{} (weak-coupling estimate {:.6})", m.density.name(), est);
        for p in denominator::find_all_poles(&m, rect, 9, 6) {
            println!(
                "  mu = {:.12}  residue = {:.6}  width = {:.6}  iterations = {}",
                p.mu,
                p.residue,
                p.width(),
                p.iterations
            );
        }
    }

    // coupling sweep for the lorentzian density
    println!("\n{:>6} {:>22} {:>22}", "g", "mu_1", "mu_2");
    for g in [0.02, 0.05, 0.1, 0.2, 0.4] {
        let poles = denominator::find_all_poles(&Model::lorentzian(1.0, 0.1, g), rect, 9, 6);
        let fmt: Vec<String> = poles.iter().map(|p| format!("{:.6}", p.mu)).collect();
        println!("{g:>6.2} {:>22}", fmt.join(" "));
    }
    Ok(())
}
