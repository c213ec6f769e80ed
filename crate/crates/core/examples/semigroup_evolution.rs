//! Compressed evolution `Z(tau) = P_K U(tau) P_K` of the resonant state on a
//! foliation grid.
//!
//! Run with `cargo run --release --example semigroup_evolution`.

use num_complex::Complex64;

use lplab::denominator;
use lplab::foliation::{self, FoliationGrid, LaxPhillips};
use lplab::model::Model;

fn main() -> lplab::Result<()> {
    let model = Model::flat(0.2);
    let pole = denominator::find_pole(&model, Complex64::new(1.0, -0.1))?;
    let grid = FoliationGrid::new(FoliationGrid::DEFAULT_N, FoliationGrid::DEFAULT_OMEGA)?;
    let lp = LaxPhillips::new(&model, None, &grid)?;
    let r = foliation::resonant_state(&pole, None, &grid)?;
    println!("grid N = {}, Omega = {}, ds = {:.4}", grid.n(), grid.omega(), grid.d_s());
    println!("D+ fraction of the resonant state: {:.3e}", foliation::dplus_fraction(&r)?);
    println!("{:>6} {:>12} {:>12} {:>12}", "tau", "|Z R|/|R|", "e^{Im mu t}", "eigen err");
    for tau in [0.0, 0.5, 1.0, 2.0, 5.0] {
        let z = lp.semigroup_z(&r, tau)?;
        let want = r.scaled((Complex64::new(0.0, -tau) * pole.mu).exp());
        println!(
            "{tau:>6.2} {:>12.6} {:>12.6} {:>12.3e}",
            z.norm() / r.norm(),
            (pole.mu.im * tau).exp(),
            z.distance(&want)? / r.norm()
        );
    }
    Ok(())
}
