//! Blaschke factorization, winding number and inner-function classification
//! of the scalar S-matrix.
//!
//! Run with `cargo run --example inner_factorization`.

use lplab::denominator::{self, Rectangle};
use lplab::model::Model;
use lplab::smatrix;

fn main() -> lplab::Result<()> {
    let grid = smatrix::symmetric_grid(20.0, 4096);
    let rect = Rectangle::new((-1.0, 3.0), (-1.0, 0.0));
    for m in [
        Model::flat(0.2),
        Model::lorentzian(1.0, 0.1, 0.2),
        Model::gaussian(1.0, 1.0, 0.2),
        Model::flat(0.2).with_coupling(0.0),
    ] {
        let poles = denominator::find_all_poles(&m, rect, 9, 6);
        let fac = smatrix::factorize(&m, &poles, &grid)?;
        let winding = smatrix::winding_number(&m, 20.0, 4096)?;
        let count = smatrix::argument_principle_count(&m, &poles);
        let label = if fac.is_trivial() { "trivial" } else { fac.classification.tag() };
        println!("{} (g = {})", m.density.name(), m.params.g);
        println!("  classification      {label}");
        println!("  blaschke zeros      {:?}", fac.blaschke_zeros);
        println!("  defect factors      {:?}", fac.defect_factors);
        println!("  residual deviation  {:.3e}", fac.residual_deviation);
        println!("  sup |s| above axis  {:?}", fac.upper_half_sup);
        println!("  winding / count     {winding} / {count}");
    }
    Ok(())
}
