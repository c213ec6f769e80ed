//! The decay inequality as the speed of light grows: the residual over the
//! nonrelativistic kinetic gap falls off as `1 / c^2`.
//!
//! Run with `cargo run --example galilean_limit`.

use lplab::galilean::{self, KinematicConfig, KineticForm};

fn main() -> lplab::Result<()> {
    let cfg = KinematicConfig {
        p_vec: [0.4, 0.0, 0.1],
        k_vec: [1.0, 0.5, 0.0],
        ..Default::default()
    };
    println!("mass defect     {}", galilean::mass_defect(&cfg));
    println!("epsilon defect  {:e}", galilean::epsilon_defect(&cfg));
    println!(
        "kinetic gap     {:.6} (as printed: {:.6})",
        galilean::galilean_kinetic_gap(&cfg),
        galilean::galilean_kinetic_gap_with(&cfg, KineticForm::AsPrinted)
    );
    let scan = galilean::limit_scan(&cfg, &[10.0, 1e2, 1e3, 1e4, 1e5])?;
    println!("{:>10} {:>14}", "c", "residual");
    for (c, r) in &scan.rows {
        println!("{c:>10.0e} {r:>14.6e}");
    }
    println!("log-log slope   {:?}", scan.slope);
    for c in [1.0, 10.0, 1e3] {
        println!("dt/dtau at c = {c:>6}: {:.12}", galilean::time_rate(&cfg.with_c(c)));
    }
    Ok(())
}
