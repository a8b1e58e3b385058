//! Uniform moment bounds on the tandem family over a short r grid.

use srbm::bar::{moment_bound_report, MomentSimConfig};
use srbm::experiments::tandem_family;

fn main() -> srbm::Result<()> {
    let cfg = MomentSimConfig { dt: 0.01, horizon_factor: 50.0, burn_in_fraction: 0.2, seed: 1 };
    let rep = moment_bound_report(&tandem_family(0.5)?, &[0.5, 0.4], 1, 2, &cfg)?;
    for row in &rep.rows {
        println!("r {:.2}: interior {:.4} +- {:.4}", row.r, row.interior.value, row.interior.std_error);
    }
    println!("interior band {:.3}, vanishing trend {:?}", rep.interior_band, rep.vanishing_trend_down);
    Ok(())
}
