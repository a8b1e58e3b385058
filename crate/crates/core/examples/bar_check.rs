//! MGF-BAR residuals and the BAR mean identity on one tandem path.

use srbm::approx::multiscaling_approx;
use srbm::bar::{bar_identity_mean, bar_residuals, theta_sweep};
use srbm::experiments::tandem_family;
use srbm::sim::{SimOptions, Simulator, StreamedPath};

fn main() -> srbm::Result<()> {
    let r = 0.5;
    let family = tandem_family(0.5)?;
    let model = family.make_model(r)?;
    let approx = multiscaling_approx(&family, r)?;
    let sim = Simulator::new(&model, SimOptions::new(20_000.0, 0.01))?;
    let path = StreamedPath { sim: &sim, init: approx.scaled_means.clone(), seed: 3 };

    for rep in bar_residuals(&model, &path, &theta_sweep(&approx, false)?, None, true)? {
        println!(
            "theta {:?}: residual {:+.5} se {:.5} pass {}",
            rep.theta, rep.residual, rep.std_error, rep.pass
        );
    }
    let e1 = bar_identity_mean(&model, &path, 0, None)?;
    println!("E[r Z_1] = {:.4} +- {:.4}, limit {}", r * e1.value, r * e1.std_error, approx.m[0]);
    Ok(())
}
