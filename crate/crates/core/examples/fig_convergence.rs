//! Reduced convergence sweep on the tandem family; CSV on stdout.

use srbm::experiments::{fig_convergence, ConvergenceSpec};

fn main() -> srbm::Result<()> {
    let spec = ConvergenceSpec {
        betas: vec![0.0, 0.5],
        r_grid: vec![0.5, 0.4, 0.3],
        horizon_factor: 50.0,
        ..ConvergenceSpec::default()
    };
    let report = fig_convergence(&spec)?;
    report.write_csv(std::io::stdout().lock())?;
    report.write_slopes_csv(std::io::stdout().lock())
}
