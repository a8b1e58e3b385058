//! Reduced skew-symmetric comparison at alpha = beta = 0.5; CSV on stdout.

use srbm::experiments::{fig_skew_compare, SkewCompareSpec};

fn main() -> srbm::Result<()> {
    let mut spec = SkewCompareSpec::new(0.5, 0.5);
    spec.r_grid = vec![0.6, 0.75, 0.9];
    spec.horizon_factor = 1000.0;
    fig_skew_compare(&spec)?.write_csv(std::io::stdout().lock())
}
