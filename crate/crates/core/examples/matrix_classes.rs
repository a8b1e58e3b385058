//! Classify a few reflection matrices and print the `u_k` vectors.

use srbm::approx::{compute_r0, compute_u};
use srbm::classes::classify;
use srbm::linalg::SquareMatrix;

fn main() -> srbm::Result<()> {
    let cases = [
        ("network", SquareMatrix::from_rows(&[[1.0, -0.6, -0.4], [-0.5, 1.0, -0.4], [-0.2, -0.3, 1.0]])?),
        ("upper", SquareMatrix::from_rows(&[[1.0, 0.8, 0.3], [0.0, 1.0, -0.7], [0.0, 0.0, 1.0]])?),
        ("not P", SquareMatrix::from_rows(&[[1.0, -2.0, 0.0], [-2.0, 1.0, 0.0], [0.0, 0.0, 1.0]])?),
    ];
    for (name, r) in &cases {
        let c = classify(r)?;
        println!(
            "{name:8} P={} M={} completely-S={} lower-triangular={}",
            c.is_p, c.is_m, c.is_completely_s, c.is_lower_triangular
        );
        if c.is_p {
            for k in 0..r.dim() {
                println!("    u_{} = {:?}", k + 1, compute_u(r, k)?);
            }
            println!("    r0 = {:.4}", compute_r0(r)?);
        } else {
            println!("    witnesses: {:?}", c.witnesses);
        }
    }
    Ok(())
}
