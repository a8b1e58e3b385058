//! One-dimensional reflected Brownian motion with drift -1: both schemes
//! against the exact stationary mean 1/2.

use srbm::linalg::SquareMatrix;
use srbm::model::SrbmModel;
use srbm::sim::{stationary_estimate, Scheme, SimOptions, Simulator, StreamedPath};

fn main() -> srbm::Result<()> {
    let model = SrbmModel::new(SquareMatrix::identity(1), vec![-1.0], SquareMatrix::identity(1))?;
    for scheme in [Scheme::ProjectedEuler, Scheme::BridgeMinimum] {
        let sim = Simulator::new(&model, SimOptions::new(5000.0, 0.01).with_scheme(scheme))?;
        let path = StreamedPath { sim: &sim, init: vec![0.5], seed: 7 };
        let est = stationary_estimate(&path, None)?;
        println!("{scheme:?}: mean {:.4} +- {:.4} (exact 0.5)", est.means[0], est.std_errors[0]);
    }
    Ok(())
}
