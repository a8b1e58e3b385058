//! Replicated MLMC estimate of the network's stationary mean at r = 0.2,
//! with a small budget.

use srbm::experiments::three_station_family;
use srbm::mlmc::{replicate_ci, InitKind, MlmcConfig};

fn main() -> srbm::Result<()> {
    let model = three_station_family()?.make_model(0.2)?;
    let mut cfg = MlmcConfig::new(2, 500.0, 0.2, InitKind::Multiscaling);
    cfg.n_paths = 50;
    cfg.n_replications = 4;
    let res = replicate_ci(&model, &cfg)?;
    for i in 0..model.dim() {
        println!("dim {}: {:.3} in [{:.3}, {:.3}]", i + 1, res.mean[i], res.ci_low[i], res.ci_high[i]);
    }
    println!("cost per estimator {}", res.cost);
    Ok(())
}
