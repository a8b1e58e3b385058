//! Reduced MLMC initial-distribution sweep on the network; CSV on stdout.

use srbm::experiments::{fig_mlmc, three_station_family, MlmcSweepSpec};

fn main() -> srbm::Result<()> {
    let model = three_station_family()?.make_model(0.2)?;
    let spec = MlmcSweepSpec {
        levels: vec![1, 2],
        base_horizons: vec![200.0, 1000.0],
        n_paths: 40,
        n_replications: 4,
        ..MlmcSweepSpec::default()
    };
    fig_mlmc(&model, &spec)?.write_csv(std::io::stdout().lock())
}
