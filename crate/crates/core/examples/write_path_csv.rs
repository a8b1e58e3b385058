//! Records a short tandem-queue path and writes it as CSV to stdout.

use srbm::experiments::tandem_family;
use srbm::report::metadata_line;
use srbm::sim::simulate_path;

fn main() -> srbm::Result<()> {
    let model = tandem_family(0.5)?.make_model(0.5)?;
    let path = simulate_path(&model, 1.0, 0.1, &[0.0, 0.0], 42)?;
    let meta = metadata_line("example write_path_csv", 42, &("tandem", 0.5))?;
    path.write_csv(std::io::stdout().lock(), &meta)
}
