//! Full analysis report for the three-station network at r = 0.2, in text
//! and JSON form.

use srbm::analysis::analyze;
use srbm::experiments::three_station_family;
use srbm::model::ModelFile;

fn main() -> srbm::Result<()> {
    let file = ModelFile::from_family(&three_station_family()?);
    let report = analyze(&file, Some(0.2))?;
    print!("{report}");
    println!("{}", serde_json::to_string(&report)?);
    Ok(())
}
