//! Run a named preset end to end and list the files it writes.
//!
//! cargo run --release --example pipeline_preset [fig3d|fig4a|fig4b|otto-demo] [out_dir]

use std::path::PathBuf;

use qcr_thermo::config::preset;
use qcr_thermo::pipeline::run_pipeline;

fn main() -> qcr_thermo::error::Result<()> {
    let name = std::env::args().nth(1).unwrap_or_else(|| "fig4a".into());
    let config = preset(&name).unwrap_or_else(|| panic!("no preset named {name}"));
    let dir = std::env::args()
        .nth(2)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join(format!("qcr-thermo-{name}")));
    for path in run_pipeline(&config, &dir)? {
        println!("{}", path.display());
    }
    Ok(())
}
