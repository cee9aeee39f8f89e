//! Measure files and run configuration: write, read back, detect a bad cell,
//! and round a solver configuration through TOML.

use kb_core::io::{decode_raw, encode_measure, load_measure, save_measure, RunConfig};
use kb_core::measure::{synth_measure, Generator};
use kb_core::{GridSpec, Result};

fn main() -> Result<()> {
    let grid = GridSpec::new(2, 4)?;
    let g = synth_measure(
        grid,
        &Generator::Smooth {
            floor: 0.2,
            amplitude: 1.0,
        },
        9,
    )?;
    let file = std::env::temp_dir().join("kb_example.kbm");
    save_measure(&g, &file)?;
    let back = load_measure(&file)?;
    println!(
        "{} cells, {} bytes, identical: {}",
        back.grid().cells(),
        std::fs::metadata(&file)?.len(),
        back == g
    );

    // overwrite the first diagonal entry of cell 5 with a negative number
    let mut bytes = encode_measure(&g)?;
    let at = 12 + 5 * 3 * 8;
    bytes[at..at + 8].copy_from_slice(&(-1.0f64).to_le_bytes());
    let raw = decode_raw(&bytes)?;
    println!("first invalid cell: {:?}", raw.first_invalid_cell());
    println!("as a measure: {}", raw.into_measure().unwrap_err());

    let cfg = RunConfig::from_toml_str("b = \"zero\"\n[solver]\nnt = 12\nmode = \"hellinger\"\n")?;
    print!("{}", cfg.to_toml_string()?);
    std::fs::remove_file(&file)?;
    Ok(())
}
