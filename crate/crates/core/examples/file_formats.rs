//! Writing a generated pair to disk and reading it back: CSV and binary
//! matrices, annotation files and alignment paths.
//!
//! cargo run --example file_formats

use cdctw::datagen::{gen_synthetic, SyntheticSpec};
use cdctw::seqcore::{read_annotations, read_matrix, write_annotations, write_matrix, MatrixFormat};
use cdctw::AlignmentPath;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = std::env::temp_dir().join("cdctw_formats");
    std::fs::create_dir_all(&dir)?;
    let g = gen_synthetic(&SyntheticSpec::default())?;

    let csv = dir.join("x.csv");
    let bin = dir.join("x.bin");
    write_matrix(&csv, g.views.x.data(), MatrixFormat::Csv)?;
    write_matrix(&bin, g.views.x.data(), MatrixFormat::Binary)?;
    write_annotations(&dir.join("ann_x.txt"), g.views.x.annotations().unwrap())?;
    g.truth.save(&dir.join("truth.csv"))?;

    let from_csv = read_matrix(&csv, MatrixFormat::from_path(&csv))?;
    let from_bin = read_matrix(&bin, MatrixFormat::from_path(&bin))?;
    let ann = read_annotations(&dir.join("ann_x.txt"))?;
    let truth = AlignmentPath::load(&dir.join("truth.csv"))?;

    let size = |p: &std::path::Path| std::fs::metadata(p).map(|m| m.len()).unwrap_or(0);
    println!("{} x {} matrix", from_csv.nrows(), from_csv.ncols());
    println!("csv {} bytes, max round-trip error {:e}", size(&csv), (&from_csv - g.views.x.data()).amax());
    println!("bin {} bytes, exact: {}", size(&bin), &from_bin == g.views.x.data());
    println!("{} annotations, {} phases", ann.len(), ann.iter().max().unwrap() + 1);
    println!("truth path of {} steps, identical: {}", truth.len(), truth == g.truth);
    println!("files in {}", dir.display());
    Ok(())
}
