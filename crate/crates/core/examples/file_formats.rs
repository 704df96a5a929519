//! Round trip through every on-disk format: F32G grids, geometry and ACV
//! CSVs, a model checkpoint and a 16-bit PGM preview.
//!
//! cargo run --example file_formats -- [out-dir]

use std::fs;
use std::path::PathBuf;

use acind::io::{
    acv_csv, export_pgm, geometry_csv, load_checkpoint, parse_acv_csv, parse_geometry_csv,
    parse_pgm16, save_checkpoint, F32Grid, F32GRID_HEADER_LEN,
};
use acind::phantom::barbapapa_like_phantom;
use acind::pipeline::{train, GroundTruth, Method, TrainConfig};
use acind::{Projector, ScanGeometry};

fn main() -> acind::Result<()> {
    let out = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("acind-formats"));
    fs::create_dir_all(&out)?;

    let pair = barbapapa_like_phantom(32, 32, [0.0, 0.8, 2.0])?;
    let grid = F32Grid::from_image(&pair.image);
    let path = out.join("image.f32g");
    grid.save(&path)?;
    let size = fs::metadata(&path)?.len() as usize;
    assert_eq!(size, F32GRID_HEADER_LEN + 4 * 32 * 32);
    assert_eq!(F32Grid::load(&path)?, grid);
    println!("F32G: {size} bytes");

    let geom = ScanGeometry::new(32, 32, 12)?;
    assert_eq!(parse_geometry_csv(&geometry_csv(&geom))?, geom);
    assert_eq!(parse_acv_csv(&acv_csv(&pair.acv))?, pair.acv);
    print!("{}", geometry_csv(&geom));

    let projector = Projector::new(&geom);
    let sino = projector.forward(&pair.image)?;
    let mut cfg = TrainConfig {
        materials: 3,
        epochs: 20,
        eval_every: 10,
        ..TrainConfig::new(Method::AcInd)
    };
    cfg.network.hidden = vec![32, 32];
    let result = train(&cfg, &projector, &sino, &GroundTruth::none())?;
    let ckpt = out.join("ckpt.bin");
    save_checkpoint(&result.model, &ckpt)?;
    let restored = load_checkpoint(&ckpt)?;
    assert_eq!(restored.render(32, 32)?, result.image);
    println!(
        "checkpoint: {} bytes, renders identically",
        fs::metadata(&ckpt)?.len()
    );

    let pgm = out.join("image.pgm");
    export_pgm(&pair.image, &pgm)?;
    let (h, w, pixels) = parse_pgm16(&fs::read(&pgm)?)?;
    println!(
        "PGM: {h}×{w}, values {}..={}",
        pixels.iter().min().unwrap(),
        pixels.iter().max().unwrap()
    );
    println!("wrote {}", out.display());
    Ok(())
}
