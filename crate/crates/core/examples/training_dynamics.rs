//! Tracks φ, its distance to the truth and the argmax segmentation accuracy
//! while AC-IND trains on the three-material blob phantom, then writes the
//! dynamics table as CSV.
//!
//! cargo run --release --example training_dynamics -- [out.csv]

use acind::io::dynamics_csv;
use acind::phantom::barbapapa_like_phantom;
use acind::pipeline::{dynamics_report, train, GroundTruth, Method, TrainConfig};
use acind::{Projector, ScanGeometry};

fn main() -> acind::Result<()> {
    let pair = barbapapa_like_phantom(64, 64, [0.0, 0.8, 2.0])?;
    let projector = Projector::new(&ScanGeometry::new(64, 64, 20)?);
    let sino = projector.forward(&pair.image)?;
    let truth = GroundTruth {
        image: Some(pair.image.clone()),
        acv: Some(pair.acv.clone()),
        labels: Some(pair.labels.clone()),
    };
    let cfg = TrainConfig {
        materials: 3,
        epochs: 1500,
        eval_every: 100,
        ..TrainConfig::new(Method::AcInd)
    };
    let out = train(&cfg, &projector, &sino, &truth)?;
    let rows = dynamics_report(&out.trace)?;

    println!("epoch  psnr   ‖φ−φ*‖  accuracy  φ");
    for r in &rows {
        println!(
            "{:>5}  {:>5.2}  {:>6.3}  {:>8.3}  {:.3?}",
            r.epoch,
            r.psnr.unwrap_or(f64::NAN),
            r.acv_distance.unwrap_or(f64::NAN),
            r.seg_accuracy.unwrap_or(f64::NAN),
            r.phi
        );
    }
    if let Some(path) = std::env::args().nth(1) {
        std::fs::write(&path, dynamics_csv(&rows))?;
        println!("wrote {path}");
    }
    Ok(())
}
