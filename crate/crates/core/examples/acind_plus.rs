//! AC-IND⁺: seed φ from a first AC-IND reconstruction instead of FBP and
//! train again. Shows how far each initialization sits from the truth.
//!
//! cargo run --release --example acind_plus -- [epochs]

use acind::metrics::{l2_distance, psnr};
use acind::phantom::{default_num_ellipses, ellipse_material_phantom, MaterialSpec};
use acind::pipeline::{train, GroundTruth, Method, TrainConfig};
use acind::{Projector, ScanGeometry};

fn main() -> acind::Result<()> {
    let epochs = std::env::args()
        .nth(1)
        .and_then(|a| a.parse().ok())
        .unwrap_or(1500);
    let spec = MaterialSpec::standard(6)?;
    let pair = ellipse_material_phantom(7, 64, 64, &spec, default_num_ellipses(6))?;
    let projector = Projector::new(&ScanGeometry::new(64, 64, 20)?);
    let sino = projector.forward(&pair.image)?;
    let truth = GroundTruth {
        image: Some(pair.image.clone()),
        acv: Some(pair.acv.clone()),
        labels: None,
    };
    let range = truth.data_range().unwrap_or(1.0);

    let cfg = TrainConfig {
        epochs,
        eval_every: epochs.max(1),
        ..TrainConfig::new(Method::AcIndPlus)
    };
    let out = train(&cfg, &projector, &sino, &truth)?;
    let init = out
        .init
        .as_ref()
        .expect("distribution method records its init");
    let truth_phi = pair.acv.values();
    println!("true φ        {truth_phi:.3?}");
    println!(
        "FBP seed      {:.3?} (distance {:.3})",
        init.fbp_acv.values(),
        l2_distance(truth_phi, init.fbp_acv.values())?
    );
    if let Some(inner) = &init.inner_acv {
        println!(
            "AC-IND seed   {:.3?} (distance {:.3})",
            inner.values(),
            l2_distance(truth_phi, inner.values())?
        );
    }
    if let Some(acv) = &out.acv {
        println!(
            "final φ       {:.3?} (distance {:.3})",
            acv.values(),
            l2_distance(truth_phi, acv.values())?
        );
    }
    println!("AC-IND⁺ psnr {:.2}", psnr(&pair.image, &out.image, range)?);
    Ok(())
}
