//! Classic INR versus AC-IND on a sparse-view scan of the six-material
//! ellipse phantom. Prints PSNR/SSIM, the learned attenuation vector and the
//! segmentation accuracy.
//!
//! cargo run --release --example acind_reconstruction -- [views] [epochs]

use acind::classical::fbp;
use acind::metrics::{psnr, ssim};
use acind::phantom::{default_num_ellipses, ellipse_material_phantom, MaterialSpec};
use acind::pipeline::{train, GroundTruth, Method, TrainConfig};
use acind::{Projector, ScanGeometry};

fn main() -> acind::Result<()> {
    let mut args = std::env::args().skip(1).map(|a| a.parse::<usize>().ok());
    let views = args.next().flatten().unwrap_or(20);
    let epochs = args.next().flatten().unwrap_or(1500);

    let spec = MaterialSpec::standard(6)?;
    let pair = ellipse_material_phantom(7, 64, 64, &spec, default_num_ellipses(6))?;
    let geom = ScanGeometry::new(64, 64, views)?;
    let projector = Projector::new(&geom);
    let sino = projector.forward(&pair.image)?;
    let truth = GroundTruth {
        image: Some(pair.image.clone()),
        acv: Some(pair.acv.clone()),
        labels: Some(pair.labels.clone()),
    };
    let range = truth.data_range().unwrap_or(1.0);

    let f = fbp(&sino, &geom)?;
    println!(
        "fbp     psnr {:.2} ssim {:.4}",
        psnr(&pair.image, &f, range)?,
        ssim(&pair.image, &f, range)?
    );

    for method in [Method::Inr, Method::AcInd] {
        let cfg = TrainConfig {
            epochs,
            eval_every: 100,
            ..TrainConfig::new(method)
        };
        let t = std::time::Instant::now();
        let out = train(&cfg, &projector, &sino, &truth)?;
        let best = out
            .trace
            .best_psnr()
            .and_then(|r| r.psnr.map(|p| (r.epoch, p)));
        println!(
            "{:<7} psnr {:.2} ssim {:.4} best {:?} ({:.1?})",
            method.name(),
            psnr(&pair.image, &out.image, range)?,
            ssim(&pair.image, &out.image, range)?,
            best,
            t.elapsed()
        );
        if let (Some(acv), Some(labels)) = (&out.acv, &out.labels) {
            println!("        φ    {:.3?}", acv.values());
            println!("        true {:.3?}", pair.acv.values());
            println!(
                "        interior label accuracy {:.3}",
                labels.accuracy_against(&pair.labels, true)?
            );
        }
    }
    Ok(())
}
