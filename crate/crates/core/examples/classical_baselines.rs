//! FBP and SIRT on the six-material ellipse phantom at 20, 40 and 60 views.
//!
//! cargo run --example classical_baselines -- [sirt-iterations]

use acind::classical::{fbp, sirt_with, SirtConfig};
use acind::metrics::{psnr, ssim};
use acind::phantom::{default_num_ellipses, ellipse_material_phantom, MaterialSpec};
use acind::{Projector, ScanGeometry};

fn main() -> acind::Result<()> {
    let iters = std::env::args()
        .nth(1)
        .and_then(|s| s.parse().ok())
        .unwrap_or(2000);
    let spec = MaterialSpec::standard(6)?;
    let pair = ellipse_material_phantom(7, 64, 64, &spec, default_num_ellipses(6))?;
    let range = 2.5;

    println!("method,views,psnr,ssim");
    for views in [20, 40, 60] {
        let geom = ScanGeometry::new(64, 64, views)?;
        let projector = Projector::new(&geom);
        let sino = projector.forward(&pair.image)?;

        let f = fbp(&sino, &geom)?;
        println!(
            "fbp,{views},{:.2},{:.4}",
            psnr(&pair.image, &f, range)?,
            ssim(&pair.image, &f, range)?
        );

        let cfg = SirtConfig {
            num_iters: iters,
            nonneg_clamp: true,
        };
        let s = sirt_with(&projector, &sino, cfg)?;
        println!(
            "sirt,{views},{:.2},{:.4}",
            psnr(&pair.image, &s, range)?,
            ssim(&pair.image, &s, range)?
        );
    }
    Ok(())
}
