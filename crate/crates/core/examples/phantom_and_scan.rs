//! Builds the two synthetic phantoms, simulates 20/40/60-view scans and
//! writes everything as F32G files with geometry sidecars.
//!
//! cargo run --example phantom_and_scan -- [out-dir]

use std::fs;
use std::path::PathBuf;

use acind::io::{acv_csv, geometry_csv, F32Grid};
use acind::phantom::{
    barbapapa_like_phantom, default_num_ellipses, ellipse_material_phantom, MaterialSpec,
};
use acind::{Projector, ScanGeometry};

fn main() -> acind::Result<()> {
    let out = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("acind-phantoms"));
    fs::create_dir_all(&out)?;

    let spec = MaterialSpec::standard(6)?;
    let phantoms = [
        (
            "ellipse",
            ellipse_material_phantom(7, 64, 64, &spec, default_num_ellipses(6))?,
        ),
        ("blob", barbapapa_like_phantom(64, 64, [0.0, 0.8, 2.0])?),
    ];

    for (name, pair) in &phantoms {
        assert!(pair.is_consistent());
        F32Grid::from_image(&pair.image).save(out.join(format!("{name}.img.f32g")))?;
        F32Grid::from_labels(&pair.labels).save(out.join(format!("{name}.labels.f32g")))?;
        fs::write(out.join(format!("{name}.acv.csv")), acv_csv(&pair.acv))?;
        println!(
            "{name}: materials {:?}, pixels per label {:?}",
            pair.acv.values(),
            pair.labels.histogram()
        );

        for views in [20, 40, 60] {
            let geom = ScanGeometry::new(64, 64, views)?;
            let sino = Projector::new(&geom).forward(&pair.image)?;
            let stem = format!("{name}.{views}v");
            F32Grid::from_sinogram(&sino).save(out.join(format!("{stem}.f32g")))?;
            fs::write(out.join(format!("{stem}.geom.csv")), geometry_csv(&geom))?;
            println!(
                "  {views:>2} views: {}×{} sinogram, ‖y‖ = {:.2}",
                views,
                geom.num_detectors(),
                sino.norm()
            );
        }
    }
    println!("wrote {}", out.display());
    Ok(())
}
