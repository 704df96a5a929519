//! Seeds the attenuation vector the AC-IND way: FBP, multi-Otsu masks,
//! region means, at dense and sparse view counts.

use acind::phantom::barbapapa_like_phantom;
use acind::pipeline::{init_ac_vector, InitMethod};
use acind::segmentation::{masks_from_thresholds, multi_otsu, DEFAULT_BINS};
use acind::{Projector, ScanGeometry};

fn main() -> acind::Result<()> {
    let pair = barbapapa_like_phantom(64, 64, [0.0, 0.8, 2.0])?;
    println!("true attenuation: {:?}", pair.acv.values());

    let t = multi_otsu(&pair.image, 3, DEFAULT_BINS)?;
    let masks = masks_from_thresholds(&pair.image, &t)?;
    let agree = masks
        .regions()
        .iter()
        .zip(pair.labels.labels())
        .filter(|(r, l)| **r + 1 == **l as usize)
        .count();
    println!(
        "thresholds on the phantom itself: {t:.3?} ({agree} of {} pixels on the true label)",
        64 * 64
    );

    for views in [180, 60, 20] {
        let projector = Projector::new(&ScanGeometry::new(64, 64, views)?);
        let sino = projector.forward(&pair.image)?;
        let init = init_ac_vector(&sino, &projector, 3, InitMethod::Fbp, None)?;
        let v = init.acv.values();
        println!(
            "{views:>3} views: FBP region means [{:.3}, {:.3}, {:.3}]",
            v[0], v[1], v[2]
        );
    }
    Ok(())
}
