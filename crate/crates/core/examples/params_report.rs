//! Trainable-parameter totals of the distribution-head network against the
//! scalar INR with matched width.

use acind::inr::{Architecture, ParamsReport};

fn main() {
    let reference = Architecture::reference();
    print!("{}", ParamsReport::new(&reference, 6).render());

    println!();
    let small = Architecture {
        fourier_features: 32,
        hidden: vec![64; 4],
    };
    for k in [2, 3, 6] {
        let report = ParamsReport::new(&small, k);
        println!(
            "desk network, K={k}: distribution {} vs scalar {}",
            report.distribution_network, report.scalar_network
        );
    }
}
