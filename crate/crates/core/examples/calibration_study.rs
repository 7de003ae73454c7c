//! Expected calibration error for a calibrated and an overconfident
//! detector, drawn from the simulator's confidence model.

use classlogic::eval::ece;
use classlogic::simgen::{sample_confidences, ConfidenceModel, NoiseModel};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let base = NoiseModel {
        substitution_rate: 0.3,
        ..NoiseModel::clean()
    };
    for (name, confidence) in [
        ("calibrated", ConfidenceModel::Calibrated),
        ("overconfident +0.1", ConfidenceModel::Overconfident(0.1)),
        ("overconfident +0.2", ConfidenceModel::Overconfident(0.2)),
        ("underconfident -0.2", ConfidenceModel::Underconfident(0.2)),
    ] {
        let noise = NoiseModel { confidence, ..base };
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let pairs = sample_confidences(&noise, 20_000, &mut rng);
        let mean = pairs.iter().map(|p| p.0).sum::<f64>() / pairs.len() as f64;
        let acc = pairs.iter().filter(|p| p.1).count() as f64 / pairs.len() as f64;
        println!(
            "{name:<20} mean conf {mean:.3}  accuracy {acc:.3}  ECE {:.4}",
            ece(&pairs, 10)?
        );
    }
    Ok(())
}
