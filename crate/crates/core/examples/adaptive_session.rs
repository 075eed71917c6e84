//! Game sessions without calibration: a generic model from another subject
//! adapts online and catches up with a model calibrated on the player.

use riemann_bci::features::{FeatureRecipe, Preprocess, Shrinkage};
use riemann_bci::io::synth::{generate_p300, P300Spec, P300Subject, SubjectShape, DEFAULT_P300_SNR, TARGET};
use riemann_bci::mdm::MdmModel;
use riemann_bci::session::{compare_modes, random_levels, summarize, SyntheticSource};
use riemann_bci::spd::MeanConfig;

fn main() -> riemann_bci::Result<()> {
    let cfg = MeanConfig::default();
    let other = P300Subject::generate(SubjectShape { latency_s: 0.45, ..SubjectShape::default() }, 9000)?;
    let (generic_train, _) = generate_p300(&P300Spec { subject: other, snr: DEFAULT_P300_SNR, n_targets: 40, n_non_targets: 200, seed: 3 })?;
    let recipe = FeatureRecipe::p300_from_training(&generic_train, TARGET, Shrinkage::Auto, Preprocess::none())?;
    let generic = MdmModel::fit(&generic_train, recipe, &cfg)?;

    let mut adaptive = Vec::new();
    let mut trained = Vec::new();
    for s in 0..5 {
        let subject = P300Subject::generate(SubjectShape::default(), 5000 + s)?;
        let spec = P300Spec { subject: subject.clone(), snr: DEFAULT_P300_SNR, n_targets: 30, n_non_targets: 150, seed: 3 * s + 1 };
        let (training, _) = generate_p300(&spec)?;
        let levels = random_levels(12, 36, 8, 3 * s + 2)?;
        let source = SyntheticSource { subject, snr: DEFAULT_P300_SNR, seed: 7 * s };
        let paired = compare_modes(&levels, &source, &generic, &training, &cfg)?;
        adaptive.push(paired.adaptive);
        trained.push(paired.non_adaptive);
    }
    for (name, runs) in [("adaptive", &adaptive), ("calibrated", &trained)] {
        let s = summarize(runs)?;
        let means: Vec<String> = s.mean.iter().map(|m| format!("{m:.1}")).collect();
        println!("{name:>10}: mean NRD per level [{}], slope {:.3}", means.join(" "), s.slope);
    }
    Ok(())
}
