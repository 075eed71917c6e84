//! P300 detection with super-trial covariances, scored by AUC across SNRs.

use riemann_bci::features::{FeatureRecipe, Preprocess, Shrinkage};
use riemann_bci::io::synth::{generate_p300, P300Spec, P300Subject, SubjectShape, TARGET};
use riemann_bci::mdm::{auc, MdmModel};
use riemann_bci::spd::MeanConfig;

fn main() -> riemann_bci::Result<()> {
    let subject = P300Subject::generate(SubjectShape::default(), 7)?;
    for snr in [0.0, 0.05, 0.1, 0.2] {
        let spec = |seed| P300Spec { subject: subject.clone(), snr, n_targets: 40, n_non_targets: 200, seed };
        let (train, _) = generate_p300(&spec(1))?;
        let (test, _) = generate_p300(&spec(2))?;
        let recipe = FeatureRecipe::p300_from_training(&train, TARGET, Shrinkage::Auto, Preprocess::none())?;
        let model = MdmModel::fit(&train, recipe, &MeanConfig::default())?;
        let scores = test
            .iter()
            .map(|e| Ok((model.p300_score(e)?, e.label() == Some(TARGET))))
            .collect::<riemann_bci::Result<Vec<_>>>()?;
        println!("SNR {snr:<5} feature dim {:>2}  AUC {:.3}", model.dim(), auc(&scores)?);
    }
    Ok(())
}
