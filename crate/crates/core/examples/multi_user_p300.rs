//! Two subjects playing together: their trials are stacked into one
//! multi-user super-trial so a single covariance captures both.

use riemann_bci::features::{stack_subjects, FeatureRecipe, Preprocess, Shrinkage};
use riemann_bci::io::synth::{generate_p300, P300Spec, P300Subject, SubjectShape, TARGET};
use riemann_bci::mdm::{auc, MdmModel};
use riemann_bci::spd::MeanConfig;
use riemann_bci::dsp::Epoch;

fn pair(seed: u64, subjects: &[P300Subject]) -> riemann_bci::Result<Vec<Epoch>> {
    let per_subject = subjects
        .iter()
        .enumerate()
        .map(|(k, s)| {
            let spec = P300Spec { subject: s.clone(), snr: 0.1, n_targets: 40, n_non_targets: 200, seed: seed + 100 * k as u64 };
            Ok(generate_p300(&spec)?.0)
        })
        .collect::<riemann_bci::Result<Vec<_>>>()?;
    (0..per_subject[0].len())
        .map(|i| stack_subjects(&[per_subject[0][i].clone(), per_subject[1][i].clone()]))
        .collect()
}

fn main() -> riemann_bci::Result<()> {
    let subjects = [
        P300Subject::generate(SubjectShape::default(), 1)?,
        P300Subject::generate(SubjectShape::default(), 2)?,
    ];
    let train = pair(10, &subjects)?;
    let test = pair(20, &subjects)?;
    let recipe = FeatureRecipe::mu_p300_from_training(&train, 2, TARGET, Shrinkage::Auto, Preprocess::none())?;
    let model = MdmModel::fit(&train, recipe, &MeanConfig::default())?;
    let scores = test
        .iter()
        .map(|e| Ok((model.p300_score(e)?, e.label() == Some(TARGET))))
        .collect::<riemann_bci::Result<Vec<_>>>()?;
    println!("multi-user feature dim {}, AUC {:.3}", model.dim(), auc(&scores)?);
    Ok(())
}
