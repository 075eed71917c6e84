//! Motor-imagery style classification: class-specific spatial covariances,
//! 8-30 Hz band-pass, MDM on covariance matrices.

use riemann_bci::dsp::BandSpec;
use riemann_bci::features::{FeatureRecipe, Preprocess, Shrinkage};
use riemann_bci::io::synth::{generate_mi, MiSpec};
use riemann_bci::mdm::MdmModel;
use riemann_bci::spd::MeanConfig;

fn main() -> riemann_bci::Result<()> {
    let mut train = MiSpec::diagonal(8, 4, 512, 40, 1);
    train.fs = 256.0;
    let test = MiSpec { seed: 2, ..train.clone() };
    let (train, test) = (generate_mi(&train)?, generate_mi(&test)?);

    for (name, pre) in [("raw", Preprocess::none()), ("8-30 Hz", Preprocess::band(BandSpec::motor_imagery()))] {
        let recipe = FeatureRecipe::mi(Shrinkage::Auto, pre);
        let model = MdmModel::fit(&train, recipe, &MeanConfig::default())?;
        let correct = test
            .iter()
            .filter(|e| model.predict(e).ok() == e.label())
            .count();
        println!(
            "{name:>8}: {} classes, held-out accuracy {:.1}% ({correct}/{})",
            model.class_ids().len(),
            100.0 * correct as f64 / test.len() as f64,
            test.len()
        );
    }
    Ok(())
}
