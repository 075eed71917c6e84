//! SSVEP classification with a filter bank and block-diagonal covariances;
//! accuracy grows with segment length.

use riemann_bci::features::{FeatureRecipe, Preprocess, Shrinkage, SsvepBank};
use riemann_bci::io::synth::{generate_ssvep, SsvepSpec};
use riemann_bci::mdm::MdmModel;
use riemann_bci::spd::MeanConfig;

fn main() -> riemann_bci::Result<()> {
    for duration in 1..=6 {
        let mut correct = 0;
        let mut total = 0;
        for seed in 0..10 {
            let train = generate_ssvep(&SsvepSpec::standard(duration as f64, 8, 2 * seed))?;
            let test = generate_ssvep(&SsvepSpec::standard(duration as f64, 8, 2 * seed + 1))?;
            let bank = SsvepBank::new(vec![12.0, 15.0, 20.0]);
            let recipe = FeatureRecipe::ssvep(bank, Shrinkage::Auto, Preprocess::none());
            let model = MdmModel::fit(&train, recipe, &MeanConfig::default())?;
            correct += test.iter().filter(|e| model.predict(e).ok() == e.label()).count();
            total += test.len();
        }
        println!("{duration} s: accuracy {:.1}%", 100.0 * correct as f64 / total as f64);
    }
    Ok(())
}
