//! Writes epochs and a fitted model to disk and reads them back unchanged.

use riemann_bci::features::{FeatureRecipe, Modality, Preprocess, Shrinkage};
use riemann_bci::io::synth::{generate_mi, MiSpec};
use riemann_bci::io::{read_epochs, read_model, write_epochs, write_model};
use riemann_bci::mdm::MdmModel;
use riemann_bci::spd::MeanConfig;

fn main() -> riemann_bci::Result<()> {
    let dir = std::env::temp_dir().join(format!("riemann-bci-roundtrip-{}", std::process::id()));
    std::fs::create_dir_all(&dir)?;
    let epochs_path = dir.join("mi.epochs");
    let model_path = dir.join("mi.model.json");

    let epochs = generate_mi(&MiSpec::diagonal(4, 2, 256, 10, 5))?;
    write_epochs(&epochs_path, &epochs, Some(Modality::Mi))?;
    let back = read_epochs(&epochs_path)?;
    println!("{} epochs written, {} read back", epochs.len(), back.len());

    let model = MdmModel::fit(&back, FeatureRecipe::mi(Shrinkage::Auto, Preprocess::none()), &MeanConfig::default())?;
    write_model(&model_path, &model)?;
    let restored = read_model(&model_path)?;
    println!("model identical after reload: {}", restored == model);
    println!("rewriting the epochs gives the same bytes: {}", {
        let again = dir.join("again.epochs");
        write_epochs(&again, &back, Some(Modality::Mi))?;
        std::fs::read(&again)? == std::fs::read(&epochs_path)?
    });
    std::fs::remove_dir_all(&dir)?;
    Ok(())
}
