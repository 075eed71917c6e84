//! Model document: pretty-printed JSON with the feature recipe, class ids,
//! counts and class means as row-major `f64` arrays. Fused classifiers add
//! their individual state, `n_rep` and `ramp`.

use std::fs;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::epoch_file::write_atomic;
use crate::adaptive::FusedClassifier;
use crate::dsp::BandSpec;
use crate::error::{Error, Result};
use crate::features::{FeatureRecipe, Modality, Preprocess, Prototype, Shrinkage, SsvepBank};
use crate::mdm::MdmModel;
use crate::spd::SpdMatrix;

pub const MODEL_FORMAT: &str = "riemann-bci-model";
pub const MODEL_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PrototypeDoc {
    class: u32,
    count: usize,
    n_channels: usize,
    n_samples: usize,
    data: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RecipeDoc {
    modality: Modality,
    shrinkage: Shrinkage,
    target_class: Option<u32>,
    n_subjects: Option<usize>,
    ssvep: Option<SsvepBank>,
    band: Option<BandSpec>,
    decimate_to: Option<f64>,
    prototypes: Vec<PrototypeDoc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FusedDoc {
    n_rep: usize,
    ramp: usize,
    counts: Vec<usize>,
    means: Vec<Option<Vec<f64>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelDoc {
    format: String,
    version: u32,
    recipe: RecipeDoc,
    dim: usize,
    class_ids: Vec<u32>,
    counts: Vec<usize>,
    means: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    fused: Option<FusedDoc>,
}

fn row_major(m: &DMatrix<f64>) -> Vec<f64> {
    m.transpose().as_slice().to_vec()
}

fn recipe_doc(r: &FeatureRecipe) -> RecipeDoc {
    RecipeDoc {
        modality: r.modality,
        shrinkage: r.shrinkage,
        target_class: r.target_class,
        n_subjects: r.n_subjects,
        ssvep: r.ssvep.clone(),
        band: r.preprocess.band,
        decimate_to: r.preprocess.decimate_to,
        prototypes: r
            .prototypes
            .iter()
            .map(|p| PrototypeDoc {
                class: p.class,
                count: p.count,
                n_channels: p.n_channels(),
                n_samples: p.n_samples(),
                data: row_major(&p.data),
            })
            .collect(),
    }
}

fn recipe_from_doc(d: RecipeDoc) -> Result<FeatureRecipe> {
    let prototypes = d
        .prototypes
        .into_iter()
        .map(|p| {
            if p.data.len() != p.n_channels * p.n_samples {
                return Err(Error::parse(
                    "recipe.prototypes",
                    format!("class {} has {} values for {}x{}", p.class, p.data.len(), p.n_channels, p.n_samples),
                ));
            }
            Ok(Prototype::new(
                p.class,
                p.count,
                DMatrix::from_row_slice(p.n_channels, p.n_samples, &p.data),
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    let recipe = FeatureRecipe {
        modality: d.modality,
        prototypes,
        ssvep: d.ssvep,
        shrinkage: d.shrinkage,
        n_subjects: d.n_subjects,
        target_class: d.target_class,
        preprocess: Preprocess { band: d.band, decimate_to: d.decimate_to },
    };
    recipe
        .validate()
        .map_err(|e| Error::parse("recipe", e.to_string()))?;
    Ok(recipe)
}

fn spd_from(values: &[f64], dim: usize, field: &str) -> Result<SpdMatrix> {
    if values.len() != dim * dim {
        return Err(Error::parse(field, format!("{} values for a {dim}x{dim} matrix", values.len())));
    }
    SpdMatrix::from_row_major(dim, values).map_err(|e| Error::parse(field, e.to_string()))
}

fn model_doc(m: &MdmModel) -> ModelDoc {
    ModelDoc {
        format: MODEL_FORMAT.into(),
        version: MODEL_VERSION,
        recipe: recipe_doc(m.recipe()),
        dim: m.dim(),
        class_ids: m.class_ids().to_vec(),
        counts: m.counts().to_vec(),
        means: m.means().iter().map(SpdMatrix::to_row_major).collect(),
        fused: None,
    }
}

fn model_from_doc(d: &ModelDoc) -> Result<MdmModel> {
    if d.format != MODEL_FORMAT {
        return Err(Error::parse("format", format!("expected `{MODEL_FORMAT}`, got `{}`", d.format)));
    }
    if d.version != MODEL_VERSION {
        return Err(Error::parse("version", format!("unsupported version {}", d.version)));
    }
    let means = d
        .means
        .iter()
        .map(|v| spd_from(v, d.dim, "means"))
        .collect::<Result<Vec<_>>>()?;
    let recipe = recipe_from_doc(d.recipe.clone())?;
    MdmModel::from_means(d.class_ids.clone(), means, d.counts.clone(), recipe)
        .map_err(|e| Error::parse("class_ids", e.to_string()))
}

fn to_text(doc: &ModelDoc) -> Result<String> {
    let mut s = serde_json::to_string_pretty(doc)?;
    s.push('\n');
    Ok(s)
}

fn parse_doc(text: &str) -> Result<ModelDoc> {
    serde_json::from_str(text).map_err(|e| Error::parse("model", e.to_string()))
}

pub fn model_to_string(m: &MdmModel) -> Result<String> {
    to_text(&model_doc(m))
}

pub fn model_from_str(text: &str) -> Result<MdmModel> {
    let doc = parse_doc(text)?;
    if doc.fused.is_some() {
        return Err(Error::parse("fused", "document holds a fused classifier"));
    }
    model_from_doc(&doc)
}

pub fn write_model(path: &Path, m: &MdmModel) -> Result<()> {
    write_atomic(path, model_to_string(m)?.as_bytes())
}

pub fn read_model(path: &Path) -> Result<MdmModel> {
    model_from_str(&fs::read_to_string(path)?)
}

pub fn fused_to_string(fc: &FusedClassifier) -> Result<String> {
    let mut doc = model_doc(fc.generic());
    doc.fused = Some(FusedDoc {
        n_rep: fc.n_rep(),
        ramp: fc.ramp(),
        counts: fc.counts().to_vec(),
        means: fc
            .individual_means()
            .iter()
            .map(|m| m.as_ref().map(SpdMatrix::to_row_major))
            .collect(),
    });
    to_text(&doc)
}

pub fn fused_from_str(text: &str) -> Result<FusedClassifier> {
    let doc = parse_doc(text)?;
    let generic = model_from_doc(&doc)?;
    let fused = doc
        .fused
        .as_ref()
        .ok_or_else(|| Error::parse("fused", "missing fused state"))?;
    let individual = fused
        .means
        .iter()
        .map(|m| m.as_deref().map(|v| spd_from(v, doc.dim, "fused.means")).transpose())
        .collect::<Result<Vec<_>>>()?;
    FusedClassifier::from_parts(generic, individual, fused.counts.clone(), fused.n_rep, fused.ramp)
        .map_err(|e| Error::parse("fused", e.to_string()))
}

pub fn write_fused(path: &Path, fc: &FusedClassifier) -> Result<()> {
    write_atomic(path, fused_to_string(fc)?.as_bytes())
}

pub fn read_fused(path: &Path) -> Result<FusedClassifier> {
    fused_from_str(&fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::io::synth::{generate_p300, P300Spec};
    use crate::spd::{random_spd, MeanConfig};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn p300_model() -> MdmModel {
        let (epochs, _) = generate_p300(&P300Spec::standard(10, 4).unwrap()).unwrap();
        let recipe = FeatureRecipe::p300_from_training(&epochs, 1, Shrinkage::Auto, Preprocess::band(BandSpec::erp()))
            .unwrap();
        MdmModel::fit(&epochs, recipe, &MeanConfig::default()).unwrap()
    }

    #[test]
    fn model_round_trip_is_exact() {
        let m = p300_model();
        let text = model_to_string(&m).unwrap();
        let back = model_from_str(&text).unwrap();
        assert_eq!(back, m);
        assert_eq!(model_to_string(&back).unwrap(), text);
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(v["class_ids"], serde_json::json!([0, 1]));
        assert_eq!(v["recipe"]["modality"], "p300");
        assert_eq!(v["means"][0].as_array().unwrap().len(), 16 * 16);
    }

    #[test]
    fn fused_round_trip_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let m = p300_model();
        let mut fc = FusedClassifier::new(m, 40).unwrap();
        fc.absorb_feature(&random_spd(&mut rng, 16, 10.0), 1).unwrap();
        fc.complete_repetition();
        let text = fused_to_string(&fc).unwrap();
        let back = fused_from_str(&text).unwrap();
        assert_eq!(back, fc);
        assert!(model_from_str(&text).is_err());
    }

    #[test]
    fn corrupt_documents_name_the_field() {
        let text = model_to_string(&p300_model()).unwrap();
        let mut v: serde_json::Value = serde_json::from_str(&text).unwrap();
        v["means"][0].as_array_mut().unwrap().pop();
        match model_from_str(&v.to_string()) {
            Err(Error::Parse { field, .. }) => assert_eq!(field, "means"),
            other => panic!("{other:?}"),
        }
        let mut v: serde_json::Value = serde_json::from_str(&text).unwrap();
        v["format"] = "other".into();
        assert!(matches!(model_from_str(&v.to_string()), Err(Error::Parse { field, .. }) if field == "format"));
    }
}
