//! Model artifacts: a JSON header plus little-endian f64 weights in a sibling `.bin`.

use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::baselines::{BhmModel, HmModel};
use crate::classifier::{LayerShape, SoftmaxMapModel};
use crate::error::{input, Result};
use crate::geometry::HingeSet;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub enum SavedModel {
    Contramap(SoftmaxMapModel),
    Hm(HmModel),
    Bhm(BhmModel),
}

impl SavedModel {
    pub fn kind(&self) -> &'static str {
        match self {
            SavedModel::Contramap(_) => "contramap",
            SavedModel::Hm(_) => "hm",
            SavedModel::Bhm(_) => "bhm",
        }
    }

    pub fn hinges(&self) -> &HingeSet {
        match self {
            SavedModel::Contramap(m) => m.hinges(),
            SavedModel::Hm(m) => &m.hinges,
            SavedModel::Bhm(m) => &m.hinges,
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    format_version: u32,
    kind: String,
    weights_file: String,
    weight_count: usize,
    /// `[rows, cols]` per layer (ContraMap only).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    layers: Vec<[usize; 2]>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    class_names: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    bound_history: Vec<f64>,
    hinges: HingeSet,
    /// Free-form record of how the model was produced; ignored on load.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    provenance: Option<serde_json::Value>,
}

fn weights_to_bytes(w: &[f64]) -> Vec<u8> {
    w.iter().flat_map(|v| v.to_le_bytes()).collect()
}

fn bytes_to_weights(b: &[u8]) -> Result<Vec<f64>> {
    if b.len() % 8 != 0 {
        return input("weight file length is not a multiple of 8 bytes");
    }
    Ok(b.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
}

/// Writes `path` (JSON) and the weights next to it with a `.bin` extension.
pub fn save_model(model: &SavedModel, path: &Path) -> Result<PathBuf> {
    save_model_with_provenance(model, path, None)
}

/// As [`save_model`], embedding `provenance` in the JSON header.
pub fn save_model_with_provenance(model: &SavedModel, path: &Path, provenance: Option<serde_json::Value>) -> Result<PathBuf> {
    let bin_path = path.with_extension("bin");
    let weights_file = bin_path.file_name().unwrap().to_string_lossy().into_owned();
    let mut header = Header {
        format_version: FORMAT_VERSION,
        kind: model.kind().into(),
        weights_file,
        weight_count: 0,
        layers: Vec::new(),
        class_names: Vec::new(),
        bound_history: Vec::new(),
        hinges: model.hinges().clone(),
        provenance,
    };
    let weights: Vec<f64> = match model {
        SavedModel::Contramap(m) => {
            header.layers = m.shapes().iter().map(|s| [s.rows, s.cols]).collect();
            header.class_names = m.class_names().to_vec();
            m.params().to_vec()
        }
        SavedModel::Hm(m) => m.w.clone(),
        SavedModel::Bhm(m) => {
            header.bound_history = m.bound_history.clone();
            let mut w = m.mean.as_slice().to_vec();
            w.extend_from_slice(m.covariance.as_slice());
            w.extend_from_slice(m.prior_mean.as_slice());
            w.extend_from_slice(m.prior_cov.as_slice());
            w
        }
    };
    header.weight_count = weights.len();
    std::fs::write(path, serde_json::to_string_pretty(&header)? + "\n")?;
    std::fs::write(&bin_path, weights_to_bytes(&weights))?;
    Ok(bin_path)
}

/// Loads a model, checking every stored shape against the hinge set.
pub fn load_model(path: &Path) -> Result<SavedModel> {
    let header: Header = serde_json::from_str(&std::fs::read_to_string(path)?)?;
    if header.format_version != FORMAT_VERSION {
        return input(format!("unsupported model format version {}", header.format_version));
    }
    let bin = path.parent().unwrap_or(Path::new(".")).join(&header.weights_file);
    let w = bytes_to_weights(&std::fs::read(&bin)?)?;
    if w.len() != header.weight_count {
        return input(format!("{} weights stored, header says {}", w.len(), header.weight_count));
    }
    let hinges = header.hinges;
    let width = hinges.feature_width();
    match header.kind.as_str() {
        "contramap" => {
            let shapes = header.layers.iter().map(|&[rows, cols]| LayerShape { rows, cols }).collect();
            Ok(SavedModel::Contramap(SoftmaxMapModel::from_parts(hinges, shapes, w, header.class_names)?))
        }
        "hm" => Ok(SavedModel::Hm(HmModel::new(w, hinges)?)),
        "bhm" => {
            let need = 2 * (width + width * width);
            if w.len() != need {
                return input(format!("a BHM with {width} features needs {need} stored values, found {}", w.len()));
            }
            let (mean, rest) = w.split_at(width);
            let (cov, rest) = rest.split_at(width * width);
            let (prior_mean, prior_cov) = rest.split_at(width);
            Ok(SavedModel::Bhm(BhmModel {
                mean: DVector::from_column_slice(mean),
                covariance: DMatrix::from_column_slice(width, width, cov),
                prior_mean: DVector::from_column_slice(prior_mean),
                prior_cov: DMatrix::from_column_slice(width, width, prior_cov),
                hinges,
                bound_history: header.bound_history,
            }))
        }
        other => input(format!("unknown model kind {other:?}")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::baselines::{fit_bhm, BhmPrior};
    use crate::datasets::{generate_toy, ToyKind};
    use crate::geometry::{grid_hinges, Points};

    fn hinges() -> HingeSet {
        HingeSet::new(Points::from_rows(2, &[[0.0, 0.0], [1.0, 0.5], [-1.0, 2.0]]).unwrap(), 0.7).unwrap()
    }

    #[test]
    fn contramap_round_trip_is_exact() {
        let mut m = SoftmaxMapModel::initialise(hinges(), 2, 1, 3).unwrap();
        m.params_mut()[0] = 0.1 + 0.2;
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("model.json");
        let bin = save_model(&SavedModel::Contramap(m.clone()), &p).unwrap();
        assert_eq!(bin, dir.path().join("model.bin"));
        assert_eq!(load_model(&p).unwrap(), SavedModel::Contramap(m.clone()));

        let q = dir.path().join("tagged.json");
        save_model_with_provenance(&SavedModel::Contramap(m.clone()), &q, Some(serde_json::json!({"digest": "ab"}))).unwrap();
        assert!(std::fs::read_to_string(&q).unwrap().contains("\"digest\": \"ab\""));
        assert_eq!(load_model(&q).unwrap(), SavedModel::Contramap(m));
    }

    #[test]
    fn hm_and_bhm_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let hm = HmModel::new(vec![0.5, -1.5, 2.0, 1e-300], hinges()).unwrap();
        let p = dir.path().join("hm.json");
        save_model(&SavedModel::Hm(hm.clone()), &p).unwrap();
        assert_eq!(load_model(&p).unwrap(), SavedModel::Hm(hm));

        let d = generate_toy(ToyKind::Ovals, 40, 0.0, 1).unwrap();
        let h = grid_hinges(&d.bounds, 1.5, 0.3).unwrap();
        let b = fit_bhm(&d, &h, &BhmPrior::default_for(&h), 3).unwrap();
        let p = dir.path().join("bhm.json");
        save_model(&SavedModel::Bhm(b.clone()), &p).unwrap();
        assert_eq!(load_model(&p).unwrap(), SavedModel::Bhm(b));
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("model.json");
        save_model(&SavedModel::Contramap(SoftmaxMapModel::zeros(hinges(), 2).unwrap()), &p).unwrap();
        std::fs::write(dir.path().join("model.bin"), weights_to_bytes(&[0.0; 5])).unwrap();
        assert!(matches!(load_model(&p), Err(crate::Error::Input(_))));
        let text = std::fs::read_to_string(&p).unwrap().replace("\"weight_count\": 12", "\"weight_count\": 5");
        std::fs::write(&p, text).unwrap();
        assert!(matches!(load_model(&p), Err(crate::Error::Input(_))));
    }
}
