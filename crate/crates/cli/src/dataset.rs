//! JSON pair dataset: two rolling-shutter frames, their pixel
//! correspondences and one averaged gyroscope reading per frame.

use std::fs;
use std::path::Path;

use nalgebra::{Matrix3, Vector3};
use rsrp_core::geometry::{Correspondence, RelativePose, Rotation};
use rsrp_core::synth::{correspondences_from_pixels, Intrinsics, PixelPair, Scene};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const MIN_CORRESPONDENCES: usize = 5;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse { line: usize, column: usize, message: String },
    #[error("invalid dataset: {0}")]
    Validation(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntrinsicsJson {
    pub focal_px: f64,
    pub principal_point_px: [f64; 2],
    pub image_size_px: [f64; 2],
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PixelPairJson {
    pub pixel_i: [f64; 2],
    pub pixel_j: [f64; 2],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroundTruthJson {
    /// Row-major.
    pub rotation_matrix: [[f64; 3]; 3],
    pub translation: [f64; 3],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PairDataset {
    pub intrinsics: IntrinsicsJson,
    pub readout_s_per_row: f64,
    pub gyro_i_rad_s: [f64; 3],
    pub gyro_j_rad_s: [f64; 3],
    pub correspondences: Vec<PixelPairJson>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ground_truth: Option<GroundTruthJson>,
}

impl PairDataset {
    pub fn from_json(text: &str) -> Result<Self, DatasetError> {
        let ds: PairDataset = serde_json::from_str(text)
            .map_err(|e| DatasetError::Parse { line: e.line(), column: e.column(), message: e.to_string() })?;
        ds.validate()?;
        Ok(ds)
    }

    pub fn load(path: &Path) -> Result<Self, DatasetError> {
        let text = fs::read_to_string(path).map_err(|source| DatasetError::Io { path: path.display().to_string(), source })?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("dataset serializes")
    }

    pub fn save(&self, path: &Path) -> Result<(), DatasetError> {
        fs::write(path, self.to_json() + "\n").map_err(|source| DatasetError::Io { path: path.display().to_string(), source })
    }

    pub fn validate(&self) -> Result<(), DatasetError> {
        let bad = |m: String| Err(DatasetError::Validation(m));
        let intr = &self.intrinsics;
        let finite = |v: &[f64]| v.iter().all(|x| x.is_finite());
        if !(intr.focal_px.is_finite() && intr.focal_px > 0.0) {
            return bad(format!("intrinsics.focal_px must be positive, got {}", intr.focal_px));
        }
        if !finite(&intr.principal_point_px) || intr.image_size_px.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return bad("intrinsics.principal_point_px and image_size_px must be finite, sizes positive".into());
        }
        if !(self.readout_s_per_row.is_finite() && self.readout_s_per_row > 0.0) {
            return bad(format!("readout_s_per_row must be positive, got {}", self.readout_s_per_row));
        }
        if !finite(&self.gyro_i_rad_s) || !finite(&self.gyro_j_rad_s) {
            return bad("gyroscope readings must be finite".into());
        }
        if self.correspondences.len() < MIN_CORRESPONDENCES {
            return bad(format!(
                "need at least {MIN_CORRESPONDENCES} correspondences, got {}",
                self.correspondences.len()
            ));
        }
        let intrinsics = self.intrinsics();
        for (k, c) in self.correspondences.iter().enumerate() {
            for (name, p) in [("pixel_i", c.pixel_i), ("pixel_j", c.pixel_j)] {
                if !intrinsics.contains(p) {
                    return bad(format!("correspondences[{k}].{name} = {p:?} is outside the image"));
                }
            }
        }
        if let Some(gt) = &self.ground_truth {
            self.truth_from(gt)?;
        }
        Ok(())
    }

    pub fn intrinsics(&self) -> Intrinsics {
        Intrinsics {
            focal: self.intrinsics.focal_px,
            principal_point: self.intrinsics.principal_point_px,
            image_size: self.intrinsics.image_size_px,
        }
    }

    pub fn pixels(&self) -> Vec<PixelPair> {
        self.correspondences.iter().map(|c| PixelPair { i: c.pixel_i, j: c.pixel_j }).collect()
    }

    pub fn correspondences(&self) -> Result<Vec<Correspondence>, DatasetError> {
        let gyro = [Vector3::from(self.gyro_i_rad_s), Vector3::from(self.gyro_j_rad_s)];
        correspondences_from_pixels(&self.pixels(), &self.intrinsics(), self.readout_s_per_row, gyro)
            .map_err(|e| DatasetError::Validation(e.to_string()))
    }

    fn truth_from(&self, gt: &GroundTruthJson) -> Result<RelativePose, DatasetError> {
        let m = Matrix3::from_fn(|r, c| gt.rotation_matrix[r][c]);
        let rotation = Rotation::try_from_matrix(m).map_err(|e| DatasetError::Validation(format!("ground_truth: {e}")))?;
        RelativePose::from_direction(rotation, Vector3::from(gt.translation))
            .map_err(|e| DatasetError::Validation(format!("ground_truth: {e}")))
    }

    pub fn ground_truth(&self) -> Option<RelativePose> {
        self.ground_truth.as_ref().and_then(|gt| self.truth_from(gt).ok())
    }

    /// Dataset carrying a synthetic scene's measurements and true pose.
    pub fn from_scene(scene: &Scene) -> Self {
        let r = scene.truth.pose.rotation.matrix();
        PairDataset {
            intrinsics: IntrinsicsJson {
                focal_px: scene.intrinsics.focal,
                principal_point_px: scene.intrinsics.principal_point,
                image_size_px: scene.intrinsics.image_size,
            },
            readout_s_per_row: scene.readout,
            gyro_i_rad_s: scene.gyro[0].into(),
            gyro_j_rad_s: scene.gyro[1].into(),
            correspondences: scene.pixels.iter().map(|p| PixelPairJson { pixel_i: p.i, pixel_j: p.j }).collect(),
            ground_truth: Some(GroundTruthJson {
                rotation_matrix: [0, 1, 2].map(|row| [0, 1, 2].map(|col| r[(row, col)])),
                translation: scene.truth.pose.translation.into(),
            }),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal_json(n: usize) -> String {
        let corrs: Vec<String> = (0..n)
            .map(|k| format!(r#"{{"pixel_i": [{}, 100.5], "pixel_j": [{}, 120.25]}}"#, 100 + 50 * k, 110 + 50 * k))
            .collect();
        format!(
            r#"{{
  "intrinsics": {{"focal_px": 640, "principal_point_px": [960, 540], "image_size_px": [1920, 1080]}},
  "readout_s_per_row": 6e-5,
  "gyro_i_rad_s": [0.1, -0.2, 0.3],
  "gyro_j_rad_s": [0.0, 0.5, 0.0],
  "correspondences": [{}]
}}"#,
            corrs.join(", ")
        )
    }

    #[test]
    fn minimal_file_parses() {
        let ds = PairDataset::from_json(&minimal_json(5)).unwrap();
        assert_eq!(ds.correspondences.len(), 5);
        let corrs = ds.correspondences().unwrap();
        assert_eq!(corrs[0].obs_i.row, 100.5);
        assert!((corrs[0].obs_j.w_scaled.y - 0.5 * 6e-5).abs() < 1e-18);
        assert!(ds.ground_truth().is_none());
    }

    #[test]
    fn four_correspondences_are_rejected() {
        assert!(matches!(PairDataset::from_json(&minimal_json(4)), Err(DatasetError::Validation(_))));
    }

    #[test]
    fn parse_errors_carry_position() {
        let text = minimal_json(5).replace("\"readout_s_per_row\": 6e-5", "\"readout_s_per_row\": \"fast\"");
        match PairDataset::from_json(&text) {
            Err(DatasetError::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn out_of_image_pixel_is_rejected() {
        let text = minimal_json(5).replace("[100, 100.5]", "[-3, 100.5]");
        let err = PairDataset::from_json(&text).unwrap_err();
        assert!(err.to_string().contains("correspondences[0].pixel_i"), "{err}");
    }

    #[test]
    fn json_round_trip_is_lossless() {
        let mut ds = PairDataset::from_json(&minimal_json(6)).unwrap();
        ds.readout_s_per_row = 1.0 / 3.0 * 1e-4;
        ds.gyro_i_rad_s = [0.1 + 0.2, std::f64::consts::PI, -1e-300];
        ds.correspondences[2].pixel_j = [1919.999_999_999_8, 0.000_000_000_000_1];
        let back = PairDataset::from_json(&ds.to_json()).unwrap();
        assert_eq!(back, ds);
    }

    proptest::proptest! {
        #[test]
        fn arbitrary_finite_values_round_trip(
            px in proptest::array::uniform4(0.0f64..1080.0),
            gyro in proptest::array::uniform3(-1e3f64..1e3),
            readout in 1e-9f64..1e-3,
        ) {
            let mut ds = PairDataset::from_json(&minimal_json(5)).unwrap();
            ds.correspondences[1] = PixelPairJson { pixel_i: [px[0], px[1]], pixel_j: [px[2], px[3]] };
            ds.gyro_j_rad_s = gyro;
            ds.readout_s_per_row = readout;
            proptest::prop_assert_eq!(PairDataset::from_json(&ds.to_json()).unwrap(), ds);
        }
    }
}
