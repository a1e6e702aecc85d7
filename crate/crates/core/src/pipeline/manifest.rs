use std::collections::HashSet;
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum StainLabel {
    C4d,
    #[serde(rename = "H&E")]
    HE,
    CD45,
    JMS,
    PAS,
    EVG,
    PV,
    MSB,
    #[serde(rename = "other")]
    Other,
}

impl StainLabel {
    pub const ALL: [StainLabel; 9] = [
        StainLabel::C4d,
        StainLabel::HE,
        StainLabel::CD45,
        StainLabel::JMS,
        StainLabel::PAS,
        StainLabel::EVG,
        StainLabel::PV,
        StainLabel::MSB,
        StainLabel::Other,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            StainLabel::C4d => "C4d",
            StainLabel::HE => "H&E",
            StainLabel::CD45 => "CD45",
            StainLabel::JMS => "JMS",
            StainLabel::PAS => "PAS",
            StainLabel::EVG => "EVG",
            StainLabel::PV => "PV",
            StainLabel::MSB => "MSB",
            StainLabel::Other => "other",
        }
    }
}

impl fmt::Display for StainLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

fn default_spacing() -> f64 {
    1.0
}

fn default_stain() -> StainLabel {
    StainLabel::Other
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SectionEntry {
    pub section_id: String,
    /// Relative paths are resolved against the manifest's directory.
    pub image_path: PathBuf,
    #[serde(default = "default_stain", alias = "stain")]
    pub stain_label: StainLabel,
    /// Microns per pixel of the raw image.
    #[serde(default = "default_spacing")]
    pub spacing_um: f64,
}

/// Sections of one case in physical sectioning order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesManifest {
    pub case_id: String,
    pub sections: Vec<SectionEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub annotations_path: Option<PathBuf>,
}

impl SeriesManifest {
    pub fn section_ids(&self) -> Vec<String> {
        self.sections.iter().map(|s| s.section_id.clone()).collect()
    }

    fn validate(&self, source_name: &str) -> Result<()> {
        let parse = |location: String, message: String| Error::Parse {
            source_name: source_name.to_string(),
            location,
            message,
        };
        if self.sections.is_empty() {
            return Err(parse("sections".into(), "at least one section is required".into()));
        }
        let mut seen = HashSet::new();
        for (i, s) in self.sections.iter().enumerate() {
            if !seen.insert(s.section_id.as_str()) {
                return Err(parse(
                    format!("sections[{i}].section_id"),
                    format!("duplicate section_id {:?}", s.section_id),
                ));
            }
            if !(s.spacing_um > 0.0 && s.spacing_um.is_finite()) {
                return Err(parse(
                    format!("sections[{i}].spacing_um"),
                    format!("spacing must be positive, got {}", s.spacing_um),
                ));
            }
        }
        Ok(())
    }
}

/// Parses and validates a manifest, resolving paths and checking that every
/// image exists and has a readable header.
pub fn load_manifest(path: &Path) -> Result<SeriesManifest> {
    let text = std::fs::read_to_string(path)?;
    let source_name = path.display().to_string();
    let mut manifest: SeriesManifest = serde_json::from_str(&text).map_err(|e| Error::Parse {
        source_name: source_name.clone(),
        location: format!("line {} column {}", e.line(), e.column()),
        message: e.to_string(),
    })?;
    manifest.validate(&source_name)?;

    let base = path.parent().unwrap_or(Path::new("."));
    for s in &mut manifest.sections {
        if s.image_path.is_relative() {
            s.image_path = base.join(&s.image_path);
        }
        if !s.image_path.is_file() {
            return Err(Error::MissingImage(s.image_path.clone()));
        }
        image::ImageReader::open(&s.image_path)
            .and_then(|r| r.with_guessed_format())
            .map_err(|e| Error::Decode {
                path: s.image_path.clone(),
                message: e.to_string(),
            })?
            .into_dimensions()
            .map_err(|e| Error::Decode {
                path: s.image_path.clone(),
                message: e.to_string(),
            })?;
    }
    if let Some(a) = &mut manifest.annotations_path {
        if a.is_relative() {
            *a = base.join(&*a);
        }
    }
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;
    use image::{GrayImage, Luma};

    fn write_images(dir: &Path, n: usize) {
        for i in 0..n {
            GrayImage::from_pixel(8, 8, Luma([i as u8]))
                .save(dir.join(format!("s{i}.png")))
                .unwrap();
        }
    }

    fn manifest_json(ids: &[&str]) -> String {
        let sections: Vec<String> = ids
            .iter()
            .enumerate()
            .map(|(i, id)| {
                format!(r#"{{"section_id": "{id}", "image_path": "s{i}.png", "stain_label": "H&E", "spacing_um": 0.5}}"#)
            })
            .collect();
        format!(r#"{{"case_id": "c1", "sections": [{}]}}"#, sections.join(","))
    }

    #[test]
    fn loads_eight_sections_in_order() {
        let dir = tempfile::tempdir().unwrap();
        write_images(dir.path(), 8);
        let ids = ["a", "b", "c", "d", "e", "f", "g", "h"];
        let p = dir.path().join("m.json");
        std::fs::write(&p, manifest_json(&ids)).unwrap();
        let m = load_manifest(&p).unwrap();
        assert_eq!(m.section_ids(), ids.map(String::from).to_vec());
        assert_eq!(m.sections[0].stain_label, StainLabel::HE);
        assert!(m.sections[3].image_path.is_absolute() || m.sections[3].image_path.starts_with(dir.path()));
    }

    #[test]
    fn duplicate_id_is_named() {
        let dir = tempfile::tempdir().unwrap();
        write_images(dir.path(), 2);
        let p = dir.path().join("m.json");
        std::fs::write(&p, manifest_json(&["x", "x"])).unwrap();
        match load_manifest(&p) {
            Err(Error::Parse { message, .. }) => assert!(message.contains("\"x\""), "{message}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn missing_image() {
        let dir = tempfile::tempdir().unwrap();
        write_images(dir.path(), 1);
        let p = dir.path().join("m.json");
        std::fs::write(&p, manifest_json(&["a", "b"])).unwrap();
        assert!(matches!(load_manifest(&p), Err(Error::MissingImage(_))));
    }

    #[test]
    fn malformed_json_has_location() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.json");
        std::fs::write(&p, "{\"case_id\": 3}").unwrap();
        assert!(matches!(load_manifest(&p), Err(Error::Parse { .. })));
    }

    #[test]
    fn stain_names_round_trip() {
        for s in StainLabel::ALL {
            let j = serde_json::to_string(&s).unwrap();
            assert_eq!(j, format!("\"{}\"", s.as_str()));
            assert_eq!(serde_json::from_str::<StainLabel>(&j).unwrap(), s);
        }
    }
}
