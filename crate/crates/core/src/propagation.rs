//! Propagation of pairwise transforms into the middle section's frame.
//!
//! `pair_transforms[t]` maps section `t + 1` into section `t`. The global
//! transform of section `t` maps it into the middle section `m`:
//! for `t > m` it is the chain `M(t-1)`, `M(t-2)`, ..., `M(m)` applied in that
//! order, and for `t < m` it is the inverse of the chain that carries `m`
//! down to `t`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Affine2;
use crate::scalar::Scalar;

/// `floor(T / 2)`, 0-based.
pub fn select_middle(sections: usize) -> Result<usize> {
    if sections == 0 {
        return Err(Error::EmptySeries);
    }
    Ok(sections / 2)
}

pub fn propagate<T: Scalar>(pair_transforms: &[Affine2<T>], middle_index: usize) -> Result<Vec<Affine2<T>>> {
    let sections = pair_transforms.len() + 1;
    if middle_index >= sections {
        return Err(Error::IndexOutOfRange {
            index: middle_index,
            len: sections,
        });
    }
    let mut out = vec![Affine2::identity(); sections];

    // t > m: section t -> t-1 -> ... -> m
    for t in middle_index + 1..sections {
        out[t] = pair_transforms[t - 1].then(&out[t - 1]);
    }

    // t < m: (M(t) M(t+1) ... M(m-1))^-1, the product carrying m down to t
    let mut down = Affine2::identity();
    for t in (0..middle_index).rev() {
        down = down.then(&pair_transforms[t]);
        out[t] = down.invert()?;
    }
    Ok(out)
}

/// Per-pair record of how a pairwise transform was obtained.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct PairDiagnostics {
    /// Index `t` of the fixed section; the moving section is `t + 1`.
    pub pair: usize,
    /// Which stages contributed, e.g. `"stage1+stage2"`, `"stage2"`, `"identity"`.
    pub stage_used: String,
    pub stage1: Option<crate::features::Stage1Diagnostics>,
    pub stage1_error: Option<String>,
    pub stage1_transform: Option<Affine2<f64>>,
    pub stage2_error: Option<String>,
    pub stage2_initial_metric: Option<f64>,
    pub final_metric: Option<f64>,
    pub stage2_iterations: Option<usize>,
    /// Stage 1 failed and stage 2 started from identity.
    pub fallback: bool,
}

/// Working-resolution facts for one section.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SectionInfo {
    pub section_id: String,
    /// Original pixels per working pixel.
    pub downsample_factor: f64,
    pub working_width: usize,
    pub working_height: usize,
    /// Microns per working pixel.
    pub spacing_um: f64,
}

/// A registered series: pairwise transforms, the middle section and every
/// section's transform into the middle frame. Matrices are at working
/// resolution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesRegistration {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub case_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub method: Option<String>,
    pub section_ids: Vec<String>,
    pub middle_index: usize,
    pub pair_transforms: Vec<Affine2<f64>>,
    pub global_transforms: Vec<Affine2<f64>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub sections: Vec<SectionInfo>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub pair_diagnostics: Vec<PairDiagnostics>,
}

impl SeriesRegistration {
    pub fn len(&self) -> usize {
        self.section_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.section_ids.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let t = self.section_ids.len();
        if t == 0 {
            return Err(Error::EmptySeries);
        }
        if self.pair_transforms.len() != t - 1 || self.global_transforms.len() != t {
            return Err(Error::LengthMismatch {
                what: format!(
                    "{} sections need {} pair and {} global transforms, got {} and {}",
                    t,
                    t - 1,
                    t,
                    self.pair_transforms.len(),
                    self.global_transforms.len()
                ),
            });
        }
        if self.middle_index >= t {
            return Err(Error::IndexOutOfRange {
                index: self.middle_index,
                len: t,
            });
        }
        if self.global_transforms[self.middle_index].max_abs_diff(&Affine2::identity()) > 1e-12 {
            return Err(Error::InvalidValue(
                "middle section's global transform is not identity".into(),
            ));
        }
        if !self.sections.is_empty() && self.sections.len() != t {
            return Err(Error::LengthMismatch {
                what: format!("{} section infos for {} sections", self.sections.len(), t),
            });
        }
        Ok(())
    }
}

pub fn assemble_series(section_ids: Vec<String>, pair_transforms: Vec<Affine2<f64>>) -> Result<SeriesRegistration> {
    let middle_index = select_middle(section_ids.len())?;
    if pair_transforms.len() + 1 != section_ids.len() {
        return Err(Error::LengthMismatch {
            what: format!(
                "{} sections need {} pair transforms, got {}",
                section_ids.len(),
                section_ids.len() - 1,
                pair_transforms.len()
            ),
        });
    }
    let global_transforms = propagate(&pair_transforms, middle_index)?;
    Ok(SeriesRegistration {
        case_id: None,
        method: None,
        section_ids,
        middle_index,
        pair_transforms,
        global_transforms,
        sections: Vec::new(),
        pair_diagnostics: Vec::new(),
    })
}
