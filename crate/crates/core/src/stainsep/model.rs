use serde::{Deserialize, Serialize};

use super::solver::norm;
use super::StainError;

pub const SCHEMA_VERSION: u32 = 1;

/// Per-channel lαβ statistics of a template image.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TemplateStats {
    pub mean: [f64; 3],
    pub std: [f64; 3],
}

/// Two-stain color appearance model in optical-density space.
///
/// `stain_matrix[c][k]` is the OD of channel `c` (R, G, B) for stain `k`
/// (0 = hematoxylin, 1 = eosin). Columns are unit norm and non-negative.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StainModel {
    pub stain_matrix: [[f64; 2]; 3],
    pub max_concentrations: [f64; 2],
    pub background_intensity: f64,
}

impl StainModel {
    pub fn column(&self, k: usize) -> [f64; 3] {
        [self.stain_matrix[0][k], self.stain_matrix[1][k], self.stain_matrix[2][k]]
    }

    pub fn hematoxylin(&self) -> [f64; 3] {
        self.column(0)
    }

    pub fn eosin(&self) -> [f64; 3] {
        self.column(1)
    }

    /// Builds a model from two stain vectors, normalizing them and swapping
    /// them if needed so that hematoxylin has the larger red OD component.
    pub fn from_columns(a: [f64; 3], b: [f64; 3], max_concentrations: [f64; 2], background_intensity: f64) -> Self {
        let unit = |v: [f64; 3]| {
            let n = norm(v);
            v.map(|x| x / n)
        };
        let (a, b) = (unit(a), unit(b));
        let (h, e, conc) = if b[0] > a[0] {
            (b, a, [max_concentrations[1], max_concentrations[0]])
        } else {
            (a, b, max_concentrations)
        };
        Self {
            stain_matrix: [[h[0], e[0]], [h[1], e[1]], [h[2], e[2]]],
            max_concentrations: conc,
            background_intensity,
        }
    }

    pub fn validate(&self) -> Result<(), StainError> {
        for k in 0..2 {
            let col = self.column(k);
            if col.iter().any(|v| !v.is_finite() || *v < 0.0) {
                return Err(StainError::InvalidModel(format!("column {k} has negative or non-finite entries")));
            }
            if (norm(col) - 1.0).abs() > 1e-6 {
                return Err(StainError::InvalidModel(format!("column {k} is not unit norm")));
            }
        }
        if self.hematoxylin()[0] < self.eosin()[0] {
            return Err(StainError::InvalidModel("hematoxylin must have the larger red OD".into()));
        }
        if self.max_concentrations.iter().any(|c| !(*c > 0.0) || !c.is_finite()) {
            return Err(StainError::InvalidModel("max concentrations must be positive".into()));
        }
        if !(self.background_intensity > 0.0) {
            return Err(StainError::InvalidModel("background intensity must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NormalizerMethod {
    Reinhard,
    Macenko,
    Vahadane,
}

impl NormalizerMethod {
    pub fn name(&self) -> &'static str {
        match self {
            NormalizerMethod::Reinhard => "reinhard",
            NormalizerMethod::Macenko => "macenko",
            NormalizerMethod::Vahadane => "vahadane",
        }
    }
}

/// The JSON document written by `fit` and read by `normalize`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelDocument {
    pub schema_version: u32,
    pub method: NormalizerMethod,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub template_stats: Option<TemplateStats>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stain_model: Option<StainModel>,
}

impl ModelDocument {
    pub fn reinhard(stats: TemplateStats) -> Self {
        Self { schema_version: SCHEMA_VERSION, method: NormalizerMethod::Reinhard, template_stats: Some(stats), stain_model: None }
    }

    pub fn stain(method: NormalizerMethod, model: StainModel) -> Self {
        Self { schema_version: SCHEMA_VERSION, method, template_stats: None, stain_model: Some(model) }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("model document serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self, StainError> {
        let doc: Self = serde_json::from_str(text).map_err(|e| StainError::Document(e.to_string()))?;
        if doc.schema_version != SCHEMA_VERSION {
            return Err(StainError::Document(format!("unsupported schema_version {}", doc.schema_version)));
        }
        match (doc.method, &doc.template_stats, &doc.stain_model) {
            (NormalizerMethod::Reinhard, Some(_), None) => {}
            (NormalizerMethod::Macenko | NormalizerMethod::Vahadane, None, Some(m)) => m.validate()?,
            _ => return Err(StainError::Document(format!("fields do not match method {}", doc.method.name()))),
        }
        Ok(doc)
    }
}
