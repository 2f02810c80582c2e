use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{AnalyticSpace, FiniteSpace, Interval, Point, Space};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SpaceKind {
    Finite,
    Analytic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverrideEntry {
    pub from: String,
    pub to: String,
    pub d: f64,
}

impl OverrideEntry {
    pub fn new(from: impl Into<String>, to: impl Into<String>, d: f64) -> Self {
        OverrideEntry {
            from: from.into(),
            to: to.into(),
            d,
        }
    }
}

/// On-disk space definition (JSON, UTF-8).
///
/// `continuum` is optional for finite spaces: unlabeled values inside it are
/// members of the space, measured by `default`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpaceFile {
    pub kind: SpaceKind,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub points: Vec<Point>,
    #[serde(default)]
    pub default: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub overrides: Vec<OverrideEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub continuum: Option<Interval>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub domain: Option<Interval>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub forward: Option<String>,
    #[serde(default)]
    pub claimed_s: Option<f64>,
}

impl SpaceFile {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("space file serializes")
    }

    pub fn build(&self) -> Result<Space> {
        match self.kind {
            SpaceKind::Finite => {
                if self.domain.is_some() || self.forward.is_some() {
                    return Err(Error::InvalidSpace(
                        "finite spaces take `points`/`default`/`overrides`, not `domain`/`forward`"
                            .into(),
                    ));
                }
                let continuum = self
                    .continuum
                    .map(|c| Interval::new(c.lo, c.hi))
                    .transpose()?;
                Ok(FiniteSpace::new(
                    self.points.clone(),
                    self.default.as_deref(),
                    self.overrides.clone(),
                    continuum,
                    self.claimed_s,
                )?
                .into())
            }
            SpaceKind::Analytic => {
                if !self.points.is_empty() || !self.overrides.is_empty() {
                    return Err(Error::InvalidSpace(
                        "analytic spaces take `domain`/`forward`, not `points`/`overrides`".into(),
                    ));
                }
                let domain = self
                    .domain
                    .ok_or_else(|| Error::InvalidSpace("analytic space needs `domain`".into()))?;
                let forward = self
                    .forward
                    .as_deref()
                    .ok_or_else(|| Error::InvalidSpace("analytic space needs `forward`".into()))?;
                Ok(AnalyticSpace::new(Interval::new(domain.lo, domain.hi)?, forward, self.claimed_s)?.into())
            }
        }
    }
}

impl Space {
    pub fn from_json(text: &str) -> Result<Space> {
        SpaceFile::from_json(text)?.build()
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Space> {
        Space::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_file(&self) -> SpaceFile {
        match self {
            Space::Finite(s) => SpaceFile {
                kind: SpaceKind::Finite,
                points: s.points().to_vec(),
                default: s.default_formula().map(|f| f.source().to_string()),
                overrides: s.overrides().to_vec(),
                continuum: s.continuum(),
                domain: None,
                forward: None,
                claimed_s: s.claimed_s(),
            },
            Space::Analytic(s) => SpaceFile {
                kind: SpaceKind::Analytic,
                points: Vec::new(),
                default: None,
                overrides: Vec::new(),
                continuum: None,
                domain: Some(s.domain()),
                forward: Some(s.forward().source().to_string()),
                claimed_s: s.claimed_s(),
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_documented_layout() {
        let text = r#"{
            "kind": "finite",
            "points": [ { "label": "1/2", "value": 0.5 }, { "label": "1/3", "value": 0.3333333333333333 } ],
            "default": "(x - y)^2",
            "overrides": [ { "from": "1/2", "to": "1/3", "d": 0.05 } ],
            "claimed_s": 3.0
        }"#;
        let space = Space::from_json(text).unwrap();
        let f = space.as_finite().unwrap();
        assert_eq!(f.resolve_distance("1/2", "1/3").unwrap(), 0.05);
        assert_eq!(f.claimed_s(), Some(3.0));

        let text = r#"{ "kind": "analytic", "domain": { "lo": 1.0, "hi": 2.0 },
            "forward": "if(x >= y, (x-y)^2, 0.5*(y-x)^2)", "default": null, "claimed_s": 2.0 }"#;
        let space = Space::from_json(text).unwrap();
        assert_eq!(space.as_analytic().unwrap().eta(1.0, 2.0).unwrap(), 0.5);
    }

    #[test]
    fn malformed_files_carry_location() {
        let err = Space::from_json("{ \"kind\": \"finite\", \"points\": [ }").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("line 1 column"), "{msg}");
        assert!(Space::from_json(r#"{ "kind": "analytic", "forward": "x" }"#).is_err());
        assert!(Space::from_json(r#"{ "kind": "cube" }"#).is_err());
        assert!(Space::from_json(r#"{ "kind": "finite", "points": [], "bogus": 1 }"#).is_err());
    }

    #[test]
    fn round_trip_preserves_distances() {
        let text = r#"{ "kind": "finite",
            "points": [ { "label": "a", "value": 0.0 }, { "label": "b", "value": 1.5 } ],
            "default": "abs(x - y)", "overrides": [ { "from": "b", "to": "a", "d": 2.0 } ],
            "continuum": { "lo": 1.0, "hi": 2.0 } }"#;
        let space = Space::from_json(text).unwrap();
        let again = Space::from_json(&space.to_file().to_json()).unwrap();
        let (a, b) = (space.as_finite().unwrap(), again.as_finite().unwrap());
        for x in ["a", "b"] {
            for y in ["a", "b"] {
                assert_eq!(
                    a.resolve_distance(x, y).unwrap().to_bits(),
                    b.resolve_distance(x, y).unwrap().to_bits()
                );
            }
        }
        assert_eq!(a.continuum(), b.continuum());
    }
}
