//! Suspension models over the torus `C/<1, τ>` and the shipped example catalog.

use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::classify::{classify_pair, ClassificationReport, HolonomyPair, VerdictPolicy};
use crate::error::{HolonomyError, Result};
use crate::germ::Germ;
use crate::map::MapExpr;
use crate::scalar::{parse_float, Field};

pub const CATALOG_SCHEMA_VERSION: u32 = 1;
const CATALOG_JSON: &str = include_str!("../fixtures/catalog.json");

/// Holonomy `γ₁ ↦ f`, `γ₂ ↦ g` of a suspension; the total space is not built.
#[derive(Clone, Debug)]
pub struct SuspensionModel {
    pub tau: Complex64,
    pub pair: HolonomyPair,
    pub label: Option<String>,
    pub notes: String,
}

fn check_tau(tau: Complex64) -> Result<()> {
    if !(tau.im > 0.0) {
        return Err(HolonomyError::Modulus(tau.im));
    }
    Ok(())
}

pub fn build_suspension(f: Germ, g: Germ, tau: Complex64) -> Result<SuspensionModel> {
    check_tau(tau)?;
    Ok(SuspensionModel {
        tau,
        pair: HolonomyPair::new(f, g)?,
        label: None,
        notes: String::new(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub name: String,
    /// `[re, im]` as decimal strings.
    pub tau: [String; 2],
    pub f: String,
    pub g: String,
    #[serde(default)]
    pub notes: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CatalogFile {
    pub schema_version: u32,
    pub models: Vec<ModelSpec>,
}

impl CatalogFile {
    pub fn parse(json: &str) -> Result<Self> {
        let file: CatalogFile = serde_json::from_str(json)?;
        if file.schema_version != CATALOG_SCHEMA_VERSION {
            return Err(HolonomyError::Config(format!(
                "unsupported catalog schema version {}",
                file.schema_version
            )));
        }
        Ok(file)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn shipped() -> Self {
        Self::parse(CATALOG_JSON).expect("shipped catalog is valid")
    }

    pub fn find(&self, name: &str) -> Option<&ModelSpec> {
        self.models.iter().find(|m| m.name == name)
    }
}

impl ModelSpec {
    pub fn build(&self, truncation: usize, field: Field) -> Result<SuspensionModel> {
        let bits = field.bits().max(crate::scalar::DEFAULT_FLOAT_BITS);
        let tau = Complex64::new(parse_float(&self.tau[0], 53)?.to_f64(), parse_float(&self.tau[1], 53)?.to_f64());
        check_tau(tau)?;
        let f = MapExpr::parse(&self.f, bits)?;
        let g = MapExpr::parse(&self.g, bits)?;
        Ok(SuspensionModel {
            tau,
            pair: HolonomyPair::from_exprs(&f, &g, truncation, field)?,
            label: Some(self.name.clone()),
            notes: self.notes.clone(),
        })
    }
}

/// The shipped models at the given truncation and field.
pub fn catalog(truncation: usize, field: Field) -> Result<Vec<SuspensionModel>> {
    CatalogFile::shipped()
        .models
        .iter()
        .map(|m| m.build(truncation, field))
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelReport {
    pub model: Option<String>,
    pub tau: [f64; 2],
    pub report: ClassificationReport,
}

pub fn classify_model(m: &SuspensionModel, policy: &VerdictPolicy) -> Result<ModelReport> {
    Ok(ModelReport {
        model: m.label.clone(),
        tau: [m.tau.re, m.tau.im],
        report: classify_pair(&m.pair, policy)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn field() -> Field {
        Field::float(256).unwrap()
    }

    #[test]
    fn shipped_catalog_has_the_six_models() {
        let names: Vec<_> = CatalogFile::shipped().models.into_iter().map(|m| m.name).collect();
        assert_eq!(
            names,
            ["trivial", "serre", "linear-rotation", "ueda-cremer", "case5-ruled", "case8-birotation"]
        );
    }

    #[test]
    fn modulus_and_representation_errors() {
        let id = Germ::identity(16, field()).unwrap();
        assert!(matches!(
            build_suspension(id.clone(), id.clone(), Complex64::new(1.0, 0.0)),
            Err(HolonomyError::Modulus(_))
        ));
        let p = |s: &str| MapExpr::parse(s, 256).unwrap().to_germ(16, field()).unwrap();
        assert!(matches!(
            build_suspension(p("poly(1,1)"), p("poly(1,0,1)"), Complex64::new(0.0, 1.0)),
            Err(HolonomyError::NonCommuting { .. })
        ));
        let m = build_suspension(p("id"), p("mobius(1,0,-1,1)"), Complex64::new(0.5, 2.0)).unwrap();
        assert_eq!(m.pair.g, p("mobius(1,0,-1,1)"));
        assert_eq!(m.tau, Complex64::new(0.5, 2.0));
    }
}
