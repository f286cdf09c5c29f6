//! Run configuration: a JSON document with strict keys, dotted overrides and
//! range validation ahead of any solve.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::geometry::{FaultSegment, Point2, DEFAULT_DELTA_MIN};
use crate::mesh::MeshParams;
use crate::problem::Model;
use crate::recon::{ProjectionPolicy, ReconConfig, SolverKind};
use crate::shape::ShapeFormula;
use crate::slip::{Bump, SlipField};
use crate::synthetic::Acquisition;
use crate::tensors::{AffineField, ElasticityTensor};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeometryConfig {
    /// True fault for `synth`, `forward` and `gradcheck`.
    pub fault: [[f64; 2]; 2],
    pub delta_min: f64,
}

impl Default for GeometryConfig {
    fn default() -> Self {
        GeometryConfig { fault: [[-0.4, 0.0], [0.4, 0.0]], delta_min: DEFAULT_DELTA_MIN }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhysicsConfig {
    pub lambda: f64,
    pub mu: f64,
    /// Gradients of affine Lamé fields; zero for constant coefficients.
    pub lambda_gradient: [f64; 2],
    pub mu_gradient: [f64; 2],
}

impl Default for PhysicsConfig {
    fn default() -> Self {
        PhysicsConfig { lambda: 1.0, mu: 1.0, lambda_gradient: [0.0; 2], mu_gradient: [0.0; 2] }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiscretizationConfig {
    /// Polynomial degree.
    pub r: usize,
    pub h_fine: f64,
    pub h_coarse: f64,
    pub beta: f64,
    /// Gauss points per fault side; derived from `r` when absent.
    pub fault_quadrature: Option<usize>,
    pub angle_floor_deg: f64,
    pub exclusion: f64,
}

impl Default for DiscretizationConfig {
    fn default() -> Self {
        let m = MeshParams::default();
        DiscretizationConfig {
            r: 1,
            h_fine: m.h_target,
            h_coarse: m.h_coarse,
            beta: 10.0,
            fault_quadrature: None,
            angle_floor_deg: m.angle_floor_deg,
            exclusion: m.exclusion,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SlipPreset {
    Constant,
    Compact,
    Second,
    Zero,
}

/// A named preset or an explicit amplitude with an optional bump.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SlipSpec {
    Preset(SlipPreset),
    Custom {
        amplitude: [f64; 2],
        #[serde(default)]
        bump: Option<Bump>,
    },
}

impl SlipSpec {
    pub fn field(&self) -> SlipField {
        match self {
            SlipSpec::Preset(SlipPreset::Constant) => SlipField::constant(),
            SlipSpec::Preset(SlipPreset::Compact) => SlipField::compact(),
            SlipSpec::Preset(SlipPreset::Second) => SlipField::second(),
            SlipSpec::Preset(SlipPreset::Zero) => SlipField::zero(),
            SlipSpec::Custom { amplitude, bump } => SlipField::custom(*amplitude, *bump),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    /// One measurement per slip.
    pub slips: Vec<SlipSpec>,
    pub acquisition: Acquisition,
    /// Noise half-width.
    pub a: f64,
    /// Seed of the first measurement; measurement `i` uses `seed + i`.
    pub seed: u64,
    /// Target diameter of the data mesh.
    pub h_data: f64,
    /// Measurement CSV files read by `reconstruct`.
    pub measurements: Vec<PathBuf>,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            slips: vec![SlipSpec::Preset(SlipPreset::Constant)],
            acquisition: Acquisition::AllExposed,
            a: 7e-4,
            seed: 1,
            h_data: 0.02,
            measurements: Vec::new(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InversionConfig {
    pub max_iter: usize,
    pub tol: f64,
    pub alpha: f64,
    pub n_iter_min: usize,
    pub projection: ProjectionPolicy,
    pub formula: ShapeFormula,
    pub solver: SolverKind,
    pub stall_window: usize,
    pub stall_rel: f64,
    pub initial_vertices: Option<[[f64; 2]; 2]>,
}

impl Default for InversionConfig {
    fn default() -> Self {
        InversionConfig::from_recon(&ReconConfig::default(), None)
    }
}

impl InversionConfig {
    pub fn from_recon(r: &ReconConfig, initial_vertices: Option<[[f64; 2]; 2]>) -> Self {
        InversionConfig {
            max_iter: r.max_iter,
            tol: r.tol,
            alpha: r.alpha,
            n_iter_min: r.n_iter_min,
            projection: r.projection,
            formula: r.formula,
            solver: r.solver,
            stall_window: r.stall_window,
            stall_rel: r.stall_rel,
            initial_vertices,
        }
    }

    pub fn recon(&self) -> ReconConfig {
        ReconConfig {
            max_iter: self.max_iter,
            tol: self.tol,
            alpha: self.alpha,
            n_iter_min: self.n_iter_min,
            projection: self.projection,
            formula: self.formula,
            solver: self.solver,
            stall_window: self.stall_window,
            stall_rel: self.stall_rel,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GradcheckConfig {
    pub eps: f64,
    /// Relative tolerance of the gate.
    pub tol: f64,
    /// Derivatives below this magnitude are reported but not gated.
    pub floor: f64,
    pub formulas: Vec<GradcheckFormula>,
    /// Flips the sign of the analytic derivatives, to exercise the gate.
    #[doc(hidden)]
    #[serde(skip_serializing_if = "std::ops::Not::not")]
    pub negate: bool,
}

/// Shape-derivative evaluations compared against finite differences.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GradcheckFormula {
    Discrete,
    Continuous,
    Boundary,
}

impl GradcheckFormula {
    pub fn name(self) -> &'static str {
        match self {
            GradcheckFormula::Discrete => "discrete",
            GradcheckFormula::Continuous => "continuous",
            GradcheckFormula::Boundary => "boundary",
        }
    }

    pub fn shape_formula(self) -> Option<ShapeFormula> {
        match self {
            GradcheckFormula::Discrete => Some(ShapeFormula::Discrete),
            GradcheckFormula::Continuous => Some(ShapeFormula::Continuous),
            GradcheckFormula::Boundary => None,
        }
    }
}

impl Default for GradcheckConfig {
    fn default() -> Self {
        GradcheckConfig { eps: 1e-3, tol: 0.05, floor: 1e-8, formulas: vec![GradcheckFormula::Discrete], negate: false }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub geometry: GeometryConfig,
    pub physics: PhysicsConfig,
    pub discretization: DiscretizationConfig,
    pub data: DataConfig,
    pub inversion: InversionConfig,
    pub gradcheck: GradcheckConfig,
}

fn point(p: [f64; 2]) -> Point2 {
    Point2::new(p[0], p[1])
}

fn check(ok: bool, path: &str, reason: &str) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::config(path, reason))
    }
}

impl RunConfig {
    /// Parses `text`, applies `key=value` overrides and validates the result.
    pub fn parse(text: &str, overrides: &[String]) -> Result<Self> {
        let mut doc: Value = if text.trim().is_empty() {
            Value::Object(Default::default())
        } else {
            serde_json::from_str(text).map_err(|e| Error::config("<root>", e.to_string()))?
        };
        for item in overrides {
            apply_override(&mut doc, item)?;
        }
        let cfg: RunConfig = serde_path_to_error::deserialize(doc).map_err(|e| {
            let path = e.path().to_string();
            let inner = e.into_inner().to_string();
            match inner.strip_prefix("unknown field `") {
                Some(rest) => {
                    let key = rest.split('`').next().unwrap_or_default();
                    let parent = path.rsplit_once('.').map(|(p, _)| format!("{p}.")).unwrap_or_default();
                    Error::UnknownKey(format!("{parent}{key}"))
                }
                None => Error::config(path, inner),
            }
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, overrides)
    }

    pub fn validate(&self) -> Result<()> {
        let g = &self.geometry;
        check(g.delta_min > 0.0 && g.delta_min < 1.0, "geometry.delta_min", "delta_min must lie in (0, 1)")?;
        let p = &self.physics;
        check(p.mu > 0.0 && p.lambda >= 0.0, "physics", "lambda >= 0 and mu > 0 are required")?;
        let d = &self.discretization;
        check(d.r >= 1 && d.r <= 4, "discretization.r", "r must lie in 1..=4")?;
        check(d.h_fine > 0.0 && d.h_fine <= 0.5, "discretization.h_fine", "h_fine must lie in (0, 0.5]")?;
        check(d.h_coarse > 0.0 && d.h_coarse <= 0.5, "discretization.h_coarse", "h_coarse must lie in (0, 0.5]")?;
        check(d.beta > 0.0, "discretization.beta", "beta must be > 0")?;
        check(d.angle_floor_deg > 0.0 && d.angle_floor_deg < 60.0, "discretization.angle_floor_deg", "angle floor must lie in (0, 60)")?;
        check(d.exclusion > 0.0 && d.exclusion < 1.0, "discretization.exclusion", "exclusion must lie in (0, 1)")?;
        check(d.fault_quadrature.is_none_or(|n| n >= 1), "discretization.fault_quadrature", "at least one point is required")?;
        let data = &self.data;
        check(!data.slips.is_empty(), "data.slips", "at least one slip is required")?;
        check(data.a >= 0.0 && data.a.is_finite(), "data.a", "a must be >= 0")?;
        check(data.h_data > 0.0 && data.h_data <= 0.5, "data.h_data", "h_data must lie in (0, 0.5]")?;
        self.inversion.recon().validate()?;
        let gc = &self.gradcheck;
        check(gc.eps > 0.0 && gc.eps < 0.05, "gradcheck.eps", "eps must lie in (0, 0.05)")?;
        check(gc.tol > 0.0, "gradcheck.tol", "tol must be > 0")?;
        check(!gc.formulas.is_empty(), "gradcheck.formulas", "at least one formula is required")?;
        Ok(())
    }

    pub fn elasticity(&self) -> Result<ElasticityTensor> {
        let p = &self.physics;
        ElasticityTensor::affine(
            AffineField { value: p.lambda, gradient: p.lambda_gradient },
            AffineField { value: p.mu, gradient: p.mu_gradient },
        )
        .map_err(|e| Error::config("physics", e.to_string()))
    }

    /// Inversion model at `h_fine`.
    pub fn model(&self) -> Result<Model> {
        let d = &self.discretization;
        Ok(Model {
            elasticity: self.elasticity()?,
            degree: d.r,
            beta: d.beta,
            fault_order: d.fault_quadrature,
            mesh: MeshParams {
                h_target: d.h_fine,
                h_coarse: d.h_coarse,
                delta_min: self.geometry.delta_min,
                angle_floor_deg: d.angle_floor_deg,
                exclusion: d.exclusion,
            },
        })
    }

    pub fn slips(&self) -> Vec<SlipField> {
        self.data.slips.iter().map(SlipSpec::field).collect()
    }

    /// True fault carrying the first slip.
    pub fn fault(&self) -> Result<FaultSegment> {
        let [a, b] = self.geometry.fault;
        let f = FaultSegment::new(point(a), point(b), self.slips()[0].clone());
        f.validate(self.geometry.delta_min)?;
        Ok(f)
    }

    pub fn initial_fault(&self, slip: SlipField) -> Result<FaultSegment> {
        let [a, b] = self
            .inversion
            .initial_vertices
            .ok_or_else(|| Error::config("inversion.initial_vertices", "inversion.initial_vertices required"))?;
        let f = FaultSegment::new(point(a), point(b), slip);
        f.validate(self.geometry.delta_min)?;
        Ok(f)
    }
}

/// Sets the dotted `key` in `doc` to `value`, parsed as JSON when possible
/// and as a string otherwise.
pub fn apply_override(doc: &mut Value, item: &str) -> Result<()> {
    let (key, raw) = item
        .split_once('=')
        .ok_or_else(|| Error::config(item, "override must have the form key=value"))?;
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut node = doc;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        if part.is_empty() {
            return Err(Error::config(key, "empty key segment"));
        }
        let map = match node {
            Value::Object(map) => map,
            _ => return Err(Error::config(parts[..i].join("."), "not an object")),
        };
        if i + 1 == parts.len() {
            map.insert(part.to_string(), value);
            return Ok(());
        }
        node = map.entry(part.to_string()).or_insert_with(|| Value::Object(Default::default()));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_materializes_defaults() {
        let cfg = RunConfig::parse("{}", &[]).unwrap();
        assert_eq!(cfg.inversion.alpha, 1e-6);
        assert_eq!(cfg.inversion.max_iter, 5000);
        assert_eq!(cfg.inversion.n_iter_min, 150);
        assert_eq!(cfg.discretization.beta, 10.0);
        assert_eq!(cfg.data.a, 7e-4);
    }

    #[test]
    fn initial_vertices_are_required() {
        let cfg = RunConfig::parse("{}", &[]).unwrap();
        let err = cfg.initial_fault(SlipField::constant()).unwrap_err();
        assert_eq!(err, Error::config("inversion.initial_vertices", "inversion.initial_vertices required"));
    }

    #[test]
    fn negative_alpha_is_rejected() {
        let err = RunConfig::parse(r#"{"inversion": {"alpha": -1}}"#, &[]).unwrap_err();
        assert!(err.to_string().contains("alpha must be > 0"), "{err}");
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = RunConfig::parse(r#"{"inversion": {"alpah": 1e-6}}"#, &[]).unwrap_err();
        assert_eq!(err, Error::UnknownKey("inversion.alpah".into()));
        let err = RunConfig::parse(r#"{"geometri": {}}"#, &[]).unwrap_err();
        assert_eq!(err, Error::UnknownKey("geometri".into()));
    }

    #[test]
    fn overrides_take_precedence() {
        let sets = vec![
            "inversion.alpha=2e-6".to_string(),
            "data.acquisition=top_only".to_string(),
            "data.slips=[\"compact\", {\"amplitude\": [1, 2]}]".to_string(),
        ];
        let cfg = RunConfig::parse(r#"{"inversion": {"alpha": 1e-6}}"#, &sets).unwrap();
        assert_eq!(cfg.inversion.alpha, 2e-6);
        assert_eq!(cfg.data.acquisition, Acquisition::TopOnly);
        assert_eq!(cfg.slips()[0], SlipField::compact());
        assert_eq!(cfg.slips()[1].amplitude, [1.0, 2.0]);
    }

    #[test]
    fn resolved_config_round_trips() {
        let cfg = RunConfig::parse(r#"{"inversion": {"initial_vertices": [[-0.4, 0.15], [0.4, 0.15]]}}"#, &[]).unwrap();
        let text = serde_json::to_string(&cfg).unwrap();
        assert_eq!(RunConfig::parse(&text, &[]).unwrap(), cfg);
    }
}
