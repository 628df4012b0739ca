//! Workspace file: bodies, fields, and elements keyed by string ids.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::sync::Arc;

use anyhow::{anyhow, bail, Context, Result};
use serde::{Deserialize, Serialize};

use diffk_core::diffeo::Diffeo;
use diffk_core::fields::{
    BoundaryVanishingField, FieldDescriptor, LieAlgebraCurve, ParametricFieldFamily,
    WeightDescriptor,
};
use diffk_core::geometry::{BodyDescriptor, ConvexBody};

/// Major version a workspace file must declare.
pub const WORKSPACE_VERSION: u64 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorkspaceFile {
    pub version: u64,
    #[serde(default)]
    pub bodies: BTreeMap<String, BodyDescriptor>,
    #[serde(default)]
    pub fields: BTreeMap<String, WorkspaceField>,
    #[serde(default)]
    pub elements: BTreeMap<String, ElementDescriptor>,
}

/// A field descriptor bound to a body id.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorkspaceField {
    pub body: String,
    pub base: Vec<String>,
    pub weight: Option<WeightDescriptor>,
    pub time: (f64, f64),
}

impl WorkspaceField {
    fn descriptor(&self) -> FieldDescriptor {
        FieldDescriptor {
            base: self.base.clone(),
            weight: self.weight.clone(),
            time: self.time,
        }
    }
}

/// How an element is built from the other workspace entries.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum ElementDescriptor {
    Identity {
        body: String,
    },
    Analytic {
        field: String,
        #[serde(default)]
        t: f64,
    },
    Flow {
        field: String,
        #[serde(default = "default_flow_time")]
        t: f64,
        #[serde(default = "default_grid")]
        grid: usize,
        #[serde(default = "default_tol")]
        tol: f64,
    },
    Compose {
        outer: String,
        inner: String,
    },
    Inverse {
        inner: String,
        #[serde(default = "default_tol")]
        tol: f64,
    },
}

fn default_flow_time() -> f64 {
    1.0
}

fn default_grid() -> usize {
    1024
}

fn default_tol() -> f64 {
    1e-10
}

/// Loaded workspace with resolved bodies.
pub struct Workspace {
    file: WorkspaceFile,
    bodies: BTreeMap<String, Arc<ConvexBody>>,
}

impl Workspace {
    pub fn load(path: &Path) -> Result<Workspace> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read workspace `{}`", path.display()))?;
        let file: WorkspaceFile = serde_json::from_str(&text)
            .with_context(|| format!("malformed workspace `{}`", path.display()))?;
        if file.version != WORKSPACE_VERSION {
            bail!(
                "workspace `{}` declares version {}, tool expects {}",
                path.display(),
                file.version,
                WORKSPACE_VERSION
            );
        }
        let mut bodies = BTreeMap::new();
        for (id, desc) in &file.bodies {
            let body = ConvexBody::from_descriptor(desc)
                .with_context(|| format!("workspace body `{id}`"))?;
            bodies.insert(id.clone(), Arc::new(body));
        }
        Ok(Workspace { file, bodies })
    }

    pub fn body(&self, id: &str) -> Result<Arc<ConvexBody>> {
        self.bodies
            .get(id)
            .cloned()
            .ok_or_else(|| anyhow!("workspace references unknown body `{id}`"))
    }

    fn field_entry(&self, id: &str) -> Result<&WorkspaceField> {
        self.file
            .fields
            .get(id)
            .ok_or_else(|| anyhow!("workspace references unknown field `{id}`"))
    }

    /// Non-parametric field (all parameters already fixed).
    pub fn field(&self, id: &str) -> Result<Arc<BoundaryVanishingField>> {
        let entry = self.field_entry(id)?;
        let body = self.body(&entry.body)?;
        let field = entry
            .descriptor()
            .to_field(body)
            .with_context(|| format!("workspace field `{id}`"))?;
        Ok(Arc::new(field))
    }

    /// Field with free parameters `p1..pm`.
    pub fn field_family(&self, id: &str) -> Result<ParametricFieldFamily> {
        let entry = self.field_entry(id)?;
        let body = self.body(&entry.body)?;
        entry
            .descriptor()
            .to_family(body)
            .with_context(|| format!("workspace field `{id}`"))
    }

    pub fn element(&self, id: &str) -> Result<Diffeo> {
        let mut visiting = BTreeSet::new();
        self.element_inner(id, &mut visiting)
    }

    fn element_inner(&self, id: &str, visiting: &mut BTreeSet<String>) -> Result<Diffeo> {
        if !visiting.insert(id.to_string()) {
            bail!("element `{id}` is defined in terms of itself");
        }
        let desc = self
            .file
            .elements
            .get(id)
            .ok_or_else(|| anyhow!("workspace references unknown element `{id}`"))?;
        let element = match desc {
            ElementDescriptor::Identity { body } => Diffeo::identity(self.body(body)?),
            ElementDescriptor::Analytic { field, t } => {
                Diffeo::from_field(self.field(field)?, *t)
                    .with_context(|| format!("element `{id}`"))?
            }
            ElementDescriptor::Flow {
                field,
                t,
                grid,
                tol,
            } => {
                let curve = LieAlgebraCurve::new(self.field(field)?)
                    .with_context(|| format!("element `{id}`"))?;
                Diffeo::from_flow(Arc::new(curve), *t, *grid, *tol)
                    .with_context(|| format!("element `{id}`"))?
            }
            ElementDescriptor::Compose { outer, inner } => {
                let outer = self.element_inner(outer, visiting)?;
                let inner = self.element_inner(inner, visiting)?;
                Diffeo::compose(&outer, &inner).with_context(|| format!("element `{id}`"))?
            }
            ElementDescriptor::Inverse { inner, tol } => {
                let inner = self.element_inner(inner, visiting)?;
                inner.invert(*tol).with_context(|| format!("element `{id}`"))?
            }
        };
        visiting.remove(id);
        Ok(element)
    }
}
