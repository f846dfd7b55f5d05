//! Typed component DAGs: validation, deterministic planning, cached
//! execution with provenance, and CRS parameter suggestions.
//!
//! A workflow is a JSON document:
//!
//! ```json
//! {
//!   "name": "example",
//!   "inputs": [{ "id": "imagery", "type": "file", "path": "imagery.tif" }],
//!   "components": [{ "id": "read", "kind": "read_raster", "parameters": {} }],
//!   "edges": [{ "from": "imagery", "to": "read.source" }],
//!   "outputs": [{ "name": "raster.tif", "from": "read.raster" }]
//! }
//! ```
//!
//! Edge endpoints are `component.port`, or a bare external input id on the
//! producing side.

mod artifact;
mod catalog;
mod exec;
mod registry;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

pub use artifact::Artifact;
pub use catalog::{CacheEntry, CatalogError, DataCatalog};
pub use exec::{
    execute, provenance_jsonl, suggest_parameters, ExecError, ExecOptions, OutputArtifact, ParameterSuggestion,
    ProvenanceRecord, RunOutcome,
};
pub use registry::{kind, kinds, KindSpec, ParamDefault, ParamKind, ParamSpec, PortSpec, Stage};

/// Dataset types that flow along edges. `file` carries raw external bytes
/// (imagery, point files, boundaries) before a reader parses them.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DataType {
    Raster,
    Points,
    Table,
    Model,
    Matrix,
    Report,
    File,
}

impl fmt::Display for DataType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            DataType::Raster => "raster",
            DataType::Points => "points",
            DataType::Table => "table",
            DataType::Model => "model",
            DataType::Matrix => "matrix",
            DataType::Report => "report",
            DataType::File => "file",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExternalInput {
    pub id: String,
    #[serde(rename = "type")]
    pub data_type: DataType,
    /// Default location, relative to the workflow file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<String>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub optional: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentSpec {
    pub id: String,
    pub kind: String,
    #[serde(default)]
    pub parameters: BTreeMap<String, Value>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Edge {
    pub from: String,
    pub to: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeclaredOutput {
    /// File name used when the output is written out.
    pub name: String,
    pub from: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkflowSpec {
    #[serde(default)]
    pub name: String,
    #[serde(default)]
    pub inputs: Vec<ExternalInput>,
    pub components: Vec<ComponentSpec>,
    #[serde(default)]
    pub edges: Vec<Edge>,
    #[serde(default)]
    pub outputs: Vec<DeclaredOutput>,
}

#[derive(Debug, Error)]
pub enum WorkflowError {
    #[error("workflow JSON: {0}")]
    Parse(String),
    #[error("workflow is invalid:\n{0}")]
    Invalid(ValidationReport),
}

const REFERENCE: &str = include_str!("../../../../workflows/reference14.json");

/// The shipped 14-component land cover and carbon workflow.
pub fn reference_workflow() -> WorkflowSpec {
    WorkflowSpec::from_json(REFERENCE.as_bytes()).expect("reference workflow parses")
}

pub fn reference_workflow_json() -> &'static str {
    REFERENCE
}

impl WorkflowSpec {
    pub fn from_json(bytes: &[u8]) -> Result<Self, WorkflowError> {
        serde_json::from_slice(bytes).map_err(|e| WorkflowError::Parse(e.to_string()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("spec serialises") + "\n"
    }

    pub fn component(&self, id: &str) -> Option<&ComponentSpec> {
        self.components.iter().find(|c| c.id == id)
    }

    pub fn component_mut(&mut self, id: &str) -> Option<&mut ComponentSpec> {
        self.components.iter_mut().find(|c| c.id == id)
    }

    pub fn input(&self, id: &str) -> Option<&ExternalInput> {
        self.inputs.iter().find(|i| i.id == id)
    }

    /// Component-level dependency edges `(producer, consumer)`, ignoring
    /// external inputs.
    pub fn dependencies(&self) -> BTreeSet<(String, String)> {
        self.edges
            .iter()
            .filter_map(|e| {
                let (from, _) = e.from.split_once('.')?;
                let (to, _) = e.to.split_once('.')?;
                Some((from.to_string(), to.to_string()))
            })
            .collect()
    }

    /// Components reachable from `id` along edges, including `id`.
    pub fn descendants(&self, id: &str) -> BTreeSet<String> {
        let deps = self.dependencies();
        let mut seen = BTreeSet::from([id.to_string()]);
        let mut stack = vec![id.to_string()];
        while let Some(n) = stack.pop() {
            for (a, b) in &deps {
                if *a == n && seen.insert(b.clone()) {
                    stack.push(b.clone());
                }
            }
        }
        seen
    }

    /// External input ids feeding `id` directly or through ancestors.
    pub fn upstream_inputs(&self, id: &str) -> BTreeSet<String> {
        let mut seen_components = BTreeSet::from([id.to_string()]);
        let mut stack = vec![id.to_string()];
        let mut inputs = BTreeSet::new();
        while let Some(n) = stack.pop() {
            for e in &self.edges {
                let Some((to, _)) = e.to.split_once('.') else { continue };
                if to != n {
                    continue;
                }
                match e.from.split_once('.') {
                    Some((from, _)) => {
                        if seen_components.insert(from.to_string()) {
                            stack.push(from.to_string());
                        }
                    }
                    None => {
                        inputs.insert(e.from.clone());
                    }
                }
            }
        }
        inputs
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "issue", rename_all = "snake_case")]
pub enum ValidationIssue {
    DuplicateId { id: String },
    UnknownKind { component: String, kind: String },
    UnknownParameter { component: String, parameter: String },
    BadParameter { component: String, parameter: String, detail: String },
    BadEndpoint { endpoint: String, detail: String },
    TypeMismatch { from: String, from_type: DataType, to: String, to_type: DataType },
    UnboundPort { port: String },
    MultiplyBound { port: String, sources: Vec<String> },
    Cycle { components: Vec<String> },
    BadOutput { name: String, detail: String },
}

impl fmt::Display for ValidationIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ValidationIssue::DuplicateId { id } => write!(f, "duplicate id {id:?}"),
            ValidationIssue::UnknownKind { component, kind } => {
                write!(f, "component {component:?} has unknown kind {kind:?}")
            }
            ValidationIssue::UnknownParameter { component, parameter } => {
                write!(f, "component {component:?} has no parameter {parameter:?}")
            }
            ValidationIssue::BadParameter { component, parameter, detail } => {
                write!(f, "parameter {component}.{parameter}: {detail}")
            }
            ValidationIssue::BadEndpoint { endpoint, detail } => write!(f, "edge endpoint {endpoint:?}: {detail}"),
            ValidationIssue::TypeMismatch { from, from_type, to, to_type } => {
                write!(f, "type mismatch: {from} ({from_type}) -> {to} ({to_type})")
            }
            ValidationIssue::UnboundPort { port } => write!(f, "input port {port} is not bound"),
            ValidationIssue::MultiplyBound { port, sources } => {
                write!(f, "input port {port} is bound {} times ({})", sources.len(), sources.join(", "))
            }
            ValidationIssue::Cycle { components } => write!(f, "cycle through {}", components.join(", ")),
            ValidationIssue::BadOutput { name, detail } => write!(f, "output {name:?}: {detail}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ValidationReport {
    pub issues: Vec<ValidationIssue>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.issues.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.issues.is_empty() {
            return writeln!(f, "valid");
        }
        for i in &self.issues {
            writeln!(f, "  - {i}")?;
        }
        Ok(())
    }
}

/// Source endpoint resolved against the workflow.
enum Source<'a> {
    Input(&'a ExternalInput),
    Port(&'static PortSpec),
}

fn resolve_source<'a>(ws: &'a WorkflowSpec, endpoint: &str) -> Result<Source<'a>, String> {
    match endpoint.split_once('.') {
        None => ws.input(endpoint).map(Source::Input).ok_or_else(|| "no such external input".to_string()),
        Some((cid, port)) => {
            let c = ws.component(cid).ok_or("no such component")?;
            let k = kind(&c.kind).ok_or("component kind is unknown")?;
            let p = k.outputs.iter().find(|p| p.name == port).ok_or_else(|| format!("{} has no output port {port:?}", c.kind))?;
            Ok(Source::Port(p))
        }
    }
}

fn resolve_target<'a>(ws: &'a WorkflowSpec, endpoint: &str) -> Result<(&'a ComponentSpec, &'static PortSpec), String> {
    let (cid, port) = endpoint.split_once('.').ok_or("consumer endpoint must be component.port")?;
    let c = ws.component(cid).ok_or("no such component")?;
    let k = kind(&c.kind).ok_or("component kind is unknown")?;
    let p = k.inputs.iter().find(|p| p.name == port).ok_or_else(|| format!("{} has no input port {port:?}", c.kind))?;
    Ok((c, p))
}

/// Checks ids, kinds, parameters, edge endpoints and types, port binding,
/// acyclicity and declared outputs. Every violation is listed.
pub fn validate(ws: &WorkflowSpec) -> ValidationReport {
    let mut issues = Vec::new();
    let mut ids = BTreeSet::new();
    for id in ws.inputs.iter().map(|i| &i.id).chain(ws.components.iter().map(|c| &c.id)) {
        if !ids.insert(id.as_str()) {
            issues.push(ValidationIssue::DuplicateId { id: id.clone() });
        }
    }
    for i in &ws.inputs {
        if i.id.contains('.') {
            issues.push(ValidationIssue::BadEndpoint { endpoint: i.id.clone(), detail: "input ids cannot contain '.'".into() });
        }
    }
    for c in &ws.components {
        match kind(&c.kind) {
            None => issues.push(ValidationIssue::UnknownKind { component: c.id.clone(), kind: c.kind.clone() }),
            Some(k) => {
                for (name, value) in &c.parameters {
                    match k.params.iter().find(|p| p.name == name) {
                        None => issues.push(ValidationIssue::UnknownParameter { component: c.id.clone(), parameter: name.clone() }),
                        Some(p) => {
                            if let Err(detail) = p.kind.check(value) {
                                issues.push(ValidationIssue::BadParameter {
                                    component: c.id.clone(),
                                    parameter: name.clone(),
                                    detail,
                                });
                            }
                        }
                    }
                }
            }
        }
    }

    let mut bound: BTreeMap<String, Vec<String>> = BTreeMap::new();
    for e in &ws.edges {
        let source = resolve_source(ws, &e.from);
        if let Err(detail) = &source {
            issues.push(ValidationIssue::BadEndpoint { endpoint: e.from.clone(), detail: detail.clone() });
        }
        let target = resolve_target(ws, &e.to);
        if let Err(detail) = &target {
            issues.push(ValidationIssue::BadEndpoint { endpoint: e.to.clone(), detail: detail.clone() });
        }
        if let (Ok(s), Ok((_, tp))) = (&source, &target) {
            let from_type = match s {
                Source::Input(i) => i.data_type,
                Source::Port(port) => port.ty,
            };
            if from_type != tp.ty {
                issues.push(ValidationIssue::TypeMismatch {
                    from: e.from.clone(),
                    from_type,
                    to: e.to.clone(),
                    to_type: tp.ty,
                });
            }
            if let Source::Input(i) = s {
                if i.optional && !tp.optional {
                    issues.push(ValidationIssue::BadEndpoint {
                        endpoint: e.from.clone(),
                        detail: format!("optional input feeds required port {}", e.to),
                    });
                }
            }
        }
        if target.is_ok() {
            bound.entry(e.to.clone()).or_default().push(e.from.clone());
        }
    }
    for c in &ws.components {
        let Some(k) = kind(&c.kind) else { continue };
        for p in k.inputs {
            let port = format!("{}.{}", c.id, p.name);
            match bound.get(&port) {
                None if !p.optional => issues.push(ValidationIssue::UnboundPort { port }),
                Some(sources) if sources.len() > 1 => {
                    issues.push(ValidationIssue::MultiplyBound { port, sources: sources.clone() })
                }
                _ => {}
            }
        }
    }

    if let Err(components) = topological_order(ws) {
        issues.push(ValidationIssue::Cycle { components });
    }

    let mut names = BTreeSet::new();
    for o in &ws.outputs {
        if !names.insert(o.name.as_str()) {
            issues.push(ValidationIssue::BadOutput { name: o.name.clone(), detail: "duplicate output name".into() });
        }
        if o.name.is_empty() || o.name.contains(['/', '\\']) || o.name.starts_with('.') {
            issues.push(ValidationIssue::BadOutput { name: o.name.clone(), detail: "must be a plain file name".into() });
        }
        match resolve_source(ws, &o.from) {
            Ok(Source::Port(_)) => {}
            Ok(Source::Input(_)) => {
                issues.push(ValidationIssue::BadOutput { name: o.name.clone(), detail: "must name a component output".into() })
            }
            Err(detail) => issues.push(ValidationIssue::BadOutput { name: o.name.clone(), detail }),
        }
    }
    ValidationReport { issues }
}

/// Kahn's algorithm with the lexicographically smallest ready id first.
/// On a cycle, returns the ids that lie on cycles.
fn topological_order(ws: &WorkflowSpec) -> Result<Vec<String>, Vec<String>> {
    let ids: BTreeSet<String> = ws.components.iter().map(|c| c.id.clone()).collect();
    let deps: BTreeSet<(String, String)> =
        ws.dependencies().into_iter().filter(|(a, b)| ids.contains(a) && ids.contains(b)).collect();
    let mut indegree: BTreeMap<&str, usize> = ids.iter().map(|i| (i.as_str(), 0)).collect();
    for (_, b) in &deps {
        *indegree.get_mut(b.as_str()).unwrap() += 1;
    }
    let mut ready: BTreeSet<&str> = indegree.iter().filter(|(_, &d)| d == 0).map(|(&i, _)| i).collect();
    let mut order = Vec::with_capacity(ids.len());
    while let Some(n) = ready.pop_first() {
        order.push(n.to_string());
        for (a, b) in &deps {
            if a == n {
                let d = indegree.get_mut(b.as_str()).unwrap();
                *d -= 1;
                if *d == 0 {
                    ready.insert(b.as_str());
                }
            }
        }
    }
    if order.len() == ids.len() {
        return Ok(order);
    }
    // Strip nodes that cannot reach back into the remainder; what is left
    // sits on a cycle.
    let mut rest: BTreeSet<String> = ids.into_iter().filter(|i| !order.contains(i)).collect();
    loop {
        let sinks: Vec<String> = rest
            .iter()
            .filter(|n| !deps.iter().any(|(a, b)| a == *n && rest.contains(b)))
            .cloned()
            .collect();
        if sinks.is_empty() {
            break;
        }
        for s in sinks {
            rest.remove(&s);
        }
    }
    Err(rest.into_iter().collect())
}

/// Execution order: topological, ties broken by component id.
pub fn plan(ws: &WorkflowSpec) -> Result<Vec<String>, WorkflowError> {
    let report = validate(ws);
    if !report.is_valid() {
        return Err(WorkflowError::Invalid(report));
    }
    topological_order(ws).map_err(|_| WorkflowError::Invalid(report))
}
