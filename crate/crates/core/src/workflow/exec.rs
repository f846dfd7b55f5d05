//! Plan-order execution against a catalog, with provenance and caching.

use std::collections::{BTreeMap, BTreeSet};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::registry::{kind, ParamKind, RunCtx};
use super::{plan, Artifact, CacheEntry, DataCatalog, DataType, WorkflowSpec};
use crate::digest::ContentDigest;
use crate::geodata::{raster_geo_extent, read_boundary, read_geotiff, read_points, PointFormat};
use crate::geodesy::{self, suggest_crs, CrsId, GeoBox, GeoPoint};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ExecOptions {
    /// Threads for data-parallel raster stages; results do not depend on it.
    pub workers: usize,
    /// Default for every seed parameter left unset in the workflow.
    pub seed: u64,
}

impl Default for ExecOptions {
    fn default() -> Self {
        Self { workers: 1, seed: 42 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProvenanceRecord {
    pub id: String,
    pub kind: String,
    pub parameters: BTreeMap<String, Value>,
    pub inputs: BTreeMap<String, ContentDigest>,
    pub outputs: BTreeMap<String, ContentDigest>,
    pub cache_key: ContentDigest,
    pub cache_hit: bool,
    pub started_ms: u64,
    pub finished_ms: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutputArtifact {
    pub name: String,
    pub data_type: DataType,
    pub digest: ContentDigest,
    pub bytes: Vec<u8>,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub outputs: Vec<OutputArtifact>,
    pub provenance: Vec<ProvenanceRecord>,
    /// Every component output of the run, keyed `component.port`.
    pub artifacts: BTreeMap<String, Artifact>,
}

impl RunOutcome {
    pub fn cache_hits(&self) -> usize {
        self.provenance.iter().filter(|r| r.cache_hit).count()
    }

    pub fn executed(&self) -> BTreeSet<String> {
        self.provenance.iter().filter(|r| !r.cache_hit).map(|r| r.id.clone()).collect()
    }

    pub fn output(&self, name: &str) -> Option<&OutputArtifact> {
        self.outputs.iter().find(|o| o.name == name)
    }
}

#[derive(Debug, Clone, thiserror::Error)]
#[error("{}{message}", component.as_ref().map(|c| format!("component {c:?} failed: ")).unwrap_or_default())]
pub struct ExecError {
    pub component: Option<String>,
    pub message: String,
    pub provenance: Vec<ProvenanceRecord>,
}

pub fn provenance_jsonl(records: &[ProvenanceRecord]) -> String {
    records.iter().map(|r| serde_json::to_string(r).expect("record serialises") + "\n").collect()
}

fn now_ms() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_millis() as u64)
}

/// Parameters with defaults filled in; explicit `null` stays unset.
pub(crate) fn resolve_parameters(kind_name: &str, given: &BTreeMap<String, Value>, seed: u64) -> BTreeMap<String, Value> {
    let Some(k) = kind(kind_name) else { return given.clone() };
    k.params
        .iter()
        .map(|p| (p.name.to_string(), given.get(p.name).cloned().unwrap_or_else(|| p.default_value(seed))))
        .collect()
}

fn cache_key(kind: &str, params: &BTreeMap<String, Value>, inputs: &BTreeMap<String, ContentDigest>) -> ContentDigest {
    let params = serde_json::to_vec(params).expect("parameters serialise");
    let ports: Vec<String> = inputs.iter().map(|(p, d)| format!("{p}={d}")).collect();
    let mut parts: Vec<&[u8]> = vec![b"canopy-component/1", kind.as_bytes(), &params];
    parts.extend(ports.iter().map(|s| s.as_bytes()));
    ContentDigest::of_parts(parts)
}

fn load_cached(
    catalog: &DataCatalog,
    entry: &CacheEntry,
    kind_name: &str,
) -> Option<Vec<(String, Artifact, ContentDigest)>> {
    let k = kind(kind_name)?;
    if entry.kind != kind_name {
        return None;
    }
    k.outputs
        .iter()
        .map(|p| {
            let d = entry.outputs.get(p.name)?;
            let bytes = catalog.get(d).ok()?;
            Some((p.name.to_string(), Artifact::decode(p.ty, &bytes).ok()?, d.clone()))
        })
        .collect()
}

/// Runs every component in plan order. A component whose cache key
/// (kind, resolved parameters, input digests) is already recorded in the
/// catalog is not re-run; its outputs are loaded and verified instead.
pub fn execute(
    ws: &WorkflowSpec,
    inputs: &BTreeMap<String, Vec<u8>>,
    catalog: &DataCatalog,
    opts: &ExecOptions,
) -> Result<RunOutcome, ExecError> {
    let fail = |component: Option<&str>, message: String, provenance: &[ProvenanceRecord]| ExecError {
        component: component.map(str::to_string),
        message,
        provenance: provenance.to_vec(),
    };
    let order = plan(ws).map_err(|e| fail(None, e.to_string(), &[]))?;

    let mut available: BTreeMap<String, (Artifact, ContentDigest)> = BTreeMap::new();
    for i in &ws.inputs {
        match inputs.get(&i.id) {
            Some(bytes) => {
                let art = Artifact::decode(i.data_type, bytes).map_err(|e| fail(None, format!("input {}: {e}", i.id), &[]))?;
                let d = catalog.put(bytes).map_err(|e| fail(None, e.to_string(), &[]))?;
                available.insert(i.id.clone(), (art, d));
            }
            None if i.optional => {}
            None => return Err(fail(None, format!("external input {:?} was not supplied", i.id), &[])),
        }
    }

    let mut provenance = Vec::with_capacity(order.len());
    for id in &order {
        let c = ws.component(id).expect("planned component exists");
        let k = kind(&c.kind).expect("validated kind");
        let started_ms = now_ms();
        let params = resolve_parameters(&c.kind, &c.parameters, opts.seed);

        let mut in_arts = BTreeMap::new();
        let mut in_digests = BTreeMap::new();
        for p in k.inputs {
            let target = format!("{id}.{}", p.name);
            let Some(edge) = ws.edges.iter().find(|e| e.to == target) else { continue };
            if let Some((art, d)) = available.get(&edge.from) {
                in_arts.insert(p.name, art);
                in_digests.insert(p.name.to_string(), d.clone());
            } else if !p.optional {
                return Err(fail(Some(id), format!("input {} is not available", p.name), &provenance));
            }
        }
        let key = cache_key(&c.kind, &params, &in_digests);

        let mut record = ProvenanceRecord {
            id: id.clone(),
            kind: c.kind.clone(),
            parameters: params.clone(),
            inputs: in_digests,
            outputs: BTreeMap::new(),
            cache_key: key.clone(),
            cache_hit: false,
            started_ms,
            finished_ms: 0,
            error: None,
        };

        let cached = catalog.lookup(&key).and_then(|entry| load_cached(catalog, &entry, &c.kind));
        let produced = match cached {
            Some(outs) => {
                record.cache_hit = true;
                outs
            }
            None => {
                let ctx = RunCtx { params: &params, inputs: in_arts, workers: opts.workers.max(1) };
                let outs = match (k.run)(&ctx) {
                    Ok(o) => o,
                    Err(message) => {
                        record.finished_ms = now_ms();
                        record.error = Some(message.clone());
                        provenance.push(record);
                        return Err(fail(Some(id), message, &provenance));
                    }
                };
                let mut stored = Vec::with_capacity(outs.len());
                let mut entry = CacheEntry { kind: c.kind.clone(), outputs: BTreeMap::new() };
                for (port, art) in outs {
                    let bytes = art.encode().map_err(|e| fail(Some(id), e, &provenance))?;
                    let d = catalog.put(&bytes).map_err(|e| fail(Some(id), e.to_string(), &provenance))?;
                    entry.outputs.insert(port.to_string(), d.clone());
                    stored.push((port.to_string(), art, d));
                }
                catalog.record(&key, &entry).map_err(|e| fail(Some(id), e.to_string(), &provenance))?;
                stored
            }
        };
        for (port, art, d) in produced {
            record.outputs.insert(port.clone(), d.clone());
            available.insert(format!("{id}.{port}"), (art, d));
        }
        record.finished_ms = now_ms();
        provenance.push(record);
    }

    let mut outputs = Vec::with_capacity(ws.outputs.len());
    for o in &ws.outputs {
        let (art, d) = available.get(&o.from).ok_or_else(|| fail(None, format!("output {} was not produced", o.from), &provenance))?;
        let bytes = catalog.get(d).map_err(|e| fail(None, e.to_string(), &provenance))?;
        outputs.push(OutputArtifact { name: o.name.clone(), data_type: art.data_type(), digest: d.clone(), bytes });
    }
    let artifacts = available.into_iter().filter(|(k, _)| k.contains('.')).map(|(k, (a, _))| (k, a)).collect();
    Ok(RunOutcome { outputs, provenance, artifacts })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterSuggestion {
    pub component: String,
    pub parameter: String,
    pub epsg: u32,
    pub ambiguous: bool,
    pub first_zone: u8,
    pub last_zone: u8,
    /// External inputs whose extent was used.
    pub from_inputs: Vec<String>,
}

fn points_to_geo(points: impl Iterator<Item = (f64, f64)>, crs: CrsId) -> Option<GeoBox> {
    let geo: Option<Vec<GeoPoint>> = points
        .map(|(x, y)| geodesy::transform(x, y, crs, CrsId::WGS84).ok().map(|(lon, lat)| GeoPoint::new(lon, lat)))
        .collect();
    GeoBox::covering(geo?)
}

/// Geographic extent of an external input, read the way the components it
/// feeds would read it.
fn input_extent(ws: &WorkflowSpec, input: &str, bytes: &[u8]) -> Option<GeoBox> {
    let consumers = ws.edges.iter().filter(|e| e.from == input).filter_map(|e| e.to.split_once('.'));
    for (cid, port) in consumers {
        let c = ws.component(cid)?;
        let found = match (c.kind.as_str(), port) {
            ("read_points", _) => {
                let format: PointFormat = c.parameters.get("format").and_then(Value::as_str).unwrap_or("geojson").parse().ok()?;
                let ps = read_points(bytes, format).ok()?;
                points_to_geo(ps.features.iter().map(|f| (f.x, f.y)), ps.crs)
            }
            ("read_raster", _) => raster_geo_extent(&read_geotiff(bytes).ok()?).ok(),
            (_, "boundary") => {
                let (poly, crs) = read_boundary(bytes).ok()?;
                points_to_geo(poly.exterior().iter().copied(), crs)
            }
            _ => None,
        };
        if found.is_some() {
            return found;
        }
    }
    None
}

/// For every CRS parameter left unset, proposes the UTM zone of the
/// extent of the external inputs upstream of that component. Nothing is
/// applied to the workflow.
pub fn suggest_parameters(ws: &WorkflowSpec, inputs: &BTreeMap<String, Vec<u8>>) -> Vec<ParameterSuggestion> {
    let mut out = Vec::new();
    for c in &ws.components {
        let Some(k) = kind(&c.kind) else { continue };
        let resolved = resolve_parameters(&c.kind, &c.parameters, 0);
        for p in k.params.iter().filter(|p| p.kind == ParamKind::Crs) {
            if !resolved.get(p.name).is_none_or(Value::is_null) {
                continue;
            }
            let mut used = Vec::new();
            let mut extent: Option<GeoBox> = None;
            for input in ws.upstream_inputs(&c.id) {
                let Some(b) = inputs.get(&input).and_then(|bytes| input_extent(ws, &input, bytes)) else { continue };
                used.push(input);
                extent = Some(match extent {
                    None => b,
                    Some(e) => GeoBox::new(
                        e.min_lon.min(b.min_lon),
                        e.min_lat.min(b.min_lat),
                        e.max_lon.max(b.max_lon),
                        e.max_lat.max(b.max_lat),
                    ),
                });
            }
            let Some(s) = extent.and_then(|e| suggest_crs(e).ok()) else { continue };
            out.push(ParameterSuggestion {
                component: c.id.clone(),
                parameter: p.name.to_string(),
                epsg: s.crs.epsg(),
                ambiguous: s.ambiguous,
                first_zone: s.first_zone,
                last_zone: s.last_zone,
                from_inputs: used,
            });
        }
    }
    out
}
