//! In-memory datasets and their canonical byte encodings.

use serde_json::Value;

use super::DataType;
use crate::classify::TrainedModel;
use crate::digest::ContentDigest;
use crate::evaluate::ConfusionMatrix;
use crate::geodata::{read_geotiff, read_points, write_geotiff, write_points, PointFormat, PointSet, RasterGrid};
use crate::sampling::SampleTable;

/// A dataset flowing between components. Canonical encodings: GeoTIFF for
/// rasters, GeoJSON for points, the model file format for models, JSON for
/// tables, matrices and reports, and raw bytes for files.
#[derive(Debug, Clone, PartialEq)]
pub enum Artifact {
    Raster(RasterGrid),
    Points(PointSet),
    Table(SampleTable),
    Model(TrainedModel),
    Matrix(ConfusionMatrix),
    Report(Value),
    File(Vec<u8>),
}

impl Artifact {
    pub fn data_type(&self) -> DataType {
        match self {
            Artifact::Raster(_) => DataType::Raster,
            Artifact::Points(_) => DataType::Points,
            Artifact::Table(_) => DataType::Table,
            Artifact::Model(_) => DataType::Model,
            Artifact::Matrix(_) => DataType::Matrix,
            Artifact::Report(_) => DataType::Report,
            Artifact::File(_) => DataType::File,
        }
    }

    pub fn encode(&self) -> Result<Vec<u8>, String> {
        let json = |v: serde_json::Result<Vec<u8>>| {
            v.map(|mut b| {
                b.push(b'\n');
                b
            })
            .map_err(|e| e.to_string())
        };
        match self {
            Artifact::Raster(r) => write_geotiff(r).map_err(|e| e.to_string()),
            Artifact::Points(p) => write_points(p, PointFormat::GeoJson).map_err(|e| e.to_string()),
            Artifact::Table(t) => json(serde_json::to_vec(t)),
            Artifact::Model(m) => Ok(m.to_bytes()),
            Artifact::Matrix(m) => json(serde_json::to_vec_pretty(m)),
            Artifact::Report(v) => json(serde_json::to_vec_pretty(v)),
            Artifact::File(b) => Ok(b.clone()),
        }
    }

    pub fn decode(ty: DataType, bytes: &[u8]) -> Result<Self, String> {
        let s = |e: &dyn std::fmt::Display| e.to_string();
        Ok(match ty {
            DataType::Raster => Artifact::Raster(read_geotiff(bytes).map_err(|e| s(&e))?),
            DataType::Points => Artifact::Points(read_points(bytes, PointFormat::GeoJson).map_err(|e| s(&e))?),
            DataType::Table => Artifact::Table(serde_json::from_slice(bytes).map_err(|e| s(&e))?),
            DataType::Model => Artifact::Model(TrainedModel::from_bytes(bytes).map_err(|e| s(&e))?),
            DataType::Matrix => Artifact::Matrix(serde_json::from_slice(bytes).map_err(|e| s(&e))?),
            DataType::Report => Artifact::Report(serde_json::from_slice(bytes).map_err(|e| s(&e))?),
            DataType::File => Artifact::File(bytes.to_vec()),
        })
    }

    pub fn digest(&self) -> Result<ContentDigest, String> {
        self.encode().map(|b| ContentDigest::of(&b))
    }
}
