//! Vector map JSON: `{"instances":[{"class":"divider","closed":false,
//! "score":0.9,"points":[[x,y],...]}]}`, coordinates in ego meters.

use super::IoError;
use crate::vector::{MapClass, MapInstance, Polyline, VectorMap};
use nalgebra::Point2;
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Serialize, Deserialize)]
struct InstanceJson {
    class: String,
    closed: bool,
    score: f64,
    points: Vec<[f64; 2]>,
}

#[derive(Serialize, Deserialize)]
struct VectorMapJson {
    instances: Vec<InstanceJson>,
}

pub fn write_vector_map(path: &Path, map: &VectorMap) -> Result<(), IoError> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| IoError::io(path, e))?;
    }
    let json = VectorMapJson {
        instances: map
            .instances
            .iter()
            .map(|inst| InstanceJson {
                class: inst.map_class.as_str().to_string(),
                closed: inst.polyline.is_closed(),
                score: inst.score,
                points: inst
                    .polyline
                    .points()
                    .iter()
                    .map(|p| [p.x, p.y])
                    .collect(),
            })
            .collect(),
    };
    let text =
        serde_json::to_string_pretty(&json).map_err(|e| IoError::parse(path, e.to_string()))?;
    std::fs::write(path, text).map_err(|e| IoError::io(path, e))
}

pub fn read_vector_map(path: &Path) -> Result<VectorMap, IoError> {
    let text = std::fs::read_to_string(path).map_err(|e| IoError::io(path, e))?;
    let json: VectorMapJson = serde_json::from_str(&text)
        .map_err(|e| IoError::parse_at(path, e.line(), e.to_string()))?;
    let mut instances = Vec::with_capacity(json.instances.len());
    for (i, inst) in json.instances.into_iter().enumerate() {
        let class = MapClass::from_str_name(&inst.class)
            .map_err(|e| IoError::invalid(path, format!("instance {i}: {e}")))?;
        let points: Vec<Point2<f64>> =
            inst.points.iter().map(|&[x, y]| Point2::new(x, y)).collect();
        let polyline = Polyline::new(points, inst.closed)
            .map_err(|e| IoError::invalid(path, format!("instance {i}: {e}")))?;
        let instance = MapInstance::new(class, polyline, inst.score)
            .map_err(|e| IoError::invalid(path, format!("instance {i}: {e}")))?;
        instances.push(instance);
    }
    Ok(VectorMap::new(instances))
}
