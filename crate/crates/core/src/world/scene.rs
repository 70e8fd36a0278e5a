use serde::{Deserialize, Serialize};

use super::WorldError;

/// Interaction constants shared by physics, the scripted expert and task thresholds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhysicsParams {
    pub grasp_radius: f64,
    pub handle_radius: f64,
    /// Per-coordinate bound on one step's positional delta.
    pub max_delta: f64,
    /// Gripper channel values above this close the gripper.
    pub close_threshold: f64,
}

impl Default for PhysicsParams {
    fn default() -> Self {
        Self {
            grasp_radius: 0.05,
            handle_radius: 0.05,
            max_delta: 0.1,
            close_threshold: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Bounds {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl Bounds {
    pub fn unit(dim: usize) -> Self {
        Self {
            lo: vec![0.0; dim],
            hi: vec![1.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn contains(&self, p: &[f64]) -> bool {
        p.len() == self.dim() && p.iter().enumerate().all(|(i, v)| *v >= self.lo[i] && *v <= self.hi[i])
    }

    pub fn clamp(&self, p: &mut [f64]) {
        for (i, v) in p.iter_mut().enumerate() {
            *v = v.clamp(self.lo[i], self.hi[i]);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Object {
    pub id: usize,
    pub label: String,
    pub position: Vec<f64>,
    pub movable: bool,
}

/// One-degree-of-freedom prismatic part. The handle sits at
/// `base + joint * travel * axis`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Part {
    pub id: usize,
    pub label: String,
    pub joint: f64,
    /// Unit vector.
    pub axis: Vec<f64>,
    pub base: Vec<f64>,
    pub travel: f64,
}

impl Part {
    pub fn handle(&self) -> Vec<f64> {
        self.at_joint(self.joint)
    }

    /// Handle position for joint value `q`.
    pub fn at_joint(&self, q: f64) -> Vec<f64> {
        self.base
            .iter()
            .zip(&self.axis)
            .map(|(b, a)| b + q * self.travel * a)
            .collect()
    }
}

/// Closed ball.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Zone {
    pub label: String,
    pub center: Vec<f64>,
    pub radius: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Gripper {
    pub position: Vec<f64>,
    pub closed: bool,
    /// Object id.
    pub held: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scene {
    pub bounds: Bounds,
    #[serde(default)]
    pub objects: Vec<Object>,
    #[serde(default)]
    pub parts: Vec<Part>,
    #[serde(default)]
    pub zones: Vec<Zone>,
    pub gripper: Gripper,
    #[serde(default)]
    pub physics: PhysicsParams,
}

pub(crate) fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

impl Scene {
    /// Spatial dimension (2 or 3).
    pub fn space_dim(&self) -> usize {
        self.bounds.dim()
    }

    /// Action width: positional deltas plus the gripper channel.
    pub fn action_dim(&self) -> usize {
        self.space_dim() + 1
    }

    pub fn object(&self, label: &str) -> Option<&Object> {
        self.objects.iter().find(|o| o.label == label)
    }

    pub fn part(&self, label: &str) -> Option<&Part> {
        self.parts.iter().find(|p| p.label == label)
    }

    pub fn zone(&self, label: &str) -> Option<&Zone> {
        self.zones.iter().find(|z| z.label == label)
    }

    pub fn held_object(&self) -> Option<&Object> {
        self.gripper.held.and_then(|id| self.objects.iter().find(|o| o.id == id))
    }

    pub fn next_object_id(&self) -> usize {
        self.objects.iter().map(|o| o.id + 1).max().unwrap_or(0)
    }

    /// Checks every invariant; errors name the offending path.
    pub fn validate(&self) -> Result<(), WorldError> {
        let bad = |path: String, msg: &str| Err(WorldError::Schema { path, msg: msg.to_string() });
        let d = self.space_dim();
        if !(2..=3).contains(&d) || self.bounds.hi.len() != d {
            return bad("bounds".into(), "bounds must be 2-D or 3-D with matching lo/hi");
        }
        if self.bounds.lo.iter().zip(&self.bounds.hi).any(|(l, h)| !(l < h)) {
            return bad("bounds".into(), "lo must be below hi");
        }
        let point = |path: String, p: &[f64]| -> Result<(), WorldError> {
            if p.len() != d || p.iter().any(|v| !v.is_finite()) {
                return Err(WorldError::Schema {
                    path,
                    msg: format!("expected {d} finite coordinates"),
                });
            }
            if !self.bounds.contains(p) {
                return Err(WorldError::Schema {
                    path,
                    msg: "outside workspace bounds".into(),
                });
            }
            Ok(())
        };
        let mut labels = std::collections::HashSet::new();
        let mut ids = std::collections::HashSet::new();
        for (i, o) in self.objects.iter().enumerate() {
            point(format!("objects[{i}].position"), &o.position)?;
            if !ids.insert(o.id) {
                return bad(format!("objects[{i}].id"), "duplicate object id");
            }
            if !labels.insert(o.label.as_str()) {
                return bad(format!("objects[{i}].label"), "duplicate label");
            }
        }
        for (i, p) in self.parts.iter().enumerate() {
            if !(0.0..=1.0).contains(&p.joint) {
                return bad(format!("parts[{i}].joint"), "joint must lie in [0, 1]");
            }
            let norm = p.axis.iter().map(|v| v * v).sum::<f64>().sqrt();
            if p.axis.len() != d || (norm - 1.0).abs() > 1e-9 {
                return bad(format!("parts[{i}].axis"), "axis must be a unit vector");
            }
            if !(p.travel > 0.0 && p.travel.is_finite()) {
                return bad(format!("parts[{i}].travel"), "travel must be positive");
            }
            point(format!("parts[{i}].base"), &p.base)?;
            point(format!("parts[{i}].handle"), &p.at_joint(1.0))?;
            if !labels.insert(p.label.as_str()) {
                return bad(format!("parts[{i}].label"), "duplicate label");
            }
        }
        for (i, z) in self.zones.iter().enumerate() {
            point(format!("zones[{i}].center"), &z.center)?;
            if !(z.radius > 0.0 && z.radius.is_finite()) {
                return bad(format!("zones[{i}].radius"), "radius must be positive");
            }
            if !labels.insert(z.label.as_str()) {
                return bad(format!("zones[{i}].label"), "duplicate label");
            }
        }
        point("gripper.position".into(), &self.gripper.position)?;
        if let Some(h) = self.gripper.held {
            match self.objects.iter().find(|o| o.id == h) {
                None => return bad("gripper.held".into(), "held id names no object"),
                Some(o) if !o.movable => return bad("gripper.held".into(), "held object is fixed"),
                Some(_) if !self.gripper.closed => {
                    return bad("gripper.held".into(), "an open gripper holds nothing")
                }
                _ => {}
            }
        }
        let p = &self.physics;
        if [p.grasp_radius, p.handle_radius, p.max_delta].iter().any(|v| !(*v > 0.0 && v.is_finite())) {
            return bad("physics".into(), "radii and max_delta must be positive");
        }
        Ok(())
    }
}

pub fn load_scene(document: &str) -> Result<Scene, WorldError> {
    let scene: Scene = serde_json::from_str(document).map_err(|e| WorldError::Schema {
        path: format!("line {} column {}", e.line(), e.column()),
        msg: e.to_string(),
    })?;
    scene.validate()?;
    Ok(scene)
}

pub fn save_scene(scene: &Scene) -> String {
    serde_json::to_string_pretty(scene).expect("scene serializes")
}
