use serde::{Deserialize, Serialize};

use super::scene::{dist, Scene};
use super::WorldError;
use crate::reward::KeypointSet;

/// Margin past a joint threshold at which the grounded goal keypoint sits.
pub const JOINT_GOAL_MARGIN: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskFamily {
    MoveCube,
    OpenDrawer,
    CloseDrawer,
    PressButton,
    ToggleSwitch,
}

impl TaskFamily {
    pub fn as_str(self) -> &'static str {
        match self {
            TaskFamily::MoveCube => "move_cube",
            TaskFamily::OpenDrawer => "open_drawer",
            TaskFamily::CloseDrawer => "close_drawer",
            TaskFamily::PressButton => "press_button",
            TaskFamily::ToggleSwitch => "toggle_switch",
        }
    }

    pub fn is_articulated(self) -> bool {
        !matches!(self, TaskFamily::MoveCube)
    }
}

/// Declarative success condition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Predicate {
    ObjectInZone { object: String, zone: String },
    JointAbove { part: String, threshold: f64 },
    JointBelow { part: String, threshold: f64 },
    Holding { object: String },
}

impl Predicate {
    pub fn labels(&self) -> Vec<&str> {
        match self {
            Predicate::ObjectInZone { object, zone } => vec![object, zone],
            Predicate::JointAbove { part, .. } | Predicate::JointBelow { part, .. } => vec![part],
            Predicate::Holding { object } => vec![object],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskSpec {
    /// Stable id such as `move_cube:red:green`.
    pub id: String,
    pub family: TaskFamily,
    pub instruction: String,
    pub predicate: Predicate,
    /// Planner template family.
    pub template: String,
}

impl TaskSpec {
    /// Every predicate label must name an entity of the right kind.
    pub fn validate_against(&self, scene: &Scene) -> Result<(), WorldError> {
        let missing = |l: &str| Err(WorldError::Grounding(format!("task {} names unknown {l:?}", self.id)));
        match &self.predicate {
            Predicate::ObjectInZone { object, zone } => {
                if scene.object(object).is_none() {
                    return missing(object);
                }
                if scene.zone(zone).is_none() {
                    return missing(zone);
                }
            }
            Predicate::JointAbove { part, .. } | Predicate::JointBelow { part, .. } => {
                if scene.part(part).is_none() {
                    return missing(part);
                }
            }
            Predicate::Holding { object } => {
                if scene.object(object).is_none() {
                    return missing(object);
                }
            }
        }
        Ok(())
    }
}

/// Oracle keypoints for the entities the task references, in predicate order.
///
/// Objects map to their position and zones to their center. A joint
/// predicate yields the handle and a `<part>_goal` point where the handle sits
/// once the joint is `JOINT_GOAL_MARGIN` past the threshold.
pub fn ground_keypoints(scene: &Scene, task: &TaskSpec) -> Result<KeypointSet, WorldError> {
    task.validate_against(scene)?;
    let entries: Vec<(String, Vec<f64>)> = match &task.predicate {
        Predicate::ObjectInZone { object, zone } => vec![
            (object.clone(), scene.object(object).expect("validated").position.clone()),
            (zone.clone(), scene.zone(zone).expect("validated").center.clone()),
        ],
        Predicate::Holding { object } => {
            vec![(object.clone(), scene.object(object).expect("validated").position.clone())]
        }
        Predicate::JointAbove { part, threshold } | Predicate::JointBelow { part, threshold } => {
            let p = scene.part(part).expect("validated");
            let q = match task.predicate {
                Predicate::JointAbove { .. } => (threshold + JOINT_GOAL_MARGIN).min(1.0),
                _ => (threshold - JOINT_GOAL_MARGIN).max(0.0),
            };
            vec![(part.clone(), p.handle()), (format!("{part}_goal"), p.at_joint(q))]
        }
    };
    KeypointSet::new(entries).map_err(|e| WorldError::Grounding(e.to_string()))
}

/// Zones are closed balls; joint thresholds are inclusive.
pub fn check_success(scene: &Scene, task: &TaskSpec) -> bool {
    match &task.predicate {
        Predicate::ObjectInZone { object, zone } => match (scene.object(object), scene.zone(zone)) {
            (Some(o), Some(z)) => dist(&o.position, &z.center) <= z.radius,
            _ => false,
        },
        Predicate::JointAbove { part, threshold } => scene.part(part).is_some_and(|p| p.joint >= *threshold),
        Predicate::JointBelow { part, threshold } => scene.part(part).is_some_and(|p| p.joint <= *threshold),
        Predicate::Holding { object } => {
            scene.held_object().is_some_and(|o| o.label == *object)
        }
    }
}
