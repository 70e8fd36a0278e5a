//! The shipped tabletop layout, task families and stage templates.

use super::scene::{Bounds, Gripper, Object, Part, PhysicsParams, Scene, Zone};
use super::task::{Predicate, TaskFamily, TaskSpec};
use crate::control::{ScriptedPlanner, StageTemplate};

pub const CUBES: [&str; 3] = ["red", "blue", "pink"];
pub const ZONES: [&str; 2] = ["green", "yellow"];
pub const HOME: [f64; 2] = [0.5, 0.1];

/// Unit square, gripper open at home, three cubes, two zones and three parts
/// at joint 0.
pub fn nominal_scene() -> Scene {
    let cube = |id, label: &str, x, y| Object {
        id,
        label: label.into(),
        position: vec![x, y],
        movable: true,
    };
    let part = |id, label: &str, base: [f64; 2], axis: [f64; 2], travel| Part {
        id,
        label: label.into(),
        joint: 0.0,
        axis: axis.to_vec(),
        base: base.to_vec(),
        travel,
    };
    let zone = |label: &str, x, y| Zone {
        label: label.into(),
        center: vec![x, y],
        radius: 0.08,
    };
    Scene {
        bounds: Bounds::unit(2),
        objects: vec![
            cube(0, "red", 0.3, 0.4),
            cube(1, "blue", 0.5, 0.4),
            cube(2, "pink", 0.7, 0.4),
        ],
        parts: vec![
            part(0, "drawer", [0.5, 0.95], [0.0, -1.0], 0.25),
            part(1, "button", [0.88, 0.25], [1.0, 0.0], 0.12),
            part(2, "switch", [0.1, 0.2], [0.0, 1.0], 0.15),
        ],
        zones: vec![zone("green", 0.25, 0.75), zone("yellow", 0.75, 0.75)],
        gripper: Gripper {
            position: HOME.to_vec(),
            closed: false,
            held: None,
        },
        physics: PhysicsParams::default(),
    }
}

/// Nominal scene with the task's initial joint state (the drawer starts open
/// for `close_drawer`).
pub fn scene_for(task: &TaskSpec) -> Scene {
    let mut s = nominal_scene();
    if task.family == TaskFamily::CloseDrawer {
        if let Some(p) = s.parts.iter_mut().find(|p| p.label == "drawer") {
            p.joint = 1.0;
        }
    }
    s
}

fn move_cube(obj: &str, zone: &str) -> TaskSpec {
    TaskSpec {
        id: format!("move_cube:{obj}:{zone}"),
        family: TaskFamily::MoveCube,
        instruction: format!("move the {obj} cube to the {zone} zone"),
        predicate: Predicate::ObjectInZone {
            object: obj.into(),
            zone: zone.into(),
        },
        template: "move_cube".into(),
    }
}

fn articulated(family: TaskFamily, verb: &str, part: &str, predicate: Predicate) -> TaskSpec {
    TaskSpec {
        id: family.as_str().into(),
        family,
        instruction: format!("{verb} the {part}"),
        predicate,
        template: "actuate".into(),
    }
}

/// Resolves `move_cube:<object>:<zone>` for any labels, and the four
/// articulated ids.
pub fn task_by_id(id: &str) -> Option<TaskSpec> {
    let mut it = id.split(':');
    let head = it.next()?;
    let rest: Vec<&str> = it.collect();
    let above = |part: &str| Predicate::JointAbove {
        part: part.into(),
        threshold: 0.8,
    };
    Some(match (head, rest.as_slice()) {
        ("move_cube", [obj, zone]) => move_cube(obj, zone),
        ("open_drawer", []) => articulated(TaskFamily::OpenDrawer, "open", "drawer", above("drawer")),
        ("close_drawer", []) => articulated(
            TaskFamily::CloseDrawer,
            "close",
            "drawer",
            Predicate::JointBelow {
                part: "drawer".into(),
                threshold: 0.2,
            },
        ),
        ("press_button", []) => articulated(TaskFamily::PressButton, "press", "button", above("button")),
        ("toggle_switch", []) => articulated(TaskFamily::ToggleSwitch, "toggle", "switch", above("switch")),
        _ => return None,
    })
}

/// All ten shipped tasks: six cube moves then the articulated ones.
pub fn all_tasks() -> Vec<TaskSpec> {
    let mut out = Vec::new();
    for c in CUBES {
        for z in ZONES {
            out.push(move_cube(c, z));
        }
    }
    for id in ["open_drawer", "close_drawer", "press_button", "toggle_switch"] {
        out.push(task_by_id(id).expect("shipped id"));
    }
    out
}

const MOVE_CUBE_PROGRAM: &str = "\
stage reach {
  reward: -norm2(cum(a)[T-1] - p[{obj}]);
  high: -0.03; low: -0.6;
  description: \"bring the gripper to the cube\";
}
stage grasp {
  reward: -norm2(cum(a)[T-1] - p[{obj}]) - 0.1 * softplus(10 * (0.6 - a[T-1][2]))
          - 0.05 * sum_t(softplus(20 * (-0.3 - a[t][2])));
  high: -0.05; low: -0.6;
  description: \"close on the cube\";
}
stage place {
  reward: -norm2(cum(a)[T-1] - p[{zone}]) - 0.05 * sum_t(softplus(20 * (-0.3 - a[t][2])));
  high: -0.05; low: -0.8;
  description: \"carry the cube into the zone without opening\";
}
";

/// Reach the handle, then drive it to the goal point while staying on the
/// segment between them (the ellipse excess below is zero on the segment).
const ACTUATE_PROGRAM: &str = "\
stage reach {
  reward: -norm2(cum(a)[T-1] - p[{part}]);
  high: -0.03; low: -0.6;
  description: \"bring the gripper to the handle\";
}
stage actuate {
  reward: -norm2(cum(a)[T-1] - p[{part} + 1])
          - 0.5 * mean_t(norm2(cum(a)[t] - p[{part}]) + norm2(cum(a)[t] - p[{part} + 1]) - norm2(p[{part} + 1] - p[{part}]));
  high: -0.03; low: -0.6;
  description: \"move the handle along its axis\";
}
";

pub fn stage_templates() -> Vec<StageTemplate> {
    let mut out = vec![StageTemplate {
        family: "move_cube".into(),
        pattern: "move the {obj} cube to the {zone} zone".into(),
        program: MOVE_CUBE_PROGRAM.into(),
    }];
    for verb in ["open", "close", "press", "toggle"] {
        out.push(StageTemplate {
            family: "actuate".into(),
            pattern: format!("{verb} the {{part}}"),
            program: ACTUATE_PROGRAM.into(),
        });
    }
    out
}

pub fn scripted_planner() -> ScriptedPlanner {
    ScriptedPlanner::new(stage_templates())
}
