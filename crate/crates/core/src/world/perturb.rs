use rand::Rng;
use serde::{Deserialize, Serialize};

use super::catalog::task_by_id;
use super::scene::{dist, Object, Scene};
use super::task::{check_success, Predicate, TaskSpec};
use super::WorldError;

pub const MAX_PLACEMENT_TRIES: usize = 100;
/// Minimum distance kept from bounds when placing entities.
pub const PLACEMENT_MARGIN: f64 = 0.05;
/// Minimum spacing between placed entities.
pub const MIN_SEPARATION: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PerturbationSpec {
    None,
    /// Referenced objects and parts move by a displacement of uniform
    /// direction and magnitude uniform in `[min, max]`.
    PositionShift { min: f64, max: f64 },
    ObjectSubstitute {
        old: String,
        new: String,
        #[serde(default)]
        relocate: bool,
    },
    DistractorInsert { count: usize },
    /// Switch to another catalog task id.
    InstructionChange { task: String },
}

impl PerturbationSpec {
    /// Short tag for tables.
    pub fn name(&self) -> String {
        match self {
            PerturbationSpec::None => "none".into(),
            PerturbationSpec::PositionShift { min, max } => format!("shift_{min}_{max}"),
            PerturbationSpec::ObjectSubstitute { old, new, .. } => format!("substitute_{old}_{new}"),
            PerturbationSpec::DistractorInsert { count } => format!("distractors_{count}"),
            PerturbationSpec::InstructionChange { task } => format!("instruction_{task}"),
        }
    }

    pub fn validate(&self) -> Result<(), WorldError> {
        let bad = |m: String| Err(WorldError::Perturbation(m));
        match self {
            PerturbationSpec::PositionShift { min, max } => {
                if !(0.0 <= *min && min <= max && *max <= 1.0) {
                    return bad(format!("shift range [{min}, {max}] must satisfy 0 <= min <= max <= 1"));
                }
            }
            PerturbationSpec::ObjectSubstitute { old, new, .. } if old == new || new.is_empty() => {
                return bad("substitute needs a new, nonempty label".into());
            }
            PerturbationSpec::InstructionChange { task } if task_by_id(task).is_none() => {
                return bad(format!("unknown task id {task:?}"));
            }
            _ => {}
        }
        Ok(())
    }
}

fn occupied(scene: &Scene, skip_object: Option<usize>, skip_part: Option<usize>) -> Vec<Vec<f64>> {
    let mut pts: Vec<Vec<f64>> = scene
        .objects
        .iter()
        .filter(|o| Some(o.id) != skip_object)
        .map(|o| o.position.clone())
        .collect();
    for p in scene.parts.iter().filter(|p| Some(p.id) != skip_part) {
        pts.push(p.at_joint(0.0));
        pts.push(p.at_joint(1.0));
    }
    pts.push(scene.gripper.position.clone());
    pts
}

fn inside(scene: &Scene, p: &[f64]) -> bool {
    p.iter()
        .enumerate()
        .all(|(i, v)| *v >= scene.bounds.lo[i] + PLACEMENT_MARGIN && *v <= scene.bounds.hi[i] - PLACEMENT_MARGIN)
}

fn clear_of(p: &[f64], others: &[Vec<f64>]) -> bool {
    others.iter().all(|q| dist(p, q) >= MIN_SEPARATION)
}

fn in_any_zone(scene: &Scene, p: &[f64]) -> bool {
    scene.zones.iter().any(|z| dist(p, &z.center) <= z.radius + PLACEMENT_MARGIN)
}

fn random_direction<R: Rng + ?Sized>(rng: &mut R, d: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-3 && n <= 1.0 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

fn free_point<R: Rng + ?Sized>(scene: &Scene, rng: &mut R, what: &str) -> Result<Vec<f64>, WorldError> {
    let others = occupied(scene, None, None);
    for _ in 0..MAX_PLACEMENT_TRIES {
        let p: Vec<f64> = (0..scene.space_dim())
            .map(|i| rng.gen_range(scene.bounds.lo[i] + PLACEMENT_MARGIN..=scene.bounds.hi[i] - PLACEMENT_MARGIN))
            .collect();
        if clear_of(&p, &others) && !in_any_zone(scene, &p) {
            return Ok(p);
        }
    }
    Err(WorldError::Perturbation(format!(
        "no free spot for {what} after {MAX_PLACEMENT_TRIES} tries"
    )))
}

fn rename_word(text: &str, old: &str, new: &str) -> String {
    text.split(' ')
        .map(|w| if w == old { new } else { w })
        .collect::<Vec<_>>()
        .join(" ")
}

/// Applies one perturbation. Deterministic given the rng state.
pub fn apply_perturbation<R: Rng + ?Sized>(
    scene: &Scene,
    task: &TaskSpec,
    spec: &PerturbationSpec,
    rng: &mut R,
) -> Result<(Scene, TaskSpec), WorldError> {
    spec.validate()?;
    task.validate_against(scene)?;
    let mut s = scene.clone();
    let mut t = task.clone();
    match spec {
        PerturbationSpec::None => {}
        PerturbationSpec::PositionShift { min, max } => {
            if *max == 0.0 {
                return Ok((s, t));
            }
            for label in task.predicate.labels() {
                if let Some(obj) = s.objects.iter().find(|o| o.label == label && o.movable).cloned() {
                    let others = occupied(&s, Some(obj.id), None);
                    let placed = (0..MAX_PLACEMENT_TRIES).find_map(|_| {
                        let r = rng.gen_range(*min..=*max);
                        let dir = random_direction(rng, s.space_dim());
                        let p: Vec<f64> = obj.position.iter().zip(&dir).map(|(x, d)| x + r * d).collect();
                        (inside(&s, &p) && clear_of(&p, &others) && !in_any_zone(&s, &p)).then_some(p)
                    });
                    let p = placed.ok_or_else(|| {
                        WorldError::Perturbation(format!("cannot shift {label} within bounds"))
                    })?;
                    s.objects.iter_mut().find(|o| o.id == obj.id).expect("present").position = p;
                } else if let Some(part) = s.parts.iter().find(|p| p.label == label).cloned() {
                    let others = occupied(&s, None, Some(part.id));
                    let placed = (0..MAX_PLACEMENT_TRIES).find_map(|_| {
                        let r = rng.gen_range(*min..=*max);
                        let dir = random_direction(rng, s.space_dim());
                        let mut moved = part.clone();
                        for (b, d) in moved.base.iter_mut().zip(&dir) {
                            *b += r * d;
                        }
                        let ok = [moved.at_joint(0.0), moved.at_joint(1.0)]
                            .iter()
                            .all(|h| s.bounds.contains(h) && clear_of(h, &others));
                        ok.then_some(moved.base)
                    });
                    let base = placed.ok_or_else(|| {
                        WorldError::Perturbation(format!("cannot shift {label} within bounds"))
                    })?;
                    s.parts.iter_mut().find(|p| p.id == part.id).expect("present").base = base;
                }
            }
        }
        PerturbationSpec::ObjectSubstitute { old, new, relocate } => {
            if s.object(new).is_some() || s.zone(new).is_some() || s.part(new).is_some() {
                return Err(WorldError::Perturbation(format!("label {new:?} already in use")));
            }
            let id = s
                .object(old)
                .ok_or_else(|| WorldError::Perturbation(format!("no object {old:?} to substitute")))?
                .id;
            if *relocate {
                let p = free_point(&s, rng, new)?;
                s.objects.iter_mut().find(|o| o.id == id).expect("present").position = p;
            }
            s.objects.iter_mut().find(|o| o.id == id).expect("present").label = new.clone();
            let rename = |l: &mut String| {
                if l == old {
                    *l = new.clone();
                }
            };
            match &mut t.predicate {
                Predicate::ObjectInZone { object, .. } | Predicate::Holding { object } => rename(object),
                _ => {}
            }
            if t.predicate.labels().contains(&new.as_str()) {
                t.instruction = rename_word(&t.instruction, old, new);
                t.id = t.id.split(':').map(|w| if w == old { new.as_str() } else { w }).collect::<Vec<_>>().join(":");
            }
        }
        PerturbationSpec::DistractorInsert { count } => {
            for i in 0..*count {
                let label = (0..)
                    .map(|k| format!("distractor_{}", i + k))
                    .find(|l| s.object(l).is_none())
                    .expect("unbounded");
                let position = free_point(&s, rng, &label)?;
                let id = s.next_object_id();
                s.objects.push(Object {
                    id,
                    label,
                    position,
                    movable: true,
                });
            }
        }
        PerturbationSpec::InstructionChange { task: id } => {
            t = task_by_id(id).expect("validated");
            t.validate_against(&s)?;
        }
    }
    if check_success(&s, &t) {
        return Err(WorldError::Perturbation(format!("perturbed task {} is already solved", t.id)));
    }
    s.validate()?;
    Ok((s, t))
}
