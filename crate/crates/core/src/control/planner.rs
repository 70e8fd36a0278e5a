use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::PlanError;
use crate::reward::{parse_reward, Dims, KeypointSet, RewardProgram};

/// What a planner sees: the instruction, grounded keypoints in program order,
/// program dims and the reward history of the current stage.
#[derive(Debug, Clone)]
pub struct PlanContext {
    pub instruction: String,
    pub keypoints: KeypointSet,
    pub dims: Dims,
    pub history: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Recovery {
    RestartStage,
    Abort,
}

/// Source of stage-wise reward programs.
pub trait StagePlanner {
    fn plan_stages(&mut self, ctx: &PlanContext) -> Result<RewardProgram, PlanError>;

    /// Called after stage `completed` advances. `Some` replaces the program;
    /// the replacement must still contain stage `completed + 1`.
    fn next_stage(
        &mut self,
        _ctx: &PlanContext,
        _completed: usize,
    ) -> Result<Option<RewardProgram>, PlanError> {
        Ok(None)
    }

    /// Called when a stage exceeds its retry budget.
    fn recover(&mut self, _ctx: &PlanContext, _stage: usize) -> Result<Recovery, PlanError> {
        Ok(Recovery::RestartStage)
    }
}

/// An instruction pattern with `{name}` slots and a reward program whose
/// `{name}` slots become the keypoint index of the bound label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageTemplate {
    pub family: String,
    pub pattern: String,
    pub program: String,
}

fn words(text: &str) -> Vec<String> {
    text.split_whitespace()
        .map(|w| {
            w.trim_matches(|c: char| !c.is_alphanumeric() && c != '{' && c != '}' && c != '_' && c != '-')
                .to_lowercase()
        })
        .filter(|w| !w.is_empty())
        .collect()
}

impl StageTemplate {
    /// Slot bindings if `instruction` matches word for word.
    pub fn bind(&self, instruction: &str) -> Option<Vec<(String, String)>> {
        let pat = words(&self.pattern);
        let got = words(instruction);
        if pat.len() != got.len() {
            return None;
        }
        let mut out = Vec::new();
        for (p, g) in pat.iter().zip(&got) {
            if let Some(slot) = p.strip_prefix('{').and_then(|s| s.strip_suffix('}')) {
                out.push((slot.to_string(), g.clone()));
            } else if p != g {
                return None;
            }
        }
        Some(out)
    }
}

/// Template lookup; the first matching pattern wins.
#[derive(Debug, Clone, Default)]
pub struct ScriptedPlanner {
    templates: Vec<StageTemplate>,
}

impl ScriptedPlanner {
    pub fn new(templates: Vec<StageTemplate>) -> Self {
        Self { templates }
    }

    pub fn templates(&self) -> &[StageTemplate] {
        &self.templates
    }

    /// Family id of the first template matching `instruction`.
    pub fn family_for(&self, instruction: &str) -> Option<&str> {
        self.templates
            .iter()
            .find(|t| t.bind(instruction).is_some())
            .map(|t| t.family.as_str())
    }
}

impl StagePlanner for ScriptedPlanner {
    fn plan_stages(&mut self, ctx: &PlanContext) -> Result<RewardProgram, PlanError> {
        let (template, binds) = self
            .templates
            .iter()
            .find_map(|t| t.bind(&ctx.instruction).map(|b| (t, b)))
            .ok_or_else(|| PlanError::TemplateMiss(ctx.instruction.clone()))?;
        let mut text = template.program.clone();
        for (slot, label) in binds {
            let idx = ctx
                .keypoints
                .labels()
                .iter()
                .position(|l| *l == label)
                .ok_or_else(|| PlanError::UnknownLabel(label.clone()))?;
            text = text.replace(&format!("{{{slot}}}"), &idx.to_string());
        }
        Ok(parse_reward(&text, ctx.dims)?)
    }
}

/// Newline-delimited JSON over a child process's stdin/stdout.
///
/// The child is spawned on first use and reused. A reply that does not arrive
/// within `timeout` kills the child.
pub struct ExternalPlanner {
    command: Vec<String>,
    timeout: Duration,
    child: Option<Connection>,
}

struct Connection {
    child: Child,
    stdin: ChildStdin,
    lines: Receiver<std::io::Result<String>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct Reply {
    program: Option<String>,
    action: Option<Recovery>,
}

impl ExternalPlanner {
    pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(30);

    pub fn new(command: Vec<String>, timeout: Duration) -> Result<Self, PlanError> {
        if command.is_empty() {
            return Err(PlanError::Protocol("empty planner command".into()));
        }
        Ok(Self {
            command,
            timeout,
            child: None,
        })
    }

    fn connect(&mut self) -> Result<&mut Connection, PlanError> {
        if self.child.is_none() {
            let mut child = Command::new(&self.command[0])
                .args(&self.command[1..])
                .stdin(Stdio::piped())
                .stdout(Stdio::piped())
                .stderr(Stdio::inherit())
                .spawn()
                .map_err(|e| PlanError::Io(format!("spawn {}: {e}", self.command[0])))?;
            let stdin = child.stdin.take().expect("piped stdin");
            let stdout = child.stdout.take().expect("piped stdout");
            let (tx, rx) = mpsc::channel();
            thread::spawn(move || {
                for line in BufReader::new(stdout).lines() {
                    if tx.send(line).is_err() {
                        break;
                    }
                }
            });
            self.child = Some(Connection {
                child,
                stdin,
                lines: rx,
            });
        }
        Ok(self.child.as_mut().expect("connected"))
    }

    fn shutdown(&mut self) {
        if let Some(mut c) = self.child.take() {
            let _ = c.child.kill();
            let _ = c.child.wait();
        }
    }

    fn request(&mut self, kind: &str, ctx: &PlanContext) -> Result<Reply, PlanError> {
        let keypoints: Vec<_> = ctx
            .keypoints
            .labels()
            .iter()
            .zip(ctx.keypoints.points())
            .map(|(l, p)| json!({"label": l, "xyz": p}))
            .collect();
        let msg = json!({
            "type": kind,
            "instruction": ctx.instruction,
            "keypoints": keypoints,
            "dims": ctx.dims,
            "history": ctx.history,
        });
        let timeout = self.timeout;
        let conn = self.connect()?;
        let sent = writeln!(conn.stdin, "{msg}").and_then(|_| conn.stdin.flush());
        let line = match sent {
            Err(e) => Err(PlanError::Io(e.to_string())),
            Ok(()) => match conn.lines.recv_timeout(timeout) {
                Ok(Ok(line)) => Ok(line),
                Ok(Err(e)) => Err(PlanError::Io(e.to_string())),
                Err(RecvTimeoutError::Timeout) => Err(PlanError::Timeout(timeout)),
                Err(RecvTimeoutError::Disconnected) => {
                    Err(PlanError::Io("planner closed its output".into()))
                }
            },
        };
        let line = match line {
            Ok(l) => l,
            Err(e) => {
                self.shutdown();
                return Err(e);
            }
        };
        serde_json::from_str(&line).map_err(|e| PlanError::Protocol(format!("bad reply {line:?}: {e}")))
    }

    fn program(reply: Reply, dims: Dims) -> Result<RewardProgram, PlanError> {
        match reply {
            Reply {
                program: Some(text),
                action: None,
            } => Ok(parse_reward(&text, dims)?),
            _ => Err(PlanError::Protocol("expected a program reply".into())),
        }
    }
}

impl Drop for ExternalPlanner {
    fn drop(&mut self) {
        self.shutdown();
    }
}

impl StagePlanner for ExternalPlanner {
    fn plan_stages(&mut self, ctx: &PlanContext) -> Result<RewardProgram, PlanError> {
        let reply = self.request("plan", ctx)?;
        Self::program(reply, ctx.dims)
    }

    fn next_stage(
        &mut self,
        ctx: &PlanContext,
        _completed: usize,
    ) -> Result<Option<RewardProgram>, PlanError> {
        match self.request("next_stage", ctx)? {
            Reply {
                program: Some(text),
                action: None,
            } => Ok(Some(parse_reward(&text, ctx.dims)?)),
            Reply {
                program: None,
                action: Some(Recovery::RestartStage),
            } => Ok(None),
            Reply {
                program: None,
                action: Some(Recovery::Abort),
            } => Err(PlanError::Aborted),
            _ => Err(PlanError::Protocol("expected a program or an action".into())),
        }
    }

    fn recover(&mut self, ctx: &PlanContext, _stage: usize) -> Result<Recovery, PlanError> {
        match self.request("recover", ctx)? {
            Reply {
                program: None,
                action: Some(a),
            } => Ok(a),
            _ => Err(PlanError::Protocol("expected an action reply".into())),
        }
    }
}
