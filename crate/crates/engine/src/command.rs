//! Operator commands: wire format, validation, and the sources the
//! orchestrator drains at stage 5.

use std::collections::VecDeque;
use std::io::{BufRead, Write};
use std::path::Path;

use arena_core::field::{check_amplitude, Rgb, VirtualObject};
use arena_core::swarm::Arena;
use arena_core::Point;
use crossbeam_channel::{Receiver, Sender, TrySendError};
use serde::{Deserialize, Serialize};
use serde_json::Value;

/// Paths accepted by `set_param`.
pub const LIVE_PARAMS: [&str; 4] = [
    "tiles.noise_amplitude",
    "field.evaporation_rho",
    "overlay.palette",
    "tick_rate",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "verb", content = "args", rename_all = "snake_case")]
pub enum Verb {
    Start,
    Pause,
    Resume,
    Stop,
    SetNoise { amplitude: f64 },
    AddObject(VirtualObject),
    RemoveObject { id: u32 },
    DepositAt { x: f64, y: f64, amount: f64 },
    SetParam(Param),
}

impl Verb {
    pub fn name(&self) -> &'static str {
        match self {
            Verb::Start => "start",
            Verb::Pause => "pause",
            Verb::Resume => "resume",
            Verb::Stop => "stop",
            Verb::SetNoise { .. } => "set_noise",
            Verb::AddObject(_) => "add_object",
            Verb::RemoveObject { .. } => "remove_object",
            Verb::DepositAt { .. } => "deposit_at",
            Verb::SetParam(_) => "set_param",
        }
    }

    /// Run-control verbs act on the loop rather than on the scene.
    pub fn is_control(&self) -> bool {
        matches!(self, Verb::Start | Verb::Pause | Verb::Resume | Verb::Stop)
    }
}

/// A validated `set_param` value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "path", content = "value")]
pub enum Param {
    #[serde(rename = "tiles.noise_amplitude")]
    NoiseAmplitude(f64),
    #[serde(rename = "field.evaporation_rho")]
    EvaporationRho(f64),
    #[serde(rename = "overlay.palette")]
    Palette(Vec<Rgb>),
    /// Wall-clock pacing only; the simulated step stays fixed.
    #[serde(rename = "tick_rate")]
    TickRate(f64),
}

/// A command accepted from one client connection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Command {
    pub client: u64,
    pub seq: u64,
    #[serde(flatten)]
    pub verb: Verb,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Rejection {
    pub seq: Option<u64>,
    pub reason: String,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct Envelope {
    seq: u64,
    verb: String,
    #[serde(default)]
    args: Value,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SetNoiseArgs {
    amplitude: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RemoveArgs {
    id: u32,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct DepositArgs {
    x: f64,
    y: f64,
    amount: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SetParamArgs {
    path: String,
    value: Value,
}

/// What a command may be checked against before it is queued.
#[derive(Debug, Clone, Copy)]
pub struct CommandContext {
    pub arena: Arena,
}

fn args<T: for<'de> Deserialize<'de>>(verb: &str, v: Value) -> Result<T, String> {
    let v = if v.is_null() { Value::Object(Default::default()) } else { v };
    serde_json::from_value(v).map_err(|e| format!("bad args for {verb}: {e}"))
}

fn no_args(verb: &str, v: &Value) -> Result<(), String> {
    match v {
        Value::Null => Ok(()),
        Value::Object(m) if m.is_empty() => Ok(()),
        _ => Err(format!("{verb} takes no args")),
    }
}

fn finite(name: &str, v: f64) -> Result<f64, String> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(format!("{name} must be finite"))
    }
}

fn amplitude(a: f64) -> Result<f64, String> {
    check_amplitude(a).map_err(|_| "amplitude out of [0,1]".to_string())?;
    Ok(a)
}

fn param(path: &str, value: Value) -> Result<Param, String> {
    let num = |v: &Value| v.as_f64().ok_or_else(|| format!("{path} expects a number"));
    match path {
        "tiles.noise_amplitude" => Ok(Param::NoiseAmplitude(amplitude(num(&value)?)?)),
        "field.evaporation_rho" => {
            let rho = num(&value)?;
            if !(rho >= 0.0) || !rho.is_finite() {
                return Err("evaporation_rho must be >= 0".into());
            }
            Ok(Param::EvaporationRho(rho))
        }
        "overlay.palette" => {
            let p: Vec<Rgb> = serde_json::from_value(value)
                .map_err(|e| format!("overlay.palette expects [[r,g,b],...]: {e}"))?;
            if p.is_empty() {
                return Err("palette must not be empty".into());
            }
            Ok(Param::Palette(p))
        }
        "tick_rate" => {
            let hz = num(&value)?;
            if !(hz > 0.0) || !hz.is_finite() {
                return Err("tick_rate must be > 0".into());
            }
            Ok(Param::TickRate(hz))
        }
        _ => Err(format!("{path} is not live-tunable")),
    }
}

/// Parse and validate one raw message into a verb.
pub fn parse_command(raw: &str, ctx: &CommandContext) -> Result<(u64, Verb), Rejection> {
    let value: Value = serde_json::from_str(raw).map_err(|e| Rejection {
        seq: None,
        reason: format!("parse error at line {} column {}: {e}", e.line(), e.column()),
    })?;
    let seq = value.get("seq").and_then(Value::as_u64);
    let env: Envelope = serde_json::from_value(value).map_err(|e| Rejection {
        seq,
        reason: format!("bad message: {e}"),
    })?;
    let reject = |reason: String| Rejection {
        seq: Some(env.seq),
        reason,
    };
    let verb = match env.verb.as_str() {
        "start" => no_args("start", &env.args).map(|_| Verb::Start),
        "pause" => no_args("pause", &env.args).map(|_| Verb::Pause),
        "resume" => no_args("resume", &env.args).map(|_| Verb::Resume),
        "stop" => no_args("stop", &env.args).map(|_| Verb::Stop),
        "set_noise" => args::<SetNoiseArgs>("set_noise", env.args)
            .and_then(|a| amplitude(a.amplitude))
            .map(|amplitude| Verb::SetNoise { amplitude }),
        "add_object" => args::<VirtualObject>("add_object", env.args).and_then(|o| {
            o.validate().map_err(|e| e.to_string())?;
            Ok(Verb::AddObject(o))
        }),
        "remove_object" => args::<RemoveArgs>("remove_object", env.args)
            .map(|a| Verb::RemoveObject { id: a.id }),
        "deposit_at" => args::<DepositArgs>("deposit_at", env.args).and_then(|a| {
            let p = Point::new(finite("x", a.x)?, finite("y", a.y)?);
            if !ctx.arena.contains(p) {
                return Err(format!("position ({}, {}) lies outside the arena", p.x, p.y));
            }
            if !(a.amount >= 0.0) || !a.amount.is_finite() {
                return Err("amount must be >= 0".into());
            }
            Ok(Verb::DepositAt {
                x: a.x,
                y: a.y,
                amount: a.amount,
            })
        }),
        "set_param" => args::<SetParamArgs>("set_param", env.args)
            .and_then(|a| param(&a.path, a.value))
            .map(Verb::SetParam),
        other => Err(format!("unknown verb {other:?}")),
    }
    .map_err(reject)?;
    Ok((env.seq, verb))
}

/// Per-connection state: enforces strictly increasing seqs.
#[derive(Debug, Clone)]
pub struct Connection {
    pub client: u64,
    last_seq: Option<u64>,
}

impl Connection {
    pub fn new(client: u64) -> Self {
        Self {
            client,
            last_seq: None,
        }
    }
}

/// Reply to one inbound message.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum Reply {
    Ack { ack: u64 },
    Err { err: Option<u64>, reason: String },
}

impl Reply {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).unwrap_or_else(|_| "{}".into())
    }
}

/// Bounded inbound queue shared between API clients and the tick thread.
#[derive(Debug, Clone)]
pub struct CommandQueue {
    tx: Sender<Command>,
}

pub const COMMAND_QUEUE_CAPACITY: usize = 1024;

/// A command queue and the orchestrator-side source draining it.
pub fn command_queue() -> (CommandQueue, ChannelSource) {
    let (tx, rx) = crossbeam_channel::bounded(COMMAND_QUEUE_CAPACITY);
    (CommandQueue { tx }, ChannelSource { rx })
}

impl CommandQueue {
    /// Validate, enforce the seq rule and enqueue without blocking.
    pub fn handle_command(&self, raw: &str, conn: &mut Connection, ctx: &CommandContext) -> Reply {
        let (seq, verb) = match parse_command(raw, ctx) {
            Ok(v) => v,
            Err(r) => {
                return Reply::Err {
                    err: r.seq,
                    reason: r.reason,
                }
            }
        };
        if let Some(prev) = conn.last_seq {
            if seq <= prev {
                return Reply::Err {
                    err: Some(seq),
                    reason: format!("seq {seq} is not greater than previous seq {prev}"),
                };
            }
        }
        let cmd = Command {
            client: conn.client,
            seq,
            verb,
        };
        match self.tx.try_send(cmd) {
            Ok(()) => {
                conn.last_seq = Some(seq);
                Reply::Ack { ack: seq }
            }
            Err(TrySendError::Full(_)) => Reply::Err {
                err: Some(seq),
                reason: "command queue full".into(),
            },
            Err(TrySendError::Disconnected(_)) => Reply::Err {
                err: Some(seq),
                reason: "experiment has ended".into(),
            },
        }
    }
}

/// Where the orchestrator gets commands from.
pub trait CommandSource {
    /// Commands to apply at `tick`, in arrival order. Never blocks.
    fn poll(&mut self, tick: u64) -> Vec<Command>;

    /// True when no further command can ever arrive.
    fn is_closed(&self) -> bool {
        false
    }
}

impl<S: CommandSource + ?Sized> CommandSource for &mut S {
    fn poll(&mut self, tick: u64) -> Vec<Command> {
        (**self).poll(tick)
    }

    fn is_closed(&self) -> bool {
        (**self).is_closed()
    }
}

/// No commands at all.
#[derive(Debug, Default, Clone, Copy)]
pub struct NoCommands;

impl CommandSource for NoCommands {
    fn poll(&mut self, _tick: u64) -> Vec<Command> {
        Vec::new()
    }

    fn is_closed(&self) -> bool {
        true
    }
}

/// Live commands from the API.
#[derive(Debug)]
pub struct ChannelSource {
    rx: Receiver<Command>,
}

impl CommandSource for ChannelSource {
    fn poll(&mut self, _tick: u64) -> Vec<Command> {
        self.rx.try_iter().collect()
    }
}

/// One applied command as recorded in a trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub tick: u64,
    #[serde(flatten)]
    pub command: Command,
}

/// Commands scheduled by the tick at which they apply.
#[derive(Debug, Clone, Default)]
pub struct ScriptedSource {
    entries: VecDeque<TraceEntry>,
}

impl ScriptedSource {
    pub fn new(mut entries: Vec<TraceEntry>) -> Self {
        // stable: arrival order within a tick is kept
        entries.sort_by_key(|e| e.tick);
        Self {
            entries: entries.into(),
        }
    }

    /// Schedule `verb` from client 0 to apply at `tick`.
    pub fn push(&mut self, tick: u64, seq: u64, verb: Verb) {
        self.entries.push_back(TraceEntry {
            tick,
            command: Command {
                client: 0,
                seq,
                verb,
            },
        });
        self.entries.make_contiguous().sort_by_key(|e| e.tick);
    }

    pub fn load(path: impl AsRef<Path>) -> std::io::Result<Self> {
        let file = std::fs::File::open(path)?;
        let mut entries = Vec::new();
        for (i, line) in std::io::BufReader::new(file).lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let e: TraceEntry = serde_json::from_str(&line).map_err(|e| {
                std::io::Error::new(
                    std::io::ErrorKind::InvalidData,
                    format!("trace line {}: {e}", i + 1),
                )
            })?;
            entries.push(e);
        }
        Ok(Self::new(entries))
    }
}

impl CommandSource for ScriptedSource {
    fn poll(&mut self, tick: u64) -> Vec<Command> {
        let mut out = Vec::new();
        while self.entries.front().is_some_and(|e| e.tick <= tick) {
            if let Some(e) = self.entries.pop_front() {
                out.push(e.command);
            }
        }
        out
    }

    fn is_closed(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Scripted commands first, then live ones.
pub struct Chain<A, B>(pub A, pub B);

impl<A: CommandSource, B: CommandSource> CommandSource for Chain<A, B> {
    fn poll(&mut self, tick: u64) -> Vec<Command> {
        let mut v = self.0.poll(tick);
        v.extend(self.1.poll(tick));
        v
    }

    fn is_closed(&self) -> bool {
        self.0.is_closed() && self.1.is_closed()
    }
}

/// Append one trace line.
pub fn write_trace_entry(w: &mut impl Write, entry: &TraceEntry) -> std::io::Result<()> {
    let line = serde_json::to_string(entry).map_err(std::io::Error::other)?;
    writeln!(w, "{line}")
}
