//! Newline-delimited JSON transport.
//!
//! Every line is one JSON object with a `type` field. Requests:
//!
//! ```text
//! {"type":"init","protocol":"tactile-mpm/1","control_dt":1e-3,"terminal":{"max_depth":1e-3}}
//! {"type":"step","mode":"velocity","vector":[0,0,-0.1],"sim_time":0.001,"request_image":true}
//! {"type":"end"}
//! ```
//!
//! Replies are `ready` (after init), `state` (after each step, the fields
//! of [`StepReply`]), `bye` (after end) and `error`. An error names the
//! failure and echoes the offending line; the connection stays usable.
//! Sessions run one after another; each `init` starts a fresh one.

use std::io::{BufRead, BufReader, BufWriter, Write};
use std::net::TcpListener;
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::{Session, SessionSpec, StepCommand, StepReply, PROTOCOL};
use crate::error::{Error, Result};
use crate::SceneConfig;

enum Request {
    Init { protocol: Option<String>, spec: SessionSpec },
    Step(StepCommand),
    End,
}

impl Request {
    fn parse(line: &str) -> Result<Self> {
        let bad = |e: serde_json::Error| Error::Protocol(e.to_string());
        let mut value: serde_json::Value = serde_json::from_str(line).map_err(bad)?;
        let fields = value
            .as_object_mut()
            .ok_or_else(|| Error::Protocol("message must be a JSON object".into()))?;
        let kind = match fields.remove("type") {
            Some(serde_json::Value::String(s)) => s,
            _ => return Err(Error::Protocol("missing string field \"type\"".into())),
        };
        match kind.as_str() {
            "init" => {
                let protocol = match fields.remove("protocol") {
                    None => None,
                    Some(serde_json::Value::String(p)) => Some(p),
                    Some(other) => return Err(Error::Protocol(format!("bad protocol {other}"))),
                };
                let spec = serde_json::from_value(value).map_err(bad)?;
                Ok(Request::Init { protocol, spec })
            }
            "step" => Ok(Request::Step(serde_json::from_value(value).map_err(bad)?)),
            "end" if fields.is_empty() => Ok(Request::End),
            "end" => Err(Error::Protocol("end takes no fields".into())),
            other => Err(Error::Protocol(format!("unknown message type {other:?}"))),
        }
    }
}

#[derive(Debug, Serialize)]
#[serde(tag = "type", rename_all = "lowercase")]
enum Reply<'a> {
    Ready {
        protocol: &'a str,
        object: &'a str,
        session_dir: &'a Path,
        dt: f64,
        substeps: usize,
        depth: f64,
    },
    State(&'a StepReply),
    Bye {
        steps: u64,
    },
    Error {
        code: i32,
        message: String,
        echo: &'a str,
    },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Endpoint {
    Stdio,
    /// `host:port` to listen on.
    Tcp(String),
}

/// Serves sessions for `config`. Session directories default to
/// `<output_dir>/session-NNN`, numbered in order of `init`.
pub struct Server {
    config: SceneConfig,
    base: PathBuf,
    sessions: usize,
}

impl Server {
    pub fn new(config: SceneConfig, base: impl Into<PathBuf>) -> Self {
        Server {
            config,
            base: base.into(),
            sessions: 0,
        }
    }

    pub fn run(&mut self, endpoint: &Endpoint) -> Result<()> {
        match endpoint {
            Endpoint::Stdio => {
                let stdin = std::io::stdin();
                let stdout = std::io::stdout();
                self.serve(stdin.lock(), stdout.lock())
            }
            Endpoint::Tcp(addr) => {
                let listener = TcpListener::bind(addr)?;
                log::info!("listening on {}", listener.local_addr()?);
                for stream in listener.incoming() {
                    let stream = stream?;
                    let reader = BufReader::new(stream.try_clone()?);
                    if let Err(e) = self.serve(reader, BufWriter::new(stream)) {
                        log::warn!("connection closed: {e}");
                    }
                }
                Ok(())
            }
        }
    }

    /// Handles requests from `input` until end of stream.
    pub fn serve(&mut self, input: impl BufRead, mut output: impl Write) -> Result<()> {
        let mut session: Option<Session> = None;
        for line in input.lines() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let reply = self.dispatch(&line, &mut session);
            let text = match reply {
                Ok(text) => text,
                Err(e) => serde_json::to_string(&Reply::Error {
                    code: e.code(),
                    message: e.to_string(),
                    echo: &line,
                })?,
            };
            writeln!(output, "{text}")?;
            output.flush()?;
        }
        Ok(())
    }

    fn dispatch(&mut self, line: &str, session: &mut Option<Session>) -> Result<String> {
        match Request::parse(line)? {
            Request::Init { protocol, spec } => {
                if let Some(p) = protocol {
                    if p != PROTOCOL {
                        return Err(Error::Protocol(format!("unsupported protocol {p:?}, expected {PROTOCOL}")));
                    }
                }
                self.sessions += 1;
                let default_dir = self.config.output_dir.join(format!("session-{:03}", self.sessions));
                let s = Session::new(&self.config, &spec, &self.base, &default_dir)?;
                let text = serde_json::to_string(&Reply::Ready {
                    protocol: PROTOCOL,
                    object: s.object(),
                    session_dir: s.dir(),
                    dt: s.dt(),
                    substeps: s.substeps(),
                    depth: s.depth(),
                })?;
                *session = Some(s);
                Ok(text)
            }
            Request::Step(cmd) => {
                let s = session.as_mut().ok_or(Error::SessionNotInitialized)?;
                let reply = s.handle_command(&cmd)?;
                Ok(serde_json::to_string(&Reply::State(&reply))?)
            }
            Request::End => {
                let s = session.take().ok_or(Error::SessionNotInitialized)?;
                Ok(serde_json::to_string(&Reply::Bye { steps: s.step })?)
            }
        }
    }
}
