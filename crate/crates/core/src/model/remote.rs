use std::io::{self, BufReader, BufWriter, Read, Write};
use std::net::TcpStream;
use std::process::{Child, Command, Stdio};
use std::str::FromStr;
use std::sync::Mutex;
use std::time::Duration;

use crate::error::{Error, Result};
use crate::image::{ClassScoreVector, ColorSpace};

use super::protocol::{self, Capabilities, Frame, Opcode, ReadOutcome};
use super::{ModelAdapter, ScoreRequest};

/// Where an external scorer lives: `tcp:host:port` or `stdio:<command>`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Endpoint {
    Tcp(String),
    Stdio(String),
}

impl FromStr for Endpoint {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if let Some(addr) = s.strip_prefix("tcp:") {
            if addr.is_empty() {
                return Err(Error::Config("empty tcp endpoint".into()));
            }
            Ok(Endpoint::Tcp(addr.to_string()))
        } else if let Some(cmd) = s.strip_prefix("stdio:") {
            if cmd.trim().is_empty() {
                return Err(Error::Config("empty stdio command".into()));
            }
            Ok(Endpoint::Stdio(cmd.to_string()))
        } else {
            Err(Error::Config(format!(
                "scorer endpoint {s:?} must start with tcp: or stdio:"
            )))
        }
    }
}

struct Connection {
    reader: Box<dyn Read + Send>,
    writer: Box<dyn Write + Send>,
    child: Option<Child>,
    next_seq: u64,
}

impl Drop for Connection {
    fn drop(&mut self) {
        if let Some(child) = self.child.as_mut() {
            let _ = child.kill();
            let _ = child.wait();
        }
    }
}

fn transport(e: io::Error) -> Error {
    Error::ScorerUnavailable(e.to_string())
}

/// Client side of the scorer protocol. One request is in flight at a time;
/// concurrent callers queue on the connection.
pub struct RemoteScorer {
    conn: Mutex<Connection>,
    caps: Capabilities,
}

impl RemoteScorer {
    pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(120);

    pub fn connect(endpoint: &Endpoint) -> Result<Self> {
        Self::connect_with_timeout(endpoint, Self::DEFAULT_TIMEOUT)
    }

    pub fn connect_with_timeout(endpoint: &Endpoint, timeout: Duration) -> Result<Self> {
        let conn = match endpoint {
            Endpoint::Tcp(addr) => {
                let stream = TcpStream::connect(addr).map_err(transport)?;
                stream.set_read_timeout(Some(timeout)).map_err(transport)?;
                stream.set_write_timeout(Some(timeout)).map_err(transport)?;
                stream.set_nodelay(true).map_err(transport)?;
                let reader = stream.try_clone().map_err(transport)?;
                Connection {
                    reader: Box::new(BufReader::new(reader)),
                    writer: Box::new(BufWriter::new(stream)),
                    child: None,
                    next_seq: 1,
                }
            }
            Endpoint::Stdio(cmd) => {
                let mut parts = cmd.split_whitespace();
                let program = parts
                    .next()
                    .ok_or_else(|| Error::Config("empty stdio command".into()))?;
                let mut child = Command::new(program)
                    .args(parts)
                    .stdin(Stdio::piped())
                    .stdout(Stdio::piped())
                    .stderr(Stdio::inherit())
                    .spawn()
                    .map_err(transport)?;
                let stdin = child.stdin.take().expect("piped stdin");
                let stdout = child.stdout.take().expect("piped stdout");
                Connection {
                    reader: Box::new(BufReader::new(stdout)),
                    writer: Box::new(BufWriter::new(stdin)),
                    child: Some(child),
                    next_seq: 1,
                }
            }
        };
        let conn = Mutex::new(conn);
        let reply = Self::roundtrip_on(&conn, Opcode::Capabilities, Vec::new())?;
        let caps: Capabilities = serde_json::from_slice(&reply)
            .map_err(|e| Error::Protocol(format!("bad capabilities JSON: {e}")))?;
        Ok(Self { conn, caps })
    }

    pub fn capabilities(&self) -> &Capabilities {
        &self.caps
    }

    /// Protocol self-test: returns the echoed payload.
    pub fn echo(&self, payload: &[u8]) -> Result<Vec<u8>> {
        Self::roundtrip_on(&self.conn, Opcode::Echo, payload.to_vec())
    }

    /// Sends a raw score frame and returns the response payload bytes.
    pub fn score_payload(&self, payload: Vec<u8>) -> Result<Vec<u8>> {
        Self::roundtrip_on(&self.conn, Opcode::Score, payload)
    }

    fn roundtrip_on(conn: &Mutex<Connection>, opcode: Opcode, payload: Vec<u8>) -> Result<Vec<u8>> {
        let mut conn = conn
            .lock()
            .map_err(|_| Error::ScorerUnavailable("connection poisoned".into()))?;
        let seq = conn.next_seq;
        conn.next_seq += 1;
        Frame::new(opcode, seq, payload)
            .write_to(&mut conn.writer)
            .map_err(transport)?;
        let reply = match protocol::read_frame(&mut conn.reader).map_err(transport)? {
            ReadOutcome::Frame(f) => f,
            ReadOutcome::Closed => {
                return Err(Error::ScorerUnavailable("scorer closed the connection".into()))
            }
            ReadOutcome::Malformed { reason, .. } => return Err(Error::Protocol(reason)),
        };
        if reply.seq != seq {
            return Err(Error::Protocol(format!(
                "response seq {} does not match request {seq}",
                reply.seq
            )));
        }
        if reply.opcode == Opcode::Error {
            return Err(Error::Protocol(format!(
                "scorer error: {}",
                String::from_utf8_lossy(&reply.payload)
            )));
        }
        if reply.opcode != opcode {
            return Err(Error::Protocol(format!(
                "response opcode {:?} for request {opcode:?}",
                reply.opcode
            )));
        }
        Ok(reply.payload)
    }
}

impl ModelAdapter for RemoteScorer {
    fn input_space(&self) -> ColorSpace {
        self.caps.input_space.into()
    }

    fn n_classes(&self) -> usize {
        self.caps.n_classes
    }

    fn deterministic(&self) -> bool {
        self.caps.deterministic
    }

    fn score_batch(&self, req: &ScoreRequest<'_>) -> Result<Vec<ClassScoreVector>> {
        let payload = protocol::encode_score_request(req.batch)?;
        let reply = self.score_payload(payload)?;
        let rows = protocol::decode_score_response(&reply)?;
        if rows.len() != req.batch.len() {
            return Err(Error::Protocol(format!(
                "scorer returned {} rows for {} images",
                rows.len(),
                req.batch.len()
            )));
        }
        rows.into_iter()
            .map(|scores| {
                ClassScoreVector::new(scores, req.target_class)
                    .map_err(|e| Error::Protocol(format!("invalid score row: {e}")))
            })
            .collect()
    }
}
