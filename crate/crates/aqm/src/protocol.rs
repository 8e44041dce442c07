//! Line-delimited JSON bridge to an out-of-process answerer.
//!
//! The questioner side writes one JSON object per line and, for answer
//! requests, blocks for exactly one response line:
//!
//! ```text
//! -> {"type":"hello","version":1}
//! <- {"type":"hello","version":1}
//! -> {"type":"start","game":0,"image_id":42,"digits":[["red","cyan","3","flat"], ...]}
//! -> {"type":"answer","game":0,"turn":1,"question":{"property":"color","value":"red"}}
//! <- {"answer":3}
//! ```
//!
//! `start` announces the target image of a game and expects no reply.

use std::io::{self, BufRead, BufReader, Read, Write};
use std::process::{Child, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::thread;
use std::time::Duration;

use aqm_core::engine::AnswererFault;
use aqm_core::mnist::{CountQuestion, DigitImage, Property, DIGITS_PER_IMAGE};
use serde::{Deserialize, Serialize};

use crate::harness::ExternalAnswerer;

pub const PROTOCOL_VERSION: u32 = 1;
pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(30);

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WireQuestion {
    pub property: String,
    pub value: String,
}

impl From<&CountQuestion> for WireQuestion {
    fn from(q: &CountQuestion) -> Self {
        WireQuestion { property: q.property.name().to_string(), value: q.value_name().to_string() }
    }
}

impl WireQuestion {
    pub fn parse(&self) -> Option<CountQuestion> {
        let p = Property::parse(&self.property)?;
        CountQuestion::new(p, p.parse_value(&self.value)?)
    }
}

/// Messages sent to the answerer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Request {
    Hello { version: u32 },
    Start { game: usize, image_id: u32, digits: Vec<[String; 4]> },
    Answer { game: usize, turn: usize, question: WireQuestion },
}

impl Request {
    pub fn start(game: usize, image: &DigitImage) -> Self {
        let digits = image
            .digits
            .iter()
            .map(|d| Property::ALL.map(|p| p.value_name(d.get(p)).expect("valid digit").to_string()))
            .collect();
        Request::Start { game, image_id: image.id, digits }
    }

    /// The message as one newline-terminated line.
    pub fn to_line(&self) -> String {
        let mut s = serde_json::to_string(self).expect("requests always serialize");
        s.push('\n');
        s
    }

    pub fn parse_line(line: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(line.trim_end())
    }

    /// The target image of a `start` message.
    pub fn image(&self) -> Option<DigitImage> {
        let Request::Start { image_id, digits, .. } = self else { return None };
        if digits.len() != DIGITS_PER_IMAGE {
            return None;
        }
        let mut image = DigitImage { id: *image_id, digits: Default::default() };
        for (d, names) in image.digits.iter_mut().zip(digits) {
            for (p, name) in Property::ALL.into_iter().zip(names) {
                d.0[p.index()] = p.parse_value(name)?;
            }
        }
        Some(image)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnswerResponse {
    pub answer: i64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum HelloResponse {
    Hello { version: u32 },
}

#[derive(Debug, thiserror::Error)]
pub enum ProtocolError {
    #[error("answerer I/O: {0}")]
    Io(#[from] io::Error),
    #[error("answerer closed the stream")]
    Closed,
    #[error("no handshake within {0:?}")]
    Timeout(Duration),
    #[error("bad handshake: {0}")]
    Handshake(String),
}

/// The questioner's end of the bridge.
pub struct Bridge {
    writer: Box<dyn Write + Send>,
    lines: Receiver<io::Result<String>>,
    timeout: Duration,
    // Requests that timed out and may still get a reply.
    late: usize,
    child: Option<Child>,
}

impl Bridge {
    /// Talks over an arbitrary pair of streams, e.g. this process's own
    /// stdin and stdout.
    pub fn over(reader: impl Read + Send + 'static, writer: impl Write + Send + 'static, timeout: Duration) -> Self {
        let (tx, rx) = mpsc::channel();
        thread::spawn(move || {
            for line in BufReader::new(reader).lines() {
                let stop = line.is_err();
                if tx.send(line).is_err() || stop {
                    break;
                }
            }
        });
        Bridge { writer: Box::new(writer), lines: rx, timeout, late: 0, child: None }
    }

    /// Spawns `program args...` and talks over its stdin/stdout.
    pub fn spawn(program: &str, args: &[String], timeout: Duration) -> io::Result<Self> {
        let mut child = Command::new(program).args(args).stdin(Stdio::piped()).stdout(Stdio::piped()).spawn()?;
        let stdin = child.stdin.take().expect("piped");
        let stdout = child.stdout.take().expect("piped");
        let mut bridge = Bridge::over(stdout, stdin, timeout);
        bridge.child = Some(child);
        Ok(bridge)
    }

    fn send(&mut self, request: &Request) -> io::Result<()> {
        self.writer.write_all(request.to_line().as_bytes())?;
        self.writer.flush()
    }

    fn receive(&mut self) -> Result<String, RecvTimeoutError> {
        match self.lines.recv_timeout(self.timeout)? {
            Ok(line) => Ok(line),
            Err(_) => Err(RecvTimeoutError::Disconnected),
        }
    }

    pub fn handshake(&mut self) -> Result<(), ProtocolError> {
        self.send(&Request::Hello { version: PROTOCOL_VERSION })?;
        let line = match self.receive() {
            Ok(l) => l,
            Err(RecvTimeoutError::Timeout) => return Err(ProtocolError::Timeout(self.timeout)),
            Err(RecvTimeoutError::Disconnected) => return Err(ProtocolError::Closed),
        };
        match serde_json::from_str::<HelloResponse>(&line) {
            Ok(HelloResponse::Hello { version: PROTOCOL_VERSION }) => Ok(()),
            Ok(HelloResponse::Hello { version }) => {
                Err(ProtocolError::Handshake(format!("peer speaks version {version}, expected {PROTOCOL_VERSION}")))
            }
            Err(e) => Err(ProtocolError::Handshake(format!("`{line}`: {e}"))),
        }
    }
}

fn fatal(e: io::Error) -> AnswererFault {
    AnswererFault::fatal(format!("answerer I/O: {e}"))
}

/// Interprets one response line.
pub fn parse_answer(line: &str) -> Result<usize, String> {
    let r: AnswerResponse =
        serde_json::from_str(line.trim_end()).map_err(|e| format!("protocol-error: malformed response `{line}`: {e}"))?;
    if (0..=DIGITS_PER_IMAGE as i64).contains(&r.answer) {
        Ok(r.answer as usize)
    } else {
        Err(format!("protocol-error: answer {} outside 0..={DIGITS_PER_IMAGE}", r.answer))
    }
}

impl ExternalAnswerer for Bridge {
    fn start_game(&mut self, game: usize, target: &DigitImage) -> Result<(), AnswererFault> {
        self.send(&Request::start(game, target)).map_err(fatal)
    }

    fn answer(&mut self, game: usize, turn: usize, question: &CountQuestion) -> Result<usize, AnswererFault> {
        // Drop replies to requests we already gave up on.
        while self.late > 0 && matches!(self.lines.try_recv(), Ok(Ok(_))) {
            self.late -= 1;
        }
        self.send(&Request::Answer { game, turn, question: question.into() }).map_err(fatal)?;
        match self.receive() {
            Ok(line) => parse_answer(&line).map_err(AnswererFault::game),
            Err(RecvTimeoutError::Timeout) => {
                self.late += 1;
                Err(AnswererFault::game(format!("protocol-error: no answer within {:?}", self.timeout)))
            }
            Err(RecvTimeoutError::Disconnected) => Err(AnswererFault::fatal("answerer closed the stream")),
        }
    }
}

impl Drop for Bridge {
    fn drop(&mut self) {
        if let Some(mut child) = self.child.take() {
            // Closing stdin lets a well-behaved answerer exit on its own.
            self.writer = Box::new(io::sink());
            let _ = child.wait();
        }
    }
}

/// Serves the answerer side for a world of known images: replies to every
/// request with the true count. Used by the `echo-oracle` test double.
pub fn serve_true_counts<R: BufRead, W: Write>(input: R, mut output: W) -> io::Result<()> {
    let mut target: Option<DigitImage> = None;
    for line in input.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let request = Request::parse_line(&line).map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))?;
        match &request {
            Request::Hello { version } => {
                writeln!(output, "{}", serde_json::to_string(&HelloResponse::Hello { version: *version }).unwrap())?
            }
            Request::Start { .. } => target = request.image(),
            Request::Answer { question, .. } => {
                let count = match (&target, question.parse()) {
                    (Some(img), Some(q)) => img.count(&q) as i64,
                    _ => -1,
                };
                writeln!(output, "{}", serde_json::to_string(&AnswerResponse { answer: count }).unwrap())?;
            }
        }
        output.flush()?;
    }
    Ok(())
}
