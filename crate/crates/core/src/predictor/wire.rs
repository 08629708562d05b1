//! Newline-delimited JSON protocol for predictors that live in another process.
//!
//! ```text
//! server → {"proto":"mdm-pred/1","vocab":V,"mask_id":m}                      (once)
//! client → {"id":u64,"tokens":[..],"mask_id":m,"block":[start,end],"step":s,"prompt_id":".."}
//! server → {"id":u64,"entries":[{"pos":p,"token":t,"conf":c}, ..]}
//! ```
//!
//! `prompt_id` is optional; servers that only look at `tokens` can ignore it.
//! A server may answer a request it cannot serve with `{"id":..,"error":".."}`.

use std::io::{BufRead, BufReader, BufWriter, Write};
use std::net::{TcpStream, ToSocketAddrs};
use std::process::{Child, Command, Stdio};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::{PredictionFrame, Predictor, PromptContext, Proposal};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::seqstate::{SequenceState, TokenId};

pub const PROTOCOL: &str = "mdm-pred/1";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Handshake {
    pub proto: String,
    pub vocab: usize,
    pub mask_id: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PredictorRequest {
    pub id: u64,
    pub tokens: Vec<u32>,
    pub mask_id: u32,
    pub block: [usize; 2],
    pub step: usize,
    /// Dataset id of the sequence, for servers that key on it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prompt_id: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WireEntry {
    pub pos: usize,
    pub token: u32,
    pub conf: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictorResponse {
    pub id: u64,
    pub entries: Vec<WireEntry>,
}

#[derive(Deserialize)]
struct ErrorReply {
    id: Option<u64>,
    error: String,
}

fn to_line<T: Serialize>(value: &T) -> Vec<u8> {
    let mut line = serde_json::to_vec(value).expect("wire types serialize");
    line.push(b'\n');
    line
}

/// Builds the request for block `block` (1-based) at `step`.
pub fn build_request(state: &SequenceState, block: usize, step: usize, id: u64) -> Result<PredictorRequest> {
    let range = state.layout().block_range(block)?;
    Ok(PredictorRequest {
        id,
        tokens: state.tokens().iter().map(|t| t.0).collect(),
        mask_id: state.mask_id().0,
        block: [range.start, range.end],
        step,
        prompt_id: None,
    })
}

/// One request line, UTF-8 JSON terminated by `\n`.
pub fn encode_request(state: &SequenceState, block: usize, step: usize, id: u64) -> Result<Vec<u8>> {
    Ok(to_line(&build_request(state, block, step, id)?))
}

pub fn encode_response<F: Scalar>(id: u64, frame: &PredictionFrame<F>) -> Vec<u8> {
    to_line(&PredictorResponse {
        id,
        entries: frame
            .entries
            .iter()
            .map(|(&pos, p)| WireEntry {
                pos,
                token: p.token.0,
                conf: p.conf.as_f64(),
            })
            .collect(),
    })
}

pub fn encode_handshake(vocab: usize, mask_id: TokenId) -> Vec<u8> {
    to_line(&Handshake {
        proto: PROTOCOL.to_string(),
        vocab,
        mask_id: mask_id.0,
    })
}

/// Parses a handshake line and checks the protocol version.
pub fn decode_handshake(line: &[u8]) -> Result<Handshake> {
    let hs: Handshake =
        serde_json::from_slice(line).map_err(|e| Error::MalformedResponse(format!("handshake: {e}")))?;
    if hs.proto != PROTOCOL {
        return Err(Error::ProtocolMismatch {
            expected: PROTOCOL.to_string(),
            got: hs.proto,
        });
    }
    if hs.mask_id as usize >= hs.vocab {
        return Err(Error::MalformedResponse(format!(
            "mask id {} outside vocabulary {}",
            hs.mask_id, hs.vocab
        )));
    }
    Ok(hs)
}

/// Decodes a response to `request`, checking id and exact coverage of the
/// masked positions inside the requested block.
pub fn decode_response<F: Scalar>(
    line: &[u8],
    request: &PredictorRequest,
    block: usize,
    vocab: usize,
) -> Result<PredictionFrame<F>> {
    let resp: PredictorResponse = match serde_json::from_slice(line) {
        Ok(r) => r,
        Err(e) => {
            if let Ok(err) = serde_json::from_slice::<ErrorReply>(line) {
                return Err(Error::PredictorUnavailable(format!(
                    "server error for request {:?}: {}",
                    err.id, err.error
                )));
            }
            return Err(Error::MalformedResponse(e.to_string()));
        }
    };
    if resp.id != request.id {
        return Err(Error::IdMismatch {
            expected: request.id,
            got: resp.id,
        });
    }
    let [start, end] = request.block;
    let masked: Vec<usize> = (start..end.min(request.tokens.len()))
        .filter(|&i| request.tokens[i] == request.mask_id)
        .collect();
    let mut frame = PredictionFrame::new(block, request.step);
    for e in resp.entries {
        if masked.binary_search(&e.pos).is_err() {
            return Err(Error::MalformedResponse(format!(
                "position {} is not masked in the block",
                e.pos
            )));
        }
        if e.token as usize >= vocab || e.token == request.mask_id {
            return Err(Error::MalformedResponse(format!(
                "invalid token {} at {}",
                e.token, e.pos
            )));
        }
        if !(e.conf > 0.0 && e.conf <= 1.0) {
            return Err(Error::ConfidenceOutOfRange(e.conf));
        }
        let proposal = Proposal {
            token: TokenId(e.token),
            conf: F::of(e.conf),
        };
        if frame.entries.insert(e.pos, proposal).is_some() {
            return Err(Error::MalformedResponse(format!("position {} listed twice", e.pos)));
        }
    }
    if let Some(&missing) = masked.iter().find(|p| !frame.entries.contains_key(p)) {
        return Err(Error::IncompleteCoverage(missing));
    }
    Ok(frame)
}

/// Client end of one protocol session: one request in flight at a time.
pub struct WireSession<R, W> {
    reader: R,
    writer: W,
    handshake: Handshake,
    next_id: u64,
}

impl<R: BufRead, W: Write> WireSession<R, W> {
    /// Reads and checks the server handshake.
    pub fn open(mut reader: R, writer: W) -> Result<Self> {
        let line = read_line(&mut reader)?;
        let handshake = decode_handshake(&line)?;
        Ok(Self {
            reader,
            writer,
            handshake,
            next_id: 1,
        })
    }

    pub fn handshake(&self) -> &Handshake {
        &self.handshake
    }

    pub fn predict<F: Scalar>(
        &mut self,
        prompt_id: Option<&str>,
        state: &SequenceState,
        block: usize,
        step: usize,
    ) -> Result<PredictionFrame<F>> {
        if state.mask_id().0 != self.handshake.mask_id {
            return Err(Error::PredictorUnavailable(format!(
                "state mask id {} differs from server mask id {}",
                state.mask_id().0,
                self.handshake.mask_id
            )));
        }
        let mut request = build_request(state, block, step, self.next_id)?;
        request.prompt_id = prompt_id.map(str::to_string);
        if state.masked_in_block(block)?.is_empty() {
            return Err(Error::EmptyBlock(block));
        }
        self.next_id += 1;
        self.writer
            .write_all(&to_line(&request))
            .and_then(|_| self.writer.flush())
            .map_err(|e| Error::PredictorUnavailable(e.to_string()))?;
        let line = read_line(&mut self.reader)?;
        decode_response(&line, &request, block, self.handshake.vocab)
    }
}

fn read_line<R: BufRead>(reader: &mut R) -> Result<Vec<u8>> {
    let mut line = Vec::new();
    let n = reader
        .read_until(b'\n', &mut line)
        .map_err(|e| Error::PredictorUnavailable(e.to_string()))?;
    if n == 0 {
        return Err(Error::PredictorUnavailable("connection closed".into()));
    }
    Ok(line)
}

type BoxedSession = WireSession<Box<dyn BufRead + Send>, Box<dyn Write + Send>>;

/// Predictor backed by an external process or TCP peer speaking the wire protocol.
pub struct ExternPredictor {
    session: Mutex<BoxedSession>,
    child: Option<Child>,
}

impl ExternPredictor {
    /// Launches `cmd` through `sh -c` and talks to it over stdio.
    pub fn spawn(cmd: &str) -> Result<Self> {
        let mut child = Command::new("sh")
            .arg("-c")
            .arg(cmd)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| Error::PredictorUnavailable(format!("spawn {cmd:?}: {e}")))?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = child.stdout.take().expect("piped stdout");
        match Self::from_streams(BufReader::new(stdout), BufWriter::new(stdin)) {
            Ok(mut p) => {
                p.child = Some(child);
                Ok(p)
            }
            Err(e) => {
                let _ = child.kill();
                let _ = child.wait();
                Err(e)
            }
        }
    }

    pub fn connect_tcp<A: ToSocketAddrs>(addr: A) -> Result<Self> {
        let stream = TcpStream::connect(addr).map_err(|e| Error::PredictorUnavailable(e.to_string()))?;
        let write_half = stream
            .try_clone()
            .map_err(|e| Error::PredictorUnavailable(e.to_string()))?;
        Self::from_streams(BufReader::new(stream), BufWriter::new(write_half))
    }

    pub fn from_streams<R, W>(reader: R, writer: W) -> Result<Self>
    where
        R: BufRead + Send + 'static,
        W: Write + Send + 'static,
    {
        let session = WireSession::open(
            Box::new(reader) as Box<dyn BufRead + Send>,
            Box::new(writer) as Box<dyn Write + Send>,
        )?;
        Ok(Self {
            session: Mutex::new(session),
            child: None,
        })
    }

    pub fn handshake(&self) -> Handshake {
        self.lock().handshake().clone()
    }

    fn lock(&self) -> std::sync::MutexGuard<'_, BoxedSession> {
        self.session.lock().unwrap_or_else(|poisoned| poisoned.into_inner())
    }
}

impl Drop for ExternPredictor {
    fn drop(&mut self) {
        if let Some(mut child) = self.child.take() {
            // Closing stdin lets a well-behaved server exit on EOF.
            drop(std::mem::replace(&mut self.lock().writer, Box::new(std::io::sink())));
            let _ = child.wait();
        }
    }
}

impl<F: Scalar> Predictor<F> for ExternPredictor {
    fn vocab_size(&self) -> usize {
        self.lock().handshake().vocab
    }

    fn mask_id(&self) -> TokenId {
        TokenId(self.lock().handshake().mask_id)
    }

    fn predict(
        &self,
        ctx: &PromptContext<'_>,
        state: &SequenceState,
        block: usize,
        step: usize,
    ) -> Result<PredictionFrame<F>> {
        self.lock().predict(Some(ctx.id), state, block, step)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MASK: TokenId = TokenId(9);

    fn state() -> SequenceState {
        // prompt [1,2,3,4], block 1 = positions 4..6, block 2 = 6..8
        SequenceState::init(&[TokenId(1), TokenId(2), TokenId(3), TokenId(4)], 4, 2, MASK).unwrap()
    }

    #[test]
    fn request_shape() {
        let line = encode_request(&state(), 1, 0, 7).unwrap();
        assert_eq!(*line.last().unwrap(), b'\n');
        let v: serde_json::Value = serde_json::from_slice(&line).unwrap();
        assert_eq!(
            v,
            serde_json::json!({"id":7,"tokens":[1,2,3,4,9,9,9,9],"mask_id":9,"block":[4,6],"step":0})
        );
    }

    #[test]
    fn response_round_trip() {
        let req = build_request(&state(), 1, 0, 3).unwrap();
        let mut frame = PredictionFrame::<f64>::new(1, 0);
        frame.entries.insert(
            4,
            Proposal {
                token: TokenId(5),
                conf: 0.25,
            },
        );
        frame.entries.insert(
            5,
            Proposal {
                token: TokenId(6),
                conf: 1.0,
            },
        );
        let decoded: PredictionFrame<f64> = decode_response(&encode_response(3, &frame), &req, 1, 10).unwrap();
        assert_eq!(decoded, frame);
    }

    #[test]
    fn response_errors() {
        let req = build_request(&state(), 1, 0, 3).unwrap();
        let missing = br#"{"id":3,"entries":[{"pos":4,"token":1,"conf":0.5}]}"#;
        assert_eq!(
            decode_response::<f64>(missing, &req, 1, 10),
            Err(Error::IncompleteCoverage(5))
        );
        let wrong_id = br#"{"id":4,"entries":[]}"#;
        assert_eq!(
            decode_response::<f64>(wrong_id, &req, 1, 10),
            Err(Error::IdMismatch { expected: 3, got: 4 })
        );
        assert!(matches!(
            decode_response::<f64>(b"nope", &req, 1, 10),
            Err(Error::MalformedResponse(_))
        ));
        let outside = br#"{"id":3,"entries":[{"pos":4,"token":1,"conf":0.5},{"pos":5,"token":1,"conf":0.5},{"pos":6,"token":1,"conf":0.5}]}"#;
        assert!(matches!(
            decode_response::<f64>(outside, &req, 1, 10),
            Err(Error::MalformedResponse(_))
        ));
        let bad_conf = br#"{"id":3,"entries":[{"pos":4,"token":1,"conf":0.0},{"pos":5,"token":1,"conf":0.5}]}"#;
        assert_eq!(
            decode_response::<f64>(bad_conf, &req, 1, 10),
            Err(Error::ConfidenceOutOfRange(0.0))
        );
        let err = br#"{"id":3,"error":"boom"}"#;
        assert!(matches!(
            decode_response::<f64>(err, &req, 1, 10),
            Err(Error::PredictorUnavailable(_))
        ));
    }

    #[test]
    fn handshake_version_check() {
        assert_eq!(decode_handshake(&encode_handshake(10, MASK)).unwrap().vocab, 10);
        assert!(matches!(
            decode_handshake(br#"{"proto":"mdm-pred/2","vocab":10,"mask_id":9}"#),
            Err(Error::ProtocolMismatch { .. })
        ));
        assert!(decode_handshake(br#"{"proto":"mdm-pred/1","vocab":5,"mask_id":9}"#).is_err());
    }
}
