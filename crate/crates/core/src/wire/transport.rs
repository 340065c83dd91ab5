//! Frame transports and the sequencing endpoint that sits on top of them.

use std::io::{ErrorKind, Read, Write};
use std::net::{TcpListener, TcpStream, ToSocketAddrs};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError, Sender};
use std::time::{Duration, Instant};

use crate::error::{Error, Result};
use crate::wire::codec::{self, MAX_BODY};
use crate::wire::message::{Body, Message};

/// Moves whole frames (length prefix included) between two parties.
pub trait Transport: Send {
    fn send_frame(&mut self, frame: &[u8]) -> Result<()>;
    fn recv_frame(&mut self, timeout: Duration) -> Result<Vec<u8>>;
}

/// In-memory FIFO transport.
pub struct Loopback {
    tx: Sender<Vec<u8>>,
    rx: Receiver<Vec<u8>>,
}

impl Transport for Loopback {
    fn send_frame(&mut self, frame: &[u8]) -> Result<()> {
        self.tx
            .send(frame.to_vec())
            .map_err(|_| Error::Disconnected)
    }

    fn recv_frame(&mut self, timeout: Duration) -> Result<Vec<u8>> {
        self.rx.recv_timeout(timeout).map_err(|e| match e {
            RecvTimeoutError::Timeout => Error::Timeout(timeout),
            RecvTimeoutError::Disconnected => Error::Disconnected,
        })
    }
}

pub fn loopback_transports() -> (Loopback, Loopback) {
    let (a_tx, b_rx) = mpsc::channel();
    let (b_tx, a_rx) = mpsc::channel();
    (
        Loopback { tx: a_tx, rx: a_rx },
        Loopback { tx: b_tx, rx: b_rx },
    )
}

/// Two connected endpoints with the default timeout.
pub fn loopback_pair() -> (Endpoint, Endpoint) {
    let (a, b) = loopback_transports();
    (Endpoint::new(Box::new(a)), Endpoint::new(Box::new(b)))
}

/// Length-prefixed frames over a TCP stream.
pub struct TcpTransport {
    stream: TcpStream,
    buf: Vec<u8>,
}

impl TcpTransport {
    pub fn new(stream: TcpStream) -> Result<Self> {
        stream.set_nodelay(true)?;
        Ok(TcpTransport {
            stream,
            buf: Vec::new(),
        })
    }

    pub fn connect<A: ToSocketAddrs>(addr: A) -> Result<Self> {
        TcpTransport::new(TcpStream::connect(addr)?)
    }

    /// Accepts exactly one peer.
    pub fn accept(listener: &TcpListener) -> Result<Self> {
        let (stream, _) = listener.accept()?;
        TcpTransport::new(stream)
    }

    fn take_frame(&mut self) -> Result<Option<Vec<u8>>> {
        if self.buf.len() < 4 {
            return Ok(None);
        }
        let len = u32::from_be_bytes(self.buf[..4].try_into().unwrap()) as usize;
        if len > MAX_BODY {
            return Err(Error::PayloadTooLarge(len));
        }
        if self.buf.len() < 4 + len {
            return Ok(None);
        }
        let rest = self.buf.split_off(4 + len);
        Ok(Some(std::mem::replace(&mut self.buf, rest)))
    }
}

impl Transport for TcpTransport {
    fn send_frame(&mut self, frame: &[u8]) -> Result<()> {
        self.stream.write_all(frame).map_err(|e| match e.kind() {
            ErrorKind::BrokenPipe | ErrorKind::ConnectionReset => Error::Disconnected,
            _ => Error::Io(e),
        })
    }

    fn recv_frame(&mut self, timeout: Duration) -> Result<Vec<u8>> {
        let deadline = Instant::now() + timeout;
        let mut chunk = [0u8; 64 * 1024];
        loop {
            if let Some(frame) = self.take_frame()? {
                return Ok(frame);
            }
            let left = deadline.saturating_duration_since(Instant::now());
            if left.is_zero() {
                return Err(Error::Timeout(timeout));
            }
            self.stream.set_read_timeout(Some(left))?;
            match self.stream.read(&mut chunk) {
                Ok(0) => return Err(Error::Disconnected),
                Ok(n) => self.buf.extend_from_slice(&chunk[..n]),
                Err(e) if matches!(e.kind(), ErrorKind::WouldBlock | ErrorKind::TimedOut) => {}
                Err(e) if e.kind() == ErrorKind::Interrupted => {}
                Err(e) if e.kind() == ErrorKind::ConnectionReset => {
                    return Err(Error::Disconnected)
                }
                Err(e) => return Err(e.into()),
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Sent,
    Received,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Record {
    pub direction: Direction,
    pub frame: Vec<u8>,
    pub message: Message,
}

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(30);

/// Message-level view of a transport: numbers outgoing messages, checks the
/// peer's numbering and session id, and keeps a transcript of both directions.
pub struct Endpoint {
    transport: Box<dyn Transport>,
    session_id: Option<u64>,
    next_send: u64,
    next_recv: u64,
    pub timeout: Duration,
    transcript: Vec<Record>,
    pending: Option<Message>,
}

impl Endpoint {
    pub fn new(transport: Box<dyn Transport>) -> Self {
        Endpoint {
            transport,
            session_id: None,
            next_send: 0,
            next_recv: 0,
            timeout: DEFAULT_TIMEOUT,
            transcript: Vec::new(),
            pending: None,
        }
    }

    pub fn session_id(&self) -> Option<u64> {
        self.session_id
    }

    pub fn set_session_id(&mut self, id: u64) {
        self.session_id = Some(id);
    }

    pub fn send(&mut self, body: Body) -> Result<()> {
        let message = Message {
            session_id: self.session_id.unwrap_or(0),
            seq: self.next_send,
            body,
        };
        let frame = codec::encode(&message)?;
        self.transport.send_frame(&frame)?;
        self.next_send += 1;
        self.transcript.push(Record {
            direction: Direction::Sent,
            frame,
            message,
        });
        Ok(())
    }

    /// Next message from the peer. The first message fixes the session id if
    /// none was set.
    pub fn recv(&mut self) -> Result<Message> {
        if let Some(m) = self.pending.take() {
            return Ok(m);
        }
        let frame = self.transport.recv_frame(self.timeout)?;
        let message = codec::decode(&frame)?;
        if message.seq != self.next_recv {
            return Err(Error::Sequence {
                expected: self.next_recv,
                got: message.seq,
            });
        }
        match self.session_id {
            None => self.session_id = Some(message.session_id),
            Some(id) if id != message.session_id => {
                return Err(Error::protocol(
                    "session",
                    format!(
                        "session id {:016x} does not match {id:016x}",
                        message.session_id
                    ),
                ))
            }
            Some(_) => {}
        }
        self.next_recv += 1;
        self.transcript.push(Record {
            direction: Direction::Received,
            frame,
            message: message.clone(),
        });
        Ok(message)
    }

    /// Next message body; a peer Abort becomes [`Error::Aborted`].
    pub fn recv_body(&mut self, phase: &'static str) -> Result<Body> {
        match self.recv()?.body {
            Body::Abort(reason) => Err(Error::Aborted { phase, reason }),
            body => Ok(body),
        }
    }

    /// The next message without consuming it.
    pub fn peek(&mut self) -> Result<&Message> {
        if self.pending.is_none() {
            let m = self.recv()?;
            self.pending = Some(m);
        }
        Ok(self.pending.as_ref().unwrap())
    }

    pub fn transcript(&self) -> &[Record] {
        &self.transcript
    }

    pub fn messages(&self) -> impl Iterator<Item = &Message> {
        self.transcript.iter().map(|r| &r.message)
    }
}

#[cfg(test)]
mod tests {
    use std::thread;

    use super::*;
    use crate::wire::message::{Hello, Phase};

    fn hello() -> Body {
        Body::Hello(Hello {
            version: 1,
            seed: 7,
            pulses: 100,
            blocks: 1,
            settings: "a=b".into(),
        })
    }

    #[test]
    fn loopback_delivers_identical_fields() {
        let (mut a, mut b) = loopback_pair();
        a.set_session_id(9);
        a.send(hello()).unwrap();
        let m = b.recv().unwrap();
        assert_eq!(m.body, hello());
        assert_eq!((m.session_id, m.seq), (9, 0));
        assert_eq!(b.session_id(), Some(9));
    }

    #[test]
    fn loopback_is_fifo() {
        let (mut a, mut b) = loopback_pair();
        a.send(Body::Done(Phase::Sift)).unwrap();
        a.send(Body::Done(Phase::Final)).unwrap();
        assert_eq!(b.recv().unwrap().body, Body::Done(Phase::Sift));
        assert_eq!(b.recv().unwrap().body, Body::Done(Phase::Final));
        assert_eq!(b.transcript().len(), 2);
    }

    #[test]
    fn empty_loopback_times_out() {
        let (_a, mut b) = loopback_pair();
        b.timeout = Duration::from_millis(10);
        assert!(matches!(b.recv(), Err(Error::Timeout(_))));
    }

    #[test]
    fn sequence_gap_is_rejected() {
        let (mut ta, tb) = loopback_transports();
        let mut b = Endpoint::new(Box::new(tb));
        let m = Message {
            session_id: 1,
            seq: 1,
            body: Body::Done(Phase::Sift),
        };
        ta.send_frame(&codec::encode(&m).unwrap()).unwrap();
        assert!(matches!(
            b.recv(),
            Err(Error::Sequence {
                expected: 0,
                got: 1
            })
        ));
    }

    #[test]
    fn abort_surfaces_as_error() {
        let (mut a, mut b) = loopback_pair();
        a.send(Body::Abort("no".into())).unwrap();
        assert!(matches!(b.recv_body("test"), Err(Error::Aborted { .. })));
    }

    #[test]
    fn peek_does_not_consume() {
        let (mut a, mut b) = loopback_pair();
        a.send(Body::Done(Phase::Sift)).unwrap();
        a.send(Body::Done(Phase::Pass)).unwrap();
        assert_eq!(b.peek().unwrap().body, Body::Done(Phase::Sift));
        assert_eq!(b.peek().unwrap().seq, 0);
        assert_eq!(b.recv().unwrap().body, Body::Done(Phase::Sift));
        assert_eq!(b.recv().unwrap().seq, 1);
        assert_eq!(b.transcript().len(), 2);
    }

    #[test]
    fn dropped_peer_disconnects() {
        let (a, mut b) = loopback_pair();
        drop(a);
        assert!(matches!(b.recv(), Err(Error::Disconnected)));
    }

    #[test]
    fn tcp_round_trip() {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let server = thread::spawn(move || {
            let mut bob = Endpoint::new(Box::new(TcpTransport::accept(&listener).unwrap()));
            let m = bob.recv().unwrap();
            bob.send(m.body).unwrap();
        });
        let mut alice = Endpoint::new(Box::new(TcpTransport::connect(addr).unwrap()));
        alice.set_session_id(3);
        let big = Body::SiftIndices((0..200_000).map(|i| i * 3).collect());
        alice.send(big.clone()).unwrap();
        assert_eq!(alice.recv().unwrap().body, big);
        server.join().unwrap();
    }
}
