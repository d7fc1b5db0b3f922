//! Reliable, ordered frame delivery between the two parties.

use std::io::{Read, Write};
use std::net::{TcpListener, TcpStream, ToSocketAddrs};
use std::sync::mpsc::{channel, Receiver, Sender};
use std::time::Duration;

use thiserror::Error;

use super::wire::{FRAME_OVERHEAD, MAX_PAYLOAD};

#[derive(Debug, Error)]
pub enum TransportError {
    #[error("peer disconnected")]
    Disconnected,
    #[error("frame of {0} payload bytes exceeds the limit")]
    Oversized(usize),
    #[error("malformed frame: {0}")]
    Malformed(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Moves whole frames (header, payload and tag) between parties.
pub trait Transport: Send {
    fn send_frame(&mut self, frame: Vec<u8>) -> Result<(), TransportError>;
    fn recv_frame(&mut self) -> Result<Vec<u8>, TransportError>;
}

impl<T: Transport + ?Sized> Transport for Box<T> {
    fn send_frame(&mut self, frame: Vec<u8>) -> Result<(), TransportError> {
        (**self).send_frame(frame)
    }
    fn recv_frame(&mut self) -> Result<Vec<u8>, TransportError> {
        (**self).recv_frame()
    }
}

fn declared_payload(frame: &[u8]) -> Result<usize, TransportError> {
    if frame.len() < 4 {
        return Err(TransportError::Malformed("short frame".into()));
    }
    Ok(u32::from_be_bytes(frame[..4].try_into().unwrap()) as usize)
}

/// In-process channel end.
pub struct Loopback {
    tx: Sender<Vec<u8>>,
    rx: Receiver<Vec<u8>>,
}

/// Two connected in-process ends.
pub fn loopback_pair() -> (Loopback, Loopback) {
    let (tx_a, rx_b) = channel();
    let (tx_b, rx_a) = channel();
    (Loopback { tx: tx_a, rx: rx_a }, Loopback { tx: tx_b, rx: rx_b })
}

impl Transport for Loopback {
    fn send_frame(&mut self, frame: Vec<u8>) -> Result<(), TransportError> {
        let len = declared_payload(&frame)?;
        if len > MAX_PAYLOAD {
            return Err(TransportError::Oversized(len));
        }
        self.tx.send(frame).map_err(|_| TransportError::Disconnected)
    }

    fn recv_frame(&mut self) -> Result<Vec<u8>, TransportError> {
        let f = self.rx.recv().map_err(|_| TransportError::Disconnected)?;
        let len = declared_payload(&f)?;
        if len > MAX_PAYLOAD {
            return Err(TransportError::Oversized(len));
        }
        Ok(f)
    }
}

/// Frames over a TCP stream.
pub struct TcpTransport {
    stream: TcpStream,
}

impl TcpTransport {
    pub fn new(stream: TcpStream) -> Result<Self, TransportError> {
        stream.set_nodelay(true)?;
        Ok(TcpTransport { stream })
    }

    /// Connects to a listening peer, retrying until `timeout` elapses.
    pub fn connect(addr: impl ToSocketAddrs + Clone, timeout: Duration) -> Result<Self, TransportError> {
        let start = std::time::Instant::now();
        loop {
            match TcpStream::connect(addr.clone()) {
                Ok(s) => return Self::new(s),
                Err(e) if start.elapsed() < timeout && e.kind() == std::io::ErrorKind::ConnectionRefused => {
                    std::thread::sleep(Duration::from_millis(50));
                }
                Err(e) => return Err(e.into()),
            }
        }
    }

    /// Accepts one connection.
    pub fn accept(listener: &TcpListener) -> Result<Self, TransportError> {
        let (s, _) = listener.accept()?;
        Self::new(s)
    }
}

impl Transport for TcpTransport {
    fn send_frame(&mut self, frame: Vec<u8>) -> Result<(), TransportError> {
        let len = declared_payload(&frame)?;
        if len > MAX_PAYLOAD {
            return Err(TransportError::Oversized(len));
        }
        self.stream.write_all(&frame).map_err(map_io)?;
        Ok(())
    }

    fn recv_frame(&mut self) -> Result<Vec<u8>, TransportError> {
        let mut head = [0u8; 4];
        self.stream.read_exact(&mut head).map_err(map_io)?;
        let len = u32::from_be_bytes(head) as usize;
        if len > MAX_PAYLOAD {
            return Err(TransportError::Oversized(len));
        }
        let mut frame = vec![0u8; len + FRAME_OVERHEAD];
        frame[..4].copy_from_slice(&head);
        self.stream.read_exact(&mut frame[4..]).map_err(map_io)?;
        Ok(frame)
    }
}

fn map_io(e: std::io::Error) -> TransportError {
    match e.kind() {
        std::io::ErrorKind::UnexpectedEof
        | std::io::ErrorKind::ConnectionReset
        | std::io::ErrorKind::BrokenPipe => TransportError::Disconnected,
        _ => TransportError::Io(e),
    }
}

/// Wraps a transport and corrupts one outgoing frame, for exercising the
/// authentication path.
pub struct Tamper<T> {
    inner: T,
    msg_type: u8,
    occurrence: usize,
    seen: usize,
    /// Offset into the payload of the byte to flip.
    byte: usize,
}

impl<T: Transport> Tamper<T> {
    /// Flips byte `byte` of the payload of the `occurrence`-th (0-based)
    /// outgoing frame of type `msg_type`.
    pub fn new(inner: T, msg_type: u8, occurrence: usize, byte: usize) -> Self {
        Tamper { inner, msg_type, occurrence, seen: 0, byte }
    }
}

impl<T: Transport> Transport for Tamper<T> {
    fn send_frame(&mut self, mut frame: Vec<u8>) -> Result<(), TransportError> {
        if frame.len() > 4 && frame[4] == self.msg_type {
            if self.seen == self.occurrence {
                let len = declared_payload(&frame)?;
                let at = 5 + self.byte.min(len.saturating_sub(1));
                frame[at] ^= 0x01;
            }
            self.seen += 1;
        }
        self.inner.send_frame(frame)
    }

    fn recv_frame(&mut self) -> Result<Vec<u8>, TransportError> {
        self.inner.recv_frame()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::session::wire::encode_frame;
    use crate::session::wire::MsgType;
    use rand::{Rng, RngCore, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn frame(rng: &mut ChaCha8Rng) -> Vec<u8> {
        let mut p = vec![0u8; rng.random_range(0..300)];
        rng.fill_bytes(&mut p);
        encode_frame(MsgType::Syndrome, &p, &[0; 16]).unwrap()
    }

    #[test]
    fn loopback_echo_in_order() {
        let (mut a, mut b) = loopback_pair();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let frames: Vec<Vec<u8>> = (0..10_000).map(|_| frame(&mut rng)).collect();
        let sent = frames.clone();
        let h = std::thread::spawn(move || {
            for f in sent {
                a.send_frame(f).unwrap();
            }
            a
        });
        for f in &frames {
            assert_eq!(&b.recv_frame().unwrap(), f);
        }
        drop(h.join().unwrap());
        assert!(matches!(b.recv_frame(), Err(TransportError::Disconnected)));
    }

    #[test]
    fn tcp_round_trip() {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let frames: Vec<Vec<u8>> = (0..200).map(|_| frame(&mut rng)).collect();
        let sent = frames.clone();
        let h = std::thread::spawn(move || {
            let mut c = TcpTransport::connect(addr, Duration::from_secs(5)).unwrap();
            for f in sent {
                c.send_frame(f).unwrap();
            }
        });
        let mut s = TcpTransport::accept(&listener).unwrap();
        for f in &frames {
            assert_eq!(&s.recv_frame().unwrap(), f);
        }
        h.join().unwrap();
        assert!(matches!(s.recv_frame(), Err(TransportError::Disconnected)));
    }

    #[test]
    fn oversized_frames_rejected() {
        let (mut a, _b) = loopback_pair();
        let mut f = vec![0u8; FRAME_OVERHEAD];
        f[..4].copy_from_slice(&((MAX_PAYLOAD + 1) as u32).to_be_bytes());
        assert!(matches!(a.send_frame(f.clone()), Err(TransportError::Oversized(_))));

        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let h = std::thread::spawn(move || {
            let mut raw = TcpStream::connect(addr).unwrap();
            raw.write_all(&f).unwrap();
        });
        let mut s = TcpTransport::accept(&listener).unwrap();
        assert!(matches!(s.recv_frame(), Err(TransportError::Oversized(_))));
        h.join().unwrap();
    }

    #[test]
    fn tamper_flips_selected_frame_only() {
        let (a, mut b) = loopback_pair();
        let mut t = Tamper::new(a, MsgType::Syndrome as u8, 1, 0);
        let f = encode_frame(MsgType::Syndrome, &[0, 0], &[0; 16]).unwrap();
        for _ in 0..3 {
            t.send_frame(f.clone()).unwrap();
        }
        assert_eq!(b.recv_frame().unwrap(), f);
        assert_ne!(b.recv_frame().unwrap(), f);
        assert_eq!(b.recv_frame().unwrap(), f);
    }
}
