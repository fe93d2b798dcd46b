//! TCP backend: one listening socket per party, one outbound stream per peer.
//!
//! A connection opens with a hello of `b"FXGB" | u64 session | u16 from`.
//! Connections announcing a different session are dropped, so two sessions
//! sharing a host never see each other's frames.

use std::collections::HashMap;
use std::io::{BufReader, BufWriter, Read, Write};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc::{self, Sender};
use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant};

use log::{debug, warn};

use super::{Endpoint, Message, Outbound};
use crate::error::{Error, Result};
use crate::share::PartyId;

const MAGIC: &[u8; 4] = b"FXGB";
const CONNECT_PATIENCE: Duration = Duration::from_secs(10);

pub type AddressBook = HashMap<PartyId, SocketAddr>;

/// A bound but not yet connected party socket.
pub struct Listener {
    inner: TcpListener,
    addr: SocketAddr,
}

impl Listener {
    pub fn bind(addr: SocketAddr) -> Result<Listener> {
        let inner = TcpListener::bind(addr)?;
        let addr = inner.local_addr()?;
        Ok(Listener { inner, addr })
    }

    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    /// Start accepting peers and return the endpoint for `id`.
    pub fn into_endpoint(self, session: u64, id: PartyId, book: AddressBook) -> Endpoint {
        let (tx, rx) = mpsc::channel();
        let stop = Arc::new(AtomicBool::new(false));
        let own_addr = self.addr;
        {
            let stop = Arc::clone(&stop);
            let listener = self.inner;
            thread::spawn(move || accept_loop(listener, session, id, tx, stop));
        }
        let outbound = TcpOutbound { session, id, book, streams: HashMap::new(), stop, own_addr };
        Endpoint::new(id, session, Box::new(outbound), rx)
    }
}

fn accept_loop(
    listener: TcpListener,
    session: u64,
    id: PartyId,
    tx: Sender<Result<Message>>,
    stop: Arc<AtomicBool>,
) {
    for stream in listener.incoming() {
        if stop.load(Ordering::SeqCst) {
            break;
        }
        let stream = match stream {
            Ok(s) => s,
            Err(e) => {
                warn!("{id}: accept failed: {e}");
                continue;
            }
        };
        let tx = tx.clone();
        thread::spawn(move || {
            if let Err(e) = read_loop(stream, session, id, tx) {
                debug!("{id}: reader closed: {e}");
            }
        });
    }
}

fn read_loop(stream: TcpStream, session: u64, id: PartyId, tx: Sender<Result<Message>>) -> Result<()> {
    stream.set_nodelay(true).ok();
    let mut reader = BufReader::new(stream);
    let mut hello = [0u8; 14];
    reader.read_exact(&mut hello)?;
    if &hello[..4] != MAGIC {
        return Err(Error::Frame("bad hello magic".into()));
    }
    let their_session = u64::from_le_bytes(hello[4..12].try_into().unwrap());
    let from = PartyId(u16::from_le_bytes(hello[12..14].try_into().unwrap()));
    if their_session != session {
        warn!("{id}: dropping connection from {from} for foreign session {their_session}");
        return Ok(());
    }
    loop {
        let mut len = [0u8; 4];
        match reader.read_exact(&mut len) {
            Ok(()) => {}
            Err(e) if e.kind() == std::io::ErrorKind::UnexpectedEof => return Ok(()),
            Err(e) => return Err(e.into()),
        }
        let mut body = vec![0u8; u32::from_le_bytes(len) as usize];
        reader.read_exact(&mut body)?;
        let decoded = Message::decode(&body).and_then(|m| {
            if m.from != from {
                Err(Error::Frame(format!("frame claims {} on a stream from {from}", m.from)))
            } else {
                Ok(m)
            }
        });
        let failed = decoded.is_err();
        if tx.send(decoded).is_err() || failed {
            return Ok(());
        }
    }
}

struct TcpOutbound {
    session: u64,
    id: PartyId,
    book: AddressBook,
    streams: HashMap<PartyId, BufWriter<TcpStream>>,
    stop: Arc<AtomicBool>,
    own_addr: SocketAddr,
}

impl TcpOutbound {
    fn stream(&mut self, to: PartyId) -> Result<&mut BufWriter<TcpStream>> {
        if !self.streams.contains_key(&to) {
            let addr = *self
                .book
                .get(&to)
                .ok_or_else(|| Error::Config(format!("no address for {to}")))?;
            let started = Instant::now();
            let stream = loop {
                match TcpStream::connect(addr) {
                    Ok(s) => break s,
                    Err(e) if started.elapsed() < CONNECT_PATIENCE => {
                        debug!("{}: retrying {to} at {addr}: {e}", self.id);
                        thread::sleep(Duration::from_millis(20));
                    }
                    Err(e) => return Err(Error::Aborted(format!("cannot reach {to} at {addr}: {e}"))),
                }
            };
            stream.set_nodelay(true).ok();
            let mut w = BufWriter::new(stream);
            w.write_all(MAGIC)?;
            w.write_all(&self.session.to_le_bytes())?;
            w.write_all(&self.id.0.to_le_bytes())?;
            self.streams.insert(to, w);
        }
        Ok(self.streams.get_mut(&to).unwrap())
    }
}

impl Outbound for TcpOutbound {
    fn deliver(&mut self, msg: &Message) -> Result<()> {
        let frame = msg.encode();
        let w = self.stream(msg.to)?;
        w.write_all(&frame)
            .and_then(|_| w.flush())
            .map_err(|e| Error::Aborted(format!("send to {} failed: {e}", msg.to)))
    }
}

impl Drop for TcpOutbound {
    fn drop(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        // wake the accept loop so it notices the stop flag
        let _ = TcpStream::connect(self.own_addr);
    }
}

/// Bind every party (coordinator = index 0) on loopback ephemeral ports and
/// return connected endpoints in party order.
pub fn local_cluster(session: u64, parties: usize) -> Result<Vec<Endpoint>> {
    let loopback: SocketAddr = "127.0.0.1:0".parse().unwrap();
    let listeners = (0..=parties).map(|_| Listener::bind(loopback)).collect::<Result<Vec<_>>>()?;
    let book: AddressBook = listeners
        .iter()
        .enumerate()
        .map(|(i, l)| (PartyId(i as u16), l.local_addr()))
        .collect();
    Ok(listeners
        .into_iter()
        .enumerate()
        .map(|(i, l)| l.into_endpoint(session, PartyId(i as u16), book.clone()))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transport::Tag;

    #[test]
    fn loopback_delivery() {
        let mut eps = local_cluster(77, 2).unwrap();
        eps[1].send_reals(PartyId(2), 0, Tag::MulEF, 0, vec![1.0, 2.0]).unwrap();
        eps[2].send_reals(PartyId(1), 0, Tag::MulEF, 0, vec![3.0]).unwrap();
        assert_eq!(eps[2].recv_reals(PartyId(1), Tag::MulEF, 0, 0).unwrap(), vec![1.0, 2.0]);
        assert_eq!(eps[1].recv_reals(PartyId(2), Tag::MulEF, 0, 0).unwrap(), vec![3.0]);
    }
}
