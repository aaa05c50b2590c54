//! Blocking TCP client.

use std::collections::VecDeque;
use std::io::{self, Read, Write};
use std::net::{SocketAddr, TcpStream};
use std::time::{Duration, Instant};

use bytes::{Bytes, BytesMut};
use thiserror::Error;

use crate::codec::{decode, encode, CodecError, ConnectReturnCode, Packet, Publish, Subscribe, Unsubscribe, Connect};
use crate::router::Message;

#[derive(Debug, Error)]
pub enum ClientError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error("connection refused with code {0:?}")]
    Refused(ConnectReturnCode),
    #[error("unexpected {0} from broker")]
    Unexpected(&'static str),
    #[error("broker closed the connection")]
    Closed,
    #[error("timed out waiting for {0}")]
    Timeout(&'static str),
    #[error("subscription to {0:?} was refused")]
    SubscribeRefused(String),
}

pub struct TcpClient {
    stream: TcpStream,
    inbuf: BytesMut,
    outbuf: BytesMut,
    inbox: VecDeque<Message>,
    next_packet_id: u16,
    /// Bound on every wait for a broker reply.
    pub reply_timeout: Duration,
}

impl TcpClient {
    pub fn connect(addr: SocketAddr, client_id: &str, keep_alive_s: u16) -> Result<Self, ClientError> {
        Self::connect_with(addr, Connect::new(client_id, keep_alive_s))
    }

    pub fn connect_with(addr: SocketAddr, connect: Connect) -> Result<Self, ClientError> {
        let stream = TcpStream::connect(addr)?;
        stream.set_nodelay(true)?;
        let mut c = Self {
            stream,
            inbuf: BytesMut::with_capacity(4096),
            outbuf: BytesMut::new(),
            inbox: VecDeque::new(),
            next_packet_id: 0,
            reply_timeout: Duration::from_secs(10),
        };
        c.send(&Packet::Connect(connect))?;
        match c.wait_for("CONNACK", |p| matches!(p, Packet::ConnAck(_)))? {
            Packet::ConnAck(a) if a.code == ConnectReturnCode::Accepted => Ok(c),
            Packet::ConnAck(a) => Err(ClientError::Refused(a.code)),
            _ => unreachable!(),
        }
    }

    fn send(&mut self, p: &Packet) -> Result<(), ClientError> {
        self.outbuf.clear();
        encode(p, &mut self.outbuf)?;
        self.stream.write_all(&self.outbuf)?;
        Ok(())
    }

    fn packet_id(&mut self) -> u16 {
        self.next_packet_id = self.next_packet_id.wrapping_add(1).max(1);
        self.next_packet_id
    }

    /// Reads one packet, waiting at most `timeout`. `Ok(None)` on timeout.
    fn read_packet(&mut self, timeout: Duration) -> Result<Option<Packet>, ClientError> {
        let end = Instant::now() + timeout;
        loop {
            if let Some((p, used)) = decode(&self.inbuf, usize::MAX)? {
                let _ = self.inbuf.split_to(used);
                return Ok(Some(p));
            }
            let left = end.saturating_duration_since(Instant::now());
            if left.is_zero() {
                return Ok(None);
            }
            self.stream.set_read_timeout(Some(left))?;
            let mut chunk = [0u8; 8192];
            match self.stream.read(&mut chunk) {
                Ok(0) => return Err(ClientError::Closed),
                Ok(n) => self.inbuf.extend_from_slice(&chunk[..n]),
                Err(e) if matches!(e.kind(), io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut) => return Ok(None),
                Err(e) => return Err(e.into()),
            }
        }
    }

    /// Reads until `want` matches, queueing any publishes seen on the way.
    fn wait_for(&mut self, what: &'static str, want: impl Fn(&Packet) -> bool) -> Result<Packet, ClientError> {
        let end = Instant::now() + self.reply_timeout;
        loop {
            let left = end.saturating_duration_since(Instant::now());
            match self.read_packet(left)? {
                None => return Err(ClientError::Timeout(what)),
                Some(p) if want(&p) => return Ok(p),
                Some(Packet::Publish(m)) => self.inbox.push_back(m),
                Some(p) => return Err(ClientError::Unexpected(p.kind())),
            }
        }
    }

    pub fn subscribe(&mut self, filters: &[&str]) -> Result<(), ClientError> {
        let packet_id = self.packet_id();
        let filters: Vec<(String, u8)> = filters.iter().map(|f| (f.to_string(), 0)).collect();
        self.send(&Packet::Subscribe(Subscribe { packet_id, filters: filters.clone() }))?;
        let ack = self.wait_for("SUBACK", |p| matches!(p, Packet::SubAck(a) if a.packet_id == packet_id))?;
        if let Packet::SubAck(a) = ack {
            if let Some(i) = a.return_codes.iter().position(|&c| c == crate::codec::SUBACK_FAILURE) {
                return Err(ClientError::SubscribeRefused(filters[i].0.clone()));
            }
        }
        Ok(())
    }

    pub fn unsubscribe(&mut self, filters: &[&str]) -> Result<(), ClientError> {
        let packet_id = self.packet_id();
        let filters = filters.iter().map(|f| f.to_string()).collect();
        self.send(&Packet::Unsubscribe(Unsubscribe { packet_id, filters }))?;
        self.wait_for("UNSUBACK", |p| matches!(p, Packet::UnsubAck { packet_id: id } if *id == packet_id))?;
        Ok(())
    }

    pub fn publish(&mut self, topic: &str, payload: impl Into<Bytes>) -> Result<(), ClientError> {
        self.send(&Packet::Publish(Publish { topic: topic.to_string(), payload: payload.into() }))
    }

    /// Round-trips a PINGREQ. Every message the broker routed to this client
    /// before handling the ping is in the inbox afterwards, and every publish
    /// sent earlier on this connection has been routed.
    pub fn sync(&mut self) -> Result<(), ClientError> {
        self.send(&Packet::PingReq)?;
        self.wait_for("PINGRESP", |p| matches!(p, Packet::PingResp))?;
        Ok(())
    }

    /// Next message, waiting up to `timeout`.
    pub fn recv_timeout(&mut self, timeout: Duration) -> Result<Option<Message>, ClientError> {
        if let Some(m) = self.inbox.pop_front() {
            return Ok(Some(m));
        }
        match self.read_packet(timeout)? {
            None => Ok(None),
            Some(Packet::Publish(m)) => Ok(Some(m)),
            Some(p) => Err(ClientError::Unexpected(p.kind())),
        }
    }

    /// Messages already received, without blocking.
    pub fn drain(&mut self) -> Vec<Message> {
        self.inbox.drain(..).collect()
    }

    pub fn disconnect(mut self) -> Result<(), ClientError> {
        self.send(&Packet::Disconnect)?;
        self.stream.shutdown(std::net::Shutdown::Both)?;
        Ok(())
    }
}
