use std::collections::BTreeMap;
use std::fmt;
use std::sync::{Arc, Mutex, MutexGuard};
use std::time::Duration;

use bytes::Bytes;
use thiserror::Error;
use tokio::sync::{mpsc, oneshot};

use crate::codec::{Packet, Publish};
use crate::topic::{matches, validate_filter, validate_topic_name, TopicError};

/// A delivered application message.
pub type Message = Publish;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DisconnectReason {
    /// The client's outbound queue overflowed.
    SlowConsumer,
    /// Another connection claimed the same client id.
    TakenOver,
    KeepAliveTimeout,
    Protocol(String),
    ClientDisconnect,
    BrokerShutdown,
}

impl fmt::Display for DisconnectReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DisconnectReason::SlowConsumer => write!(f, "slow consumer: outbound queue full"),
            DisconnectReason::TakenOver => write!(f, "session taken over by a new connection"),
            DisconnectReason::KeepAliveTimeout => write!(f, "keep-alive timeout"),
            DisconnectReason::Protocol(m) => write!(f, "protocol error: {m}"),
            DisconnectReason::ClientDisconnect => write!(f, "client disconnected"),
            DisconnectReason::BrokerShutdown => write!(f, "broker shut down"),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum BrokerError {
    #[error(transparent)]
    Topic(#[from] TopicError),
    #[error("client id must not be empty")]
    EmptyClientId,
    #[error("session is no longer registered")]
    NotConnected,
    #[error("disconnected: {0}")]
    Disconnected(DisconnectReason),
}

#[derive(Debug, Clone)]
pub struct BrokerConfig {
    /// Per-client outbound queue bound; overflowing it disconnects the client.
    pub queue_capacity: usize,
    pub max_packet_size: usize,
    /// A client silent for this multiple of its keep-alive is dropped.
    pub keep_alive_factor: f64,
    /// Time a new TCP connection has to send CONNECT.
    pub connect_timeout: Duration,
}

impl Default for BrokerConfig {
    fn default() -> Self {
        Self {
            queue_capacity: 4096,
            max_packet_size: 1 << 20,
            keep_alive_factor: 1.5,
            connect_timeout: Duration::from_secs(10),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct BrokerStats {
    pub clients: usize,
    pub subscriptions: usize,
    pub published: u64,
    pub delivered: u64,
    pub slow_consumer_disconnects: u64,
}

struct Session {
    id: u64,
    tx: mpsc::Sender<Packet>,
    kill: Option<oneshot::Sender<DisconnectReason>>,
    filters: Vec<String>,
}

impl Session {
    fn close(mut self, reason: DisconnectReason) {
        if let Some(k) = self.kill.take() {
            let _ = k.send(reason);
        }
    }
}

#[derive(Default)]
struct Router {
    sessions: BTreeMap<String, Session>,
    next_id: u64,
    stats: BrokerStats,
}

/// Identifies one registration of a client id.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SessionHandle {
    pub client_id: String,
    id: u64,
}

pub struct Registration {
    pub handle: SessionHandle,
    pub outbound: mpsc::Receiver<Packet>,
    pub kill: oneshot::Receiver<DisconnectReason>,
    /// An earlier session with the same client id was closed.
    pub took_over: bool,
}

/// Shared subscription table and fan-out. Cheap to clone.
#[derive(Clone)]
pub struct Broker {
    router: Arc<Mutex<Router>>,
    config: Arc<BrokerConfig>,
}

impl Default for Broker {
    fn default() -> Self {
        Self::new(BrokerConfig::default())
    }
}

impl Broker {
    pub fn new(config: BrokerConfig) -> Self {
        Self { router: Arc::default(), config: Arc::new(config) }
    }

    pub fn config(&self) -> &BrokerConfig {
        &self.config
    }

    fn lock(&self) -> MutexGuard<'_, Router> {
        self.router.lock().unwrap_or_else(|e| e.into_inner())
    }

    /// Registers `client_id`, closing any existing session that uses it.
    pub fn register(&self, client_id: &str, queue_capacity: usize) -> Result<Registration, BrokerError> {
        if client_id.is_empty() {
            return Err(BrokerError::EmptyClientId);
        }
        let (tx, outbound) = mpsc::channel(queue_capacity.max(1));
        let (kill_tx, kill) = oneshot::channel();
        let mut r = self.lock();
        r.next_id += 1;
        let id = r.next_id;
        let old = r.sessions.insert(client_id.to_string(), Session { id, tx, kill: Some(kill_tx), filters: Vec::new() });
        let took_over = old.is_some();
        if let Some(old) = old {
            tracing::info!(client_id, "session taken over");
            old.close(DisconnectReason::TakenOver);
        }
        r.stats.clients = r.sessions.len();
        Ok(Registration { handle: SessionHandle { client_id: client_id.to_string(), id }, outbound, kill, took_over })
    }

    /// Unique id for a client that connected with an empty one.
    pub fn assign_client_id(&self) -> String {
        let mut r = self.lock();
        r.next_id += 1;
        format!("auto-{}", r.next_id)
    }

    fn with_session<T>(&self, h: &SessionHandle, f: impl FnOnce(&mut Session) -> T) -> Result<T, BrokerError> {
        let mut r = self.lock();
        let out = match r.sessions.get_mut(&h.client_id) {
            Some(s) if s.id == h.id => f(s),
            _ => return Err(BrokerError::NotConnected),
        };
        r.stats.subscriptions = r.sessions.values().map(|s| s.filters.len()).sum();
        Ok(out)
    }

    pub fn subscribe(&self, h: &SessionHandle, filter: &str) -> Result<(), BrokerError> {
        validate_filter(filter)?;
        self.with_session(h, |s| {
            // re-subscribing replaces the old subscription
            if !s.filters.iter().any(|f| f == filter) {
                s.filters.push(filter.to_string());
            }
        })
    }

    /// Returns whether the filter was subscribed.
    pub fn unsubscribe(&self, h: &SessionHandle, filter: &str) -> Result<bool, BrokerError> {
        self.with_session(h, |s| {
            let before = s.filters.len();
            s.filters.retain(|f| f != filter);
            s.filters.len() != before
        })
    }

    pub fn unregister(&self, h: &SessionHandle) {
        let mut r = self.lock();
        if r.sessions.get(&h.client_id).is_some_and(|s| s.id == h.id) {
            r.sessions.remove(&h.client_id);
        }
        r.stats.clients = r.sessions.len();
        r.stats.subscriptions = r.sessions.values().map(|s| s.filters.len()).sum();
    }

    /// Fans `payload` out to every matching subscription and returns the number of
    /// deliveries. Deliveries are queued before this returns.
    pub fn publish(&self, topic: &str, payload: Bytes) -> Result<usize, BrokerError> {
        validate_topic_name(topic)?;
        let msg = Publish { topic: topic.to_string(), payload };
        let mut r = self.lock();
        let mut delivered = 0;
        let mut dead: Vec<(String, Option<DisconnectReason>)> = Vec::new();
        for (client_id, s) in &r.sessions {
            for f in &s.filters {
                if !matches(f, topic) {
                    continue;
                }
                match s.tx.try_send(Packet::Publish(msg.clone())) {
                    Ok(()) => delivered += 1,
                    Err(mpsc::error::TrySendError::Full(_)) => {
                        dead.push((client_id.clone(), Some(DisconnectReason::SlowConsumer)));
                        break;
                    }
                    Err(mpsc::error::TrySendError::Closed(_)) => {
                        dead.push((client_id.clone(), None));
                        break;
                    }
                }
            }
        }
        for (client_id, reason) in dead {
            if let Some(s) = r.sessions.remove(&client_id) {
                if let Some(reason) = reason {
                    tracing::warn!(client_id, "{reason}");
                    r.stats.slow_consumer_disconnects += 1;
                    s.close(reason);
                }
            }
        }
        r.stats.published += 1;
        r.stats.delivered += delivered as u64;
        r.stats.clients = r.sessions.len();
        r.stats.subscriptions = r.sessions.values().map(|s| s.filters.len()).sum();
        Ok(delivered)
    }

    /// Closes every session.
    pub fn shutdown(&self) {
        let mut r = self.lock();
        for (_, s) in std::mem::take(&mut r.sessions) {
            s.close(DisconnectReason::BrokerShutdown);
        }
        r.stats.clients = 0;
        r.stats.subscriptions = 0;
    }

    pub fn stats(&self) -> BrokerStats {
        self.lock().stats
    }

    pub fn client_ids(&self) -> Vec<String> {
        self.lock().sessions.keys().cloned().collect()
    }

    /// Opens an in-process client.
    pub fn connect_local(&self, client_id: &str) -> Result<LocalClient, BrokerError> {
        self.connect_local_with_capacity(client_id, self.config.queue_capacity)
    }

    pub fn connect_local_with_capacity(&self, client_id: &str, queue_capacity: usize) -> Result<LocalClient, BrokerError> {
        let reg = self.register(client_id, queue_capacity)?;
        Ok(LocalClient { broker: self.clone(), handle: reg.handle, outbound: reg.outbound, kill: reg.kill, closed: None })
    }
}

/// In-process client. Publishing is synchronous: when `publish` returns, every
/// matching subscriber already has the message queued.
pub struct LocalClient {
    broker: Broker,
    handle: SessionHandle,
    outbound: mpsc::Receiver<Packet>,
    kill: oneshot::Receiver<DisconnectReason>,
    closed: Option<DisconnectReason>,
}

impl LocalClient {
    pub fn client_id(&self) -> &str {
        &self.handle.client_id
    }

    pub fn subscribe(&self, filter: &str) -> Result<(), BrokerError> {
        self.broker.subscribe(&self.handle, filter)
    }

    pub fn unsubscribe(&self, filter: &str) -> Result<bool, BrokerError> {
        self.broker.unsubscribe(&self.handle, filter)
    }

    pub fn publish(&self, topic: &str, payload: impl Into<Bytes>) -> Result<usize, BrokerError> {
        if let Some(r) = &self.closed {
            return Err(BrokerError::Disconnected(r.clone()));
        }
        self.broker.publish(topic, payload.into())
    }

    fn check_kill(&mut self) {
        if self.closed.is_none() {
            if let Ok(reason) = self.kill.try_recv() {
                self.closed = Some(reason);
            }
        }
    }

    /// Next queued message. Messages queued before a forced disconnect are discarded.
    pub fn try_recv(&mut self) -> Result<Option<Message>, BrokerError> {
        self.check_kill();
        if let Some(r) = &self.closed {
            return Err(BrokerError::Disconnected(r.clone()));
        }
        loop {
            match self.outbound.try_recv() {
                Ok(Packet::Publish(m)) => return Ok(Some(m)),
                Ok(_) => continue,
                Err(mpsc::error::TryRecvError::Empty) => return Ok(None),
                Err(mpsc::error::TryRecvError::Disconnected) => {
                    return Err(BrokerError::Disconnected(DisconnectReason::BrokerShutdown))
                }
            }
        }
    }

    /// Every message queued so far.
    pub fn drain(&mut self) -> Result<Vec<Message>, BrokerError> {
        let mut out = Vec::new();
        while let Some(m) = self.try_recv()? {
            out.push(m);
        }
        Ok(out)
    }

    pub async fn recv(&mut self) -> Result<Message, BrokerError> {
        loop {
            if let Some(r) = &self.closed {
                return Err(BrokerError::Disconnected(r.clone()));
            }
            tokio::select! {
                biased;
                reason = &mut self.kill, if self.closed.is_none() => {
                    self.closed = Some(reason.unwrap_or(DisconnectReason::BrokerShutdown));
                }
                p = self.outbound.recv() => match p {
                    Some(Packet::Publish(m)) => return Ok(m),
                    Some(_) => {}
                    None => return Err(BrokerError::Disconnected(DisconnectReason::BrokerShutdown)),
                },
            }
        }
    }

    pub fn disconnect(self) {}
}

impl Drop for LocalClient {
    fn drop(&mut self) {
        self.broker.unregister(&self.handle);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fan_out_and_order() {
        let b = Broker::default();
        let publisher = b.connect_local("p").unwrap();
        let mut subs: Vec<_> = (0..3).map(|i| b.connect_local(&format!("s{i}")).unwrap()).collect();
        for s in &subs {
            s.subscribe("a/+").unwrap();
        }
        for i in 0..100 {
            assert_eq!(publisher.publish("a/b", format!("{i}")).unwrap(), 3);
        }
        assert_eq!(publisher.publish("x/y", "z").unwrap(), 0);
        for s in &mut subs {
            let got: Vec<String> = s.drain().unwrap().into_iter().map(|m| String::from_utf8(m.payload.to_vec()).unwrap()).collect();
            assert_eq!(got, (0..100).map(|i| i.to_string()).collect::<Vec<_>>());
        }
    }

    #[test]
    fn slow_consumer_is_dropped() {
        let b = Broker::default();
        let p = b.connect_local("p").unwrap();
        let mut slow = b.connect_local_with_capacity("slow", 4).unwrap();
        let mut fast = b.connect_local("fast").unwrap();
        slow.subscribe("#").unwrap();
        fast.subscribe("#").unwrap();
        for _ in 0..10 {
            p.publish("t", "x").unwrap();
        }
        assert_eq!(slow.try_recv(), Err(BrokerError::Disconnected(DisconnectReason::SlowConsumer)));
        assert_eq!(fast.drain().unwrap().len(), 10);
        assert_eq!(b.stats().slow_consumer_disconnects, 1);
        assert_eq!(b.client_ids(), vec!["fast".to_string(), "p".to_string()]);
    }

    #[test]
    fn takeover_closes_old_session() {
        let b = Broker::default();
        let mut old = b.connect_local("dup").unwrap();
        let new = b.connect_local("dup").unwrap();
        assert_eq!(old.try_recv(), Err(BrokerError::Disconnected(DisconnectReason::TakenOver)));
        assert_eq!(old.subscribe("a"), Err(BrokerError::NotConnected));
        drop(old);
        new.subscribe("a").unwrap();
        assert_eq!(b.stats().subscriptions, 1);
    }

    #[test]
    fn invalid_topics() {
        let b = Broker::default();
        let c = b.connect_local("c").unwrap();
        assert!(c.subscribe("a/#/b").is_err());
        assert!(c.publish("a/+", "x").is_err());
        assert_eq!(b.register("", 1).err(), Some(BrokerError::EmptyClientId));
    }
}
