//! Transport-independent MQTT session logic.

use tokio::sync::{mpsc, oneshot};

use crate::codec::{ConnAck, Connect, ConnectReturnCode, Packet, SubAck, PROTOCOL_LEVEL, SUBACK_FAILURE};
use crate::router::{Broker, DisconnectReason, SessionHandle};

/// What the transport must do after feeding a packet in.
#[derive(Debug)]
pub enum Step {
    Nothing,
    /// Send after flushing everything already queued for this client.
    Reply(Packet),
    /// CONNECT accepted: send `connack`, then serve `outbound` until `kill` fires.
    Attach {
        connack: Packet,
        outbound: mpsc::Receiver<Packet>,
        kill: oneshot::Receiver<DisconnectReason>,
        keep_alive_s: u16,
    },
    /// Send `reply` if present, then close.
    Close { reply: Option<Packet>, reason: DisconnectReason },
}

enum State {
    AwaitConnect,
    Connected(SessionHandle),
    Closed,
}

pub struct Connection {
    broker: Broker,
    state: State,
}

fn protocol(msg: &str) -> Step {
    Step::Close { reply: None, reason: DisconnectReason::Protocol(msg.to_string()) }
}

fn refuse(code: ConnectReturnCode, why: &str) -> Step {
    Step::Close {
        reply: Some(Packet::ConnAck(ConnAck { session_present: false, code })),
        reason: DisconnectReason::Protocol(why.to_string()),
    }
}

impl Connection {
    pub fn new(broker: Broker) -> Self {
        Self { broker, state: State::AwaitConnect }
    }

    pub fn client_id(&self) -> Option<&str> {
        match &self.state {
            State::Connected(h) => Some(&h.client_id),
            _ => None,
        }
    }

    fn connect(&mut self, c: Connect) -> Step {
        if c.protocol_level != PROTOCOL_LEVEL {
            return refuse(ConnectReturnCode::UnacceptableProtocol, "unsupported protocol level");
        }
        let client_id = if c.client_id.is_empty() {
            if !c.clean_session {
                return refuse(ConnectReturnCode::IdentifierRejected, "empty client id without clean session");
            }
            self.broker.assign_client_id()
        } else {
            c.client_id
        };
        // credentials are accepted but not checked
        match self.broker.register(&client_id, self.broker.config().queue_capacity) {
            Ok(reg) => {
                self.state = State::Connected(reg.handle);
                Step::Attach {
                    connack: Packet::ConnAck(ConnAck { session_present: false, code: ConnectReturnCode::Accepted }),
                    outbound: reg.outbound,
                    kill: reg.kill,
                    keep_alive_s: c.keep_alive_s,
                }
            }
            Err(_) => refuse(ConnectReturnCode::IdentifierRejected, "client id rejected"),
        }
    }

    pub fn handle(&mut self, packet: Packet) -> Step {
        let step = match (&self.state, packet) {
            (State::Closed, _) => protocol("packet after close"),
            (State::AwaitConnect, Packet::Connect(c)) => return self.connect(c),
            (State::AwaitConnect, p) => protocol(&format!("{} before CONNECT", p.kind())),
            (State::Connected(_), Packet::Connect(_)) => protocol("second CONNECT"),
            (State::Connected(_), Packet::Publish(p)) => match self.broker.publish(&p.topic, p.payload) {
                Ok(_) => Step::Nothing,
                Err(e) => protocol(&e.to_string()),
            },
            (State::Connected(h), Packet::Subscribe(s)) => {
                let mut codes = Vec::with_capacity(s.filters.len());
                for (f, _) in &s.filters {
                    match self.broker.subscribe(h, f) {
                        Ok(()) => codes.push(0),
                        Err(_) => codes.push(SUBACK_FAILURE),
                    }
                }
                Step::Reply(Packet::SubAck(SubAck { packet_id: s.packet_id, return_codes: codes }))
            }
            (State::Connected(h), Packet::Unsubscribe(u)) => {
                for f in &u.filters {
                    let _ = self.broker.unsubscribe(h, f);
                }
                Step::Reply(Packet::UnsubAck { packet_id: u.packet_id })
            }
            (State::Connected(_), Packet::PingReq) => Step::Reply(Packet::PingResp),
            (State::Connected(_), Packet::Disconnect) => {
                Step::Close { reply: None, reason: DisconnectReason::ClientDisconnect }
            }
            (State::Connected(_), p) => protocol(&format!("unexpected {} from client", p.kind())),
        };
        if matches!(step, Step::Close { .. }) {
            self.close();
        }
        step
    }

    /// Releases the session. Safe to call more than once.
    pub fn close(&mut self) {
        if let State::Connected(h) = std::mem::replace(&mut self.state, State::Closed) {
            self.broker.unregister(&h);
        }
    }
}

impl Drop for Connection {
    fn drop(&mut self) {
        self.close();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::{Publish, Subscribe};
    use bytes::Bytes;

    #[test]
    fn lifecycle() {
        let b = Broker::default();
        let mut c = Connection::new(b.clone());
        assert!(matches!(c.handle(Packet::PingReq), Step::Close { .. }));

        let mut c = Connection::new(b.clone());
        let Step::Attach { mut outbound, .. } = c.handle(Packet::Connect(Connect::new("x", 30))) else { panic!() };
        let Step::Reply(Packet::SubAck(ack)) = c.handle(Packet::Subscribe(Subscribe {
            packet_id: 7,
            filters: vec![("a/#".into(), 0), ("bad/#/x".into(), 0)],
        })) else {
            panic!()
        };
        assert_eq!(ack.return_codes, vec![0, SUBACK_FAILURE]);
        c.handle(Packet::Publish(Publish { topic: "a/b".into(), payload: Bytes::from_static(b"1") }));
        assert!(matches!(outbound.try_recv(), Ok(Packet::Publish(_))));
        assert!(matches!(c.handle(Packet::PingReq), Step::Reply(Packet::PingResp)));
        assert!(matches!(c.handle(Packet::Connect(Connect::new("x", 30))), Step::Close { .. }));
        assert!(b.client_ids().is_empty());
    }

    #[test]
    fn refusals() {
        let b = Broker::default();
        let mut c = Connection::new(b.clone());
        let mut bad = Connect::new("x", 0);
        bad.protocol_level = 3;
        let Step::Close { reply: Some(Packet::ConnAck(a)), .. } = c.handle(Packet::Connect(bad)) else { panic!() };
        assert_eq!(a.code, ConnectReturnCode::UnacceptableProtocol);

        let mut c = Connection::new(b.clone());
        let mut anon = Connect::new("", 0);
        anon.clean_session = false;
        let Step::Close { reply: Some(Packet::ConnAck(a)), .. } = c.handle(Packet::Connect(anon)) else { panic!() };
        assert_eq!(a.code, ConnectReturnCode::IdentifierRejected);

        let mut c = Connection::new(b.clone());
        assert!(matches!(c.handle(Packet::Connect(Connect::new("", 0))), Step::Attach { .. }));
        assert!(c.client_id().unwrap().starts_with("auto-"));
    }
}
