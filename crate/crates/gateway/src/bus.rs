//! Component endpoints on the broker, either in-process or over TCP.

use std::net::SocketAddr;

use sb_broker::{Broker, BrokerConfig, BrokerError, ClientError, LocalClient, Message, ServerHandle, TcpClient};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Transport {
    /// Components share the broker's router directly.
    #[default]
    InProcess,
    /// Every component is a real MQTT client on a loopback socket.
    Tcp,
}

#[derive(Debug, Error)]
pub enum BusError {
    #[error(transparent)]
    Broker(#[from] BrokerError),
    #[error(transparent)]
    Client(#[from] ClientError),
    #[error("broker listener: {0}")]
    Listen(std::io::Error),
}

/// One component's connection. Publishing is fire-and-forget; `flush` waits
/// until the broker has routed everything published so far, and `drain`
/// returns every message routed to this endpoint before the call.
pub trait Endpoint: Send {
    fn subscribe(&mut self, filters: &[&str]) -> Result<(), BusError>;
    fn publish(&mut self, topic: &str, payload: Vec<u8>) -> Result<(), BusError>;
    fn flush(&mut self) -> Result<(), BusError>;
    fn drain(&mut self) -> Result<Vec<Message>, BusError>;
}

impl Endpoint for LocalClient {
    fn subscribe(&mut self, filters: &[&str]) -> Result<(), BusError> {
        for f in filters {
            LocalClient::subscribe(self, f)?;
        }
        Ok(())
    }

    fn publish(&mut self, topic: &str, payload: Vec<u8>) -> Result<(), BusError> {
        LocalClient::publish(self, topic, payload)?;
        Ok(())
    }

    fn flush(&mut self) -> Result<(), BusError> {
        Ok(())
    }

    fn drain(&mut self) -> Result<Vec<Message>, BusError> {
        Ok(LocalClient::drain(self)?)
    }
}

impl Endpoint for TcpClient {
    fn subscribe(&mut self, filters: &[&str]) -> Result<(), BusError> {
        Ok(TcpClient::subscribe(self, filters)?)
    }

    fn publish(&mut self, topic: &str, payload: Vec<u8>) -> Result<(), BusError> {
        Ok(TcpClient::publish(self, topic, payload)?)
    }

    fn flush(&mut self) -> Result<(), BusError> {
        Ok(self.sync()?)
    }

    fn drain(&mut self) -> Result<Vec<Message>, BusError> {
        self.sync()?;
        Ok(TcpClient::drain(self))
    }
}

/// The broker plus, in TCP mode, its listener and the runtime serving it.
pub struct Bus {
    broker: Broker,
    transport: Transport,
    tcp: Option<(tokio::runtime::Runtime, ServerHandle)>,
}

impl Bus {
    pub fn start(transport: Transport, config: BrokerConfig) -> Result<Self, BusError> {
        let broker = Broker::new(config);
        let tcp = match transport {
            Transport::InProcess => None,
            Transport::Tcp => {
                let rt = tokio::runtime::Builder::new_multi_thread()
                    .worker_threads(1)
                    .enable_all()
                    .build()
                    .map_err(BusError::Listen)?;
                let addr: SocketAddr = "127.0.0.1:0".parse().expect("literal address");
                let handle = rt.block_on(sb_broker::bind(addr, broker.clone())).map_err(BusError::Listen)?;
                Some((rt, handle))
            }
        };
        Ok(Self { broker, transport, tcp })
    }

    pub fn broker(&self) -> &Broker {
        &self.broker
    }

    pub fn transport(&self) -> Transport {
        self.transport
    }

    pub fn local_addr(&self) -> Option<SocketAddr> {
        self.tcp.as_ref().map(|(_, h)| h.local_addr)
    }

    pub fn connect(&self, client_id: &str) -> Result<Box<dyn Endpoint>, BusError> {
        match &self.tcp {
            None => Ok(Box::new(self.broker.connect_local(client_id)?)),
            // keep-alive 0: the orchestrator may sit paused for arbitrarily long
            Some((_, h)) => Ok(Box::new(TcpClient::connect(h.local_addr, client_id, 0)?)),
        }
    }
}

impl Drop for Bus {
    fn drop(&mut self) {
        self.broker.shutdown();
        if let Some((rt, handle)) = self.tcp.take() {
            handle.abort();
            rt.shutdown_background();
        }
    }
}
