//! Minimal MQTT 3.1.1 broker (QoS 0, no retained messages, no wills) with an
//! in-process client and a blocking TCP client.

pub mod client;
pub mod codec;
mod connection;
mod router;
mod server;
pub mod topic;

pub use client::{ClientError, TcpClient};
pub use codec::{decode, decode_packet, encode, encode_to_vec, CodecError, Packet, Publish};
pub use connection::{Connection, Step};
pub use router::{
    Broker, BrokerConfig, BrokerError, BrokerStats, DisconnectReason, LocalClient, Message, Registration,
    SessionHandle,
};
pub use server::{bind, serve, ServerHandle};
pub use topic::{match_topic, matches, validate_filter, validate_topic_name, TopicError};
