//! MQTT 3.1.1 packet codec for the QoS 0 subset.

use bytes::{Buf, BufMut, Bytes, BytesMut};
use thiserror::Error;

use crate::topic::{validate_filter, validate_topic_name, TopicError};

/// Largest value representable by the four-byte remaining-length field.
pub const MAX_REMAINING_LENGTH: usize = 268_435_455;
pub const PROTOCOL_NAME: &str = "MQTT";
pub const PROTOCOL_LEVEL: u8 = 4;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CodecError {
    #[error("truncated packet: need at least {needed} more bytes")]
    Truncated { needed: usize },
    #[error("malformed remaining length")]
    BadRemainingLength,
    #[error("remaining length {0} exceeds {MAX_REMAINING_LENGTH}")]
    RemainingTooLong(usize),
    #[error("reserved packet type {0}")]
    ReservedType(u8),
    #[error("invalid fixed-header flags {flags:#06b} for {kind}")]
    BadFlags { kind: &'static str, flags: u8 },
    #[error("string of {0} bytes exceeds 65535")]
    StringTooLong(usize),
    #[error("string is not valid UTF-8")]
    InvalidUtf8,
    #[error(transparent)]
    Topic(#[from] TopicError),
    #[error("QoS {0} is not supported")]
    UnsupportedQos(u8),
    #[error("{0}")]
    Protocol(&'static str),
    #[error("packet of {size} bytes exceeds limit of {max}")]
    TooLarge { size: usize, max: usize },
    #[error("{extra} unexpected bytes after packet")]
    Trailing { extra: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum ConnectReturnCode {
    Accepted = 0,
    UnacceptableProtocol = 1,
    IdentifierRejected = 2,
    ServerUnavailable = 3,
    BadCredentials = 4,
    NotAuthorized = 5,
}

impl ConnectReturnCode {
    fn from_u8(v: u8) -> Result<Self, CodecError> {
        Ok(match v {
            0 => Self::Accepted,
            1 => Self::UnacceptableProtocol,
            2 => Self::IdentifierRejected,
            3 => Self::ServerUnavailable,
            4 => Self::BadCredentials,
            5 => Self::NotAuthorized,
            _ => return Err(CodecError::Protocol("unknown CONNACK return code")),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Connect {
    pub protocol_level: u8,
    pub client_id: String,
    pub keep_alive_s: u16,
    pub clean_session: bool,
    pub username: Option<String>,
    pub password: Option<Bytes>,
}

impl Connect {
    pub fn new(client_id: impl Into<String>, keep_alive_s: u16) -> Self {
        Self {
            protocol_level: PROTOCOL_LEVEL,
            client_id: client_id.into(),
            keep_alive_s,
            clean_session: true,
            username: None,
            password: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConnAck {
    pub session_present: bool,
    pub code: ConnectReturnCode,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Publish {
    pub topic: String,
    pub payload: Bytes,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Subscribe {
    pub packet_id: u16,
    /// `(filter, requested QoS)`.
    pub filters: Vec<(String, u8)>,
}

pub const SUBACK_FAILURE: u8 = 0x80;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SubAck {
    pub packet_id: u16,
    pub return_codes: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Unsubscribe {
    pub packet_id: u16,
    pub filters: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Packet {
    Connect(Connect),
    ConnAck(ConnAck),
    Publish(Publish),
    Subscribe(Subscribe),
    SubAck(SubAck),
    Unsubscribe(Unsubscribe),
    UnsubAck { packet_id: u16 },
    PingReq,
    PingResp,
    Disconnect,
}

impl Packet {
    pub fn kind(&self) -> &'static str {
        match self {
            Packet::Connect(_) => "CONNECT",
            Packet::ConnAck(_) => "CONNACK",
            Packet::Publish(_) => "PUBLISH",
            Packet::Subscribe(_) => "SUBSCRIBE",
            Packet::SubAck(_) => "SUBACK",
            Packet::Unsubscribe(_) => "UNSUBSCRIBE",
            Packet::UnsubAck { .. } => "UNSUBACK",
            Packet::PingReq => "PINGREQ",
            Packet::PingResp => "PINGRESP",
            Packet::Disconnect => "DISCONNECT",
        }
    }
}

fn string_len(s: &str) -> Result<usize, CodecError> {
    if s.len() > u16::MAX as usize {
        return Err(CodecError::StringTooLong(s.len()));
    }
    Ok(2 + s.len())
}

fn put_string(buf: &mut BytesMut, s: &str) {
    buf.put_u16(s.len() as u16);
    buf.put_slice(s.as_bytes());
}

fn put_remaining_length(buf: &mut BytesMut, mut len: usize) {
    loop {
        let mut byte = (len % 128) as u8;
        len /= 128;
        if len > 0 {
            byte |= 0x80;
        }
        buf.put_u8(byte);
        if len == 0 {
            break;
        }
    }
}

/// Appends the wire form of `packet` to `buf`.
pub fn encode(packet: &Packet, buf: &mut BytesMut) -> Result<(), CodecError> {
    let (header, remaining) = match packet {
        Packet::Connect(c) => {
            let mut len = string_len(PROTOCOL_NAME)? + 1 + 1 + 2 + string_len(&c.client_id)?;
            if let Some(u) = &c.username {
                len += string_len(u)?;
            }
            if let Some(p) = &c.password {
                if c.username.is_none() {
                    return Err(CodecError::Protocol("password without username"));
                }
                if p.len() > u16::MAX as usize {
                    return Err(CodecError::StringTooLong(p.len()));
                }
                len += 2 + p.len();
            }
            (0x10, len)
        }
        Packet::ConnAck(_) => (0x20, 2),
        Packet::Publish(p) => {
            validate_topic_name(&p.topic)?;
            (0x30, string_len(&p.topic)? + p.payload.len())
        }
        Packet::Subscribe(s) => {
            if s.filters.is_empty() {
                return Err(CodecError::Protocol("SUBSCRIBE without filters"));
            }
            let mut len = 2;
            for (f, qos) in &s.filters {
                validate_filter(f)?;
                if *qos > 2 {
                    return Err(CodecError::UnsupportedQos(*qos));
                }
                len += string_len(f)? + 1;
            }
            (0x82, len)
        }
        Packet::SubAck(s) => (0x90, 2 + s.return_codes.len()),
        Packet::Unsubscribe(u) => {
            if u.filters.is_empty() {
                return Err(CodecError::Protocol("UNSUBSCRIBE without filters"));
            }
            let mut len = 2;
            for f in &u.filters {
                validate_filter(f)?;
                len += string_len(f)?;
            }
            (0xA2, len)
        }
        Packet::UnsubAck { .. } => (0xB0, 2),
        Packet::PingReq => (0xC0, 0),
        Packet::PingResp => (0xD0, 0),
        Packet::Disconnect => (0xE0, 0),
    };
    if remaining > MAX_REMAINING_LENGTH {
        return Err(CodecError::RemainingTooLong(remaining));
    }
    buf.reserve(1 + 4 + remaining);
    buf.put_u8(header);
    put_remaining_length(buf, remaining);
    match packet {
        Packet::Connect(c) => {
            put_string(buf, PROTOCOL_NAME);
            buf.put_u8(c.protocol_level);
            let mut flags = 0u8;
            if c.clean_session {
                flags |= 0x02;
            }
            if c.password.is_some() {
                flags |= 0x40;
            }
            if c.username.is_some() {
                flags |= 0x80;
            }
            buf.put_u8(flags);
            buf.put_u16(c.keep_alive_s);
            put_string(buf, &c.client_id);
            if let Some(u) = &c.username {
                put_string(buf, u);
            }
            if let Some(p) = &c.password {
                buf.put_u16(p.len() as u16);
                buf.put_slice(p);
            }
        }
        Packet::ConnAck(a) => {
            buf.put_u8(a.session_present as u8);
            buf.put_u8(a.code as u8);
        }
        Packet::Publish(p) => {
            put_string(buf, &p.topic);
            buf.put_slice(&p.payload);
        }
        Packet::Subscribe(s) => {
            buf.put_u16(s.packet_id);
            for (f, qos) in &s.filters {
                put_string(buf, f);
                buf.put_u8(*qos);
            }
        }
        Packet::SubAck(s) => {
            buf.put_u16(s.packet_id);
            buf.put_slice(&s.return_codes);
        }
        Packet::Unsubscribe(u) => {
            buf.put_u16(u.packet_id);
            for f in &u.filters {
                put_string(buf, f);
            }
        }
        Packet::UnsubAck { packet_id } => buf.put_u16(*packet_id),
        Packet::PingReq | Packet::PingResp | Packet::Disconnect => {}
    }
    Ok(())
}

pub fn encode_to_vec(packet: &Packet) -> Result<Vec<u8>, CodecError> {
    let mut buf = BytesMut::new();
    encode(packet, &mut buf)?;
    Ok(buf.to_vec())
}

/// Parses the fixed header. `Ok(None)` means more bytes are needed.
fn fixed_header(buf: &[u8]) -> Result<Option<(u8, usize, usize)>, CodecError> {
    let Some(&first) = buf.first() else { return Ok(None) };
    let mut len = 0usize;
    let mut multiplier = 1usize;
    for i in 0..4 {
        let Some(&byte) = buf.get(1 + i) else { return Ok(None) };
        len += (byte & 0x7F) as usize * multiplier;
        if byte & 0x80 == 0 {
            return Ok(Some((first, 2 + i, len)));
        }
        multiplier *= 128;
    }
    Err(CodecError::BadRemainingLength)
}

struct Reader<'a> {
    buf: &'a [u8],
}

impl Reader<'_> {
    fn need(&self, n: usize) -> Result<(), CodecError> {
        if self.buf.len() < n {
            return Err(CodecError::Protocol("field runs past end of packet"));
        }
        Ok(())
    }

    fn u8(&mut self) -> Result<u8, CodecError> {
        self.need(1)?;
        Ok(self.buf.get_u8())
    }

    fn u16(&mut self) -> Result<u16, CodecError> {
        self.need(2)?;
        Ok(self.buf.get_u16())
    }

    fn bytes(&mut self) -> Result<&[u8], CodecError> {
        let n = self.u16()? as usize;
        self.need(n)?;
        let (head, tail) = self.buf.split_at(n);
        self.buf = tail;
        Ok(head)
    }

    fn string(&mut self) -> Result<String, CodecError> {
        let raw = self.bytes()?;
        let s = std::str::from_utf8(raw).map_err(|_| CodecError::InvalidUtf8)?;
        if s.contains('\0') {
            return Err(CodecError::Protocol("string contains U+0000"));
        }
        Ok(s.to_string())
    }

    fn rest(&mut self) -> &[u8] {
        std::mem::take(&mut self.buf)
    }

    fn is_empty(&self) -> bool {
        self.buf.is_empty()
    }
}

fn check_flags(kind: &'static str, flags: u8, expected: u8) -> Result<(), CodecError> {
    if flags != expected {
        return Err(CodecError::BadFlags { kind, flags });
    }
    Ok(())
}

fn decode_body(first: u8, body: &[u8]) -> Result<Packet, CodecError> {
    let kind = first >> 4;
    let flags = first & 0x0F;
    let mut r = Reader { buf: body };
    let packet = match kind {
        1 => {
            check_flags("CONNECT", flags, 0)?;
            let name = r.string()?;
            if name != PROTOCOL_NAME {
                return Err(CodecError::Protocol("protocol name is not MQTT"));
            }
            let protocol_level = r.u8()?;
            let connect_flags = r.u8()?;
            if connect_flags & 0x01 != 0 {
                return Err(CodecError::Protocol("reserved CONNECT flag set"));
            }
            if connect_flags & 0x04 != 0 {
                return Err(CodecError::Protocol("will messages are not supported"));
            }
            if connect_flags & 0x38 != 0 {
                return Err(CodecError::Protocol("will QoS/retain set without will flag"));
            }
            let has_user = connect_flags & 0x80 != 0;
            let has_pass = connect_flags & 0x40 != 0;
            if has_pass && !has_user {
                return Err(CodecError::Protocol("password without username"));
            }
            let keep_alive_s = r.u16()?;
            let client_id = r.string()?;
            let username = if has_user { Some(r.string()?) } else { None };
            let password = if has_pass { Some(Bytes::copy_from_slice(r.bytes()?)) } else { None };
            Packet::Connect(Connect {
                protocol_level,
                client_id,
                keep_alive_s,
                clean_session: connect_flags & 0x02 != 0,
                username,
                password,
            })
        }
        2 => {
            check_flags("CONNACK", flags, 0)?;
            let ack = r.u8()?;
            if ack & 0xFE != 0 {
                return Err(CodecError::Protocol("reserved CONNACK flag set"));
            }
            let code = ConnectReturnCode::from_u8(r.u8()?)?;
            Packet::ConnAck(ConnAck { session_present: ack == 1, code })
        }
        3 => {
            let qos = (flags >> 1) & 0x03;
            if qos != 0 {
                return Err(CodecError::UnsupportedQos(qos));
            }
            if flags & 0x08 != 0 {
                return Err(CodecError::Protocol("DUP set on a QoS 0 PUBLISH"));
            }
            if flags & 0x01 != 0 {
                return Err(CodecError::Protocol("retained messages are not supported"));
            }
            let topic = r.string()?;
            validate_topic_name(&topic)?;
            Packet::Publish(Publish { topic, payload: Bytes::copy_from_slice(r.rest()) })
        }
        8 => {
            check_flags("SUBSCRIBE", flags, 0x02)?;
            let packet_id = r.u16()?;
            let mut filters = Vec::new();
            while !r.is_empty() {
                let f = r.string()?;
                let qos = r.u8()?;
                if qos > 2 {
                    return Err(CodecError::Protocol("requested QoS byte is malformed"));
                }
                filters.push((f, qos));
            }
            if filters.is_empty() {
                return Err(CodecError::Protocol("SUBSCRIBE without filters"));
            }
            Packet::Subscribe(Subscribe { packet_id, filters })
        }
        9 => {
            check_flags("SUBACK", flags, 0)?;
            let packet_id = r.u16()?;
            let return_codes = r.rest().to_vec();
            if return_codes.iter().any(|&c| !matches!(c, 0 | 1 | 2 | SUBACK_FAILURE)) {
                return Err(CodecError::Protocol("invalid SUBACK return code"));
            }
            Packet::SubAck(SubAck { packet_id, return_codes })
        }
        10 => {
            check_flags("UNSUBSCRIBE", flags, 0x02)?;
            let packet_id = r.u16()?;
            let mut filters = Vec::new();
            while !r.is_empty() {
                filters.push(r.string()?);
            }
            if filters.is_empty() {
                return Err(CodecError::Protocol("UNSUBSCRIBE without filters"));
            }
            Packet::Unsubscribe(Unsubscribe { packet_id, filters })
        }
        11 => {
            check_flags("UNSUBACK", flags, 0)?;
            Packet::UnsubAck { packet_id: r.u16()? }
        }
        12 => {
            check_flags("PINGREQ", flags, 0)?;
            Packet::PingReq
        }
        13 => {
            check_flags("PINGRESP", flags, 0)?;
            Packet::PingResp
        }
        14 => {
            check_flags("DISCONNECT", flags, 0)?;
            Packet::Disconnect
        }
        // QoS 1/2 acknowledgements are outside the supported subset
        4..=7 => return Err(CodecError::UnsupportedQos(1)),
        other => return Err(CodecError::ReservedType(other)),
    };
    if !r.is_empty() {
        return Err(CodecError::Trailing { extra: r.buf.len() });
    }
    Ok(packet)
}

/// Streaming decode: returns the packet and the number of bytes it used, or
/// `Ok(None)` if `buf` does not yet hold a complete packet.
pub fn decode(buf: &[u8], max_packet_size: usize) -> Result<Option<(Packet, usize)>, CodecError> {
    let Some((first, header_len, remaining)) = fixed_header(buf)? else { return Ok(None) };
    let total = header_len + remaining;
    if total > max_packet_size {
        return Err(CodecError::TooLarge { size: total, max: max_packet_size });
    }
    if buf.len() < total {
        return Ok(None);
    }
    let packet = decode_body(first, &buf[header_len..total])?;
    Ok(Some((packet, total)))
}

/// Decodes exactly one packet occupying all of `buf`.
pub fn decode_packet(buf: &[u8]) -> Result<Packet, CodecError> {
    match decode(buf, usize::MAX)? {
        None => {
            let needed = match fixed_header(buf) {
                Ok(Some((_, h, r))) => h + r - buf.len(),
                _ => 2usize.saturating_sub(buf.len()).max(1),
            };
            Err(CodecError::Truncated { needed })
        }
        Some((_, used)) if used < buf.len() => Err(CodecError::Trailing { extra: buf.len() - used }),
        Some((p, _)) => Ok(p),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn publish_golden_vector() {
        let p = Packet::Publish(Publish { topic: "a/b".into(), payload: Bytes::from_static(b"hi") });
        let bytes = encode_to_vec(&p).unwrap();
        assert_eq!(bytes, [0x30, 0x07, 0x00, 0x03, 0x61, 0x2F, 0x62, 0x68, 0x69]);
        assert_eq!(decode_packet(&bytes).unwrap(), p);
    }

    #[test]
    fn fixed_two_byte_packets() {
        assert_eq!(encode_to_vec(&Packet::PingReq).unwrap(), [0xC0, 0x00]);
        assert_eq!(encode_to_vec(&Packet::PingResp).unwrap(), [0xD0, 0x00]);
        assert_eq!(encode_to_vec(&Packet::Disconnect).unwrap(), [0xE0, 0x00]);
    }

    #[test]
    fn remaining_length_boundaries() {
        for (len, encoded) in [
            (0usize, vec![0x00]),
            (127, vec![0x7F]),
            (128, vec![0x80, 0x01]),
            (16_383, vec![0xFF, 0x7F]),
            (16_384, vec![0x80, 0x80, 0x01]),
            (2_097_151, vec![0xFF, 0xFF, 0x7F]),
            (2_097_152, vec![0x80, 0x80, 0x80, 0x01]),
            (MAX_REMAINING_LENGTH, vec![0xFF, 0xFF, 0xFF, 0x7F]),
        ] {
            let mut buf = BytesMut::new();
            put_remaining_length(&mut buf, len);
            assert_eq!(buf.to_vec(), encoded, "{len}");
            let mut framed = vec![0xC0];
            framed.extend(&encoded);
            assert_eq!(fixed_header(&framed).unwrap(), Some((0xC0, 1 + encoded.len(), len)));
        }
        assert_eq!(fixed_header(&[0x30, 0xFF, 0xFF, 0xFF, 0xFF, 0x01]), Err(CodecError::BadRemainingLength));
    }

    #[test]
    fn malformed_inputs() {
        assert_eq!(decode_packet(&[]), Err(CodecError::Truncated { needed: 2 }));
        assert_eq!(decode_packet(&[0x30, 0x07, 0x00]), Err(CodecError::Truncated { needed: 6 }));
        assert_eq!(decode_packet(&[0x00, 0x00]), Err(CodecError::ReservedType(0)));
        assert_eq!(decode_packet(&[0xF0, 0x00]), Err(CodecError::ReservedType(15)));
        assert!(matches!(decode_packet(&[0xC1, 0x00]), Err(CodecError::BadFlags { .. })));
        // wildcard in a PUBLISH topic
        assert!(matches!(decode_packet(&[0x30, 0x03, 0x00, 0x01, b'#']), Err(CodecError::Topic(_))));
        assert!(matches!(decode_packet(&[0x32, 0x05, 0x00, 0x01, b'a', 0x00, 0x01]), Err(CodecError::UnsupportedQos(1))));
        assert_eq!(decode_packet(&[0xC0, 0x00, 0x00]), Err(CodecError::Trailing { extra: 1 }));
        assert!(matches!(decode(&[0x30, 0x7F], 64), Err(CodecError::TooLarge { .. })));
    }

    #[test]
    fn encode_rejects_oversize() {
        let p = Packet::Publish(Publish { topic: "x".repeat(70_000), payload: Bytes::new() });
        assert!(encode_to_vec(&p).is_err());
        let p = Packet::Publish(Publish {
            topic: "t".into(),
            payload: Bytes::from(vec![0u8; MAX_REMAINING_LENGTH]),
        });
        assert_eq!(encode_to_vec(&p), Err(CodecError::RemainingTooLong(MAX_REMAINING_LENGTH + 3)));
    }
}
