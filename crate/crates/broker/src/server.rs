use std::io;
use std::net::SocketAddr;
use std::time::Duration;

use bytes::BytesMut;
use tokio::io::{AsyncReadExt, AsyncWriteExt};
use tokio::net::{TcpListener, TcpStream};
use tokio::sync::{mpsc, oneshot};
use tokio::task::JoinHandle;
use tokio::time::Instant;

use crate::codec::{decode, encode, Packet};
use crate::connection::{Connection, Step};
use crate::router::{Broker, DisconnectReason};

/// A running TCP listener.
pub struct ServerHandle {
    pub local_addr: SocketAddr,
    task: JoinHandle<()>,
}

impl ServerHandle {
    /// Stops accepting. Existing connections end when the broker shuts down.
    pub fn abort(&self) {
        self.task.abort();
    }
}

impl Drop for ServerHandle {
    fn drop(&mut self) {
        self.task.abort();
    }
}

pub async fn bind(addr: SocketAddr, broker: Broker) -> io::Result<ServerHandle> {
    let listener = TcpListener::bind(addr).await?;
    let local_addr = listener.local_addr()?;
    let task = tokio::spawn(async move {
        if let Err(e) = serve(listener, broker).await {
            tracing::error!("accept loop ended: {e}");
        }
    });
    Ok(ServerHandle { local_addr, task })
}

pub async fn serve(listener: TcpListener, broker: Broker) -> io::Result<()> {
    loop {
        let (stream, peer) = listener.accept().await?;
        let _ = stream.set_nodelay(true);
        let broker = broker.clone();
        tokio::spawn(async move {
            let reason = run_connection(stream, broker).await;
            tracing::debug!(%peer, "connection closed: {reason}");
        });
    }
}

async fn write_packet(stream: &mut TcpStream, out: &mut BytesMut, p: &Packet) -> io::Result<()> {
    out.clear();
    encode(p, out).map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))?;
    stream.write_all(out).await
}

struct Attached {
    outbound: mpsc::Receiver<Packet>,
    kill: oneshot::Receiver<DisconnectReason>,
    keep_alive: Option<Duration>,
}

async fn run_connection(mut stream: TcpStream, broker: Broker) -> DisconnectReason {
    let config = broker.config().clone();
    let mut conn = Connection::new(broker);
    let mut inbuf = BytesMut::with_capacity(4096);
    let mut outbuf = BytesMut::new();
    let mut attached: Option<Attached> = None;
    let mut deadline = Instant::now() + config.connect_timeout;

    let reason = 'conn: loop {
        let timed = !matches!(&attached, Some(Attached { keep_alive: None, .. }));
        let until = deadline;
        let read = async {
            if timed {
                tokio::time::timeout_at(until, stream.read_buf(&mut inbuf))
                    .await
                    .unwrap_or_else(|_| Err(io::ErrorKind::TimedOut.into()))
            } else {
                stream.read_buf(&mut inbuf).await
            }
        };
        let n = match &mut attached {
            None => read.await,
            Some(a) => {
                tokio::select! {
                    biased;
                    r = &mut a.kill => break 'conn r.unwrap_or(DisconnectReason::BrokerShutdown),
                    p = a.outbound.recv() => {
                        match p {
                            Some(p) => {
                                if write_packet(&mut stream, &mut outbuf, &p).await.is_err() {
                                    break 'conn DisconnectReason::ClientDisconnect;
                                }
                            }
                            None => break 'conn DisconnectReason::BrokerShutdown,
                        }
                        continue;
                    }
                    r = read => r,
                }
            }
        };
        match n {
            Ok(0) => break DisconnectReason::ClientDisconnect,
            Ok(_) => {}
            Err(e) if e.kind() == io::ErrorKind::TimedOut => break DisconnectReason::KeepAliveTimeout,
            Err(_) => break DisconnectReason::ClientDisconnect,
        }
        if let Some(Attached { keep_alive: Some(k), .. }) = &attached {
            deadline = Instant::now() + *k;
        }
        loop {
            let packet = match decode(&inbuf, config.max_packet_size) {
                Ok(Some((p, used))) => {
                    let _ = inbuf.split_to(used);
                    p
                }
                Ok(None) => break,
                Err(e) => break 'conn DisconnectReason::Protocol(e.to_string()),
            };
            match conn.handle(packet) {
                Step::Nothing => {}
                Step::Reply(p) => {
                    // flush earlier deliveries first so a PINGRESP acts as a barrier
                    if let Some(a) = &mut attached {
                        while let Ok(q) = a.outbound.try_recv() {
                            if write_packet(&mut stream, &mut outbuf, &q).await.is_err() {
                                break 'conn DisconnectReason::ClientDisconnect;
                            }
                        }
                    }
                    if write_packet(&mut stream, &mut outbuf, &p).await.is_err() {
                        break 'conn DisconnectReason::ClientDisconnect;
                    }
                }
                Step::Attach { connack, outbound, kill, keep_alive_s } => {
                    if write_packet(&mut stream, &mut outbuf, &connack).await.is_err() {
                        break 'conn DisconnectReason::ClientDisconnect;
                    }
                    let keep_alive = (keep_alive_s > 0)
                        .then(|| Duration::from_secs_f64(keep_alive_s as f64 * config.keep_alive_factor));
                    if let Some(k) = keep_alive {
                        deadline = Instant::now() + k;
                    }
                    attached = Some(Attached { outbound, kill, keep_alive });
                }
                Step::Close { reply, reason } => {
                    if let Some(p) = reply {
                        let _ = write_packet(&mut stream, &mut outbuf, &p).await;
                    }
                    break 'conn reason;
                }
            }
        }
    };
    conn.close();
    let _ = stream.shutdown().await;
    reason
}
