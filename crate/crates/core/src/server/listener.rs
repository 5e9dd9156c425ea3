use std::io::{self, BufReader, ErrorKind};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc::TryRecvError;
use std::sync::{Arc, Mutex};
use std::thread::{self, JoinHandle};
use std::time::Duration;

use tungstenite::{Message as WsMessage, WebSocket};

use crate::protocol::{decode_message, read_message, ReadError};

use super::transport::{ChannelSink, MessageSink, TcpSink};
use super::{RendererFactory, ServerConfig, Session};

pub const LISTEN_ENV: &str = "NEARPORT_LISTEN";

const ACCEPT_POLL: Duration = Duration::from_millis(10);
const WS_POLL: Duration = Duration::from_millis(1);

/// Reads `NEARPORT_LISTEN` as `tcp_addr[,ws_addr]`. A missing ws part
/// leaves the websocket address unchanged.
pub fn listen_override(value: &str) -> Result<(SocketAddr, Option<SocketAddr>), String> {
    let mut parts = value.split(',').map(str::trim);
    let tcp = parts.next().unwrap_or_default();
    let tcp: SocketAddr = tcp.parse().map_err(|e| format!("{LISTEN_ENV}: bad address {tcp:?}: {e}"))?;
    let ws = match parts.next() {
        Some(w) if !w.is_empty() => Some(w.parse().map_err(|e| format!("{LISTEN_ENV}: bad address {w:?}: {e}"))?),
        _ => None,
    };
    if parts.next().is_some() {
        return Err(format!("{LISTEN_ENV}: expected at most two addresses"));
    }
    Ok((tcp, ws))
}

struct Shared {
    config: ServerConfig,
    factory: RendererFactory,
    stop: AtomicBool,
    sinks: Mutex<Vec<Arc<dyn MessageSink>>>,
    connections: Mutex<Vec<JoinHandle<()>>>,
}

impl Shared {
    fn track(&self, sink: Arc<dyn MessageSink>, handle: JoinHandle<()>) {
        let mut sinks = self.sinks.lock().unwrap_or_else(|e| e.into_inner());
        sinks.push(sink);
        self.connections.lock().unwrap_or_else(|e| e.into_inner()).push(handle);
    }
}

/// Listening server: one TCP port for the length-delimited stream and an
/// optional websocket port carrying one protocol message per binary frame.
pub struct Server {
    shared: Arc<Shared>,
    tcp_addr: SocketAddr,
    ws_addr: Option<SocketAddr>,
    accept_threads: Vec<JoinHandle<()>>,
}

/// Cheap handle that can request shutdown from another thread.
#[derive(Clone)]
pub struct ServerHandle {
    shared: Arc<Shared>,
}

impl ServerHandle {
    pub fn stop(&self) {
        self.shared.stop.store(true, Ordering::Release);
    }
}

impl Server {
    pub fn bind(
        config: ServerConfig,
        factory: RendererFactory,
        tcp_addr: SocketAddr,
        ws_addr: Option<SocketAddr>,
    ) -> io::Result<Server> {
        config.intrinsics.validate().map_err(|e| io::Error::new(ErrorKind::InvalidInput, e.to_string()))?;
        let shared = Arc::new(Shared {
            config,
            factory,
            stop: AtomicBool::new(false),
            sinks: Mutex::new(Vec::new()),
            connections: Mutex::new(Vec::new()),
        });
        let tcp = TcpListener::bind(tcp_addr)?;
        tcp.set_nonblocking(true)?;
        let tcp_addr = tcp.local_addr()?;
        let ws = match ws_addr {
            Some(a) => {
                let l = TcpListener::bind(a)?;
                l.set_nonblocking(true)?;
                Some(l)
            }
            None => None,
        };
        let ws_addr = ws.as_ref().map(|l| l.local_addr()).transpose()?;
        log::info!(
            "event=listening tcp={tcp_addr} ws={}",
            ws_addr.map(|a| a.to_string()).unwrap_or_else(|| "-".into())
        );
        let mut accept_threads = vec![spawn_accept(Arc::clone(&shared), tcp, false)];
        if let Some(l) = ws {
            accept_threads.push(spawn_accept(Arc::clone(&shared), l, true));
        }
        Ok(Server { shared, tcp_addr, ws_addr, accept_threads })
    }

    pub fn tcp_addr(&self) -> SocketAddr {
        self.tcp_addr
    }

    pub fn ws_addr(&self) -> Option<SocketAddr> {
        self.ws_addr
    }

    pub fn handle(&self) -> ServerHandle {
        ServerHandle { shared: Arc::clone(&self.shared) }
    }

    /// Blocks until a stop is requested through a [`ServerHandle`].
    pub fn wait(self) {
        while !self.shared.stop.load(Ordering::Acquire) {
            thread::sleep(Duration::from_millis(50));
        }
        self.shutdown();
    }

    /// Stops accepting, closes every live connection and joins all threads.
    pub fn shutdown(mut self) {
        self.shared.stop.store(true, Ordering::Release);
        for t in self.accept_threads.drain(..) {
            let _ = t.join();
        }
        for s in self.shared.sinks.lock().unwrap_or_else(|e| e.into_inner()).drain(..) {
            s.close();
        }
        let conns: Vec<_> = self.shared.connections.lock().unwrap_or_else(|e| e.into_inner()).drain(..).collect();
        for c in conns {
            let _ = c.join();
        }
    }
}

fn spawn_accept(shared: Arc<Shared>, listener: TcpListener, websocket: bool) -> JoinHandle<()> {
    thread::Builder::new()
        .name(if websocket { "accept-ws" } else { "accept-tcp" }.into())
        .spawn(move || {
            while !shared.stop.load(Ordering::Acquire) {
                match listener.accept() {
                    Ok((stream, peer)) => {
                        log::info!("event=connect peer={peer} transport={}", if websocket { "ws" } else { "tcp" });
                        if let Err(e) = start_connection(&shared, stream, websocket) {
                            log::warn!("event=connection_setup_failed peer={peer} error=\"{e}\"");
                        }
                    }
                    Err(e) if e.kind() == ErrorKind::WouldBlock => thread::sleep(ACCEPT_POLL),
                    Err(e) => {
                        log::warn!("event=accept_failed error=\"{e}\"");
                        thread::sleep(ACCEPT_POLL);
                    }
                }
            }
        })
        .expect("spawn accept loop")
}

fn start_connection(shared: &Arc<Shared>, stream: TcpStream, websocket: bool) -> io::Result<()> {
    stream.set_nonblocking(false)?;
    stream.set_nodelay(true)?;
    let config = shared.config.clone();
    let factory = Arc::clone(&shared.factory);
    if websocket {
        let (sink, rx) = ChannelSink::new();
        let sink = Arc::new(sink);
        let s2: Arc<dyn MessageSink> = sink.clone();
        let sink_handle = Arc::clone(&sink);
        let handle = thread::Builder::new()
            .name("conn-ws".into())
            .spawn(move || run_ws(stream, Session::new(config, factory, s2), &sink, rx))?;
        let tracked: Arc<dyn MessageSink> = sink_handle;
        shared.track(tracked, handle);
    } else {
        let sink: Arc<dyn MessageSink> = Arc::new(TcpSink::new(stream.try_clone()?));
        let s2 = Arc::clone(&sink);
        let handle = thread::Builder::new()
            .name("conn-tcp".into())
            .spawn(move || run_tcp(stream, Session::new(config, factory, s2)))?;
        shared.track(sink, handle);
    }
    Ok(())
}

fn run_tcp(stream: TcpStream, mut session: Session) {
    let mut reader = BufReader::new(stream);
    loop {
        match read_message(&mut reader) {
            Ok(Some(msg)) => {
                if let Err(e) = session.handle_message(msg) {
                    log::warn!("event=session_error error=\"{e}\"");
                    break;
                }
            }
            Ok(None) => break,
            Err(ReadError::Io(e)) => {
                log::debug!("event=read_failed error=\"{e}\"");
                break;
            }
            Err(ReadError::Decode(e)) => {
                log::warn!("event=decode_failed error=\"{e}\"");
                break;
            }
        }
    }
    session.close();
    log::info!("event=disconnect client_id={}", session.client_id().unwrap_or("-"));
}

fn is_timeout(e: &tungstenite::Error) -> bool {
    matches!(e, tungstenite::Error::Io(io) if matches!(io.kind(), ErrorKind::WouldBlock | ErrorKind::TimedOut))
}

fn run_ws(stream: TcpStream, mut session: Session, sink: &ChannelSink, rx: std::sync::mpsc::Receiver<Vec<u8>>) {
    let mut ws: WebSocket<TcpStream> = match tungstenite::accept(stream) {
        Ok(ws) => ws,
        Err(e) => {
            log::warn!("event=ws_handshake_failed error=\"{e}\"");
            return;
        }
    };
    if let Err(e) = ws.get_ref().set_read_timeout(Some(WS_POLL)) {
        log::warn!("event=ws_setup_failed error=\"{e}\"");
        return;
    }
    'conn: loop {
        loop {
            match rx.try_recv() {
                Ok(bytes) => {
                    if ws.send(WsMessage::Binary(bytes.into())).is_err() {
                        break 'conn;
                    }
                }
                Err(TryRecvError::Empty) => break,
                Err(TryRecvError::Disconnected) => break 'conn,
            }
        }
        if sink.is_closed() {
            break;
        }
        match ws.read() {
            Ok(WsMessage::Binary(data)) => match decode_message(&data) {
                Ok(msg) => {
                    if let Err(e) = session.handle_message(msg) {
                        log::warn!("event=session_error error=\"{e}\"");
                        break;
                    }
                }
                Err(e) => {
                    log::warn!("event=decode_failed error=\"{e}\"");
                    break;
                }
            },
            Ok(WsMessage::Close(_)) => break,
            Ok(_) => {}
            Err(e) if is_timeout(&e) => {}
            Err(e) => {
                log::debug!("event=ws_read_failed error=\"{e}\"");
                break;
            }
        }
    }
    sink.close();
    session.close();
    let _ = ws.close(None);
    let _ = ws.flush();
    log::info!("event=disconnect client_id={} transport=ws", session.client_id().unwrap_or("-"));
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn listen_override_forms() {
        let (t, w) = listen_override("127.0.0.1:9000").unwrap();
        assert_eq!(t.port(), 9000);
        assert!(w.is_none());
        let (_, w) = listen_override("0.0.0.0:9000, 0.0.0.0:9001").unwrap();
        assert_eq!(w.unwrap().port(), 9001);
        assert!(listen_override("nope").is_err());
        assert!(listen_override("1.2.3.4:1,1.2.3.4:2,1.2.3.4:3").is_err());
    }
}
