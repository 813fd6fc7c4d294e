use std::io::{BufRead, BufReader, Write};
use std::net::{SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread::{self, JoinHandle};
use std::time::Duration;

use tungstenite::Message;

use super::config::SessionConfig;
use super::session::Session;
use super::wire::ServerMessage;
use super::ServiceError;
use crate::estimator::{load_weights, ModelParams};

/// Shared, read-only state for all connections.
pub struct ServiceContext {
    config: SessionConfig,
    model: Option<Arc<ModelParams<f32>>>,
}

impl ServiceContext {
    /// Validates the configuration and loads the weights file, if any.
    pub fn new(config: SessionConfig) -> Result<Self, ServiceError> {
        config.validate()?;
        let model = match &config.weights {
            Some(path) => Some(Arc::new(load_weights(path)?)),
            None => None,
        };
        Ok(Self { config, model })
    }

    /// Uses an in-memory model instead of `config.weights`.
    pub fn with_model(config: SessionConfig, model: Option<ModelParams<f32>>) -> Result<Self, ServiceError> {
        if model.is_some() {
            config.validate_numbers()?;
        } else {
            config.validate()?;
        }
        Ok(Self {
            config,
            model: model.map(Arc::new),
        })
    }

    pub fn new_session(&self) -> Result<Session, ServiceError> {
        Session::new(self.config.clone(), self.model.clone())
    }
}

/// Accepts connections on one port. A client opening with an HTTP `GET`
/// is upgraded to a WebSocket carrying one JSON message per text frame;
/// anything else speaks newline-delimited JSON.
pub struct Server {
    listener: TcpListener,
    context: Arc<ServiceContext>,
}

pub struct ServerHandle {
    addr: SocketAddr,
    stop: Arc<AtomicBool>,
    thread: Option<JoinHandle<()>>,
}

impl ServerHandle {
    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    /// Stops accepting; open connections finish on their own.
    pub fn stop(mut self) {
        self.shutdown();
    }

    fn shutdown(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        // Wake the blocking accept.
        let _ = TcpStream::connect(self.addr);
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

impl Drop for ServerHandle {
    fn drop(&mut self) {
        self.shutdown();
    }
}

impl Server {
    pub fn bind(addr: impl ToSocketAddrs, context: ServiceContext) -> Result<Self, ServiceError> {
        let listener = TcpListener::bind(addr).map_err(|source| ServiceError::Io {
            path: "listen address".into(),
            source,
        })?;
        Ok(Self {
            listener,
            context: Arc::new(context),
        })
    }

    pub fn local_addr(&self) -> SocketAddr {
        self.listener.local_addr().expect("bound listener")
    }

    /// Serves until the process ends.
    pub fn run(self) {
        self.accept_loop(&AtomicBool::new(false));
    }

    /// Serves on a background thread.
    pub fn spawn(self) -> ServerHandle {
        let addr = self.local_addr();
        let stop = Arc::new(AtomicBool::new(false));
        let flag = stop.clone();
        let thread = thread::spawn(move || self.accept_loop(&flag));
        ServerHandle {
            addr,
            stop,
            thread: Some(thread),
        }
    }

    fn accept_loop(&self, stop: &AtomicBool) {
        for stream in self.listener.incoming() {
            if stop.load(Ordering::SeqCst) {
                break;
            }
            let Ok(stream) = stream else { continue };
            let context = self.context.clone();
            thread::spawn(move || {
                // A dropped connection only ends its own session.
                let _ = handle_connection(stream, &context);
            });
        }
    }
}

fn is_websocket(stream: &TcpStream) -> std::io::Result<bool> {
    let mut buf = [0u8; 4];
    loop {
        let n = stream.peek(&mut buf)?;
        if n == 0 || n == buf.len() || !b"GET ".starts_with(&buf[..n]) {
            return Ok(n == buf.len() && &buf == b"GET ");
        }
        thread::sleep(Duration::from_millis(2));
    }
}

fn handle_connection(stream: TcpStream, context: &ServiceContext) -> Result<(), ServiceError> {
    let io = |source| ServiceError::Io {
        path: "connection".into(),
        source,
    };
    stream.set_nodelay(true).map_err(io)?;
    let mut session = context.new_session()?;
    if is_websocket(&stream).map_err(io)? {
        let mut ws = tungstenite::accept(stream).map_err(|e| ServiceError::Socket(e.to_string()))?;
        loop {
            let text = match ws.read() {
                Ok(Message::Text(t)) => t,
                Ok(Message::Binary(b)) => String::from_utf8_lossy(&b).into_owned(),
                Ok(Message::Close(_)) | Err(_) => break,
                Ok(_) => continue,
            };
            for reply in session.handle_text(&text) {
                ws.send(Message::Text(reply.to_json()))
                    .map_err(|e| ServiceError::Socket(e.to_string()))?;
            }
        }
        return Ok(());
    }
    let mut writer = stream.try_clone().map_err(io)?;
    for line in BufReader::new(stream).lines() {
        let line = line.map_err(io)?;
        if line.trim().is_empty() {
            continue;
        }
        let replies = session.handle_text(&line);
        write_lines(&mut writer, &replies).map_err(io)?;
    }
    Ok(())
}

fn write_lines(w: &mut impl Write, replies: &[ServerMessage]) -> std::io::Result<()> {
    let mut out = String::new();
    for r in replies {
        out.push_str(&r.to_json());
        out.push('\n');
    }
    w.write_all(out.as_bytes())?;
    w.flush()
}
