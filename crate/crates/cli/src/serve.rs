//! WebSocket gaze stream.
//!
//! One thread reads frames and runs the pipeline, one thread accepts
//! connections and every client gets its own thread. Frame results and
//! control events reach clients through a [`Broadcaster`]; client commands
//! travel back to the processing thread over a channel, so calibration
//! state is only ever touched in one place.

use std::io::{ErrorKind, Write};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::mpsc::{channel, Receiver, Sender, TryRecvError};
use std::sync::{Arc, Condvar, Mutex};
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use gazetrack::calibration::{CalibrationCollector, CollectorStep, DEFAULT_MIN_VALID};
use gazetrack::geometry::Point;
use gazetrack::stream::{
    Broadcaster, CalibrationCell, FrameSink, FrameSource, NdjsonSink, StreamEvent, StreamRunner, StreamSummary,
};
use gazetrack::{CalibrationMap, PipelineConfig};
use log::{debug, info, warn};
use serde::{Deserialize, Serialize};
use tungstenite::{Message, WebSocket};

use crate::error::CliError;

/// Per-connection outcome. The error is only logged, so its size is moot.
type WsResult = Result<(), tungstenite::Error>;

#[derive(Debug, Deserialize)]
#[serde(tag = "cmd", rename_all = "snake_case")]
pub enum ClientCommand {
    Calibrate { crosses: [Point; 2] },
    Recalibrate,
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct ScreenSize {
    pub w: u32,
    pub h: u32,
}

#[derive(Debug, Serialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum ServerEvent {
    Hello { screen: ScreenSize, calibrated: bool },
    ShowCross { index: usize, x: f64, y: f64 },
    Calibrated { calibration: CalibrationMap },
    CalibrationFailed { reason: String },
    CalibrationCleared,
    EndOfStream { frames: u64 },
    Error { reason: String },
}

impl ServerEvent {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("event serializes")
    }
}

pub struct ServeOptions {
    pub config: PipelineConfig,
    /// Replay pacing; `None` processes frames as they come.
    pub fps: Option<f64>,
    /// Frames per calibration cross.
    pub dwell: usize,
    /// Hold the source until this many clients are connected.
    pub wait_clients: usize,
    pub calibration: Option<CalibrationMap>,
}

/// Connected-client count, waitable.
#[derive(Default)]
struct Clients {
    count: Mutex<usize>,
    changed: Condvar,
    handles: Mutex<Vec<JoinHandle<()>>>,
}

impl Clients {
    fn add(&self) {
        *self.count.lock().expect("client count poisoned") += 1;
        self.changed.notify_all();
    }

    fn wait_for(&self, n: usize) {
        let mut count = self.count.lock().expect("client count poisoned");
        while *count < n {
            count = self.changed.wait(count).expect("client count poisoned");
        }
    }
}

#[derive(Clone)]
struct Shared {
    broadcaster: Broadcaster,
    commands: Sender<ClientCommand>,
    calibration: CalibrationCell,
    screen: ScreenSize,
    clients: Arc<Clients>,
}

/// Binds the listening socket. Separate from [`serve`] so bind failures
/// surface before any frame is read.
pub fn bind(host: &str, port: u16) -> Result<TcpListener, CliError> {
    TcpListener::bind((host, port)).map_err(|e| CliError::Io(format!("cannot bind {host}:{port}: {e}")))
}

pub fn serve(
    listener: TcpListener,
    source: &mut dyn FrameSource,
    opts: ServeOptions,
    log: &mut dyn FrameSink,
) -> Result<StreamSummary, CliError> {
    let addr: SocketAddr = listener.local_addr().map_err(CliError::from_write)?;
    eprintln!("gazetrack: listening on ws://{addr}");
    let (tx, rx) = channel();
    let shared = Shared {
        broadcaster: Broadcaster::new(),
        commands: tx,
        calibration: CalibrationCell::new(opts.calibration),
        screen: ScreenSize {
            w: opts.config.screen.width,
            h: opts.config.screen.height,
        },
        clients: Arc::default(),
    };
    {
        let shared = shared.clone();
        thread::spawn(move || accept_loop(listener, shared));
    }
    if opts.wait_clients > 0 {
        info!("waiting for {} client(s)", opts.wait_clients);
        shared.clients.wait_for(opts.wait_clients);
    }
    let summary = process_loop(source, &opts, &shared, rx, log)?;
    // clients exit once they have drained the end-of-stream event
    let handles: Vec<_> = std::mem::take(&mut *shared.clients.handles.lock().expect("client handles poisoned"));
    for h in handles {
        let _ = h.join();
    }
    Ok(summary)
}

fn process_loop(
    source: &mut dyn FrameSource,
    opts: &ServeOptions,
    shared: &Shared,
    commands: Receiver<ClientCommand>,
    log: &mut dyn FrameSink,
) -> Result<StreamSummary, CliError> {
    let notice = |e: ServerEvent| shared.broadcaster.send(StreamEvent::Notice(e.to_json().into()));
    let mut runner = StreamRunner::new(opts.config.clone(), shared.calibration.clone());
    let mut collector: Option<CalibrationCollector> = None;
    let mut broadcast = shared.broadcaster.clone();
    let start = Instant::now();
    let mut n = 0u64;
    loop {
        let frame = match source.next_frame() {
            Ok(Some(f)) => f,
            Ok(None) => break,
            Err(e) => return Err(CliError::Io(e.to_string())),
        };
        while let Ok(cmd) = commands.try_recv() {
            match cmd {
                ClientCommand::Calibrate { crosses } => {
                    info!("calibration requested at {crosses:?}");
                    let dwell = opts.dwell.max(1);
                    collector = Some(CalibrationCollector::with_window(
                        crosses,
                        opts.config.model,
                        dwell,
                        DEFAULT_MIN_VALID.min(dwell),
                    ));
                    notice(ServerEvent::ShowCross {
                        index: 0,
                        x: crosses[0].x,
                        y: crosses[0].y,
                    });
                }
                ClientCommand::Recalibrate => {
                    collector = None;
                    shared.calibration.set(None);
                    notice(ServerEvent::CalibrationCleared);
                }
            }
        }
        let r = runner.process(&frame);
        log.accept(&r).map_err(CliError::from_write)?;
        broadcast.accept(&r).map_err(CliError::from_write)?;
        if let Some(c) = collector.as_mut() {
            match c.push(&r) {
                CollectorStep::Continue => {}
                CollectorStep::ShowCross(i) => {
                    let p = c.crosses()[i];
                    notice(ServerEvent::ShowCross {
                        index: i,
                        x: p.x,
                        y: p.y,
                    });
                }
                CollectorStep::Done(Ok(map)) => {
                    info!("calibrated");
                    shared.calibration.set(Some(map));
                    notice(ServerEvent::Calibrated { calibration: map });
                    collector = None;
                }
                CollectorStep::Done(Err(e)) => {
                    warn!("calibration failed: {e}");
                    notice(ServerEvent::CalibrationFailed { reason: e.to_string() });
                    collector = None;
                }
            }
        }
        n += 1;
        if let Some(fps) = opts.fps {
            let due = start + Duration::from_secs_f64(n as f64 / fps);
            if let Some(wait) = due.checked_duration_since(Instant::now()) {
                thread::sleep(wait);
            }
        }
    }
    if let Some(c) = collector {
        notice(ServerEvent::CalibrationFailed {
            reason: format!("source ended during cross {}", c.current_cross()),
        });
    }
    log.finish().map_err(CliError::from_write)?;
    let mut summary = runner.summary().clone();
    summary.dropped = source.dropped();
    notice(ServerEvent::EndOfStream { frames: summary.frames });
    broadcast.finish().map_err(CliError::from_write)?;
    Ok(summary)
}

fn accept_loop(listener: TcpListener, shared: Shared) {
    for stream in listener.incoming() {
        match stream {
            Ok(stream) => {
                let mine = shared.clone();
                let handle = thread::spawn(move || {
                    let peer = stream.peer_addr().ok();
                    if let Err(e) = client(stream, &mine) {
                        debug!("client {peer:?}: {e}");
                    }
                });
                shared
                    .clients
                    .handles
                    .lock()
                    .expect("client handles poisoned")
                    .push(handle);
            }
            Err(e) => warn!("accept failed: {e}"),
        }
    }
}

fn is_timeout(e: &tungstenite::Error) -> bool {
    matches!(e, tungstenite::Error::Io(io) if matches!(io.kind(), ErrorKind::WouldBlock | ErrorKind::TimedOut))
}

#[allow(clippy::result_large_err)]
fn client(stream: TcpStream, shared: &Shared) -> WsResult {
    stream.set_nodelay(true)?;
    let mut ws = tungstenite::accept(stream).map_err(|e| match e {
        tungstenite::HandshakeError::Failure(e) => e,
        tungstenite::HandshakeError::Interrupted(_) => tungstenite::Error::ConnectionClosed,
    })?;
    // subscribe before the hello so no frame after it is missed
    let events = shared.broadcaster.subscribe();
    let hello = ServerEvent::Hello {
        screen: shared.screen,
        calibrated: shared.calibration.get().is_some(),
    };
    ws.send(Message::text(hello.to_json()))?;
    shared.clients.add();
    ws.get_ref().set_read_timeout(Some(Duration::from_millis(5)))?;
    loop {
        loop {
            match events.try_recv() {
                Ok(StreamEvent::Frame(r)) => ws.send(Message::text(r.to_json()))?,
                Ok(StreamEvent::Notice(text)) => ws.send(Message::text(text.to_string()))?,
                Ok(StreamEvent::EndOfStream) | Err(TryRecvError::Disconnected) => return close(ws),
                Err(TryRecvError::Empty) => break,
            }
        }
        match ws.read() {
            Ok(Message::Text(text)) => match serde_json::from_str::<ClientCommand>(&text) {
                Ok(cmd) => {
                    let _ = shared.commands.send(cmd);
                }
                Err(e) => {
                    let reply = ServerEvent::Error {
                        reason: format!("bad command: {e}"),
                    };
                    ws.send(Message::text(reply.to_json()))?;
                }
            },
            Ok(Message::Close(_)) => return Ok(()),
            Ok(_) => {}
            Err(e) if is_timeout(&e) => {}
            Err(e) => return Err(e),
        }
    }
}

/// Sends a close frame and waits briefly for the peer's reply.
#[allow(clippy::result_large_err)]
fn close(mut ws: WebSocket<TcpStream>) -> WsResult {
    ws.close(None)?;
    let deadline = Instant::now() + Duration::from_secs(2);
    while Instant::now() < deadline {
        match ws.read() {
            Ok(_) => {}
            Err(e) if is_timeout(&e) => {}
            Err(_) => break,
        }
    }
    let _ = ws.get_mut().flush();
    Ok(())
}

/// NDJSON log that also flushes after every line so it can be tailed.
pub struct LineLog<W: Write + Send>(pub NdjsonSink<W>);

impl<W: Write + Send> FrameSink for LineLog<W> {
    fn accept(&mut self, result: &gazetrack::FrameResult) -> std::io::Result<()> {
        self.0.accept(result)?;
        self.0.finish()
    }

    fn finish(&mut self) -> std::io::Result<()> {
        self.0.finish()
    }
}
