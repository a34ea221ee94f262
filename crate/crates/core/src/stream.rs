//! Frame sources, result sinks and the streaming loop.
//!
//! One producer yields frames, [`StreamRunner`] turns each into a
//! [`FrameResult`], and every sink sees every result in order. Live sources
//! keep only the newest frame and count the ones they overwrite; replay
//! sources never drop.

use std::collections::{BTreeMap, VecDeque};
use std::io::{self, Read, Write};
use std::sync::mpsc::{channel, Receiver, Sender};
use std::sync::{Arc, Condvar, Mutex, RwLock};
use std::time::Instant;

use serde::Serialize;
use thiserror::Error;

use crate::gaze::{CalibrationMap, ScreenGaze};
use crate::geometry::Point;
use crate::imgproc::GrayImage;
use crate::pipeline::{process_frame, FrameResult, PipelineConfig, Status};

#[derive(Debug, Error)]
pub enum StreamError {
    #[error("frame source unavailable: {0}")]
    SourceUnavailable(String),
    #[error("sink failed: {0}")]
    Sink(#[from] io::Error),
}

/// A frame and its capture time relative to the start of the source.
#[derive(Clone, Debug)]
pub struct Frame {
    pub image: GrayImage,
    pub t_ms: u64,
}

pub trait FrameSource {
    /// Next frame, or `None` once the source is exhausted.
    fn next_frame(&mut self) -> Result<Option<Frame>, StreamError>;

    /// Frames discarded because processing fell behind.
    fn dropped(&self) -> u64 {
        0
    }
}

/// Replay of in-memory frames at a nominal frame rate.
#[derive(Clone, Debug)]
pub struct MemorySource {
    frames: VecDeque<GrayImage>,
    fps: f64,
    index: u64,
}

impl MemorySource {
    pub fn new(frames: impl IntoIterator<Item = GrayImage>, fps: f64) -> Self {
        Self {
            frames: frames.into_iter().collect(),
            fps: if fps > 0.0 { fps } else { 30.0 },
            index: 0,
        }
    }
}

impl FrameSource for MemorySource {
    fn next_frame(&mut self) -> Result<Option<Frame>, StreamError> {
        let Some(image) = self.frames.pop_front() else {
            return Ok(None);
        };
        let t_ms = (self.index as f64 * 1000.0 / self.fps).round() as u64;
        self.index += 1;
        Ok(Some(Frame { image, t_ms }))
    }
}

#[derive(Default)]
struct LiveSlot {
    latest: Option<Frame>,
    closed: bool,
    dropped: u64,
}

type SharedSlot = Arc<(Mutex<LiveSlot>, Condvar)>;

/// Producer side of a [`LiveSource`].
#[derive(Clone)]
pub struct LiveFeeder {
    slot: SharedSlot,
    start: Instant,
}

impl LiveFeeder {
    /// Offers a frame; an unconsumed older frame is replaced and counted as
    /// dropped.
    pub fn push(&self, image: GrayImage) {
        let t_ms = self.start.elapsed().as_millis() as u64;
        let (lock, cv) = &*self.slot;
        let mut slot = lock.lock().expect("live slot poisoned");
        if slot.latest.replace(Frame { image, t_ms }).is_some() {
            slot.dropped += 1;
        }
        cv.notify_one();
    }

    pub fn close(&self) {
        let (lock, cv) = &*self.slot;
        lock.lock().expect("live slot poisoned").closed = true;
        cv.notify_all();
    }
}

/// Latest-wins capture source.
pub struct LiveSource {
    slot: SharedSlot,
}

impl LiveSource {
    pub fn channel() -> (LiveFeeder, LiveSource) {
        let slot: SharedSlot = Arc::default();
        (
            LiveFeeder {
                slot: slot.clone(),
                start: Instant::now(),
            },
            LiveSource { slot },
        )
    }

    /// Reads raw 8-bit frames of `width` x `height` from `reader` on a
    /// background thread. The source closes at end of input.
    pub fn from_reader<R: Read + Send + 'static>(
        mut reader: R,
        width: usize,
        height: usize,
    ) -> Result<Self, StreamError> {
        if width == 0 || height == 0 {
            return Err(StreamError::SourceUnavailable("frame size must be non-zero".into()));
        }
        let (feeder, source) = Self::channel();
        std::thread::spawn(move || {
            let mut buf = vec![0u8; width * height];
            while reader.read_exact(&mut buf).is_ok() {
                if let Ok(img) = GrayImage::new(width, height, buf.clone()) {
                    feeder.push(img);
                }
            }
            feeder.close();
        });
        Ok(source)
    }
}

impl FrameSource for LiveSource {
    fn next_frame(&mut self) -> Result<Option<Frame>, StreamError> {
        let (lock, cv) = &*self.slot;
        let mut slot = lock.lock().expect("live slot poisoned");
        loop {
            if let Some(frame) = slot.latest.take() {
                return Ok(Some(frame));
            }
            if slot.closed {
                return Ok(None);
            }
            slot = cv.wait(slot).expect("live slot poisoned");
        }
    }

    fn dropped(&self) -> u64 {
        self.slot.0.lock().expect("live slot poisoned").dropped
    }
}

pub trait FrameSink: Send {
    fn accept(&mut self, result: &FrameResult) -> io::Result<()>;

    /// Called once after the last frame.
    fn finish(&mut self) -> io::Result<()> {
        Ok(())
    }
}

impl FrameSink for Vec<FrameResult> {
    fn accept(&mut self, result: &FrameResult) -> io::Result<()> {
        self.push(result.clone());
        Ok(())
    }
}

/// Writes one JSON object per line.
pub struct NdjsonSink<W: Write + Send> {
    out: W,
}

impl<W: Write + Send> NdjsonSink<W> {
    pub fn new(out: W) -> Self {
        Self { out }
    }

    pub fn into_inner(self) -> W {
        self.out
    }
}

impl<W: Write + Send> FrameSink for NdjsonSink<W> {
    fn accept(&mut self, result: &FrameResult) -> io::Result<()> {
        writeln!(self.out, "{}", result.to_json())
    }

    fn finish(&mut self) -> io::Result<()> {
        self.out.flush()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum StreamEvent {
    Frame(Arc<FrameResult>),
    /// Control message for subscribers, already serialized as JSON.
    Notice(Arc<str>),
    EndOfStream,
}

/// Fan-out to any number of subscribers. A subscriber sees only results
/// sent after it subscribed; dropped receivers are pruned.
#[derive(Clone, Default)]
pub struct Broadcaster {
    subscribers: Arc<Mutex<Vec<Sender<StreamEvent>>>>,
}

impl Broadcaster {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn subscribe(&self) -> Receiver<StreamEvent> {
        let (tx, rx) = channel();
        self.subscribers.lock().expect("subscribers poisoned").push(tx);
        rx
    }

    pub fn subscriber_count(&self) -> usize {
        self.subscribers.lock().expect("subscribers poisoned").len()
    }

    pub fn send(&self, event: StreamEvent) {
        self.subscribers
            .lock()
            .expect("subscribers poisoned")
            .retain(|tx| tx.send(event.clone()).is_ok());
    }
}

impl FrameSink for Broadcaster {
    fn accept(&mut self, result: &FrameResult) -> io::Result<()> {
        self.send(StreamEvent::Frame(Arc::new(result.clone())));
        Ok(())
    }

    fn finish(&mut self) -> io::Result<()> {
        self.send(StreamEvent::EndOfStream);
        Ok(())
    }
}

/// Calibration shared between the processing loop and control handlers;
/// replaced atomically as a whole.
#[derive(Clone, Debug, Default)]
pub struct CalibrationCell(Arc<RwLock<Option<CalibrationMap>>>);

impl CalibrationCell {
    pub fn new(cal: Option<CalibrationMap>) -> Self {
        Self(Arc::new(RwLock::new(cal)))
    }

    pub fn get(&self) -> Option<CalibrationMap> {
        *self.0.read().expect("calibration poisoned")
    }

    pub fn set(&self, cal: Option<CalibrationMap>) {
        *self.0.write().expect("calibration poisoned") = cal;
    }
}

/// Moving average of on-screen gaze over the last `window` Ok frames.
#[derive(Clone, Debug)]
pub struct GazeSmoother {
    window: usize,
    recent: VecDeque<Point>,
}

impl GazeSmoother {
    pub fn new(window: usize) -> Self {
        Self {
            window: window.max(1),
            recent: VecDeque::new(),
        }
    }

    pub fn apply(&mut self, result: &mut FrameResult, width: u32, height: u32) {
        if self.window == 1 {
            return;
        }
        let Some(screen) = result.screen else { return };
        self.recent.push_back(screen.point());
        if self.recent.len() > self.window {
            self.recent.pop_front();
        }
        let n = self.recent.len() as f64;
        let p = Point::new(
            self.recent.iter().map(|p| p.x).sum::<f64>() / n,
            self.recent.iter().map(|p| p.y).sum::<f64>() / n,
        );
        let inside = p.x >= 0.0 && p.x < width as f64 && p.y >= 0.0 && p.y < height as f64;
        result.screen = Some(if inside {
            ScreenGaze::OnScreen(p)
        } else {
            ScreenGaze::OffScreen(p)
        });
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct StreamSummary {
    pub frames: u64,
    pub dropped: u64,
    pub by_status: BTreeMap<String, u64>,
}

/// Numbers frames, applies the current calibration and optional smoothing.
pub struct StreamRunner {
    config: PipelineConfig,
    calibration: CalibrationCell,
    smoother: GazeSmoother,
    summary: StreamSummary,
}

impl StreamRunner {
    pub fn new(config: PipelineConfig, calibration: CalibrationCell) -> Self {
        let smoother = GazeSmoother::new(config.smoothing_window);
        Self {
            config,
            calibration,
            smoother,
            summary: StreamSummary::default(),
        }
    }

    pub fn calibration(&self) -> &CalibrationCell {
        &self.calibration
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.config
    }

    pub fn process(&mut self, frame: &Frame) -> FrameResult {
        let cal = self.calibration.get();
        let mut r = process_frame(&frame.image, cal.as_ref(), &self.config);
        r.frame_id = self.summary.frames;
        r.t_ms = frame.t_ms;
        if r.status == Status::Ok {
            self.smoother
                .apply(&mut r, self.config.screen.width, self.config.screen.height);
        }
        self.summary.frames += 1;
        *self.summary.by_status.entry(r.status.to_string()).or_default() += 1;
        r
    }

    pub fn summary(&self) -> &StreamSummary {
        &self.summary
    }
}

/// Processes every frame of `source` and hands each result to all sinks in
/// order. Ends with `finish` on every sink.
pub fn run_stream(
    source: &mut dyn FrameSource,
    calibration: &CalibrationCell,
    config: &PipelineConfig,
    sinks: &mut [&mut dyn FrameSink],
) -> Result<StreamSummary, StreamError> {
    let mut runner = StreamRunner::new(config.clone(), calibration.clone());
    while let Some(frame) = source.next_frame()? {
        let r = runner.process(&frame);
        for sink in sinks.iter_mut() {
            sink.accept(&r)?;
        }
    }
    for sink in sinks.iter_mut() {
        sink.finish()?;
    }
    let mut summary = runner.summary().clone();
    summary.dropped = source.dropped();
    Ok(summary)
}
