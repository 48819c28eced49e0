//! Serial protocol to the vibration-motor board, a scripted in-memory device,
//! and the recording mock used in tests and simulations.
//!
//! Frames are newline-terminated ASCII. The host sends `V,<SITE>,<STATE>\n`
//! with `SITE` one of `LW RW LA RA` and `STATE` `0` or `1`; the board answers
//! every frame with `A\n`. At most one command is in flight.

use std::collections::VecDeque;
use std::io::{self, Read, Write};
use std::sync::mpsc;
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::controller::{pulse_schedule, ActuatorIntent};
use crate::gaze::BodySite;

pub const DEFAULT_BAUD: u32 = 115_200;
pub const ACK_TIMEOUT: Duration = Duration::from_millis(100);
pub const ACK_FRAME: &[u8] = b"A\n";

#[derive(Debug, Error)]
pub enum ActuatorError {
    #[error("protocol error: unexpected bytes {0:?}")]
    Protocol(Vec<u8>),
    #[error("device did not answer within {0:?}")]
    Timeout(Duration),
    #[error("intent at {got} ms precedes previous intent at {last} ms")]
    Timing { last: u64, got: u64 },
    #[error("{site:?} set to {active} twice in a row at {ts_ms} ms")]
    Alternation { site: BodySite, active: bool, ts_ms: u64 },
    #[error("actuator worker has stopped")]
    Closed,
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SerialCommand {
    pub site: BodySite,
    pub state: bool,
}

impl SerialCommand {
    pub fn all() -> impl Iterator<Item = SerialCommand> {
        BodySite::ALL
            .into_iter()
            .flat_map(|site| [false, true].into_iter().map(move |state| SerialCommand { site, state }))
    }
}

pub fn encode_command(c: SerialCommand) -> Vec<u8> {
    format!("V,{},{}\n", c.site.code(), u8::from(c.state)).into_bytes()
}

/// Parses one host frame, as the firmware would.
pub fn decode_command(bytes: &[u8]) -> Result<SerialCommand, ActuatorError> {
    let bad = || ActuatorError::Protocol(bytes.to_vec());
    let line = bytes.strip_suffix(b"\n").ok_or_else(bad)?;
    let line = std::str::from_utf8(line).map_err(|_| bad())?;
    let mut parts = line.split(',');
    let (Some("V"), Some(site), Some(state), None) =
        (parts.next(), parts.next(), parts.next(), parts.next())
    else {
        return Err(bad());
    };
    let site = BodySite::from_code(site).ok_or_else(bad)?;
    let state = match state {
        "0" => false,
        "1" => true,
        _ => return Err(bad()),
    };
    Ok(SerialCommand { site, state })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Ack;

pub fn decode_ack(bytes: &[u8]) -> Result<Ack, ActuatorError> {
    if bytes == ACK_FRAME {
        Ok(Ack)
    } else {
        Err(ActuatorError::Protocol(bytes.to_vec()))
    }
}

/// Reads one newline-terminated frame and decodes it as an ack. No bytes at
/// all before `timeout` is a device timeout; a partial frame is a protocol
/// error carrying what did arrive.
pub fn read_ack<R: Read + ?Sized>(port: &mut R, timeout: Duration) -> Result<Ack, ActuatorError> {
    let deadline = Instant::now() + timeout;
    let mut frame = Vec::with_capacity(2);
    let mut byte = [0u8; 1];
    loop {
        match port.read(&mut byte) {
            Ok(1) => {
                frame.push(byte[0]);
                if byte[0] == b'\n' {
                    return decode_ack(&frame);
                }
                continue;
            }
            Ok(_) => {}
            Err(e) if matches!(e.kind(), io::ErrorKind::TimedOut | io::ErrorKind::WouldBlock) => {}
            Err(e) if e.kind() == io::ErrorKind::Interrupted => continue,
            Err(e) => return Err(e.into()),
        }
        if Instant::now() >= deadline {
            return if frame.is_empty() {
                Err(ActuatorError::Timeout(timeout))
            } else {
                Err(ActuatorError::Protocol(frame))
            };
        }
        thread::sleep(Duration::from_millis(1));
    }
}

/// Host side of the serial link: one command, then wait for its ack.
pub struct SerialLink<P> {
    port: P,
    timeout: Duration,
}

impl<P: Read + Write> SerialLink<P> {
    pub fn new(port: P) -> Self {
        Self { port, timeout: ACK_TIMEOUT }
    }

    pub fn with_timeout(port: P, timeout: Duration) -> Self {
        Self { port, timeout }
    }

    pub fn send(&mut self, cmd: SerialCommand) -> Result<Ack, ActuatorError> {
        self.port.write_all(&encode_command(cmd))?;
        self.port.flush()?;
        read_ack(&mut self.port, self.timeout)
    }

    pub fn port(&self) -> &P {
        &self.port
    }

    pub fn into_port(self) -> P {
        self.port
    }
}

/// How an [`EmulatedBoard`] answers frames.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BoardReply {
    Ack,
    Raw(Vec<u8>),
    Silent,
}

/// In-memory stand-in for the microcontroller: parses host frames and
/// queues a scripted reply for each.
#[derive(Debug, Default)]
pub struct EmulatedBoard {
    pending: Vec<u8>,
    outbox: VecDeque<u8>,
    script: VecDeque<BoardReply>,
    received: Vec<SerialCommand>,
    rejected: Vec<Vec<u8>>,
}

impl EmulatedBoard {
    pub fn new() -> Self {
        Self::default()
    }

    /// Replies used for the next frames, in order; afterwards the board acks.
    pub fn scripted(replies: impl IntoIterator<Item = BoardReply>) -> Self {
        Self { script: replies.into_iter().collect(), ..Self::default() }
    }

    pub fn received(&self) -> &[SerialCommand] {
        &self.received
    }

    pub fn rejected(&self) -> &[Vec<u8>] {
        &self.rejected
    }

    fn on_frame(&mut self, frame: Vec<u8>) {
        match decode_command(&frame) {
            Ok(cmd) => self.received.push(cmd),
            Err(_) => self.rejected.push(frame),
        }
        match self.script.pop_front().unwrap_or(BoardReply::Ack) {
            BoardReply::Ack => self.outbox.extend(ACK_FRAME),
            BoardReply::Raw(bytes) => self.outbox.extend(bytes),
            BoardReply::Silent => {}
        }
    }
}

impl Write for EmulatedBoard {
    fn write(&mut self, buf: &[u8]) -> io::Result<usize> {
        for &b in buf {
            self.pending.push(b);
            if b == b'\n' {
                let frame = std::mem::take(&mut self.pending);
                self.on_frame(frame);
            }
        }
        Ok(buf.len())
    }

    fn flush(&mut self) -> io::Result<()> {
        Ok(())
    }
}

impl Read for EmulatedBoard {
    fn read(&mut self, buf: &mut [u8]) -> io::Result<usize> {
        if self.outbox.is_empty() {
            return Err(io::Error::new(io::ErrorKind::TimedOut, "no data"));
        }
        let n = buf.len().min(self.outbox.len());
        for (slot, b) in buf.iter_mut().zip(self.outbox.drain(..n)) {
            *slot = b;
        }
        Ok(n)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimelineRecord {
    pub ts_ms: u64,
    pub site: BodySite,
    pub active: bool,
}

impl From<ActuatorIntent> for TimelineRecord {
    fn from(i: ActuatorIntent) -> Self {
        Self { ts_ms: i.ts_ms, site: i.site, active: i.active }
    }
}

/// What the mock device saw, in arrival order.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActuationTimeline {
    pub records: Vec<TimelineRecord>,
}

impl ActuationTimeline {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

/// Sink for controller intents.
pub trait Actuator {
    fn apply(&mut self, intent: &ActuatorIntent) -> Result<(), ActuatorError>;

    /// Called periodically with the service clock so pulse trains advance.
    fn tick(&mut self, _now_ms: u64) -> Result<(), ActuatorError> {
        Ok(())
    }
}

/// Records intents verbatim, enforcing time order and per-site alternation.
#[derive(Debug, Clone, Default)]
pub struct MockActuator {
    timeline: ActuationTimeline,
    site_state: [bool; 4],
}

impl MockActuator {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn timeline(&self) -> &ActuationTimeline {
        &self.timeline
    }

    pub fn into_timeline(self) -> ActuationTimeline {
        self.timeline
    }
}

fn site_slot(site: BodySite) -> usize {
    BodySite::ALL.iter().position(|s| *s == site).expect("site in ALL")
}

impl Actuator for MockActuator {
    fn apply(&mut self, intent: &ActuatorIntent) -> Result<(), ActuatorError> {
        if let Some(last) = self.timeline.records.last() {
            if intent.ts_ms < last.ts_ms {
                return Err(ActuatorError::Timing { last: last.ts_ms, got: intent.ts_ms });
            }
        }
        let slot = site_slot(intent.site);
        if self.site_state[slot] == intent.active {
            return Err(ActuatorError::Alternation {
                site: intent.site,
                active: intent.active,
                ts_ms: intent.ts_ms,
            });
        }
        self.site_state[slot] = intent.active;
        self.timeline.records.push((*intent).into());
        Ok(())
    }
}

pub fn mock_apply(intents: &[ActuatorIntent]) -> Result<ActuationTimeline, ActuatorError> {
    let mut mock = MockActuator::new();
    for intent in intents {
        mock.apply(intent)?;
    }
    Ok(mock.into_timeline())
}

/// Drives real motors: converts level intents into a host-side 1 Hz on/off
/// pulse train over a [`SerialLink`].
pub struct PulsedActuator<P> {
    link: SerialLink<P>,
    active: Option<(BodySite, u64)>,
    motor_on: bool,
}

impl<P: Read + Write> PulsedActuator<P> {
    pub fn new(link: SerialLink<P>) -> Self {
        Self { link, active: None, motor_on: false }
    }

    pub fn link(&self) -> &SerialLink<P> {
        &self.link
    }

    fn drive(&mut self, site: BodySite, on: bool) -> Result<(), ActuatorError> {
        self.link.send(SerialCommand { site, state: on })?;
        self.motor_on = on;
        Ok(())
    }
}

impl<P: Read + Write> Actuator for PulsedActuator<P> {
    fn apply(&mut self, intent: &ActuatorIntent) -> Result<(), ActuatorError> {
        match (intent.active, self.active) {
            (false, Some((site, _))) if site == intent.site => {
                self.active = None;
                if self.motor_on {
                    self.drive(site, false)?;
                }
            }
            (true, _) => {
                if let Some((old, _)) = self.active {
                    if self.motor_on {
                        self.drive(old, false)?;
                    }
                }
                self.active = Some((intent.site, intent.ts_ms));
                self.drive(intent.site, true)?;
            }
            _ => {}
        }
        Ok(())
    }

    fn tick(&mut self, now_ms: u64) -> Result<(), ActuatorError> {
        if let Some((site, epoch)) = self.active {
            let want = pulse_schedule(Some(site), now_ms, epoch);
            if want != self.motor_on {
                self.drive(site, want)?;
            }
        }
        Ok(())
    }
}

enum Job {
    Intent(ActuatorIntent),
    Tick(u64),
}

/// FIFO front end that hands intents to a single thread owning the device.
/// Device errors are reported through the returned error channel and do not
/// stop the worker.
pub struct ActuatorQueue {
    tx: Option<mpsc::Sender<Job>>,
    handle: Option<thread::JoinHandle<()>>,
}

impl ActuatorQueue {
    pub fn spawn<A>(mut device: A) -> (Self, mpsc::Receiver<ActuatorError>)
    where
        A: Actuator + Send + 'static,
    {
        let (tx, rx) = mpsc::channel::<Job>();
        let (err_tx, err_rx) = mpsc::channel();
        let handle = thread::spawn(move || {
            for job in rx {
                let res = match job {
                    Job::Intent(i) => device.apply(&i),
                    Job::Tick(t) => device.tick(t),
                };
                if let Err(e) = res {
                    let _ = err_tx.send(e);
                }
            }
        });
        (Self { tx: Some(tx), handle: Some(handle) }, err_rx)
    }

    pub fn submit(&self, intent: ActuatorIntent) -> Result<(), ActuatorError> {
        self.send(Job::Intent(intent))
    }

    pub fn tick(&self, now_ms: u64) -> Result<(), ActuatorError> {
        self.send(Job::Tick(now_ms))
    }

    fn send(&self, job: Job) -> Result<(), ActuatorError> {
        self.tx.as_ref().ok_or(ActuatorError::Closed)?.send(job).map_err(|_| ActuatorError::Closed)
    }

    /// Drains the queue and joins the worker.
    pub fn shutdown(mut self) {
        self.close();
    }

    fn close(&mut self) {
        self.tx.take();
        if let Some(h) = self.handle.take() {
            let _ = h.join();
        }
    }
}

impl Drop for ActuatorQueue {
    fn drop(&mut self) {
        self.close();
    }
}
