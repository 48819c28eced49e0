//! TCP front end of the study service.
//!
//! Clients speak newline-delimited JSON envelopes. Every connection gets a
//! reader thread that forwards lines to a single event loop, which owns the
//! study state, the log files and the actuator queue, and ticks every 5 ms.
//! Outbound messages go to all connected clients.

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::mpsc::{self, RecvTimeoutError};
use std::thread;
use std::time::{Duration, Instant};

use anyhow::{Context, Result};
use eyero_core::actuator::{ActuatorError, ActuatorQueue, MockActuator, PulsedActuator, SerialLink};
use eyero_core::event_log::LogSet;
use eyero_core::session::{generate_study_plan, Inbound, Outbound, SessionSettings, Step, Study};

use crate::{ActuatorKind, ServeArgs};

const TICK: Duration = Duration::from_millis(5);

enum Event {
    Connected(u64, TcpStream),
    Line(u64, String),
    Closed(u64),
}

fn accept_loop(listener: TcpListener, tx: mpsc::Sender<Event>) {
    for (id, stream) in listener.incoming().enumerate() {
        let id = id as u64;
        let stream = match stream {
            Ok(s) => s,
            Err(e) => {
                log::warn!("accept failed: {e}");
                continue;
            }
        };
        let _ = stream.set_nodelay(true);
        let writer = match stream.try_clone() {
            Ok(w) => w,
            Err(e) => {
                log::warn!("cannot clone client socket: {e}");
                continue;
            }
        };
        if tx.send(Event::Connected(id, writer)).is_err() {
            return;
        }
        let tx = tx.clone();
        thread::spawn(move || {
            for line in BufReader::new(stream).lines() {
                match line {
                    Ok(l) if l.trim().is_empty() => {}
                    Ok(l) => {
                        if tx.send(Event::Line(id, l)).is_err() {
                            return;
                        }
                    }
                    Err(_) => break,
                }
            }
            let _ = tx.send(Event::Closed(id));
        });
    }
}

struct Service {
    study: Study,
    logs: LogSet,
    queue: ActuatorQueue,
    clients: BTreeMap<u64, TcpStream>,
}

impl Service {
    fn dispatch(&mut self, step: Step) -> Result<()> {
        for r in &step.records {
            self.logs.append(r)?;
        }
        if !step.records.is_empty() {
            self.logs.flush()?;
        }
        for i in step.intents {
            self.queue.submit(i)?;
        }
        for (ts, out) in &step.outbound {
            self.broadcast(&out.to_envelope(*ts).to_line());
        }
        Ok(())
    }

    fn broadcast(&mut self, line: &str) {
        self.clients.retain(|id, s| match s.write_all(line.as_bytes()) {
            Ok(()) => true,
            Err(e) => {
                log::info!("dropping client {id}: {e}");
                false
            }
        });
    }

    fn reply(&mut self, id: u64, line: &str) {
        if let Some(s) = self.clients.get_mut(&id) {
            if s.write_all(line.as_bytes()).is_err() {
                self.clients.remove(&id);
            }
        }
    }
}

fn open_actuator(a: &ServeArgs) -> Result<(ActuatorQueue, mpsc::Receiver<ActuatorError>)> {
    Ok(match a.actuator {
        ActuatorKind::Mock => ActuatorQueue::spawn(MockActuator::new()),
        ActuatorKind::Serial => {
            let path = a.serial_port.as_deref().context("--serial-port is required with --actuator serial")?;
            let port = serialport::new(path, a.baud)
                .timeout(Duration::from_millis(100))
                .open()
                .with_context(|| format!("opening {path}"))?;
            ActuatorQueue::spawn(PulsedActuator::new(SerialLink::new(port)))
        }
    })
}

pub fn run(a: ServeArgs) -> Result<()> {
    let listener = TcpListener::bind(&a.listen).with_context(|| format!("binding {}", a.listen))?;
    let addr = listener.local_addr()?;
    let (queue, actuator_errors) = open_actuator(&a)?;
    println!("listening on {addr}");
    std::io::stdout().flush()?;

    let (tx, rx) = mpsc::channel();
    thread::spawn(move || accept_loop(listener, tx));

    let epoch = Instant::now();
    let now = || epoch.elapsed().as_millis() as u64;
    let plan = generate_study_plan(&a.participant, a.seed);
    log::info!("session order for {}: {:?}", a.participant, plan.sessions.iter().map(|c| c.label()).collect::<Vec<_>>());
    let (study, step) = Study::start(plan, SessionSettings::default(), now());
    let mut svc = Service { study, logs: LogSet::new(&a.log_dir), queue, clients: BTreeMap::new() };
    svc.dispatch(step)?;

    while !svc.study.is_done() {
        match rx.recv_timeout(TICK) {
            Ok(Event::Connected(id, s)) => {
                log::info!("client {id} connected");
                svc.clients.insert(id, s);
            }
            Ok(Event::Line(id, line)) => match Inbound::parse_line(&line) {
                Ok((msg, client_ts)) => {
                    let step = svc.study.handle(&msg, client_ts, now());
                    svc.dispatch(step)?;
                }
                Err(e) => {
                    log::debug!("client {id} sent unusable line: {}", e.detail);
                    svc.reply(id, &Outbound::error(&e).to_envelope(now()).to_line());
                }
            },
            Ok(Event::Closed(id)) => {
                log::info!("client {id} disconnected");
                svc.clients.remove(&id);
            }
            Err(RecvTimeoutError::Timeout) => {}
            Err(RecvTimeoutError::Disconnected) => break,
        }
        let t = now();
        let step = svc.study.tick(t);
        svc.dispatch(step)?;
        svc.queue.tick(t)?;
        while let Ok(e) = actuator_errors.try_recv() {
            log::warn!("actuator: {e}");
        }
    }
    svc.logs.sync()?;
    svc.queue.shutdown();
    println!("study complete");
    Ok(())
}
