/*
Copyright 2026 The isru-teleop Authors

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
*/
//! Socket service for interactive sessions.
//!
//! One thread owns the session and runs the tick loop. Each connection has
//! a reader thread that forwards controller verbs to the loop through an
//! ordered queue, and a writer thread fed by a mailbox in which snapshots
//! are latest-wins and everything else is queued.

use std::collections::VecDeque;
use std::io;
use std::net::{SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc::{self, Receiver, Sender};
use std::sync::{Arc, Condvar, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use isru_link::{EngageAction, MessageKind};

use crate::config::SessionMode;
use crate::protocol::{
    read_frame, write_frame, ClientMessage, RejectReason, Role, ServerMessage, Snapshot, PROTOCOL_VERSION,
};
use crate::session::Session;
use crate::StationError;

#[derive(Clone, Debug, PartialEq)]
pub struct ServeOptions {
    /// Snapshot broadcast rate (Hz).
    pub snapshot_rate_hz: f64,
    /// Logical seconds per wall second.
    pub time_scale: f64,
    /// Stop this many logical seconds after the mission ends.
    pub linger_after_finish: Option<f64>,
    /// Stop after this many ticks.
    pub max_ticks: Option<u64>,
}

impl ServeOptions {
    pub fn for_session(session: &Session) -> Self {
        Self {
            snapshot_rate_hz: session.config.snapshot_rate_hz,
            time_scale: session.config.time_scale,
            linger_after_finish: None,
            max_ticks: None,
        }
    }
}

#[derive(Default)]
struct MailboxState {
    queue: VecDeque<ServerMessage>,
    snapshot: Option<Arc<Snapshot>>,
    closed: bool,
}

#[derive(Default)]
struct Mailbox {
    state: Mutex<MailboxState>,
    ready: Condvar,
}

impl Mailbox {
    fn push(&self, msg: ServerMessage) {
        let mut s = self.state.lock().expect("mailbox lock");
        s.queue.push_back(msg);
        self.ready.notify_one();
    }

    fn offer_snapshot(&self, snap: Arc<Snapshot>) {
        let mut s = self.state.lock().expect("mailbox lock");
        s.snapshot = Some(snap);
        self.ready.notify_one();
    }

    fn close(&self) {
        let mut s = self.state.lock().expect("mailbox lock");
        s.closed = true;
        self.ready.notify_one();
    }

    /// Blocks until something is ready; `None` once closed and drained.
    fn next(&self) -> Option<ServerMessage> {
        let mut s = self.state.lock().expect("mailbox lock");
        loop {
            if let Some(m) = s.queue.pop_front() {
                return Some(m);
            }
            if let Some(snap) = s.snapshot.take() {
                return Some(ServerMessage::Snapshot(Box::new((*snap).clone())));
            }
            if s.closed {
                return None;
            }
            s = self.ready.wait(s).expect("mailbox lock");
        }
    }
}

struct ClientSlot {
    id: u64,
    mailbox: Arc<Mailbox>,
}

#[derive(Default)]
struct Hub {
    clients: Vec<ClientSlot>,
    controller: Option<u64>,
    next_id: u64,
}

enum Inbound {
    Verb(u64, ClientMessage),
    Invalid(u64, String),
    Gone(u64),
}

/// Handle that stops a running server from another thread.
#[derive(Clone, Debug, Default)]
pub struct StopHandle(Arc<AtomicBool>);

impl StopHandle {
    pub fn stop(&self) {
        self.0.store(true, Ordering::SeqCst);
    }

    pub fn is_stopped(&self) -> bool {
        self.0.load(Ordering::SeqCst)
    }
}

pub struct Server {
    listener: TcpListener,
    session: Session,
    options: ServeOptions,
    stop: StopHandle,
}

impl Server {
    pub fn bind<A: ToSocketAddrs>(addr: A, session: Session, options: ServeOptions) -> Result<Self, StationError> {
        if session.config.mode != SessionMode::Interactive {
            return Err(StationError::NotAllowed("serving needs an interactive session".into()));
        }
        if !(options.snapshot_rate_hz >= 10.0) || !(options.time_scale > 0.0) {
            return Err(StationError::BadConfig {
                path: "serve".into(),
                reason: "snapshot rate must be at least 10 Hz and time scale positive".into(),
            });
        }
        let listener = TcpListener::bind(addr)?;
        listener.set_nonblocking(true)?;
        Ok(Self {
            listener,
            session,
            options,
            stop: StopHandle::default(),
        })
    }

    pub fn local_addr(&self) -> io::Result<SocketAddr> {
        self.listener.local_addr()
    }

    pub fn stop_handle(&self) -> StopHandle {
        self.stop.clone()
    }

    /// Runs until stopped; returns the session for inspection.
    pub fn run(self) -> Result<Session, StationError> {
        let Server {
            listener,
            mut session,
            options,
            stop,
        } = self;
        let hub = Arc::new(Mutex::new(Hub::default()));
        let (tx, rx) = mpsc::channel();
        let info = Welcome {
            session: session.id,
            tick_rate_hz: session.config.tick_rate_hz,
        };
        let acceptor = {
            let hub = hub.clone();
            let stop = stop.clone();
            thread::spawn(move || accept_loop(listener, hub, tx, stop, info))
        };
        let result = tick_loop(&mut session, &options, &hub, &rx, &stop);
        stop.stop();
        let _ = acceptor.join();
        for c in hub.lock().expect("hub lock").clients.drain(..) {
            c.mailbox.close();
        }
        result.map(|()| session)
    }
}

/// Binds `addr` and serves `session` until the options say stop.
pub fn serve<A: ToSocketAddrs>(session: Session, addr: A) -> Result<Session, StationError> {
    let options = ServeOptions::for_session(&session);
    Server::bind(addr, session, options)?.run()
}

#[derive(Clone, Copy)]
struct Welcome {
    session: u64,
    tick_rate_hz: f64,
}

fn accept_loop(listener: TcpListener, hub: Arc<Mutex<Hub>>, tx: Sender<Inbound>, stop: StopHandle, info: Welcome) {
    while !stop.is_stopped() {
        match listener.accept() {
            Ok((stream, _)) => {
                let hub = hub.clone();
                let tx = tx.clone();
                thread::spawn(move || {
                    let _ = handle_connection(stream, hub, tx, info);
                });
            }
            Err(e) if e.kind() == io::ErrorKind::WouldBlock => thread::sleep(Duration::from_millis(5)),
            Err(_) => thread::sleep(Duration::from_millis(5)),
        }
    }
}

fn reject(stream: &mut TcpStream, reason: RejectReason, detail: &str) -> io::Result<()> {
    write_frame(
        stream,
        &ServerMessage::Rejected {
            reason,
            detail: detail.to_string(),
        },
    )
}

fn handle_connection(mut stream: TcpStream, hub: Arc<Mutex<Hub>>, tx: Sender<Inbound>, info: Welcome) -> io::Result<()> {
    stream.set_nonblocking(false)?;
    stream.set_nodelay(true)?;
    stream.set_read_timeout(Some(Duration::from_secs(10)))?;
    let hello: Option<ClientMessage> = match read_frame(&mut stream) {
        Ok(m) => m,
        Err(e) => return reject(&mut stream, RejectReason::BadHello, &e.to_string()),
    };
    let role = match hello {
        Some(ClientMessage::Hello { version, role }) if version == PROTOCOL_VERSION => role,
        Some(ClientMessage::Hello { version, .. }) => {
            return reject(
                &mut stream,
                RejectReason::VersionMismatch,
                &format!("server speaks version {PROTOCOL_VERSION}, client {version}"),
            )
        }
        _ => return reject(&mut stream, RejectReason::BadHello, "first frame must be hello"),
    };
    stream.set_read_timeout(None)?;

    let mailbox = Arc::new(Mailbox::default());
    let id = {
        let mut h = hub.lock().expect("hub lock");
        if role == Role::Controller && h.controller.is_some() {
            drop(h);
            return reject(&mut stream, RejectReason::EndpointBusy, "a controller is already connected");
        }
        let id = h.next_id;
        h.next_id += 1;
        if role == Role::Controller {
            h.controller = Some(id);
        }
        mailbox.push(ServerMessage::Welcome {
            version: PROTOCOL_VERSION,
            session: info.session,
            role,
            tick_rate_hz: info.tick_rate_hz,
        });
        h.clients.push(ClientSlot {
            id,
            mailbox: mailbox.clone(),
        });
        id
    };

    let writer = {
        let mut out = stream.try_clone()?;
        let mailbox = mailbox.clone();
        thread::spawn(move || {
            while let Some(msg) = mailbox.next() {
                if write_frame(&mut out, &msg).is_err() {
                    break;
                }
            }
            let _ = out.shutdown(std::net::Shutdown::Write);
        })
    };

    loop {
        let body = match crate::protocol::read_frame_bytes(&mut stream) {
            Ok(Some(body)) => body,
            Ok(None) | Err(_) => break,
        };
        let inbound = match serde_json::from_slice::<ClientMessage>(&body) {
            Ok(_) if role == Role::Viewer => Inbound::Invalid(id, "view-only client".into()),
            Ok(ClientMessage::Hello { .. }) => Inbound::Invalid(id, "already greeted".into()),
            Ok(msg) => Inbound::Verb(id, msg),
            Err(e) => Inbound::Invalid(id, format!("rejected message: {e}")),
        };
        if tx.send(inbound).is_err() {
            break;
        }
    }

    {
        let mut h = hub.lock().expect("hub lock");
        h.clients.retain(|c| c.id != id);
        if h.controller == Some(id) {
            h.controller = None;
        }
    }
    let _ = tx.send(Inbound::Gone(id));
    mailbox.close();
    let _ = writer.join();
    Ok(())
}

fn tick_loop(
    session: &mut Session,
    options: &ServeOptions,
    hub: &Arc<Mutex<Hub>>,
    rx: &Receiver<Inbound>,
    stop: &StopHandle,
) -> Result<(), StationError> {
    let dt = session.dt();
    let every = ((session.config.tick_rate_hz / options.snapshot_rate_hz).floor() as u64).max(1);
    let start = Instant::now();
    let first_tick = session.tick();
    let mut logged = session.log().len();
    let mut finished_at: Option<u64> = None;
    let mut controller: Option<u64> = None;

    while !stop.is_stopped() {
        while let Ok(inbound) = rx.try_recv() {
            match inbound {
                Inbound::Verb(id, msg) => {
                    controller = Some(id);
                    let verb = msg.verb().to_string();
                    let reply = match apply_verb(session, msg) {
                        Ok(detail) => ServerMessage::Reply { verb, ok: true, detail },
                        Err(e) => ServerMessage::Reply {
                            verb,
                            ok: false,
                            detail: Some(e.to_string()),
                        },
                    };
                    send_to(hub, id, reply);
                }
                Inbound::Invalid(id, detail) => send_to(
                    hub,
                    id,
                    ServerMessage::Reply {
                        verb: "unknown".into(),
                        ok: false,
                        detail: Some(detail),
                    },
                ),
                Inbound::Gone(id) => {
                    if controller == Some(id) {
                        controller = None;
                        if session.is_engaged() {
                            let _ = session.disengage();
                        }
                    }
                }
            }
        }

        session.step();
        let log = session.log();
        if log.len() > logged {
            let events: Vec<_> = log[logged..].to_vec();
            logged = log.len();
            for e in events {
                broadcast(hub, ServerMessage::Event(e));
            }
        }
        if (session.tick() - first_tick) % every == 0 {
            let snap = Arc::new(session.snapshot());
            for c in hub.lock().expect("hub lock").clients.iter() {
                c.mailbox.offer_snapshot(snap.clone());
            }
        }

        if session.is_finished() && finished_at.is_none() {
            finished_at = Some(session.tick());
        }
        if let (Some(at), Some(linger)) = (finished_at, options.linger_after_finish) {
            if (session.tick() - at) as f64 * dt >= linger {
                break;
            }
        }
        if options.max_ticks.is_some_and(|m| session.tick() - first_tick >= m) {
            break;
        }

        let due = start + Duration::from_secs_f64((session.tick() - first_tick) as f64 * dt / options.time_scale);
        let now = Instant::now();
        if due > now {
            thread::sleep(due - now);
        }
    }
    Ok(())
}

fn send_to(hub: &Arc<Mutex<Hub>>, id: u64, msg: ServerMessage) {
    if let Some(c) = hub.lock().expect("hub lock").clients.iter().find(|c| c.id == id) {
        c.mailbox.push(msg);
    }
}

fn broadcast(hub: &Arc<Mutex<Hub>>, msg: ServerMessage) {
    for c in hub.lock().expect("hub lock").clients.iter() {
        c.mailbox.push(msg.clone());
    }
}

/// Applies one controller verb; the returned text goes into the reply.
pub fn apply_verb(session: &mut Session, msg: ClientMessage) -> Result<Option<String>, StationError> {
    match msg {
        ClientMessage::Hello { .. } => Err(StationError::Protocol("already greeted".into())),
        ClientMessage::EngageRequest => session.request_engage().map(|()| None),
        ClientMessage::Disengage => session.disengage().map(|()| None),
        ClientMessage::PlanRequest { goal } => session.request_plan(goal).map(|t| {
            Some(format!(
                "trajectory {} with {} waypoints over {:.3} s",
                t.id,
                t.waypoints.len(),
                t.duration()
            ))
        }),
        ClientMessage::RehearseRequest => session
            .request_rehearse()
            .map(|r| Some(serde_json::to_string(r).expect("report serializes"))),
        ClientMessage::ExecuteRequest => session.request_execute().map(|id| Some(format!("trajectory {id}"))),
        ClientMessage::SetCamera { camera } => session.set_camera(camera).map(|()| None),
        ClientMessage::StylusInput { delta, buttons } => {
            session.nudge_stylus(&delta);
            if buttons.align {
                session.align_stylus();
            }
            if buttons.release && session.is_engaged() {
                session.disengage()?;
            }
            if buttons.engage && !session.is_engaged() {
                session.request_engage()?;
            }
            Ok(None)
        }
        ClientMessage::GripperCmd { command } => session.gripper(command).map(|()| None),
        ClientMessage::DeclareInserted => session.declare_inserted().map(|()| None),
        ClientMessage::Abort => {
            session.abort();
            Ok(None)
        }
        ClientMessage::Link { message } => match message {
            MessageKind::GripperCmd { command } => session.gripper(command).map(|()| None),
            MessageKind::Engage {
                action: EngageAction::Request,
                stylus_orientation,
            } => {
                let mut stylus = *session.stylus();
                stylus.pose.orientation = stylus_orientation;
                session.set_stylus(stylus);
                session.request_engage().map(|()| None)
            }
            other => Err(StationError::NotAllowed(format!(
                "link message kind {} is not accepted from clients",
                other.code()
            ))),
        },
    }
}

/// Blocking client used by tests and tools.
pub struct Client {
    stream: TcpStream,
    pub role: Role,
    pub session: u64,
    /// Newest snapshot seen while waiting for other messages.
    pub latest: Option<Snapshot>,
    /// Events seen while waiting for other messages.
    pub events: Vec<crate::session::LogEntry>,
}

impl Client {
    pub fn connect<A: ToSocketAddrs>(addr: A, role: Role) -> Result<Self, StationError> {
        let mut stream = TcpStream::connect(addr)?;
        stream.set_nodelay(true)?;
        stream.set_read_timeout(Some(Duration::from_secs(30)))?;
        write_frame(
            &mut stream,
            &ClientMessage::Hello {
                version: PROTOCOL_VERSION,
                role,
            },
        )?;
        match read_frame(&mut stream)? {
            Some(ServerMessage::Welcome { session, role, .. }) => Ok(Self {
                stream,
                role,
                session,
                latest: None,
                events: Vec::new(),
            }),
            Some(ServerMessage::Rejected {
                reason: RejectReason::EndpointBusy,
                detail,
            }) => Err(StationError::EndpointBusy(detail)),
            Some(other) => Err(StationError::Protocol(format!("unexpected greeting {other:?}"))),
            None => Err(StationError::Protocol("server closed the connection".into())),
        }
    }

    pub fn send(&mut self, msg: &ClientMessage) -> Result<(), StationError> {
        Ok(write_frame(&mut self.stream, msg)?)
    }

    /// Sends raw JSON as one frame.
    pub fn send_raw(&mut self, json: &str) -> Result<(), StationError> {
        let value: serde_json::Value =
            serde_json::from_str(json).map_err(|e| StationError::Protocol(e.to_string()))?;
        Ok(write_frame(&mut self.stream, &value)?)
    }

    pub fn recv(&mut self) -> Result<ServerMessage, StationError> {
        let msg = read_frame(&mut self.stream)?
            .ok_or_else(|| StationError::Protocol("server closed the connection".into()))?;
        match &msg {
            ServerMessage::Snapshot(s) => self.latest = Some((**s).clone()),
            ServerMessage::Event(e) => self.events.push(e.clone()),
            _ => {}
        }
        Ok(msg)
    }

    /// Waits for the next reply, keeping snapshots and events seen meanwhile.
    pub fn reply(&mut self) -> Result<(bool, Option<String>), StationError> {
        loop {
            if let ServerMessage::Reply { ok, detail, .. } = self.recv()? {
                return Ok((ok, detail));
            }
        }
    }

    /// Sends `msg` and waits for its reply.
    pub fn request(&mut self, msg: &ClientMessage) -> Result<(bool, Option<String>), StationError> {
        self.send(msg)?;
        self.reply()
    }

    /// Waits for the next snapshot.
    pub fn snapshot(&mut self) -> Result<Snapshot, StationError> {
        loop {
            if let ServerMessage::Snapshot(s) = self.recv()? {
                return Ok(*s);
            }
        }
    }
}
