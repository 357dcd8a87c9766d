use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Write};
use std::net::{Shutdown, SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc::{self, Receiver, Sender};
use std::sync::Arc;
use std::thread::{self, JoinHandle};

use log::{debug, info, warn};

use super::service::{Session, TeacherService};
use super::wire::{Frame, MessageType};
use crate::error::{Error, Result};
use crate::teacher::Teacher;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ServerConfig {
    /// Stop after this many clients have sent `shutdown`; 0 runs until
    /// [`ServerHandle::stop`].
    pub expected_clients: usize,
}

impl Default for ServerConfig {
    fn default() -> Self {
        Self { expected_clients: 1 }
    }
}

/// Final state returned when the server stops.
#[derive(Debug)]
pub struct ServerSummary {
    pub sessions: Vec<Session>,
    pub teacher: Teacher,
}

impl ServerSummary {
    /// Served ids still awaiting feedback, across all sessions.
    pub fn pending(&self) -> Vec<(u64, u64)> {
        self.sessions
            .iter()
            .flat_map(|s| s.pending.iter().map(move |&q| (s.id, q)))
            .collect()
    }
}

enum Event {
    Connected(u64, TcpStream),
    Line(u64, String),
    Closed(u64),
    Stop,
}

pub struct ServerHandle {
    addr: SocketAddr,
    inbox: Sender<Event>,
    actor: JoinHandle<Result<ServerSummary>>,
    acceptor: JoinHandle<()>,
}

impl ServerHandle {
    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    /// Block until the server stops on its own (expected clients done).
    pub fn wait(self) -> Result<ServerSummary> {
        let out = self.actor.join().map_err(|_| Error::Protocol("server actor panicked".into()))?;
        let _ = self.acceptor.join();
        out
    }

    /// Close every connection and stop.
    pub fn stop(self) -> Result<ServerSummary> {
        let _ = self.inbox.send(Event::Stop);
        self.wait()
    }
}

/// Bind `addr` and start the acceptor and teacher actor threads.
pub fn serve(service: TeacherService, addr: impl ToSocketAddrs, cfg: ServerConfig) -> Result<ServerHandle> {
    let listener = TcpListener::bind(addr).map_err(Error::Transport)?;
    let local = listener.local_addr().map_err(Error::Transport)?;
    info!("teacher server listening on {local}");
    let (tx, rx) = mpsc::channel();
    let stopping = Arc::new(AtomicBool::new(false));

    let acceptor = {
        let tx = tx.clone();
        let stopping = Arc::clone(&stopping);
        thread::spawn(move || accept_loop(listener, tx, stopping))
    };
    let actor = thread::spawn(move || {
        let actor = Actor {
            service,
            cfg,
            sessions: BTreeMap::new(),
            finished: Vec::new(),
            shutdowns: 0,
        };
        let out = actor.run(rx);
        stopping.store(true, Ordering::SeqCst);
        // wake the acceptor so it observes the flag
        let _ = TcpStream::connect(local);
        out
    });
    Ok(ServerHandle { addr: local, inbox: tx, actor, acceptor })
}

fn accept_loop(listener: TcpListener, tx: Sender<Event>, stopping: Arc<AtomicBool>) {
    let mut next_id = 0u64;
    for stream in listener.incoming() {
        if stopping.load(Ordering::SeqCst) {
            break;
        }
        let stream = match stream {
            Ok(s) => s,
            Err(e) => {
                warn!("accept failed: {e}");
                continue;
            }
        };
        let id = next_id;
        next_id += 1;
        let writer = match stream.try_clone() {
            Ok(w) => w,
            Err(e) => {
                warn!("connection {id}: {e}");
                continue;
            }
        };
        if tx.send(Event::Connected(id, writer)).is_err() {
            break;
        }
        let tx = tx.clone();
        thread::spawn(move || {
            let reader = BufReader::new(stream);
            for line in reader.lines() {
                match line {
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

struct Conn {
    session: Session,
    writer: TcpStream,
    out_seq: u64,
    last_in_seq: Option<u64>,
}

struct Actor {
    service: TeacherService,
    cfg: ServerConfig,
    sessions: BTreeMap<u64, Conn>,
    finished: Vec<Session>,
    shutdowns: usize,
}

impl Actor {
    fn run(mut self, rx: Receiver<Event>) -> Result<ServerSummary> {
        while let Ok(ev) = rx.recv() {
            match ev {
                Event::Connected(id, writer) => {
                    debug!("connection {id} opened");
                    self.sessions.insert(id, Conn {
                        session: Session::new(id),
                        writer,
                        out_seq: 0,
                        last_in_seq: None,
                    });
                }
                Event::Line(id, line) => {
                    if self.handle_line(id, &line)? {
                        break;
                    }
                }
                Event::Closed(id) => {
                    if let Some(c) = self.sessions.remove(&id) {
                        debug!("connection {id} closed");
                        self.finished.push(c.session);
                    }
                }
                Event::Stop => break,
            }
        }
        for (_, c) in std::mem::take(&mut self.sessions) {
            let _ = c.writer.shutdown(Shutdown::Both);
            self.finished.push(c.session);
        }
        let mut sessions = std::mem::take(&mut self.finished);
        sessions.sort_by_key(|s| s.id);
        Ok(ServerSummary { sessions, teacher: self.service.into_teacher() })
    }

    /// Returns true when the server should stop.
    fn handle_line(&mut self, id: u64, line: &str) -> Result<bool> {
        let Some(conn) = self.sessions.get_mut(&id) else {
            return Ok(false);
        };
        let frame = match Frame::decode(line) {
            Ok(f) => f,
            Err(e) => {
                send(conn, |seq| Frame::error(seq, None, &e));
                return Ok(false);
            }
        };
        if conn.last_in_seq.is_some_and(|s| frame.seq <= s) {
            let e = Error::Protocol(format!("sequence number {} did not increase", frame.seq));
            send(conn, |seq| Frame::error(seq, Some(frame.seq), &e));
            return Ok(false);
        }
        conn.last_in_seq = Some(frame.seq);
        let reply_to = Some(frame.seq);
        match frame.kind {
            MessageType::RequestSample => match self.service.sample(&mut conn.session) {
                Ok(reply) => send(conn, |seq| Frame {
                    reply_to,
                    question_id: Some(reply.question.id),
                    payload: Some(reply.question.clone()),
                    stats: Some(reply.stats.clone()),
                    ..Frame::new(MessageType::Sample, seq)
                }),
                Err(e) => send(conn, |seq| Frame::error(seq, reply_to, &e)),
            },
            MessageType::Feedback => {
                let qid = frame.question_id.unwrap_or_default();
                let rewards = frame.rewards.as_deref().unwrap_or_default();
                match self.service.accept_feedback(&mut conn.session, qid, rewards) {
                    Ok(()) => {
                        let counters = conn.session.counters();
                        send(conn, |seq| Frame {
                            reply_to,
                            question_id: Some(qid),
                            counters: Some(counters),
                            ..Frame::new(MessageType::Ack, seq)
                        });
                        // the ack is already on the wire; refine now
                        self.service.run_update()?;
                    }
                    Err(e) => send(conn, |seq| Frame::error(seq, reply_to, &e)),
                }
            }
            MessageType::Shutdown => {
                let counters = conn.session.counters();
                send(conn, |seq| Frame {
                    reply_to,
                    counters: Some(counters),
                    ..Frame::new(MessageType::Ack, seq)
                });
                self.shutdowns += 1;
                if self.cfg.expected_clients > 0 && self.shutdowns >= self.cfg.expected_clients {
                    return Ok(true);
                }
            }
            other => {
                let e = Error::Protocol(format!("unexpected {other:?} frame from client"));
                send(conn, |seq| Frame::error(seq, reply_to, &e));
            }
        }
        Ok(false)
    }
}

fn send(conn: &mut Conn, build: impl FnOnce(u64) -> Frame) {
    let frame = build(conn.out_seq);
    conn.out_seq += 1;
    if let Err(e) = conn.writer.write_all(frame.encode().as_bytes()).and_then(|_| conn.writer.flush()) {
        warn!("connection {}: write failed: {e}", conn.session.id);
    }
}
