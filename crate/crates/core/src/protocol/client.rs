use std::io::{BufRead, BufReader, ErrorKind, Write};
use std::net::{TcpStream, ToSocketAddrs};
use std::time::Duration;

use super::service::{Counters, SampleReply};
use super::wire::{Frame, MessageType};
use crate::error::{Error, Result};
use crate::grpo::RewardConfig;
use crate::students::{Rollout, Student};

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(30);

/// Synchronous request/reply connection to a teacher server.
pub struct Client {
    reader: BufReader<TcpStream>,
    writer: TcpStream,
    seq: u64,
    transcript: Option<Vec<String>>,
}

impl Client {
    pub fn connect(addr: impl ToSocketAddrs, timeout: Duration) -> Result<Self> {
        let mut last = None;
        for a in addr.to_socket_addrs().map_err(Error::Transport)? {
            match TcpStream::connect_timeout(&a, timeout) {
                Ok(stream) => {
                    stream.set_read_timeout(Some(timeout)).map_err(Error::Transport)?;
                    stream.set_write_timeout(Some(timeout)).map_err(Error::Transport)?;
                    stream.set_nodelay(true).map_err(Error::Transport)?;
                    let writer = stream.try_clone().map_err(Error::Transport)?;
                    return Ok(Self {
                        reader: BufReader::new(stream),
                        writer,
                        seq: 0,
                        transcript: None,
                    });
                }
                Err(e) => last = Some(e),
            }
        }
        Err(Error::Transport(last.unwrap_or_else(|| std::io::Error::new(ErrorKind::NotFound, "no address resolved"))))
    }

    /// Record every frame sent (`> `) and received (`< `).
    pub fn record_transcript(&mut self) {
        self.transcript.get_or_insert_with(Vec::new);
    }

    pub fn transcript(&self) -> &[String] {
        self.transcript.as_deref().unwrap_or_default()
    }

    /// Send one raw line and return the reply line. For diagnostics and tests.
    pub fn call_raw(&mut self, line: &str) -> Result<String> {
        let mut line = line.trim_end().to_string();
        line.push('\n');
        self.writer.write_all(line.as_bytes()).map_err(Error::Transport)?;
        self.writer.flush().map_err(Error::Transport)?;
        let mut reply = String::new();
        let n = self.reader.read_line(&mut reply).map_err(Error::Transport)?;
        if n == 0 {
            return Err(Error::Transport(std::io::Error::new(
                ErrorKind::UnexpectedEof,
                "server closed the connection",
            )));
        }
        if let Some(t) = &mut self.transcript {
            t.push(format!("> {}", line.trim_end()));
            t.push(format!("< {}", reply.trim_end()));
        }
        Ok(reply)
    }

    fn call(&mut self, build: impl FnOnce(u64) -> Frame) -> Result<Frame> {
        let seq = self.seq;
        self.seq += 1;
        let reply = Frame::decode(&self.call_raw(&build(seq).encode())?)?;
        if reply.kind == MessageType::Error {
            let body = reply.error.expect("validated error frame");
            return Err(Error::Remote { code: body.code, reason: body.reason });
        }
        if reply.reply_to != Some(seq) {
            return Err(Error::Protocol(format!("reply to {:?}, expected {seq}", reply.reply_to)));
        }
        Ok(reply)
    }

    pub fn request_sample(&mut self) -> Result<SampleReply> {
        let reply = self.call(Frame::request_sample)?;
        match (reply.kind, reply.payload, reply.stats) {
            (MessageType::Sample, Some(question), Some(stats)) => Ok(SampleReply { question, stats }),
            (kind, ..) => Err(Error::Protocol(format!("expected sample, got {kind:?}"))),
        }
    }

    pub fn send_feedback(&mut self, question_id: u64, rewards: &[u8]) -> Result<Counters> {
        let reply = self.call(|seq| Frame::feedback(seq, question_id, rewards.to_vec()))?;
        match reply.kind {
            MessageType::Ack => Ok(reply.counters.unwrap_or_default()),
            kind => Err(Error::Protocol(format!("expected ack, got {kind:?}"))),
        }
    }

    pub fn shutdown(&mut self) -> Result<Counters> {
        let reply = self.call(Frame::shutdown)?;
        Ok(reply.counters.unwrap_or_default())
    }
}

/// One request / rollout / feedback cycle. The student is only read; the
/// caller applies the returned group to it once the ack has arrived.
pub fn client_step(
    client: &mut Client,
    student: &Student,
    reward_cfg: &RewardConfig,
    group_size: usize,
    step: u64,
    seed: u64,
) -> Result<(SampleReply, Rollout)> {
    let reply = client.request_sample()?;
    let rollout = student.rollout_group(&reply.question, group_size, step, 0, reward_cfg, seed)?;
    client.send_feedback(reply.question.id, &rollout.group.rewards_ver)?;
    Ok((reply, rollout))
}
