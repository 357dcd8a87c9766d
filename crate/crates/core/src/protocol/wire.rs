use serde::{Deserialize, Serialize};

use super::service::{Counters, TeacherStats};
use crate::error::{Error, Result};
use crate::students::Question;

pub const PROTOCOL_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MessageType {
    RequestSample,
    Sample,
    Feedback,
    Ack,
    Shutdown,
    Error,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub code: String,
    pub reason: String,
}

/// One newline-terminated JSON record. Absent optional fields are omitted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Frame {
    pub v: u32,
    pub seq: u64,
    #[serde(rename = "type")]
    pub kind: MessageType,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reply_to: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub question_id: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub payload: Option<Question>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rewards: Option<Vec<u8>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stats: Option<TeacherStats>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub counters: Option<Counters>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<ErrorBody>,
}

impl Frame {
    pub fn new(kind: MessageType, seq: u64) -> Self {
        Self {
            v: PROTOCOL_VERSION,
            seq,
            kind,
            reply_to: None,
            question_id: None,
            payload: None,
            rewards: None,
            stats: None,
            counters: None,
            error: None,
        }
    }

    pub fn request_sample(seq: u64) -> Self {
        Self::new(MessageType::RequestSample, seq)
    }

    pub fn feedback(seq: u64, question_id: u64, rewards: Vec<u8>) -> Self {
        Self {
            question_id: Some(question_id),
            rewards: Some(rewards),
            ..Self::new(MessageType::Feedback, seq)
        }
    }

    pub fn shutdown(seq: u64) -> Self {
        Self::new(MessageType::Shutdown, seq)
    }

    pub fn error(seq: u64, reply_to: Option<u64>, err: &Error) -> Self {
        Self {
            reply_to,
            error: Some(ErrorBody {
                code: err.code().to_string(),
                reason: err.to_string(),
            }),
            ..Self::new(MessageType::Error, seq)
        }
    }

    /// Check the per-type field requirements.
    pub fn validate(&self) -> Result<()> {
        if self.v != PROTOCOL_VERSION {
            return Err(Error::Protocol(format!("unsupported protocol version {}", self.v)));
        }
        let need = |ok: bool, what: &str| {
            if ok {
                Ok(())
            } else {
                Err(Error::Protocol(format!("{:?} frame requires {what}", self.kind)))
            }
        };
        match self.kind {
            MessageType::Sample => need(self.payload.is_some() && self.stats.is_some(), "payload and stats"),
            MessageType::Feedback => need(self.question_id.is_some() && self.rewards.is_some(), "question_id and rewards"),
            MessageType::Error => need(self.error.is_some(), "error"),
            _ => Ok(()),
        }
    }

    pub fn encode(&self) -> String {
        let mut line = serde_json::to_string(self).expect("frames serialize");
        line.push('\n');
        line
    }

    pub fn decode(line: &str) -> Result<Self> {
        let frame: Frame = serde_json::from_str(line.trim_end_matches(['\n', '\r']))
            .map_err(|e| Error::Protocol(format!("malformed frame: {e}")))?;
        frame.validate()?;
        Ok(frame)
    }
}
