//! Fixture directories: `manifest.json` plus one reply file per call.
//!
//! ```json
//! {
//!   "calls": [
//!     {"kind": "weakness", "file": "000_weakness.txt"},
//!     {"kind": "generate", "file": "001_generate.txt", "prompt_tokens": 120, "completion_tokens": 45}
//!   ],
//!   "faults": [{"call": 2, "fault": "http500", "times": 2}],
//!   "api_key": "test-key"
//! }
//! ```
//!
//! The scripted backend hands out replies per call kind, in manifest order.
//! The stub server ignores kinds and replays replies strictly in order;
//! `faults` and `api_key` only apply to the stub server.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::chat::{ChatBackend, ChatReply, Usage};
use super::{CallKind, Message};
use crate::error::{Error, Result};

pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FixtureCall {
    pub kind: CallKind,
    pub file: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prompt_tokens: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub completion_tokens: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FaultKind {
    Http500,
    Timeout,
    MalformedJson,
    Unauthorized,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FaultSpec {
    /// 1-based index of the reply the fault applies to.
    pub call: usize,
    pub fault: FaultKind,
    /// Number of consecutive attempts that fail before the reply is served.
    #[serde(default = "one")]
    pub times: u32,
    /// Delay before answering a `timeout` fault.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delay_ms: Option<u64>,
}

fn one() -> u32 {
    1
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FixtureManifest {
    pub calls: Vec<FixtureCall>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub faults: Vec<FaultSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub api_key: Option<String>,
}

/// A loaded fixture directory.
#[derive(Debug, Clone, PartialEq)]
pub struct Fixtures {
    pub manifest: FixtureManifest,
    pub replies: Vec<String>,
}

impl Fixtures {
    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let manifest_path = dir.join(MANIFEST);
        let manifest: FixtureManifest = serde_json::from_str(
            &std::fs::read_to_string(&manifest_path)
                .map_err(|e| Error::Fixture(format!("{}: {e}", manifest_path.display())))?,
        )
        .map_err(|e| Error::Fixture(format!("{}: {e}", manifest_path.display())))?;
        let replies = manifest
            .calls
            .iter()
            .map(|c| {
                let path = dir.join(&c.file);
                std::fs::read_to_string(&path).map_err(|e| Error::Fixture(format!("{}: {e}", path.display())))
            })
            .collect::<Result<Vec<_>>>()?;
        for fault in &manifest.faults {
            if fault.call == 0 || fault.call > replies.len() {
                return Err(Error::Fixture(format!("fault targets call {} of {}", fault.call, replies.len())));
            }
        }
        Ok(Self { manifest, replies })
    }

    /// Writes a fixture directory with files named `NNN_<kind>.txt`.
    pub fn write(dir: impl AsRef<Path>, calls: &[(CallKind, &str)]) -> Result<PathBuf> {
        Self::write_with(dir, calls, Vec::new(), None)
    }

    pub fn write_with(
        dir: impl AsRef<Path>,
        calls: &[(CallKind, &str)],
        faults: Vec<FaultSpec>,
        api_key: Option<String>,
    ) -> Result<PathBuf> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        let mut manifest = FixtureManifest {
            calls: Vec::with_capacity(calls.len()),
            faults,
            api_key,
        };
        for (i, (kind, reply)) in calls.iter().enumerate() {
            let kind_name = serde_json::to_value(kind)?.as_str().unwrap_or("call").to_string();
            let file = format!("{i:03}_{kind_name}.txt");
            std::fs::write(dir.join(&file), reply)?;
            manifest.calls.push(FixtureCall {
                kind: *kind,
                file,
                prompt_tokens: None,
                completion_tokens: None,
            });
        }
        std::fs::write(dir.join(MANIFEST), serde_json::to_string_pretty(&manifest)?)?;
        Ok(dir.to_path_buf())
    }

    pub fn len(&self) -> usize {
        self.replies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.replies.is_empty()
    }

    pub fn reply(&self, index: usize) -> ChatReply {
        let call = &self.manifest.calls[index];
        let usage = match (call.prompt_tokens, call.completion_tokens) {
            (Some(p), Some(c)) => Some(Usage {
                prompt_tokens: p,
                completion_tokens: c,
            }),
            _ => None,
        };
        ChatReply {
            content: self.replies[index].clone(),
            usage,
        }
    }
}

/// Replays fixture replies; the n-th call of a kind receives the n-th fixture of that kind.
#[derive(Debug, Clone)]
pub struct ScriptedBackend {
    fixtures: Fixtures,
    queues: HashMap<CallKind, Vec<usize>>,
    cursors: HashMap<CallKind, usize>,
    calls: Vec<CallKind>,
}

impl ScriptedBackend {
    pub fn new(fixtures: Fixtures) -> Self {
        let mut queues: HashMap<CallKind, Vec<usize>> = HashMap::new();
        for (i, call) in fixtures.manifest.calls.iter().enumerate() {
            queues.entry(call.kind).or_default().push(i);
        }
        Self {
            fixtures,
            queues,
            cursors: HashMap::new(),
            calls: Vec::new(),
        }
    }

    pub fn from_dir(dir: impl AsRef<Path>) -> Result<Self> {
        Ok(Self::new(Fixtures::load(dir)?))
    }

    /// Kinds of the calls served so far.
    pub fn calls(&self) -> &[CallKind] {
        &self.calls
    }
}

impl ChatBackend for ScriptedBackend {
    fn complete(&mut self, kind: CallKind, _messages: &[Message]) -> Result<ChatReply> {
        let cursor = self.cursors.entry(kind).or_insert(0);
        let index = self
            .queues
            .get(&kind)
            .and_then(|q| q.get(*cursor))
            .copied()
            .ok_or_else(|| Error::Fixture(format!("no fixture left for a {kind:?} call (served {} so far)", *cursor)))?;
        *cursor += 1;
        self.calls.push(kind);
        Ok(self.fixtures.reply(index))
    }
}
