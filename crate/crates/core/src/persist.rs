//! Transcript files and session manifests.
//!
//! A persisted session directory holds `room-<i>.jsonl` for every room (one
//! `{seq, t, author_kind, author_id, text}` record per line, possibly empty)
//! and `manifest.json`.

use std::fs::{self, File};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use tracing::warn;

use crate::config::SwarmConfig;
use crate::error::{Error, Result};
use crate::sentiment::DeliberationResult;
use crate::session::{Author, Message, ParticipantId, RoomId, SessionState};
use crate::topology::{PartitionPlan, Topology};
use crate::wire::AuthorKind;

const WRITE_ATTEMPTS: u32 = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TranscriptRecord {
    pub seq: u64,
    pub t: f64,
    pub author_kind: AuthorKind,
    pub author_id: u64,
    pub text: String,
}

impl From<&Message> for TranscriptRecord {
    fn from(m: &Message) -> Self {
        let (author_kind, author_id) = match m.author {
            Author::Human(p) => (AuthorKind::Human, p.0),
            Author::Observer(r) => (AuthorKind::Observer, u64::from(r.0)),
        };
        Self {
            seq: m.seq,
            t: m.t,
            author_kind,
            author_id,
            text: m.text.clone(),
        }
    }
}

impl TranscriptRecord {
    pub fn into_message(self, room: RoomId) -> Result<Message> {
        let author = match self.author_kind {
            AuthorKind::Human => Author::Human(ParticipantId(self.author_id)),
            AuthorKind::Observer => Author::Observer(RoomId(
                u32::try_from(self.author_id)
                    .map_err(|_| Error::Validation("observer room out of range".into()))?,
            )),
        };
        Ok(Message {
            seq: self.seq,
            room,
            author,
            text: self.text,
            t: self.t,
        })
    }
}

pub fn render_transcript(messages: &[Message]) -> String {
    let mut out = String::new();
    for m in messages {
        out.push_str(
            &serde_json::to_string(&TranscriptRecord::from(m)).expect("record serializes"),
        );
        out.push('\n');
    }
    out
}

/// Parses one room's transcript file, checking that seqs run 0, 1, 2, ...
pub fn parse_transcript(text: &str, room: RoomId) -> Result<Vec<Message>> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let parse_err = |reason: String| Error::Parse {
            line: n + 1,
            reason,
        };
        let rec: TranscriptRecord =
            serde_json::from_str(line).map_err(|e| parse_err(e.to_string()))?;
        if rec.seq != out.len() as u64 {
            return Err(parse_err(format!(
                "expected seq {}, found {}",
                out.len(),
                rec.seq
            )));
        }
        if !(rec.t.is_finite() && rec.t >= 0.0) {
            return Err(parse_err(format!("bad time {}", rec.t)));
        }
        if rec.text.trim().is_empty() {
            return Err(parse_err("empty text".into()));
        }
        out.push(
            rec.into_message(room)
                .map_err(|e| parse_err(e.to_string()))?,
        );
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionManifest {
    pub config: SwarmConfig,
    pub participants: Vec<ParticipantId>,
    pub plan: PartitionPlan,
    pub topology: Topology,
    pub result: Option<DeliberationResult>,
}

pub fn room_file(dir: &Path, room: usize) -> PathBuf {
    dir.join(format!("room-{room}.jsonl"))
}

pub fn manifest_file(dir: &Path) -> PathBuf {
    dir.join("manifest.json")
}

/// Writes `contents` to `path` through a temporary sibling and a rename, so
/// readers see either the previous file or the complete new one. Transient
/// failures are retried before being reported.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    let mut last = None;
    for attempt in 0..WRITE_ATTEMPTS {
        let res = (|| -> std::io::Result<()> {
            let mut f = File::create(&tmp)?;
            f.write_all(contents)?;
            f.sync_all()?;
            fs::rename(&tmp, path)
        })();
        match res {
            Ok(()) => return Ok(()),
            Err(e) => {
                warn!(path = %path.display(), attempt, "write failed: {e}");
                last = Some(e);
                thread::sleep(Duration::from_millis(10 << attempt));
            }
        }
    }
    let _ = fs::remove_file(&tmp);
    Err(Error::Io(last.expect("at least one attempt")))
}

/// Writes every room transcript plus the manifest. Only closed sessions may
/// be persisted.
pub fn persist(
    session: &SessionState,
    result: Option<&DeliberationResult>,
    dir: &Path,
) -> Result<Vec<PathBuf>> {
    if session.phase() != crate::session::Phase::Closed {
        return Err(Error::Contract("only closed sessions are persisted"));
    }
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    for (room, transcript) in session.transcripts().iter().enumerate() {
        let path = room_file(dir, room);
        write_atomic(&path, render_transcript(transcript).as_bytes())?;
        written.push(path);
    }
    let manifest = SessionManifest {
        config: session.config().clone(),
        participants: session.participants().to_vec(),
        plan: session.plan().clone(),
        topology: session.topology().clone(),
        result: result.cloned(),
    };
    let path = manifest_file(dir);
    write_atomic(&path, serde_json::to_string_pretty(&manifest)?.as_bytes())?;
    written.push(path);
    Ok(written)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReloadedSession {
    pub manifest: SessionManifest,
    pub transcripts: Vec<Vec<Message>>,
}

pub fn reload(dir: &Path) -> Result<ReloadedSession> {
    let manifest: SessionManifest = serde_json::from_str(&fs::read_to_string(manifest_file(dir))?)?;
    let mut transcripts = Vec::with_capacity(manifest.plan.room_count());
    for room in 0..manifest.plan.room_count() {
        let text = fs::read_to_string(room_file(dir, room))?;
        transcripts.push(parse_transcript(&text, RoomId(room as u32))?);
    }
    Ok(ReloadedSession {
        manifest,
        transcripts,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::options::numeric_options;

    fn closed_session(n: u64) -> SessionState {
        let cfg = SwarmConfig {
            options: numeric_options(&[1.0, 2.0]),
            ..SwarmConfig::default()
        };
        let mut s = SessionState::create(cfg, (0..n).map(ParticipantId).collect()).unwrap();
        let p = s.members(RoomId(0))[0];
        s.post_message(
            RoomId(0),
            Author::Human(p),
            "first \"quoted\" line\nwith newline",
        )
        .unwrap();
        s.advance_clock(3.25).unwrap();
        s.post_message(RoomId(0), Author::Human(p), "ünïcødé ✓")
            .unwrap();
        s.advance_clock(500.0).unwrap();
        s
    }

    #[test]
    fn two_rooms_give_three_files_and_empty_rooms_still_written() {
        let s = closed_session(10);
        assert_eq!(s.room_count(), 2);
        let dir = tempfile::tempdir().unwrap();
        let files = persist(&s, None, dir.path()).unwrap();
        assert_eq!(files.len(), 3);
        assert_eq!(fs::read_to_string(room_file(dir.path(), 1)).unwrap(), "");
        let back = reload(dir.path()).unwrap();
        assert_eq!(back.transcripts, s.transcripts());
        assert_eq!(back.manifest.plan, *s.plan());
    }

    #[test]
    fn open_sessions_are_not_persisted() {
        let cfg = SwarmConfig {
            options: numeric_options(&[1.0]),
            ..SwarmConfig::default()
        };
        let s = SessionState::create(cfg, vec![ParticipantId(0)]).unwrap();
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            persist(&s, None, dir.path()),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn transcript_parser_checks_sequence() {
        let ok = "{\"seq\":0,\"t\":0.0,\"author_kind\":\"human\",\"author_id\":3,\"text\":\"a\"}\n";
        assert_eq!(parse_transcript(ok, RoomId(0)).unwrap().len(), 1);
        let gap = ok.replace("\"seq\":0", "\"seq\":1");
        assert!(matches!(
            parse_transcript(&gap, RoomId(0)),
            Err(Error::Parse { line: 1, .. })
        ));
        let neg = ok.replace("\"t\":0.0", "\"t\":-1");
        assert!(parse_transcript(&neg, RoomId(0)).is_err());
        let kind = ok.replace("human", "robot");
        assert!(parse_transcript(&kind, RoomId(0)).is_err());
        let big = ok
            .replace("human", "observer")
            .replace("\"author_id\":3", "\"author_id\":99999999999");
        assert!(parse_transcript(&big, RoomId(0)).is_err());
    }

    #[test]
    fn atomic_write_replaces_whole_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.jsonl");
        write_atomic(&p, b"one\n").unwrap();
        write_atomic(&p, b"two\n").unwrap();
        assert_eq!(fs::read(&p).unwrap(), b"two\n");
        assert!(!p.with_extension("tmp").exists());
        let missing = dir.path().join("no/such/dir/x.jsonl");
        assert!(matches!(write_atomic(&missing, b"z"), Err(Error::Io(_))));
    }
}
