//! JSON checkpoints.
//!
//! Every file is an envelope `{format, version, kind, body}`. Matrices are
//! stored with their shape header followed by the row-major entries, and
//! floats round-trip bit-for-bit.

use crate::agent::AngcAgent;
use crate::envs::EnvKind;
use crate::harness::EpisodeRecord;
use crate::ngc::NgcModel;
use crate::replay::ReplayBuffer;
use rand_chacha::ChaCha8Rng;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use std::fs;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

pub const FORMAT: &str = "angc-checkpoint";
pub const VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum CheckpointError {
    #[error("checkpoint io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed checkpoint {path}: {source}")]
    Parse {
        path: String,
        #[source]
        source: serde_json::Error,
    },
    #[error("{path} holds a `{found}` checkpoint, expected `{expected}`")]
    WrongKind {
        path: String,
        found: String,
        expected: String,
    },
    #[error("{path} is not an angc checkpoint (format {format:?}, version {version})")]
    Format { path: String, format: String, version: u32 },
}

/// Exact position of a ChaCha stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngState {
    pub seed: [u8; 32],
    pub stream: u64,
    pub word_pos_hi: u64,
    pub word_pos_lo: u64,
}

impl RngState {
    pub fn capture(rng: &ChaCha8Rng) -> Self {
        let pos = rng.get_word_pos();
        Self {
            seed: rng.get_seed(),
            stream: rng.get_stream(),
            word_pos_hi: (pos >> 64) as u64,
            word_pos_lo: pos as u64,
        }
    }

    pub fn restore(&self) -> ChaCha8Rng {
        use rand::SeedableRng;
        let mut rng = ChaCha8Rng::from_seed(self.seed);
        rng.set_stream(self.stream);
        rng.set_word_pos(((self.word_pos_hi as u128) << 64) | self.word_pos_lo as u128);
        rng
    }
}

/// A trained agent plus what is needed to keep acting with it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentCheckpoint {
    pub env: EnvKind,
    pub max_steps: Option<usize>,
    pub seed: u64,
    pub agent: AngcAgent,
    pub rng: RngState,
}

/// Everything needed to resume a trial at an episode boundary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialCheckpoint {
    pub checkpoint: AgentCheckpoint,
    pub buffer: ReplayBuffer,
    pub records: Vec<EpisodeRecord>,
}

impl TrialCheckpoint {
    pub fn next_episode(&self) -> usize {
        self.records.len() + 1
    }
}

#[derive(Serialize, Deserialize)]
struct Envelope<T> {
    format: String,
    version: u32,
    kind: String,
    body: T,
}

#[derive(Deserialize)]
struct Header {
    format: String,
    version: u32,
    kind: String,
}

pub trait CheckpointKind: Serialize + DeserializeOwned {
    const KIND: &'static str;
}

impl CheckpointKind for NgcModel {
    const KIND: &'static str = "model";
}

impl CheckpointKind for AgentCheckpoint {
    const KIND: &'static str = "agent";
}

impl CheckpointKind for TrialCheckpoint {
    const KIND: &'static str = "trial";
}

pub fn to_string<T: CheckpointKind>(value: &T) -> String {
    serde_json::to_string(&Envelope {
        format: FORMAT.to_string(),
        version: VERSION,
        kind: T::KIND.to_string(),
        body: value,
    })
    .expect("checkpoint bodies are plain data")
}

pub fn from_str<T: CheckpointKind>(text: &str) -> Result<T, CheckpointError> {
    parse(text, "<memory>")
}

fn parse<T: CheckpointKind>(text: &str, path: &str) -> Result<T, CheckpointError> {
    let perr = |source| CheckpointError::Parse {
        path: path.to_string(),
        source,
    };
    let header: Header = serde_json::from_str(text).map_err(perr)?;
    check_header(&header, path)?;
    if header.kind != T::KIND {
        return Err(CheckpointError::WrongKind {
            path: path.to_string(),
            found: header.kind,
            expected: T::KIND.to_string(),
        });
    }
    let env: Envelope<T> = serde_json::from_str(text).map_err(perr)?;
    Ok(env.body)
}

fn check_header(header: &Header, path: &str) -> Result<(), CheckpointError> {
    if header.format != FORMAT || header.version != VERSION {
        return Err(CheckpointError::Format {
            path: path.to_string(),
            format: header.format.clone(),
            version: header.version,
        });
    }
    Ok(())
}

pub fn save<T: CheckpointKind>(path: &Path, value: &T) -> Result<(), CheckpointError> {
    let io = |source| CheckpointError::Io {
        path: path.display().to_string(),
        source,
    };
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir).map_err(io)?;
        }
    }
    let mut w = BufWriter::new(fs::File::create(path).map_err(io)?);
    serde_json::to_writer(
        &mut w,
        &Envelope {
            format: FORMAT.to_string(),
            version: VERSION,
            kind: T::KIND.to_string(),
            body: value,
        },
    )
    .map_err(|source| CheckpointError::Parse {
        path: path.display().to_string(),
        source,
    })?;
    w.flush().map_err(io)
}

pub fn load<T: CheckpointKind>(path: &Path) -> Result<T, CheckpointError> {
    let text = read(path)?;
    parse(&text, &path.display().to_string())
}

fn read(path: &Path) -> Result<String, CheckpointError> {
    let io = |source| CheckpointError::Io {
        path: path.display().to_string(),
        source,
    };
    let mut s = String::new();
    std::io::Read::read_to_string(&mut BufReader::new(fs::File::open(path).map_err(io)?), &mut s).map_err(io)?;
    Ok(s)
}

/// The `kind` tag of a checkpoint file.
pub fn kind_of(path: &Path) -> Result<String, CheckpointError> {
    let text = read(path)?;
    let p = path.display().to_string();
    let header: Header = serde_json::from_str(&text).map_err(|source| CheckpointError::Parse {
        path: p.clone(),
        source,
    })?;
    check_header(&header, &p)?;
    Ok(header.kind)
}

/// Loads an agent from either an agent or a trial checkpoint.
pub fn load_agent(path: &Path) -> Result<AgentCheckpoint, CheckpointError> {
    match kind_of(path)?.as_str() {
        "trial" => Ok(load::<TrialCheckpoint>(path)?.checkpoint),
        _ => load::<AgentCheckpoint>(path),
    }
}
