//! Path files.
//!
//! **JSONL.** The first line is a header record; every following line is
//! either a `sample` or an `event` record. Each event sits between the
//! pre-jump and post-jump samples it separates. Components are 1-based.
//!
//! ```text
//! {"type":"header","format":"hjs-path","version":1,"M":1,"seed":..,"horizon":..,"model_hash":"..","events":..,"samples":..}
//! {"type":"sample","t":0.0,"kind":"grid","x":0.0,"row_sums":[0.0]}
//! {"type":"event","t":0.37,"component":1}
//! ```
//!
//! **Binary.** All fields little-endian:
//!
//! | field       | type          |
//! |-------------|---------------|
//! | magic       | `b"HJSM"`     |
//! | version     | u16 (= 1)     |
//! | M           | u32           |
//! | seed        | u64           |
//! | horizon     | f64           |
//! | model hash  | 32 bytes      |
//! | event count | u64           |
//! | sample count| u64           |
//!
//! followed by the events (`f64` time, `u32` 1-based component) and the
//! samples (`f64` time, `u8` kind 0 grid / 1 pre / 2 post / 3 final, `f64`
//! x, `M` x `f64` row sums).

use std::io::{BufRead, Write};

use hjs_core::{Event, Path, SampleKind, SkeletonSample};
use serde::{Deserialize, Serialize};

pub const MAGIC: [u8; 4] = *b"HJSM";
pub const FORMAT_VERSION: u16 = 1;

#[derive(Debug, thiserror::Error)]
pub enum FormatError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("line {line}: {source}")]
    Json {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("not an hjs path file: {0}")]
    BadHeader(String),
    #[error("unsupported format version {0}")]
    Version(u16),
    #[error("corrupt path file: {0}")]
    Corrupt(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum PathFormat {
    Jsonl,
    Bin,
}

impl PathFormat {
    pub fn extension(self) -> &'static str {
        match self {
            PathFormat::Jsonl => "jsonl",
            PathFormat::Bin => "hjsm",
        }
    }

    pub fn encode(self, path: &Path) -> Vec<u8> {
        match self {
            PathFormat::Jsonl => encode_jsonl(path),
            PathFormat::Bin => encode_binary(path),
        }
    }

    pub fn decode(self, bytes: &[u8]) -> Result<Path, FormatError> {
        match self {
            PathFormat::Jsonl => decode_jsonl(bytes),
            PathFormat::Bin => decode_binary(bytes),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum KindTag {
    Grid,
    Pre,
    Post,
    Final,
}

impl From<SampleKind> for KindTag {
    fn from(k: SampleKind) -> Self {
        match k {
            SampleKind::Grid => KindTag::Grid,
            SampleKind::PreJump => KindTag::Pre,
            SampleKind::PostJump => KindTag::Post,
            SampleKind::Final => KindTag::Final,
        }
    }
}

impl From<KindTag> for SampleKind {
    fn from(k: KindTag) -> Self {
        match k {
            KindTag::Grid => SampleKind::Grid,
            KindTag::Pre => SampleKind::PreJump,
            KindTag::Post => SampleKind::PostJump,
            KindTag::Final => SampleKind::Final,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
enum Record {
    Header {
        format: String,
        version: u16,
        #[serde(rename = "M")]
        m: usize,
        seed: u64,
        horizon: f64,
        model_hash: String,
        events: usize,
        samples: usize,
    },
    Sample {
        t: f64,
        kind: KindTag,
        x: f64,
        row_sums: Vec<f64>,
    },
    Event {
        t: f64,
        component: usize,
    },
}

fn write_line(out: &mut Vec<u8>, rec: &Record) {
    serde_json::to_writer(&mut *out, rec).expect("records serialise");
    out.push(b'\n');
}

pub fn encode_jsonl(path: &Path) -> Vec<u8> {
    let mut out = Vec::new();
    write_line(
        &mut out,
        &Record::Header {
            format: "hjs-path".into(),
            version: FORMAT_VERSION,
            m: path.dim(),
            seed: path.seed,
            horizon: path.horizon,
            model_hash: hex::encode(path.model_hash),
            events: path.events.len(),
            samples: path.skeleton.len(),
        },
    );
    let mut events = path.events.iter();
    let event_record = |e: &Event| Record::Event {
        t: e.time,
        component: e.component + 1,
    };
    for s in &path.skeleton {
        if s.kind == SampleKind::PostJump {
            if let Some(e) = events.next() {
                write_line(&mut out, &event_record(e));
            }
        }
        write_line(
            &mut out,
            &Record::Sample {
                t: s.time,
                kind: s.kind.into(),
                x: s.x,
                row_sums: s.row_sums.clone(),
            },
        );
    }
    for e in events {
        write_line(&mut out, &event_record(e));
    }
    out
}

pub fn decode_jsonl(bytes: &[u8]) -> Result<Path, FormatError> {
    let mut lines = bytes.lines().enumerate();
    let parse = |line: usize, text: &str| -> Result<Record, FormatError> {
        serde_json::from_str(text).map_err(|source| FormatError::Json { line: line + 1, source })
    };
    let (n, first) = lines
        .next()
        .ok_or_else(|| FormatError::BadHeader("empty file".into()))?;
    let Record::Header {
        format,
        version,
        m,
        seed,
        horizon,
        model_hash,
        events: n_events,
        samples: n_samples,
    } = parse(n, &first?)?
    else {
        return Err(FormatError::BadHeader("first record is not a header".into()));
    };
    if format != "hjs-path" {
        return Err(FormatError::BadHeader(format));
    }
    if version != FORMAT_VERSION {
        return Err(FormatError::Version(version));
    }
    let model_hash = decode_hash(&model_hash)?;
    let mut events = Vec::with_capacity(n_events);
    let mut skeleton = Vec::with_capacity(n_samples);
    for (n, line) in lines {
        let line = line?;
        if line.is_empty() {
            continue;
        }
        match parse(n, &line)? {
            Record::Header { .. } => return Err(FormatError::Corrupt(format!("second header on line {}", n + 1))),
            Record::Event { t, component } => events.push(event(t, component, m)?),
            Record::Sample { t, kind, x, row_sums } => {
                if row_sums.len() != m {
                    return Err(FormatError::Corrupt(format!("line {}: expected {m} row sums", n + 1)));
                }
                skeleton.push(SkeletonSample {
                    time: t,
                    kind: kind.into(),
                    x,
                    row_sums,
                });
            }
        }
    }
    check_counts(&events, &skeleton, n_events, n_samples)?;
    Ok(Path {
        dim: m,
        events,
        skeleton,
        horizon,
        seed,
        model_hash,
    })
}

fn event(t: f64, component: usize, m: usize) -> Result<Event, FormatError> {
    if component == 0 || component > m {
        return Err(FormatError::Corrupt(format!("component {component} outside 1..={m}")));
    }
    Ok(Event {
        time: t,
        component: component - 1,
    })
}

fn decode_hash(text: &str) -> Result<[u8; 32], FormatError> {
    let bytes = hex::decode(text).map_err(|e| FormatError::BadHeader(format!("model_hash: {e}")))?;
    bytes
        .try_into()
        .map_err(|_| FormatError::BadHeader("model_hash must be 32 bytes".into()))
}

fn check_counts(events: &[Event], skeleton: &[SkeletonSample], n_events: usize, n_samples: usize) -> Result<(), FormatError> {
    if events.len() != n_events || skeleton.len() != n_samples {
        return Err(FormatError::Corrupt(format!(
            "header announces {n_events} events and {n_samples} samples, found {} and {}",
            events.len(),
            skeleton.len()
        )));
    }
    Ok(())
}

pub fn encode_binary(path: &Path) -> Vec<u8> {
    let m = path.dim();
    let mut out = Vec::with_capacity(76 + path.events.len() * 12 + path.skeleton.len() * (17 + 8 * m));
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(m as u32).to_le_bytes());
    out.extend_from_slice(&path.seed.to_le_bytes());
    out.extend_from_slice(&path.horizon.to_le_bytes());
    out.extend_from_slice(&path.model_hash);
    out.extend_from_slice(&(path.events.len() as u64).to_le_bytes());
    out.extend_from_slice(&(path.skeleton.len() as u64).to_le_bytes());
    for e in &path.events {
        out.extend_from_slice(&e.time.to_le_bytes());
        out.extend_from_slice(&(e.component as u32 + 1).to_le_bytes());
    }
    for s in &path.skeleton {
        out.extend_from_slice(&s.time.to_le_bytes());
        out.push(match s.kind {
            SampleKind::Grid => 0,
            SampleKind::PreJump => 1,
            SampleKind::PostJump => 2,
            SampleKind::Final => 3,
        });
        out.extend_from_slice(&s.x.to_le_bytes());
        for v in &s.row_sums {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Cursor<'a>(&'a [u8]);

impl Cursor<'_> {
    fn take<const N: usize>(&mut self) -> Result<[u8; N], FormatError> {
        if self.0.len() < N {
            return Err(FormatError::Corrupt("truncated file".into()));
        }
        let (head, rest) = self.0.split_at(N);
        self.0 = rest;
        Ok(head.try_into().expect("length checked"))
    }

    fn u8(&mut self) -> Result<u8, FormatError> {
        Ok(self.take::<1>()?[0])
    }

    fn u16(&mut self) -> Result<u16, FormatError> {
        Ok(u16::from_le_bytes(self.take()?))
    }

    fn u32(&mut self) -> Result<u32, FormatError> {
        Ok(u32::from_le_bytes(self.take()?))
    }

    fn u64(&mut self) -> Result<u64, FormatError> {
        Ok(u64::from_le_bytes(self.take()?))
    }

    fn f64(&mut self) -> Result<f64, FormatError> {
        Ok(f64::from_le_bytes(self.take()?))
    }
}

pub fn decode_binary(bytes: &[u8]) -> Result<Path, FormatError> {
    let mut c = Cursor(bytes);
    if c.take::<4>().ok() != Some(MAGIC) {
        return Err(FormatError::BadHeader("missing HJSM magic".into()));
    }
    let version = c.u16()?;
    if version != FORMAT_VERSION {
        return Err(FormatError::Version(version));
    }
    let m = c.u32()? as usize;
    let seed = c.u64()?;
    let horizon = c.f64()?;
    let model_hash = c.take::<32>()?;
    let n_events = c.u64()? as usize;
    let n_samples = c.u64()? as usize;
    let needed = n_events
        .checked_mul(12)
        .zip(n_samples.checked_mul(17 + 8 * m))
        .and_then(|(a, b)| a.checked_add(b));
    if needed != Some(c.0.len()) {
        return Err(FormatError::Corrupt("payload length does not match the header counts".into()));
    }
    let mut events = Vec::with_capacity(n_events);
    for _ in 0..n_events {
        let t = c.f64()?;
        events.push(event(t, c.u32()? as usize, m)?);
    }
    let mut skeleton = Vec::with_capacity(n_samples);
    for _ in 0..n_samples {
        let time = c.f64()?;
        let kind = match c.u8()? {
            0 => SampleKind::Grid,
            1 => SampleKind::PreJump,
            2 => SampleKind::PostJump,
            3 => SampleKind::Final,
            k => return Err(FormatError::Corrupt(format!("unknown sample kind {k}"))),
        };
        let x = c.f64()?;
        let row_sums = (0..m).map(|_| c.f64()).collect::<Result<Vec<_>, _>>()?;
        skeleton.push(SkeletonSample { time, kind, x, row_sums });
    }
    Ok(Path {
        dim: m,
        events,
        skeleton,
        horizon,
        seed,
        model_hash,
    })
}

/// Writes `bytes` to `target` through a temporary file in the same
/// directory, so `target` either keeps its old content or gets all of the
/// new one.
pub fn write_atomic(target: &std::path::Path, bytes: &[u8]) -> std::io::Result<()> {
    let dir = match target.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => std::path::Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(target).map_err(|e| e.error)?;
    Ok(())
}
